//! Level surfaces of the invariant: classification, sampling, projection,
//! tangent frames and the invariant area density.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::{invariant, invariant_gradient, Point3};

/// Gradients at or below this norm are treated as conic singularities.
pub const SINGULAR_GRADIENT: f64 = 1e-8;

const PROJECTION_MAX_STEPS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SurfaceTopology {
    FourPuncturedSphere,
    CayleyCubic,
    SphereAndFourDiscs,
    PointAndFourDiscs,
    FourDiscsOnly,
}

pub fn classify_level(v: f64) -> SurfaceTopology {
    if v > 0.0 {
        SurfaceTopology::FourPuncturedSphere
    } else if v == 0.0 {
        SurfaceTopology::CayleyCubic
    } else if v > -1.0 {
        SurfaceTopology::SphereAndFourDiscs
    } else if v == -1.0 {
        SurfaceTopology::PointAndFourDiscs
    } else {
        SurfaceTopology::FourDiscsOnly
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sheet {
    Upper,
    Lower,
}

impl Sheet {
    /// Sheet of a surface point relative to the fold z = xy.
    pub fn of(p: Point3) -> Self {
        if p.z >= p.x * p.y {
            Sheet::Upper
        } else {
            Sheet::Lower
        }
    }
}

/// Real roots of the invariant as a quadratic in z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ZRoots {
    None,
    Double(f64),
    Pair { lower: f64, upper: f64 },
}

impl ZRoots {
    pub fn on_sheet(self, sheet: Sheet) -> Option<f64> {
        match (self, sheet) {
            (ZRoots::None, _) => None,
            (ZRoots::Double(z), _) => Some(z),
            (ZRoots::Pair { upper, .. }, Sheet::Upper) => Some(upper),
            (ZRoots::Pair { lower, .. }, Sheet::Lower) => Some(lower),
        }
    }

    pub fn to_vec(self) -> Vec<f64> {
        match self {
            ZRoots::None => vec![],
            ZRoots::Double(z) => vec![z],
            ZRoots::Pair { lower, upper } => vec![lower, upper],
        }
    }
}

pub fn solve_z(x: f64, y: f64, v: f64) -> ZRoots {
    let disc = (x * x - 1.0) * (y * y - 1.0) + v;
    let mid = x * y;
    if disc > 0.0 {
        let r = disc.sqrt();
        ZRoots::Pair {
            lower: mid - r,
            upper: mid + r,
        }
    } else if disc == 0.0 {
        ZRoots::Double(mid)
    } else {
        ZRoots::None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Stratified (x, y) grid with both z-sheets.
    Grid,
    /// Grid candidates resampled by weight against the invariant area form.
    AreaUniform { seed: u64 },
}

/// At least `n` points on the compact component of the level `v`, both sheets.
pub fn sample_compact_component(v: f64, n: usize) -> Result<Vec<Point3>> {
    sample_compact_component_with(v, n, SamplingMode::Grid)
}

pub fn sample_compact_component_with(v: f64, n: usize, mode: SamplingMode) -> Result<Vec<Point3>> {
    if !v.is_finite() || v >= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "compact component needs -1 <= V < 0, got {v}"
        )));
    }
    if v < -1.0 {
        return Err(Error::EmptyComponent(v));
    }
    if n == 0 {
        return Err(Error::InvalidArgument(
            "sample count must be positive".into(),
        ));
    }
    if v == -1.0 {
        return Ok(vec![Point3::default()]);
    }
    let candidates = grid_samples(v, n);
    match mode {
        SamplingMode::Grid => Ok(candidates),
        SamplingMode::AreaUniform { seed } => Ok(area_resample(&candidates, n, seed)),
    }
}

fn grid_samples(v: f64, n: usize) -> Vec<Point3> {
    // The compact part of each column lies in [-1,1]^2 and both roots then lie in [-1,1].
    let mut m = ((n as f64).sqrt().ceil() as usize).max(2);
    loop {
        let mut out = Vec::with_capacity(2 * m * m);
        let h = 2.0 / m as f64;
        for i in 0..m {
            let x = -1.0 + (i as f64 + 0.5) * h;
            for j in 0..m {
                let y = -1.0 + (j as f64 + 0.5) * h;
                for z in solve_z(x, y, v).to_vec() {
                    let p = Point3::raw(x, y, z);
                    if (invariant(p) - v).abs() < 1e-12 {
                        out.push(p);
                    }
                }
            }
        }
        if out.len() >= n {
            return out;
        }
        m = m * 3 / 2 + 1;
    }
}

fn area_resample(candidates: &[Point3], n: usize, seed: u64) -> Vec<Point3> {
    use rand::{Rng, SeedableRng};
    // Over the (x,y) chart the invariant area form has density 1/|dI/dz|.
    let weights: Vec<f64> = candidates
        .iter()
        .map(|p| {
            let dz = (2.0 * p.z - 2.0 * p.x * p.y).abs();
            1.0 / dz.max(1e-3)
        })
        .collect();
    let mut cumulative = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in &weights {
        acc += w;
        cumulative.push(acc);
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            let idx = cumulative
                .partition_point(|&c| c < u)
                .min(candidates.len() - 1);
            candidates[idx]
        })
        .collect()
}

/// Move `p` along its gradient line onto the level `v` by 1-D Newton.
pub fn project_to_level(p: Point3, v: f64) -> Result<Point3> {
    let r0 = invariant(p) - v;
    if r0 == 0.0 {
        return Ok(p);
    }
    let g = invariant_gradient(p);
    let gn = g.norm();
    if gn <= SINGULAR_GRADIENT {
        return Err(Error::SingularGradient(p.to_array(), gn));
    }
    let mut s = 0.0;
    let mut residual = r0;
    for _ in 0..PROJECTION_MAX_STEPS {
        let q = p + g * s;
        residual = invariant(q) - v;
        let slope = invariant_gradient(q).dot(g);
        if slope == 0.0 {
            return Err(Error::SingularGradient(
                q.to_array(),
                invariant_gradient(q).norm(),
            ));
        }
        let ds = -residual / slope;
        s += ds;
        if ds.abs() * gn <= 1e-17 * (1.0 + p.max_abs()) {
            let q = p + g * s;
            if (invariant(q) - v).abs() < 1e-14 {
                return Ok(q);
            }
            // roundoff floor; take the best of the last two iterates
            let back = p + g * (s - ds);
            return Ok(if (invariant(back) - v).abs() < (invariant(q) - v).abs() {
                back
            } else {
                q
            });
        }
    }
    let q = p + g * s;
    if (invariant(q) - v).abs() < 1e-14 {
        return Ok(q);
    }
    Err(Error::NoConvergence {
        what: "projection",
        iterations: PROJECTION_MAX_STEPS,
        residual: residual.abs(),
    })
}

/// Orthonormal chart at a regular point of a level surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangentFrame {
    pub origin: Point3,
    pub u1: Point3,
    pub u2: Point3,
    pub normal: Point3,
}

impl TangentFrame {
    /// Chart coordinates of `q` in the tangent plane.
    pub fn chart(&self, q: Point3) -> [f64; 2] {
        let d = q - self.origin;
        [d.dot(self.u1), d.dot(self.u2)]
    }

    pub fn lift(&self, a: f64, b: f64) -> Point3 {
        self.origin + self.u1 * a + self.u2 * b
    }

    /// Frame with a prescribed first tangent direction, projected into the plane.
    pub fn with_direction(origin: Point3, normal: Point3, dir: Point3) -> Option<Self> {
        let n = normal.normalized();
        let t = dir - n * dir.dot(n);
        let tn = t.norm();
        if !(tn > 1e-12) {
            return None;
        }
        let u1 = t * (1.0 / tn);
        let u2 = n.cross(u1);
        Some(Self {
            origin,
            u1,
            u2,
            normal: n,
        })
    }
}

pub fn tangent_frame(p: Point3) -> Result<TangentFrame> {
    let g = invariant_gradient(p);
    let gn = g.norm();
    if gn <= SINGULAR_GRADIENT {
        return Err(Error::SingularGradient(p.to_array(), gn));
    }
    let normal = g * (1.0 / gn);
    let axes = [
        Point3::raw(1.0, 0.0, 0.0),
        Point3::raw(0.0, 1.0, 0.0),
        Point3::raw(0.0, 0.0, 1.0),
    ];
    let comps = [normal.x.abs(), normal.y.abs(), normal.z.abs()];
    let mut seed = 0;
    for i in 1..3 {
        if comps[i] < comps[seed] {
            seed = i;
        }
    }
    let a = axes[seed];
    let u1 = (a - normal * a.dot(normal)).normalized();
    let u2 = normal.cross(u1);
    Ok(TangentFrame {
        origin: p,
        u1,
        u2,
        normal,
    })
}

pub fn area_density(p: Point3) -> Result<f64> {
    let gn = invariant_gradient(p).norm();
    if gn <= SINGULAR_GRADIENT {
        return Err(Error::SingularGradient(p.to_array(), gn));
    }
    Ok(1.0 / gn)
}

pub fn singular_points() -> [Point3; 4] {
    [
        Point3::raw(1.0, 1.0, 1.0),
        Point3::raw(-1.0, -1.0, 1.0),
        Point3::raw(1.0, -1.0, -1.0),
        Point3::raw(-1.0, 1.0, -1.0),
    ]
}

/// Distance to the nearest conic singularity.
pub fn singular_distance(p: Point3) -> f64 {
    singular_points()
        .iter()
        .map(|s| s.dist(p))
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::trace_map;
    use proptest::prelude::*;

    #[test]
    fn classification_thresholds() {
        assert_eq!(classify_level(0.5), SurfaceTopology::FourPuncturedSphere);
        assert_eq!(classify_level(0.0), SurfaceTopology::CayleyCubic);
        assert_eq!(classify_level(-0.5), SurfaceTopology::SphereAndFourDiscs);
        assert_eq!(classify_level(-1.0), SurfaceTopology::PointAndFourDiscs);
        assert_eq!(classify_level(-1.5), SurfaceTopology::FourDiscsOnly);
        assert_eq!(classify_level(-1e-300), SurfaceTopology::SphereAndFourDiscs);
    }

    #[test]
    fn solve_z_examples() {
        assert_eq!(
            solve_z(0.0, 0.0, -0.75),
            ZRoots::Pair {
                lower: -0.5,
                upper: 0.5
            }
        );
        assert_eq!(solve_z(1.0, 1.0, 0.0), ZRoots::Double(1.0));
        assert_eq!(solve_z(0.0, 0.0, -2.0), ZRoots::None);
    }

    #[test]
    fn sampling_examples() {
        assert_eq!(
            sample_compact_component(-1.0, 5).unwrap(),
            vec![Point3::default()]
        );
        assert!(matches!(
            sample_compact_component(-1.5, 5),
            Err(Error::EmptyComponent(_))
        ));
        let pts = sample_compact_component(-0.5, 10_000).unwrap();
        assert!(pts.len() >= 10_000);
        assert!(pts
            .iter()
            .all(|p| (invariant(*p) + 0.5).abs() < 1e-12 && p.max_abs() <= 1.0));
        assert!(pts.iter().any(|p| p.z > p.x * p.y) && pts.iter().any(|p| p.z < p.x * p.y));
    }

    #[test]
    fn area_uniform_sampling_is_seeded() {
        let mode = SamplingMode::AreaUniform { seed: 9 };
        let a = sample_compact_component_with(-0.4, 500, mode).unwrap();
        let b = sample_compact_component_with(-0.4, 500, mode).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 500);
        assert!(a.iter().all(|p| (invariant(*p) + 0.4).abs() < 1e-12));
    }

    #[test]
    fn projection_examples() {
        let on = Point3::new(0.0, 0.0, 0.5).unwrap();
        assert_eq!(project_to_level(on, -0.75).unwrap(), on);
        let q = project_to_level(Point3::new(0.0, 0.0, 0.51).unwrap(), -0.75).unwrap();
        assert!((q - on).norm() < 1e-15);
        let p1 = Point3::new(1.0, 1.0, 1.0).unwrap();
        assert!(matches!(
            project_to_level(p1, -0.1),
            Err(Error::SingularGradient(..))
        ));
    }

    #[test]
    fn frame_at_axis_point() {
        let f = tangent_frame(Point3::new(0.0, 0.0, 0.5).unwrap()).unwrap();
        assert_eq!(f.normal, Point3::new(0.0, 0.0, 1.0).unwrap());
        assert_eq!(f.u1, Point3::new(1.0, 0.0, 0.0).unwrap());
        assert!((area_density(Point3::new(0.0, 0.0, 0.5).unwrap()).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn density_diverges_at_the_cone_point() {
        let near = |e: f64| Point3::new(1.0 - e, 1.0 - e, 1.0 - e).unwrap();
        let d1 = area_density(near(1e-2)).unwrap();
        let d2 = area_density(near(1e-4)).unwrap();
        assert!(d2 > 50.0 * d1);
        assert!(area_density(Point3::new(1.0, 1.0, 1.0).unwrap()).is_err());
    }

    #[test]
    fn singular_points_are_critical_and_permuted() {
        let s = singular_points();
        for p in s {
            assert_eq!(invariant(p), 0.0);
            assert_eq!(invariant_gradient(p), Point3::default());
            assert!(s.contains(&trace_map(p)));
        }
        let fixed: Vec<_> = s.iter().filter(|p| trace_map(**p) == **p).collect();
        assert_eq!(fixed, vec![&s[0]]);
    }

    fn tri_area(a: Point3, b: Point3, c: Point3) -> f64 {
        0.5 * (b - a).cross(c - a).norm()
    }

    // Weighted area of a small surface triangle, subdivided `depth` times with
    // vertices pushed back to the level.
    fn weighted_area(
        corners: [Point3; 3],
        v: f64,
        depth: u32,
        map: impl Fn(Point3) -> Point3,
    ) -> f64 {
        let m = 1usize << depth;
        let vertex = |i: usize, j: usize| {
            let (a, b) = (i as f64 / m as f64, j as f64 / m as f64);
            let q = corners[0] + (corners[1] - corners[0]) * a + (corners[2] - corners[0]) * b;
            map(project_to_level(q, v).unwrap())
        };
        let mut total = 0.0;
        for i in 0..m {
            for j in 0..(m - i) {
                let (a, b, c) = (vertex(i, j), vertex(i + 1, j), vertex(i, j + 1));
                let cen = project_to_level((a + b + c) * (1.0 / 3.0), v).unwrap();
                total += area_density(cen).unwrap() * tri_area(a, b, c);
                if i + j + 1 < m {
                    let d = vertex(i + 1, j + 1);
                    let cen = project_to_level((b + c + d) * (1.0 / 3.0), v).unwrap();
                    total += area_density(cen).unwrap() * tri_area(b, d, c);
                }
            }
        }
        total
    }

    #[test]
    fn area_form_is_invariant() {
        let v = -0.5;
        let base = |x: f64, y: f64| {
            Point3::new(x, y, solve_z(x, y, v).on_sheet(Sheet::Upper).unwrap()).unwrap()
        };
        let corners = [base(0.1, 0.2), base(0.14, 0.2), base(0.1, 0.24)];
        let before = weighted_area(corners, v, 6, |p| p);
        let after = weighted_area(corners, v, 6, trace_map);
        assert!(
            ((after - before) / before).abs() < 0.01,
            "{before} vs {after}"
        );
    }

    proptest! {
        #[test]
        fn projection_is_idempotent(x in -0.9f64..0.9, y in -0.9f64..0.9, dz in -0.05f64..0.05) {
            let v = -0.3;
            if let Some(z) = solve_z(x, y, v).on_sheet(Sheet::Upper) {
                let p = Point3::new(x, y, z + dz).unwrap();
                if let Ok(q) = project_to_level(p, v) {
                    prop_assert!((invariant(q) - v).abs() < 1e-14);
                    let r = project_to_level(q, v).unwrap();
                    prop_assert!((r - q).norm() < 1e-13);
                }
            }
        }

        #[test]
        fn roots_reproduce_level(x in -1.0f64..1.0, y in -1.0f64..1.0, v in -1.0f64..0.0) {
            for z in solve_z(x, y, v).to_vec() {
                let p = Point3::new(x, y, z).unwrap();
                prop_assert!((invariant(p) - v).abs() < 1e-12);
                prop_assert!(z.abs() <= 1.0 + 1e-12);
            }
        }

        #[test]
        fn frames_are_orthonormal(x in -0.9f64..0.9, y in -0.9f64..0.9) {
            if let Some(z) = solve_z(x, y, -0.4).on_sheet(Sheet::Lower) {
                let p = Point3::new(x, y, z).unwrap();
                let f = tangent_frame(p).unwrap();
                prop_assert!(f.u1.dot(f.u2).abs() < 1e-12);
                prop_assert!(f.u1.dot(f.normal).abs() < 1e-12);
                prop_assert!(f.u2.dot(f.normal).abs() < 1e-12);
                prop_assert!((f.u1.norm() - 1.0).abs() < 1e-12 && (f.u2.norm() - 1.0).abs() < 1e-12);
                prop_assert_eq!(f, tangent_frame(p).unwrap());
            }
        }
    }
}
