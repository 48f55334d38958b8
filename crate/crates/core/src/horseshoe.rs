//! Cat-map survivor sets that avoid boxes around the preimages of the cone
//! points, their Cantor sections along eigenlines, and their projection to
//! the Cayley cubic.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cantor::{dim_lower_bound, thickness, CantorPresentation};
use crate::defaults::DEPTH_STABILITY;
use crate::error::{Error, Result};
use crate::maps::{factor_map, Point3, TorusPoint, GOLDEN};
use crate::periodic::RationalTorusPoint;

/// Avoidance neighbourhoods are sup-norm boxes rather than Markov partition elements.
pub const NEIGHBOURHOOD_NOTE: &str = "sup-norm boxes of radius epsilon on the torus";

/// The four torus points mapped to the cone points of the Cayley cubic, in the order of `singular_points`.
pub fn singular_preimages() -> Vec<TorusPoint> {
    [(0.0, 0.0), (0.5, 0.0), (0.5, 0.5), (0.0, 0.5)]
        .into_iter()
        .map(|(a, b)| TorusPoint::reduced(a, b))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvoidanceSpec {
    pub epsilon: f64,
    pub centers: Vec<TorusPoint>,
    /// Iterates checked in each time direction.
    pub depth: usize,
}

impl AvoidanceSpec {
    /// Radii of 1/4 or more cover every eigenline segment around the default centers.
    pub fn new(epsilon: f64, centers: Vec<TorusPoint>, depth: usize) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 0.5) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must lie in (0, 1/2), got {epsilon}"
            )));
        }
        if depth == 0 {
            return Err(Error::InvalidArgument("depth must be at least 1".into()));
        }
        if centers.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one center is required".into(),
            ));
        }
        Ok(Self {
            epsilon,
            centers,
            depth,
        })
    }

    pub fn around_singular_preimages(epsilon: f64, depth: usize) -> Result<Self> {
        Self::new(epsilon, singular_preimages(), depth)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EigenDirection {
    Stable,
    Unstable,
}

impl EigenDirection {
    /// Eigenvalue of the cat map along this line.
    pub fn multiplier(self) -> f64 {
        match self {
            EigenDirection::Stable => -1.0 / GOLDEN,
            EigenDirection::Unstable => GOLDEN,
        }
    }

    /// Unit eigenvector (multiplier, 1) / norm.
    pub fn unit_vector(self) -> [f64; 2] {
        let m = self.multiplier();
        let n = m.hypot(1.0);
        [m / n, 1.0 / n]
    }

    fn contracting(self, k: i64) -> bool {
        match self {
            EigenDirection::Stable => k > 0,
            EigenDirection::Unstable => k < 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivorSection {
    pub anchor: RationalTorusPoint,
    pub direction: EigenDirection,
    /// Arclength coordinates along the eigenline, centred on the anchor.
    pub presentation: CantorPresentation,
    pub spec: AvoidanceSpec,
    pub half_length: f64,
    /// Surviving closed intervals in increasing order.
    pub survivors: Vec<[f64; 2]>,
    /// Relative change in removed length between depth - 1 and depth.
    pub gap_mass_change: f64,
    pub depth_too_shallow: bool,
    pub neighbourhoods: String,
}

fn step_back(t: RationalTorusPoint) -> RationalTorusPoint {
    RationalTorusPoint {
        num_theta: t.num_phi,
        num_phi: (t.num_theta - t.num_phi).rem_euclid(t.den),
        den: t.den,
    }
}

fn anchor_iterate(anchor: RationalTorusPoint, k: i64) -> RationalTorusPoint {
    let mut t = anchor;
    for _ in 0..k.unsigned_abs() {
        t = if k > 0 { t.step() } else { step_back(t) };
    }
    t
}

fn sorted(a: f64, b: f64) -> [f64; 2] {
    if a <= b {
        [a, b]
    } else {
        [b, a]
    }
}

/// Parameters s in [-h, h] whose point base + s * d lies within the open box of radius eps around c mod 1.
fn box_hits(base: [f64; 2], d: [f64; 2], c: [f64; 2], eps: f64, h: f64, out: &mut Vec<[f64; 2]>) {
    let range0 = sorted(base[0] - h * d[0], base[0] + h * d[0]);
    let n0_lo = (range0[0] - c[0] - eps).floor() as i64 - 1;
    let n0_hi = (range0[1] - c[0] + eps).ceil() as i64 + 1;
    for n0 in n0_lo..=n0_hi {
        let shift = c[0] + n0 as f64;
        let a = sorted(
            (shift - eps - base[0]) / d[0],
            (shift + eps - base[0]) / d[0],
        );
        let a = [a[0].max(-h), a[1].min(h)];
        if a[0] >= a[1] {
            continue;
        }
        let w = sorted(base[1] + a[0] * d[1], base[1] + a[1] * d[1]);
        let n1_lo = (w[0] - c[1] - eps).floor() as i64 - 1;
        let n1_hi = (w[1] - c[1] + eps).ceil() as i64 + 1;
        for n1 in n1_lo..=n1_hi {
            let shift = c[1] + n1 as f64;
            let b = sorted(
                (shift - eps - base[1]) / d[1],
                (shift + eps - base[1]) / d[1],
            );
            let (lo, hi) = (a[0].max(b[0]), a[1].min(b[1]));
            if lo < hi {
                out.push([lo, hi]);
            }
        }
    }
}

fn merge(mut intervals: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    intervals.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let mut merged: Vec<[f64; 2]> = Vec::with_capacity(intervals.len());
    for iv in intervals {
        match merged.last_mut() {
            Some(last) if iv[0] <= last[1] => last[1] = last[1].max(iv[1]),
            _ => merged.push(iv),
        }
    }
    merged
}

/// Removed parameter intervals, merged, for iterates -depth..=depth.
fn removed_intervals(
    anchor: RationalTorusPoint,
    direction: EigenDirection,
    spec: &AvoidanceSpec,
    depth: usize,
    h: f64,
) -> Vec<[f64; 2]> {
    let e = direction.unit_vector();
    let mu = direction.multiplier();
    let depth = depth as i64;
    let pieces: Vec<Vec<[f64; 2]>> = (-depth..=depth)
        .into_par_iter()
        .map(|k| {
            let p = anchor_iterate(anchor, k).to_torus();
            let base = [p.theta(), p.phi()];
            let scale = mu.powi(k as i32);
            let d = [scale * e[0], scale * e[1]];
            let mut out = Vec::new();
            for c in &spec.centers {
                if direction.contracting(k) && c.torus_dist(p) < 1e-12 {
                    // the anchor orbit stays on this center; its contracting images add nothing new
                    continue;
                }
                box_hits(base, d, [c.theta(), c.phi()], spec.epsilon, h, &mut out);
            }
            out
        })
        .collect();
    merge(pieces.into_iter().flatten().collect())
}

fn complement(removed: &[[f64; 2]], h: f64) -> Vec<[f64; 2]> {
    let mut out = Vec::new();
    let mut left = -h;
    for r in removed {
        if r[0] > left {
            out.push([left, r[0]]);
        }
        left = left.max(r[1]);
    }
    if h > left {
        out.push([left, h]);
    }
    out
}

fn total_length(intervals: &[[f64; 2]]) -> f64 {
    intervals.iter().map(|iv| iv[1] - iv[0]).sum()
}

/// Cantor section of the survivor set on the eigenline segment of half-length `half_length` through `anchor`.
pub fn survivor_section_with(
    anchor: RationalTorusPoint,
    direction: EigenDirection,
    spec: &AvoidanceSpec,
    half_length: f64,
) -> Result<SurvivorSection> {
    let anchor = RationalTorusPoint::new(anchor.num_theta, anchor.num_phi, anchor.den)?;
    if !(half_length > 0.0 && half_length.is_finite()) {
        return Err(Error::InvalidArgument(
            "half_length must be positive".into(),
        ));
    }
    let removed = removed_intervals(anchor, direction, spec, spec.depth, half_length);
    let survivors = complement(&removed, half_length);
    if survivors.is_empty() {
        return Err(Error::EverythingDies);
    }
    let hull = [survivors[0][0], survivors[survivors.len() - 1][1]];
    if hull[1] <= hull[0] {
        return Err(Error::EverythingDies);
    }
    let gaps: Vec<[f64; 2]> = survivors.windows(2).map(|w| [w[0][1], w[1][0]]).collect();
    let presentation = CantorPresentation::new(hull, gaps, spec.depth)?.by_decreasing_length();

    let removed_now = total_length(&removed);
    let removed_before = total_length(&removed_intervals(
        anchor,
        direction,
        spec,
        spec.depth - 1,
        half_length,
    ));
    let gap_mass_change = if removed_now > 0.0 {
        (removed_now - removed_before) / removed_now
    } else {
        0.0
    };
    Ok(SurvivorSection {
        anchor,
        direction,
        presentation,
        spec: spec.clone(),
        half_length,
        survivors,
        gap_mass_change,
        depth_too_shallow: gap_mass_change > DEPTH_STABILITY,
        neighbourhoods: NEIGHBOURHOOD_NOTE.to_string(),
    })
}

pub fn survivor_section(
    anchor: RationalTorusPoint,
    direction: EigenDirection,
    spec: &AvoidanceSpec,
) -> Result<SurvivorSection> {
    survivor_section_with(
        anchor,
        direction,
        spec,
        crate::defaults::SURVIVOR_HALF_LENGTH,
    )
}

impl SurvivorSection {
    /// Every surviving interval of `self` lies inside a surviving interval of `other`.
    pub fn nests_in(&self, other: &SurvivorSection) -> bool {
        self.survivors
            .iter()
            .all(|s| other.survivors.iter().any(|o| o[0] <= s[0] && s[1] <= o[1]))
    }

    /// Torus point at arclength `s` along the section.
    pub fn torus_point(&self, s: f64) -> TorusPoint {
        let a = self.anchor.to_torus();
        let e = self.direction.unit_vector();
        TorusPoint::reduced(a.theta() + s * e[0], a.phi() + s * e[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThicknessRow {
    pub epsilon: f64,
    pub tau: Option<f64>,
    pub dim_lower_bound: Option<f64>,
    pub gaps: usize,
    pub depth_too_shallow: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThicknessTable {
    pub rows: Vec<ThicknessRow>,
    /// Thickness never decreases down the table.
    pub monotone: bool,
    /// Survivors at each radius lie inside the survivors at the next, smaller radius.
    pub nested: bool,
}

pub fn thickness_vs_epsilon(
    eps_list: &[f64],
    anchor: RationalTorusPoint,
    direction: EigenDirection,
    depth: usize,
) -> Result<ThicknessTable> {
    if eps_list.is_empty() || eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidArgument(
            "epsilon list must be strictly decreasing".into(),
        ));
    }
    if eps_list.iter().any(|&e| !(e > 0.0 && e < 0.25)) {
        return Err(Error::InvalidArgument(
            "every epsilon must lie in (0, 1/4)".into(),
        ));
    }
    let sections: Vec<Result<SurvivorSection>> = eps_list
        .iter()
        .map(|&eps| {
            survivor_section(
                anchor,
                direction,
                &AvoidanceSpec::around_singular_preimages(eps, depth)?,
            )
        })
        .collect();
    let rows: Vec<ThicknessRow> = eps_list
        .iter()
        .zip(&sections)
        .map(|(&epsilon, s)| match s {
            Ok(s) => {
                let tau = thickness(&s.presentation).ok();
                ThicknessRow {
                    epsilon,
                    tau,
                    dim_lower_bound: tau.map(dim_lower_bound),
                    gaps: s.presentation.gaps().len(),
                    depth_too_shallow: s.depth_too_shallow,
                    error: None,
                }
            }
            Err(e) => ThicknessRow {
                epsilon,
                tau: None,
                dim_lower_bound: None,
                gaps: 0,
                depth_too_shallow: false,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let taus: Vec<f64> = rows.iter().filter_map(|r| r.tau).collect();
    let monotone = taus.windows(2).all(|w| w[1] >= w[0]);
    let nested = sections.windows(2).all(|w| match (&w[0], &w[1]) {
        (Ok(a), Ok(b)) => a.nests_in(b),
        (Err(_), _) => true,
        (Ok(_), Err(_)) => false,
    });
    Ok(ThicknessTable {
        rows,
        monotone,
        nested,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivorProjection {
    pub points: Vec<Point3>,
    /// Arclength coordinate of each point along the section.
    pub params: Vec<f64>,
    /// Sup-norm radius around each cone point that the images avoid.
    pub pushforward_radius: f64,
}

/// Radius in R^3 that the image of a torus box of radius `epsilon` keeps from its cone point.
pub fn pushforward_radius(epsilon: f64) -> f64 {
    1.0 - (std::f64::consts::TAU * epsilon.min(0.25)).cos()
}

/// Evenly spaced samples of the surviving intervals mapped to the Cayley cubic.
pub fn project_survivors(section: &SurvivorSection, samples: usize) -> Result<SurvivorProjection> {
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be positive".into()));
    }
    let total = total_length(&section.survivors);
    let spacing = total / samples as f64;
    let mut params = Vec::with_capacity(samples);
    for iv in &section.survivors {
        let len = iv[1] - iv[0];
        let count = ((len / spacing).round() as usize).max(1);
        params.extend((0..count).map(|i| iv[0] + len * (i as f64 + 0.5) / count as f64));
    }
    let points = params
        .iter()
        .map(|&s| factor_map(section.torus_point(s)))
        .collect();
    Ok(SurvivorProjection {
        points,
        params,
        pushforward_radius: pushforward_radius(section.spec.epsilon),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{anosov_step, invariant, trace_map};
    use crate::surface::singular_points;

    fn origin() -> RationalTorusPoint {
        RationalTorusPoint::new(0, 0, 1).unwrap()
    }

    #[test]
    fn preimages_map_to_cone_points() {
        let pre = singular_preimages();
        let cones = singular_points();
        for (t, p) in pre.iter().zip(cones) {
            assert!(factor_map(*t).dist(p) < 1e-14, "{t:?} -> {p:?}");
        }
        assert!(factor_map(pre[2]).dist(Point3::new(1.0, -1.0, -1.0).unwrap()) < 1e-14);
        for t in &pre {
            let image = anosov_step(*t);
            assert!(pre.iter().any(|q| q.torus_dist(image) < 1e-15));
        }
    }

    #[test]
    fn eigenvector_is_an_eigenvector() {
        for d in [EigenDirection::Stable, EigenDirection::Unstable] {
            let e = d.unit_vector();
            let image = [e[0] + e[1], e[0]];
            assert!((image[0] - d.multiplier() * e[0]).abs() < 1e-15);
            assert!((image[1] - d.multiplier() * e[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn large_boxes_kill_everything() {
        let spec = AvoidanceSpec::around_singular_preimages(0.25, 4).unwrap();
        assert!(matches!(
            survivor_section(origin(), EigenDirection::Stable, &spec),
            Err(Error::EverythingDies)
        ));
        let spec = AvoidanceSpec::around_singular_preimages(0.3, 2).unwrap();
        assert!(matches!(
            survivor_section(origin(), EigenDirection::Stable, &spec),
            Err(Error::EverythingDies)
        ));
    }

    #[test]
    fn small_boxes_leave_a_thick_section() {
        let spec = AvoidanceSpec::around_singular_preimages(0.02, 12).unwrap();
        let s = survivor_section(origin(), EigenDirection::Stable, &spec).unwrap();
        assert!(thickness(&s.presentation).unwrap() > 1.0);
    }

    #[test]
    fn section_is_symmetric_about_the_anchor() {
        let spec = AvoidanceSpec::around_singular_preimages(0.03, 10).unwrap();
        let s = survivor_section(origin(), EigenDirection::Stable, &spec).unwrap();
        let n = s.survivors.len();
        for i in 0..n {
            assert_eq!(s.survivors[i][0], -s.survivors[n - 1 - i][1]);
        }
    }

    #[test]
    fn deeper_sections_only_add_gaps() {
        let shallow = survivor_section(
            origin(),
            EigenDirection::Stable,
            &AvoidanceSpec::around_singular_preimages(0.04, 8).unwrap(),
        )
        .unwrap();
        let deep = survivor_section(
            origin(),
            EigenDirection::Stable,
            &AvoidanceSpec::around_singular_preimages(0.04, 10).unwrap(),
        )
        .unwrap();
        assert!(deep.nests_in(&shallow));
        // old gaps keep their exact endpoints or are swallowed by larger new ones
        let deep_removed = complement(&deep.survivors, deep.half_length);
        for g in complement(&shallow.survivors, shallow.half_length) {
            assert!(deep_removed.iter().any(|r| r[0] <= g[0] && g[1] <= r[1]));
        }
    }

    #[test]
    fn thickness_grows_as_boxes_shrink() {
        let table = thickness_vs_epsilon(&[0.08, 0.04, 0.02], origin(), EigenDirection::Stable, 10)
            .unwrap();
        assert!(table.monotone && table.nested, "{table:?}");
        assert!(thickness_vs_epsilon(&[0.02, 0.04], origin(), EigenDirection::Stable, 10).is_err());
    }

    #[test]
    fn unstable_sections_mirror_stable_ones() {
        let spec = AvoidanceSpec::around_singular_preimages(0.04, 8).unwrap();
        let s = survivor_section(origin(), EigenDirection::Stable, &spec).unwrap();
        let u = survivor_section(origin(), EigenDirection::Unstable, &spec).unwrap();
        let ts = thickness(&s.presentation).unwrap();
        let tu = thickness(&u.presentation).unwrap();
        assert!(ts > 0.0 && tu > 0.0);
    }

    #[test]
    fn projected_survivors_avoid_the_cone_points() {
        let depth = 8;
        let spec = AvoidanceSpec::around_singular_preimages(0.04, depth).unwrap();
        let anchor = RationalTorusPoint::new(1, 2, 5).unwrap();
        let section = survivor_section(anchor, EigenDirection::Stable, &spec).unwrap();
        let proj = project_survivors(&section, 500).unwrap();
        let radius = proj.pushforward_radius;
        let cones = singular_points();
        for (&s, p) in proj.params.iter().zip(&proj.points) {
            assert!(invariant(*p).abs() < 1e-12);
            // start depth steps back and run forward through the whole checked window
            let mut t = section.torus_point(s);
            for _ in 0..depth {
                t = TorusPoint::reduced(t.phi(), t.theta() - t.phi());
            }
            let mut q = factor_map(t);
            for _ in 0..=2 * depth {
                let gap = cones
                    .iter()
                    .map(|c| (q - *c).max_abs())
                    .fold(f64::INFINITY, f64::min);
                assert!(gap >= radius * (1.0 - 1e-6), "{gap} < {radius}");
                q = trace_map(q);
            }
        }
    }

    #[test]
    fn projection_commutes_with_the_dynamics() {
        let spec = AvoidanceSpec::around_singular_preimages(0.04, 6).unwrap();
        let section = survivor_section(origin(), EigenDirection::Stable, &spec).unwrap();
        let proj = project_survivors(&section, 200).unwrap();
        for (&s, p) in proj.params.iter().zip(&proj.points) {
            let image = factor_map(anosov_step(section.torus_point(s)));
            assert!(image.dist(trace_map(*p)) < 1e-10);
        }
    }

    #[test]
    fn projected_cloud_approaches_the_cubic() {
        // union over anchors, measured against a dense image of the torus; below
        // eps = 0.02 the finite line coverage, not the boxes, sets the distance
        let anchors: Vec<RationalTorusPoint> = (1..5)
            .flat_map(|a| (0..5).map(move |b| RationalTorusPoint::new(a, b, 5).unwrap()))
            .collect();
        let dense: Vec<Point3> = (0..60)
            .flat_map(|i| {
                (0..60)
                    .map(move |j| factor_map(TorusPoint::reduced(i as f64 / 60.0, j as f64 / 60.0)))
            })
            .collect();
        let cell = 0.02;
        let key = |p: &Point3| {
            (
                (p.x / cell).floor() as i64,
                (p.y / cell).floor() as i64,
                (p.z / cell).floor() as i64,
            )
        };
        let distance = |eps: f64| {
            let spec = AvoidanceSpec::around_singular_preimages(eps, 8).unwrap();
            let mut buckets: std::collections::HashMap<(i64, i64, i64), Vec<Point3>> =
                Default::default();
            for &a in &anchors {
                let s = survivor_section_with(a, EigenDirection::Stable, &spec, 25.0).unwrap();
                for p in project_survivors(&s, 50_000).unwrap().points {
                    buckets.entry(key(&p)).or_default().push(p);
                }
            }
            dense
                .par_iter()
                .map(|d| {
                    let (i, j, k) = key(d);
                    let mut best = f64::INFINITY;
                    for r in 0i64.. {
                        if (r - 1) as f64 * cell > best {
                            break;
                        }
                        for a in -r..=r {
                            for b in -r..=r {
                                for c in -r..=r {
                                    if a.abs().max(b.abs()).max(c.abs()) != r {
                                        continue;
                                    }
                                    if let Some(v) = buckets.get(&(i + a, j + b, k + c)) {
                                        best = v.iter().map(|q| d.dist(*q)).fold(best, f64::min);
                                    }
                                }
                            }
                        }
                    }
                    best
                })
                .reduce(|| 0.0, f64::max)
        };
        let h: Vec<f64> = [0.08, 0.04, 0.02].iter().map(|&e| distance(e)).collect();
        assert!(h.windows(2).all(|w| w[1] < w[0]), "{h:?}");
    }
}
