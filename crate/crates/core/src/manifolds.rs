//! One-dimensional stable and unstable manifolds of hyperbolic periodic
//! orbits, their intersections, quadratic tangencies and how those unfold
//! in V.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use twofloat::TwoFloat;

use crate::defaults::{
    Precision, ANGLE_TOL, CURVATURE_GAP, DOMAIN_BOX, FIT_RESIDUAL, FIT_WINDOW, FRAME_CONDITION,
    MANIFOLD_SEED_DISTANCE, MANIFOLD_SEED_MAX, MAX_SEGMENT, REFINEMENT_TOL, REPROJECTION_INTERVAL,
    SINGULAR_BALL, TRUNCATION_MARGIN, UNFOLDING_DV,
};
use crate::error::{Error, Result};
use crate::io::{extended_f64, PeriodicOrbitRecord};
use crate::maps::{invariant_gradient, trace_map, trace_map_inverse, Matrix3, Point3};
use crate::periodic::{
    find_periodic, period_two_at_level, periodic_census, spectrum_of, PeriodicOrbit,
};
use crate::surface::{project_to_level, singular_points, tangent_frame, SINGULAR_GRADIENT};

/// Crossings this close to a point of the owner orbit are the orbit itself.
const OWNER_EXCLUSION: f64 = 1e-5;
/// Parameter gaps below this are not subdivided further.
const PARAM_FLOOR: f64 = 1e-13;
/// Fundamental domains grown before giving up on the target length.
const MAX_DOMAINS: usize = 80;
/// Fits aim for this residual, well inside the acceptance bound.
const FIT_TARGET: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ManifoldSide {
    Stable,
    Unstable,
}

/// Parameterisation u = k + s of one branch: the seed at fractional position s
/// on the fundamental segment, pushed k fundamental steps along the branch.
#[derive(Debug, Clone)]
pub struct ArcGenerator {
    level: f64,
    origin: Point3,
    direction: Point3,
    /// Expansion factor of one fundamental step, above 1.
    growth: f64,
    /// Map applications per fundamental step.
    steps: usize,
    inverse: bool,
    delta: f64,
    precision: Precision,
}

impl ArcGenerator {
    pub fn new(po: &PeriodicOrbit, side: ManifoldSide, precision: Precision) -> Result<Self> {
        if !po.stability.is_hyperbolic() {
            return Err(Error::NotHyperbolic(po.residual_trace));
        }
        let p = po.points[0];
        let g = invariant_gradient(p);
        let spec = spectrum_of(&po.monodromy, g)?;
        let pair: Vec<f64> = spec.surface_pair.iter().map(|c| c.re).collect();
        let mu = match side {
            ManifoldSide::Unstable => pair
                .iter()
                .copied()
                .max_by(|a, b| a.abs().total_cmp(&b.abs())),
            ManifoldSide::Stable => pair
                .iter()
                .copied()
                .min_by(|a, b| a.abs().total_cmp(&b.abs())),
        }
        .ok_or(Error::NotHyperbolic(po.residual_trace))?;
        let mut direction = eigenvector(&po.monodromy, mu);
        let singular = g.norm() <= SINGULAR_GRADIENT;
        // cone points: take the branch into the compact component; otherwise a sign fixed by the time reversal
        let flip = if singular {
            direction.dot(p) > 0.0
        } else {
            direction.dot(Point3::raw(1.0, 1.0, 1.0)) < 0.0
        };
        if flip {
            direction = -direction;
        }
        let (steps, mu_step) = if mu < 0.0 {
            (2 * po.period, mu * mu)
        } else {
            (po.period, mu)
        };
        let growth = match side {
            ManifoldSide::Unstable => mu_step,
            ManifoldSide::Stable => 1.0 / mu_step,
        };
        let delta = MANIFOLD_SEED_DISTANCE.min(MANIFOLD_SEED_MAX / growth);
        Ok(Self {
            level: po.level,
            origin: p,
            direction,
            growth,
            steps,
            inverse: side == ManifoldSide::Stable,
            delta,
            precision,
        })
    }

    pub fn origin(&self) -> Point3 {
        self.origin
    }

    pub fn direction(&self) -> Point3 {
        self.direction
    }

    pub fn growth(&self) -> f64 {
        self.growth
    }

    pub fn steps_per_domain(&self) -> usize {
        self.steps
    }

    pub fn seed_distance(&self) -> f64 {
        self.delta
    }

    fn seed(&self, s: f64) -> Point3 {
        let q = self.origin + self.direction * (self.delta * self.growth.powf(s));
        project_to_level(q, self.level).unwrap_or(q)
    }

    /// Point at parameter `u`; None once the branch leaves the domain box.
    pub fn point_at(&self, u: f64) -> Option<Point3> {
        if !u.is_finite() {
            return (u == f64::NEG_INFINITY).then_some(self.origin);
        }
        let k = u.floor();
        let s = u - k;
        let k = k.max(0.0) as usize;
        match self.precision {
            Precision::Standard => self.push_standard(s, k),
            Precision::Extended => self.push_extended(s, k),
        }
    }

    fn push_standard(&self, s: f64, k: usize) -> Option<Point3> {
        let mut q = self.seed(s);
        let total = k * self.steps;
        for i in 1..=total {
            q = if self.inverse {
                trace_map_inverse(q)
            } else {
                trace_map(q)
            };
            if q.max_abs() > DOMAIN_BOX || !q.is_finite() {
                return None;
            }
            if i % REPROJECTION_INTERVAL == 0 || i == total {
                q = project_to_level(q, self.level).unwrap_or(q);
            }
        }
        Some(q)
    }

    fn push_extended(&self, s: f64, k: usize) -> Option<Point3> {
        let scale = self.delta * self.growth.powf(s);
        let mut q = Dd3 {
            x: TwoFloat::from(self.origin.x) + TwoFloat::new_mul(scale, self.direction.x),
            y: TwoFloat::from(self.origin.y) + TwoFloat::new_mul(scale, self.direction.y),
            z: TwoFloat::from(self.origin.z) + TwoFloat::new_mul(scale, self.direction.z),
        };
        q = q.project(self.level);
        let total = k * self.steps;
        for i in 1..=total {
            q = if self.inverse {
                q.inverse_step()
            } else {
                q.step()
            };
            let r = q.round();
            if r.max_abs() > DOMAIN_BOX || !r.is_finite() {
                return None;
            }
            if i % REPROJECTION_INTERVAL == 0 || i == total {
                q = q.project(self.level);
            }
        }
        Some(q.round())
    }
}

/// Double-double point for the extended-precision path.
#[derive(Clone, Copy)]
struct Dd3 {
    x: TwoFloat,
    y: TwoFloat,
    z: TwoFloat,
}

impl Dd3 {
    fn step(self) -> Self {
        Self {
            x: self.x * self.y * 2.0 - self.z,
            y: self.x,
            z: self.y,
        }
    }

    fn inverse_step(self) -> Self {
        Self {
            x: self.y,
            y: self.z,
            z: self.y * self.z * 2.0 - self.x,
        }
    }

    fn round(self) -> Point3 {
        Point3::raw(self.x.hi(), self.y.hi(), self.z.hi())
    }

    fn project(self, v: f64) -> Self {
        let mut q = self;
        for _ in 0..4 {
            let f = q.x * q.x + q.y * q.y + q.z * q.z - q.x * q.y * q.z * 2.0 - 1.0 - v;
            let g = invariant_gradient(q.round());
            let g2 = g.dot(g);
            if g2 <= SINGULAR_GRADIENT * SINGULAR_GRADIENT {
                break;
            }
            let t = f / g2;
            q = Self {
                x: q.x - t * g.x,
                y: q.y - t * g.y,
                z: q.z - t * g.z,
            };
        }
        q
    }
}

fn eigenvector(m: &Matrix3, mu: f64) -> Point3 {
    let a = m - Matrix3::identity() * mu;
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested");
    Point3::from_vector(&v_t.row(svd.singular_values.imin()).transpose()).normalized()
}

/// Where arc points come from: a manifold generator or an analytic test curve.
#[derive(Clone)]
pub enum ArcSource {
    Generator(ArcGenerator),
    Curve(Arc<dyn Fn(f64) -> Option<Point3> + Send + Sync>),
}

impl std::fmt::Debug for ArcSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ArcSource::Generator(g) => f.debug_tuple("Generator").field(g).finish(),
            ArcSource::Curve(_) => f.write_str("Curve"),
        }
    }
}

impl ArcSource {
    fn eval(&self, u: f64) -> Option<Point3> {
        match self {
            ArcSource::Generator(g) => g.point_at(u),
            ArcSource::Curve(f) => f(u),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ManifoldArc {
    pub owner: PeriodicOrbit,
    pub side: ManifoldSide,
    pub vertices: Vec<Point3>,
    /// Curve parameter of each vertex; the periodic point sits at -inf.
    pub params: Vec<f64>,
    pub arclength: f64,
    pub refinement_tol: f64,
    pub max_segment: f64,
    /// Growth stopped at the truncation box or the domain box.
    pub truncated: bool,
    /// Segments left coarser than the tolerances because the parameter gap hit its floor.
    pub unresolved: usize,
    pub source: ArcSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthOptions {
    pub refinement_tol: f64,
    pub max_segment: f64,
    pub precision: Precision,
    /// Stop at this curve parameter even if the arclength target is not reached.
    pub max_param: Option<f64>,
}

impl Default for GrowthOptions {
    fn default() -> Self {
        Self {
            refinement_tol: REFINEMENT_TOL,
            max_segment: MAX_SEGMENT,
            precision: Precision::Standard,
            max_param: None,
        }
    }
}

/// Turns across segments shorter than this are round-off, not geometry.
fn angle_floor(precision: Precision) -> f64 {
    match precision {
        Precision::Standard => 1e-6,
        Precision::Extended => 1e-10,
    }
}

fn turning_angle(a: Point3, b: Point3, c: Point3) -> f64 {
    let (u, v) = (b - a, c - b);
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    (u.dot(v) / (nu * nv)).clamp(-1.0, 1.0).acos()
}

/// Insert parameter midpoints until every segment is short and every turn gentle.
fn refine_domain(
    source: &ArcSource,
    context: Option<Point3>,
    mut params: Vec<f64>,
    mut points: Vec<Point3>,
    tol: f64,
    max_segment: f64,
    unresolved: &mut usize,
) -> (Vec<f64>, Vec<Point3>) {
    let floor = match source {
        ArcSource::Generator(g) => angle_floor(g.precision),
        ArcSource::Curve(_) => angle_floor(Precision::Extended),
    };
    loop {
        let n = points.len();
        let mut split = vec![false; n.saturating_sub(1)];
        for i in 0..n - 1 {
            if points[i].dist(points[i + 1]) > max_segment {
                split[i] = true;
            }
        }
        for i in 0..n {
            let prev = if i == 0 { context } else { Some(points[i - 1]) };
            let (Some(prev), Some(next)) = (prev, points.get(i + 1).copied()) else {
                continue;
            };
            if turning_angle(prev, points[i], next) > tol {
                if prev.dist(points[i]).min(points[i].dist(next)) < floor {
                    *unresolved += 1;
                    continue;
                }
                if i > 0 {
                    split[i - 1] = true;
                }
                split[i] = true;
            }
        }
        let mut any = false;
        let mut new_params = Vec::with_capacity(n * 2);
        let mut new_points = Vec::with_capacity(n * 2);
        for i in 0..n {
            new_params.push(params[i]);
            new_points.push(points[i]);
            if i + 1 < n && split[i] {
                let gap = params[i + 1] - params[i];
                if !(gap > PARAM_FLOOR) {
                    *unresolved += 1;
                    continue;
                }
                let mid = params[i] + 0.5 * gap;
                if let Some(p) = source.eval(mid) {
                    new_params.push(mid);
                    new_points.push(p);
                    any = true;
                }
            }
        }
        params = new_params;
        points = new_points;
        if !any {
            return (params, points);
        }
    }
}

fn inside_truncation_box(p: Point3) -> bool {
    p.max_abs() <= 1.0 - TRUNCATION_MARGIN
}

/// Grow one branch of the stable or unstable manifold of `po` to `target_arclength`.
pub fn grow_manifold(
    po: &PeriodicOrbit,
    side: ManifoldSide,
    target_arclength: f64,
    tol: f64,
) -> Result<ManifoldArc> {
    grow_manifold_with(
        po,
        side,
        target_arclength,
        GrowthOptions {
            refinement_tol: tol,
            ..GrowthOptions::default()
        },
    )
}

pub fn grow_manifold_with(
    po: &PeriodicOrbit,
    side: ManifoldSide,
    target_arclength: f64,
    options: GrowthOptions,
) -> Result<ManifoldArc> {
    if !(target_arclength > 0.0) || !(options.refinement_tol > 0.0) || !(options.max_segment > 0.0)
    {
        return Err(Error::InvalidArgument(
            "arclength and tolerances must be positive".into(),
        ));
    }
    let generator = ArcGenerator::new(po, side, options.precision)?;
    let source = ArcSource::Generator(generator.clone());
    let origin = generator.origin();
    let mut arc = ManifoldArc {
        owner: po.clone(),
        side,
        vertices: vec![origin],
        params: vec![f64::NEG_INFINITY],
        arclength: 0.0,
        refinement_tol: options.refinement_tol,
        max_segment: options.max_segment,
        truncated: false,
        unresolved: 0,
        source: source.clone(),
    };
    let cones = singular_points();
    let owner_cones: Vec<Point3> = cones
        .iter()
        .copied()
        .filter(|c| po.points.iter().any(|p| p.dist(*c) < SINGULAR_BALL))
        .collect();
    let mut entered = inside_truncation_box(origin);
    'domains: for k in 0..MAX_DOMAINS {
        let start = if k == 0 { 0 } else { 1 };
        let cap = options.max_param.unwrap_or(f64::INFINITY);
        if k as f64 >= cap {
            break;
        }
        let mut params: Vec<f64> = (start..=8)
            .map(|i| k as f64 + i as f64 / 8.0)
            .filter(|&u| u <= cap)
            .collect();
        let mut points = Vec::with_capacity(params.len());
        for &u in &params {
            match generator.point_at(u) {
                Some(p) => points.push(p),
                None => break,
            }
        }
        params.truncate(points.len());
        if points.is_empty() {
            arc.truncated = true;
            break;
        }
        // the previous domain's last vertex anchors the first interval
        let (lead_param, lead_point) = (
            arc.params[arc.params.len() - 1],
            arc.vertices[arc.vertices.len() - 1],
        );
        let context = if arc.vertices.len() >= 2 {
            Some(arc.vertices[arc.vertices.len() - 2])
        } else {
            None
        };
        if k > 0 {
            params.insert(0, lead_param);
            points.insert(0, lead_point);
        }
        let (params, points) = refine_domain(
            &source,
            context,
            params,
            points,
            options.refinement_tol,
            options.max_segment,
            &mut arc.unresolved,
        );
        let skip = if k > 0 { 1 } else { 0 };
        for (u, p) in params.into_iter().zip(points).skip(skip) {
            if po.level == 0.0
                && cones
                    .iter()
                    .any(|c| !owner_cones.contains(c) && c.dist(p) < SINGULAR_BALL)
            {
                return Err(Error::SingularityApproach(p.to_array()));
            }
            // on the cubic itself the faces of the box carry whole fold lines, so only the singular balls are excised
            if po.level == 0.0 || inside_truncation_box(p) {
                entered = true;
            } else if entered {
                arc.truncated = true;
                break 'domains;
            }
            let last = arc.vertices[arc.vertices.len() - 1];
            arc.arclength += last.dist(p);
            arc.vertices.push(p);
            arc.params.push(u);
            if arc.arclength >= target_arclength {
                break 'domains;
            }
        }
        if k + 1 == MAX_DOMAINS {
            arc.truncated = true;
        }
    }
    Ok(arc)
}

impl ManifoldArc {
    /// Arc through the given parameters of an analytic curve, as a test fixture or
    /// for externally supplied data.
    pub fn from_curve(
        owner: PeriodicOrbit,
        side: ManifoldSide,
        curve: Arc<dyn Fn(f64) -> Option<Point3> + Send + Sync>,
        params: Vec<f64>,
    ) -> Result<Self> {
        let vertices: Option<Vec<Point3>> = params.iter().map(|&u| curve(u)).collect();
        let vertices = vertices.ok_or(Error::InvalidArgument(
            "curve undefined at a requested parameter".into(),
        ))?;
        let arclength = vertices.windows(2).map(|w| w[0].dist(w[1])).sum();
        Ok(Self {
            owner,
            side,
            vertices,
            params,
            arclength,
            refinement_tol: f64::NAN,
            max_segment: f64::NAN,
            truncated: false,
            unresolved: 0,
            source: ArcSource::Curve(curve),
        })
    }

    pub fn level(&self) -> f64 {
        self.owner.level
    }

    pub fn point(&self, u: f64) -> Option<Point3> {
        self.source.eval(u)
    }

    pub fn generator(&self) -> Option<&ArcGenerator> {
        match &self.source {
            ArcSource::Generator(g) => Some(g),
            ArcSource::Curve(_) => None,
        }
    }

    pub fn max_turning_angle(&self) -> f64 {
        self.vertices
            .windows(3)
            .map(|w| turning_angle(w[0], w[1], w[2]))
            .fold(0.0, f64::max)
    }

    /// Arclength of the vertices with parameters in [k, k + 1].
    pub fn domain_length(&self, k: usize) -> f64 {
        let (lo, hi) = (k as f64, k as f64 + 1.0);
        self.vertices
            .windows(2)
            .zip(self.params.windows(2))
            .filter(|(_, u)| u[0] >= lo && u[1] <= hi)
            .map(|(v, _)| v[0].dist(v[1]))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intersection {
    pub point: Point3,
    /// Unsigned angle between the local tangents, in [0, pi/2].
    pub angle: f64,
    /// Curve parameters on the first and second arc.
    pub params: (f64, f64),
    /// Segment indices on the first and second arc.
    pub segments: (usize, usize),
}

fn plane_basis(normal: Point3, along: Point3) -> Option<(Point3, Point3)> {
    let e1 = along - normal * along.dot(normal);
    let l = e1.norm();
    if l == 0.0 || !l.is_finite() {
        return None;
    }
    let e1 = e1 * (1.0 / l);
    Some((e1, normal.cross(e1)))
}

/// Crossing parameters (t, s) of segments a0a1 and b0b1 in the tangent plane at a0.
fn segment_crossing(a0: Point3, a1: Point3, b0: Point3, b1: Point3) -> Option<(f64, f64)> {
    let n = invariant_gradient(a0);
    let n = if n.norm() > 0.0 {
        n.normalized()
    } else {
        (a1 - a0).cross(b1 - b0).normalized()
    };
    let (e1, e2) = plane_basis(n, a1 - a0)?;
    let c = |p: Point3| [(p - a0).dot(e1), (p - a0).dot(e2)];
    let (pa1, pb0, pb1) = (c(a1), c(b0), c(b1));
    let r = pa1;
    let s = [pb1[0] - pb0[0], pb1[1] - pb0[1]];
    let den = r[0] * s[1] - r[1] * s[0];
    if den == 0.0 {
        return None;
    }
    let q = pb0;
    let t = (q[0] * s[1] - q[1] * s[0]) / den;
    let u = (q[0] * r[1] - q[1] * r[0]) / den;
    ((0.0..1.0).contains(&t) && (0.0..1.0).contains(&u)).then_some((t, u))
}

fn tangent_angle(a: Point3, b: Point3) -> f64 {
    let c = (a.dot(b) / (a.norm() * b.norm())).abs().clamp(0.0, 1.0);
    c.acos()
}

/// Shrink a crossing to parameter brackets below the floor by bisecting both segments.
fn refine_crossing(
    a: &ManifoldArc,
    b: &ManifoldArc,
    mut ua: [f64; 2],
    mut ub: [f64; 2],
    mut pa: [Point3; 2],
    mut pb: [Point3; 2],
) -> (Point3, f64, (f64, f64)) {
    let finite = ua.iter().chain(ub.iter()).all(|u| u.is_finite());
    for _ in 0..80 {
        if !finite || (pa[0].dist(pa[1]) < 1e-12 && pb[0].dist(pb[1]) < 1e-12) {
            break;
        }
        if ua[1] - ua[0] <= PARAM_FLOOR && ub[1] - ub[0] <= PARAM_FLOOR {
            break;
        }
        let (ma, mb) = (0.5 * (ua[0] + ua[1]), 0.5 * (ub[0] + ub[1]));
        let (Some(qa), Some(qb)) = (a.point(ma), b.point(mb)) else {
            break;
        };
        let halves_a = [([ua[0], ma], [pa[0], qa]), ([ma, ua[1]], [qa, pa[1]])];
        let halves_b = [([ub[0], mb], [pb[0], qb]), ([mb, ub[1]], [qb, pb[1]])];
        let mut found = false;
        'search: for (ra, sa) in halves_a {
            for (rb, sb) in halves_b {
                if segment_crossing(sa[0], sa[1], sb[0], sb[1]).is_some() {
                    (ua, pa, ub, pb) = (ra, sa, rb, sb);
                    found = true;
                    break 'search;
                }
            }
        }
        if !found {
            break;
        }
    }
    let (t, s) = segment_crossing(pa[0], pa[1], pb[0], pb[1]).unwrap_or((0.5, 0.5));
    let point = pa[0] + (pa[1] - pa[0]) * t;
    let angle = tangent_angle(pa[1] - pa[0], pb[1] - pb[0]);
    let lerp = |u: [f64; 2], f: f64| {
        if u[0].is_finite() {
            u[0] + (u[1] - u[0]) * f
        } else {
            u[1]
        }
    };
    (point, angle, (lerp(ua, t), lerp(ub, s)))
}

/// All crossings of two arcs, excluding the owner orbits and, for an arc against
/// itself, neighbouring segments.
pub fn find_intersections(a: &ManifoldArc, b: &ManifoldArc) -> Vec<Intersection> {
    let same = std::ptr::eq(a, b);
    let seg_len = |arc: &ManifoldArc| {
        arc.vertices
            .windows(2)
            .map(|w| w[0].dist(w[1]))
            .fold(0.0, f64::max)
    };
    let cell = seg_len(a).max(seg_len(b)).max(1e-12);
    let key = |p: Point3| {
        (
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        )
    };
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for j in 0..b.vertices.len().saturating_sub(1) {
        let mid = (b.vertices[j] + b.vertices[j + 1]) * 0.5;
        grid.entry(key(mid)).or_default().push(j);
    }
    let owners: Vec<Point3> = a
        .owner
        .points
        .iter()
        .chain(&b.owner.points)
        .copied()
        .collect();
    let mut raw: Vec<(usize, usize)> = (0..a.vertices.len().saturating_sub(1))
        .into_par_iter()
        .flat_map_iter(|i| {
            let (a0, a1) = (a.vertices[i], a.vertices[i + 1]);
            let (kx, ky, kz) = key((a0 + a1) * 0.5);
            let mut hits = Vec::new();
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        let Some(list) = grid.get(&(kx + dx, ky + dy, kz + dz)) else {
                            continue;
                        };
                        for &j in list {
                            if same && j <= i + 1 {
                                continue;
                            }
                            if segment_crossing(a0, a1, b.vertices[j], b.vertices[j + 1]).is_some()
                            {
                                hits.push((i, j));
                            }
                        }
                    }
                }
            }
            hits
        })
        .collect();
    raw.sort_unstable();
    raw.into_par_iter()
        .filter_map(|(i, j)| {
            let (point, angle, params) = refine_crossing(
                a,
                b,
                [a.params[i], a.params[i + 1]],
                [b.params[j], b.params[j + 1]],
                [a.vertices[i], a.vertices[i + 1]],
                [b.vertices[j], b.vertices[j + 1]],
            );
            if owners.iter().any(|o| o.dist(point) < OWNER_EXCLUSION) {
                return None;
            }
            Some(Intersection {
                point,
                angle,
                params,
                segments: (i, j),
            })
        })
        .collect()
}

/// Orthonormal frame of the common tangent at a near-tangency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommonFrame {
    pub origin: Point3,
    pub e1: Point3,
    pub e2: Point3,
    pub normal: Point3,
    /// Fell back to the surface's own chart because the tangents were ill-conditioned.
    pub fallback: bool,
}

impl CommonFrame {
    pub fn coords(&self, p: Point3) -> (f64, f64) {
        let d = p - self.origin;
        (d.dot(self.e1), d.dot(self.e2))
    }

    /// Frame at `origin` with first axis along the average of two tangents.
    pub fn at(origin: Point3, ta: Point3, tb: Point3) -> Result<Self> {
        let g = invariant_gradient(origin);
        let gn = g.norm();
        let tb = if ta.dot(tb) < 0.0 { -tb } else { tb };
        let along = ta.normalized() + tb.normalized();
        let basis = if gn > 0.0 {
            plane_basis(g * (1.0 / gn), along)
        } else {
            None
        };
        let cond = if gn > 0.0 {
            1.0 / (gn * along.norm())
        } else {
            f64::INFINITY
        };
        match basis {
            Some((e1, e2)) if cond <= FRAME_CONDITION => Ok(Self {
                origin,
                e1,
                e2,
                normal: g * (1.0 / gn),
                fallback: false,
            }),
            _ => {
                let f = tangent_frame(origin)?;
                Ok(Self {
                    origin,
                    e1: f.u1,
                    e2: f.u2,
                    normal: f.normal,
                    fallback: true,
                })
            }
        }
    }
}

/// Local quadratic h = a + b xi + c xi^2 of a curve in a common frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Largest absolute deviation of the samples from the fit.
    pub residual: f64,
    pub window: f64,
    /// Curve parameter at xi = 0.
    pub param: f64,
}

impl QuadFit {
    pub fn eval(&self, xi: f64) -> f64 {
        self.a + self.b * xi + self.c * xi * xi
    }
}

/// Signed extremum of the difference of two fits: positive when the curves cross twice, zero at tangency.
pub fn separation(stable: &QuadFit, unstable: &QuadFit) -> f64 {
    let (da, db, dc) = (
        unstable.a - stable.a,
        unstable.b - stable.b,
        unstable.c - stable.c,
    );
    if dc == 0.0 {
        return f64::NAN;
    }
    db * db / (4.0 * dc.abs()) - dc.signum() * da
}

fn xi_of(arc: &ManifoldArc, frame: &CommonFrame, u: f64) -> Option<f64> {
    arc.point(u).map(|p| frame.coords(p).0)
}

/// Parameter increment that moves the curve by about `spatial` near `u`.
fn param_step(arc: &ManifoldArc, u: f64, spatial: f64) -> Option<f64> {
    let mut du = 1e-9 * u.abs().max(1.0);
    for _ in 0..3 {
        let speed = arc.point(u + du)?.dist(arc.point(u - du)?) / (2.0 * du);
        if !(speed > 0.0) || !speed.is_finite() {
            return None;
        }
        du = spatial / speed;
    }
    Some(du)
}

/// Parameter where the curve crosses the frame's normal line xi = 0, and d xi / du there.
fn locate_param(
    arc: &ManifoldArc,
    frame: &CommonFrame,
    u0: f64,
    spatial: f64,
) -> Option<(f64, f64)> {
    let du = param_step(arc, u0, spatial)?;
    let slope_at =
        |u: f64| Some((xi_of(arc, frame, u + du)? - xi_of(arc, frame, u - du)?) / (2.0 * du));
    let mut u = u0;
    let mut best = (f64::INFINITY, u0);
    let mut stalled = 0;
    for _ in 0..60 {
        let x = xi_of(arc, frame, u)?;
        if x.abs() < best.0 {
            best = (x.abs(), u);
            stalled = 0;
        } else {
            stalled += 1;
        }
        if x == 0.0 || stalled >= 3 {
            break;
        }
        let slope = slope_at(u)?;
        if !(slope.abs() > 0.0) {
            return None;
        }
        // trust region: move the point by at most a few times the current offset
        let speed = arc.point(u + du)?.dist(arc.point(u - du)?) / (2.0 * du);
        let limit = (4.0 * x.abs() + spatial) / speed;
        u -= (x / slope).clamp(-limit, limit);
    }
    (best.0 < 1e-3 * spatial).then_some(())?;
    Some((best.1, slope_at(best.1)?))
}

fn samples(
    arc: &ManifoldArc,
    frame: &CommonFrame,
    u: f64,
    slope: f64,
    w: f64,
) -> Option<Vec<(f64, f64)>> {
    let half = (FIT_WINDOW / 2) as i32;
    (-half..=half)
        .map(|j| {
            arc.point(u + j as f64 / half as f64 * w / slope)
                .map(|p| frame.coords(p))
        })
        .collect()
}

fn poly_fit(pts: &[(f64, f64)], w: f64, degree: usize) -> Option<(Vec<f64>, f64)> {
    let a = DMatrix::from_fn(pts.len(), degree + 1, |i, j| (pts[i].0 / w).powi(j as i32));
    let y = DVector::from_iterator(pts.len(), pts.iter().map(|p| p.1));
    let coef = a.clone().svd(true, true).solve(&y, 1e-14).ok()?;
    let residual = (a * &coef - y).amax();
    let scaled: Vec<f64> = (0..=degree).map(|j| coef[j] / w.powi(j as i32)).collect();
    Some((scaled, residual))
}

fn quad_at(arc: &ManifoldArc, frame: &CommonFrame, u: f64, slope: f64, w: f64) -> Result<QuadFit> {
    let pts = samples(arc, frame, u, slope, w).ok_or(Error::PoorFit(f64::INFINITY))?;
    let (coef, residual) = poly_fit(&pts, w, 2).ok_or(Error::PoorFit(f64::INFINITY))?;
    Ok(QuadFit {
        a: coef[0],
        b: coef[1],
        c: coef[2],
        residual,
        window: w,
        param: u,
    })
}

/// Quadratic fit of `arc` over 21 samples near parameter `u0` in `frame`. Without a
/// window, the largest window from 1e-2 down whose fit meets the residual target is used;
/// a given window is shrunk once before giving up.
pub fn fit_quadratic(
    arc: &ManifoldArc,
    frame: &CommonFrame,
    u0: f64,
    window: Option<f64>,
) -> Result<QuadFit> {
    let start = window.unwrap_or(1e-2);
    let (u, slope) =
        locate_param(arc, frame, u0, start * 1e-3).ok_or(Error::PoorFit(f64::INFINITY))?;
    match window {
        Some(w) => {
            let fit = quad_at(arc, frame, u, slope, w)?;
            if fit.residual < FIT_RESIDUAL {
                return Ok(fit);
            }
            let fit = quad_at(arc, frame, u, slope, 0.5 * w)?;
            if fit.residual < FIT_RESIDUAL {
                Ok(fit)
            } else {
                Err(Error::PoorFit(fit.residual))
            }
        }
        None => {
            let mut w = start;
            let mut last = f64::INFINITY;
            for _ in 0..16 {
                // relocate at the scale of the current window
                let (u, slope) =
                    locate_param(arc, frame, u, w * 1e-3).ok_or(Error::PoorFit(last))?;
                if let Ok(fit) = quad_at(arc, frame, u, slope, w) {
                    if fit.residual < FIT_TARGET {
                        return Ok(fit);
                    }
                    last = fit.residual;
                }
                w *= 0.25;
            }
            Err(Error::PoorFit(last))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangencyEvent {
    #[serde(rename = "V")]
    pub level: f64,
    #[serde(rename = "point")]
    pub location: Point3,
    #[serde(rename = "angle")]
    pub crossing_angle: f64,
    pub c_s: f64,
    pub c_u: f64,
    pub separation: f64,
    #[serde(rename = "speed", with = "extended_f64")]
    pub unfolding_speed: f64,
    pub diagnostics: TangencyDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangencyDiagnostics {
    pub owner: PeriodicOrbitRecord,
    pub stable_param: f64,
    pub unstable_param: f64,
    pub frame: CommonFrame,
    pub window: f64,
    pub fit_residual: f64,
    pub quad_gap: f64,
    pub delta: f64,
    pub angle_tol: f64,
    #[serde(with = "extended_f64")]
    pub noise_floor: f64,
    pub dv: f64,
    /// Nearby crossings at V - dv and V + dv.
    pub crossings_below: Option<usize>,
    pub crossings_above: Option<usize>,
    /// Final V bracket of the hunt's bisection.
    pub bracket: Option<[f64; 2]>,
    pub bisections: usize,
    pub precision: Precision,
    pub notes: Vec<String>,
}

impl TangencyEvent {
    pub fn quad_gap(&self) -> f64 {
        (self.c_u - self.c_s).abs()
    }

    pub fn count_change(&self) -> Option<i64> {
        Some(self.diagnostics.crossings_above? as i64 - self.diagnostics.crossings_below? as i64)
    }

    /// Both event invariants plus a measurable unfolding.
    pub fn is_valid(&self) -> bool {
        let d = &self.diagnostics;
        self.crossing_angle < d.angle_tol
            && self.quad_gap() > d.delta
            && d.fit_residual < FIT_RESIDUAL
            && self.unfolding_speed.abs() > 10.0 * d.noise_floor
            && self.count_change().map(i64::abs) == Some(2)
    }
}

fn local_tangent(arc: &ManifoldArc, u: f64, spatial: f64) -> Option<Point3> {
    let du = param_step(arc, u, spatial)?;
    Some(arc.point(u + du)? - arc.point(u - du)?)
}

/// Fits of both curves in one frame built at `origin` from their tangents.
fn fit_pair(
    ws: &ManifoldArc,
    wu: &ManifoldArc,
    origin: Point3,
    us: f64,
    uu: f64,
    scale: f64,
) -> Result<(CommonFrame, QuadFit, QuadFit)> {
    let ts = local_tangent(ws, us, scale).ok_or(Error::PoorFit(f64::INFINITY))?;
    let tu = local_tangent(wu, uu, scale).ok_or(Error::PoorFit(f64::INFINITY))?;
    let frame = CommonFrame::at(origin, tu, ts)?;
    // the more sharply curved of the two sets the common window
    let fu = fit_quadratic(wu, &frame, uu, None)?;
    let fs = fit_quadratic(ws, &frame, us, None)?;
    let w = fu.window.min(fs.window);
    let fu = fit_quadratic(wu, &frame, fu.param, Some(w))?;
    let fs = fit_quadratic(ws, &frame, fs.param, Some(w))?;
    Ok((frame, fs, fu))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TangencyDetection {
    pub events: Vec<TangencyEvent>,
    pub rejected: Vec<String>,
}

#[allow(clippy::too_many_arguments)]
fn event_from_fits(
    level: f64,
    owner: &PeriodicOrbit,
    frame: CommonFrame,
    fs: QuadFit,
    fu: QuadFit,
    delta: f64,
    angle_tol: f64,
    precision: Precision,
) -> TangencyEvent {
    let xi = if fu.c != fs.c {
        -(fu.b - fs.b) / (2.0 * (fu.c - fs.c))
    } else {
        0.0
    };
    let location = frame.origin + frame.e1 * xi + frame.e2 * fu.eval(xi);
    let location = project_to_level(location, level).unwrap_or(location);
    let crossing_angle = (fu.b.atan() - fs.b.atan()).abs();
    TangencyEvent {
        level,
        location,
        crossing_angle,
        c_s: fs.c,
        c_u: fu.c,
        separation: separation(&fs, &fu),
        unfolding_speed: f64::NAN,
        diagnostics: TangencyDiagnostics {
            owner: owner.into(),
            stable_param: fs.param,
            unstable_param: fu.param,
            frame,
            window: fu.window,
            fit_residual: fs.residual.max(fu.residual),
            quad_gap: (fu.c - fs.c).abs(),
            delta,
            angle_tol,
            noise_floor: f64::NAN,
            dv: f64::NAN,
            crossings_below: None,
            crossings_above: None,
            bracket: None,
            bisections: 0,
            precision,
            notes: Vec::new(),
        },
    }
}

/// Near-tangent crossings and near misses of a stable and an unstable arc that
/// pass the quadratic-gap test.
pub fn detect_tangencies(
    ws: &ManifoldArc,
    wu: &ManifoldArc,
    angle_tol: f64,
    delta: f64,
) -> TangencyDetection {
    let mut out = TangencyDetection::default();
    let mut candidates: Vec<(Point3, f64, f64)> = find_intersections(ws, wu)
        .into_iter()
        .filter(|x| x.angle < angle_tol)
        .map(|x| (x.point, x.params.0, x.params.1))
        .collect();
    candidates.extend(near_misses(ws, wu, angle_tol));
    let precision = wu.generator().map(|g| g.precision).unwrap_or_default();
    for (point, us, uu) in candidates {
        if !(us.is_finite() && uu.is_finite()) {
            continue;
        }
        match fit_pair(ws, wu, point, us, uu, 1e-6) {
            Ok((frame, fs, fu)) => {
                let ev = event_from_fits(
                    wu.level(),
                    &wu.owner,
                    frame,
                    fs,
                    fu,
                    delta,
                    angle_tol,
                    precision,
                );
                if ev.crossing_angle >= angle_tol {
                    out.rejected
                        .push(format!("angle {:.3e} at {:?}", ev.crossing_angle, point));
                } else if ev.quad_gap() <= delta {
                    out.rejected.push(format!(
                        "quadratic gap {:.3e} <= {delta} at {:?}",
                        ev.quad_gap(),
                        point
                    ));
                } else if !out
                    .events
                    .iter()
                    .any(|e| e.location.dist(ev.location) < 1e-6)
                {
                    out.events.push(ev);
                }
            }
            Err(e) => out.rejected.push(format!("{e} at {point:?}")),
        }
    }
    out
}

/// Vertex pairs that come within a few segment lengths with nearly parallel
/// segments and are local distance minima.
fn near_misses(ws: &ManifoldArc, wu: &ManifoldArc, angle_tol: f64) -> Vec<(Point3, f64, f64)> {
    let reach = wu
        .vertices
        .windows(2)
        .map(|w| w[0].dist(w[1]))
        .fold(0.0, f64::max)
        .max(1e-9)
        * 2.0;
    let key = |p: Point3| {
        (
            (p.x / reach).floor() as i64,
            (p.y / reach).floor() as i64,
            (p.z / reach).floor() as i64,
        )
    };
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (j, p) in ws.vertices.iter().enumerate() {
        grid.entry(key(*p)).or_default().push(j);
    }
    let mut best: HashMap<(usize, usize), f64> = HashMap::new();
    for i in 1..wu.vertices.len().saturating_sub(1) {
        let p = wu.vertices[i];
        if wu
            .owner
            .points
            .iter()
            .any(|o| o.dist(p) < OWNER_EXCLUSION * 10.0)
        {
            continue;
        }
        let (kx, ky, kz) = key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(list) = grid.get(&(kx + dx, ky + dy, kz + dz)) else {
                        continue;
                    };
                    for &j in list {
                        if j == 0 || j + 1 >= ws.vertices.len() {
                            continue;
                        }
                        let d = p.dist(ws.vertices[j]);
                        let ta = wu.vertices[i + 1] - wu.vertices[i - 1];
                        let tb = ws.vertices[j + 1] - ws.vertices[j - 1];
                        if d < reach && tangent_angle(ta, tb) < angle_tol.max(1e-2) {
                            best.insert((i, j), d);
                        }
                    }
                }
            }
        }
    }
    let mut out = Vec::new();
    for (&(i, j), &d) in &best {
        let neighbours = [(i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)];
        let dist = |(a, b): (usize, usize)| {
            wu.vertices
                .get(a)
                .zip(ws.vertices.get(b))
                .map(|(p, q)| p.dist(*q))
        };
        if neighbours.iter().all(|&n| dist(n).is_none_or(|e| e > d)) {
            out.push((
                (wu.vertices[i] + ws.vertices[j]) * 0.5,
                ws.params[j],
                wu.params[i],
            ));
        }
    }
    out
}

/// Orbit at a nearby level, corrected from `po` in one Newton solve.
fn orbit_near(po: &PeriodicOrbit, v: f64) -> Result<PeriodicOrbit> {
    let o = find_periodic(v, po.period, po.points[0]).map_err(|_| Error::BranchLost(v))?;
    if o.lower_period.is_some() || o.points[0].dist(po.points[0]) > 0.1 {
        return Err(Error::BranchLost(v));
    }
    Ok(o.rotated_toward(po.points[0]))
}

fn local_arc(po: &PeriodicOrbit, side: ManifoldSide, precision: Precision) -> Result<ManifoldArc> {
    let generator = ArcGenerator::new(po, side, precision)?;
    Ok(ManifoldArc {
        owner: po.clone(),
        side,
        vertices: vec![po.points[0]],
        params: vec![f64::NEG_INFINITY],
        arclength: 0.0,
        refinement_tol: f64::NAN,
        max_segment: f64::NAN,
        truncated: false,
        unresolved: 0,
        source: ArcSource::Generator(generator),
    })
}

/// Refined polyline of one branch over the parameter interval [lo, hi].
pub fn manifold_piece(
    po: &PeriodicOrbit,
    side: ManifoldSide,
    lo: f64,
    hi: f64,
    options: GrowthOptions,
) -> Result<ManifoldArc> {
    if !(lo < hi) || !lo.is_finite() {
        return Err(Error::InvalidArgument(
            "parameter interval must be finite and nonempty".into(),
        ));
    }
    let base = local_arc(po, side, options.precision)?;
    let params: Vec<f64> = (0..=64).map(|i| lo + (hi - lo) * i as f64 / 64.0).collect();
    let points: Option<Vec<Point3>> = params.iter().map(|&u| base.point(u)).collect();
    let points = points.ok_or(Error::EscapedDomain { step: 0 })?;
    let mut unresolved = 0;
    let (params, vertices) = refine_domain(
        &base.source,
        None,
        params,
        points,
        options.refinement_tol,
        options.max_segment,
        &mut unresolved,
    );
    let arclength = vertices.windows(2).map(|w| w[0].dist(w[1])).sum();
    Ok(ManifoldArc {
        vertices,
        params,
        arclength,
        refinement_tol: options.refinement_tol,
        max_segment: options.max_segment,
        unresolved,
        ..base
    })
}

/// Separation of the two manifolds of `po` near the given parameters, measured in `frame`.
pub fn separation_at(
    po: &PeriodicOrbit,
    frame: &CommonFrame,
    params: (f64, f64),
    window: f64,
    precision: Precision,
) -> Result<(f64, f64, QuadFit, QuadFit)> {
    let ws = local_arc(po, ManifoldSide::Stable, precision)?;
    let wu = local_arc(po, ManifoldSide::Unstable, precision)?;
    let fs = fit_quadratic(&ws, frame, params.0, Some(window))?;
    let fu = fit_quadratic(&wu, frame, params.1, Some(window))?;
    Ok((separation(&fs, &fu), fs.residual.max(fu.residual), fs, fu))
}

/// Central difference of the separation in V, with the fit noise floor residual / dV.
pub fn unfolding_speed(event: &TangencyEvent, po: &PeriodicOrbit, dv: f64) -> Result<(f64, f64)> {
    let d = &event.diagnostics;
    let params = (d.stable_param, d.unstable_param);
    let below = orbit_near(po, event.level - dv)?;
    let above = orbit_near(po, event.level + dv)?;
    let (m_lo, r_lo, ..) = separation_at(&below, &d.frame, params, d.window, d.precision)?;
    let (m_hi, r_hi, ..) = separation_at(&above, &d.frame, params, d.window, d.precision)?;
    Ok(((m_hi - m_lo) / (2.0 * dv), r_lo.max(r_hi) / dv))
}

/// Crossings of finely sampled pieces of both manifolds within `span` of the
/// frame origin along the given parameters.
pub fn local_crossings(
    po: &PeriodicOrbit,
    frame: &CommonFrame,
    params: (f64, f64),
    span: f64,
    precision: Precision,
) -> Result<usize> {
    let mut arcs = Vec::new();
    for (side, u0) in [
        (ManifoldSide::Stable, params.0),
        (ManifoldSide::Unstable, params.1),
    ] {
        let base = local_arc(po, side, precision)?;
        let (u, _) =
            locate_param(&base, frame, u0, span * 1e-3).ok_or(Error::PoorFit(f64::INFINITY))?;
        let half = param_step(&base, u, span).ok_or(Error::PoorFit(f64::INFINITY))?;
        let options = GrowthOptions {
            max_segment: span / 200.0,
            precision,
            ..GrowthOptions::default()
        };
        arcs.push(manifold_piece(po, side, u - half, u + half, options)?);
    }
    Ok(find_intersections(&arcs[0], &arcs[1]).len())
}

/// Whether the fitted graphs of `u` and `v`, both tangent to `g`, meet between their tangency points.
pub fn tangent_graph_intersection_check(g: &QuadFit, u: &QuadFit, v: &QuadFit) -> bool {
    let touch = |f: &QuadFit| {
        let dc = f.c - g.c;
        if dc == 0.0 {
            0.0
        } else {
            -(f.b - g.b) / (2.0 * dc)
        }
    };
    let (alpha, beta) = (touch(u), touch(v));
    let (lo, hi) = (alpha.min(beta), alpha.max(beta));
    let diff = |x: f64| u.eval(x) - v.eval(x);
    let mut values = vec![diff(lo), diff(hi)];
    let dc = u.c - v.c;
    if dc != 0.0 {
        let vertex = -(u.b - v.b) / (2.0 * dc);
        if vertex > lo && vertex < hi {
            values.push(diff(vertex));
        }
    }
    let tol = 1e-12 * (1.0 + u.a.abs().max(v.a.abs()));
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    min <= tol && max >= -tol
}

/// Preconditions of the tangent-graph check: g nearly flat, u and v strongly curved.
pub fn tangent_graph_preconditions(g: &QuadFit, u: &QuadFit, v: &QuadFit, delta: f64) -> bool {
    (2.0 * g.c).abs() < delta / 2.0 && 2.0 * u.c > delta && 2.0 * v.c > delta
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HuntConfig {
    /// Levels in the coarse scan, endpoints included.
    pub grid: usize,
    /// Arcs in the coarse scan stop at this curve parameter.
    pub max_param: f64,
    pub angle_tol: f64,
    pub delta: f64,
    /// V bisections per bracket.
    pub bisections: usize,
    pub dv: f64,
    /// Crossings at neighbouring levels match when both parameters move less than this.
    pub match_tol: f64,
    /// Coarse-scan growth; local work always uses `precision`.
    pub growth: GrowthOptions,
    pub precision: Precision,
}

impl Default for HuntConfig {
    fn default() -> Self {
        Self {
            grid: 71,
            max_param: 9.8,
            angle_tol: ANGLE_TOL,
            delta: CURVATURE_GAP,
            bisections: 24,
            dv: UNFOLDING_DV,
            match_tol: 0.05,
            growth: GrowthOptions::default(),
            precision: Precision::Extended,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HuntSample {
    #[serde(rename = "V")]
    pub level: f64,
    pub seed: usize,
    pub crossings: usize,
    #[serde(with = "extended_f64")]
    pub min_angle: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HuntReport {
    pub events: Vec<TangencyEvent>,
    pub samples: Vec<HuntSample>,
    /// Coarse brackets in which a pair of crossings appeared or vanished.
    pub brackets: Vec<[f64; 2]>,
    pub diagnostics: Vec<String>,
}

struct Snapshot {
    orbit: PeriodicOrbit,
    crossings: Vec<Intersection>,
}

fn snapshot(po: &PeriodicOrbit, cfg: &HuntConfig) -> Result<Snapshot> {
    let options = GrowthOptions {
        max_param: Some(cfg.max_param),
        ..cfg.growth
    };
    let (ws, wu) = rayon::join(
        || grow_manifold_with(po, ManifoldSide::Stable, f64::INFINITY, options),
        || grow_manifold_with(po, ManifoldSide::Unstable, f64::INFINITY, options),
    );
    Ok(Snapshot {
        orbit: po.clone(),
        crossings: find_intersections(&ws?, &wu?),
    })
}

fn param_gap(a: &Intersection, b: &Intersection) -> f64 {
    (a.params.0 - b.params.0)
        .abs()
        .max((a.params.1 - b.params.1).abs())
}

/// Crossings at `here` with no counterpart at `there`, grouped into close pairs away from the parameter cap.
fn unmatched_pairs(
    here: &[Intersection],
    there: &[Intersection],
    cfg: &HuntConfig,
) -> Vec<(Intersection, Intersection)> {
    let interior = |x: &Intersection| {
        x.params.0 < cfg.max_param - cfg.match_tol && x.params.1 < cfg.max_param - cfg.match_tol
    };
    let mut lone: Vec<Intersection> = here
        .iter()
        .filter(|x| interior(x) && !there.iter().any(|y| param_gap(x, y) < cfg.match_tol))
        .copied()
        .collect();
    let mut pairs = Vec::new();
    while lone.len() >= 2 {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..lone.len() {
            for j in i + 1..lone.len() {
                let g = param_gap(&lone[i], &lone[j]);
                if g < cfg.match_tol && best.is_none_or(|b| g < b.0) {
                    best = Some((g, i, j));
                }
            }
        }
        let Some((_, i, j)) = best else { break };
        let b = lone.remove(j);
        let a = lone.remove(i);
        pairs.push((a, b));
    }
    pairs
}

/// Hyperbolic orbits to hunt with at level `v`: the period-two orbit when
/// `max_period >= 2`, then any further hyperbolic orbit of period up to
/// `max_period` from a census on a `census_grid` lattice (none when zero).
pub fn hunt_seeds(v: f64, max_period: usize, census_grid: usize) -> Vec<PeriodicOrbit> {
    let mut seeds: Vec<PeriodicOrbit> = Vec::new();
    if max_period >= 2 {
        if let Ok(po) = period_two_at_level(v).and_then(|g| find_periodic(v, 2, g)) {
            seeds.push(po);
        }
    }
    if census_grid > 0 {
        for o in periodic_census(v, max_period, census_grid) {
            let known = seeds.iter().any(|s| {
                s.period == o.period && s.points.iter().any(|p| p.dist(o.points[0]) < 1e-7)
            });
            if o.stability.is_hyperbolic() && !known {
                seeds.push(o);
            }
        }
    }
    seeds
}

/// Scan V for pairs of crossings between the manifolds of each seed orbit that
/// appear or vanish together, localise each such pair as a tangency and validate it.
pub fn tangency_hunt(
    v_range: (f64, f64),
    seeds: &[PeriodicOrbit],
    cfg: &HuntConfig,
) -> Result<HuntReport> {
    let (v_lo, v_hi) = v_range;
    if !(v_lo < v_hi && v_lo > -1.0 && v_hi < 0.0) {
        return Err(Error::InvalidArgument(
            "V range must be an increasing interval inside (-1, 0)".into(),
        ));
    }
    if cfg.grid < 2 || cfg.bisections == 0 {
        return Err(Error::InvalidArgument(
            "the hunt needs at least two levels and one bisection".into(),
        ));
    }
    let mut report = HuntReport::default();
    for (seed_id, seed) in seeds.iter().enumerate() {
        if !seed.stability.is_hyperbolic() {
            report
                .diagnostics
                .push(format!("seed {seed_id}: not hyperbolic"));
            continue;
        }
        // walk the grid from the end nearest the seed's own level
        let mut levels: Vec<f64> = (0..cfg.grid)
            .map(|i| v_hi - (v_hi - v_lo) * i as f64 / (cfg.grid - 1) as f64)
            .collect();
        if (seed.level - v_lo).abs() < (seed.level - v_hi).abs() {
            levels.reverse();
        }
        let mut orbit = seed.clone();
        let snaps: Vec<Option<Snapshot>> = levels
            .iter()
            .map(|&v| {
                let next = crate::periodic::continue_in_v(&orbit, v, 0.01)
                    .ok()
                    .filter(|b| b.reached(v))
                    .map(|b| b.last().clone());
                let Some(o) = next.filter(|o| o.stability.is_hyperbolic()) else {
                    report
                        .diagnostics
                        .push(format!("seed {seed_id}: no hyperbolic orbit at V = {v}"));
                    return None;
                };
                orbit = o.clone();
                match snapshot(&o, cfg) {
                    Ok(s) => {
                        report.samples.push(HuntSample {
                            level: v,
                            seed: seed_id,
                            crossings: s.crossings.len(),
                            min_angle: s
                                .crossings
                                .iter()
                                .map(|x| x.angle)
                                .fold(f64::INFINITY, f64::min),
                        });
                        Some(s)
                    }
                    Err(e) => {
                        report
                            .diagnostics
                            .push(format!("seed {seed_id} at V = {v}: {e}"));
                        None
                    }
                }
            })
            .collect();
        for w in snaps.windows(2) {
            let (Some(a), Some(b)) = (&w[0], &w[1]) else {
                continue;
            };
            let mut candidates: Vec<(&Snapshot, &Snapshot, (Intersection, Intersection))> =
                Vec::new();
            candidates.extend(
                unmatched_pairs(&a.crossings, &b.crossings, cfg)
                    .into_iter()
                    .map(|p| (a, b, p)),
            );
            candidates.extend(
                unmatched_pairs(&b.crossings, &a.crossings, cfg)
                    .into_iter()
                    .map(|p| (b, a, p)),
            );
            for (with, without, pair) in candidates {
                let coarse = [
                    with.orbit.level.min(without.orbit.level),
                    with.orbit.level.max(without.orbit.level),
                ];
                report.brackets.push(coarse);
                match localise(&with.orbit, &without.orbit, pair, cfg) {
                    Ok(ev) => {
                        if !report.events.iter().any(|e| {
                            e.location.dist(ev.location) < 1e-6 && (e.level - ev.level).abs() < 1e-9
                        }) {
                            report.events.push(ev);
                        }
                    }
                    Err(e) => report.diagnostics.push(format!(
                        "seed {seed_id} bracket [{}, {}]: {e}",
                        coarse[0], coarse[1]
                    )),
                }
            }
        }
    }
    Ok(report)
}

struct LocalBox {
    params: (f64, f64),
    half: f64,
}

impl LocalBox {
    fn crossings(&self, po: &PeriodicOrbit, precision: Precision) -> Result<Vec<Intersection>> {
        let options = GrowthOptions {
            max_segment: 1e-3,
            precision,
            ..GrowthOptions::default()
        };
        let (ws, wu) = rayon::join(
            || {
                manifold_piece(
                    po,
                    ManifoldSide::Stable,
                    self.params.0 - self.half,
                    self.params.0 + self.half,
                    options,
                )
            },
            || {
                manifold_piece(
                    po,
                    ManifoldSide::Unstable,
                    self.params.1 - self.half,
                    self.params.1 + self.half,
                    options,
                )
            },
        );
        Ok(find_intersections(&ws?, &wu?))
    }
}

/// The closest pair among crossings, by parameter distance.
fn closest_pair(xs: &[Intersection]) -> Option<(Intersection, Intersection)> {
    let mut best: Option<(f64, usize, usize)> = None;
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            let g = param_gap(&xs[i], &xs[j]);
            if best.is_none_or(|b| g < b.0) {
                best = Some((g, i, j));
            }
        }
    }
    best.map(|(_, i, j)| (xs[i], xs[j]))
}

fn localise(
    with: &PeriodicOrbit,
    without: &PeriodicOrbit,
    pair: (Intersection, Intersection),
    cfg: &HuntConfig,
) -> Result<TangencyEvent> {
    let precision = cfg.precision;
    let mid = |a: &Intersection, b: &Intersection| {
        (
            0.5 * (a.params.0 + b.params.0),
            0.5 * (a.params.1 + b.params.1),
        )
    };
    let mut window = LocalBox {
        params: mid(&pair.0, &pair.1),
        half: param_gap(&pair.0, &pair.1) + cfg.match_tol,
    };
    let (mut with, mut without) = (with.clone(), without.clone());
    let n_with = window.crossings(&with, precision)?.len();
    let n_without = window.crossings(&without, precision)?.len();
    if n_with != n_without + 2 {
        return Err(Error::NoConvergence {
            what: "local crossing count across the bracket",
            iterations: 0,
            residual: (n_with as f64 - n_without as f64).abs(),
        });
    }
    // bisect in V on the local count
    let mut steps = 0;
    for _ in 0..cfg.bisections {
        let vm = 0.5 * (with.level + without.level);
        let o = orbit_near(&with, vm)?;
        let xs = window.crossings(&o, precision)?;
        if xs.len() == n_with {
            with = o;
        } else if xs.len() == n_without {
            without = o;
        } else {
            break;
        }
        steps += 1;
    }
    let bracket = [with.level.min(without.level), with.level.max(without.level)];
    let xs = window.crossings(&with, precision)?;
    let (a, b) = closest_pair(&xs).ok_or(Error::PoorFit(f64::NAN))?;
    window.params = mid(&a, &b);
    let point = (a.point + b.point) * 0.5;
    let scale = (a.point.dist(b.point) * 0.01).max(1e-12);

    let ws = local_arc(&with, ManifoldSide::Stable, precision)?;
    let wu = local_arc(&with, ManifoldSide::Unstable, precision)?;
    let (frame, fs, fu) = fit_pair(&ws, &wu, point, window.params.0, window.params.1, scale)?;
    let params = (fs.param, fu.param);
    let fit_window = fu.window;
    let m_of =
        |po: &PeriodicOrbit| separation_at(po, &frame, params, fit_window, precision).map(|r| r.0);

    // secant on the separation, switching to Illinois once a sign change is bracketed;
    // the polyline count can place the bracket slightly off the true root
    let (mut v0, mut v1) = (without.level, with.level);
    let (mut m0, mut m1) = (m_of(&without)?, m_of(&with)?);
    let mut orbit = with.clone();
    let mut bracketed = m0 * m1 < 0.0;
    let mut side = 0;
    let reach = 1e-3_f64.max(4.0 * (bracket[1] - bracket[0]));
    for _ in 0..60 {
        if m1 == 0.0 || m1 == m0 || (v1 - v0).abs() < 1e-15 {
            break;
        }
        let v2 = (v0 * m1 - v1 * m0) / (m1 - m0);
        if !bracketed && (v2 - with.level).abs() > reach {
            return Err(Error::NoConvergence {
                what: "separation root near the bracket",
                iterations: 0,
                residual: m1.abs(),
            });
        }
        let o = orbit_near(&orbit, v2)?;
        let m2 = m_of(&o)?;
        orbit = o;
        if bracketed {
            if m2 * m1 < 0.0 {
                (v0, m0) = (v1, m1);
                side = 0;
            } else if side == 1 {
                m0 *= 0.5;
            } else {
                side = 1;
            }
        } else {
            bracketed = m2 * m1 < 0.0;
            (v0, m0) = (v1, m1);
        }
        (v1, m1) = (v2, m2);
        if m2.abs() < 1e-14 {
            break;
        }
    }

    // refit at the touching point in its own frame
    let ws = local_arc(&orbit, ManifoldSide::Stable, precision)?;
    let wu = local_arc(&orbit, ManifoldSide::Unstable, precision)?;
    let fs0 = fit_quadratic(&ws, &frame, params.0, Some(fit_window))?;
    let fu0 = fit_quadratic(&wu, &frame, params.1, Some(fit_window))?;
    let xi = if fu0.c != fs0.c {
        -(fu0.b - fs0.b) / (2.0 * (fu0.c - fs0.c))
    } else {
        0.0
    };
    let touch = frame.origin + frame.e1 * xi + frame.e2 * fu0.eval(xi);
    let touch = project_to_level(touch, orbit.level).unwrap_or(touch);
    let (frame, fs, fu) = fit_pair(&ws, &wu, touch, fs0.param, fu0.param, fit_window * 1e-3)?;
    let mut ev = event_from_fits(
        orbit.level,
        &orbit,
        frame,
        fs,
        fu,
        cfg.delta,
        cfg.angle_tol,
        precision,
    );
    ev.diagnostics.bracket = Some(bracket);
    ev.diagnostics.bisections = steps;

    let (speed, noise) = unfolding_speed(&ev, &orbit, cfg.dv)?;
    ev.unfolding_speed = speed;
    ev.diagnostics.noise_floor = noise;
    ev.diagnostics.dv = cfg.dv;

    // the pair born at tangency sits about sqrt(speed dv / gap) from the touching point
    let spread = (speed.abs() * cfg.dv / ev.quad_gap().max(1e-300)).sqrt();
    let span = 4.0 * spread.max(ev.diagnostics.window);
    let params = (ev.diagnostics.stable_param, ev.diagnostics.unstable_param);
    let count = |s: f64| -> Result<usize> {
        local_crossings(
            &orbit_near(&orbit, orbit.level + s * cfg.dv)?,
            &ev.diagnostics.frame,
            params,
            span,
            precision,
        )
    };
    ev.diagnostics.crossings_below = Some(count(-1.0)?);
    ev.diagnostics.crossings_above = Some(count(1.0)?);
    if ev.quad_gap() <= cfg.delta {
        ev.diagnostics
            .notes
            .push("quadratic gap below threshold".into());
    }
    if ev.crossing_angle >= cfg.angle_tol {
        ev.diagnostics
            .notes
            .push("crossing angle above tolerance".into());
    }
    Ok(ev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{factor_map, invariant, time_reversal, TorusPoint, GOLDEN};
    use crate::periodic::{period_two_at_level, RationalTorusPoint};

    fn p1_orbit() -> PeriodicOrbit {
        find_periodic(0.0, 1, Point3::new(1.0, 1.0, 1.0).unwrap()).unwrap()
    }

    fn rho(v: f64) -> PeriodicOrbit {
        find_periodic(v, 2, period_two_at_level(v).unwrap()).unwrap()
    }

    #[test]
    fn arc_vertices_stay_on_the_level() {
        let po = rho(-0.05);
        for side in [ManifoldSide::Stable, ManifoldSide::Unstable] {
            let arc = grow_manifold(&po, side, 3.0, REFINEMENT_TOL).unwrap();
            assert!(arc.arclength >= 3.0);
            for p in &arc.vertices {
                assert!((invariant(*p) + 0.05).abs() < 1e-10);
            }
            assert!(arc.max_turning_angle() <= REFINEMENT_TOL || arc.unresolved > 0);
            let first = (arc.vertices[1] - arc.vertices[0]).normalized();
            let v = arc.generator().unwrap().direction();
            assert!(first.cross(v).norm() < 1e-6, "{}", first.cross(v).norm());
            assert!(arc.vertices[1].dist(arc.vertices[0]) <= 1e-5);
        }
    }

    #[test]
    fn unstable_arc_of_the_cone_point_shadows_the_cat_map() {
        let arc = grow_manifold(&p1_orbit(), ManifoldSide::Unstable, 1.0, REFINEMENT_TOL).unwrap();
        let e = [GOLDEN / GOLDEN.hypot(1.0), 1.0 / GOLDEN.hypot(1.0)];
        let curve = |s: f64| factor_map(TorusPoint::reduced(s * e[0], s * e[1]));
        // every vertex lies on the image of the unstable line
        let mut s_prev = 0.0;
        let mut covered = 0.0f64;
        for p in arc.vertices.iter().skip(1) {
            // monotone search for the closest parameter
            let mut best = (f64::INFINITY, s_prev);
            let mut s = s_prev;
            while s < s_prev + 0.02 {
                let d = curve(s).dist(*p);
                if d < best.0 {
                    best = (d, s);
                }
                s += 2e-5;
            }
            let (mut a, mut b) = (best.1 - 2e-5, best.1 + 2e-5);
            for _ in 0..100 {
                let (m1, m2) = (a + (b - a) / 3.0, b - (b - a) / 3.0);
                if curve(m1).dist(*p) < curve(m2).dist(*p) {
                    b = m2
                } else {
                    a = m1
                }
            }
            let d = curve(0.5 * (a + b)).dist(*p);
            assert!(d < 1e-6, "vertex {p:?} is {d:.3e} from the line");
            s_prev = 0.5 * (a + b);
            covered = covered.max(s_prev);
        }
        // and the vertices cover the line up to the same arclength
        let mut len = 0.0;
        let steps = 20_000;
        for i in 0..steps {
            len += curve(covered * i as f64 / steps as f64)
                .dist(curve(covered * (i + 1) as f64 / steps as f64));
        }
        assert!(
            (len - arc.arclength).abs() < 1e-3 * arc.arclength,
            "{len} vs {}",
            arc.arclength
        );
    }

    #[test]
    fn domains_expand_by_the_multiplier() {
        let po = rho(-0.05);
        let arc = grow_manifold(&po, ManifoldSide::Unstable, 2.0, REFINEMENT_TOL).unwrap();
        let g = arc.generator().unwrap().growth();
        for k in 1..4 {
            let ratio = arc.domain_length(k) / arc.domain_length(k - 1);
            assert!((ratio / g - 1.0).abs() < 0.1, "domain {k}: {ratio} vs {g}");
        }
    }

    #[test]
    fn arcs_are_invariant() {
        let po = rho(-0.05);
        let arc = grow_manifold(&po, ManifoldSide::Unstable, 2.0, REFINEMENT_TOL).unwrap();
        let g = arc.generator().unwrap();
        for (p, &u) in arc.vertices.iter().zip(&arc.params).skip(1).step_by(7) {
            let mut q = *p;
            for _ in 0..g.steps_per_domain() {
                q = trace_map(q);
            }
            let target = g.point_at(u + 1.0).unwrap();
            assert!(q.dist(target) < 1e-8, "{}", q.dist(target));
        }
    }

    #[test]
    fn time_reversal_swaps_the_sides() {
        let po = rho(-0.05);
        let rev = po.time_reversed();
        let wu = grow_manifold(&po, ManifoldSide::Unstable, 2.0, REFINEMENT_TOL).unwrap();
        let ws = grow_manifold(&rev, ManifoldSide::Stable, 2.0, REFINEMENT_TOL).unwrap();
        assert_eq!(wu.vertices.len(), ws.vertices.len());
        for (a, b) in wu.vertices.iter().zip(&ws.vertices) {
            assert!(time_reversal(*a).dist(*b) < 1e-10);
        }
    }

    #[test]
    fn elliptic_orbits_have_no_manifolds() {
        let po = find_periodic(-1.0, 1, Point3::new(0.0, 0.0, 0.0).unwrap()).unwrap();
        assert!(matches!(
            grow_manifold(&po, ManifoldSide::Unstable, 1.0, 0.02),
            Err(Error::NotHyperbolic(_))
        ));
    }

    #[test]
    fn homoclinic_points_on_the_cubic() {
        let po =
            crate::periodic::seed_from_torus(RationalTorusPoint::new(3, 1, 5).unwrap(), 0.0, 0.01)
                .unwrap();
        let ws = grow_manifold(&po, ManifoldSide::Stable, 4.0, REFINEMENT_TOL).unwrap();
        let wu = grow_manifold(&po, ManifoldSide::Unstable, 4.0, REFINEMENT_TOL).unwrap();
        let xs = find_intersections(&ws, &wu);
        assert!(!xs.is_empty());
        for x in &xs {
            // transversal on the Cayley cubic
            assert!(x.angle > 1e-3);
            assert!(invariant(x.point).abs() < 1e-9);
        }
    }

    #[test]
    fn arc_against_itself_is_empty() {
        let arc = grow_manifold(&rho(-0.05), ManifoldSide::Unstable, 4.0, REFINEMENT_TOL).unwrap();
        assert!(find_intersections(&arc, &arc).is_empty());
    }

    #[test]
    fn unstable_arcs_of_distinct_orbits_do_not_cross() {
        let v = -0.05;
        let a = grow_manifold(&rho(v), ManifoldSide::Unstable, 4.0, REFINEMENT_TOL).unwrap();
        let other =
            crate::periodic::seed_from_torus(RationalTorusPoint::new(1, 3, 7).unwrap(), v, 0.005)
                .unwrap();
        let b = grow_manifold(&other, ManifoldSide::Unstable, 4.0, REFINEMENT_TOL).unwrap();
        assert!(find_intersections(&a, &b).is_empty());
    }

    fn synthetic_pair(c_u: f64, offset: f64) -> (ManifoldArc, ManifoldArc, CommonFrame) {
        let v = -0.3;
        let q = crate::surface::project_to_level(Point3::new(0.2, -0.3, 0.4).unwrap(), v).unwrap();
        let f = crate::surface::tangent_frame(q).unwrap();
        let owner = rho(v);
        let make = move |c: f64, off: f64| -> Arc<dyn Fn(f64) -> Option<Point3> + Send + Sync> {
            Arc::new(move |s: f64| {
                project_to_level(q + f.u1 * s + f.u2 * (off + c * s * s), v).ok()
            })
        };
        let params: Vec<f64> = (-200..=200).map(|i| i as f64 * 1e-3).collect();
        let ws = ManifoldArc::from_curve(
            owner.clone(),
            ManifoldSide::Stable,
            make(0.0, 0.0),
            params.clone(),
        )
        .unwrap();
        let wu = ManifoldArc::from_curve(owner, ManifoldSide::Unstable, make(c_u, offset), params)
            .unwrap();
        let frame = CommonFrame {
            origin: q,
            e1: f.u1,
            e2: f.u2,
            normal: f.normal,
            fallback: false,
        };
        (ws, wu, frame)
    }

    #[test]
    fn synthetic_parabola_against_line() {
        let (ws, wu, _) = synthetic_pair(1.0, 0.0);
        let det = detect_tangencies(&ws, &wu, ANGLE_TOL, 0.5);
        assert_eq!(det.events.len(), 1, "{:?}", det.rejected);
        let ev = &det.events[0];
        assert!((ev.quad_gap() - 1.0).abs() < 1e-3, "{}", ev.quad_gap());
        assert!(ev.separation.abs() < 1e-9);
        assert!(ev.diagnostics.fit_residual < FIT_RESIDUAL);
    }

    #[test]
    fn transversal_crossings_are_not_tangencies() {
        let v = -0.3;
        let q = project_to_level(Point3::new(0.2, -0.3, 0.4).unwrap(), v).unwrap();
        let f = tangent_frame(q).unwrap();
        let owner = rho(v);
        let params: Vec<f64> = (-200..=200).map(|i| i as f64 * 1e-3).collect();
        let line = |dir: Point3| -> Arc<dyn Fn(f64) -> Option<Point3> + Send + Sync> {
            Arc::new(move |s: f64| project_to_level(q + dir * s, v).ok())
        };
        let tilt = f.u1 * 0.3f64.cos() + f.u2 * 0.3f64.sin();
        let ws = ManifoldArc::from_curve(
            owner.clone(),
            ManifoldSide::Stable,
            line(f.u1),
            params.clone(),
        )
        .unwrap();
        let wu =
            ManifoldArc::from_curve(owner, ManifoldSide::Unstable, line(tilt), params).unwrap();
        let xs = find_intersections(&ws, &wu);
        assert_eq!(xs.len(), 1);
        assert!((xs[0].angle - 0.3).abs() < 1e-3);
        assert!(detect_tangencies(&ws, &wu, ANGLE_TOL, CURVATURE_GAP)
            .events
            .is_empty());
    }

    #[test]
    fn separation_sign_matches_crossings() {
        for (offset, crossings) in [(-1e-4, 2), (1e-4, 0)] {
            let (ws, wu, frame) = synthetic_pair(1.0, offset);
            let fs = fit_quadratic(&ws, &frame, 0.0, None).unwrap();
            let fu = fit_quadratic(&wu, &frame, 0.0, None).unwrap();
            let m = separation(&fs, &fu);
            assert_eq!(m > 0.0, crossings == 2);
            assert_eq!(find_intersections(&ws, &wu).len(), crossings);
        }
    }

    #[test]
    fn tangent_graph_examples() {
        let fit = |a, b, c| QuadFit {
            a,
            b,
            c,
            residual: 0.0,
            window: 1.0,
            param: 0.0,
        };
        let g = fit(0.0, 0.0, 0.0);
        let u = fit(0.0, 0.0, 1.0);
        let v = fit(1.0, -2.0, 1.0);
        assert!(tangent_graph_preconditions(&g, &u, &v, 1.0));
        assert!(tangent_graph_intersection_check(&g, &u, &v));
        assert!(tangent_graph_intersection_check(&g, &u, &u));
        // a concave graph tangent from below stays apart, and fails the preconditions
        let concave = fit(-1.0, 2.0, -1.0);
        assert!(!tangent_graph_preconditions(&g, &u, &concave, 1.0));
        assert!(!tangent_graph_intersection_check(&g, &u, &concave));
    }

    #[test]
    fn curvature_grows_near_the_cone_point() {
        // eigen-coordinates at P1: flip axis, stable axis, unstable axis
        let p1 = Point3::raw(1.0, 1.0, 1.0);
        let m = crate::maps::jacobian(p1);
        let g2 = GOLDEN * GOLDEN;
        let axes = [
            eigenvector(&m, -1.0),
            eigenvector(&m, 1.0 / g2),
            eigenvector(&m, g2),
        ];
        let basis = Matrix3::from_columns(&[
            axes[0].to_vector(),
            axes[1].to_vector(),
            axes[2].to_vector(),
        ]);
        let dual = basis.try_inverse().unwrap();
        let coords = |p: Point3| dual * (p - p1).to_vector();
        for v in [0.0, -1e-8] {
            let y0 = 0.05;
            let w = 1e-3;
            // arc across the stable axis at height y0, lifted onto the level along the unstable axis
            let lift = |x: f64| {
                let mut z = 0.0;
                for _ in 0..30 {
                    let p = p1 + axes[0] * x + axes[1] * y0 + axes[2] * z;
                    z -= (invariant(p) - v) / invariant_gradient(p).dot(axes[2]);
                }
                p1 + axes[0] * x + axes[1] * y0 + axes[2] * z
            };
            let mut arc: Vec<Point3> = (-20..=20).map(|i| lift(w * i as f64 / 20.0)).collect();
            let mut curvature = Vec::new();
            for _ in 0..6 {
                let pts: Vec<(f64, f64)> = arc
                    .iter()
                    .map(|p| {
                        let c = coords(*p);
                        (c[0], c[2])
                    })
                    .collect();
                let (coef, _) = poly_fit(&pts, w, 2).unwrap();
                curvature.push(coef[2].abs());
                arc = arc.into_iter().map(trace_map).collect();
            }
            for k in 1..curvature.len() {
                assert!(curvature[k] > curvature[k - 1], "V = {v}: {curvature:?}");
            }
            assert!(curvature[5] > 50.0 * curvature[0]);
        }
    }

    #[test]
    fn hunt_localises_a_quadratic_tangency() {
        let po = rho(-0.01);
        let cfg = HuntConfig {
            grid: 2,
            ..HuntConfig::default()
        };
        let report = tangency_hunt((-0.012, -0.01), &[po], &cfg).unwrap();
        let valid: Vec<&TangencyEvent> = report.events.iter().filter(|e| e.is_valid()).collect();
        assert!(!valid.is_empty(), "{:?}", report.diagnostics);
        for ev in &valid {
            let [lo, hi] = ev.diagnostics.bracket.unwrap();
            assert!(ev.diagnostics.bisections >= 8);
            assert!(hi - lo <= 0.002 / 256.0);
            assert!(ev.separation.abs() < 1e-8);
            assert_eq!(ev.count_change(), Some(2));
            // the orbit is symmetric, so the mirrored tangency is found too
            let mirror = time_reversal(ev.location);
            assert!(
                valid.iter().any(|e| e.location.dist(mirror) < 1e-6),
                "no mirror for {:?}",
                ev.location
            );
        }
    }

    #[test]
    fn hunt_rejects_bad_ranges() {
        let po = rho(-0.01);
        let cfg = HuntConfig::default();
        assert!(tangency_hunt((-0.01, -0.012), std::slice::from_ref(&po), &cfg).is_err());
        assert!(tangency_hunt((-0.1, 0.0), &[po], &cfg).is_err());
    }

    #[test]
    fn capped_growth_stops_at_the_parameter() {
        let options = GrowthOptions {
            max_param: Some(4.5),
            ..GrowthOptions::default()
        };
        let arc = grow_manifold_with(&rho(-0.05), ManifoldSide::Unstable, f64::INFINITY, options)
            .unwrap();
        assert!(arc.params.iter().all(|&u| u <= 4.5));
        assert!(*arc.params.last().unwrap() > 4.4);
    }

    #[test]
    fn extended_precision_agrees() {
        let po = rho(-0.05);
        let std_gen = ArcGenerator::new(&po, ManifoldSide::Unstable, Precision::Standard).unwrap();
        let ext_gen = ArcGenerator::new(&po, ManifoldSide::Unstable, Precision::Extended).unwrap();
        for u in [0.3, 4.7, 9.2] {
            let (a, b) = (std_gen.point_at(u).unwrap(), ext_gen.point_at(u).unwrap());
            assert!(a.dist(b) < 1e-9, "{u}: {}", a.dist(b));
        }
    }
}
