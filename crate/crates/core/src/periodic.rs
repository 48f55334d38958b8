//! Periodic orbits on a level surface: constrained Newton, monodromy
//! spectrum and stability, continuation in V, and seeding from rational
//! points of the cat map.

use nalgebra::{Complex, Matrix2, SMatrix, SVector, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::defaults::{
    CLOSURE_TOL, CONTINUATION_STEP_FLOOR, DOUBLING_OFFSET, NEUTRAL_ALIGNMENT, NEWTON_MAX_CONDITION,
    NEWTON_MAX_ITER, NEWTON_STEP_TOL, PARABOLIC_TOL, SEED_SINGULAR_DISTANCE,
};
use crate::error::{Error, Result};
use crate::maps::{
    factor_map, invariant, invariant_gradient, jacobian, trace_map, Matrix3, Point3, TorusPoint,
};
use crate::surface::{
    project_to_level, singular_distance, solve_z, tangent_frame, Sheet, SINGULAR_GRADIENT,
};

/// Below this gradient norm the chart degenerates and Newton runs in R^3.
const CHART_GRADIENT: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stability {
    Elliptic,
    Hyperbolic,
    ReflectionHyperbolic,
    Parabolic,
}

impl Stability {
    pub fn from_trace(t: f64) -> Self {
        if (t - 2.0).abs() < PARABOLIC_TOL || (t + 2.0).abs() < PARABOLIC_TOL {
            Stability::Parabolic
        } else if t.abs() < 2.0 {
            Stability::Elliptic
        } else if t > 2.0 {
            Stability::Hyperbolic
        } else {
            Stability::ReflectionHyperbolic
        }
    }

    pub fn is_hyperbolic(self) -> bool {
        matches!(
            self,
            Stability::Hyperbolic | Stability::ReflectionHyperbolic
        )
    }
}

#[derive(Debug, Clone)]
pub struct PeriodicOrbit {
    pub level: f64,
    pub period: usize,
    pub points: Vec<Point3>,
    /// Derivative of the period-fold map at `points[0]`.
    pub monodromy: Matrix3,
    /// Trace of the surface eigenvalue pair (of the doubled orbit for odd periods).
    pub residual_trace: f64,
    pub stability: Stability,
    pub newton_residual: f64,
    /// Set when the orbit closes after a proper divisor of `period`.
    pub lower_period: Option<usize>,
}

impl PeriodicOrbit {
    /// Same orbit listed from its point nearest to `q`.
    pub fn rotated_toward(&self, q: Point3) -> PeriodicOrbit {
        let k = (0..self.period)
            .min_by(|&a, &b| self.points[a].dist(q).total_cmp(&self.points[b].dist(q)))
            .unwrap_or(0);
        if k == 0 {
            return self.clone();
        }
        let mut points = self.points.clone();
        points.rotate_left(k);
        let monodromy = orbit_monodromy(&points);
        PeriodicOrbit {
            points,
            monodromy,
            ..self.clone()
        }
    }

    /// Image under the time-reversal involution, listed as an orbit of the forward map.
    pub fn time_reversed(&self) -> PeriodicOrbit {
        let n = self.period;
        let points: Vec<Point3> = (0..n)
            .map(|i| crate::maps::time_reversal(self.points[(n - i) % n]))
            .collect();
        let monodromy = orbit_monodromy(&points);
        PeriodicOrbit {
            points,
            monodromy,
            ..self.clone()
        }
    }

    /// Relative residual of the left-eigenvector identity M^T grad I = grad I.
    pub fn left_eigen_residual(&self) -> f64 {
        let g = invariant_gradient(self.points[0]).to_vector();
        let gn = g.norm();
        if gn == 0.0 {
            return 0.0;
        }
        (self.monodromy.transpose() * g - g).norm() / gn
    }

    pub fn determinant_residual(&self) -> f64 {
        let sign = if self.period.is_multiple_of(2) {
            1.0
        } else {
            -1.0
        };
        (self.monodromy.determinant() - sign).abs()
    }

    pub fn max_closure_error(&self) -> f64 {
        (0..self.period)
            .map(|i| trace_map(self.points[i]).dist(self.points[(i + 1) % self.period]))
            .fold(0.0, f64::max)
    }
}

fn flow(p: Point3, n: usize) -> (Point3, Matrix3) {
    let mut m = Matrix3::identity();
    let mut q = p;
    for _ in 0..n {
        m = jacobian(q) * m;
        q = trace_map(q);
    }
    (q, m)
}

fn orbit_monodromy(points: &[Point3]) -> Matrix3 {
    points
        .iter()
        .fold(Matrix3::identity(), |m, p| jacobian(*p) * m)
}

fn newton_step(p: Point3, v: f64, period: usize) -> Result<(Point3, f64)> {
    let (q, m) = flow(p, period);
    let r = q - p;
    let g = invariant_gradient(p);
    let residual = r.norm() + (invariant(p) - v).abs();
    let a = m - Matrix3::identity();
    if g.norm() > CHART_GRADIENT && v > -1.0 {
        let f = tangent_frame(p)?;
        let basis = [f.u1.to_vector(), f.u2.to_vector()];
        let mut j = Matrix2::zeros();
        for row in 0..2 {
            for col in 0..2 {
                j[(row, col)] = basis[row].dot(&(a * basis[col]));
            }
        }
        let sv = j.singular_values();
        let cond = sv.max() / sv.min();
        if !(cond <= NEWTON_MAX_CONDITION) {
            return Err(Error::SingularJacobian(cond));
        }
        let rhs = Vector2::new(-r.dot(f.u1), -r.dot(f.u2));
        let d = j
            .lu()
            .solve(&rhs)
            .ok_or(Error::SingularJacobian(f64::INFINITY))?;
        Ok((f.u1 * d[0] + f.u2 * d[1], residual))
    } else {
        let mut b = SMatrix::<f64, 4, 3>::zeros();
        b.fixed_view_mut::<3, 3>(0, 0).copy_from(&a);
        b[(3, 0)] = g.x;
        b[(3, 1)] = g.y;
        b[(3, 2)] = g.z;
        let rhs = SVector::<f64, 4>::new(-r.x, -r.y, -r.z, -(invariant(p) - v));
        let svd = b.svd(true, true);
        let cond = svd.singular_values.max() / svd.singular_values.min();
        if !(cond <= NEWTON_MAX_CONDITION) {
            return Err(Error::SingularJacobian(cond));
        }
        let d = svd
            .solve(&rhs, 0.0)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok((Point3::from_vector(&d), residual))
    }
}

fn settle(p: Point3, v: f64) -> Point3 {
    // the level V = -1 is a single point, where projection is ill-posed
    if invariant_gradient(p).norm() > CHART_GRADIENT && v > -1.0 {
        project_to_level(p, v).unwrap_or(p)
    } else {
        p
    }
}

/// Periodic orbit of the given period near `guess` on the level `v`.
pub fn find_periodic(v: f64, period: usize, guess: Point3) -> Result<PeriodicOrbit> {
    if period == 0 {
        return Err(Error::InvalidArgument("period must be positive".into()));
    }
    if !guess.is_finite() || !v.is_finite() {
        return Err(Error::NonFinite("periodic guess"));
    }
    let mut p = settle(guess, v);
    let mut last_residual = f64::INFINITY;
    let mut increases = 0;
    let mut damping = 1.0;
    let mut converged = false;
    let mut residual = f64::INFINITY;
    for _ in 0..NEWTON_MAX_ITER {
        let (step, r) = newton_step(p, v, period)?;
        residual = r;
        if r > last_residual {
            increases += 1;
            if increases >= 2 {
                damping = 0.5;
            }
        } else {
            increases = 0;
        }
        last_residual = r;
        let step = step * damping;
        if !(step.norm() < 1.0) {
            // runaway step; the guess is outside the basin
            return Err(Error::NoConvergence {
                what: "periodic Newton",
                iterations: 0,
                residual: r,
            });
        }
        p = settle(p + step, v);
        if step.norm() < NEWTON_STEP_TOL {
            converged = true;
            break;
        }
    }
    let (q, _) = flow(p, period);
    let closure = q.dist(p);
    if !converged && closure >= CLOSURE_TOL {
        return Err(Error::NoConvergence {
            what: "periodic Newton",
            iterations: NEWTON_MAX_ITER,
            residual,
        });
    }
    if closure >= CLOSURE_TOL || (invariant(p) - v).abs() > 1e-10 {
        return Err(Error::NoConvergence {
            what: "periodic Newton",
            iterations: NEWTON_MAX_ITER,
            residual: closure,
        });
    }
    build_orbit(v, period, p)
}

fn build_orbit(v: f64, period: usize, p: Point3) -> Result<PeriodicOrbit> {
    let mut points = Vec::with_capacity(period);
    let mut q = p;
    for _ in 0..period {
        points.push(q);
        q = trace_map(q);
    }
    let newton_residual = q.dist(p);
    let lower_period = (1..period)
        .filter(|&d| period.is_multiple_of(d))
        .find(|&d| points[d].dist(p) < 1e-8);
    let monodromy = orbit_monodromy(&points);
    let mut orbit = PeriodicOrbit {
        level: v,
        period,
        points,
        monodromy,
        residual_trace: f64::NAN,
        stability: Stability::Parabolic,
        newton_residual,
        lower_period,
    };
    let report = classify_stability(&orbit)?;
    orbit.residual_trace = report.trace;
    orbit.stability = report.class;
    Ok(orbit)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeutralEigen {
    pub value: f64,
    pub left_vector: Point3,
    /// |cos| between the left eigenvector and the invariant gradient; NaN at cone points.
    pub alignment: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonodromySpectrum {
    pub neutral: NeutralEigen,
    pub surface_pair: [Complex<f64>; 2],
    /// The orbit sits on a cone point, where the neutral direction is not the gradient.
    pub singular: bool,
}

fn left_null_vector(m: &Matrix3, lambda: f64) -> Point3 {
    let a = m.transpose() - Matrix3::identity() * lambda;
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let imin = svd.singular_values.imin();
    Point3::from_vector(&v_t.row(imin).transpose())
}

pub fn spectrum_of(m: &Matrix3, gradient: Point3) -> Result<MonodromySpectrum> {
    let eig = m.complex_eigenvalues();
    let eig = [eig[0], eig[1], eig[2]];
    let scale = eig.iter().map(|c| c.norm()).fold(1.0, f64::max);
    let real: Vec<usize> = (0..3)
        .filter(|&i| eig[i].im.abs() <= 1e-9 * scale)
        .collect();
    let gn = gradient.norm();
    let singular = gn <= SINGULAR_GRADIENT;
    let pick = if singular {
        real.iter().copied().min_by(|&a, &b| {
            (eig[a].re.abs() - 1.0)
                .abs()
                .total_cmp(&(eig[b].re.abs() - 1.0).abs())
        })
    } else {
        let aligned: Vec<(usize, f64)> = real
            .iter()
            .map(|&i| {
                let w = left_null_vector(m, eig[i].re);
                (i, w.dot(gradient).abs() / (w.norm() * gn))
            })
            .filter(|&(_, a)| a > NEUTRAL_ALIGNMENT)
            .collect();
        let near_one: Vec<&(usize, f64)> = aligned
            .iter()
            .filter(|(i, _)| (eig[*i].re - 1.0).abs() < 1e-6)
            .collect();
        if near_one.len() >= 2 {
            return Err(Error::AmbiguousNeutral);
        }
        aligned
            .iter()
            .map(|&(i, _)| i)
            .min_by(|&a, &b| (eig[a].re - 1.0).abs().total_cmp(&(eig[b].re - 1.0).abs()))
            .or_else(|| {
                real.iter()
                    .copied()
                    .min_by(|&a, &b| (eig[a].re - 1.0).abs().total_cmp(&(eig[b].re - 1.0).abs()))
            })
    };
    let k = pick.ok_or(Error::AmbiguousNeutral)?;
    let value = eig[k].re;
    let left_vector = left_null_vector(m, value);
    let alignment = if singular {
        f64::NAN
    } else {
        left_vector.dot(gradient).abs() / (left_vector.norm() * gn)
    };
    let others: Vec<Complex<f64>> = (0..3).filter(|&i| i != k).map(|i| eig[i]).collect();
    Ok(MonodromySpectrum {
        neutral: NeutralEigen {
            value,
            left_vector,
            alignment,
        },
        surface_pair: [others[0], others[1]],
        singular,
    })
}

pub fn monodromy_spectrum(po: &PeriodicOrbit) -> Result<MonodromySpectrum> {
    spectrum_of(&po.monodromy, invariant_gradient(po.points[0]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport {
    pub class: Stability,
    /// Surface-pair trace of the monodromy, doubled for odd periods.
    pub trace: f64,
    /// Surface pair of the undoubled monodromy.
    pub raw_pair: [Complex<f64>; 2],
    pub doubled: bool,
}

pub fn classify_stability(po: &PeriodicOrbit) -> Result<StabilityReport> {
    let g = invariant_gradient(po.points[0]);
    let raw = spectrum_of(&po.monodromy, g)?;
    let doubled = po.period % 2 == 1;
    let (m, spec) = if doubled {
        let m2 = po.monodromy * po.monodromy;
        let s2 = spectrum_of(&m2, g)?;
        (m2, s2)
    } else {
        (po.monodromy, raw)
    };
    // trace minus neutral eigenvalue is better conditioned than summing the pair
    let trace = m.trace() - spec.neutral.value;
    Ok(StabilityReport {
        class: Stability::from_trace(trace),
        trace,
        raw_pair: raw.surface_pair,
        doubled,
    })
}

pub fn period_two_curve(x: f64) -> Result<Point3> {
    if (x - 0.5).abs() < 1e-12 {
        return Err(Error::PoleAtHalf);
    }
    Point3::new(x, x / (2.0 * x - 1.0), x)
}

/// Point of the period-two curve on the level `v`, on the arc joining the
/// origin (V = -1) to the Cayley cubic.
pub fn period_two_at_level(v: f64) -> Result<Point3> {
    if !(-1.0..=0.0).contains(&v) {
        return Err(Error::InvalidArgument(format!(
            "period-two arc covers -1 <= V <= 0, got {v}"
        )));
    }
    let level = |x: f64| invariant(Point3::raw(x, x / (2.0 * x - 1.0), x));
    let (mut lo, mut hi) = (0.0f64, (std::f64::consts::TAU / 5.0).cos());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if level(mid) < v {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    period_two_curve(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    EllipticTransition,
    PeriodDoubling,
    Fold,
    LostConvergence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchEvent {
    #[serde(rename = "V")]
    pub level: f64,
    pub kind: EventKind,
    pub v_before: f64,
    pub v_after: f64,
    pub trace_before: f64,
    pub trace_after: f64,
}

#[derive(Debug, Clone)]
pub struct ContinuationBranch {
    pub orbits: Vec<PeriodicOrbit>,
    pub events: Vec<BranchEvent>,
}

impl ContinuationBranch {
    pub fn last(&self) -> &PeriodicOrbit {
        self.orbits.last().expect("branch holds its starting orbit")
    }

    pub fn reached(&self, v: f64) -> bool {
        self.last().level == v
    }
}

/// Corrector at `v` from a guess, insisting on the same minimal period and a nearby point.
fn correct(v: f64, period: usize, guess: Point3, max_jump: f64) -> Option<PeriodicOrbit> {
    let o = find_periodic(v, period, guess).ok()?;
    if o.lower_period.is_some() {
        return None;
    }
    let o = o.rotated_toward(guess);
    (o.points[0].dist(guess) <= max_jump).then_some(o)
}

fn predict(orbits: &[PeriodicOrbit], v: f64) -> Point3 {
    let n = orbits.len();
    let last = &orbits[n - 1];
    if n < 2 {
        return last.points[0];
    }
    let prev = &orbits[n - 2];
    let dv = last.level - prev.level;
    if dv == 0.0 {
        return last.points[0];
    }
    let slope = (last.points[0] - prev.points[0]) * (1.0 / dv);
    last.points[0] + slope * (v - last.level)
}

fn jump_bound(h: f64) -> f64 {
    (20.0 * h.sqrt()).clamp(1e-3, 0.1)
}

/// Bisect the V-interval between two branch orbits for the crossing of `target` by the trace.
fn locate_crossing(
    a: &PeriodicOrbit,
    b: &PeriodicOrbit,
    target: f64,
) -> (PeriodicOrbit, PeriodicOrbit) {
    let (mut lo, mut hi) = (a.clone(), b.clone());
    for _ in 0..60 {
        let vm = 0.5 * (lo.level + hi.level);
        if vm == lo.level || vm == hi.level {
            break;
        }
        let guess = lo.points[0] + (hi.points[0] - lo.points[0]) * 0.5;
        let Some(mid) = correct(vm, a.period, guess, jump_bound((hi.level - lo.level).abs()))
        else {
            break;
        };
        if (mid.residual_trace - target).signum() == (lo.residual_trace - target).signum() {
            lo = mid;
        } else {
            hi = mid;
        }
        if (lo.residual_trace - target).abs() < 1e-11 || (hi.residual_trace - target).abs() < 1e-11
        {
            break;
        }
    }
    (lo, hi)
}

fn doubled_branch_nearby(at: &PeriodicOrbit) -> bool {
    let m = at.monodromy;
    let eig = m.complex_eigenvalues();
    // eigenvector of the eigenvalue nearest -1
    let k = (0..3)
        .min_by(|&a, &b| (eig[a] + 1.0).norm().total_cmp(&(eig[b] + 1.0).norm()))
        .unwrap_or(0);
    let lambda = eig[k].re;
    let a = m - Matrix3::identity() * lambda;
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let dir = Point3::from_vector(&v_t.row(svd.singular_values.imin()).transpose());
    let p = at.points[0];
    for eps in [DOUBLING_OFFSET, 1e-3, 1e-2] {
        for sign in [1.0, -1.0] {
            if let Ok(o) = find_periodic(at.level, 2 * at.period, p + dir * (sign * eps)) {
                if o.lower_period.is_none() && o.points.iter().any(|q| q.dist(p) < 0.2) {
                    return true;
                }
            }
        }
    }
    false
}

fn crossing_events(a: &PeriodicOrbit, b: &PeriodicOrbit, events: &mut Vec<BranchEvent>) {
    for target in [-2.0, 2.0] {
        if (a.residual_trace - target) * (b.residual_trace - target) < 0.0 {
            let (lo, hi) = locate_crossing(a, b, target);
            let at = if (lo.residual_trace - target).abs() <= (hi.residual_trace - target).abs() {
                &lo
            } else {
                &hi
            };
            let event = |kind| BranchEvent {
                level: at.level,
                kind,
                v_before: lo.level,
                v_after: hi.level,
                trace_before: lo.residual_trace,
                trace_after: hi.residual_trace,
            };
            events.push(event(EventKind::EllipticTransition));
            if target < 0.0 {
                let side = if hi.residual_trace < -2.0 { &hi } else { &lo };
                if doubled_branch_nearby(side) || doubled_branch_nearby(at) {
                    events.push(event(EventKind::PeriodDoubling));
                }
            }
        }
    }
}

/// Predictor-corrector continuation from `po` to `v_target`.
pub fn continue_in_v(
    po: &PeriodicOrbit,
    v_target: f64,
    max_step: f64,
) -> Result<ContinuationBranch> {
    if !(max_step > 0.0) {
        return Err(Error::InvalidArgument("max_step must be positive".into()));
    }
    if !(v_target > -1.0 && v_target <= 0.0) || !(po.level > -1.0 && po.level <= 0.0) {
        return Err(Error::InvalidArgument(
            "continuation path must lie in (-1, 0]".into(),
        ));
    }
    let mut branch = ContinuationBranch {
        orbits: vec![po.clone()],
        events: Vec::new(),
    };
    let dir = (v_target - po.level).signum();
    let mut step = max_step;
    while branch.last().level != v_target {
        let current = branch.last().level;
        let h = step.min((v_target - current).abs());
        let v_new = if h == (v_target - current).abs() {
            v_target
        } else {
            current + dir * h
        };
        let guess = predict(&branch.orbits, v_new);
        match correct(v_new, po.period, guess, jump_bound(h)) {
            Some(o) => {
                let prev = branch.last().clone();
                crossing_events(&prev, &o, &mut branch.events);
                branch.orbits.push(o);
                step = (step * 2.0).min(max_step);
            }
            None => {
                step *= 0.5;
                if step < CONTINUATION_STEP_FLOOR {
                    let last = branch.last();
                    let kind = if (last.residual_trace - 2.0).abs() < 0.5 {
                        EventKind::Fold
                    } else {
                        EventKind::LostConvergence
                    };
                    branch.events.push(BranchEvent {
                        level: last.level,
                        kind,
                        v_before: last.level,
                        v_after: last.level + dir * step * 2.0,
                        trace_before: last.residual_trace,
                        trace_after: f64::NAN,
                    });
                    break;
                }
            }
        }
    }
    Ok(branch)
}

/// Rational torus point (num_theta / den, num_phi / den).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RationalTorusPoint {
    pub num_theta: i64,
    pub num_phi: i64,
    pub den: i64,
}

impl RationalTorusPoint {
    pub fn new(num_theta: i64, num_phi: i64, den: i64) -> Result<Self> {
        if den <= 0 {
            return Err(Error::InvalidArgument(
                "denominator must be positive".into(),
            ));
        }
        Ok(Self {
            num_theta: num_theta.rem_euclid(den),
            num_phi: num_phi.rem_euclid(den),
            den,
        })
    }

    pub fn step(self) -> Self {
        Self {
            num_theta: (self.num_theta + self.num_phi).rem_euclid(self.den),
            num_phi: self.num_theta,
            den: self.den,
        }
    }

    pub fn negated(self) -> Self {
        Self {
            num_theta: (-self.num_theta).rem_euclid(self.den),
            num_phi: (-self.num_phi).rem_euclid(self.den),
            den: self.den,
        }
    }

    pub fn to_torus(self) -> TorusPoint {
        TorusPoint::reduced(
            self.num_theta as f64 / self.den as f64,
            self.num_phi as f64 / self.den as f64,
        )
    }

    /// Period under the cat map, by exact arithmetic mod `den`.
    pub fn anosov_period(self) -> usize {
        let mut q = self.step();
        let mut k = 1;
        while q != self {
            q = q.step();
            k += 1;
        }
        k
    }

    /// Period of the image orbit under the factor map, which identifies t with -t.
    pub fn trace_period(self) -> usize {
        let neg = self.negated();
        let mut q = self.step();
        let mut k = 1;
        while q != self && q != neg {
            q = q.step();
            k += 1;
        }
        k
    }
}

/// Lift a rational cat-map orbit to the Cayley cubic, polish it, and continue it to `v`.
pub fn seed_from_torus(t: RationalTorusPoint, v: f64, max_step: f64) -> Result<PeriodicOrbit> {
    let t = RationalTorusPoint::new(t.num_theta, t.num_phi, t.den)?;
    if t.num_theta == 0 && t.num_phi == 0 {
        // the lift of the cat map's fixed point is the cone point P1, which exists only on V = 0
        if v == 0.0 {
            return find_periodic(0.0, 1, factor_map(t.to_torus()));
        }
        return Err(Error::NearSingularSeed { distance: 0.0 });
    }
    let mut q = t;
    let mut closest = f64::INFINITY;
    for _ in 0..t.anosov_period() {
        closest = closest.min(singular_distance(factor_map(q.to_torus())));
        q = q.step();
    }
    if closest < SEED_SINGULAR_DISTANCE {
        return Err(Error::NearSingularSeed { distance: closest });
    }
    let period = t.trace_period();
    let start = factor_map(t.to_torus());
    let polished = find_periodic(0.0, period, start)?.rotated_toward(start);
    if v == 0.0 {
        return Ok(polished);
    }
    let branch = continue_in_v(&polished, v, max_step)?;
    if branch.reached(v) {
        Ok(branch.last().clone())
    } else {
        Err(Error::BranchLost(branch.last().level))
    }
}

/// Every distinct periodic orbit of minimal period up to `max_period` found by
/// Newton from a `grid` x `grid` lattice of seeds on both sheets.
pub fn periodic_census(v: f64, max_period: usize, grid: usize) -> Vec<PeriodicOrbit> {
    let mut seeds = Vec::new();
    for i in 0..grid {
        for j in 0..grid {
            let x = -1.0 + (i as f64 + 0.5) * 2.0 / grid as f64;
            let y = -1.0 + (j as f64 + 0.5) * 2.0 / grid as f64;
            let roots = solve_z(x, y, v);
            for sheet in [Sheet::Upper, Sheet::Lower] {
                if let Some(z) = roots.on_sheet(sheet) {
                    seeds.push(Point3::raw(x, y, z));
                }
            }
        }
    }
    let mut found: Vec<PeriodicOrbit> = Vec::new();
    for period in 1..=max_period {
        let hits: Vec<PeriodicOrbit> = seeds
            .par_iter()
            .filter_map(|&s| find_periodic(v, period, s).ok())
            .filter(|o| o.lower_period.is_none())
            .collect();
        for o in hits {
            let duplicate = found.iter().any(|f| {
                f.period == o.period && f.points.iter().any(|p| p.dist(o.points[0]) < 1e-7)
            });
            if !duplicate {
                found.push(o);
            }
        }
    }
    found
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::GOLDEN;
    use proptest::prelude::*;

    fn p(x: f64, y: f64, z: f64) -> Point3 {
        Point3::new(x, y, z).unwrap()
    }

    #[test]
    fn fixed_point_on_the_cayley_cubic() {
        let o = find_periodic(0.0, 1, p(0.9, 0.9, 0.9)).unwrap();
        assert!(o.points[0].dist(p(1.0, 1.0, 1.0)) < 1e-12);
        // cone point: DT has eigenvalues -1, golden^2, golden^-2
        let report = classify_stability(&o).unwrap();
        assert_eq!(report.class, Stability::Hyperbolic);
        assert!((report.trace - (GOLDEN.powi(4) + GOLDEN.powi(-4))).abs() < 1e-9);
        assert!((report.trace - 7.0).abs() < 1e-9);
        let s = monodromy_spectrum(&o).unwrap();
        assert!(s.singular);
        assert!((s.neutral.value + 1.0).abs() < 1e-12);
    }

    #[test]
    fn origin_is_elliptic() {
        let o = find_periodic(-1.0, 1, p(0.01, -0.02, 0.01)).unwrap();
        assert!(o.points[0].norm() < 1e-12);
        assert_eq!(o.stability, Stability::Elliptic);
        let report = classify_stability(&o).unwrap();
        assert!(report.doubled);
        // doubled pair: squares of the non-real cube roots of -1
        assert!((report.trace + 1.0).abs() < 1e-9);
        for c in report.raw_pair {
            assert!((c.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn period_two_curve_examples() {
        assert_eq!(period_two_curve(1.0).unwrap(), p(1.0, 1.0, 1.0));
        let r = period_two_curve(0.8).unwrap();
        assert!(r.dist(p(0.8, 4.0 / 3.0, 0.8)) < 1e-15);
        assert!(trace_map(trace_map(r)).dist(r) < 1e-14);
        assert!(matches!(period_two_curve(0.5), Err(Error::PoleAtHalf)));
        for x in [-3.0, 0.1, 0.3, 0.7, 2.0] {
            let r = period_two_curve(x).unwrap();
            assert_eq!(r.x, r.z);
        }
    }

    #[test]
    fn recovers_the_period_two_point() {
        let r = period_two_curve(0.8).unwrap();
        let v = invariant(r);
        let o = find_periodic(v, 2, r + p(7e-4, -5e-4, 6e-4))
            .unwrap()
            .rotated_toward(r);
        assert!(o.points[0].dist(r) < 1e-10, "{:?}", o.points[0]);
        assert!(o.lower_period.is_none());
    }

    #[test]
    fn period_two_arc_spans_the_compact_levels() {
        for v in [-0.9, -0.5, -0.1] {
            let r = period_two_at_level(v).unwrap();
            assert!((invariant(r) - v).abs() < 1e-12);
            assert!(r.max_abs() <= 1.0);
        }
    }

    #[test]
    fn lifted_orbits_have_golden_multipliers() {
        for (a, b, q) in [(2, 1, 5), (1, 3, 7), (1, 2, 9)] {
            let t = RationalTorusPoint::new(a, b, q).unwrap();
            let o = seed_from_torus(t, 0.0, 0.01).unwrap();
            let s = monodromy_spectrum(&o).unwrap();
            let mut mags: Vec<f64> = s.surface_pair.iter().map(|c| c.norm()).collect();
            mags.sort_by(f64::total_cmp);
            let n = o.period as i32;
            assert!(
                (mags[1] / GOLDEN.powi(n) - 1.0).abs() < 0.01,
                "{mags:?} period {n}"
            );
            assert!((mags[0] / GOLDEN.powi(-n) - 1.0).abs() < 0.01);
            assert!(o.max_closure_error() < 1e-10);
            assert!(o.left_eigen_residual() < 1e-8);
        }
    }

    #[test]
    fn torus_seed_examples() {
        let o = seed_from_torus(RationalTorusPoint::new(0, 0, 1).unwrap(), 0.0, 0.01).unwrap();
        assert_eq!(o.period, 1);
        assert!(o.points[0].dist(p(1.0, 1.0, 1.0)) < 1e-14);
        let t = RationalTorusPoint::new(2, 1, 5).unwrap();
        assert_eq!(20 % t.anosov_period(), 0);
        let o = seed_from_torus(t, 0.0, 0.01).unwrap();
        assert!(o.newton_residual < 1e-10);
        assert!(matches!(
            seed_from_torus(RationalTorusPoint::new(1, 0, 2).unwrap(), 0.0, 0.01),
            Err(Error::NearSingularSeed { .. })
        ));
    }

    #[test]
    fn rational_periods() {
        let t = RationalTorusPoint::new(3, 1, 5).unwrap();
        assert_eq!(t.trace_period(), 2);
        let t = RationalTorusPoint::new(1, 0, 2).unwrap();
        assert_eq!(t.anosov_period(), 3);
    }

    #[test]
    fn continuation_to_same_level_is_identity() {
        let o = find_periodic(-0.3, 2, period_two_at_level(-0.3).unwrap()).unwrap();
        let b = continue_in_v(&o, -0.3, 0.01).unwrap();
        assert_eq!(b.orbits.len(), 1);
        assert_eq!(b.last().points, o.points);
        assert!(b.events.is_empty());
    }

    #[test]
    fn lifted_orbit_stays_hyperbolic_near_zero() {
        // the cone point itself does not continue; use the lift of a period-two orbit instead
        let o = seed_from_torus(RationalTorusPoint::new(3, 1, 5).unwrap(), 0.0, 0.01).unwrap();
        let b = continue_in_v(&o, -0.05, 0.005).unwrap();
        assert!(b.reached(-0.05));
        assert!(b.orbits.iter().all(|o| o.stability.is_hyperbolic()));
        let mut levels: Vec<f64> = b.orbits.iter().map(|o| o.level).collect();
        assert!(levels.windows(2).all(|w| w[1] < w[0]));
        levels.dedup();
        assert_eq!(levels.len(), b.orbits.len());
    }

    #[test]
    fn period_two_branch_turns_elliptic_and_doubles() {
        let start = find_periodic(-0.3, 2, period_two_at_level(-0.3).unwrap()).unwrap();
        assert_eq!(start.stability, Stability::ReflectionHyperbolic);
        let b = continue_in_v(&start, -0.8, 0.02).unwrap();
        assert!(b.reached(-0.8));
        assert_eq!(b.last().stability, Stability::Elliptic);
        let transition = b
            .events
            .iter()
            .find(|e| e.kind == EventKind::EllipticTransition)
            .unwrap();
        assert!((transition.trace_before + 2.0) * (transition.trace_after + 2.0) <= 0.0);
        assert!(b.events.iter().any(|e| e.kind == EventKind::PeriodDoubling));
        // the located event is parabolic
        let at = find_periodic(
            transition.level,
            2,
            period_two_at_level(transition.level).unwrap(),
        )
        .unwrap();
        assert_eq!(
            at.stability,
            Stability::Parabolic,
            "trace {}",
            at.residual_trace
        );
    }

    #[test]
    fn stability_is_rotation_and_reversal_invariant() {
        let o = seed_from_torus(RationalTorusPoint::new(1, 3, 7).unwrap(), -0.02, 0.005).unwrap();
        let traces: Vec<f64> = (0..o.period)
            .map(|k| {
                let mut pts = o.points.clone();
                pts.rotate_left(k);
                let r = PeriodicOrbit {
                    monodromy: orbit_monodromy(&pts),
                    points: pts,
                    ..o.clone()
                };
                classify_stability(&r).unwrap().trace
            })
            .collect();
        for t in &traces {
            assert!((t - traces[0]).abs() < 1e-8 * traces[0].abs().max(1.0));
        }
        let rev = o.time_reversed();
        assert!(rev.max_closure_error() < 1e-10);
        assert_eq!(classify_stability(&rev).unwrap().class, o.stability);
    }

    #[test]
    fn census_finds_only_minimal_periods() {
        let found = periodic_census(-0.5, 2, 24);
        assert!(!found.is_empty());
        for o in &found {
            assert!(o.lower_period.is_none());
            assert!(o.left_eigen_residual() < 1e-8);
            assert!(o.determinant_residual() < 1e-8);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn period_two_closed_form(x in -3.0f64..3.0) {
            prop_assume!((x - 0.5).abs() > 1e-3);
            let r = period_two_curve(x).unwrap();
            let back = trace_map(trace_map(r));
            prop_assert!(back.dist(r) < 1e-12 * (1.0 + r.max_abs().powi(2)));
        }

        #[test]
        fn found_orbits_satisfy_monodromy_identities(v in -0.9f64..-0.05, dx in -1e-3f64..1e-3) {
            let r = period_two_at_level(v).unwrap();
            let o = find_periodic(v, 2, r + Point3::raw(dx, 0.0, -dx)).unwrap();
            prop_assert!(o.left_eigen_residual() < 1e-8);
            prop_assert!(o.determinant_residual() < 1e-8);
            let s = monodromy_spectrum(&o).unwrap();
            let prod = s.surface_pair[0] * s.surface_pair[1];
            prop_assert!((prod.re - 1.0).abs() < 1e-8 && prod.im.abs() < 1e-8);
            prop_assert!(s.neutral.alignment > NEUTRAL_ALIGNMENT);
        }
    }
}
