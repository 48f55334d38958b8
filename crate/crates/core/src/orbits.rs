//! Drift-corrected iteration on a level surface, Lyapunov exponents from
//! tangent dynamics, chaos-grid classification and Poincaré point clouds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::defaults::{DOMAIN_BOX, ESCAPE_BOX, MAX_STORED_DRIFT};
use crate::error::{Error, Result};
use crate::maps::{
    invariant, invariant_gradient, jacobian_apply, jacobian_inverse_apply, standard_map,
    standard_map_jacobian, trace_map, trace_map_inverse, Point3, TorusPoint,
};
use crate::surface::{project_to_level, solve_z, tangent_frame, Sheet, SINGULAR_GRADIENT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeDirection {
    Forward,
    Backward,
}

impl TimeDirection {
    #[inline]
    fn step(self, p: Point3) -> Point3 {
        match self {
            TimeDirection::Forward => trace_map(p),
            TimeDirection::Backward => trace_map_inverse(p),
        }
    }

    #[inline]
    fn push(self, p: Point3, v: Point3) -> Point3 {
        match self {
            TimeDirection::Forward => jacobian_apply(p, v),
            TimeDirection::Backward => jacobian_inverse_apply(p, v),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Orbit {
    #[serde(rename = "V")]
    pub level: f64,
    pub seed: Point3,
    /// The seed followed by its iterates.
    pub points: Vec<Point3>,
    pub reprojection_interval: usize,
    /// Largest |I - V| observed just before a reprojection.
    pub max_drift: f64,
    pub escaped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DriftSummary {
    pub max_drift: f64,
    /// Largest |I - V| among the points handed to the visitor.
    pub max_stored_drift: f64,
    pub escaped: bool,
}

fn check_seed(seed: Point3, v: f64) -> Result<()> {
    if !seed.is_finite() || !v.is_finite() {
        return Err(Error::NonFinite("orbit seed"));
    }
    let off = (invariant(seed) - v).abs();
    if off >= 1e-6 {
        return Err(Error::InvalidArgument(format!(
            "seed is {off:.3e} off the level V = {v}"
        )));
    }
    Ok(())
}

fn reproject(p: Point3, v: f64) -> Result<Point3> {
    match project_to_level(p, v) {
        Ok(q) => Ok(q),
        // At a cone point the iterate is already as close as it can get.
        Err(Error::SingularGradient(..)) if (invariant(p) - v).abs() <= MAX_STORED_DRIFT => Ok(p),
        Err(e) => Err(e),
    }
}

/// Stream `n` iterates of `seed` to `visit`, reprojecting every `interval` steps.
pub fn iterate_with(
    seed: Point3,
    v: f64,
    n: usize,
    interval: usize,
    direction: TimeDirection,
    mut visit: impl FnMut(usize, Point3),
) -> Result<DriftSummary> {
    check_seed(seed, v)?;
    if n == 0 || interval == 0 {
        return Err(Error::InvalidArgument(
            "n and reprojection interval must be positive".into(),
        ));
    }
    let mut summary = DriftSummary::default();
    let mut p = seed;
    for step in 1..=n {
        p = direction.step(p);
        if step % interval == 0 {
            summary.max_drift = summary.max_drift.max((invariant(p) - v).abs());
            p = reproject(p, v)?;
        }
        let m = p.max_abs();
        if !(m <= DOMAIN_BOX) {
            return Err(Error::EscapedDomain { step });
        }
        if m > ESCAPE_BOX {
            summary.escaped = true;
        }
        summary.max_stored_drift = summary.max_stored_drift.max((invariant(p) - v).abs());
        visit(step, p);
    }
    Ok(summary)
}

pub fn iterate(seed: Point3, v: f64, n: usize, reprojection_interval: usize) -> Result<Orbit> {
    let mut points = Vec::with_capacity(n + 1);
    points.push(seed);
    let summary = iterate_with(
        seed,
        v,
        n,
        reprojection_interval,
        TimeDirection::Forward,
        |_, p| points.push(p),
    )?;
    Ok(Orbit {
        level: v,
        seed,
        points,
        reprojection_interval,
        max_drift: summary.max_drift,
        escaped: summary.escaped,
    })
}

/// Largest Lyapunov exponent of the surface restriction, per iterate.
pub fn lyapunov_exponent(seed: Point3, v: f64, n: usize) -> Result<f64> {
    lyapunov_exponent_in(seed, v, n, TimeDirection::Forward)
}

pub fn lyapunov_exponent_in(
    seed: Point3,
    v: f64,
    n: usize,
    direction: TimeDirection,
) -> Result<f64> {
    check_seed(seed, v)?;
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let interval = crate::defaults::REPROJECTION_INTERVAL;
    let mut u = match tangent_frame(seed) {
        Ok(f) => f.u1,
        Err(_) => Point3::raw(1.0, 0.0, 0.0),
    };
    let mut p = seed;
    let mut sum = 0.0;
    for step in 1..=n {
        let mut w = direction.push(p, u);
        p = direction.step(p);
        if step % interval == 0 {
            p = reproject(p, v)?;
        }
        if !(p.max_abs() <= DOMAIN_BOX) {
            return Err(Error::EscapedDomain { step });
        }
        let g = invariant_gradient(p);
        let gg = g.dot(g);
        if gg > SINGULAR_GRADIENT * SINGULAR_GRADIENT {
            w = w - g * (w.dot(g) / gg);
        }
        let norm = w.norm();
        sum += norm.ln();
        u = w * (1.0 / norm);
    }
    Ok(sum / n as f64)
}

/// Largest Lyapunov exponent of the standard map, per iterate.
pub fn stdmap_lyapunov(seed: TorusPoint, k: f64, n: usize) -> f64 {
    let mut q = seed;
    let (mut a, mut b) = (1.0, 0.0);
    let mut sum = 0.0;
    for _ in 0..n {
        let j = standard_map_jacobian(q, k);
        let na = j[0][0] * a + j[0][1] * b;
        let nb = j[1][0] * a + j[1][1] * b;
        let norm = (na * na + nb * nb).sqrt();
        sum += norm.ln();
        a = na / norm;
        b = nb / norm;
        q = standard_map(q, k);
    }
    sum / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellClass {
    Chaotic,
    Regular,
    Escaped,
    OffSurface,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChaosCell {
    pub lyapunov: Option<f64>,
    pub class: CellClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SheetSelection {
    Upper,
    Lower,
    /// Upper-sheet layer followed by the lower-sheet layer.
    Full,
}

impl SheetSelection {
    fn layers(self) -> &'static [Sheet] {
        match self {
            SheetSelection::Upper => &[Sheet::Upper],
            SheetSelection::Lower => &[Sheet::Lower],
            SheetSelection::Full => &[Sheet::Upper, Sheet::Lower],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ChaosSystem {
    TraceMap {
        #[serde(rename = "V")]
        level: f64,
        sheet: SheetSelection,
    },
    StandardMap {
        k: f64,
    },
}

/// Grid of per-cell Lyapunov classifications, row-major with x (or theta) varying fastest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChaosMap {
    pub system: ChaosSystem,
    pub resolution: usize,
    pub n: usize,
    pub threshold: f64,
    pub cells: Vec<ChaosCell>,
}

impl ChaosMap {
    pub fn on_surface(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| c.class != CellClass::OffSurface)
            .count()
    }

    pub fn chaotic(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| c.class == CellClass::Chaotic)
            .count()
    }

    /// Chaotic cells over on-surface cells; zero when nothing is on the surface.
    pub fn chaotic_fraction(&self) -> f64 {
        let on = self.on_surface();
        if on == 0 {
            0.0
        } else {
            self.chaotic() as f64 / on as f64
        }
    }

    /// Seed of cell `index` for the trace map, when the cell is on the surface.
    pub fn cell_seed(&self, index: usize) -> Option<Point3> {
        match self.system {
            ChaosSystem::TraceMap { level, sheet } => {
                let per_layer = self.resolution * self.resolution;
                let layer = sheet.layers()[index / per_layer];
                trace_cell_seed(index % per_layer, self.resolution, level, layer)
            }
            ChaosSystem::StandardMap { .. } => None,
        }
    }
}

fn cell_center(i: usize, res: usize) -> f64 {
    -1.0 + (i as f64 + 0.5) * 2.0 / res as f64
}

fn trace_cell_seed(index: usize, res: usize, v: f64, sheet: Sheet) -> Option<Point3> {
    let (i, j) = (index % res, index / res);
    let (x, y) = (cell_center(i, res), cell_center(j, res));
    solve_z(x, y, v)
        .on_sheet(sheet)
        .map(|z| Point3::raw(x, y, z))
}

fn classify(lyapunov: f64, threshold: f64) -> CellClass {
    if lyapunov > threshold {
        CellClass::Chaotic
    } else {
        CellClass::Regular
    }
}

pub fn chaos_grid(v: f64, res: usize, n: usize, threshold: f64) -> Result<ChaosMap> {
    chaos_grid_on(v, res, n, threshold, SheetSelection::Upper)
}

pub fn chaos_grid_on(
    v: f64,
    res: usize,
    n: usize,
    threshold: f64,
    sheet: SheetSelection,
) -> Result<ChaosMap> {
    if !(v > -1.0 && v < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "chaos grid needs -1 < V < 0, got {v}"
        )));
    }
    if res == 0 || n == 0 {
        return Err(Error::InvalidArgument(
            "resolution and n must be positive".into(),
        ));
    }
    let per_layer = res * res;
    let cells = (0..per_layer * sheet.layers().len())
        .into_par_iter()
        .map(|idx| {
            let layer = sheet.layers()[idx / per_layer];
            match trace_cell_seed(idx % per_layer, res, v, layer) {
                None => ChaosCell {
                    lyapunov: None,
                    class: CellClass::OffSurface,
                },
                Some(seed) => match lyapunov_exponent(seed, v, n) {
                    Ok(l) => ChaosCell {
                        lyapunov: Some(l),
                        class: classify(l, threshold),
                    },
                    Err(_) => ChaosCell {
                        lyapunov: None,
                        class: CellClass::Escaped,
                    },
                },
            }
        })
        .collect();
    Ok(ChaosMap {
        system: ChaosSystem::TraceMap { level: v, sheet },
        resolution: res,
        n,
        threshold,
        cells,
    })
}

pub fn stdmap_chaos_grid(k: f64, res: usize, n: usize, threshold: f64) -> Result<ChaosMap> {
    if !(k >= 0.0) || !k.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "standard map needs k >= 0, got {k}"
        )));
    }
    if res == 0 || n == 0 {
        return Err(Error::InvalidArgument(
            "resolution and n must be positive".into(),
        ));
    }
    let cells = (0..res * res)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx % res, idx / res);
            let seed =
                TorusPoint::reduced((i as f64 + 0.5) / res as f64, (j as f64 + 0.5) / res as f64);
            let l = stdmap_lyapunov(seed, k, n);
            ChaosCell {
                lyapunov: Some(l),
                class: classify(l, threshold),
            }
        })
        .collect();
    Ok(ChaosMap {
        system: ChaosSystem::StandardMap { k },
        resolution: res,
        n,
        threshold,
        cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudPoint {
    pub seed_id: usize,
    pub step: usize,
    pub sheet: Sheet,
    pub point: Point3,
}

impl CloudPoint {
    /// Default two-dimensional view: orthographic (x, y).
    pub fn projected(&self) -> [f64; 2] {
        [self.point.x, self.point.y]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed_id: usize,
    pub error: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoincareCloud {
    #[serde(rename = "V")]
    pub level: f64,
    pub points: Vec<CloudPoint>,
    pub failures: Vec<SeedFailure>,
}

impl PoincareCloud {
    pub fn distinct_points(&self) -> usize {
        let mut keys: Vec<[u64; 3]> = self
            .points
            .iter()
            .map(|c| {
                [
                    c.point.x.to_bits(),
                    c.point.y.to_bits(),
                    c.point.z.to_bits(),
                ]
            })
            .collect();
        keys.sort_unstable();
        keys.dedup();
        keys.len()
    }
}

/// Orbits of every seed, labeled by seed index; each seed contributes step 0 plus `n` iterates.
pub fn poincare_cloud(v: f64, seeds: &[Point3], n: usize) -> PoincareCloud {
    let per_seed: Vec<(Vec<CloudPoint>, Option<SeedFailure>)> = seeds
        .par_iter()
        .enumerate()
        .map(|(seed_id, &seed)| {
            let mut pts = vec![CloudPoint {
                seed_id,
                step: 0,
                sheet: Sheet::of(seed),
                point: seed,
            }];
            let res = iterate_with(
                seed,
                v,
                n,
                crate::defaults::REPROJECTION_INTERVAL,
                TimeDirection::Forward,
                |step, p| {
                    pts.push(CloudPoint {
                        seed_id,
                        step,
                        sheet: Sheet::of(p),
                        point: p,
                    })
                },
            );
            let failure = res.err().map(|e| SeedFailure {
                seed_id,
                error: e.to_string(),
            });
            (pts, failure)
        })
        .collect();
    let mut cloud = PoincareCloud {
        level: v,
        points: Vec::new(),
        failures: Vec::new(),
    };
    for (pts, failure) in per_seed {
        cloud.points.extend(pts);
        cloud.failures.extend(failure);
    }
    cloud
}

/// Upper-sheet seeds on a `grid` x `grid` lattice over [-1, 1]^2, skipping off-surface columns.
pub fn grid_seeds(v: f64, grid: usize) -> Vec<Point3> {
    if v == -1.0 {
        return vec![Point3::default()];
    }
    (0..grid * grid)
        .filter_map(|idx| trace_cell_seed(idx, grid, v, Sheet::Upper))
        .collect()
}

/// (x, y) iterates of every chaotic cell's seed, `iterates` per cell, in cell order.
pub fn chaotic_cell_cloud(map: &ChaosMap, iterates: usize) -> Result<Vec<[f64; 2]>> {
    let ChaosSystem::TraceMap { level, .. } = map.system else {
        return Err(Error::InvalidArgument(
            "chaotic clouds need a trace-map grid".into(),
        ));
    };
    let per_cell: Vec<Vec<[f64; 2]>> = (0..map.cells.len())
        .into_par_iter()
        .filter(|&i| map.cells[i].class == CellClass::Chaotic)
        .map(|i| {
            let mut pts = Vec::with_capacity(iterates);
            if let Some(seed) = map.cell_seed(i) {
                // A seed that escapes part way still contributes its earlier iterates.
                let _ = iterate_with(
                    seed,
                    level,
                    iterates,
                    crate::defaults::REPROJECTION_INTERVAL,
                    TimeDirection::Forward,
                    |_, p| pts.push([p.x, p.y]),
                );
            }
            pts
        })
        .collect();
    Ok(per_cell.concat())
}
