//! Cantor-set presentations, Newhouse thickness, the gap-lemma predicate and
//! box-counting dimension of planar point sets.

use std::collections::{BTreeSet, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordering used when a presentation is built from unordered gaps.
pub const ORDERING_NOTE: &str =
    "gaps ordered by decreasing length; for sampled sets this stands in for the supremum over presentations";

/// Closed hull with an ordered list of open gaps inside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPresentation")]
pub struct CantorPresentation {
    hull: [f64; 2],
    gaps: Vec<[f64; 2]>,
    depth: usize,
}

#[derive(Deserialize)]
struct RawPresentation {
    hull: [f64; 2],
    gaps: Vec<[f64; 2]>,
    #[serde(default)]
    depth: usize,
}

impl TryFrom<RawPresentation> for CantorPresentation {
    type Error = Error;
    fn try_from(r: RawPresentation) -> Result<Self> {
        CantorPresentation::new(r.hull, r.gaps, r.depth)
    }
}

impl CantorPresentation {
    pub fn new(hull: [f64; 2], gaps: Vec<[f64; 2]>, depth: usize) -> Result<Self> {
        if !hull
            .iter()
            .chain(gaps.iter().flatten())
            .all(|v| v.is_finite())
        {
            return Err(Error::NonFinite("cantor presentation"));
        }
        if !(hull[1] - hull[0] > 0.0) {
            return Err(Error::DegenerateHull);
        }
        for g in &gaps {
            if !(g[1] > g[0]) || g[0] < hull[0] || g[1] > hull[1] {
                return Err(Error::InvalidArgument(format!(
                    "gap {g:?} is empty or leaves the hull {hull:?}"
                )));
            }
        }
        let mut sorted = gaps.clone();
        sorted.sort_by(|a, b| a[0].total_cmp(&b[0]));
        if sorted.windows(2).any(|w| w[1][0] < w[0][1]) {
            return Err(Error::InvalidArgument("gaps overlap".into()));
        }
        Ok(Self { hull, gaps, depth })
    }

    pub fn hull(&self) -> [f64; 2] {
        self.hull
    }

    pub fn gaps(&self) -> &[[f64; 2]] {
        &self.gaps
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn hull_length(&self) -> f64 {
        self.hull[1] - self.hull[0]
    }

    /// A gap touches the hull, leaving a bridge of zero length.
    pub fn degenerate_interior(&self) -> bool {
        self.gaps
            .iter()
            .any(|g| g[0] == self.hull[0] || g[1] == self.hull[1])
    }

    pub fn total_gap_length(&self) -> f64 {
        self.gaps.iter().map(|g| g[1] - g[0]).sum()
    }

    /// Same gaps reordered by decreasing length, ties by position.
    pub fn by_decreasing_length(&self) -> Self {
        let mut gaps = self.gaps.clone();
        gaps.sort_by(|a, b| {
            (b[1] - b[0])
                .total_cmp(&(a[1] - a[0]))
                .then(a[0].total_cmp(&b[0]))
        });
        Self {
            gaps,
            ..self.clone()
        }
    }

    /// Image under x -> offset + scale * x (scale != 0), keeping the gap order.
    pub fn affine_image(&self, offset: f64, scale: f64) -> Result<Self> {
        let map = |iv: [f64; 2]| {
            let (a, b) = (offset + scale * iv[0], offset + scale * iv[1]);
            [a.min(b), a.max(b)]
        };
        Self::new(
            map(self.hull),
            self.gaps.iter().map(|&g| map(g)).collect(),
            self.depth,
        )
    }

    /// Closed intervals left after removing every gap, in increasing order.
    pub fn remaining_intervals(&self) -> Vec<[f64; 2]> {
        let mut sorted = self.gaps.clone();
        sorted.sort_by(|a, b| a[0].total_cmp(&b[0]));
        let mut out = Vec::with_capacity(sorted.len() + 1);
        let mut left = self.hull[0];
        for g in sorted {
            out.push([left, g[0]]);
            left = g[1];
        }
        out.push([left, self.hull[1]]);
        out
    }
}

/// Newhouse thickness for the presentation's gap order.
pub fn thickness(c: &CantorPresentation) -> Result<f64> {
    if c.gaps.is_empty() {
        return Err(Error::NoGaps);
    }
    // rank gaps by position so neighbours among already-placed gaps are a range query
    let mut by_position: Vec<usize> = (0..c.gaps.len()).collect();
    by_position.sort_by(|&a, &b| c.gaps[a][0].total_cmp(&c.gaps[b][0]));
    let mut rank = vec![0; c.gaps.len()];
    for (r, &i) in by_position.iter().enumerate() {
        rank[i] = r;
    }
    let mut placed = BTreeSet::new();
    let mut tau = f64::INFINITY;
    for (i, g) in c.gaps.iter().enumerate() {
        let r = rank[i];
        let left = placed
            .range(..r)
            .next_back()
            .map_or(c.hull[0], |&k: &usize| c.gaps[by_position[k]][1]);
        let right = placed
            .range(r + 1..)
            .next()
            .map_or(c.hull[1], |&k: &usize| c.gaps[by_position[k]][0]);
        let len = g[1] - g[0];
        tau = tau.min((g[0] - left) / len).min((right - g[1]) / len);
        placed.insert(r);
    }
    Ok(tau)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThicknessReport {
    /// Infinite when the presentation has no gaps.
    #[serde(with = "crate::io::extended_f64")]
    pub tau: f64,
    pub no_gaps: bool,
    pub degenerate_interior: bool,
    pub dim_lower_bound: f64,
    pub ordering: String,
}

pub fn thickness_report(c: &CantorPresentation) -> ThicknessReport {
    let tau = thickness(c).unwrap_or(f64::INFINITY);
    ThicknessReport {
        tau,
        no_gaps: c.gaps.is_empty(),
        degenerate_interior: c.degenerate_interior(),
        dim_lower_bound: if tau > 0.0 { dim_lower_bound(tau) } else { 0.0 },
        ordering: ORDERING_NOTE.to_string(),
    }
}

/// Lower bound on the Hausdorff dimension of a Cantor set of thickness `tau`.
pub fn dim_lower_bound(tau: f64) -> f64 {
    if tau == f64::INFINITY {
        return 1.0;
    }
    std::f64::consts::LN_2 / (2.0 + 1.0 / tau).ln()
}

/// Two-piece self-similar set on `hull`: each bridge keeps fractions `left`
/// and `right` of its parent at the two ends. Gaps are listed level by level.
pub fn affine_cantor(
    hull: [f64; 2],
    left: f64,
    right: f64,
    depth: usize,
) -> Result<CantorPresentation> {
    if !(left > 0.0 && right > 0.0 && left + right < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "ratios {left}, {right} must be positive with sum below 1"
        )));
    }
    let mut bridges = vec![hull];
    let mut gaps = Vec::new();
    for _ in 0..depth {
        let mut next = Vec::with_capacity(bridges.len() * 2);
        for [a, b] in bridges {
            let len = b - a;
            let (gl, gr) = (a + left * len, b - right * len);
            gaps.push([gl, gr]);
            next.push([a, gl]);
            next.push([gr, b]);
        }
        bridges = next;
    }
    CantorPresentation::new(hull, gaps, depth)
}

/// Middle-alpha Cantor set on [0, 1] to the given depth.
pub fn middle_alpha(alpha: f64, depth: usize) -> Result<CantorPresentation> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let side = 0.5 * (1.0 - alpha);
    affine_cantor([0.0, 1.0], side, side, depth)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapLemmaPrediction {
    pub linked: bool,
    pub tau_product: f64,
    pub predicted_intersect: bool,
    /// Product within rounding of 1, where the lemma gives no conclusion.
    pub boundary: bool,
}

fn inside_gap(hull: [f64; 2], c: &CantorPresentation) -> bool {
    c.gaps.iter().any(|g| g[0] < hull[0] && hull[1] < g[1])
}

pub fn gap_lemma_predict(c1: &CantorPresentation, c2: &CantorPresentation) -> GapLemmaPrediction {
    let (h1, h2) = (c1.hull, c2.hull);
    let overlap = h1[0] <= h2[1] && h2[0] <= h1[1];
    let linked = overlap && !inside_gap(h2, c1) && !inside_gap(h1, c2);
    let t1 = thickness(c1).unwrap_or(f64::INFINITY);
    let t2 = thickness(c2).unwrap_or(f64::INFINITY);
    let tau_product = t1 * t2;
    let boundary = (tau_product - 1.0).abs() <= 1e-9;
    GapLemmaPrediction {
        linked,
        tau_product,
        predicted_intersect: linked && !boundary && tau_product > 1.0,
        boundary,
    }
}

/// Whether the remaining closed intervals of the two presentations meet, up to `resolution`.
pub fn brute_intersect(
    c1: &CantorPresentation,
    c2: &CantorPresentation,
    resolution: f64,
) -> Result<bool> {
    if !(resolution > 0.0) {
        return Err(Error::InvalidArgument("resolution must be positive".into()));
    }
    let (a, b) = (c1.remaining_intervals(), c2.remaining_intervals());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i][0].max(b[j][0]) <= a[i][1].min(b[j][1]) + resolution {
            return Ok(true);
        }
        if a[i][1] < b[j][1] {
            i += 1;
        } else {
            j += 1;
        }
    }
    Ok(false)
}

/// Presentation whose gaps are the sample spacings longer than `min_gap`.
pub fn presentation_from_samples(points: &[f64], min_gap: f64) -> Result<CantorPresentation> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument(
            "at least two samples are required".into(),
        ));
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("cantor samples"));
    }
    if points.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("samples must be sorted".into()));
    }
    let (lo, hi) = (points[0], points[points.len() - 1]);
    if hi - lo < 1e-14 {
        return Err(Error::DegenerateHull);
    }
    let gaps: Vec<[f64; 2]> = points
        .windows(2)
        .filter(|w| w[1] - w[0] > min_gap)
        .map(|w| [w[0], w[1]])
        .collect();
    Ok(CantorPresentation::new([lo, hi], gaps, 0)?.by_decreasing_length())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxCountReport {
    pub scales: Vec<f64>,
    pub counts: Vec<usize>,
    /// Fitted dimension clamped to [0, 2].
    pub slope: f64,
    pub raw_slope: f64,
    pub r2: f64,
}

/// Dyadic scales `extent * 2^-k` for k in `first..=last`.
pub fn dyadic_scales(extent: f64, first: u32, last: u32) -> Vec<f64> {
    (first..=last)
        .map(|k| extent * 0.5f64.powi(k as i32))
        .collect()
}

/// Larger side of the bounding box of a planar cloud.
pub fn cloud_extent(points: &[[f64; 2]]) -> f64 {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in points {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (hi[0] - lo[0]).max(hi[1] - lo[1])
}

/// Least-squares slope of log N(eps) against log(1/eps).
pub fn box_dimension(points: &[[f64; 2]], scales: &[f64]) -> Result<BoxCountReport> {
    if points.len() < 100 {
        return Err(Error::InvalidArgument(format!(
            "box counting needs at least 100 points, got {}",
            points.len()
        )));
    }
    if scales.len() < 4 {
        return Err(Error::InsufficientScales {
            needed: 4,
            got: scales.len(),
        });
    }
    if scales.iter().any(|s| !(s.is_finite() && *s > 0.0))
        || points.iter().flatten().any(|v| !v.is_finite())
    {
        return Err(Error::NonFinite("box counting input"));
    }
    let mut scales = scales.to_vec();
    scales.sort_by(|a, b| b.total_cmp(a));
    scales.dedup();
    if scales.len() < 4 {
        return Err(Error::InsufficientScales {
            needed: 4,
            got: scales.len(),
        });
    }
    let counts: Vec<usize> = scales
        .par_iter()
        .map(|&eps| {
            points
                .iter()
                .map(|p| ((p[0] / eps).floor() as i64, (p[1] / eps).floor() as i64))
                .collect::<HashSet<_>>()
                .len()
        })
        .collect();
    let xs: Vec<f64> = scales.iter().map(|s| (1.0 / s).ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|&c| (c as f64).ln()).collect();
    let (raw_slope, r2) = linear_fit(&xs, &ys);
    Ok(BoxCountReport {
        scales,
        counts,
        slope: raw_slope.clamp(0.0, 2.0),
        raw_slope,
        r2,
    })
}

/// Slope and coefficient of determination of the least-squares line.
fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - my - slope * (x - mx)).powi(2))
        .sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    (slope, r2)
}
