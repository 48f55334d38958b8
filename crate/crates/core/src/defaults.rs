//! Versioned table of default tolerances and run sizes.
//!
//! Every artifact written by the CLI or returned by the service embeds this
//! table, so changing a value here changes `DEFAULTS_VERSION`.

use serde::{Deserialize, Serialize};

pub const DEFAULTS_VERSION: &str = "1";

/// Stored points must stay this close to their level.
pub const MAX_STORED_DRIFT: f64 = 1e-10;
pub const REPROJECTION_INTERVAL: usize = 16;
/// Iterates outside this box abort an orbit.
pub const DOMAIN_BOX: f64 = 10.0;
/// Iterates outside this box mark an orbit as escaped.
pub const ESCAPE_BOX: f64 = 2.0;

pub const CHAOS_THRESHOLD: f64 = 0.01;
pub const CHAOS_ITERATIONS: usize = 10_000;
pub const LYAPUNOV_ITERATIONS: usize = 100_000;
pub const POINCARE_SEEDS: usize = 200;
pub const POINCARE_ITERATIONS: usize = 20_000;

pub const NEWTON_MAX_ITER: usize = 50;
pub const NEWTON_STEP_TOL: f64 = 1e-12;
pub const NEWTON_MAX_CONDITION: f64 = 1e12;
pub const CLOSURE_TOL: f64 = 1e-10;
pub const PARABOLIC_TOL: f64 = 1e-8;
pub const NEUTRAL_ALIGNMENT: f64 = 0.99;
pub const CONTINUATION_STEP_FLOOR: f64 = 1e-6;
pub const DOUBLING_OFFSET: f64 = 1e-4;
pub const SEED_SINGULAR_DISTANCE: f64 = 1e-3;

pub const ANGLE_TOL: f64 = 1e-3;
pub const CURVATURE_GAP: f64 = 0.05;
pub const FIT_WINDOW: usize = 21;
pub const FIT_RESIDUAL: f64 = 1e-8;
pub const FRAME_CONDITION: f64 = 1e8;
pub const REFINEMENT_TOL: f64 = 0.02;
pub const MAX_SEGMENT: f64 = 0.005;
pub const MANIFOLD_SEED_DISTANCE: f64 = 1e-6;
pub const MANIFOLD_SEED_MAX: f64 = 1e-5;
pub const SINGULAR_BALL: f64 = 1e-3;
pub const TRUNCATION_MARGIN: f64 = 1e-3;
pub const UNFOLDING_DV: f64 = 1e-6;

pub const SURVIVOR_DEPTH: usize = 14;
pub const SURVIVOR_HALF_LENGTH: f64 = 0.5;
pub const DEPTH_STABILITY: f64 = 0.01;

pub const ORBIT_REQUEST_CAP: usize = 1_000_000;
pub const TRANSPORT_POINTS: usize = 50_000;
pub const CHAOS_RES_CAP: usize = 256;
pub const CHAOS_N_CAP: usize = 5_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefaultsTable {
    pub version: String,
    pub reprojection_interval: usize,
    pub max_stored_drift: f64,
    pub chaos_threshold: f64,
    pub chaos_iterations: usize,
    pub lyapunov_iterations: usize,
    pub poincare_seeds: usize,
    pub poincare_iterations: usize,
    pub newton_max_iter: usize,
    pub newton_step_tol: f64,
    pub newton_max_condition: f64,
    pub parabolic_tol: f64,
    pub continuation_step_floor: f64,
    pub doubling_offset: f64,
    pub angle_tol: f64,
    pub curvature_gap: f64,
    pub fit_window: usize,
    pub fit_residual: f64,
    pub refinement_tol: f64,
    pub max_segment: f64,
    pub manifold_seed_distance: f64,
    pub singular_ball: f64,
    pub truncation_margin: f64,
    pub unfolding_dv: f64,
    pub survivor_depth: usize,
    pub survivor_half_length: f64,
    pub depth_stability: f64,
    pub orbit_request_cap: usize,
    pub transport_points: usize,
    pub chaos_res_cap: usize,
    pub chaos_n_cap: usize,
}

impl Default for DefaultsTable {
    fn default() -> Self {
        Self {
            version: DEFAULTS_VERSION.to_string(),
            reprojection_interval: REPROJECTION_INTERVAL,
            max_stored_drift: MAX_STORED_DRIFT,
            chaos_threshold: CHAOS_THRESHOLD,
            chaos_iterations: CHAOS_ITERATIONS,
            lyapunov_iterations: LYAPUNOV_ITERATIONS,
            poincare_seeds: POINCARE_SEEDS,
            poincare_iterations: POINCARE_ITERATIONS,
            newton_max_iter: NEWTON_MAX_ITER,
            newton_step_tol: NEWTON_STEP_TOL,
            newton_max_condition: NEWTON_MAX_CONDITION,
            parabolic_tol: PARABOLIC_TOL,
            continuation_step_floor: CONTINUATION_STEP_FLOOR,
            doubling_offset: DOUBLING_OFFSET,
            angle_tol: ANGLE_TOL,
            curvature_gap: CURVATURE_GAP,
            fit_window: FIT_WINDOW,
            fit_residual: FIT_RESIDUAL,
            refinement_tol: REFINEMENT_TOL,
            max_segment: MAX_SEGMENT,
            manifold_seed_distance: MANIFOLD_SEED_DISTANCE,
            singular_ball: SINGULAR_BALL,
            truncation_margin: TRUNCATION_MARGIN,
            unfolding_dv: UNFOLDING_DV,
            survivor_depth: SURVIVOR_DEPTH,
            survivor_half_length: SURVIVOR_HALF_LENGTH,
            depth_stability: DEPTH_STABILITY,
            orbit_request_cap: ORBIT_REQUEST_CAP,
            transport_points: TRANSPORT_POINTS,
            chaos_res_cap: CHAOS_RES_CAP,
            chaos_n_cap: CHAOS_N_CAP,
        }
    }
}

/// Arithmetic used where the tangency refinement evaluates manifold points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    Standard,
    /// Double-double evaluation of manifold points.
    Extended,
}
