//! Endpoint handlers and their request and response bodies.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::Response;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tracelab_core::defaults::{
    DefaultsTable, Precision, CHAOS_N_CAP, CHAOS_RES_CAP, CHAOS_THRESHOLD, MAX_STORED_DRIFT,
    ORBIT_REQUEST_CAP, REFINEMENT_TOL, REPROJECTION_INTERVAL, TRANSPORT_POINTS,
};
use tracelab_core::io::{ArcHeader, PeriodicOrbitRecord};
use tracelab_core::manifolds::{
    grow_manifold_with, hunt_seeds, tangency_hunt, GrowthOptions, HuntConfig, ManifoldSide,
};
use tracelab_core::maps::{invariant, standard_map};
use tracelab_core::orbits::{
    chaos_grid_on, iterate_with, lyapunov_exponent, stdmap_chaos_grid, stdmap_lyapunov, CellClass,
    SheetSelection, TimeDirection,
};
use tracelab_core::periodic::{find_periodic, period_two_at_level};
use tracelab_core::surface::{project_to_level, singular_distance, solve_z, Sheet};
use tracelab_core::{Error, Point3, TorusPoint};

use crate::transport::{downsample, TransportInfo};
use crate::{
    cached_post, session_id, within_budget, ApiError, AppState, JobStatus, Reply, Session,
};

/// Seeds closer than this to a cone point have no tangent plane, hence no Lyapunov exponent.
const CONE_RADIUS: f64 = 1e-9;
/// Seeds within this distance of the level are snapped onto it; farther ones get a suggestion.
const SEED_SNAP: f64 = 1e-6;
/// Longest arc served by `/manifold`.
const MAX_ARCLENGTH: f64 = 50.0;
/// Directions probed per ring when searching for a suggested seed.
const SUGGEST_RING: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub enum SystemSpec {
    TraceMap {
        #[serde(rename = "V")]
        level: f64,
    },
    StandardMap {
        k: f64,
    },
}

fn typed<T: DeserializeOwned>(body: Value) -> Result<T, ApiError> {
    serde_json::from_value(body).map_err(|e| ApiError::bad_request(e.to_string()))
}

fn over_cap(field: &str, cap: impl Serialize) -> ApiError {
    ApiError::new(
        StatusCode::BAD_REQUEST,
        "over_cap",
        format!("{field} exceeds the request cap"),
    )
    .with("field", field)
    .with("cap", cap)
}

fn ok<T: Serialize>(value: &T) -> Reply {
    Reply::json(StatusCode::OK, value)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OrbitRequest {
    system: SystemSpec,
    /// (x, y) with a sheet, (x, y, z), or (theta, phi) for the standard map.
    seed: Vec<f64>,
    #[serde(default)]
    sheet: Option<Sheet>,
    n: u64,
}

#[derive(Debug, Serialize)]
struct OrbitResponse {
    system: SystemSpec,
    n: u64,
    /// The seed actually iterated, after solving for z or snapping onto the level.
    seed: Vec<f64>,
    points: Vec<Vec<f64>>,
    lyapunov: Option<f64>,
    /// `ok`, `not_applicable` at a cone point, or `escaped`.
    lyapunov_status: &'static str,
    escaped: bool,
    /// Largest |I - V| over all computed points (trace map only).
    max_drift: Option<f64>,
    transport: TransportInfo,
}

/// A nearby point of the level: along the gradient line when that lands on it,
/// else the closest root of the level over rings of growing radius in (x, y).
fn suggest(p: Point3, v: f64) -> Option<Point3> {
    let on_level = |q: &Point3| (invariant(*q) - v).abs() < 1e-12;
    if let Some(q) = project_to_level(p, v).ok().filter(on_level) {
        return Some(q);
    }
    let closest = |x: f64, y: f64, best: &mut Option<(f64, Point3)>| {
        for z in solve_z(x, y, v).to_vec() {
            if let Ok(q) = Point3::new(x, y, z) {
                let d = (q - p).norm();
                if best.is_none_or(|(bd, _)| d < bd) {
                    *best = Some((d, q));
                }
            }
        }
    };
    let mut best = None;
    closest(p.x, p.y, &mut best);
    let mut radius = 1e-3;
    while best.is_none() && radius <= tracelab_core::defaults::DOMAIN_BOX {
        for k in 0..SUGGEST_RING {
            let a = std::f64::consts::TAU * k as f64 / SUGGEST_RING as f64;
            closest(p.x + radius * a.cos(), p.y + radius * a.sin(), &mut best);
        }
        radius *= 2.0;
    }
    let (_, q) = best?;
    Some(project_to_level(q, v).ok().filter(on_level).unwrap_or(q)).filter(on_level)
}

fn off_surface(p: Point3, v: f64) -> ApiError {
    let suggestion =
        suggest(p, v).map(|q| json!({ "point": q, "seed": [q.x, q.y], "sheet": Sheet::of(q) }));
    ApiError::new(
        StatusCode::UNPROCESSABLE_ENTITY,
        "off_surface",
        format!("seed is not on the level V = {v}"),
    )
    .with("suggestion", suggestion)
}

fn resolve_trace_seed(v: f64, seed: &[f64], sheet: Sheet) -> Result<Point3, ApiError> {
    let p = match *seed {
        [x, y] => {
            let Some(z) = solve_z(x, y, v).on_sheet(sheet) else {
                return Err(off_surface(Point3::new(x, y, x * y)?, v));
            };
            Point3::new(x, y, z)?
        }
        [x, y, z] => Point3::new(x, y, z)?,
        _ => {
            return Err(ApiError::bad_request(
                "trace-map seeds need two or three coordinates",
            ))
        }
    };
    if p.max_abs() > tracelab_core::defaults::DOMAIN_BOX {
        return Err(ApiError::bad_request(
            "seed lies outside the computational domain",
        ));
    }
    let off = (invariant(p) - v).abs();
    if off < MAX_STORED_DRIFT * 1e-2 {
        Ok(p)
    } else if off <= SEED_SNAP {
        project_to_level(p, v).map_err(|_| off_surface(p, v))
    } else {
        Err(off_surface(p, v))
    }
}

fn trace_orbit(v: f64, req: &OrbitRequest) -> Result<OrbitResponse, ApiError> {
    let seed = resolve_trace_seed(v, &req.seed, req.sheet.unwrap_or(Sheet::Upper))?;
    let n = req.n as usize;
    let mut points = Vec::with_capacity(n + 1);
    points.push(seed);
    let escaped = match iterate_with(
        seed,
        v,
        n,
        REPROJECTION_INTERVAL,
        TimeDirection::Forward,
        |_, p| points.push(p),
    ) {
        Ok(summary) => summary.escaped,
        Err(Error::EscapedDomain { .. }) => true,
        Err(e) => return Err(e.into()),
    };
    let max_drift = points
        .iter()
        .map(|p| (invariant(*p) - v).abs())
        .fold(0.0, f64::max);
    if !escaped && (max_drift.is_nan() || max_drift >= MAX_STORED_DRIFT) {
        return Err(ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "drift",
            format!("orbit drifted {max_drift:.3e} off its level"),
        ));
    }
    let (lyapunov, lyapunov_status) = if singular_distance(seed) < CONE_RADIUS {
        (None, "not_applicable")
    } else {
        match lyapunov_exponent(seed, v, n) {
            Ok(l) => (Some(l), "ok"),
            Err(Error::EscapedDomain { .. }) => (None, "escaped"),
            Err(e) => return Err(e.into()),
        }
    };
    let (kept, transport) = downsample(&points, TRANSPORT_POINTS);
    Ok(OrbitResponse {
        system: req.system,
        n: req.n,
        seed: seed.to_array().to_vec(),
        points: kept.iter().map(|p| p.to_array().to_vec()).collect(),
        lyapunov,
        lyapunov_status,
        escaped,
        max_drift: Some(max_drift),
        transport,
    })
}

fn standard_orbit(k: f64, req: &OrbitRequest) -> Result<OrbitResponse, ApiError> {
    let [theta, phi] = req.seed[..] else {
        return Err(ApiError::bad_request(
            "standard-map seeds need two coordinates",
        ));
    };
    let seed = TorusPoint::new(theta, phi)?;
    let n = req.n as usize;
    let mut points = Vec::with_capacity(n + 1);
    let mut q = seed;
    points.push(q);
    for _ in 0..n {
        q = standard_map(q, k);
        points.push(q);
    }
    let (kept, transport) = downsample(&points, TRANSPORT_POINTS);
    Ok(OrbitResponse {
        system: req.system,
        n: req.n,
        seed: vec![seed.theta(), seed.phi()],
        points: kept.iter().map(|t| vec![t.theta(), t.phi()]).collect(),
        lyapunov: Some(stdmap_lyapunov(seed, k, n)),
        lyapunov_status: "ok",
        escaped: false,
        max_drift: None,
        transport,
    })
}

fn check_system(system: SystemSpec) -> Result<(), ApiError> {
    match system {
        SystemSpec::TraceMap { level } if !level.is_finite() => {
            Err(ApiError::bad_request("V must be finite"))
        }
        SystemSpec::StandardMap { k } if !(k >= 0.0 && k.is_finite()) => {
            Err(ApiError::bad_request("k must be finite and non-negative"))
        }
        _ => Ok(()),
    }
}

pub async fn orbit(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    cached_post(
        state,
        "orbit",
        headers,
        body,
        |state, session: Arc<Session>, _, body| async move {
            let req: OrbitRequest = typed(body)?;
            if req.n > ORBIT_REQUEST_CAP as u64 {
                return Err(over_cap("n", ORBIT_REQUEST_CAP));
            }
            if req.n == 0 {
                return Err(ApiError::bad_request("n must be positive"));
            }
            check_system(req.system)?;
            session.set_system(req.system);
            let resp = within_budget(&state, move || match req.system {
                SystemSpec::TraceMap { level } => trace_orbit(level, &req),
                SystemSpec::StandardMap { k } => standard_orbit(k, &req),
            })
            .await?;
            Ok(ok(&resp))
        },
    )
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChaosRequest {
    system: SystemSpec,
    res: usize,
    n: usize,
    #[serde(default = "default_threshold")]
    threshold: f64,
    #[serde(default)]
    sheet: Option<SheetSelection>,
}

fn default_threshold() -> f64 {
    CHAOS_THRESHOLD
}

#[derive(Debug, Serialize)]
struct ChaosResponse {
    system: SystemSpec,
    res: usize,
    n: usize,
    threshold: f64,
    layers: usize,
    layout: &'static str,
    /// One entry per cell; null off the surface or for escaped seeds.
    lyapunov: Vec<Option<f64>>,
    classes: Vec<CellClass>,
    chaotic_fraction: f64,
    on_surface: usize,
    chaotic: usize,
}

pub async fn chaos(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    cached_post(
        state,
        "chaos",
        headers,
        body,
        |state, session: Arc<Session>, _, body| async move {
            let req: ChaosRequest = typed(body)?;
            if req.res > CHAOS_RES_CAP {
                return Err(over_cap("res", CHAOS_RES_CAP));
            }
            if req.n > CHAOS_N_CAP {
                return Err(over_cap("n", CHAOS_N_CAP));
            }
            check_system(req.system)?;
            session.set_system(req.system);
            let resp = within_budget(&state, move || {
                let map = match req.system {
                    SystemSpec::TraceMap { level } => chaos_grid_on(
                        level,
                        req.res,
                        req.n,
                        req.threshold,
                        req.sheet.unwrap_or(SheetSelection::Upper),
                    )?,
                    SystemSpec::StandardMap { k } => {
                        stdmap_chaos_grid(k, req.res, req.n, req.threshold)?
                    }
                };
                Ok(ChaosResponse {
                    system: req.system,
                    res: req.res,
                    n: req.n,
                    threshold: req.threshold,
                    layers: map.cells.len() / (req.res * req.res),
                    layout: "row-major, x (or theta) fastest, upper-sheet layer first",
                    lyapunov: map.cells.iter().map(|c| c.lyapunov).collect(),
                    classes: map.cells.iter().map(|c| c.class).collect(),
                    chaotic_fraction: map.chaotic_fraction(),
                    on_surface: map.on_surface(),
                    chaotic: map.chaotic(),
                })
            })
            .await?;
            Ok(ok(&resp))
        },
    )
    .await
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
enum SideSpec {
    #[serde(alias = "Stable")]
    Stable,
    #[serde(alias = "Unstable")]
    Unstable,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifoldRequest {
    #[serde(rename = "V")]
    level: f64,
    period: usize,
    #[serde(default)]
    guess: Option<[f64; 3]>,
    side: SideSpec,
    arclength: f64,
    #[serde(default)]
    tol: Option<f64>,
    #[serde(default)]
    precision: Option<Precision>,
}

#[derive(Debug, Serialize)]
struct ManifoldResponse {
    header: ArcHeader,
    points: Vec<Point3>,
    /// Curve parameter of each point; null for the periodic point itself.
    params: Vec<Option<f64>>,
    transport: TransportInfo,
}

pub async fn manifold(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    cached_post(
        state,
        "manifold",
        headers,
        body,
        |state, _, _, body| async move {
            let req: ManifoldRequest = typed(body)?;
            if req.arclength.is_nan() || req.arclength <= 0.0 {
                return Err(ApiError::bad_request("arclength must be positive"));
            }
            if req.arclength > MAX_ARCLENGTH {
                return Err(over_cap("arclength", MAX_ARCLENGTH));
            }
            if req.guess.is_none() && req.period != 2 {
                return Err(ApiError::bad_request("periods other than 2 need a guess"));
            }
            let precision = req.precision.unwrap_or(state.config.precision);
            let resp = within_budget(&state, move || {
                let v = req.level;
                let guess = match req.guess {
                    Some([x, y, z]) => Point3::new(x, y, z)?,
                    None => period_two_at_level(v)?,
                };
                let po = find_periodic(v, req.period, guess)?;
                let side = match req.side {
                    SideSpec::Stable => ManifoldSide::Stable,
                    SideSpec::Unstable => ManifoldSide::Unstable,
                };
                let options = GrowthOptions {
                    refinement_tol: req.tol.unwrap_or(REFINEMENT_TOL),
                    precision,
                    ..GrowthOptions::default()
                };
                let arc = grow_manifold_with(&po, side, req.arclength, options)?;
                let (points, transport) = downsample(&arc.vertices, TRANSPORT_POINTS);
                let (params, _) = downsample(&arc.params, TRANSPORT_POINTS);
                Ok(ManifoldResponse {
                    header: ArcHeader::from(&arc),
                    points,
                    params: params
                        .into_iter()
                        .map(|u| u.is_finite().then_some(u))
                        .collect(),
                    transport,
                })
            })
            .await?;
            Ok(ok(&resp))
        },
    )
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScanRequest {
    vmin: f64,
    vmax: f64,
    #[serde(default = "default_period_max")]
    period_max: usize,
    #[serde(default)]
    census_grid: usize,
    #[serde(default)]
    grid: Option<usize>,
    #[serde(default)]
    max_param: Option<f64>,
    #[serde(default)]
    bisections: Option<usize>,
    #[serde(default)]
    precision: Option<Precision>,
}

fn default_period_max() -> usize {
    6
}

pub async fn tangency_scan(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    cached_post(state, "tangency-scan", headers, body, |state, _, sid, body| async move {
        let req: ScanRequest = typed(body)?;
        if !(req.vmin < req.vmax && req.vmin > -1.0 && req.vmax < 0.0) {
            return Err(ApiError::bad_request("V range must be an increasing interval inside (-1, 0)"));
        }
        let defaults = HuntConfig::default();
        let cfg = HuntConfig {
            grid: req.grid.unwrap_or(defaults.grid),
            max_param: req.max_param.unwrap_or(defaults.max_param),
            bisections: req.bisections.unwrap_or(defaults.bisections),
            precision: req.precision.unwrap_or(defaults.precision),
            ..defaults
        };
        if cfg.grid < 2 || cfg.bisections == 0 {
            return Err(ApiError::bad_request("the scan needs at least two levels and one bisection"));
        }
        let id = state.new_job(&sid);
        let worker = state.clone();
        tokio::task::spawn_blocking(move || {
            let seeds = hunt_seeds(req.vmax, req.period_max, req.census_grid);
            let status = if seeds.is_empty() {
                JobStatus::Failed { error: json!({"error": "no_seeds", "message": "no hyperbolic seed orbit at vmax"}) }
            } else {
                match tangency_hunt((req.vmin, req.vmax), &seeds, &cfg) {
                    Ok(report) => {
                        let records: Vec<PeriodicOrbitRecord> = seeds.iter().map(PeriodicOrbitRecord::from).collect();
                        let valid = report.events.iter().filter(|e| e.is_valid()).count();
                        JobStatus::Done { result: json!({ "seeds": records, "valid_events": valid, "report": report }) }
                    }
                    Err(e) => JobStatus::Failed { error: json!({ "error": e.kind(), "message": e.to_string() }) },
                }
            };
            worker.finish_job(id, status);
        });
        Ok(Reply::json(StatusCode::ACCEPTED, &json!({ "job_id": id, "status_url": format!("/jobs/{id}") })))
    })
    .await
}

pub async fn job(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> Response {
    let sid = match session_id(&headers) {
        Ok(s) => s,
        Err(e) => return crate::with_session(e.into(), None),
    };
    let reply = match id
        .parse::<u64>()
        .ok()
        .and_then(|n| state.job_status(n, &sid).map(|s| (n, s)))
    {
        Some((n, status)) => {
            let mut body = serde_json::to_value(&status).expect("job status serializes");
            body["job_id"] = json!(n);
            ok(&body)
        }
        None => ApiError::new(
            StatusCode::NOT_FOUND,
            "unknown_job",
            format!("no job {id} in this session"),
        )
        .into(),
    };
    crate::with_session(reply, Some(&sid))
}

pub async fn meta(State(state): State<Arc<AppState>>) -> Response {
    let body = json!({
        "version": tracelab_core::VERSION,
        "defaults": DefaultsTable::default(),
        "precision": state.config.precision,
        "budget_ms": state.config.budget.as_millis() as u64,
        "caps": {
            "orbit_n": ORBIT_REQUEST_CAP,
            "transport_points": TRANSPORT_POINTS,
            "chaos_res": CHAOS_RES_CAP,
            "chaos_n": CHAOS_N_CAP,
            "manifold_arclength": MAX_ARCLENGTH,
        },
    });
    axum::response::IntoResponse::into_response(ok(&body))
}

pub async fn session(State(state): State<Arc<AppState>>, headers: HeaderMap) -> Response {
    let sid = match session_id(&headers) {
        Ok(s) => s,
        Err(e) => return crate::with_session(e.into(), None),
    };
    let session = state.session(&sid);
    let body = json!({
        "session_id": sid,
        "system": *session.system.lock().expect("system lock"),
        "cached_responses": session.cache.lock().expect("cache lock").len(),
    });
    crate::with_session(ok(&body), Some(&sid))
}
