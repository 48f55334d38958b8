//! Subcommand definitions and their runners.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use tracelab_core::cantor::{
    affine_cantor, box_dimension, cloud_extent, dyadic_scales, middle_alpha, thickness_report,
};
use tracelab_core::defaults::{
    DefaultsTable, Precision, ANGLE_TOL, CHAOS_ITERATIONS, CHAOS_THRESHOLD, CURVATURE_GAP,
    MAX_SEGMENT, POINCARE_ITERATIONS, POINCARE_SEEDS, REFINEMENT_TOL, SURVIVOR_DEPTH, UNFOLDING_DV,
};
use tracelab_core::horseshoe::{thickness_vs_epsilon, EigenDirection};
use tracelab_core::io::{
    read_cloud_csv, write_arc_csv, write_branch_jsonl, write_chaos_csv, write_cloud_csv, ArcHeader,
    ChaosSidecar, PeriodicOrbitRecord,
};
use tracelab_core::manifolds::{
    find_intersections, grow_manifold_with, hunt_seeds, tangency_hunt, GrowthOptions, HuntConfig,
    ManifoldSide,
};
use tracelab_core::orbits::{
    chaos_grid_on, chaotic_cell_cloud, grid_seeds, poincare_cloud, stdmap_chaos_grid, ChaosMap,
    SheetSelection,
};
use tracelab_core::periodic::{
    continue_in_v, find_periodic, period_two_at_level, periodic_census, seed_from_torus,
    PeriodicOrbit, RationalTorusPoint,
};
use tracelab_core::surface::{sample_compact_component_with, solve_z, SamplingMode, Sheet};
use tracelab_core::Point3;

use crate::output::{config_error, create, print_json, write_json, Meta, PartialFailure};

#[derive(Debug, Parser)]
#[command(
    name = "tracelab",
    version,
    about = "Fibonacci trace map dynamics on cubic level surfaces"
)]
pub struct Cli {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Seed for every random draw.
    #[arg(long = "seed", global = true, default_value_t = 0)]
    pub rng_seed: u64,
    /// Arithmetic for manifold points; each command has its own default.
    #[arg(long, global = true, value_enum)]
    pub precision: Option<PrecisionArg>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true, env = "TRACELAB_WORKERS")]
    pub workers: Option<usize>,
    /// Validate the configuration and print the resolved plan without computing.
    #[arg(long, global = true)]
    pub dry_run: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PrecisionArg {
    Standard,
    Extended,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::Standard => Precision::Standard,
            PrecisionArg::Extended => Precision::Extended,
        }
    }
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Orbit point clouds on a level surface.
    Poincare(PoincareArgs),
    /// Lyapunov classification grid for the trace map or the standard map.
    Chaos(ChaosArgs),
    /// Periodic orbits by Newton, or a census of all short periods.
    Periodic(PeriodicArgs),
    /// Continue a periodic orbit in V.
    Continue(ContinueArgs),
    /// Stable and unstable manifold arcs of a hyperbolic periodic orbit.
    Manifold(ManifoldArgs),
    /// Search a V interval for tangencies between stable and unstable manifolds.
    Tangency(TangencyArgs),
    /// Thickness of a two-piece affine Cantor set.
    Thickness(ThicknessArgs),
    /// Thickness of the survivor section as the avoidance radius shrinks.
    Survivor(SurvivorArgs),
    /// Box-counting dimension of the chaotic part of a level surface.
    Boxdim(BoxdimArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PoincareArgs {
    /// Level of the invariant, in [-1, 0].
    #[arg(long = "V", alias = "v", allow_negative_numbers = true)]
    #[serde(rename = "V")]
    pub level: f64,
    /// Upper-sheet seeds on a G x G lattice over [-1, 1]^2.
    #[arg(long, conflicts_with_all = ["random", "seeds"])]
    pub grid: Option<usize>,
    /// Area-uniform random seeds drawn with --seed (the default seeding).
    #[arg(long, conflicts_with = "seeds")]
    pub random: Option<usize>,
    /// Explicit seeds "x,y[,z];..."; a missing z takes the upper sheet.
    #[arg(long, allow_hyphen_values = true)]
    pub seeds: Option<String>,
    /// Iterates per seed.
    #[arg(long, default_value_t = POINCARE_ITERATIONS)]
    pub n: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SheetArg {
    Upper,
    Lower,
    Full,
}

impl From<SheetArg> for SheetSelection {
    fn from(s: SheetArg) -> Self {
        match s {
            SheetArg::Upper => SheetSelection::Upper,
            SheetArg::Lower => SheetSelection::Lower,
            SheetArg::Full => SheetSelection::Full,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ChaosArgs {
    /// Trace-map level, in (-1, 0).
    #[arg(
        long = "V",
        alias = "v",
        allow_negative_numbers = true,
        conflicts_with = "k"
    )]
    #[serde(rename = "V")]
    pub level: Option<f64>,
    /// Use the standard map instead of the trace map.
    #[arg(long)]
    pub stdmap: bool,
    /// Standard-map parameter.
    #[arg(long, allow_negative_numbers = true, requires = "stdmap")]
    pub k: Option<f64>,
    /// Comma-separated parameter values (V, or k with --stdmap); one summary row each.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, conflicts_with_all = ["level", "k"])]
    pub sweep: Option<Vec<f64>>,
    #[arg(long, default_value_t = 100)]
    pub res: usize,
    #[arg(long, default_value_t = CHAOS_ITERATIONS)]
    pub n: usize,
    #[arg(long, default_value_t = CHAOS_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, value_enum, default_value_t = SheetArg::Upper)]
    pub sheet: SheetArg,
}

/// How to find the periodic orbit a command works on.
#[derive(Debug, Clone, Args, Serialize)]
pub struct OrbitArgs {
    /// Period; with neither --guess nor --torus only 2 is available, from the closed-form period-two curve.
    #[arg(long)]
    pub period: Option<usize>,
    /// Newton starting point "x,y,z".
    #[arg(
        long,
        value_delimiter = ',',
        allow_negative_numbers = true,
        conflicts_with = "torus"
    )]
    pub guess: Option<Vec<f64>>,
    /// Rational cat-map point "a,b,den", lifted to the cubic and continued to V.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub torus: Option<Vec<i64>>,
    /// Largest continuation step in V.
    #[arg(long, default_value_t = 0.01)]
    pub max_step: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PeriodicArgs {
    #[arg(long = "V", alias = "v", allow_negative_numbers = true)]
    #[serde(rename = "V")]
    pub level: f64,
    #[command(flatten)]
    pub orbit: OrbitArgs,
    /// List every orbit of period up to --max-period instead of a single one.
    #[arg(long, conflicts_with_all = ["guess", "torus"])]
    pub census: bool,
    #[arg(long, default_value_t = 6)]
    pub max_period: usize,
    /// Census seeds per axis.
    #[arg(long, default_value_t = 12)]
    pub grid: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ContinueArgs {
    /// Starting level.
    #[arg(long = "V", alias = "v", allow_negative_numbers = true)]
    #[serde(rename = "V")]
    pub level: f64,
    #[command(flatten)]
    pub orbit: OrbitArgs,
    /// Target level.
    #[arg(long, allow_negative_numbers = true)]
    pub to: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SideArg {
    Stable,
    Unstable,
    Both,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ManifoldArgs {
    #[arg(long = "V", alias = "v", allow_negative_numbers = true)]
    #[serde(rename = "V")]
    pub level: f64,
    #[command(flatten)]
    pub orbit: OrbitArgs,
    #[arg(long, value_enum, default_value_t = SideArg::Both)]
    pub side: SideArg,
    /// Target arclength of each arc.
    #[arg(long, default_value_t = 5.0)]
    pub arclength: f64,
    /// Largest turning angle between consecutive segments.
    #[arg(long, default_value_t = REFINEMENT_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = MAX_SEGMENT)]
    pub max_segment: f64,
    /// Stop growing at this curve parameter.
    #[arg(long)]
    pub max_param: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TangencyArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub vmin: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub vmax: f64,
    /// Longest period among census seeds.
    #[arg(long, default_value_t = 6)]
    pub period_max: usize,
    /// Census seeds per axis at vmax; 0 hunts with the period-two orbit alone.
    #[arg(long, default_value_t = 0)]
    pub census_grid: usize,
    /// Levels in the coarse scan.
    #[arg(long, default_value_t = HuntConfig::default().grid)]
    pub grid: usize,
    #[arg(long, default_value_t = HuntConfig::default().max_param)]
    pub max_param: f64,
    #[arg(long, default_value_t = HuntConfig::default().bisections)]
    pub bisections: usize,
    #[arg(long, default_value_t = ANGLE_TOL)]
    pub angle_tol: f64,
    /// Smallest accepted curvature gap.
    #[arg(long, default_value_t = CURVATURE_GAP)]
    pub delta: f64,
    /// Level offset for the unfolding speed and the crossing count.
    #[arg(long, default_value_t = UNFOLDING_DV)]
    pub dv: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ThicknessArgs {
    /// Middle-alpha Cantor set on [0, 1].
    #[arg(long, conflicts_with_all = ["left", "right"])]
    pub middle_alpha: Option<f64>,
    /// Left bridge ratio of an affine Cantor set on [0, 1].
    #[arg(long, requires = "right")]
    pub left: Option<f64>,
    /// Right bridge ratio.
    #[arg(long, requires = "left")]
    pub right: Option<f64>,
    #[arg(long, default_value_t = 6)]
    pub depth: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectionArg {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SurvivorArgs {
    /// Strictly decreasing avoidance radii.
    #[arg(long, value_delimiter = ',', required = true)]
    pub eps: Vec<f64>,
    #[arg(long, default_value_t = SURVIVOR_DEPTH)]
    pub depth: usize,
    /// Rational anchor "a,b,den" of the section.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0,0,1",
        allow_negative_numbers = true
    )]
    pub anchor: Vec<i64>,
    #[arg(long, value_enum, default_value_t = DirectionArg::Stable)]
    pub direction: DirectionArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BoxdimArgs {
    /// Level whose chaotic cells supply the cloud.
    #[arg(
        long = "V",
        alias = "v",
        allow_negative_numbers = true,
        required_unless_present = "input"
    )]
    #[serde(rename = "V")]
    pub level: Option<f64>,
    /// Box-count the (x, y) columns of a point-cloud CSV instead.
    #[arg(long, conflicts_with = "level")]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub res: usize,
    #[arg(long, default_value_t = CHAOS_ITERATIONS)]
    pub n: usize,
    #[arg(long, default_value_t = CHAOS_THRESHOLD)]
    pub threshold: f64,
    /// Iterates stored per chaotic cell.
    #[arg(long, default_value_t = 2000)]
    pub iterates: usize,
    /// Box sizes run from extent / 2^first down to extent / 2^last.
    #[arg(long, default_value_t = 2)]
    pub first: u32,
    #[arg(long, default_value_t = 7)]
    pub last: u32,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Poincare(_) => "poincare",
            Command::Chaos(_) => "chaos",
            Command::Periodic(_) => "periodic",
            Command::Continue(_) => "continue",
            Command::Manifold(_) => "manifold",
            Command::Tangency(_) => "tangency",
            Command::Thickness(_) => "thickness",
            Command::Survivor(_) => "survivor",
            Command::Boxdim(_) => "boxdim",
        }
    }

    fn default_precision(&self) -> Precision {
        match self {
            Command::Tangency(_) => Precision::Extended,
            _ => Precision::Standard,
        }
    }

    /// Fills in implied choices so the embedded config is complete.
    fn resolve(&mut self) -> Result<()> {
        match self {
            Command::Poincare(a) => {
                if !(a.level >= -1.0 && a.level <= 0.0) {
                    return Err(config_error(format!(
                        "poincare needs -1 <= V <= 0, got {}",
                        a.level
                    )));
                }
                if a.grid.is_none() && a.random.is_none() && a.seeds.is_none() {
                    a.random = Some(POINCARE_SEEDS);
                }
                if a.n == 0 {
                    return Err(config_error("n must be positive"));
                }
            }
            Command::Chaos(a) => {
                let has_param = if a.stdmap {
                    a.k.is_some()
                } else {
                    a.level.is_some()
                };
                if !has_param && a.sweep.is_none() {
                    return Err(config_error(if a.stdmap {
                        "--stdmap needs --k or --sweep"
                    } else {
                        "chaos needs --V or --sweep"
                    }));
                }
                if a.sweep.as_ref().is_some_and(|s| s.is_empty()) {
                    return Err(config_error("--sweep needs at least one value"));
                }
            }
            Command::Periodic(a) => {
                if !a.census {
                    a.orbit.check()?;
                }
            }
            Command::Continue(a) => a.orbit.check()?,
            Command::Manifold(a) => a.orbit.check()?,
            Command::Tangency(a) => {
                if a.period_max == 0 {
                    return Err(config_error("--period-max must be positive"));
                }
            }
            Command::Thickness(a) => {
                if a.middle_alpha.is_none() && a.left.is_none() {
                    return Err(config_error(
                        "thickness needs --middle-alpha or --left/--right",
                    ));
                }
            }
            Command::Survivor(a) => {
                if a.anchor.len() != 3 {
                    return Err(config_error("--anchor takes three integers a,b,den"));
                }
            }
            Command::Boxdim(a) => {
                if a.first >= a.last {
                    return Err(config_error("--first must be below --last"));
                }
            }
        }
        Ok(())
    }

    fn outputs(&self) -> Vec<String> {
        let names: &[&str] = match self {
            Command::Poincare(_) => &["poincare.csv", "poincare.json"],
            Command::Chaos(a) if a.sweep.is_some() => &["chaos_sweep.csv", "chaos_sweep.json"],
            Command::Chaos(_) => &["chaos.csv", "chaos.json"],
            Command::Periodic(_) => &["periodic.json"],
            Command::Continue(_) => &["branch.jsonl"],
            Command::Manifold(a) => match a.side {
                SideArg::Stable => &["manifold_stable.csv", "manifold.json"],
                SideArg::Unstable => &["manifold_unstable.csv", "manifold.json"],
                SideArg::Both => &[
                    "manifold_stable.csv",
                    "manifold_unstable.csv",
                    "manifold.json",
                ],
            },
            Command::Tangency(_) => &["tangency.json"],
            Command::Thickness(_) => &["thickness.json"],
            Command::Survivor(_) => &["survivor.json"],
            Command::Boxdim(_) => &["boxdim.json"],
        };
        names.iter().map(|s| s.to_string()).collect()
    }
}

impl OrbitArgs {
    fn check(&self) -> Result<()> {
        if let Some(g) = &self.guess {
            if g.len() != 3 {
                return Err(config_error("--guess takes three numbers x,y,z"));
            }
            if self.period.is_none() {
                return Err(config_error("--guess needs --period"));
            }
        } else if let Some(t) = &self.torus {
            if t.len() != 3 {
                return Err(config_error("--torus takes three integers a,b,den"));
            }
        } else if self.period.unwrap_or(2) != 2 {
            return Err(config_error("periods other than 2 need --guess or --torus"));
        }
        if self.max_step.is_nan() || self.max_step <= 0.0 {
            return Err(config_error("--max-step must be positive"));
        }
        Ok(())
    }

    fn resolve(&self, v: f64) -> Result<PeriodicOrbit> {
        if let Some(g) = &self.guess {
            let period = self.period.unwrap_or(2);
            return Ok(find_periodic(v, period, Point3::new(g[0], g[1], g[2])?)?);
        }
        if let Some(t) = &self.torus {
            let t = RationalTorusPoint::new(t[0], t[1], t[2])?;
            if let Some(p) = self.period {
                if p != t.trace_period() {
                    return Err(config_error(format!(
                        "torus point has period {}, not {p}",
                        t.trace_period()
                    )));
                }
            }
            return Ok(seed_from_torus(t, v, self.max_step)?);
        }
        Ok(find_periodic(v, 2, period_two_at_level(v)?)?)
    }
}

/// Resolves the configuration, sets up the worker pool and runs the command.
pub fn run(cli: &mut Cli) -> Result<()> {
    cli.command.resolve()?;
    let workers = match cli.run.workers {
        Some(0) => return Err(config_error("--workers must be positive")),
        Some(n) => n,
        None => std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1),
    };
    let precision = cli
        .run
        .precision
        .map(Precision::from)
        .unwrap_or(cli.command.default_precision());
    let meta = Meta {
        tool: "tracelab",
        version: tracelab_core::VERSION,
        config: &cli.command,
        rng_seed: cli.run.rng_seed,
        precision,
        defaults: DefaultsTable::default(),
    };
    if cli.run.dry_run {
        let plan = serde_json::json!({
            "plan": meta,
            "workers": workers,
            "out": cli.run.out,
            "outputs": cli.command.outputs(),
        });
        println!("{}", serde_json::to_string_pretty(&plan)?);
        return Ok(());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()?;
    let out = cli.run.out.as_path();
    pool.install(|| match &cli.command {
        Command::Poincare(a) => poincare(a, &meta, out),
        Command::Chaos(a) => chaos(a, &meta, out),
        Command::Periodic(a) => periodic(a, &meta, out),
        Command::Continue(a) => continuation(a, &meta, out),
        Command::Manifold(a) => manifold(a, &meta, out),
        Command::Tangency(a) => tangency(a, &meta, out),
        Command::Thickness(a) => thickness_cmd(a, &meta, out),
        Command::Survivor(a) => survivor(a, &meta, out),
        Command::Boxdim(a) => boxdim(a, &meta, out),
    })
    .with_context(|| format!("{} failed", cli.command.name()))
}

fn parse_seeds(text: &str, v: f64) -> Result<Vec<Point3>> {
    text.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            let nums: Vec<f64> = s
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| config_error(format!("seed {s:?}: {e}")))?;
            match nums[..] {
                [x, y, z] => Ok(Point3::new(x, y, z)?),
                [x, y] => solve_z(x, y, v)
                    .on_sheet(Sheet::Upper)
                    .ok_or_else(|| {
                        config_error(format!("seed ({x}, {y}) is off the level V = {v}"))
                    })
                    .and_then(|z| Ok(Point3::new(x, y, z)?)),
                _ => Err(config_error(format!(
                    "seed {s:?} needs two or three coordinates"
                ))),
            }
        })
        .collect()
}

fn poincare(a: &PoincareArgs, meta: &Meta, out: &Path) -> Result<()> {
    let seeds = if let Some(g) = a.grid {
        grid_seeds(a.level, g)
    } else if let Some(text) = &a.seeds {
        parse_seeds(text, a.level)?
    } else {
        let count = a.random.unwrap_or(POINCARE_SEEDS);
        let mut s = sample_compact_component_with(
            a.level,
            count,
            SamplingMode::AreaUniform {
                seed: meta.rng_seed,
            },
        )?;
        s.truncate(count);
        s
    };
    if seeds.is_empty() {
        return Err(config_error("no seeds lie on the level"));
    }
    let cloud = poincare_cloud(a.level, &seeds, a.n);
    write_cloud_csv(create(out, "poincare.csv")?, meta, &cloud)?;
    let summary = serde_json::json!({
        "V": a.level,
        "seeds": seeds.len(),
        "points": cloud.points.len(),
        "distinct_points": cloud.distinct_points(),
        "failures": cloud.failures,
    });
    write_json(out, "poincare.json", meta, "summary", &summary)?;
    print_json(&summary)?;
    if !cloud.failures.is_empty() {
        return Err(PartialFailure(format!(
            "{} of {} seeds failed; their partial orbits were written",
            cloud.failures.len(),
            seeds.len()
        ))
        .into());
    }
    Ok(())
}

fn chaos_map(a: &ChaosArgs, param: f64) -> Result<ChaosMap> {
    Ok(if a.stdmap {
        stdmap_chaos_grid(param, a.res, a.n, a.threshold)?
    } else {
        chaos_grid_on(param, a.res, a.n, a.threshold, a.sheet.into())?
    })
}

fn chaos(a: &ChaosArgs, meta: &Meta, out: &Path) -> Result<()> {
    if let Some(sweep) = &a.sweep {
        let rows: Vec<ChaosSidecar> = sweep
            .iter()
            .map(|&p| chaos_map(a, p).map(|m| ChaosSidecar::from(&m)))
            .collect::<Result<_>>()?;
        let mut w = create(out, "chaos_sweep.csv")?;
        writeln!(w, "# {}", serde_json::to_string(meta)?)?;
        writeln!(w, "param,on_surface,chaotic,chaotic_fraction")?;
        for (p, r) in sweep.iter().zip(&rows) {
            writeln!(
                w,
                "{p},{},{},{}",
                r.on_surface, r.chaotic, r.chaotic_fraction
            )?;
        }
        w.flush()?;
        write_json(out, "chaos_sweep.json", meta, "rows", &rows)?;
        return print_json(&rows);
    }
    let param = if a.stdmap { a.k } else { a.level }.expect("resolved");
    let map = chaos_map(a, param)?;
    write_chaos_csv(create(out, "chaos.csv")?, meta, &map)?;
    let sidecar = ChaosSidecar::from(&map);
    write_json(out, "chaos.json", meta, "summary", &sidecar)?;
    print_json(&sidecar)
}

/// A periodic orbit with the identities its monodromy must satisfy.
#[derive(Serialize)]
struct OrbitSummary {
    #[serde(flatten)]
    record: PeriodicOrbitRecord,
    closure_error: f64,
    left_eigen_residual: f64,
    determinant_residual: f64,
}

impl From<&PeriodicOrbit> for OrbitSummary {
    fn from(o: &PeriodicOrbit) -> Self {
        Self {
            record: o.into(),
            closure_error: o.max_closure_error(),
            left_eigen_residual: o.left_eigen_residual(),
            determinant_residual: o.determinant_residual(),
        }
    }
}

fn periodic(a: &PeriodicArgs, meta: &Meta, out: &Path) -> Result<()> {
    let orbits = if a.census {
        periodic_census(a.level, a.max_period, a.grid)
    } else {
        vec![a.orbit.resolve(a.level)?]
    };
    let summaries: Vec<OrbitSummary> = orbits.iter().map(OrbitSummary::from).collect();
    write_json(out, "periodic.json", meta, "orbits", &summaries)?;
    let brief: Vec<_> = orbits
        .iter()
        .map(|o| serde_json::json!({"period": o.period, "stability": o.stability, "trace": o.residual_trace, "point": o.points[0]}))
        .collect();
    print_json(&brief)
}

fn continuation(a: &ContinueArgs, meta: &Meta, out: &Path) -> Result<()> {
    let start = a.orbit.resolve(a.level)?;
    let branch = continue_in_v(&start, a.to, a.orbit.max_step)?;
    let mut w = create(out, "branch.jsonl")?;
    writeln!(
        w,
        "{}",
        serde_json::to_string(&serde_json::json!({"record": "meta", "meta": meta}))?
    )?;
    write_branch_jsonl(&mut w, &branch)?;
    w.flush()?;
    let summary = serde_json::json!({
        "orbits": branch.orbits.len(),
        "events": branch.events,
        "reached": branch.reached(a.to),
        "last_V": branch.last().level,
    });
    print_json(&summary)?;
    if !branch.reached(a.to) {
        return Err(tracelab_core::Error::BranchLost(branch.last().level).into());
    }
    Ok(())
}

fn manifold(a: &ManifoldArgs, meta: &Meta, out: &Path) -> Result<()> {
    let po = a.orbit.resolve(a.level)?;
    let options = GrowthOptions {
        refinement_tol: a.tol,
        max_segment: a.max_segment,
        precision: meta.precision,
        max_param: a.max_param,
    };
    let sides: &[(ManifoldSide, &str)] = match a.side {
        SideArg::Stable => &[(ManifoldSide::Stable, "manifold_stable.csv")],
        SideArg::Unstable => &[(ManifoldSide::Unstable, "manifold_unstable.csv")],
        SideArg::Both => &[
            (ManifoldSide::Stable, "manifold_stable.csv"),
            (ManifoldSide::Unstable, "manifold_unstable.csv"),
        ],
    };
    let mut arcs = Vec::new();
    for &(side, name) in sides {
        let arc = grow_manifold_with(&po, side, a.arclength, options)?;
        write_arc_csv(create(out, name)?, meta, &arc)?;
        arcs.push(arc);
    }
    let headers: Vec<ArcHeader> = arcs.iter().map(ArcHeader::from).collect();
    let vertices: Vec<usize> = arcs.iter().map(|arc| arc.vertices.len()).collect();
    let crossings = (arcs.len() == 2).then(|| find_intersections(&arcs[0], &arcs[1]));
    let summary = serde_json::json!({
        "arcs": headers,
        "vertices": vertices,
        "homoclinic_crossings": crossings.as_ref().map(Vec::len),
        "crossings": crossings.as_ref().map(|c| c.iter().map(|x| serde_json::json!({"point": x.point, "angle": x.angle, "params": [x.params.0, x.params.1]})).collect::<Vec<_>>()),
    });
    write_json(out, "manifold.json", meta, "summary", &summary)?;
    print_json(
        &serde_json::json!({"vertices": vertices, "homoclinic_crossings": summary["homoclinic_crossings"]}),
    )
}

fn tangency(a: &TangencyArgs, meta: &Meta, out: &Path) -> Result<()> {
    let seeds = hunt_seeds(a.vmax, a.period_max, a.census_grid);
    if seeds.is_empty() {
        return Err(config_error(format!(
            "no hyperbolic orbit of period <= {} found at V = {}",
            a.period_max, a.vmax
        )));
    }
    let cfg = HuntConfig {
        grid: a.grid,
        max_param: a.max_param,
        angle_tol: a.angle_tol,
        delta: a.delta,
        bisections: a.bisections,
        dv: a.dv,
        precision: meta.precision,
        ..HuntConfig::default()
    };
    let report = tangency_hunt((a.vmin, a.vmax), &seeds, &cfg)?;
    let valid = report.events.iter().filter(|e| e.is_valid()).count();
    let records: Vec<PeriodicOrbitRecord> = seeds.iter().map(PeriodicOrbitRecord::from).collect();
    let body = serde_json::json!({ "seeds": records, "valid_events": valid, "report": report });
    write_json(out, "tangency.json", meta, "result", &body)?;
    print_json(&report.events)
}

fn thickness_cmd(a: &ThicknessArgs, meta: &Meta, out: &Path) -> Result<()> {
    let set = match (a.middle_alpha, a.left, a.right) {
        (Some(alpha), ..) => middle_alpha(alpha, a.depth)?,
        (None, Some(l), Some(r)) => affine_cantor([0.0, 1.0], l, r, a.depth)?,
        _ => unreachable!("resolved"),
    };
    let report = thickness_report(&set);
    write_json(out, "thickness.json", meta, "report", &report)?;
    println!("{}", report.tau);
    Ok(())
}

fn survivor(a: &SurvivorArgs, meta: &Meta, out: &Path) -> Result<()> {
    let anchor = RationalTorusPoint::new(a.anchor[0], a.anchor[1], a.anchor[2])?;
    let direction = match a.direction {
        DirectionArg::Stable => EigenDirection::Stable,
        DirectionArg::Unstable => EigenDirection::Unstable,
    };
    let table = thickness_vs_epsilon(&a.eps, anchor, direction, a.depth)?;
    write_json(out, "survivor.json", meta, "table", &table)?;
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
    println!("epsilon\ttau\tdim_lower_bound\tgaps");
    for r in &table.rows {
        println!(
            "{}\t{}\t{}\t{}",
            r.epsilon,
            cell(r.tau),
            cell(r.dim_lower_bound),
            r.gaps
        );
    }
    println!("# monotone={} nested={}", table.monotone, table.nested);
    Ok(())
}

fn boxdim(a: &BoxdimArgs, meta: &Meta, out: &Path) -> Result<()> {
    let (points, chaotic_cells) = if let Some(path) = &a.input {
        let file =
            std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let rows = read_cloud_csv(file)?;
        (rows.iter().map(|r| [r.x, r.y]).collect::<Vec<_>>(), None)
    } else {
        let map = chaos_grid_on(
            a.level.expect("resolved"),
            a.res,
            a.n,
            a.threshold,
            SheetSelection::Upper,
        )?;
        (chaotic_cell_cloud(&map, a.iterates)?, Some(map.chaotic()))
    };
    let extent = cloud_extent(&points);
    let report = box_dimension(&points, &dyadic_scales(extent, a.first, a.last))?;
    let body = serde_json::json!({
        "points": points.len(),
        "chaotic_cells": chaotic_cells,
        "extent": extent,
        "box_count": report,
    });
    write_json(out, "boxdim.json", meta, "result", &body)?;
    print_json(
        &serde_json::json!({"dimension": report.slope, "r2": report.r2, "points": points.len()}),
    )
}
