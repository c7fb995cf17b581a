//! Configuration-driven experiment runner for the planar string-kernel solver
//! and the spatial kernel verification suite.

pub mod config;

use config::{Command, ExperimentConfig, Sources};
use serde::Serialize;
use std::collections::hash_map::DefaultHasher;
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};
use stringkern::bie2d::{
    annulus_sources, assemble, default_sources, deflate, interior_targets, l2_scale, manufacture, offsurface_traction,
    run_manufactured, solve, BieError, BoundaryDensity, DenseSystem, Manufactured,
};
use stringkern::geometry2d::{build_panels, make_strings, GeometryError, Panelization, ParametricCurve, StringMode};
use stringkern::kernels2d::{ElasticParams, Vec2};
use stringkern::numerics::GmresError;
use stringkern::verify3d::{run_suite, VerificationReport};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("solver did not converge: {0}")]
    Solver(String),
    #[error("{0}")]
    Failed(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Geometry(_) => 3,
            CliError::Solver(_) => 4,
            CliError::Failed(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        CliError::Geometry(e.to_string())
    }
}

impl From<BieError> for CliError {
    fn from(e: BieError) -> Self {
        match e {
            BieError::InvalidStrings(_) | BieError::InteriorSource(_) | BieError::TargetNotInterior(_) => {
                CliError::Geometry(e.to_string())
            }
            BieError::Gmres(GmresError::Breakdown { .. } | GmresError::NotConverged { .. }) => {
                CliError::Solver(e.to_string())
            }
            other => CliError::Failed(other.to_string()),
        }
    }
}

/// Files written by a run and a one-line summary per file.
#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    ExperimentConfig::from_json(&text).map_err(CliError::Config)
}

pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutput, CliError> {
    cfg.validate().map_err(CliError::Config)?;
    std::fs::create_dir_all(out_dir)?;
    let mut out = RunOutput::default();
    match cfg.command {
        Command::Solve2d => solve2d(cfg, out_dir, &mut out)?,
        Command::Convergence2d => convergence2d(cfg, out_dir, &mut out)?,
        Command::CondSweepH => cond_sweep_h(cfg, out_dir, &mut out)?,
        Command::CondSweepLambda => cond_sweep_lambda(cfg, out_dir, &mut out)?,
        Command::CondOrientation => cond_orientation(cfg, out_dir, &mut out)?,
        Command::JumpTest => jump_test(cfg, out_dir, &mut out)?,
        Command::Verify3d => verify3d(cfg, out_dir, &mut out)?,
    }
    Ok(out)
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

struct Csv {
    text: String,
}

impl Csv {
    fn new(cfg: &ExperimentConfig, columns: &[&str]) -> Self {
        let mut text = format!("# config: {}\n", cfg.canonical());
        text.push_str(&columns.join(","));
        text.push('\n');
        Self { text }
    }

    fn row(&mut self, fields: &[String]) {
        let _ = writeln!(self.text, "{}", fields.join(","));
    }

    fn write(self, dir: &Path, name: &str, out: &mut RunOutput) -> Result<(), CliError> {
        let path = dir.join(name);
        std::fs::write(&path, self.text)?;
        out.files.push(path);
        Ok(())
    }
}

fn curve(cfg: &ExperimentConfig) -> Result<ParametricCurve, CliError> {
    Ok(ParametricCurve::from_spec(&cfg.geometry)?)
}

fn params(cfg: &ExperimentConfig) -> Result<ElasticParams, CliError> {
    cfg.params().map_err(CliError::Config)
}

fn sources(cfg: &ExperimentConfig, pan: &Panelization) -> Vec<(Vec2, Vec2)> {
    match &cfg.sources {
        Sources::Default => default_sources(pan, cfg.seed),
        Sources::Annulus { count } => annulus_sources(pan, *count, cfg.seed),
        Sources::Explicit { points } => {
            points.iter().map(|p| (Vec2::new(p[0], p[1]), Vec2::new(p[2], p[3]))).collect()
        }
    }
}

fn system(pan: &Panelization, mode: &StringMode, h: f64) -> Result<DenseSystem, CliError> {
    let strings = make_strings(pan, mode, h)?;
    Ok(l2_scale(deflate(assemble(pan, &strings)?)))
}

fn condition(sys: &DenseSystem) -> Result<f64, CliError> {
    sys.condition().map_err(|e| CliError::Failed(e.to_string()))
}

fn mode_name(mode: &StringMode) -> String {
    match mode {
        StringMode::Normal => "normal".into(),
        StringMode::Radial => "radial".into(),
        StringMode::PolylineTo { x, y } => format!("polyline_to({x};{y})"),
    }
}

fn solve2d(cfg: &ExperimentConfig, dir: &Path, out: &mut RunOutput) -> Result<(), CliError> {
    let pan = build_panels(&curve(cfg)?, cfg.panels, cfg.order)?;
    let strings = make_strings(&pan, &cfg.strings, cfg.h)?;
    let data = manufacture(&pan, &sources(cfg, &pan), &params(cfg)?)?;
    let targets = interior_targets(&pan, cfg.targets);
    let rep = run_manufactured(&pan, &strings, &data, cfg.gmres_tol, &targets)?;

    let mut density = Csv::new(cfg, &["node", "x", "y", "rho1", "rho2"]);
    for (i, n) in pan.nodes().iter().enumerate() {
        let r = rep.density.at(i);
        density.row(&[i.to_string(), num(n.position.x), num(n.position.y), num(r.x), num(r.y)]);
    }
    density.write(dir, "solve2d_density.csv", out)?;

    let mut field = Csv::new(cfg, &["x", "y", "u1", "u2", "residual"]);
    for (k, x) in rep.targets.iter().enumerate() {
        field.row(&[num(x.x), num(x.y), num(rep.u[k].x), num(rep.u[k].y), num(rep.fit.residuals[k])]);
    }
    field.write(dir, "solve2d_field.csv", out)?;

    let mut summary =
        Csv::new(cfg, &["n_nodes", "n_targets", "n_iter", "gmres_residual", "max_rel_residual", "v0_1", "v0_2", "omega"]);
    summary.row(&[
        pan.len().to_string(),
        targets.len().to_string(),
        rep.iters.to_string(),
        num(rep.gmres_residual),
        num(rep.fit.max_residual()),
        num(rep.fit.v0[0]),
        num(rep.fit.v0[1]),
        num(rep.fit.omega),
    ]);
    summary.write(dir, "solve2d_summary.csv", out)?;
    out.summary.push(format!(
        "solve2d: {} nodes, {} iterations, max relative residual {:e}",
        pan.len(),
        rep.iters,
        rep.fit.max_residual()
    ));
    Ok(())
}

/// Sources and targets come from the coarsest level so every level solves
/// the same problem and is measured at the same points.
fn convergence2d(cfg: &ExperimentConfig, dir: &Path, out: &mut RunOutput) -> Result<(), CliError> {
    let c = curve(cfg)?;
    let p = params(cfg)?;
    let coarse = build_panels(&c, cfg.panels_list[0], cfg.order)?;
    let srcs = sources(cfg, &coarse);
    let targets = interior_targets(&coarse, cfg.targets);
    let mut csv = Csv::new(cfg, &["n_panels", "n_nodes", "n_iter", "max_rel_residual", "implied_order"]);
    let mut prev: Option<(usize, f64)> = None;
    for &panels in &cfg.panels_list {
        let pan = build_panels(&c, panels, cfg.order)?;
        let strings = make_strings(&pan, &cfg.strings, cfg.h)?;
        let data = manufacture(&pan, &srcs, &p)?;
        let rep = run_manufactured(&pan, &strings, &data, cfg.gmres_tol, &targets)?;
        let err = rep.fit.max_residual();
        let order = prev
            .map(|(pp, pe)| num((pe / err).ln() / (panels as f64 / pp as f64).ln()))
            .unwrap_or_default();
        csv.row(&[panels.to_string(), pan.len().to_string(), rep.iters.to_string(), num(err), order.clone()]);
        out.summary.push(format!("convergence2d: {panels} panels, {} iterations, residual {err:e}, order {order}", rep.iters));
        prev = Some((panels, err));
    }
    csv.write(dir, "convergence2d.csv", out)
}

fn cond_sweep_h(cfg: &ExperimentConfig, dir: &Path, out: &mut RunOutput) -> Result<(), CliError> {
    let pan = build_panels(&curve(cfg)?, cfg.panels, cfg.order)?;
    let mut csv = Csv::new(cfg, &["mode", "h", "cond"]);
    for mode in &cfg.modes {
        for &h in &cfg.h_list {
            let cond = condition(&system(&pan, mode, h)?)?;
            csv.row(&[mode_name(mode), num(h), num(cond)]);
            out.summary.push(format!("cond_sweep_h: {} h={h} cond={cond:e}", mode_name(mode)));
        }
    }
    csv.write(dir, "cond_sweep_h.csv", out)
}

fn matrix_hash(sys: &DenseSystem) -> u64 {
    let mut hasher = DefaultHasher::new();
    for v in sys.matrix().as_slice() {
        v.to_bits().hash(&mut hasher);
    }
    hasher.finish()
}

/// One system per `λ`, each solved against the same data manufactured
/// with the configured `λ`.
fn cond_sweep_lambda(cfg: &ExperimentConfig, dir: &Path, out: &mut RunOutput) -> Result<(), CliError> {
    let pan = build_panels(&curve(cfg)?, cfg.panels, cfg.order)?;
    let data = manufacture(&pan, &sources(cfg, &pan), &params(cfg)?)?;
    let mut csv = Csv::new(cfg, &["lambda", "alpha", "cond", "n_iter", "matrix_hash", "identical_to_first"]);
    let mut first: Option<(Vec<f64>, f64, usize)> = None;
    let mut all_identical = true;
    for l in &cfg.lambda_list {
        let lp = l.params(cfg.mu).map_err(CliError::Config)?;
        let sys = system(&pan, &cfg.strings, cfg.h)?;
        let cond = condition(&sys)?;
        let iters = solve(&sys, &data.traction, cfg.gmres_tol)?.iters;
        let identical = match &first {
            None => {
                first = Some((sys.matrix().as_slice().to_vec(), cond, iters));
                true
            }
            Some((m, c, i)) => m.as_slice() == sys.matrix().as_slice() && c.to_bits() == cond.to_bits() && *i == iters,
        };
        all_identical &= identical;
        let label = if lp.is_incompressible() { "inf".to_string() } else { num(lp.lambda()) };
        csv.row(&[
            label.clone(),
            num(lp.alpha()),
            num(cond),
            iters.to_string(),
            format!("{:016x}", matrix_hash(&sys)),
            identical.to_string(),
        ]);
        out.summary.push(format!("cond_sweep_lambda: lambda={label} cond={cond:e} iters={iters} identical={identical}"));
    }
    csv.write(dir, "cond_sweep_lambda.csv", out)?;
    if all_identical {
        Ok(())
    } else {
        Err(CliError::Failed("systems differ across lambda".into()))
    }
}

fn cond_orientation(cfg: &ExperimentConfig, dir: &Path, out: &mut RunOutput) -> Result<(), CliError> {
    let pan = build_panels(&curve(cfg)?, cfg.panels, cfg.order)?;
    let data: Manufactured = manufacture(&pan, &sources(cfg, &pan), &params(cfg)?)?;
    let mut csv = Csv::new(cfg, &["mode", "h", "cond", "n_iter"]);
    for case in &cfg.cases {
        let sys = system(&pan, &case.strings, case.h)?;
        let cond = condition(&sys)?;
        let iters = solve(&sys, &data.traction, cfg.gmres_tol)?.iters;
        csv.row(&[mode_name(&case.strings), num(case.h), num(cond), iters.to_string()]);
        out.summary.push(format!("cond_orientation: {} h={} cond={cond:e} iters={iters}", mode_name(&case.strings), case.h));
    }
    csv.write(dir, "cond_orientation.csv", out)
}

/// Smooth synthetic density used by the jump test.
pub fn jump_density(pan: &Panelization) -> BoundaryDensity {
    BoundaryDensity::from_fn(pan, |i| {
        let t = pan.nodes()[i].t;
        Vec2::new((2.0 * t).cos() + 0.3, (3.0 * t).sin())
    })
}

fn jump_test(cfg: &ExperimentConfig, dir: &Path, out: &mut RunOutput) -> Result<(), CliError> {
    let pan = build_panels(&curve(cfg)?, cfg.panels, cfg.order)?;
    let strings = make_strings(&pan, &cfg.strings, cfg.h)?;
    let rho = jump_density(&pan);
    let on = assemble(&pan, &strings)?.matrix().matvec(rho.values());
    let mut csv = Csv::new(cfg, &["node", "t", "delta", "traction1", "traction2", "error", "order"]);
    let stride = (pan.len() / cfg.jump_nodes).max(1);
    for node in (0..pan.len()).step_by(stride).take(cfg.jump_nodes) {
        let target = Vec2::new(on[2 * node], on[2 * node + 1]);
        let mut prev: Option<(f64, f64)> = None;
        for &delta in &cfg.deltas {
            let t = offsurface_traction(&rho, &pan, &strings, node, delta)?;
            let err = (t - target).norm();
            let order = prev.map(|(pd, pe)| num((pe / err).ln() / (pd / delta).ln())).unwrap_or_default();
            csv.row(&[
                node.to_string(),
                num(pan.nodes()[node].t),
                num(delta),
                num(t.x),
                num(t.y),
                num(err),
                order,
            ]);
            prev = Some((delta, err));
        }
    }
    out.summary.push(format!("jump_test: {} nodes, {} offsets", cfg.jump_nodes.min(pan.len()), cfg.deltas.len()));
    csv.write(dir, "jump_test.csv", out)
}

#[derive(Serialize)]
struct Verify3dReport<'a> {
    config: &'a ExperimentConfig,
    pass: bool,
    reports: Vec<VerificationReport>,
}

fn verify3d(cfg: &ExperimentConfig, dir: &Path, out: &mut RunOutput) -> Result<(), CliError> {
    let params = cfg
        .verify3d
        .params
        .iter()
        .map(|(l, mu)| l.params(*mu))
        .collect::<Result<Vec<_>, _>>()
        .map_err(CliError::Config)?;
    let reports = run_suite(&cfg.verify3d.settings, &params);
    let pass = reports.iter().all(|r| r.pass);
    for r in &reports {
        out.summary.push(format!(
            "verify3d: {} {} (max error {:e}, tolerance {:e})",
            r.check,
            if r.pass { "pass" } else { "FAIL" },
            r.max_error,
            r.tolerance
        ));
    }
    let path = dir.join("verify3d.json");
    let text = serde_json::to_string_pretty(&Verify3dReport { config: cfg, pass, reports })
        .map_err(|e| CliError::Failed(e.to_string()))?;
    std::fs::write(&path, text + "\n")?;
    out.files.push(path);
    if pass {
        Ok(())
    } else {
        Err(CliError::Failed("verify3d checks failed".into()))
    }
}
