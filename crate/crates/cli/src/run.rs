//! Execution of a validated scenario into tables.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use num_complex::Complex64;
use probe_core::carleman3d::Needle3d;
use probe_core::forward2d::{dtn_assemble, Basis, Curve};
use probe_core::needle2d::{fundamental_2d, needle2d_eval, Direction2};
use probe_core::probe::{
    scan_reconstruct, DtnData, ScheduleParams, ThetaRule, TipGrid, VerdictConfig, THETA_FACTOR,
};
use probe_core::vekua::{HelmholtzNeedle, HelmholtzNeedleParams};
use probe_core::ProbeError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::output::{num, write_atomic, Table};
use crate::scenario::*;

/// Transverse offset at which the axis sweeps evaluate the quadrature.
pub const AXIS_OFFSET: f64 = 1e-6;
/// Eval2D points closer than this to the tip are redrawn.
pub const TIP_EXCLUSION: f64 = 1e-3;

/// Tables plus the metadata that goes in their header line.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub tables: Vec<Table>,
    pub meta: Value,
}

impl RunOutput {
    pub fn max_discrepancy(&self) -> Option<f64> {
        self.tables.iter().filter_map(Table::max_discrepancy).reduce(f64::max)
    }
}

/// Compute every table of the scenario.
pub fn execute(s: &Scenario) -> Result<RunOutput> {
    s.validate()?;
    let mut meta = json!({ "kind": s.kind.name(), "scenario_hash": s.hash() });
    let tables = match s.kind {
        ScenarioKind::Eval2D => vec![eval2d(s)?],
        ScenarioKind::Eval3D => vec![axis_sweep(s, false)?],
        ScenarioKind::EvalHelmholtz => vec![axis_sweep(s, true)?],
        ScenarioKind::ForwardOracle => {
            let Curve::Circle { radius, .. } = s.cavities[0] else { unreachable!("validated") };
            vec![forward_oracle(
                radius,
                s.outer_radius.unwrap_or(1.0),
                s.forward_modes.unwrap_or(DEFAULT_FORWARD_MODES),
                s.forward_nodes.unwrap_or(DEFAULT_FORWARD_NODES),
            )?]
        }
        ScenarioKind::ProbeScan => {
            let (tables, verdict) = probe_scan(s)?;
            meta["verdict"] = verdict;
            tables
        }
    };
    meta["parameters"] = parameters(s);
    Ok(RunOutput { tables, meta })
}

/// Write the tables under `output.dir` and return their paths.
pub fn write_outputs(s: &Scenario, out: &RunOutput) -> Result<Vec<PathBuf>> {
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let mut header = out.meta.clone();
    header["created_unix"] = json!(created);
    out.tables.iter().map(|t| write_atomic(&s.output_dir(), t, &header)).collect()
}

fn parameters(s: &Scenario) -> Value {
    json!({
        "outer_radius": s.outer_radius.unwrap_or(1.0),
        "cavities": s.cavities.len(),
        "needle_tip": s.needle_tip,
        "needle_dir": s.needle_dir,
        "alpha": s.alpha,
        "tau": s.tau,
        "lambda": s.lambda,
        "eps0": s.eps0.unwrap_or(DEFAULT_EPS0),
        "n_max": s.n_max.unwrap_or(DEFAULT_N_MAX),
        "grid": [s.grid_nx, s.grid_ny, s.grid_directions],
        "eval_points": s.eval_points.unwrap_or(DEFAULT_EVAL_POINTS),
        "sweep": [s.sweep_s_min.unwrap_or(DEFAULT_SWEEP.0), s.sweep_s_max.unwrap_or(DEFAULT_SWEEP.1)],
        "forward_modes": s.forward_modes.unwrap_or(DEFAULT_FORWARD_MODES),
        "forward_nodes": s.forward_nodes.unwrap_or(DEFAULT_FORWARD_NODES),
        "rng_seed": s.seed.unwrap_or(0),
    })
}

fn eval2d(s: &Scenario) -> Result<Table> {
    let (tip, dir) = (s.needle_tip.as_deref().unwrap(), s.needle_dir.as_deref().unwrap());
    let x = [tip[0], tip[1]];
    let dir = Direction2::new(dir[0], dir[1])?;
    let (alpha, tau) = (s.alpha.unwrap(), s.tau.unwrap());
    let r = s.outer_radius.unwrap_or(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed.unwrap_or(0));
    let mut t = Table::new("eval2d.csv", &["x", "y", "re_v", "im_v", "re_G", "im_G", "abs_diff"]);
    let count = s.eval_points.unwrap_or(DEFAULT_EVAL_POINTS);
    while t.rows.len() < count {
        let y = [rng.gen_range(-r..r), rng.gen_range(-r..r)];
        if y[0].hypot(y[1]) >= r || (y[0] - x[0]).hypot(y[1] - x[1]) < TIP_EXCLUSION {
            continue;
        }
        let v = match needle2d_eval(y, x, alpha, tau, dir) {
            Ok(v) => v,
            Err(ProbeError::Overflow(_)) => Complex64::new(f64::INFINITY, f64::INFINITY),
            Err(e) => return Err(e.into()),
        };
        let g = fundamental_2d(y, x);
        t.push(vec![num(y[0]), num(y[1]), num(v.re), num(v.im), num(g.re), num(g.im), num((v - g).norm())]);
    }
    Ok(t)
}

fn axis_sweep(s: &Scenario, helmholtz: bool) -> Result<Table> {
    let frame = s.frame()?;
    let (alpha, tau) = (s.alpha.unwrap(), s.tau.unwrap());
    type Eval = Box<dyn Fn(f64) -> probe_core::Result<(f64, f64)>>;
    let offset = frame.theta1 * AXIS_OFFSET;
    let eval: Eval = if helmholtz {
        let n = HelmholtzNeedle::new(HelmholtzNeedleParams { lambda: s.lambda.unwrap(), alpha, tau, frame })?;
        Box::new(move |t| Ok((n.on_axis(t)?, n.eval_quadrature(&(frame.omega * t + offset))?)))
    } else {
        let n = Needle3d::new(alpha, tau, frame)?;
        Box::new(move |t| Ok((n.on_axis(t)?, n.eval_quadrature(&(frame.omega * t + offset))?)))
    };
    let (s0, s1) = (s.sweep_s_min.unwrap_or(DEFAULT_SWEEP.0), s.sweep_s_max.unwrap_or(DEFAULT_SWEEP.1));
    let count = s.eval_points.unwrap_or(DEFAULT_EVAL_POINTS).max(2);
    let mut t = Table::new("axis_sweep.csv", &["s", "closed_form", "quadrature", "abs_diff", "rel_diff"])
        .with_discrepancy("rel_diff");
    for i in 0..count {
        let si = s0 + (s1 - s0) * i as f64 / (count - 1) as f64;
        let (closed, quad) = eval(si).with_context(|| format!("axis point s = {si}"))?;
        let diff = (closed - quad).abs();
        t.push(vec![num(si), num(closed), num(quad), num(diff), num(diff / closed.abs())]);
    }
    Ok(t)
}

/// Eigenvalues of `Λ_D` for a disk of radius `rho` centred in the outer
/// circle of radius `outer`, against `(n/R)(R²ⁿ - ρ²ⁿ)/(R²ⁿ + ρ²ⁿ)`.
pub fn forward_oracle(rho: f64, outer: f64, modes: usize, nodes: usize) -> Result<Table> {
    if !(rho > 0.0 && rho < outer) {
        bail!("rho must lie in ]0, {outer}[, got {rho}");
    }
    let geom = probe_core::forward2d::Geometry2 { outer_radius: outer, cavities: vec![Curve::circle([0.0, 0.0], rho)] };
    let m = dtn_assemble(&geom, Basis::FourierModes(modes), nodes)?.matrix();
    let mut t = Table::new("forward_oracle.csv", &["n", "rho", "eigenvalue_numeric", "eigenvalue_oracle", "rel_diff"])
        .with_discrepancy("rel_diff");
    for n in 1..=modes {
        let numeric = m[(modes + n, modes + n)].re;
        let q = (rho / outer).powi(2 * n as i32);
        let oracle = n as f64 / outer * (1.0 - q) / (1.0 + q);
        t.push(vec![n.to_string(), num(rho), num(numeric), num(oracle), num((numeric - oracle).abs() / oracle)]);
    }
    Ok(t)
}

fn probe_scan(s: &Scenario) -> Result<(Vec<Table>, Value)> {
    let geom = s.geometry();
    let modes = s.forward_modes.unwrap_or(DEFAULT_FORWARD_MODES);
    let dtn = DtnData::simulate(&geom, modes, s.forward_nodes.unwrap_or(DEFAULT_FORWARD_NODES))?;
    let grid = TipGrid::new(s.grid_nx.unwrap(), s.grid_ny.unwrap(), geom.outer_radius);
    let nd = s.grid_directions.unwrap();
    let directions: Vec<Direction2> = (0..nd).map(|k| Direction2::from_angle(2.0 * PI * k as f64 / nd as f64)).collect();
    let schedule = ScheduleParams {
        eps0: s.eps0.unwrap_or(DEFAULT_EPS0),
        n_max: s.n_max.unwrap_or(DEFAULT_N_MAX),
        ..Default::default()
    };
    let cfg = VerdictConfig {
        theta: s.theta_cap.map_or(ThetaRule::ScanMedian { factor: THETA_FACTOR }, ThetaRule::Fixed),
        window: s.window.unwrap_or(DEFAULT_WINDOW),
        ratio: s.ratio.unwrap_or(DEFAULT_RATIO),
    };
    let rec = scan_reconstruct(&dtn, &grid, &directions, &schedule, &cfg)?;
    let mut mask = Table::new("mask.csv", &["ix", "iy", "x", "y", "verdict", "best_direction", "last_abs_I"]);
    let mut traces =
        Table::new("traces.csv", &["ix", "iy", "direction", "n", "alpha_n", "tau_n", "re_I", "im_I", "abs_I"]);
    for (tip, ts) in rec.tips.iter().zip(&rec.traces) {
        let class = if tip.class == probe_core::probe::TipClass::Inside { "inside" } else { "outside" };
        mask.push(vec![
            tip.ix.to_string(),
            tip.iy.to_string(),
            num(tip.x[0]),
            num(tip.x[1]),
            class.to_string(),
            tip.best_direction.to_string(),
            num(tip.last_abs),
        ]);
        for (k, tr) in ts.iter().enumerate() {
            for (i, v) in tr.values.iter().enumerate() {
                traces.push(vec![
                    tip.ix.to_string(),
                    tip.iy.to_string(),
                    k.to_string(),
                    (i + 1).to_string(),
                    num(tr.schedule.alphas[i]),
                    num(tr.schedule.taus[i]),
                    num(v.re),
                    num(v.im),
                    num(v.norm()),
                ]);
            }
        }
    }
    let verdict = json!({
        "theta_cap": rec.params.theta_cap,
        "theta_rule": if s.theta_cap.is_some() { "fixed" } else { "scan_median" },
        "window": rec.params.window,
        "ratio": rec.params.ratio,
    });
    Ok((vec![mask, traces], verdict))
}
