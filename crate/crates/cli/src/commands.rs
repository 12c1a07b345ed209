//! The `run`, `sweep` and `audit` subcommands.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use overdamp_core::fluid::{chemical_potential_spread, free_energy, FluidModel};
use overdamp_core::functionals::{budget_rates, minimization_audit, DiagnosticsRecord, L1Audit};
use overdamp_core::harness::{
    run_fluid, run_kinetic, run_pair_with, run_rescaled, run_sweep, AuditSummary, AuditTolerances, PairRun,
    Record, RunOptions, SingleRun, CHEMICAL_BULK,
};
use overdamp_core::kinetic::moments;
use overdamp_core::snapshot::Snapshot;
use serde_json::{json, Value};

use crate::config::{parse_config, Mode, RunConfig};
use crate::output::{check_writable, csv_text, table_text, write_atomic, write_snapshots, SCHEMA_VERSION};

/// Failure classes, each with its own exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Failure {
    /// Files could not be read or written.
    Io(String),
    /// The configuration or snapshot is invalid.
    Config(String),
    /// A solver aborted.
    Numerical(String),
    /// Runs completed but an audit failed.
    Audit(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io(_) => 1,
            Self::Config(_) => 2,
            Self::Numerical(_) => 3,
            Self::Audit(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Io(m) => write!(f, "i/o error: {m}"),
            Self::Config(m) => write!(f, "configuration error:\n{m}"),
            Self::Numerical(m) => write!(f, "numerical failure: {m}"),
            Self::Audit(m) => write!(f, "audit failure: {m}"),
        }
    }
}

impl std::error::Error for Failure {}

/// Files written and the summary document of a finished command.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: Value,
}

pub fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| Failure::Config(e.to_string()))
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Io(format!("{}: {e}", path.display()))
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self, Failure> {
        check_writable(dir).map_err(io(dir))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), Failure> {
        let path = self.dir.join(name);
        write_atomic(&path, contents.as_bytes()).map_err(io(&path))?;
        self.files.push(path);
        Ok(())
    }

    fn snapshots(&mut self, prefix: &str, snaps: &[Snapshot]) -> Result<(), Failure> {
        let paths = write_snapshots(&self.dir, prefix, snaps).map_err(io(&self.dir))?;
        self.files.extend(paths);
        Ok(())
    }

    fn names(&self) -> Vec<String> {
        self.files
            .iter()
            .filter_map(|p| p.file_name())
            .map(|n| n.to_string_lossy().into_owned())
            .collect()
    }

    fn finish(mut self, summary: Value) -> Result<Outcome, Failure> {
        let mut summary = summary;
        let mut names = self.names();
        names.push("summary.json".into());
        summary["files"] = json!(names);
        let text = serde_json::to_string_pretty(&summary).map_err(|e| Failure::Io(e.to_string()))? + "\n";
        self.write("summary.json", &text)?;
        Ok(Outcome {
            out_dir: self.dir,
            files: self.files,
            summary,
        })
    }
}

fn verdict(failure: &Option<overdamp_core::Error>, audit: &AuditSummary) -> Result<(), Failure> {
    if let Some(e) = failure {
        return Err(Failure::Numerical(e.to_string()));
    }
    if !audit.passed() {
        return Err(Failure::Audit(audit.failures.join("; ")));
    }
    Ok(())
}

fn single_summary<R>(cfg: &RunConfig, run: &SingleRun<R>) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "mode": cfg.mode.name(),
        "spec": run.spec,
        "completed": run.completed(),
        "failure": run.failure.as_ref().map(|e| e.to_string()),
        "audit": run.audit,
        "passed": run.passed(),
    })
}

fn pair_summary(cfg: &RunConfig, run: &PairRun) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "mode": cfg.mode.name(),
        "spec": run.spec,
        "grid": {
            "n_x": run.grid.n_x(),
            "n_v": run.grid.n_v(),
            "dx": run.grid.spatial.dx(),
            "dv": run.grid.velocity.dv(),
            "v_max": run.grid.velocity.v_max(),
        },
        "zeta": run.spec.params().map(|p| p.zeta()).ok(),
        "initial_gap": run.initial_gap,
        "initial_free_energy": run.initial_free_energy,
        "initial_energy": run.initial_energy,
        "bound_combination": run.bound_combination(),
        "completed": run.completed(),
        "failure": run.failure.as_ref().map(|e| e.to_string()),
        "audit": run.audit,
        "passed": run.passed(),
    })
}

/// Executes a single run or, in sweep mode, a sweep. Outputs are written
/// even when a run fails; the returned error then carries the failure class.
pub fn execute(
    cfg: &RunConfig,
    out_dir: Option<&Path>,
    progress: &(dyn Fn(&str) + Sync),
) -> Result<Outcome, (Option<Outcome>, Failure)> {
    let dir = out_dir.unwrap_or(&cfg.out_dir);
    let mut w = Writer::new(dir).map_err(|f| (None, f))?;
    let options = RunOptions {
        tolerances: AuditTolerances::default(),
        snapshot_every: cfg.snapshot_every,
    };
    let core = |e: overdamp_core::Error| (None, Failure::Numerical(e.to_string()));
    let (summary, verdict) = match cfg.mode {
        Mode::Pair => {
            let run = run_pair_with(&cfg.spec, &options).map_err(core)?;
            w.write("pair.csv", &csv_text(&run.records)).map_err(|f| (None, f))?;
            w.snapshots("", &run.snapshots).map_err(|f| (None, f))?;
            (pair_summary(cfg, &run), verdict(&run.failure, &run.audit))
        }
        Mode::Kinetic => {
            let run = run_kinetic(&cfg.spec, &options).map_err(core)?;
            w.write("kinetic.csv", &csv_text(&run.records)).map_err(|f| (None, f))?;
            w.snapshots("", &run.snapshots).map_err(|f| (None, f))?;
            (single_summary(cfg, &run), verdict(&run.failure, &run.audit))
        }
        Mode::Fluid => {
            let run = run_fluid(&cfg.spec, &options).map_err(core)?;
            w.write("fluid.csv", &csv_text(&run.records)).map_err(|f| (None, f))?;
            w.snapshots("", &run.snapshots).map_err(|f| (None, f))?;
            (single_summary(cfg, &run), verdict(&run.failure, &run.audit))
        }
        Mode::Rescaled => {
            let (run, lp) = run_rescaled(&cfg.spec, &options).map_err(core)?;
            w.write("rescaled.csv", &csv_text(&run.records)).map_err(|f| (None, f))?;
            w.snapshots("", &run.snapshots).map_err(|f| (None, f))?;
            let mut s = single_summary(cfg, &run);
            s["lp_monotonicity"] = json!(lp);
            (s, verdict(&run.failure, &run.audit))
        }
        Mode::Sweep => return execute_sweep(cfg, w, progress),
    };
    let outcome = w.finish(summary).map_err(|f| (None, f))?;
    match verdict {
        Ok(()) => Ok(outcome),
        Err(f) => Err((Some(outcome), f)),
    }
}

fn execute_sweep(
    cfg: &RunConfig,
    mut w: Writer,
    progress: &(dyn Fn(&str) + Sync),
) -> Result<Outcome, (Option<Outcome>, Failure)> {
    let mut plan = cfg.plan().ok_or_else(|| (None, Failure::Config("not a sweep configuration".into())))?;
    plan.jobs = cfg.jobs;
    let report = |run: &PairRun| {
        let status = match &run.failure {
            None if run.audit.passed() => "ok".to_string(),
            None => format!("audit failed: {}", run.audit.failures.join("; ")),
            Some(e) => format!("aborted: {e}"),
        };
        progress(&format!(
            "eps = {}: n_v = {}, {} kinetic steps, {status}",
            run.spec.eps,
            run.grid.n_v(),
            run.audit.kinetic_steps
        ));
    };
    let out = run_sweep(&plan, report).map_err(|e| (None, Failure::Numerical(e.to_string())))?;
    let mut runs_json = Vec::new();
    for (k, run) in out.runs.iter().enumerate() {
        let name = format!("run_{k}_eps_{}.csv", run.spec.eps);
        w.write(&name, &csv_text(&run.records)).map_err(|f| (None, f))?;
        runs_json.push(json!({
            "eps": run.spec.eps,
            "csv": name,
            "n_v": run.grid.n_v(),
            "v_max": run.grid.velocity.v_max(),
            "bound_combination": run.bound_combination(),
            "initial_gap": run.initial_gap,
            "completed": run.completed(),
            "failure": run.failure.as_ref().map(|e| e.to_string()),
            "audit": run.audit,
            "passed": run.passed(),
        }));
    }
    if !out.fits.is_empty() {
        let mut header = vec!["eps"];
        header.extend(out.fits.iter().map(|f| f.quantity.as_str()));
        let rows: Vec<Vec<f64>> = plan
            .eps
            .iter()
            .enumerate()
            .map(|(k, &e)| std::iter::once(e).chain(out.fits.iter().map(|f| f.values[k])).collect())
            .collect();
        w.write("rates.dat", &table_text(&header, &rows)).map_err(|f| (None, f))?;
    }
    let thresholds = cfg.rates;
    let gated = ["p_rel", "elec_diff", "vel_gap_int"];
    let rate_failures: Vec<String> = match thresholds {
        Some(t) => gated
            .iter()
            .filter_map(|q| out.fit(q))
            .filter(|f| !f.meets(t.min_slope, t.max_residual))
            .map(|f| format!("{}: slope {:.3}, residual {:.3}", f.quantity, f.slope, f.residual))
            .collect(),
        None => Vec::new(),
    };
    let passed = out.all_completed() && out.audits_passed() && rate_failures.is_empty();
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "mode": "sweep",
        "plan": out.plan,
        "zeta": out.plan.zeta(),
        "runs": runs_json,
        "fits": out.fits,
        "monotonicity": out.monotonicity,
        "bound": out.bound,
        "thresholds": thresholds.map(|t| json!({"min_slope": t.min_slope, "max_residual": t.max_residual, "quantities": gated})),
        "rate_failures": rate_failures,
        "passed": passed,
    });
    let outcome = w.finish(summary).map_err(|f| (None, f))?;
    let failure = if let Some(r) = out.runs.iter().find(|r| !r.completed()) {
        Some(Failure::Numerical(format!(
            "run at eps = {} aborted: {}",
            r.spec.eps,
            r.failure.as_ref().map(|e| e.to_string()).unwrap_or_default()
        )))
    } else if let Some(r) = out.runs.iter().find(|r| !r.audit.passed()) {
        Some(Failure::Audit(format!("eps = {}: {}", r.spec.eps, r.audit.failures.join("; "))))
    } else if !rate_failures.is_empty() {
        Some(Failure::Audit(format!("rate thresholds missed: {}", rate_failures.join("; "))))
    } else {
        None
    };
    match failure {
        None => Ok(outcome),
        Some(f) => Err((Some(outcome), f)),
    }
}

/// Re-evaluates the functionals on a stored snapshot. Returns the report
/// and whether every applicable check passed.
pub fn audit_snapshot(path: &Path) -> Result<(Value, bool), Failure> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    let snap = Snapshot::parse(&text).map_err(|e| Failure::Config(e.to_string()))?;
    let bad = |e: overdamp_core::Error| Failure::Config(e.to_string());
    let params = snap.params().map_err(bad)?;
    let spatial = snap.spatial_grid().map_err(bad)?;
    let tol = AuditTolerances::default();
    let mut checks = Vec::new();
    let mut check = |name: &str, value: f64, limit: f64, ok: bool| {
        checks.push(json!({"check": name, "value": value, "limit": limit, "passed": ok}));
        ok
    };
    let mut passed = true;
    let mut values = serde_json::Map::new();

    if let (Some(grid), Some(f)) = (snap.phase_grid().map_err(bad)?, &snap.f) {
        if f.len() != grid.len() {
            return Err(Failure::Config("f does not match the phase grid".into()));
        }
        let min_f = f.iter().copied().fold(f64::INFINITY, f64::min);
        passed &= check("min_f", min_f, 0.0, min_f >= 0.0);
        match &snap.rho_bar {
            Some(rho_bar) => {
                let rec = DiagnosticsRecord::evaluate(&grid, f, snap.t, rho_bar, &params).map_err(bad)?;
                for (name, v) in DiagnosticsRecord::<f64>::columns().iter().zip(rec.row()) {
                    values.insert((*name).into(), json!(v));
                }
                passed &= check("min_gap", rec.min_gap, -tol.min_gap, rec.min_gap >= -tol.min_gap);
                let l1 = L1Audit {
                    l1: rec.l1,
                    bound: rec.l1_bound,
                    sentinel_cells: rec.sentinel_cells as usize,
                };
                passed &= check("l1_squared_minus_bound", rec.l1 * rec.l1 - rec.l1_bound, tol.l1, l1.holds(tol.l1));
                let excess = rec.hminus1_dual - rec.hminus1;
                passed &= check("hminus1_dual_minus_field", excess, tol.hminus1, excess <= tol.hminus1);
            }
            None => {
                let (fe, d, _, _) = budget_rates(&grid, f, &params);
                let min = minimization_audit(&grid, f, params.eps);
                let rho = moments(&grid, f).rho;
                values.insert("mass".into(), json!(spatial.quad(&rho).map_err(bad)?));
                values.insert("F_eps".into(), json!(fe));
                values.insert("D_eps".into(), json!(d));
                values.insert("K_int".into(), json!(min.k_int));
                values.insert("E_int".into(), json!(min.e_int));
                values.insert("min_gap".into(), json!(min.normalized_gap()));
                let g = min.normalized_gap();
                passed &= check("min_gap", g, -tol.min_gap, g >= -tol.min_gap);
            }
        }
    } else if let Some(rho_bar) = &snap.rho_bar {
        if rho_bar.len() != spatial.len() {
            return Err(Failure::Config("rho_bar does not match the spatial grid".into()));
        }
        let model = FluidModel::from(&params);
        values.insert("fluid_mass".into(), json!(spatial.quad(rho_bar).map_err(bad)?));
        values.insert("fluid_free_energy".into(), json!(free_energy(&spatial, rho_bar, &model)));
        values.insert(
            "chem_spread".into(),
            json!(chemical_potential_spread(&spatial, rho_bar, &model, CHEMICAL_BULK)),
        );
        let min = rho_bar.iter().copied().fold(f64::INFINITY, f64::min);
        passed &= check("min_rho_bar", min, 0.0, min >= 0.0);
    }
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "snapshot": path.file_name().map(|n| n.to_string_lossy().into_owned()),
        "t": snap.t,
        "eps": snap.eps,
        "values": values,
        "checks": checks,
        "passed": passed,
    });
    Ok((report, passed))
}
