//! The four subcommand bodies. Each resolves its effective settings
//! from the merged [`RunConfig`], writes a manifest before doing any
//! long work (which doubles as the writable check on the output
//! directory), runs the solver, and writes its artifacts.

use std::fmt::Write as _;
use std::path::PathBuf;

use gcf_core::auction::{grid_csv, train_auction, MechanismArtifact, TrainConfig};
use gcf_core::optim::TempSchedule;
use gcf_core::ot::{DualProblem, DualSolveConfig, OtInstance};
use gcf_core::validate;

use crate::config::RunConfig;
use crate::Failure;

/// Resolved output directory plus the merged config it came from.
pub struct RunContext {
    pub command: &'static str,
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub seed: u64,
}

impl RunContext {
    pub fn new(command: &'static str, cfg: RunConfig) -> Self {
        let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
        let seed = cfg.seed.unwrap_or(0);
        RunContext {
            command,
            cfg,
            out,
            seed,
        }
    }

    /// Creates the output directory and records what this run is about
    /// to do: command, resolved seed, the merged config, and the crate
    /// versions. Failing here aborts before any long computation.
    pub fn write_manifest(&self) -> Result<(), Failure> {
        std::fs::create_dir_all(&self.out).map_err(|e| {
            Failure::Config(format!(
                "cannot create output directory {}: {e}",
                self.out.display()
            ))
        })?;
        let manifest = serde_json::json!({
            "command": self.command,
            "seed": self.seed,
            "config": &self.cfg,
            "versions": {
                "gcf-cli": env!("CARGO_PKG_VERSION"),
                "gcf-core": gcf_core::VERSION,
            },
        });
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Failure::Config(format!("manifest: {e}")))?;
        self.write("manifest.json", &text)
    }

    pub fn write(&self, name: &str, content: &str) -> Result<(), Failure> {
        let path = self.out.join(name);
        let mut text = content.to_string();
        if !text.ends_with('\n') {
            text.push('\n');
        }
        std::fs::write(&path, text)
            .map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))
    }
}

fn require<T: Clone>(field: &Option<T>, what: &str) -> Result<T, Failure> {
    field
        .clone()
        .ok_or_else(|| Failure::Config(format!("{what} is required")))
}

/// Trains a menu mechanism, writes `mechanism.json`, `report.json`,
/// `trace.csv` (and `grid.csv` when asked), and prints the summary row.
pub fn run_auction(cfg: RunConfig) -> Result<(), Failure> {
    let items = require(&cfg.items, "--items")?;
    let mut tc = TrainConfig::for_items(items).map_err(Failure::config)?;
    tc.seed = cfg.seed.unwrap_or(tc.seed);
    if let Some(v) = cfg.menu_size {
        tc.menu_size = v;
    }
    if let Some(v) = cfg.train_samples {
        tc.train_samples = v;
    }
    if let Some(v) = cfg.batch_size {
        tc.batch_size = v;
    }
    if let Some(v) = cfg.epochs_per_stage {
        tc.epochs_per_stage = v;
    }
    if let Some(v) = cfg.learning_rate {
        tc.adam.lr = v;
    }
    if let Some(v) = cfg.lr_stage_decay {
        tc.lr_stage_decay = v;
    }
    if let Some(v) = cfg.eval_samples {
        tc.eval_samples = v;
    }
    if cfg.early_stop_min_gain.is_some() {
        tc.early_stop_min_gain = cfg.early_stop_min_gain;
    }
    if cfg.tau_start.is_some() || cfg.tau_end.is_some() || cfg.stages.is_some() {
        let temps = tc.schedule.temps();
        let lo = cfg.tau_start.unwrap_or(temps[0]);
        let hi = cfg.tau_end.unwrap_or(temps[temps.len() - 1]);
        let stages = cfg.stages.unwrap_or(temps.len());
        tc.schedule = TempSchedule::geometric(lo, hi, stages).map_err(Failure::config)?;
    }
    tc.validate().map_err(Failure::config)?;
    if let Some(n) = cfg.export_grid {
        if n < 2 {
            return Err(Failure::Config(
                "--export-grid needs at least 2 points per axis".into(),
            ));
        }
    }

    let ctx = RunContext::new("auction", cfg);
    ctx.write_manifest()?;

    let outcome = train_auction(&tc).map_err(Failure::from)?;
    let report = &outcome.report;

    let artifact = MechanismArtifact::new(&outcome.menu, Some(report.clone()));
    ctx.write("mechanism.json", &artifact.to_json().map_err(Failure::from)?)?;
    ctx.write(
        "report.json",
        &serde_json::to_string_pretty(report)
            .map_err(|e| Failure::Config(format!("report: {e}")))?,
    )?;

    let mut trace = String::from("step,objective,grad_norm,tau\n");
    for row in &outcome.trace {
        writeln!(
            trace,
            "{},{},{},{}",
            row.step, row.objective, row.grad_norm, row.tau
        )
        .expect("string writes cannot fail");
    }
    ctx.write("trace.csv", &trace)?;

    if let Some(n) = ctx.cfg.export_grid {
        ctx.write("grid.csv", &grid_csv(&outcome.menu, n).map_err(Failure::from)?)?;
    }

    println!("items  profit/item        utility/item       surplus/item");
    println!(
        "{:<5}  {:.4} +/- {:.4}  {:.4} +/- {:.4}  {:.4} +/- {:.4}",
        report.items,
        report.mean_profit_per_item,
        report.se_profit_per_item,
        report.mean_utility_per_item,
        report.se_utility_per_item,
        report.mean_surplus_per_item,
        report.se_surplus_per_item,
    );
    if let Some(w) = &report.warning {
        eprintln!("warning: {w}");
    }
    Ok(())
}

/// Solves the dual of a discrete transport instance and writes
/// `solution.json` plus the induced `assignment.csv`.
pub fn run_ot(cfg: RunConfig) -> Result<(), Failure> {
    let path = require(&cfg.instance, "--instance")?;
    let text = std::fs::read_to_string(&path).map_err(|e| {
        Failure::Config(format!("cannot read instance file {}: {e}", path.display()))
    })?;
    let instance = OtInstance::from_json(&text).map_err(Failure::config)?;

    let mut sc = DualSolveConfig::default();
    if let Some(v) = cfg.sqrt_iters {
        sc.sqrt_iters = v;
    }
    if let Some(v) = cfg.step_c {
        sc.step_c = v;
    }
    if let Some(v) = cfg.polish_epochs {
        sc.polish_epochs = v;
    }
    if let Some(v) = cfg.polish_iters {
        sc.polish_iters = v;
    }
    if let Some(v) = cfg.tol {
        sc.tol = v;
    }

    let ctx = RunContext::new("ot", cfg);
    ctx.write_manifest()?;

    let problem = DualProblem::new(instance).map_err(Failure::config)?;
    let solution = problem.solve(&sc).map_err(Failure::from)?;
    ctx.write("solution.json", &solution.to_json().map_err(Failure::from)?)?;

    let inst = problem.instance();
    let dim = inst.mu.dim();
    let mut csv = String::from("k,");
    for d in 1..=dim {
        write!(csv, "x{d},").expect("string writes cannot fail");
    }
    csv.push('j');
    for d in 1..=dim {
        write!(csv, ",y{d}").expect("string writes cannot fail");
    }
    csv.push('\n');
    for (k, (x, &j)) in inst
        .mu
        .points()
        .iter()
        .zip(&solution.assignment)
        .enumerate()
    {
        write!(csv, "{k},").expect("string writes cannot fail");
        for c in x {
            write!(csv, "{c},").expect("string writes cannot fail");
        }
        write!(csv, "{j}").expect("string writes cannot fail");
        for c in &inst.eta.points()[j] {
            write!(csv, ",{c}").expect("string writes cannot fail");
        }
        csv.push('\n');
    }
    ctx.write("assignment.csv", &csv)?;

    println!(
        "value {:.9}  iterations {}  converged {}",
        solution.value, solution.iterations, solution.converged
    );
    if !solution.converged {
        eprintln!("warning: solver stopped before meeting its convergence tolerance");
    }
    Ok(())
}

/// Runs one named validation suite (or all of them) and writes the
/// JSON report; any failed check makes the whole run fail.
pub fn run_validate(cfg: RunConfig) -> Result<(), Failure> {
    let suite = cfg.suite.clone().unwrap_or_else(|| "all".into());
    if suite != "all" && !validate::suite_names().contains(&suite.as_str()) {
        return Err(Failure::Config(format!(
            "unknown suite '{suite}'; expected one of {}, or 'all'",
            validate::suite_names().join(", ")
        )));
    }
    let ctx = RunContext::new("validate", cfg);
    ctx.write_manifest()?;
    let reports = validate::run_suite(&suite, ctx.seed).map_err(Failure::config)?;
    ctx.write(
        "report.json",
        &serde_json::to_string_pretty(&reports)
            .map_err(|e| Failure::Config(format!("report: {e}")))?,
    )?;
    for r in &reports {
        println!(
            "{}  {}  instances {}  max_error {:e}",
            if r.pass { "PASS" } else { "FAIL" },
            r.check_name,
            r.instances,
            r.max_error,
        );
    }
    if validate::all_pass(&reports) {
        Ok(())
    } else {
        let failed: Vec<&str> = reports
            .iter()
            .filter(|r| !r.pass)
            .map(|r| r.check_name.as_str())
            .collect();
        Err(Failure::Validation(format!(
            "failed checks: {}",
            failed.join(", ")
        )))
    }
}

/// Renders a serialized mechanism's menu on a lattice into `grid.csv`.
pub fn run_export_grid(cfg: RunConfig) -> Result<(), Failure> {
    let path = require(&cfg.mechanism, "--mechanism")?;
    let text = std::fs::read_to_string(&path).map_err(|e| {
        Failure::Config(format!(
            "cannot read mechanism file {}: {e}",
            path.display()
        ))
    })?;
    let artifact = MechanismArtifact::from_json(&text).map_err(Failure::config)?;
    let menu = artifact.menu().map_err(Failure::config)?;
    let per_axis = cfg.per_axis.unwrap_or(64);

    let ctx = RunContext::new("export-grid", cfg);
    ctx.write_manifest()?;
    let csv = grid_csv(&menu, per_axis).map_err(Failure::config)?;
    let rows = csv.lines().count() - 1;
    ctx.write("grid.csv", &csv)?;
    println!("wrote grid.csv  {rows} rows  {per_axis} per axis");
    Ok(())
}
