//! Subcommands of the `gridmaint` binary. Each one loads a case, a demand
//! grid, a run configuration and residual-life distributions, runs one
//! stage of the pipeline and writes its artifacts to `--out`.
//!
//! Missing demand or residual lives are synthesised from the run seed, so a
//! command is reproducible from its inputs and configuration alone. Every
//! JSON report carries the hash of the effective configuration, which is
//! also written next to it as `config.toml`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use gridmaint::caseio::{
    parse_case, parse_demand, schedule_from_csv, schedule_to_csv, synth_demand, ChanceMode, ComponentId, CutFamily,
    DemandShape, FlowMode, Granularity, RunConfig,
};
use gridmaint::decomp::{plan, schedule_hash, Instance, PlanError, PlanOptions, PlanStatus};
use gridmaint::degrade::{DegradationPriors, FailureModel, ScenarioSet};
use gridmaint::preflow::analyze;
use gridmaint::saa::{compare, comparison_csv, deterministic_baseline, evaluate_schedule, model_sampler, run_saa};
use gridmaint::solver::HighsBackend;
use gridmaint::synth::synth_failure_model;

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_LIMIT: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "gridmaint", version, about = "Condition-based maintenance planning for power grids")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Inputs {
    /// MATPOWER-style case file.
    #[arg(long)]
    pub case: PathBuf,
    /// Demand CSV with columns `bus,t,s,mw`; synthesised when absent.
    #[arg(long)]
    pub demand: Option<PathBuf>,
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Residual-life distributions (JSON); synthesised when absent.
    #[arg(long)]
    pub rlds: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory, created if needed.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SolverFlags {
    #[arg(long, value_enum)]
    pub chance: Option<ChanceArg>,
    /// One of intLS, optK, optK+, optKT++.
    #[arg(long, value_parser = parse_cuts)]
    pub cuts: Option<CutFamily>,
    /// One of single, per-scenario, per-scenario-day.
    #[arg(long, value_parser = parse_granularity)]
    pub granularity: Option<Granularity>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, value_enum)]
    pub flow_mode: Option<FlowArg>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Flag line limits that can never bind.
    Preprocess {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, value_enum)]
        flow_mode: FlowArg,
    },
    /// Solve one sampled problem.
    Plan {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        solver: SolverFlags,
        /// Number of sampled failure scenarios.
        #[arg(long)]
        scenarios: Option<usize>,
        /// Scenario CSV (`component,k,xi`) used instead of sampling.
        #[arg(long)]
        scenarios_file: Option<PathBuf>,
    },
    /// Cost a schedule out of sample, next to the deterministic baseline.
    Evaluate {
        #[command(flatten)]
        inputs: Inputs,
        /// Schedule CSV (`component,period`).
        #[arg(long)]
        schedule: PathBuf,
        #[arg(long, visible_alias = "Nprime")]
        test_scenarios: Option<usize>,
        #[arg(long)]
        scenarios_file: Option<PathBuf>,
        #[arg(long)]
        no_baseline: bool,
    },
    /// Sample average approximation with confidence bounds.
    Saa {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        solver: SolverFlags,
        #[arg(long, visible_alias = "M")]
        replicates: Option<usize>,
        #[arg(long, visible_alias = "N")]
        scenarios: Option<usize>,
        #[arg(long, visible_alias = "Nprime")]
        test_scenarios: Option<usize>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ChanceArg {
    Exact,
    Safe,
    None,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FlowArg {
    Off,
    #[value(name = "I")]
    I,
    #[value(name = "II")]
    II,
    #[value(name = "III")]
    III,
}

impl From<ChanceArg> for ChanceMode {
    fn from(c: ChanceArg) -> Self {
        match c {
            ChanceArg::Exact => ChanceMode::Exact,
            ChanceArg::Safe => ChanceMode::Safe,
            ChanceArg::None => ChanceMode::None,
        }
    }
}

impl From<FlowArg> for FlowMode {
    fn from(f: FlowArg) -> Self {
        match f {
            FlowArg::Off => FlowMode::Off,
            FlowArg::I => FlowMode::I,
            FlowArg::II => FlowMode::II,
            FlowArg::III => FlowMode::III,
        }
    }
}

fn parse_cuts(s: &str) -> Result<CutFamily, String> {
    s.parse().map_err(|e: gridmaint::caseio::CaseError| e.to_string())
}

fn parse_granularity(s: &str) -> Result<Granularity, String> {
    s.parse().map_err(|e: gridmaint::caseio::CaseError| e.to_string())
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration.
    Usage(String),
    Failed(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Failed(_) => EXIT_ERROR,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Failed(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<PlanError> for CliError {
    fn from(e: PlanError) -> Self {
        CliError::Failed(e.to_string())
    }
}

fn failed(e: impl fmt::Display) -> CliError {
    CliError::Failed(e.to_string())
}

#[derive(Debug, Default)]
pub struct CommandResult {
    pub code: u8,
    pub artifacts: Vec<PathBuf>,
}

impl CommandResult {
    fn write(&mut self, dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
        let path = dir.join(name);
        fs::write(&path, contents).map_err(|e| failed(format!("{}: {e}", path.display())))?;
        self.artifacts.push(path);
        Ok(())
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| failed(format!("{}: {e}", path.display())))
}

struct Loaded {
    instance: Instance,
    hash: String,
    out: PathBuf,
    result: CommandResult,
}

fn load(inputs: &Inputs, adjust: impl FnOnce(&mut RunConfig)) -> Result<Loaded, CliError> {
    let mut cfg = match &inputs.config {
        Some(p) => RunConfig::from_toml(&read(p)?).map_err(|e| CliError::Usage(e.to_string()))?,
        None => RunConfig::default(),
    };
    if let Some(s) = inputs.seed {
        cfg.seed = s;
    }
    if let Some(t) = inputs.threads {
        cfg.solver.threads = t;
    }
    adjust(&mut cfg);
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let mut net = parse_case(&read(&inputs.case)?).map_err(failed)?;
    let (days, hours) = (cfg.horizon.days, cfg.horizon.hours);
    net.fill_default_maintenance_costs(hours);
    let demand = match &inputs.demand {
        Some(p) => parse_demand(&read(p)?, &net, days, hours).map_err(failed)?,
        None => synth_demand(&net, &DemandShape::weekly(days, hours), cfg.demand_noise, cfg.seed),
    };
    let failure: FailureModel = match &inputs.rlds {
        Some(p) => serde_json::from_str(&read(p)?).map_err(|e| failed(format!("{}: {e}", p.display())))?,
        None => synth_failure_model(
            &net,
            &DegradationPriors::generator_default(),
            &DegradationPriors::line_default(),
            cfg.seed,
        )
        .map_err(failed)?,
    };

    fs::create_dir_all(&inputs.out).map_err(|e| failed(format!("{}: {e}", inputs.out.display())))?;
    let hash = cfg.hash();
    let mut result = CommandResult::default();
    result.write(&inputs.out, "config.toml", &cfg.to_toml())?;
    let instance = Instance::new(net, demand, cfg, failure)?;
    Ok(Loaded {
        instance,
        hash,
        out: inputs.out.clone(),
        result,
    })
}

fn apply_solver_flags(cfg: &mut RunConfig, s: &SolverFlags) {
    if let Some(c) = s.chance {
        cfg.chance.mode = c.into();
    }
    if let Some(c) = s.cuts {
        cfg.solver.cuts = c;
    }
    if let Some(g) = s.granularity {
        cfg.solver.granularity = g;
    }
    if let Some(e) = s.epsilon {
        cfg.solver.epsilon = e;
    }
    if let Some(f) = s.flow_mode {
        cfg.solver.flow_mode = f.into();
    }
}

fn selected_lines(instance: &Instance) -> Vec<usize> {
    instance
        .partition()
        .selected
        .iter()
        .filter_map(|c| match c {
            ComponentId::Line(l) => Some(*l),
            ComponentId::Gen(_) => None,
        })
        .collect()
}

/// Attaches the redundancy filter requested by the configuration, if any.
fn attach_filter(ld: &mut Loaded) -> Result<(), CliError> {
    let mode = ld.instance.config.solver.flow_mode;
    if mode == FlowMode::Off {
        return Ok(());
    }
    let report = analyze(
        &ld.instance.net,
        &ld.instance.demand,
        mode,
        &selected_lines(&ld.instance),
        &HighsBackend,
    )
    .map_err(failed)?;
    ld.result.write(&ld.out, "redundancy.csv", &report.to_csv())?;
    ld.instance.filter = Some(report);
    Ok(())
}

fn to_json(v: serde_json::Value) -> String {
    serde_json::to_string_pretty(&v).expect("json value serializes") + "\n"
}

fn scenarios_from(path: &Path, days: u32) -> Result<ScenarioSet, CliError> {
    ScenarioSet::from_csv(&read(path)?, days).map_err(|e| failed(format!("{}: {e}", path.display())))
}

pub fn run(cli: Cli) -> Result<CommandResult, CliError> {
    match cli.command {
        Command::Preprocess { inputs, flow_mode } => preprocess(&inputs, flow_mode.into()),
        Command::Plan {
            inputs,
            solver,
            scenarios,
            scenarios_file,
        } => cmd_plan(&inputs, &solver, scenarios, scenarios_file.as_deref()),
        Command::Evaluate {
            inputs,
            schedule,
            test_scenarios,
            scenarios_file,
            no_baseline,
        } => evaluate(&inputs, &schedule, test_scenarios, scenarios_file.as_deref(), !no_baseline),
        Command::Saa {
            inputs,
            solver,
            replicates,
            scenarios,
            test_scenarios,
        } => saa(&inputs, &solver, replicates, scenarios, test_scenarios),
    }
}

fn preprocess(inputs: &Inputs, mode: FlowMode) -> Result<CommandResult, CliError> {
    if mode == FlowMode::Off {
        return Err(CliError::Usage("preprocess needs a flow mode other than off".into()));
    }
    let mut ld = load(inputs, |cfg| cfg.solver.flow_mode = mode)?;
    attach_filter(&mut ld)?;
    let report = ld.instance.filter.as_ref().expect("filter attached");
    let summary = json!({
        "command": "preprocess",
        "config_hash": ld.hash,
        "mode": report.mode,
        "switchable": report.switchable,
        "rows": report.entries.len(),
        "flagged": report.flagged(),
    });
    ld.result.write(&ld.out, "preprocess.json", &to_json(summary))?;
    Ok(ld.result)
}

fn cmd_plan(
    inputs: &Inputs,
    solver: &SolverFlags,
    scenarios: Option<usize>,
    scenarios_file: Option<&Path>,
) -> Result<CommandResult, CliError> {
    if scenarios.is_some() && scenarios_file.is_some() {
        return Err(CliError::Usage("--scenarios and --scenarios-file are exclusive".into()));
    }
    if scenarios == Some(0) {
        return Err(CliError::Usage("--scenarios must be positive".into()));
    }
    let mut ld = load(inputs, |cfg| {
        apply_solver_flags(cfg, solver);
        if let Some(n) = scenarios {
            cfg.saa.scenarios = n;
        }
    })?;
    attach_filter(&mut ld)?;
    let instance = &ld.instance;
    let cfg = &instance.config;
    let set = match scenarios_file {
        Some(p) => scenarios_from(p, instance.days())?,
        None => model_sampler(instance)(&instance.partition().selected, cfg.saa.scenarios, cfg.seed)?,
    };
    let opts = PlanOptions::from_config(cfg);
    let report = plan(instance, &set, &opts, &HighsBackend)?;
    ld.result.write(&ld.out, "scenarios.csv", &set.to_csv())?;
    ld.result.write(&ld.out, "schedule.csv", &schedule_to_csv(&report.schedule))?;
    let body = json!({
        "command": "plan",
        "config_hash": ld.hash,
        "report": report,
    });
    ld.result.write(&ld.out, "plan.json", &to_json(body))?;
    ld.result.code = if report.status == PlanStatus::Optimal { EXIT_OK } else { EXIT_LIMIT };
    Ok(ld.result)
}

fn evaluate(
    inputs: &Inputs,
    schedule_path: &Path,
    test_scenarios: Option<usize>,
    scenarios_file: Option<&Path>,
    baseline: bool,
) -> Result<CommandResult, CliError> {
    if test_scenarios.is_some() && scenarios_file.is_some() {
        return Err(CliError::Usage("--test-scenarios and --scenarios-file are exclusive".into()));
    }
    if test_scenarios == Some(0) {
        return Err(CliError::Usage("--test-scenarios must be positive".into()));
    }
    let schedule: BTreeMap<ComponentId, u32> = schedule_from_csv(&read(schedule_path)?).map_err(failed)?;
    if schedule.is_empty() {
        return Err(failed(format!("{}: schedule is empty", schedule_path.display())));
    }
    let mut ld = load(inputs, |cfg| {
        if let Some(n) = test_scenarios {
            cfg.saa.test_scenarios = n;
        }
    })?;
    attach_filter(&mut ld)?;
    let instance = &ld.instance;
    let cfg = &instance.config;
    let test = match scenarios_file {
        Some(p) => scenarios_from(p, instance.days())?,
        None => model_sampler(instance)(&instance.net.components(), cfg.saa.test_scenarios, cfg.seed)?,
    };
    let opts = PlanOptions::from_config(cfg);
    let eval = evaluate_schedule(instance, &schedule, &test, &opts, &HighsBackend)?;
    let body = if baseline {
        let dm = deterministic_baseline(instance, &opts, &HighsBackend)?;
        let dm_eval = evaluate_schedule(instance, &dm.schedule, &test, &opts, &HighsBackend)?;
        ld.result.write(
            &ld.out,
            "comparison.csv",
            &comparison_csv(&[("stochastic", &eval), ("deterministic", &dm_eval)]),
        )?;
        ld.result.write(&ld.out, "baseline_schedule.csv", &schedule_to_csv(&dm.schedule))?;
        json!({
            "command": "evaluate",
            "config_hash": ld.hash,
            "schedule_hash": schedule_hash(&schedule),
            "baseline_schedule_hash": dm.schedule_hash,
            "comparison": compare(eval, dm_eval),
        })
    } else {
        ld.result.write(&ld.out, "comparison.csv", &comparison_csv(&[("stochastic", &eval)]))?;
        json!({
            "command": "evaluate",
            "config_hash": ld.hash,
            "schedule_hash": schedule_hash(&schedule),
            "evaluation": eval,
        })
    };
    ld.result.write(&ld.out, "evaluation.json", &to_json(body))?;
    Ok(ld.result)
}

fn saa(
    inputs: &Inputs,
    solver: &SolverFlags,
    replicates: Option<usize>,
    scenarios: Option<usize>,
    test_scenarios: Option<usize>,
) -> Result<CommandResult, CliError> {
    let mut ld = load(inputs, |cfg| {
        apply_solver_flags(cfg, solver);
        if let Some(m) = replicates {
            cfg.saa.replicates = m;
        }
        if let Some(n) = scenarios {
            cfg.saa.scenarios = n;
        }
        if let Some(n) = test_scenarios {
            cfg.saa.test_scenarios = n;
        }
    })?;
    if ld.instance.config.saa.test_scenarios < ld.instance.config.saa.scenarios {
        return Err(CliError::Usage("test scenarios must be at least the sampled scenarios".into()));
    }
    attach_filter(&mut ld)?;
    let instance = &ld.instance;
    let opts = PlanOptions::from_config(&instance.config);
    let sampler = model_sampler(instance);
    let report = run_saa(instance, &instance.config.saa, &opts, &HighsBackend, &sampler)?;
    ld.result.write(&ld.out, "schedule.csv", &schedule_to_csv(&report.best_schedule))?;
    let body = json!({
        "command": "saa",
        "config_hash": ld.hash,
        "report": report,
    });
    ld.result.write(&ld.out, "saa.json", &to_json(body))?;
    Ok(ld.result)
}
