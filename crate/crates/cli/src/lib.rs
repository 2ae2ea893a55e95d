//! `rme-lab`: command-line front end for the lock simulator.

pub mod scenario;

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rme_core::checkers::check_run;
use rme_core::harness::engine::check_context;
use rme_core::harness::{
    explore, run, run_batch, seed_sweep, CrashSpec, Engine, ExploreConfig, RunConfig, RunReport,
    SchedulerSpec, ScriptStep,
};
use rme_core::trace::{export, import};
use rme_core::{Algorithm, Mutant, SimError, ViolationCode};
use thiserror::Error;

use scenario::ScenarioFile;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
    #[error("scenario file: {0}")]
    Scenario(String),
    #[error("unknown property `{0}`")]
    Property(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("trace: {0}")]
    Trace(#[from] rme_core::TraceIoError),
}

/// Process exit codes.
pub const EXIT_PASS: u8 = 0;
pub const EXIT_VIOLATION: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "rme-lab",
    version,
    about = "Simulate and model-check recoverable queue locks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one seeded simulation and check every property.
    Run(RunArgs),
    /// Exhaustively explore small configurations.
    Explore(ExploreArgs),
    /// Max passage RMRs per process count, across seeds.
    RmrScaling(ScalingArgs),
    /// Re-check an exported trace against a configuration.
    CheckTrace(CheckTraceArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AlgoArg {
    Cc,
    Dsm,
}

impl From<AlgoArg> for Algorithm {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Cc => Algorithm::Cc,
            AlgoArg::Dsm => Algorithm::Dsm,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MutantArg {
    None,
    DropR5,
    DropE3,
    SwapR3R4,
    SkipAbandon,
}

impl From<MutantArg> for Mutant {
    fn from(m: MutantArg) -> Self {
        match m {
            MutantArg::None => Mutant::None,
            MutantArg::DropR5 => Mutant::DropR5,
            MutantArg::DropE3 => Mutant::DropE3,
            MutantArg::SwapR3R4 => Mutant::SwapR3R4,
            MutantArg::SkipAbandon => Mutant::SkipAbandon,
        }
    }
}

/// Flags shared by `run` and `check-trace`. Flags override the scenario file.
#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// TOML scenario file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub algo: Option<AlgoArg>,
    #[arg(long)]
    pub procs: Option<usize>,
    #[arg(long)]
    pub steps: Option<u64>,
    /// Seed; falls back to the scenario file, then 0.
    #[arg(long, env = "RME_LAB_SEED")]
    pub seed: Option<u64>,
    /// Crash at these global steps.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["crash_prob", "crash_every"])]
    pub crash_at: Option<Vec<u64>>,
    /// Crash with this probability before each step.
    #[arg(long, conflicts_with = "crash_every")]
    pub crash_prob: Option<f64>,
    /// Crash every this many steps.
    #[arg(long)]
    pub crash_every: Option<u64>,
    /// Fairness bound B for the random scheduler (default 4n).
    #[arg(long, conflicts_with_all = ["round_robin", "script"])]
    pub fairness: Option<u64>,
    #[arg(long, conflicts_with = "script")]
    pub round_robin: bool,
    /// Scripted schedule, e.g. `p0,p0,crash,p1`.
    #[arg(long, value_delimiter = ',')]
    pub script: Option<Vec<ScriptStep>>,
    /// Local steps spent in the CS.
    #[arg(long)]
    pub dwell: Option<u32>,
    /// Completed passages per process.
    #[arg(long)]
    pub passages: Option<u32>,
    /// Chance an idle process calls Recover instead of Try.
    #[arg(long)]
    pub spurious: Option<f64>,
    #[arg(long, value_enum)]
    pub mutant: Option<MutantArg>,
    /// Skip the per-step invariant evaluation.
    #[arg(long)]
    pub no_invariant: bool,
}

impl ScenarioArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut file = match &self.config {
            Some(p) => ScenarioFile::load(p)?,
            None => ScenarioFile::default(),
        };
        if let Some(a) = self.algo {
            file.algorithm = Some(a.into());
        }
        if let Some(n) = self.procs {
            file.n = Some(n);
        }
        if file.algorithm.is_none() {
            file.algorithm = Some(Algorithm::Cc);
        }
        if file.n.is_none() {
            file.n = Some(4);
        }
        if self.seed.is_some() {
            file.seed = self.seed;
        }
        let mut cfg = file.to_run_config(0)?;
        if let Some(s) = self.steps {
            cfg.max_steps = s;
        }
        if let Some(steps) = &self.crash_at {
            cfg.crashes = CrashSpec::At {
                steps: steps.clone(),
            };
        }
        if let Some(p) = self.crash_prob {
            cfg.crashes = CrashSpec::Probability { p };
        }
        if let Some(period) = self.crash_every {
            cfg.crashes = CrashSpec::Every { period };
        }
        if let Some(bound) = self.fairness {
            cfg.scheduler = SchedulerSpec::RandomFair { bound };
        }
        if self.round_robin {
            cfg.scheduler = SchedulerSpec::RoundRobin;
        }
        if let Some(script) = &self.script {
            cfg.scheduler = SchedulerSpec::Scripted {
                script: script.clone(),
            };
        }
        if let Some(d) = self.dwell {
            cfg.cs_dwell = d;
        }
        if let Some(p) = self.passages {
            cfg.max_passages = Some(p);
        }
        if let Some(p) = self.spurious {
            cfg.spurious_recover = p;
        }
        if let Some(m) = self.mutant {
            cfg.mutant = m.into();
        }
        if self.no_invariant {
            cfg.check_invariant = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Properties that decide the exit code: `all` or a comma list such as
    /// `MUTEX,CSR`.
    #[arg(long, default_value = "all")]
    pub check: String,
    /// Write the trace as JSON lines.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Print the report as JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ExploreArgs {
    #[arg(long, value_enum, default_value = "cc")]
    pub algo: AlgoArg,
    #[arg(long, default_value_t = 2)]
    pub procs: usize,
    /// Crash budget.
    #[arg(long, default_value_t = 0)]
    pub crashes: u32,
    /// Completed passages per process.
    #[arg(long, default_value_t = 2)]
    pub passages: u32,
    /// Depth limit; liveness is skipped when it truncates the graph.
    #[arg(long)]
    pub depth: Option<u32>,
    #[arg(long, default_value_t = 20_000_000)]
    pub max_states: usize,
    #[arg(long, default_value_t = 0)]
    pub dwell: u32,
    #[arg(long, value_enum, default_value = "none")]
    pub mutant: MutantArg,
    /// Also branch on idle processes calling Recover.
    #[arg(long)]
    pub spurious: bool,
    #[arg(long)]
    pub no_liveness: bool,
    /// Stop at the first violation.
    #[arg(long)]
    pub first: bool,
}

#[derive(Debug, Args)]
pub struct ScalingArgs {
    #[arg(long, value_enum, default_value = "cc")]
    pub algo: AlgoArg,
    #[arg(long, value_delimiter = ',', default_value = "4,16,64")]
    pub procs: Vec<usize>,
    #[arg(long, default_value_t = 16)]
    pub seeds: u64,
    #[arg(long, env = "RME_LAB_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100_000)]
    pub steps: u64,
    #[arg(long, default_value_t = 5_000)]
    pub crash_every: u64,
    /// Exit 1 unless the reported maxima are equal for every n.
    #[arg(long)]
    pub require_flat: bool,
}

#[derive(Debug, Args)]
pub struct CheckTraceArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Trace written by `run --trace`.
    #[arg(long)]
    pub trace: PathBuf,
}

/// Parses the `--check` list.
pub fn parse_checks(s: &str) -> Result<Vec<ViolationCode>, CliError> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(ViolationCode::ALL.to_vec());
    }
    s.split(',')
        .map(|t| {
            let t = t.trim();
            ViolationCode::from_name(&t.to_ascii_uppercase())
                .ok_or_else(|| CliError::Property(t.to_string()))
        })
        .collect()
}

pub fn verdict_table(r: &RunReport, checks: &[ViolationCode]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} n={} seed={} steps={} crashes={} passages={}",
        r.algorithm, r.n, r.seed, r.stats.steps, r.stats.crashes, r.stats.passages
    );
    let _ = writeln!(out, "{:<18} {:<6} detail", "property", "result");
    for v in &r.verdicts {
        let result = match (v.applicable, v.pass) {
            (false, _) => "n/a",
            (true, true) => "pass",
            (true, false) => "FAIL",
        };
        let mark = if checks.contains(&v.property) {
            ""
        } else {
            " (not checked)"
        };
        let detail = v
            .witness
            .as_ref()
            .map(|w| format!("steps {}..{}: {}", w.from_step, w.to_step, w.detail))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{:<18} {:<6} {detail}{mark}",
            v.property.name(),
            result
        );
    }
    let s = &r.stats;
    let _ = writeln!(
        out,
        "max exit {} recover {} | max passage RMR cc {} dsm {} | max wait {} overtakes {}",
        s.max_exit_steps,
        s.max_recover_steps,
        s.max_passage_cc,
        s.max_passage_dsm,
        s.max_wait_steps,
        s.max_overtakes
    );
    out
}

fn write_trace(path: &PathBuf, r: &RunReport) -> Result<(), CliError> {
    let io = |e| CliError::Io(path.display().to_string(), e);
    let f = File::create(path).map_err(io)?;
    let mut w = BufWriter::new(f);
    export(r.trace.as_deref().unwrap_or_default(), &mut w).map_err(io)?;
    w.flush().map_err(io)
}

pub fn cmd_run(args: &RunArgs, out: &mut dyn Write) -> Result<u8, CliError> {
    let checks = parse_checks(&args.check)?;
    let mut cfg = args.scenario.resolve()?;
    cfg.record_trace |= args.trace.is_some();
    let r = run(&cfg)?;
    if let Some(p) = &args.trace {
        write_trace(p, &r)?;
    }
    let failed: Vec<_> = r
        .verdicts
        .iter()
        .filter(|v| !v.pass && checks.contains(&v.property))
        .collect();
    let io = |e| CliError::Io("stdout".into(), e);
    if args.json {
        let line = serde_json::to_string(&r).expect("reports serialize");
        writeln!(out, "{line}").map_err(io)?;
    } else {
        write!(out, "{}", verdict_table(&r, &checks)).map_err(io)?;
        for v in &failed {
            if let Some(w) = &v.witness {
                writeln!(
                    out,
                    "witness {}: {}steps {}..{}{}",
                    v.property.name(),
                    w.pid.map(|p| format!("{p} ")).unwrap_or_default(),
                    w.from_step,
                    w.to_step,
                    args.trace
                        .as_ref()
                        .map(|p| format!(" in {}", p.display()))
                        .unwrap_or_default()
                )
                .map_err(io)?;
            }
        }
    }
    Ok(if failed.is_empty() {
        EXIT_PASS
    } else {
        EXIT_VIOLATION
    })
}

pub fn cmd_explore(args: &ExploreArgs, out: &mut dyn Write) -> Result<u8, CliError> {
    let mut cfg = ExploreConfig::new(args.algo.into(), args.procs, args.crashes);
    cfg.passages = args.passages;
    cfg.max_depth = args.depth;
    cfg.max_states = args.max_states;
    cfg.cs_dwell = args.dwell;
    cfg.mutant = args.mutant.into();
    cfg.spurious_recover = args.spurious;
    cfg.liveness = !args.no_liveness;
    cfg.stop_on_violation = args.first;
    let r = explore(&cfg)?;
    let io = |e| CliError::Io("stdout".into(), e);
    writeln!(
        out,
        "states {} transitions {} max depth {} complete {} liveness {}",
        r.states,
        r.transitions,
        r.max_depth_seen,
        r.complete,
        if r.liveness_checked {
            "checked"
        } else {
            "skipped"
        }
    )
    .map_err(io)?;
    for v in &r.violations {
        let path: Vec<String> = v.path.iter().map(ToString::to_string).collect();
        writeln!(out, "{} {}: {}", v.code.name(), v.detail, path.join(" ")).map_err(io)?;
    }
    Ok(if r.violations.is_empty() {
        EXIT_PASS
    } else {
        EXIT_VIOLATION
    })
}

/// Max passage RMRs per n, as `(n, cc, dsm)`.
pub fn rmr_scaling(args: &ScalingArgs) -> Result<Vec<(usize, u64, u64)>, CliError> {
    let mut rows = Vec::new();
    for &n in &args.procs {
        let mut base = RunConfig::new(args.algo.into(), n, 0);
        base.max_steps = args.steps;
        base.crashes = CrashSpec::Every {
            period: args.crash_every,
        };
        base.check_invariant = false;
        base.bounds.rmr_cc = None;
        base.bounds.rmr_dsm = None;
        let mut row = (n, 0, 0);
        for r in run_batch(&seed_sweep(&base, args.seed, args.seeds)) {
            let r = r?;
            row.1 = row.1.max(r.stats.max_passage_cc);
            row.2 = row.2.max(r.stats.max_passage_dsm);
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn cmd_rmr_scaling(args: &ScalingArgs, out: &mut dyn Write) -> Result<u8, CliError> {
    let rows = rmr_scaling(args)?;
    let io = |e| CliError::Io("stdout".into(), e);
    writeln!(out, "{:>6} {:>12} {:>12}", "n", "passage_cc", "passage_dsm").map_err(io)?;
    for (n, cc, dsm) in &rows {
        writeln!(out, "{n:>6} {cc:>12} {dsm:>12}").map_err(io)?;
    }
    let flat = rows
        .windows(2)
        .all(|w| (w[0].1, w[0].2) == (w[1].1, w[1].2));
    Ok(if args.require_flat && !flat {
        EXIT_VIOLATION
    } else {
        EXIT_PASS
    })
}

pub fn cmd_check_trace(args: &CheckTraceArgs, out: &mut dyn Write) -> Result<u8, CliError> {
    let cfg = args.scenario.resolve()?;
    let f =
        File::open(&args.trace).map_err(|e| CliError::Io(args.trace.display().to_string(), e))?;
    let events = import(BufReader::new(f))?;
    let engine = Engine::new(cfg.clone())?;
    let (verdicts, stats) = check_run(&events, &check_context(&cfg, engine.rme()));
    let r = RunReport {
        algorithm: cfg.algorithm,
        n: cfg.n,
        seed: cfg.seed,
        verdicts,
        stats,
        violations: Vec::new(),
        trace: None,
    };
    let checks = ViolationCode::ALL.to_vec();
    write!(out, "{}", verdict_table(&r, &checks)).map_err(|e| CliError::Io("stdout".into(), e))?;
    Ok(if r.verdicts.iter().all(|v| v.pass) {
        EXIT_PASS
    } else {
        EXIT_VIOLATION
    })
}

pub fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<u8, CliError> {
    match &cli.command {
        Command::Run(a) => cmd_run(a, out),
        Command::Explore(a) => cmd_explore(a, out),
        Command::RmrScaling(a) => cmd_rmr_scaling(a, out),
        Command::CheckTrace(a) => cmd_check_trace(a, out),
    }
}
