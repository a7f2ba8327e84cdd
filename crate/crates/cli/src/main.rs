use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use supplyguard::fed::DecayShape;
use supplyguard::harness::{self, AdminPolicy, CoalitionMode, ExperimentSpec};
use supplyguard::par::Exec;
use supplyguard::report::{self, PlotMetric};
use supplyguard::scenario::{self, Regime, ScenarioConfig};
use supplyguard::{verify, HarnessError};

const OUT_ENV: &str = "SUPPLYGUARD_OUT";

#[derive(Parser)]
#[command(name = "supplyguard", version, about = "Permissioned supply-chain ledger simulator with federated anomaly detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a labeled event stream (CSV) and its context profiles (JSON).
    Generate(GenerateArgs),
    /// Run one experiment and write its artifacts.
    Run(Box<RunArgs>),
    /// Run the invariant suite and optionally verify a run's ledgers.
    Verify(VerifyArgs),
    /// Summarize a metrics CSV.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    Iid,
    NonIid,
}

impl From<RegimeArg> for Regime {
    fn from(r: RegimeArg) -> Self {
        match r {
            RegimeArg::Iid => Regime::Iid,
            RegimeArg::NonIid => Regime::NonIid,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Preference,
    Random,
    AllInclusive,
    CentralBaseline,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum ShapeArg {
    Constant,
    Linear,
    Geometric,
}

#[derive(Clone, Copy, ValueEnum)]
enum AdminArg {
    ApproveAll,
    RejectAll,
    ApproveIfNormal,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    F1,
    Accuracy,
    Loss,
}

#[derive(Args, Default)]
struct ScenarioFlags {
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    events: Option<usize>,
    #[arg(long)]
    anomaly_rate: Option<f64>,
    #[arg(long, value_enum)]
    regime: Option<RegimeArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Scenario weights: shipping_delay,inflated_production,unauthorized_resource,manipulated_sales
    #[arg(long, value_delimiter = ',', num_args = 4)]
    mix: Option<Vec<f64>>,
    #[arg(long)]
    profiles_count: Option<usize>,
    #[arg(long)]
    cluster_jitter: Option<f64>,
    #[arg(long)]
    channel_jitter: Option<f64>,
    #[arg(long)]
    friend_threshold: Option<f64>,
}

impl ScenarioFlags {
    fn apply(&self, c: &mut ScenarioConfig) {
        set(&mut c.n_channels, self.channels);
        set(&mut c.events_per_channel, self.events);
        set(&mut c.anomaly_rate, self.anomaly_rate);
        set(&mut c.regime, self.regime.map(Regime::from));
        set(&mut c.seed, self.seed);
        if let Some(m) = &self.mix {
            c.mix.shipping_delay = m[0];
            c.mix.inflated_production = m[1];
            c.mix.unauthorized_resource = m[2];
            c.mix.manipulated_sales = m[3];
        }
        set(&mut c.n_profiles, self.profiles_count);
        set(&mut c.cluster_jitter, self.cluster_jitter);
        set(&mut c.channel_jitter, self.channel_jitter);
        set(&mut c.friend_threshold, self.friend_threshold);
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    scenario: ScenarioFlags,
    /// JSON scenario config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "stream.csv")]
    out: PathBuf,
    #[arg(long, default_value = "profiles.json")]
    profiles: PathBuf,
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment spec (may be partial); flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the non-IID defaults instead of the IID ones.
    #[arg(long)]
    non_iid_defaults: bool,
    #[command(flatten)]
    scenario: ScenarioFlags,
    /// Replay a stream CSV instead of generating one.
    #[arg(long, requires = "stream_profiles")]
    stream: Option<PathBuf>,
    #[arg(long = "stream-profiles")]
    stream_profiles: Option<PathBuf>,

    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    tau_percentile: Option<f64>,
    #[arg(long)]
    flag_policy: Option<usize>,

    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    local_epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lr_final: Option<f64>,
    #[arg(long, value_enum)]
    lr_shape: Option<ShapeArg>,
    #[arg(long)]
    fl_seed: Option<u64>,

    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Group count for random coalitions.
    #[arg(long)]
    groups: Option<usize>,
    #[arg(long)]
    min_coalition_size: Option<usize>,
    #[arg(long)]
    pretrain_epochs: Option<usize>,
    #[arg(long, value_enum)]
    admin_policy: Option<AdminArg>,
    #[arg(long)]
    sequential: bool,
    #[arg(long)]
    checkpoints: bool,
    /// Artifact directory; defaults to $SUPPLYGUARD_OUT/<mode>-<seed>.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run directory whose ledgers should be re-verified.
    #[arg(long)]
    run_dir: Option<PathBuf>,
    #[arg(long)]
    skip_suite: bool,
}

#[derive(Args)]
struct ReportArgs {
    metrics: PathBuf,
    #[arg(long)]
    svg: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "f1")]
    metric: MetricArg,
    #[arg(long)]
    json: bool,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn read_json(path: &Path) -> Result<Value, HarnessError> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

fn build_spec(a: &RunArgs) -> Result<ExperimentSpec, HarnessError> {
    let base = if a.non_iid_defaults {
        ExperimentSpec::non_iid()
    } else {
        ExperimentSpec::iid()
    };
    let mut spec = match &a.config {
        Some(path) => {
            let mut v = serde_json::to_value(&base)?;
            merge(&mut v, read_json(path)?);
            serde_json::from_value(v)?
        }
        None => base,
    };
    a.scenario.apply(&mut spec.scenario);
    set(&mut spec.agent.window, a.window);
    set(&mut spec.agent.hidden, a.hidden);
    set(&mut spec.agent.batch_size, a.batch_size);
    set(&mut spec.agent.tau_percentile, a.tau_percentile);
    set(&mut spec.agent.flag_policy, a.flag_policy);
    set(&mut spec.fl.rounds, a.rounds);
    set(&mut spec.fl.local_epochs, a.local_epochs);
    set(&mut spec.fl.lr_schedule.initial, a.lr);
    set(&mut spec.fl.lr_schedule.final_lr, a.lr_final);
    if let Some(s) = a.lr_shape {
        spec.fl.lr_schedule.shape = match s {
            ShapeArg::Constant => DecayShape::Constant,
            ShapeArg::Linear => DecayShape::Linear,
            ShapeArg::Geometric => DecayShape::Geometric,
        };
        if s == ShapeArg::Constant && a.lr_final.is_none() {
            spec.fl.lr_schedule.final_lr = spec.fl.lr_schedule.initial;
        }
    } else if a.lr.is_some() && spec.fl.lr_schedule.shape == DecayShape::Constant {
        spec.fl.lr_schedule.final_lr = spec.fl.lr_schedule.initial;
    }
    set(&mut spec.fl.seed, a.fl_seed.or(a.scenario.seed));
    if let Some(m) = a.mode {
        spec.mode = match m {
            ModeArg::Preference => CoalitionMode::Preference,
            ModeArg::Random => CoalitionMode::Random { groups: a.groups.unwrap_or(3) },
            ModeArg::AllInclusive => CoalitionMode::AllInclusive,
            ModeArg::CentralBaseline => CoalitionMode::CentralBaseline,
        };
    } else if let (Some(g), CoalitionMode::Random { groups }) = (a.groups, &mut spec.mode) {
        *groups = g;
    }
    set(&mut spec.min_coalition_size, a.min_coalition_size);
    set(&mut spec.pretrain_epochs, a.pretrain_epochs);
    if let Some(p) = a.admin_policy {
        spec.admin_policy = match p {
            AdminArg::ApproveAll => AdminPolicy::ApproveAll,
            AdminArg::RejectAll => AdminPolicy::RejectAll,
            AdminArg::ApproveIfNormal => AdminPolicy::ApproveIfNormal,
        };
    }
    if a.sequential {
        spec.exec = Exec::Sequential;
    }
    spec.checkpoints |= a.checkpoints;
    if a.out.is_some() {
        spec.out_dir = a.out.clone();
    } else if spec.out_dir.is_none() {
        if let Ok(root) = std::env::var(OUT_ENV) {
            spec.out_dir = Some(
                PathBuf::from(root).join(format!("{}-{}", spec.mode.name(), spec.fl.seed)),
            );
        }
    }
    spec.validate()?;
    Ok(spec)
}

fn print_json(v: &Value) -> Result<(), HarnessError> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn generate(a: &GenerateArgs) -> Result<bool, HarnessError> {
    let mut cfg: ScenarioConfig = match &a.config {
        Some(path) => serde_json::from_value(read_json(path)?)?,
        None => ScenarioConfig::default(),
    };
    a.scenario.apply(&mut cfg);
    let exec = if a.sequential { Exec::Sequential } else { Exec::default() };
    let stream = scenario::generate_with(&cfg, exec)?;
    scenario::save(&stream, &a.out, &a.profiles)?;
    let records: usize = stream.channels.iter().map(|c| c.records.len()).sum();
    print_json(&json!({
        "stream": a.out,
        "profiles": a.profiles,
        "channels": stream.channels.len(),
        "records": records,
    }))?;
    Ok(true)
}

fn run(a: &RunArgs) -> Result<bool, HarnessError> {
    let spec = build_spec(a)?;
    let outcome = match (&a.stream, &a.stream_profiles) {
        (Some(csv), Some(profiles)) => {
            let stream = scenario::load(csv, profiles)?;
            harness::run_on_stream(&spec, &stream)?
        }
        _ => harness::run(&spec)?,
    };
    let s = &outcome.summary;
    print_json(&json!({
        "mode": s.mode,
        "out_dir": spec.out_dir,
        "final_metrics": s.final_metrics,
        "rounds_to_90": s.rounds_to_90,
        "leakage": s.leakage,
        "coalitions": s.partition.coalitions.len(),
    }))?;
    Ok(true)
}

fn verify_cmd(a: &VerifyArgs) -> Result<bool, HarnessError> {
    let mut ok = true;
    let mut report = serde_json::Map::new();
    if !a.skip_suite {
        let checks = verify::invariant_suite(a.seed);
        ok &= checks.iter().all(|c| c.passed);
        report.insert("checks".into(), serde_json::to_value(&checks)?);
    }
    if let Some(dir) = &a.run_dir {
        let ledgers = verify::verify_run_dir(dir)?;
        ok &= ledgers.iter().all(|l| l.status == "valid");
        report.insert("ledgers".into(), serde_json::to_value(&ledgers)?);
    }
    report.insert("passed".into(), ok.into());
    print_json(&Value::Object(report))?;
    Ok(ok)
}

fn report_cmd(a: &ReportArgs) -> Result<bool, HarnessError> {
    let rows = report::read_metrics_csv(fs::File::open(&a.metrics)?)?;
    let summaries = report::summarize(&rows);
    if a.json {
        print_json(&serde_json::to_value(&summaries)?)?;
    } else {
        print!("{}", report::render_table(&summaries));
    }
    if let Some(path) = &a.svg {
        let metric = match a.metric {
            MetricArg::F1 => PlotMetric::F1,
            MetricArg::Accuracy => PlotMetric::Accuracy,
            MetricArg::Loss => PlotMetric::Loss,
        };
        fs::write(path, report::render_svg(&rows, metric))?;
    }
    Ok(true)
}

fn fail(kind: &str, message: String, code: u8) -> ExitCode {
    eprintln!("{}", json!({ "error": kind, "message": message }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.render().to_string().trim().to_string(), 2),
    };
    let result = match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Run(a) => run(a),
        Command::Verify(a) => verify_cmd(a),
        Command::Report(a) => report_cmd(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => fail(e.kind(), e.to_string(), 1),
    }
}
