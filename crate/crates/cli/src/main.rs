//! `bellcrbm`: generate Born-rule data, train conditional RBMs, evaluate
//! them and sweep their temperature.
//!
//! Exit codes: 0 success, 1 usage, 2 I/O, 3 non-convergence, 4 divergence.

mod charts;
mod config;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bellcrbm::evaluation::{self, EvaluationReport, SweepResult};
use bellcrbm::io::{self as bio, FileHeader, Lineage, ModelFile};
use bellcrbm::oracle::born_probabilities;
use bellcrbm::training::{self, TargetTables, TrainingSource};
use bellcrbm::{ChshSettings, ConditioningLayout, Temperature, TrainingConfig, TrainingMode};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::charts::BarGroup;
use crate::config::{ConfigFile, ResolvedLayout};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_IO: u8 = 2;
pub const EXIT_NOT_CONVERGED: u8 = 3;
pub const EXIT_DIVERGED: u8 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_IO,
            message: message.into(),
        }
    }
}

impl From<bellcrbm::Error> for Failure {
    fn from(e: bellcrbm::Error) -> Self {
        use bellcrbm::Error as E;
        let code = match e {
            E::Io(_) | E::Parse(_) | E::Json(_) => EXIT_IO,
            E::Diverged { .. } => EXIT_DIVERGED,
            _ => EXIT_USAGE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// `println!` that tolerates a closed stdout, such as a pipe into `head`.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Parser, Debug)]
#[command(name = "bellcrbm", version, about = "Conditional RBM models of two-spin Bell-test statistics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the Born-rule outcome table of every condition.
    Oracle(OracleArgs),
    /// Simulate a measurement dataset from the Born rule.
    GenData(GenDataArgs),
    /// Fit a model to the Born-rule tables or to a dataset.
    Train(TrainArgs),
    /// Compare a saved model with the Born-rule tables.
    Eval(EvalArgs),
    /// Evaluate a saved model over a range of temperatures.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Experiment preset: epr-2x2, epr-8x8 or epr-8x8-3state.
    #[arg(long, conflicts_with = "layout")]
    pub preset: Option<String>,
    /// JSON layout file with detector angles (radians) and states.
    #[arg(long)]
    pub layout: Option<PathBuf>,
    /// TOML run configuration; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing [default: out].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write SVG charts.
    #[arg(long)]
    pub charts: bool,
    /// Random seed [default: 7].
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct GenDataArgs {
    #[command(flatten)]
    common: Common,
    /// Number of trials [default: 100000].
    #[arg(long)]
    n_trials: Option<usize>,
}

#[derive(Args, Debug, Default)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Dataset file from gen-data; without it the Born-rule tables are the targets.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// exact_kl, cd_k or pcd.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Hidden units [default: the preset's, else 3].
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub gibbs_k: Option<usize>,
    /// Persistent chains per condition.
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub steps_per_epoch: Option<usize>,
    #[arg(long)]
    pub init_scale: Option<f64>,
    #[arg(long)]
    pub target_tv: Option<f64>,
    #[arg(long)]
    pub restarts: Option<usize>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Model file written by train [default: <out>/model.json].
    #[arg(long)]
    model: Option<PathBuf>,
    /// Evaluation temperature [default: 1.0].
    #[arg(long)]
    temp: Option<f64>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Model file written by train [default: <out>/model.json].
    #[arg(long)]
    model: Option<PathBuf>,
    /// Highest temperature [default: 1.0].
    #[arg(long)]
    t_start: Option<f64>,
    /// Lowest temperature [default: 0.1].
    #[arg(long)]
    t_end: Option<f64>,
    /// Number of evenly spaced temperatures [default: 10].
    #[arg(long)]
    steps: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Oracle(a) => cmd_oracle(&a.common),
        Command::GenData(a) => cmd_gen_data(&a.common, a.n_trials),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a.common, a.model.as_deref(), a.temp),
        Command::Sweep(a) => cmd_sweep(&a),
    }
}

struct Context {
    file: ConfigFile,
    out: PathBuf,
    charts: bool,
}

impl Context {
    fn new(common: &Common) -> CliResult<Self> {
        let file = match &common.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let out = common.out.clone().or_else(|| file.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
        let charts = common.charts || file.charts.unwrap_or(false);
        fs::create_dir_all(&out).map_err(|e| Failure::io(format!("cannot create {}: {e}", out.display())))?;
        Ok(Self { file, out, charts })
    }

    fn seed(&self, common: &Common) -> u64 {
        common.seed.or(self.file.seed).unwrap_or(TrainingConfig::default().seed)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&self, name: &str, contents: &str) -> CliResult<PathBuf> {
        let path = self.path(name);
        fs::write(&path, contents).map_err(|e| Failure::io(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}

fn oracle_csv(layout: &ConditioningLayout) -> String {
    let mut out = String::from("state_idx,a_idx,b_idx,state,alpha_rad,beta_rad,p_pp,p_pm,p_mp,p_mm\n");
    for u in layout.conditions() {
        let (alpha, beta, psi) = layout.resolve(&u);
        let p = born_probabilities(psi, alpha, beta).probs();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            u.state, u.a, u.b, layout.states[u.state].label, alpha.0, beta.0, p[0], p[1], p[2], p[3]
        ));
    }
    out
}

fn condition_label(layout: &ConditioningLayout, u: &bellcrbm::ConditionVector) -> String {
    let label = format!("a{} b{}", u.a, u.b);
    if layout.states.len() > 1 {
        format!("{} {label}", layout.states[u.state].label)
    } else {
        label
    }
}

fn cmd_oracle(common: &Common) -> CliResult<()> {
    let ctx = Context::new(common)?;
    let resolved = ResolvedLayout::resolve(common, &ctx.file, None)?;
    let header = FileHeader::new(
        "oracle",
        None,
        &json!({"source": resolved.source, "layout": resolved.layout, "out": ctx.out, "charts": ctx.charts}),
    )?;
    let path = ctx.write("oracle.csv", &bio::with_header(&header, &oracle_csv(&resolved.layout)))?;
    if ctx.charts {
        let groups: Vec<BarGroup> = resolved
            .layout
            .conditions()
            .iter()
            .map(|u| {
                let (a, b, psi) = resolved.layout.resolve(u);
                BarGroup {
                    label: condition_label(&resolved.layout, u),
                    target: born_probabilities(psi, a, b).probs(),
                    model: None,
                }
            })
            .collect();
        ctx.write("oracle.svg", &charts::probability_bars("Born-rule outcome tables", &header.render(), &groups))?;
    }
    say!(
        "wrote {} conditions to {}",
        resolved.layout.n_conditions(),
        path.display()
    );
    Ok(())
}

fn cmd_gen_data(common: &Common, n_trials: Option<usize>) -> CliResult<()> {
    let ctx = Context::new(common)?;
    let resolved = ResolvedLayout::resolve(common, &ctx.file, None)?;
    let seed = ctx.seed(common);
    let n_trials = n_trials.or(ctx.file.n_trials).unwrap_or(100_000);
    if n_trials == 0 {
        return Err(Failure::usage("--n-trials must be at least 1"));
    }
    let dataset = training::simulate_dataset(&resolved.layout, n_trials, None, seed)?;
    let header = FileHeader::new(
        "gen-data",
        Some(seed),
        &json!({"source": resolved.source, "n_trials": n_trials, "seed": seed, "out": ctx.out}),
    )?;
    let path = ctx.path("dataset.csv");
    let file = File::create(&path).map_err(|e| Failure::io(format!("cannot write {}: {e}", path.display())))?;
    bio::write_dataset(BufWriter::new(file), &dataset, &resolved.layout, &header)?;
    say!("wrote {n_trials} trials to {}", path.display());
    Ok(())
}

/// Training configuration: defaults, then the config file, then flags.
pub fn resolve_training(args: &TrainArgs, file: &ConfigFile, hidden_hint: Option<usize>) -> CliResult<TrainingConfig> {
    let (mut cfg, file_sets_hidden) = file.training_config()?;
    if !file_sets_hidden {
        if let Some(n) = hidden_hint {
            cfg.n_hidden = n;
        }
    }
    if let Some(s) = file.seed {
        cfg.seed = s;
    }
    if let Some(m) = &args.mode {
        cfg.mode = m.parse::<TrainingMode>()?;
    }
    macro_rules! set {
        ($field:ident, $flag:expr) => {
            if let Some(v) = $flag {
                cfg.$field = v;
            }
        };
    }
    set!(learning_rate, args.lr);
    set!(epochs, args.epochs);
    set!(n_hidden, args.hidden);
    set!(batch_size, args.batch_size);
    set!(gibbs_k, args.gibbs_k);
    set!(n_chains, args.chains);
    set!(init_scale, args.init_scale);
    set!(target_tv, args.target_tv);
    set!(restarts, args.restarts);
    set!(seed, args.common.seed);
    if args.steps_per_epoch.is_some() {
        cfg.steps_per_epoch = args.steps_per_epoch;
    }
    Ok(cfg)
}

fn fit_groups(layout: &ConditioningLayout, report: &EvaluationReport) -> Vec<BarGroup> {
    report
        .conditions
        .iter()
        .map(|c| BarGroup {
            label: condition_label(layout, &c.condition),
            target: c.target.probs(),
            model: Some(c.model.probs()),
        })
        .collect()
}

fn cmd_train(args: &TrainArgs) -> CliResult<()> {
    let ctx = Context::new(&args.common)?;
    let data_path = args.data.clone().or_else(|| ctx.file.data.clone());
    let dataset = match &data_path {
        Some(p) => {
            let f = File::open(p).map_err(|e| Failure::io(format!("cannot read {}: {e}", p.display())))?;
            Some(bio::read_dataset(BufReader::new(f))?)
        }
        None => None,
    };
    let resolved = ResolvedLayout::resolve(&args.common, &ctx.file, dataset.as_ref())?;
    let config = resolve_training(args, &ctx.file, resolved.n_hidden)?;
    let layout = &resolved.layout;

    let oracle_targets = TargetTables::from_oracle(layout);
    let source = match &dataset {
        Some(d) => TrainingSource::Dataset(&d.dataset),
        None => TrainingSource::Targets(&oracle_targets),
    };
    let source_desc = match &data_path {
        Some(p) => format!("{} trained on dataset {}", resolved.source, p.display()),
        None => resolved.source.clone(),
    };
    let header = FileHeader::new(
        "train",
        Some(config.seed),
        &json!({"source": source_desc, "training": config, "out": ctx.out, "charts": ctx.charts}),
    )?;
    let model = training::train(layout, &config, source)?;
    let report = evaluation::evaluate(&model.params, layout, Temperature::UNIT)?;
    let final_tv = model.history.final_mean_tv();
    let lineage = Lineage {
        seed: config.seed,
        attempt: model.history.attempt,
        config: Some(config.clone()),
        source: source_desc,
        epochs_run: model.history.records.len(),
        final_mean_tv: final_tv.is_finite().then_some(final_tv),
        converged: model.history.converged,
    };
    let file = ModelFile::new(layout.clone(), model.params.clone(), lineage)?;
    let model_path = ctx.path("model.json");
    file.save(&model_path)?;
    ctx.write("history.csv", &bio::history_csv(&model.history, &header))?;
    if ctx.charts {
        ctx.write(
            "fit.svg",
            &charts::probability_bars("Model (blue) vs Born rule (grey), T = 1", &header.render(), &fit_groups(layout, &report)),
        )?;
    }
    say!("final mean TV: {final_tv:.6}");
    say!("mean TV vs Born rule: {:.6} (max {:.6})", report.mean_tv, report.max_tv);
    say!("epochs: {} (attempt {})", model.history.records.len(), model.history.attempt);
    say!("model: {}", model_path.display());
    if !model.history.converged {
        return Err(Failure {
            code: EXIT_NOT_CONVERGED,
            message: format!(
                "mean TV {final_tv:.6} did not reach target {} within {} epochs",
                config.target_tv, config.epochs
            ),
        });
    }
    Ok(())
}

fn load_model(ctx: &Context, model: Option<&Path>) -> CliResult<(PathBuf, ModelFile)> {
    let path = model
        .map(Path::to_path_buf)
        .or_else(|| ctx.file.model.clone())
        .unwrap_or_else(|| ctx.path("model.json"));
    let file = ModelFile::load(&path).map_err(|e| Failure::io(format!("cannot load model {}: {e}", path.display())))?;
    Ok((path, file))
}

fn cmd_eval(common: &Common, model: Option<&Path>, temp: Option<f64>) -> CliResult<()> {
    let ctx = Context::new(common)?;
    let (path, file) = load_model(&ctx, model)?;
    let t = temp.or(ctx.file.temp).unwrap_or(1.0);
    let temp = Temperature::new(t)?;
    let report = evaluation::evaluate(&file.params, &file.layout, temp)?;
    let profile = evaluation::export_weight_profile(&file.params, &file.layout)?;
    let header = FileHeader::new(
        "eval",
        Some(file.lineage.seed),
        &json!({"model": path, "temperature": t, "lineage": file.lineage, "out": ctx.out, "charts": ctx.charts}),
    )?;
    let doc = json!({
        "header": {"tool": bio::TOOL_NAME, "version": bio::TOOL_VERSION, "command": "eval",
                   "seed": file.lineage.seed, "config": header.config},
        "report": report,
    });
    ctx.write("report.json", &(serde_json::to_string_pretty(&doc).map_err(bellcrbm::Error::from)? + "\n"))?;
    ctx.write("report.csv", &bio::with_header(&header, &report.to_csv()))?;
    ctx.write("weights.csv", &bio::with_header(&header, &evaluation::weight_profile_csv(&profile)))?;
    if ctx.charts {
        let title = format!("Model (blue) vs Born rule (grey), T = {t}");
        ctx.write(
            "eval.svg",
            &charts::probability_bars(&title, &header.render(), &fit_groups(&file.layout, &report)),
        )?;
    }
    say!("temperature: {t}");
    say!("mean TV: {:.6} (max {:.6})", report.mean_tv, report.max_tv);
    say!("mean KL: {:.6}", report.mean_kl);
    for c in &report.chsh {
        say!("S_max [{}]: {:.6} ({})", c.state, c.values.max, c.values.best_placement.label());
    }
    for s in &report.signaling {
        say!("signaling deviation [{}]: {:.3e}", s.state, s.deviation.max());
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> CliResult<()> {
    let ctx = Context::new(&args.common)?;
    let t_start = args.t_start.or(ctx.file.t_start).unwrap_or(1.0);
    let t_end = args.t_end.or(ctx.file.t_end).unwrap_or(0.1);
    let steps = args.steps.or(ctx.file.steps).unwrap_or(10);
    if !(t_end > 0.0 && t_start > t_end && t_start.is_finite()) {
        return Err(Failure::usage(format!("need t_start > t_end > 0, got {t_start} and {t_end}")));
    }
    if steps < 2 {
        return Err(Failure::usage("--steps must be at least 2"));
    }
    let (path, file) = load_model(&ctx, args.model.as_deref())?;
    let temps = evaluation::linear_temperatures(t_start, t_end, steps)?;
    let sweep: SweepResult = evaluation::temperature_sweep(&file.params, &file.layout, &temps, &ChshSettings::canonical())?;
    let header = FileHeader::new(
        "sweep",
        Some(file.lineage.seed),
        &json!({"model": path, "t_start": t_start, "t_end": t_end, "steps": steps,
                "settings": sweep.settings, "lineage": file.lineage, "out": ctx.out, "charts": ctx.charts}),
    )?;
    ctx.write("sweep.csv", &bio::with_header(&header, &sweep.to_csv()))?;
    if ctx.charts {
        let series = |f: fn(&evaluation::SweepRow) -> f64| sweep.rows.iter().map(|r| (r.temperature, f(r))).collect();
        ctx.write(
            "sweep.svg",
            &charts::line_chart(
                "CHSH S_max and PR-box distance vs temperature",
                &header.render(),
                "temperature",
                &[
                    ("S_max", "#3366cc", series(|r| r.s_max)),
                    ("PR-box TV", "#cc3333", series(|r| r.pr_box_tv)),
                ],
            ),
        )?;
    }
    say!("temperature  S_max     PR-box TV  signaling");
    for r in &sweep.rows {
        say!("{:<12.4} {:<9.5} {:<10.5} {:.3e}", r.temperature, r.s_max, r.pr_box_tv, r.signaling);
    }
    Ok(())
}
