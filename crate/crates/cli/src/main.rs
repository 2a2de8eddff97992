use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use contre::augment::{self, AugmentError, AugmentPolicy};
use contre::data_io::{self, DataError, PredictionRecord};
use contre::harness::{self, AnalysisOptions, Cohort, ExperimentConfig, HarnessError, PipelineOutput, SweepSpec};
use contre::image_ops::OpName;
use contre::plots;
use contre::report::CorrelationReport;
use contre::stats::WithinWeighting;
use contre::synth::SyntheticSpec;

#[derive(Parser)]
#[command(name = "contre", version, about = "Rank classifiers by accuracy on contrastive examples")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone, Default)]
struct PolicyArgs {
    /// Operators per view.
    #[arg(long)]
    n: Option<usize>,
    /// Shared magnitude on the 0..30 scale.
    #[arg(long)]
    m: Option<f64>,
    /// Contrastive views per sample.
    #[arg(long)]
    views: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated operator pool.
    #[arg(long, value_delimiter = ',')]
    ops: Option<Vec<String>>,
}

#[derive(clap::Args, Clone, Default)]
struct AnalysisArgs {
    #[arg(long)]
    reduce_dim: Option<usize>,
    #[arg(long, value_parser = parse_weighting)]
    within_weighting: Option<WithinWeighting>,
    /// Skip Fisher ratios even when features are present.
    #[arg(long)]
    no_fisher: bool,
}

fn parse_weighting(s: &str) -> Result<WithinWeighting, String> {
    s.parse()
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepKind {
    Nm,
    Single,
    Pairs,
}

#[derive(Subcommand)]
enum Command {
    /// Write contrastive views of a dataset manifest.
    Gen {
        /// `sample_id,path,label` manifest.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        policy: PolicyArgs,
    },
    /// Per-view accuracy of every model in the prediction files.
    Score {
        #[arg(long, required = true, num_args = 1..)]
        pred: Vec<PathBuf>,
        /// Write JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Correlation report from prediction files.
    Correlate {
        #[arg(long, required = true, num_args = 1..)]
        pred: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
    /// Fisher ratios from the features in prediction files.
    Fisher {
        #[arg(long, required = true, num_args = 1..)]
        pred: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
    /// Policy sweep over the built-in cohort.
    Sweep {
        /// Defaults to the config's sweep, else `nm`.
        #[arg(long, value_enum)]
        kind: Option<SweepKind>,
        /// N values for `nm` [default: 1,2,3].
        #[arg(long, value_delimiter = ',')]
        ns: Option<Vec<usize>>,
        /// M values for `nm` [default: 4,8,...,28].
        #[arg(long, value_delimiter = ',')]
        ms: Option<Vec<f64>>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Defaults to the config's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        policy: PolicyArgs,
    },
    /// Train the built-in cohort, predict every view and write the report.
    E2e {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Defaults to the config's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        train_size: Option<usize>,
        #[arg(long)]
        test_size: Option<usize>,
        #[command(flatten)]
        policy: PolicyArgs,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
    /// Summarize a report and redraw its plots.
    Report {
        #[arg(long)]
        report: PathBuf,
        /// Plot directory; defaults to `plots/` next to the report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Config(String),
    Data(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Data(_) => 3,
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e.exit_code() {
            2 => Failure::Config(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<AugmentError> for Failure {
    fn from(e: AugmentError) -> Self {
        match e {
            AugmentError::InvalidPolicy(_) => Failure::Config(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

/// Whether any correlation in the written output was undefined.
type Outcome = Result<bool, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => {
            eprintln!("warning: some correlations are undefined; see the report notes");
            ExitCode::from(4)
        }
        Err(f) => {
            let (Failure::Config(msg) | Failure::Data(msg)) = &f;
            eprintln!("error: {msg}");
            ExitCode::from(f.code())
        }
    }
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Gen { data, out, policy } => gen(&data, &out, &policy),
        Command::Score { pred, out } => score(&pred, out.as_deref()),
        Command::Correlate { pred, out, analysis } => correlate(&pred, &out, &analysis, false),
        Command::Fisher { pred, out, analysis } => correlate(&pred, &out, &analysis, true),
        Command::Sweep {
            kind,
            ns,
            ms,
            config,
            out,
            policy,
        } => sweep(kind, ns, ms, config.as_deref(), out, &policy),
        Command::E2e {
            config,
            out,
            train_size,
            test_size,
            policy,
            analysis,
        } => e2e(config.as_deref(), out, train_size, test_size, &policy, &analysis),
        Command::Report { report, out } => summarize(&report, out.as_deref()),
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Data(format!("{}: {e}", path.display()))
}

fn write_json<T: serde::Serialize + ?Sized>(value: &T, path: Option<&Path>) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Data(e.to_string()))?;
    text.push('\n');
    match path {
        Some(p) => fs::write(p, text).map_err(|e| io_failure(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn apply_policy_args(policy: &mut AugmentPolicy, views: &mut u32, args: &PolicyArgs) -> Result<(), Failure> {
    if let Some(n) = args.n {
        policy.n_ops = n;
    }
    if let Some(m) = args.m {
        policy.magnitude = m;
    }
    if let Some(v) = args.views {
        *views = v;
    }
    if let Some(seed) = args.seed {
        policy.master_seed = seed;
    }
    if let Some(ops) = &args.ops {
        policy.op_pool = ops
            .iter()
            .map(|s| s.parse::<OpName>().map_err(|e| Failure::Config(e.to_string())))
            .collect::<Result<_, _>>()?;
    }
    policy.validate()?;
    if *views == 0 {
        return Err(Failure::Config("--views must be at least 1".into()));
    }
    Ok(())
}

fn apply_analysis_args(options: &mut AnalysisOptions, args: &AnalysisArgs) -> Result<(), Failure> {
    if let Some(d) = args.reduce_dim {
        if d == 0 {
            return Err(Failure::Config("--reduce-dim must be positive".into()));
        }
        options.reduce_dim = d;
    }
    if let Some(w) = args.within_weighting {
        options.within_weighting = w;
    }
    if args.no_fisher {
        options.fisher = false;
    }
    Ok(())
}

fn gen(data: &Path, out: &Path, args: &PolicyArgs) -> Outcome {
    let mut policy = AugmentPolicy::default();
    let mut views = 1;
    apply_policy_args(&mut policy, &mut views, args)?;
    let rows = data_io::read_dataset_manifest(data)?;
    let manifest = augment::generate_contrastive_set(&policy, &rows, views, out)?;
    println!("{} views written; manifest at {}", manifest.rows.len(), manifest.path.display());
    Ok(false)
}

fn load_predictions(paths: &[PathBuf]) -> Result<Vec<PredictionRecord>, Failure> {
    let mut records = Vec::new();
    for p in paths {
        records.extend(data_io::read_all_predictions(p)?);
    }
    Ok(records)
}

fn score(pred: &[PathBuf], out: Option<&Path>) -> Outcome {
    let records = load_predictions(pred)?;
    write_json(&data_io::score(&records)?, out)?;
    Ok(false)
}

fn correlate(pred: &[PathBuf], out: &Path, args: &AnalysisArgs, fisher_only: bool) -> Outcome {
    let mut options = AnalysisOptions::default();
    apply_analysis_args(&mut options, args)?;
    if fisher_only {
        options.fisher = true;
    }
    let records = load_predictions(pred)?;
    let inputs = pred.iter().map(|p| p.display().to_string()).collect();
    let report = harness::analyze(&records, &options, options.report_config(None, inputs))?;
    fs::create_dir_all(out).map_err(|e| io_failure(out, e))?;
    if fisher_only {
        let Some(fisher) = &report.fisher else {
            return Err(Failure::Data("prediction files carry no train-view features".into()));
        };
        write_json(fisher, Some(&out.join("fisher.json")))?;
        let degenerate = fisher.correlations.iter().any(|c| c.status != contre::report::CorrelationStatus::Ok);
        return Ok(degenerate || fisher.rows.iter().any(|r| r.ratio.is_none()));
    }
    write_report(&report, out)
}

fn write_report(report: &CorrelationReport, out: &Path) -> Outcome {
    let path = out.join(harness::REPORT_FILE);
    data_io::write_report(report, &path)?;
    let plot_dir = out.join(harness::PLOTS_DIR);
    plots::emit_plots(report, &plot_dir).map_err(|e| io_failure(&plot_dir, e))?;
    print_summary(report);
    Ok(report.has_degenerate())
}

fn print_summary(report: &CorrelationReport) {
    for c in report.all_correlations() {
        match c.value {
            Some(v) => println!("{:<30} {v:+.4}", c.name),
            None => println!("{:<30} undefined ({:?})", c.name, c.status),
        }
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<ExperimentConfig, Failure> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| io_failure(p, e))?;
            serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))
        }
        None => Ok(ExperimentConfig::builtin(seed.unwrap_or(0))),
    }
}

fn output_dir(flag: Option<PathBuf>, config: &ExperimentConfig) -> Result<PathBuf, Failure> {
    flag.or_else(|| config.output_dir.clone())
        .ok_or_else(|| Failure::Config("no output directory: pass --out or set output_dir".into()))
}

fn e2e(
    config_path: Option<&Path>,
    out: Option<PathBuf>,
    train_size: Option<usize>,
    test_size: Option<usize>,
    policy: &PolicyArgs,
    analysis: &AnalysisArgs,
) -> Outcome {
    let mut config = load_config(config_path, policy.seed)?;
    let out = output_dir(out, &config)?;
    apply_policy_args(&mut config.policy, &mut config.views_per_sample, policy)?;
    apply_analysis_args(&mut config.analysis, analysis)?;
    if train_size.is_some() || test_size.is_some() {
        let harness::DataSource::Synthetic(spec) = &mut config.data else {
            return Err(Failure::Config("--train-size/--test-size apply to synthetic data only".into()));
        };
        *spec = SyntheticSpec {
            train_size: train_size.unwrap_or(spec.train_size),
            test_size: test_size.unwrap_or(spec.test_size),
            ..spec.clone()
        };
    }
    config.output_dir = Some(out.clone());
    let output: PipelineOutput = harness::run_pipeline(&config)?;
    harness::write_outputs(&output, &out)?;
    print_summary(&output.report);
    Ok(output.report.has_degenerate())
}

fn sweep(
    kind: Option<SweepKind>,
    ns: Option<Vec<usize>>,
    ms: Option<Vec<f64>>,
    config_path: Option<&Path>,
    out: Option<PathBuf>,
    args: &PolicyArgs,
) -> Outcome {
    let mut config = load_config(config_path, args.seed)?;
    let out = output_dir(out, &config)?;
    apply_policy_args(&mut config.policy, &mut config.views_per_sample, args)?;
    config.analysis.fisher = false;
    config.test_contre = false;
    let grid = |ns: Option<Vec<usize>>, ms: Option<Vec<f64>>| SweepSpec::Grid {
        n: ns.unwrap_or_else(|| vec![1, 2, 3]),
        m: ms.unwrap_or_else(|| (1..=7).map(|i| 4.0 * i as f64).collect()),
    };
    config.sweep = Some(match (kind, config.sweep.take()) {
        (Some(SweepKind::Single), _) => SweepSpec::SingleOps,
        (Some(SweepKind::Pairs), _) => SweepSpec::Pairs,
        (None, Some(SweepSpec::Grid { n, m })) => grid(ns.or(Some(n)), ms.or(Some(m))),
        (None, Some(spec)) => spec,
        (Some(SweepKind::Nm), _) | (None, None) => grid(ns, ms),
    });
    config.validate()?;
    let name = match config.sweep {
        Some(SweepSpec::SingleOps) => "sweep_single.csv",
        Some(SweepSpec::Pairs) => "sweep_pairs.csv",
        _ => "sweep_nm.csv",
    };
    let cohort = Cohort::prepare(&config)?;
    let cells = harness::run_sweep(&cohort, &config)?;
    fs::create_dir_all(&out).map_err(|e| io_failure(&out, e))?;
    harness::write_sweep_csv(&cells, &out.join(name))?;
    for c in &cells {
        match c.spearman {
            Some(v) => println!("{:<40} {v:+.4}", c.policy),
            None => println!("{:<40} undefined", c.policy),
        }
    }
    Ok(cells.iter().any(|c| c.spearman.is_none()))
}

fn summarize(path: &Path, out: Option<&Path>) -> Outcome {
    let report = data_io::read_report(path)?;
    let plot_dir = match out {
        Some(p) => p.to_path_buf(),
        None => path.parent().unwrap_or(Path::new(".")).join(harness::PLOTS_DIR),
    };
    plots::emit_plots(&report, &plot_dir).map_err(|e| io_failure(&plot_dir, e))?;
    print_summary(&report);
    for note in &report.notes {
        println!("note [{}]: {}", note.kind, note.message);
    }
    Ok(report.has_degenerate())
}
