use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rateparity::calibration::{fit_per_group, FitParams, Weighting};
use rateparity::data::{load_csv, save_csv, Schema};
use rateparity::estimator::CurveOptions;
use rateparity::harness::scorer::{read_table, DEFAULT_LAMBDA};
use rateparity::harness::{emit_report, fit_baseline_scorer, run_experiment, ExperimentConfig, MethodSpec, TableSpec};
use rateparity::marginal::{mitigate, PredictorOptions};
use rateparity::synth::{generate, CalibrationFn, SynthConfig};
use rateparity::testing::{build_score_grid, default_percentiles, marginal_outcome_test, parity_test, Correction, TestOptions};
use rateparity::{BandwidthRule, Calibrator, ClusteredDataset, Error, Kernel, Method, Mode, Result};

#[derive(Parser)]
#[command(name = "rateparity", version, about = "Audit and repair predictive rate parity of scores")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Member-weighted (`user`) or instance-weighted (`aggregate`) estimation.
    #[arg(long, global = true, default_value = "user", value_parser = parse::<Mode>)]
    mode: Mode,
    #[arg(long, global = true, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value = "gaussian", value_parser = parse::<Kernel>)]
    kernel: Kernel,
    /// `auto` or a fixed positive bandwidth.
    #[arg(long, global = true, default_value = "auto", value_parser = parse::<BandwidthRule>)]
    bandwidth: BandwidthRule,
    /// Equal-frequency bins for binning calibrators and ECE.
    #[arg(long, global = true, default_value_t = 10)]
    bins: usize,
    /// Column remapping, e.g. `member_id=uid,group=sex,score=p`.
    #[arg(long, global = true)]
    schema: Option<String>,
    /// Accept scores outside [0, 1].
    #[arg(long, global = true)]
    unbounded: bool,
    /// Output file or directory, depending on the command.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Test equality of the groups' calibration curves on a scored CSV.
    Test {
        input: PathBuf,
        #[arg(long)]
        g1: Option<String>,
        #[arg(long)]
        g2: Option<String>,
        /// Run the marginal-outcome test at this threshold instead.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, default_value = "bonferroni", value_parser = parse::<Correction>)]
        correction: Correction,
        /// Objective index for multi-objective files.
        #[arg(long, default_value_t = 0)]
        objective: usize,
    },
    /// Fit per-group calibrators and save them as JSON.
    Calibrate {
        input: PathBuf,
        #[arg(long, default_value = "linear_interp", value_parser = parse::<Method>)]
        method: Method,
        /// Give each member's instances a total weight of one.
        #[arg(long)]
        member_weighted: bool,
        #[arg(long, default_value_t = 0)]
        objective: usize,
    },
    /// Transform the scores of a CSV with a saved calibrator.
    Apply {
        input: PathBuf,
        #[arg(long)]
        calibrator: PathBuf,
    },
    /// Bootstrap comparison of calibrators against the raw scores.
    Evaluate {
        input: PathBuf,
        /// Comma-separated: none, binning, linear_interp, platt, isotonic.
        #[arg(long, value_delimiter = ',', default_value = "none,linear_interp", value_parser = parse::<MethodSpec>)]
        methods: Vec<MethodSpec>,
        #[arg(long, default_value_t = 200)]
        bootstrap: usize,
    },
    /// Solve for group thresholds that equalise marginal outcomes.
    Marginal {
        input: PathBuf,
        #[arg(long)]
        threshold: f64,
        #[arg(long)]
        g1: Option<String>,
        #[arg(long)]
        g2: Option<String>,
        /// Extrapolation window below the threshold, as a share of the score range above it.
        #[arg(long)]
        window: Option<f64>,
        #[arg(long, default_value_t = 0)]
        objective: usize,
    },
    /// Generate a synthetic clustered dataset and its ground truth.
    Simulate {
        #[arg(long, value_enum, default_value_t = Preset::TwoGroups)]
        preset: Preset,
        /// Members per group.
        #[arg(long, default_value_t = 1000)]
        members: usize,
        /// Random-effect standard deviation on the logit scale.
        #[arg(long, default_value_t = 0.0)]
        tau: f64,
        /// Additive miscalibration of the second group.
        #[arg(long, default_value_t = 0.0)]
        shift: f64,
    },
    /// Fit a logistic baseline scorer on a feature table and score another.
    Score {
        train: PathBuf,
        test: PathBuf,
        #[arg(long)]
        target: String,
        #[arg(long)]
        group: String,
        #[arg(long)]
        id: Option<String>,
        /// Columns to one-hot encode even if numeric.
        #[arg(long, value_delimiter = ',')]
        categorical: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        exclude: Vec<String>,
        /// Target value treated as positive when the target is not 0/1.
        #[arg(long)]
        positive: Option<String>,
        #[arg(long, default_value_t = DEFAULT_LAMBDA)]
        lambda: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    TwoGroups,
    Coupling,
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Io { source, .. }) if source.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_data_error() { 2 } else { 3 })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Test {
            input,
            g1,
            g2,
            threshold,
            correction,
            objective,
        } => {
            let data = load(g, input)?;
            let (g1, g2) = two_groups(&data, g1, g2)?;
            let opts = TestOptions {
                alpha: g.alpha,
                curve: curve_options(g),
                correction: *correction,
                ..TestOptions::default()
            };
            let report = match threshold {
                Some(t) => marginal_outcome_test(&data, &g1, &g2, *t, g.bandwidth, &opts, *objective)?,
                None => {
                    let grid = build_score_grid(&data, &default_percentiles(), *objective)?;
                    parity_test(&data, &g1, &g2, &grid, &opts, *objective)?
                }
            };
            write_text(g, &report.to_json()?)
        }
        Command::Calibrate {
            input,
            method,
            member_weighted,
            objective,
        } => {
            let data = load(g, input)?;
            let params = FitParams {
                bins: g.bins,
                bandwidth: g.bandwidth,
                kernel: g.kernel,
                weighting: if *member_weighted { Weighting::Member } else { Weighting::Instance },
                ..FitParams::default()
            };
            let cal = fit_per_group(&data, *method, &params, *objective)?;
            for w in &cal.warnings {
                eprintln!("warning: {w}");
            }
            write_text(g, &cal.to_json()?)
        }
        Command::Apply { input, calibrator } => {
            let data = load(g, input)?;
            let cal = Calibrator::load(calibrator)?;
            write_dataset(g, &cal.transform_dataset(&data)?)
        }
        Command::Evaluate {
            input,
            methods,
            bootstrap,
        } => {
            let data = load(g, input)?;
            let cfg = ExperimentConfig {
                inputs: vec![input.clone()],
                methods: methods.clone(),
                bootstrap: *bootstrap,
                alpha: g.alpha,
                mode: g.mode,
                seed: g.seed,
                ece_bins: g.bins,
                fit: FitParams {
                    bins: g.bins,
                    bandwidth: g.bandwidth,
                    kernel: g.kernel,
                    ..FitParams::default()
                },
                output: g.output.clone(),
                ..ExperimentConfig::default()
            };
            let result = run_experiment(&data, &cfg)?;
            let dir = g.output.clone().unwrap_or_else(|| PathBuf::from("rateparity-report"));
            let files = emit_report(&result, &dir)?;
            for row in &result.table.rows {
                for m in &row.metrics {
                    println!(
                        "{:<14} {:<13} {:.5} [{:.5}, {:.5}]{}",
                        row.method.name(),
                        m.metric.name(),
                        m.mean,
                        m.ci.0,
                        m.ci.1,
                        if m.improved { " *" } else { "" }
                    );
                }
            }
            eprintln!("wrote {}", files.report.display());
            Ok(())
        }
        Command::Marginal {
            input,
            threshold,
            g1,
            g2,
            window,
            objective,
        } => {
            let data = load(g, input)?;
            let (g1, g2) = two_groups(&data, g1, g2)?;
            let opts = PredictorOptions {
                kernel: g.kernel,
                mode: g.mode,
                bandwidth: g.bandwidth,
                window: *window,
            };
            let report = mitigate(&data, &g1, &g2, *threshold, &opts, *objective)?;
            write_text(g, &serde_json::to_string_pretty(&report)?)
        }
        Command::Simulate {
            preset,
            members,
            tau,
            shift,
        } => {
            let mut cfg = match preset {
                Preset::TwoGroups => SynthConfig::two_groups(*members, g.seed),
                Preset::Coupling => SynthConfig::coupling(*members, g.seed),
            };
            cfg.tau = *tau;
            if *shift != 0.0 {
                cfg.groups[1].calibration = CalibrationFn::Shift { delta: *shift };
            }
            let (data, truth) = generate(&cfg)?;
            let grid: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
            let sidecar = serde_json::to_string_pretty(&truth.sidecar(&grid)?)?;
            let path = g
                .output
                .clone()
                .ok_or_else(|| Error::InvalidArgument("simulate needs --output".into()))?;
            save_csv(&data, &path)?;
            let side = path.with_extension("truth.json");
            std::fs::write(&side, sidecar).map_err(|e| io(&side, e))?;
            eprintln!("wrote {} and {}", path.display(), side.display());
            Ok(())
        }
        Command::Score {
            train,
            test,
            target,
            group,
            id,
            categorical,
            exclude,
            positive,
            lambda,
        } => {
            let spec = TableSpec {
                target: target.clone(),
                group: group.clone(),
                id: id.clone(),
                categorical: categorical.clone(),
                exclude: exclude.clone(),
                positive: positive.clone(),
            };
            let train = read_table(train, &spec)?;
            let test = read_table(test, &spec)?;
            let scorer = fit_baseline_scorer(&train, *lambda)?;
            let scored = test.to_scored_dataset(&scorer.score(&test)?)?;
            write_dataset(g, &scored)
        }
    }
}

fn curve_options(g: &Global) -> CurveOptions {
    CurveOptions {
        kernel: g.kernel,
        mode: g.mode,
        bandwidth: g.bandwidth,
        ..CurveOptions::default()
    }
}

fn load(g: &Global, path: &Path) -> Result<ClusteredDataset> {
    let file = File::open(path).map_err(|e| io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader.headers()?.clone();
    let mut schema = Schema::detect(&headers.iter().collect::<Vec<_>>());
    if let Some(mapping) = &g.schema {
        schema = schema.remap(mapping)?;
    }
    load_csv(path, &schema, !g.unbounded)
}

fn two_groups(data: &ClusteredDataset, g1: &Option<String>, g2: &Option<String>) -> Result<(String, String)> {
    let levels: Vec<String> = data.group_levels().iter().map(|l| l.to_string()).collect();
    match (g1, g2) {
        (Some(a), Some(b)) => Ok((a.clone(), b.clone())),
        (None, None) if levels.len() == 2 => Ok((levels[0].clone(), levels[1].clone())),
        _ => Err(Error::InvalidArgument(format!(
            "name both groups with --g1/--g2 (found {})",
            levels.join(", ")
        ))),
    }
}

fn write_text(g: &Global, text: &str) -> Result<()> {
    match &g.output {
        Some(p) => std::fs::write(p, text).map_err(|e| io(p, e)),
        None => stdout(format!("{text}\n").as_bytes()),
    }
}

fn write_dataset(g: &Global, data: &ClusteredDataset) -> Result<()> {
    match &g.output {
        Some(p) => save_csv(data, p),
        None => {
            let mut buf = Vec::new();
            rateparity::data::write_csv(data, &mut buf)?;
            stdout(&buf)
        }
    }
}

fn stdout(bytes: &[u8]) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(bytes).and_then(|()| out.flush()).map_err(|e| io("<stdout>", e))
}

fn io(path: impl AsRef<Path>, e: std::io::Error) -> Error {
    Error::Io {
        path: path.as_ref().to_path_buf(),
        source: e,
    }
}
