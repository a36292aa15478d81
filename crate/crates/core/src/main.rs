use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use bdtsim::config::Config;
use bdtsim::dataset::add_input_noise;
use bdtsim::experiments::report::{cost_markdown, sweep_markdown};
use bdtsim::experiments::sweep::{emit_report, load_report, ReportFormat};
use bdtsim::experiments::{estimate_cost, run_sweep, CostSummary};
use bdtsim::grng::{quality_report, qq_points, GrngPipeline};
use bdtsim::inference::{pipelines_for, predict_batch, InferenceOptions, Predictor};
use bdtsim::mapping::{map_feature_wise, map_node_wise, program, AcamArray, Strategy};
use bdtsim::seed::{self, Stream};
use bdtsim::sim::{calibrate_iv, parse_iv_csv};
use bdtsim::training::train_with;
use bdtsim::tree::{TreeKind, TreeModel};
use bdtsim::{Error, Result};

/// Bayesian decision tree training and analog CAM inference simulator.
#[derive(Parser)]
#[command(name = "bdtsim", version)]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a DT or BDT on the configured dataset and write its JSON.
    Train {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        kind: Option<TreeKind>,
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Map a trained tree onto an ACAM array (programmed if the config sets
    /// bits or write noise).
    Map {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        strategy: Option<Strategy>,
    },
    /// Run sampling inference over the test split; writes JSON lines.
    Infer {
        #[arg(long)]
        array: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n_iter: Option<usize>,
        /// Record the matched row of every iteration.
        #[arg(long)]
        trace: bool,
    },
    /// Accuracy sweep along the configured axis (CSV or JSON by extension).
    Sweep {
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-decision latency and energy of an array, with baseline ratios.
    Cost {
        #[arg(long)]
        array: PathBuf,
        #[arg(long)]
        kind: TreeKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n_iter: Option<usize>,
    },
    /// Sample one GRNG pipeline and test the output for Gaussianity.
    GrngTest {
        #[arg(long, default_value_t = 0.1)]
        sigma: f64,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
        #[arg(long)]
        out: PathBuf,
        /// Optional (theoretical, sample) quantile CSV.
        #[arg(long)]
        qq: Option<PathBuf>,
    },
    /// Markdown summary of sweep and/or cost JSON results.
    Report {
        #[arg(long)]
        sweep: Vec<PathBuf>,
        #[arg(long)]
        cost: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the cell I-V model to a (voltage, current) CSV; writes an
    /// `[iv_model]` TOML section.
    CalibrateIv {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Serialize)]
struct SampleLine<'a> {
    sample_id: usize,
    label: usize,
    predicted: usize,
    confidence: f64,
    visit_counts: &'a [usize],
    no_match: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    rows: Option<&'a [Option<usize>]>,
}

#[derive(Serialize)]
struct Summary {
    accuracy: f64,
    mean_confidence: f64,
    samples: usize,
    n_iter: usize,
    writes: usize,
}

#[derive(Serialize)]
struct GrngOutput {
    sigma_target: f64,
    seed: u64,
    pipeline: GrngPipeline,
    report: bdtsim::grng::QualityReport,
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    match cli.command {
        Command::Train { out, kind, depth } => {
            let mut tc = cfg.train.train_config();
            tc.kind = kind.unwrap_or(tc.kind);
            tc.max_depth = depth.unwrap_or(tc.max_depth);
            let (train, _) = cfg.load_data()?;
            let tree = train_with(&train, &tc)?;
            write_json(&out, &tree)?;
            println!(
                "{} depth {}: {} internal nodes, {} leaves",
                tree.kind(),
                tree.depth(),
                tree.internal_nodes().len(),
                tree.n_leaves()
            );
        }
        Command::Map { tree, out, strategy } => {
            let tree: TreeModel = read_json(&tree)?;
            let array = match strategy.unwrap_or(cfg.inference.strategy) {
                Strategy::NodeWise => map_node_wise(&tree)?,
                Strategy::FeatureWise => map_feature_wise(&tree)?,
            };
            let array = if cfg.noise.bits.is_some() || cfg.noise.write_sigma > 0.0 {
                program(&array, &cfg.noise, seed::derive(Stream::WriteNoise, &[cfg.seed]))?
            } else {
                array
            };
            write_json(&out, &array)?;
            println!("{}: {} rows x {} columns", array.strategy(), array.rows(), array.cols());
        }
        Command::Infer { array, out, n_iter, trace } => {
            let array: AcamArray = read_json(&array)?;
            let (_, test) = cfg.load_data()?;
            if test.n_features() != array.n_features() {
                return Err(Error::Consistency(format!(
                    "array expects {} features, dataset has {}",
                    array.n_features(),
                    test.n_features()
                )));
            }
            let test = add_input_noise(&test, cfg.noise.input_sigma, seed::derive(Stream::InputNoise, &[cfg.seed]))?;
            let opts = InferenceOptions {
                n_iter: n_iter.unwrap_or(cfg.inference.n_iter),
                noise: cfg.noise,
                iv: cfg.iv_model,
                trace,
            };
            let pipelines = pipelines_for(&array, &cfg.grng)?;
            let batch = predict_batch(Predictor::Array(&array), &test, &opts, &pipelines, cfg.seed)?;
            let mut body = String::new();
            for (i, r) in batch.results.iter().enumerate() {
                body += &serde_json::to_string(&SampleLine {
                    sample_id: i,
                    label: test.label(i),
                    predicted: r.predicted,
                    confidence: r.confidence,
                    visit_counts: &r.visit_counts,
                    no_match: r.no_match,
                    rows: r.per_iter_rows.as_deref(),
                })?;
                body.push('\n');
            }
            body += &serde_json::to_string(&Summary {
                accuracy: batch.accuracy,
                mean_confidence: batch.mean_confidence,
                samples: test.len(),
                n_iter: opts.n_iter,
                writes: batch.writes,
            })?;
            body.push('\n');
            write(&out, &body)?;
            println!("accuracy {:.4}, mean confidence {:.4}", batch.accuracy, batch.mean_confidence);
        }
        Command::Sweep { out } => {
            let spec = cfg.sweep_spec();
            spec.validate()?;
            let (train, test) = cfg.load_data()?;
            let report = run_sweep(&spec, &train, &test)?;
            emit_report(&report, ReportFormat::from_path(&out), &out)?;
            print!("{}", sweep_markdown(&report));
        }
        Command::Cost { array, kind, out, n_iter } => {
            let array: AcamArray = read_json(&array)?;
            let report = estimate_cost(&array, kind, n_iter.unwrap_or(cfg.cost.n_iter), &cfg.cost_model())?;
            let summary = CostSummary::new(report);
            write_json(&out, &summary)?;
            print!("{}", cost_markdown(&summary));
        }
        Command::GrngTest { sigma, samples, alpha, out, qq } => {
            let pipeline = GrngPipeline::new(&cfg.grng, sigma)?;
            let mut rng = seed::rng(Stream::Grng, &[cfg.seed]);
            let xs: Vec<f64> = (0..samples).map(|_| pipeline.sample_epsilon(&mut rng)).collect();
            let report = quality_report(&xs, alpha)?;
            if let Some(qq) = qq {
                let mut body = String::from("theoretical,sample\n");
                for (t, s) in qq_points(&xs) {
                    body += &format!("{t},{s}\n");
                }
                write(&qq, &body)?;
            }
            println!(
                "mean {:.3e}  std {:.5}  qq {:.5}  ks {:.4} (critical {:.4})  {}",
                report.mean,
                report.std,
                report.qq_correlation,
                report.ks_statistic,
                report.ks_critical,
                if report.pass { "PASS" } else { "FAIL" }
            );
            write_json(&out, &GrngOutput { sigma_target: sigma, seed: cfg.seed, pipeline, report })?;
        }
        Command::Report { sweep, cost, out } => {
            if sweep.is_empty() && cost.is_empty() {
                return Err(Error::Usage("report needs at least one --sweep or --cost file".into()));
            }
            let mut body = String::from("# bdtsim results\n");
            for p in &sweep {
                body += "\n";
                body += &sweep_markdown(&load_report(p)?);
            }
            for p in &cost {
                body += "\n";
                body += &cost_markdown(&read_json::<CostSummary>(p)?);
            }
            write(&out, &body)?;
        }
        Command::CalibrateIv { csv, out } => {
            let text = std::fs::read_to_string(&csv).map_err(|e| Error::io(&csv, e))?;
            let model = calibrate_iv(&parse_iv_csv(&text)?)?;
            let section = toml::to_string(&model).map_err(|e| Error::Config(e.to_string()))?;
            write(&out, &format!("[iv_model]\n{section}"))?;
            print!("[iv_model]\n{section}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_) | Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
