use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ctxgat_core::config::CONFIG_ENV;
use ctxgat_core::datastore::{load_label_csv, load_series_csv, split_time_ordered, write_labels_csv, write_series_csv};
use ctxgat_core::evaluation::{evaluate, summarize, write_summary_csv};
use ctxgat_core::scoring::{read_flags_csv, write_flags_csv, write_scores_csv, Provenance};
use ctxgat_core::synth::generate_synthetic;
use ctxgat_core::training::{load_checkpoint, save_checkpoint};
use ctxgat_core::{pipeline, AggregationMode, EvalReport, MetricKind, RunConfig};

#[derive(Parser)]
#[command(name = "ctxgat", version, about = "KPI anomaly detection: synth, train, calibrate, score, eval, report")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration (TOML). Defaults apply when absent.
    #[arg(long, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Overrides the configuration's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labelled synthetic dataset and its train/val/test split.
    Synth {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write a checkpoint.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        /// Validation series; otherwise the tail of --data is held out.
        #[arg(long)]
        val_data: Option<PathBuf>,
        #[arg(long)]
        out_ckpt: PathBuf,
    },
    /// Set per-KPI thresholds from validation scores (no labels are read).
    Calibrate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        val_data: PathBuf,
        /// Threshold multiplier; defaults to the checkpoint's configuration.
        #[arg(long)]
        c: Option<f64>,
        /// Also write the thresholds as JSON.
        #[arg(long)]
        out_thresholds: Option<PathBuf>,
    },
    /// Score a series and flag anomalies.
    Score {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out_scores: PathBuf,
        #[arg(long)]
        out_flags: PathBuf,
    },
    /// Compare flags against ground-truth labels.
    Eval {
        #[arg(long)]
        flags: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::All)]
        mode: ModeArg,
        #[arg(long, value_enum, default_value_t = MetricArg::All)]
        metric: MetricArg,
        /// JSON report; a `.csv` extension writes the long CSV form instead.
        #[arg(long)]
        out_report: PathBuf,
        /// Detector name in the report.
        #[arg(long)]
        model_name: Option<String>,
    },
    /// Merge evaluation reports into one Macro/Micro/Union table.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
        format: FormatArg,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Macro,
    Micro,
    Union,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Pointwise,
    Overlap,
    Affiliation,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl ModeArg {
    fn modes(self) -> Vec<AggregationMode> {
        match self {
            ModeArg::Macro => vec![AggregationMode::Macro],
            ModeArg::Micro => vec![AggregationMode::Micro],
            ModeArg::Union => vec![AggregationMode::Union],
            ModeArg::All => AggregationMode::ALL.to_vec(),
        }
    }
}

impl MetricArg {
    fn kinds(self) -> Vec<MetricKind> {
        match self {
            MetricArg::Pointwise => vec![MetricKind::Pointwise],
            MetricArg::Overlap => vec![MetricKind::Overlap],
            MetricArg::Affiliation => vec![MetricKind::Affiliation],
            MetricArg::All => MetricKind::ALL.to_vec(),
        }
    }
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<ctxgat_core::Error> for Failure {
    fn from(e: ctxgat_core::Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> CliResult {
    match command {
        Command::Synth { cfg, out } => synth(&load_config(&cfg)?, &out),
        Command::Train {
            cfg,
            data,
            val_data,
            out_ckpt,
        } => train(&load_config(&cfg)?, &data, val_data.as_deref(), &out_ckpt),
        Command::Calibrate {
            ckpt,
            val_data,
            c,
            out_thresholds,
        } => calibrate(&ckpt, &val_data, c, out_thresholds.as_deref()),
        Command::Score {
            ckpt,
            data,
            out_scores,
            out_flags,
        } => score(&ckpt, &data, &out_scores, &out_flags),
        Command::Eval {
            flags,
            labels,
            mode,
            metric,
            out_report,
            model_name,
        } => eval(&flags, &labels, &mode.modes(), &metric.kinds(), &out_report, model_name),
        Command::Report { inputs, format, out } => report(&inputs, format, out.as_deref()),
    }
}

fn load_config(args: &ConfigArgs) -> CliResult<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

/// Configuration a checkpoint was trained with; defaults for checkpoints
/// built without one.
fn checkpoint_config(text: &str) -> CliResult<RunConfig> {
    if text.is_empty() {
        Ok(RunConfig::default())
    } else {
        Ok(RunConfig::from_toml(text)?)
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| io_failure(path, e))
}

fn write_text(path: &Path, text: &str) -> CliResult {
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(|e| io_failure(path, e))
}

fn synth(run: &RunConfig, out: &Path) -> CliResult {
    let output = generate_synthetic(&run.synth_config())?;
    fs::create_dir_all(out).map_err(|e| io_failure(out, e))?;
    let frame = &output.frame;
    write_series_csv(frame, &out.join("series.csv"))?;
    write_labels_csv(frame, &out.join("labels.csv"))?;
    let min_len = run.model.window + run.model.horizon;
    let parts = split_time_ordered(frame, run.data.split, min_len)?;
    for (name, part) in ["train", "val", "test"].iter().zip(&parts) {
        write_series_csv(part, &out.join(format!("{name}.csv")))?;
        write_labels_csv(part, &out.join(format!("{name}_labels.csv")))?;
    }
    let manifest = serde_json::json!({
        "config_hash": run.hash(),
        "seed": run.seed,
        "run_config": run.to_toml(),
        "n_timestamps": frame.len(),
        "kpis": frame.kpi_names(),
        "injections": output.injections,
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_text(&out.join("manifest.json"), &text)?;
    let positives = frame.labels().map_or(0, |l| l.iter().filter(|&&v| v == 1).count());
    log::info!(
        "wrote {} timestamps x {} KPIs to {} ({:.3}% anomalous)",
        frame.len(),
        frame.n_kpis(),
        out.display(),
        100.0 * positives as f64 / (frame.len() * frame.n_kpis()) as f64
    );
    Ok(())
}

fn train(run: &RunConfig, data: &Path, val_data: Option<&Path>, out_ckpt: &Path) -> CliResult {
    let opts = run.load_options();
    let train_frame = load_series_csv(data, None, &opts)?;
    let val_frame = val_data.map(|p| load_series_csv(p, None, &opts)).transpose()?;
    let ckpt = pipeline::fit(run, &train_frame, val_frame.as_ref())?;
    save_checkpoint(&ckpt, out_ckpt)?;
    log::info!(
        "checkpoint {} (best epoch {}, crc32 {:08x})",
        out_ckpt.display(),
        ckpt.history.best_epoch,
        ckpt.payload_checksum()
    );
    Ok(())
}

fn calibrate(ckpt_path: &Path, val_data: &Path, c: Option<f64>, out_thresholds: Option<&Path>) -> CliResult {
    let mut ckpt = load_checkpoint(ckpt_path)?;
    let mut run = checkpoint_config(&ckpt.run_config)?;
    if let Some(c) = c {
        // keep hash and embedded config in step with the multiplier in use
        run.scoring.c = c;
        run.validate()?;
        ckpt.config_hash = run.hash();
        ckpt.run_config = run.to_toml();
    }
    let val = load_series_csv(val_data, None, &run.load_options())?;
    let thresholds = pipeline::calibrate(&mut ckpt, &val, run.scoring.gamma, run.scoring.c)?;
    save_checkpoint(&ckpt, ckpt_path)?;
    if let Some(path) = out_thresholds {
        write_text(path, &thresholds.to_json()?)?;
    }
    log::info!("calibrated {} KPIs with c = {}", thresholds.tau.len(), thresholds.c);
    Ok(())
}

fn score(ckpt_path: &Path, data: &Path, out_scores: &Path, out_flags: &Path) -> CliResult {
    let ckpt = load_checkpoint(ckpt_path)?;
    let run = checkpoint_config(&ckpt.run_config)?;
    let frame = load_series_csv(data, None, &run.load_options())?;
    let (scores, flags) = pipeline::score(&ckpt, &frame, run.scoring.gamma)?;
    let prov = pipeline::provenance(&ckpt);
    let mut w = create(out_scores)?;
    write_scores_csv(&scores, Some(&prov), &mut w)?;
    w.flush().map_err(|e| io_failure(out_scores, e))?;
    let mut w = create(out_flags)?;
    write_flags_csv(&scores, flags.view(), Some(&prov), &mut w)?;
    w.flush().map_err(|e| io_failure(out_flags, e))?;
    log::info!(
        "scored {} of {} timestamps, {} flagged cells",
        scores.covered_count(),
        scores.len(),
        flags.iter().filter(|&&v| v == 1).count()
    );
    Ok(())
}

fn eval(
    flags_path: &Path,
    labels_path: &Path,
    modes: &[AggregationMode],
    kinds: &[MetricKind],
    out_report: &Path,
    model_name: Option<String>,
) -> CliResult {
    let file = File::open(flags_path).map_err(|e| io_failure(flags_path, e))?;
    let flags = read_flags_csv(file)?;
    let labels = load_label_csv(labels_path)?;
    let (pred, gt) = pipeline::align_for_eval(&flags, &labels)?;
    let prov = flags.provenance.clone().unwrap_or_default();
    let name = match model_name {
        Some(n) => n,
        None => checkpoint_config(&prov.run_config)
            .map(|r| r.eval.model_name)
            .unwrap_or_else(|_| "ctxgat".into()),
    };
    let mut report = evaluate(&name, pred.view(), gt.view(), &labels.kpis, kinds, modes)?;
    let Provenance {
        config_hash,
        seed,
        run_config,
    } = prov;
    report.config_hash = config_hash;
    report.seed = seed;
    report.run_config = run_config;
    if out_report.extension().is_some_and(|e| e == "csv") {
        let mut w = create(out_report)?;
        report.write_csv(&mut w)?;
        w.flush().map_err(|e| io_failure(out_report, e))?;
    } else {
        write_text(out_report, &report.to_json()?)?;
    }
    for m in &report.metrics {
        log::info!(
            "{:<11} {:<5} P={:.3} R={:.3} F1={:.3} gt={} pred={}",
            m.kind,
            m.mode,
            m.scores.precision,
            m.scores.recall,
            m.scores.f1,
            m.gt_count,
            m.pred_count
        );
    }
    Ok(())
}

fn report(inputs: &[PathBuf], format: FormatArg, out: Option<&Path>) -> CliResult {
    let mut reports = Vec::with_capacity(inputs.len());
    for path in inputs {
        let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
        reports.push(EvalReport::from_json(&text).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?);
    }
    let rows = summarize(&reports);
    let mut buf = Vec::new();
    match format {
        FormatArg::Csv => {
            let hashes: Vec<String> = rows
                .iter()
                .map(|row| {
                    reports
                        .iter()
                        .find(|r| r.model == row.model)
                        .map(|r| r.config_hash.clone())
                        .unwrap_or_default()
                })
                .collect();
            write_summary_csv(&rows, &hashes, &mut buf)?;
        }
        FormatArg::Json => {
            serde_json::to_writer_pretty(&mut buf, &rows).expect("summary serializes");
            buf.push(b'\n');
        }
    }
    match out {
        Some(path) => write_text(path, &String::from_utf8(buf).expect("utf-8")),
        None => io::stdout().write_all(&buf).map_err(|e| Failure::Runtime(e.to_string())),
    }
}
