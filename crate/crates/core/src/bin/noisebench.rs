use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use noisebench::adapters::{
    ingest_predictions, reference_predict, reference_train, AdapterError, PredictionRecord, PredictionSet,
    ReferenceModel, RequestEntry, TrainParams,
};
use noisebench::analysis::{analyze, AnalysisThresholds, DEFAULT_DROP_POINTS, DEFAULT_FUNCTIONAL_PERCENT};
use noisebench::image::{load_image, ImageError, CANONICAL_SIZE};
use noisebench::manifest::{build_manifest_with, split_report, ClassMap, Manifest, ManifestError, Split};
use noisebench::metrics::{evaluate, DEFAULT_THRESHOLD};
use noisebench::noise::NoiseFamily;
use noisebench::report::{emit_report, parse_curve_csv, ReportError};
use noisebench::sweep::{
    corrupt_manifest, default_schedule, run_sweep, spec_for, GaussianLevel, SweepConfig, SweepError, SweepResult,
    RESULT_FILE,
};
use noisebench::synthetic::{write_blob_dataset, BlobStyle};

#[derive(Parser)]
#[command(name = "noisebench", version, about = "X-ray noise robustness benchmark for binary classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dataset manifest operations.
    Manifest {
        #[command(subcommand)]
        action: ManifestCommand,
    },
    /// Corrupt one split of a manifest at a single noise level.
    Corrupt {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        family: NoiseFamily,
        #[arg(long)]
        level: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Stream level index; defaults to the level's position in the default schedule.
        #[arg(long)]
        level_index: Option<usize>,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, default_value_t = CANONICAL_SIZE)]
        size: usize,
        /// Interpret Gaussian levels as standard deviations instead of variances.
        #[arg(long)]
        std_dev: bool,
        #[arg(short = 'o', long)]
        out: PathBuf,
    },
    /// Run a full noise sweep from a JSON config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write metrics CSVs, summary CSV and charts from a sweep result.
    Report {
        #[arg(long)]
        result: PathBuf,
        #[arg(short = 'o', long)]
        out: PathBuf,
    },
    /// Failure analysis on an externally produced accuracy curve.
    Analyze {
        #[arg(long)]
        curve: PathBuf,
        /// Family assumed when the file has no `family` column.
        #[arg(long, default_value = "gaussian")]
        family: NoiseFamily,
        #[arg(long, default_value_t = DEFAULT_DROP_POINTS)]
        drop: f64,
        #[arg(long, default_value_t = DEFAULT_FUNCTIONAL_PERCENT)]
        functional: f64,
    },
    /// Score a prediction CSV against a manifest's test split.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
    },
    /// Train the built-in logistic-regression classifier on the train split.
    ReferenceTrain {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = TrainParams::default().epochs)]
        epochs: usize,
        #[arg(long, default_value_t = TrainParams::default().learning_rate)]
        lr: f64,
        #[arg(long, default_value_t = TrainParams::default().batch_size)]
        batch_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = CANONICAL_SIZE)]
        size: usize,
        #[arg(short = 'o', long)]
        out: PathBuf,
    },
    /// External-classifier protocol endpoint backed by a reference model.
    ReferencePredict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic blob dataset in split/class/image layout.
    Synth {
        #[arg(long, default_value_t = 160)]
        train: usize,
        #[arg(long, default_value_t = 20)]
        valid: usize,
        #[arg(long, default_value_t = 40)]
        test: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short = 'o', long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum ManifestCommand {
    /// Inventory <root>/{train,valid,test}/<class>/<image>.
    Build {
        root: PathBuf,
        #[arg(short = 'o', long)]
        out: PathBuf,
        /// JSON object mapping class directory names to 0/1.
        #[arg(long)]
        class_map: Option<PathBuf>,
    },
    /// Print split fractions and class balance.
    Report { manifest: PathBuf },
}

/// Exit codes: 1 usage, 2 data, 3 adapter.
enum Failure {
    Usage(String),
    Data(String),
    Adapter(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Adapter(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Adapter(m) => m,
        }
    }
}

impl From<ManifestError> for Failure {
    fn from(e: ManifestError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<ImageError> for Failure {
    fn from(e: ImageError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<ReportError> for Failure {
    fn from(e: ReportError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<AdapterError> for Failure {
    fn from(e: AdapterError) -> Self {
        match e {
            AdapterError::Image(_) | AdapterError::Manifest(_) => Failure::Data(e.to_string()),
            _ => Failure::Adapter(e.to_string()),
        }
    }
}

impl From<SweepError> for Failure {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::Config(_) | SweepError::Pool(_) => Failure::Usage(e.to_string()),
            SweepError::Adapter(a) => a.into(),
            SweepError::PartialLevelFailure { .. } => Failure::Adapter(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn parse_split(s: &str) -> Result<Split, Failure> {
    match s {
        "train" => Ok(Split::Train),
        "valid" => Ok(Split::Valid),
        "test" => Ok(Split::Test),
        other => Err(Failure::Usage(format!("unknown split '{other}'"))),
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Manifest { action: ManifestCommand::Build { root, out, class_map } } => {
            let classes = match class_map {
                Some(p) => ClassMap::from_json_file(&p)?,
                None => ClassMap::default(),
            };
            let m = build_manifest_with(&root, &classes)?;
            m.write(&out)?;
            let report = split_report(&m)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            println!("{} images written to {}", m.len(), out.display());
            Ok(())
        }
        Command::Manifest { action: ManifestCommand::Report { manifest } } => {
            let report = split_report(&Manifest::read(&manifest)?)?;
            println!("{}", to_json(&report));
            Ok(())
        }
        Command::Corrupt { manifest, family, level, seed, level_index, split, size, std_dev, out } => {
            let split = parse_split(&split)?;
            let subset = Manifest::read(&manifest)?.subset(split);
            if subset.is_empty() {
                return Err(Failure::Data(format!("manifest has no {split} images")));
            }
            let gaussian = if std_dev { GaussianLevel::StdDev } else { GaussianLevel::Variance };
            let spec = spec_for(family, level, gaussian).map_err(|e| Failure::Usage(e.to_string()))?;
            let level_index = level_index
                .or_else(|| default_schedule(family).iter().position(|&l| l == level))
                .unwrap_or(0);
            corrupt_manifest(&subset, &spec, seed, level_index, size, &out)?;
            println!("{} images corrupted into {}", subset.len(), out.display());
            Ok(())
        }
        Command::Sweep { config } => {
            let mut cfg = SweepConfig::load(&config)?;
            cfg.apply_env()?;
            let result = run_sweep(&cfg)?;
            let path = cfg.output_dir.join(RESULT_FILE);
            std::fs::write(&path, result.to_json()).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
            emit_report(&result, &cfg.output_dir)?;
            for f in &result.families {
                println!("{}: {}", f.family, f.verdict.pattern);
            }
            println!("results in {}", cfg.output_dir.display());
            if let Some(f) = result.failures.first() {
                return Err(Failure::Adapter(format!("{} aborted at level {}: {}", f.family, f.level, f.reason)));
            }
            Ok(())
        }
        Command::Report { result, out } => {
            let result = SweepResult::load(&result)?;
            for p in emit_report(&result, &out)? {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Analyze { curve, family, drop, functional } => {
            let text = std::fs::read_to_string(&curve).map_err(|e| Failure::Data(format!("{}: {e}", curve.display())))?;
            let thresholds = AnalysisThresholds { drop_points: drop, functional_percent: functional };
            let mut verdicts = Vec::new();
            for file in parse_curve_csv(&text, family)? {
                let mut v = analyze(&file.curve, &thresholds).map_err(|e| Failure::Data(e.to_string()))?;
                if let Some(levels) = file.collapse_levels {
                    v.collapse_levels = levels;
                    v.warnings.clear();
                }
                verdicts.push(serde_json::json!({ "family": file.curve.family(), "verdict": v }));
            }
            println!("{}", to_json(&verdicts));
            Ok(())
        }
        Command::Evaluate { manifest, predictions, threshold } => {
            let test = Manifest::read(&manifest)?.subset(Split::Test);
            let preds = ingest_predictions(&predictions, &test)?;
            let (cm, report) = evaluate(&preds, threshold).map_err(|e| Failure::Data(e.to_string()))?;
            println!("{}", to_json(&serde_json::json!({ "confusion": cm, "metrics": report })));
            Ok(())
        }
        Command::ReferenceTrain { manifest, epochs, lr, batch_size, seed, size, out } => {
            let m = Manifest::read(&manifest)?;
            let params = TrainParams { epochs, learning_rate: lr, batch_size, seed };
            let model = reference_train(&m, &params, Some(size))?;
            model.save(&out)?;
            if let Some(meta) = model.meta() {
                println!("loss {:.4} -> {:.4} over {} images", meta.initial_loss, meta.final_loss, meta.samples);
            }
            Ok(())
        }
        Command::ReferencePredict { model, manifest, images: _, out } => {
            let model = ReferenceModel::load(&model)?;
            predict_request(&model, &manifest, &out)
        }
        Command::Synth { train, valid, test, size, seed, out } => {
            let n = write_blob_dataset(
                &out,
                &[(Split::Train, train), (Split::Valid, valid), (Split::Test, test)],
                size,
                seed,
                &BlobStyle::default(),
            )?;
            println!("{n} images written under {}", out.display());
            Ok(())
        }
    }
}

fn predict_request(model: &ReferenceModel, request: &Path, out: &Path) -> Result<(), Failure> {
    let text = std::fs::read_to_string(request).map_err(|e| Failure::Data(format!("{}: {e}", request.display())))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let entry: RequestEntry =
            serde_json::from_str(line).map_err(|e| Failure::Data(format!("request line {}: {e}", i + 1)))?;
        let img = load_image(Path::new(&entry.path))?;
        records.push(PredictionRecord { image_id: entry.id, label: entry.label, score: reference_predict(model, &img) });
    }
    let set = PredictionSet::new("reference", records)?;
    set.write_csv(out)?;
    Ok(())
}
