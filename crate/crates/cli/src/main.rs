//! `entroscan`: scan documents by the shape of their entropy signal.
//!
//! Exit codes: 0 success, 1 usage or data error, 2 I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use entroscan_core::classifier::{self, ForestConfig};
use entroscan_core::corpus::{self, SyntheticSpec};
use entroscan_core::eval::{self, GridPoint};
use entroscan_core::pipeline::{self, ExperimentConfig};
use entroscan_core::{bow, entropy, features, Codebook, Error, Label, Result, Scalar};

#[derive(Parser)]
#[command(name = "entroscan", version, about = "Entropy-signal document scanner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the entropy time series of one file
    Entropy {
        file: PathBuf,
        /// Emit bare `index,entropy` lines
        #[arg(long)]
        csv: bool,
    },
    /// Extract feature vectors for files or directories
    Extract {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Codebook or model document supplying the codewords
        #[arg(long)]
        codebook: PathBuf,
        /// Output JSONL path (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
        /// `path,label` CSV to attach labels (requires a single directory
        /// argument; paths in the CSV are relative to it)
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Cluster local segment descriptors of a directory into a codebook
    BuildCodebook {
        dir: PathBuf,
        #[arg(long = "segment-len", default_value_t = bow::DEFAULT_SEGMENT_LENGTH)]
        segment_len: usize,
        #[arg(long = "codebook-size", default_value_t = bow::DEFAULT_CODEBOOK_SIZE)]
        codebook_size: usize,
        #[arg(long = "sample-frac", default_value_t = bow::DEFAULT_SAMPLE_FRACTION)]
        sample_frac: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a random forest on extracted features
    Train {
        /// Features JSONL produced by `extract`
        #[arg(long)]
        features: PathBuf,
        /// Codebook the features were extracted with (embedded in the model)
        #[arg(long)]
        codebook: PathBuf,
        #[arg(long, default_value_t = 500)]
        trees: usize,
        #[arg(long = "max-depth", default_value_t = 30)]
        max_depth: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score files against a trained model
    Scan {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = classifier::DEFAULT_THRESHOLD)]
        threshold: f64,
    },
    /// Repeated-holdout evaluation over a labeled directory
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
        /// CSV with a `path,label` header, paths relative to the dataset root
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value_t = 0.7)]
        split: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long = "segment-len", default_value_t = bow::DEFAULT_SEGMENT_LENGTH)]
        segment_len: usize,
        #[arg(long = "codebook-size", default_value_t = bow::DEFAULT_CODEBOOK_SIZE)]
        codebook_size: usize,
        #[arg(long = "sample-frac", default_value_t = bow::DEFAULT_SAMPLE_FRACTION)]
        sample_frac: f64,
        #[arg(long, default_value_t = 500)]
        trees: usize,
        #[arg(long = "max-depth", default_value_t = 30)]
        max_depth: usize,
        /// Use literal stratified k-fold with this many folds instead of
        /// repeated holdout
        #[arg(long)]
        kfold: Option<usize>,
        /// Write a `threshold,fpr,tpr` ROC curve CSV here
        #[arg(long = "roc-out")]
        roc_out: Option<PathBuf>,
    },
    /// Evaluate every configuration of a parameter grid
    Gridsearch {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// JSON grid file; any of segment_len, codebook_size, n_trees,
        /// max_depth may list values
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        seed: u64,
    },
    /// Generate a labeled synthetic corpus
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        benign: usize,
        #[arg(long)]
        malicious: usize,
        #[arg(long)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let _ = err.print();
            return match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Io(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Entropy { file, csv } => cmd_entropy(&file, csv),
        Command::Extract {
            paths,
            codebook,
            out,
            labels,
        } => cmd_extract(&paths, &codebook, out.as_deref(), labels.as_deref()),
        Command::BuildCodebook {
            dir,
            segment_len,
            codebook_size,
            sample_frac,
            seed,
            out,
        } => cmd_build_codebook(&dir, segment_len, codebook_size, sample_frac, seed, &out),
        Command::Train {
            features,
            codebook,
            trees,
            max_depth,
            seed,
            out,
        } => cmd_train(&features, &codebook, trees, max_depth, seed, &out),
        Command::Scan {
            paths,
            model,
            threshold,
        } => cmd_scan(&paths, &model, threshold),
        Command::Evaluate {
            dataset,
            labels,
            repeats,
            split,
            seed,
            segment_len,
            codebook_size,
            sample_frac,
            trees,
            max_depth,
            kfold,
            roc_out,
        } => cmd_evaluate(EvaluateArgs {
            dataset,
            labels,
            repeats,
            split,
            seed,
            segment_len,
            codebook_size,
            sample_frac,
            trees,
            max_depth,
            kfold,
            roc_out,
        }),
        Command::Gridsearch {
            dataset,
            labels,
            grid,
            seed,
        } => cmd_gridsearch(&dataset, &labels, &grid, seed),
        Command::Synth {
            out,
            benign,
            malicious,
            seed,
        } => cmd_synth(&out, benign, malicious, seed),
    }
}

/// Write lines to stdout, treating a closed pipe as normal termination.
fn emit_lines<I: IntoIterator<Item = String>>(lines: I) -> Result<()> {
    use std::io::Write;
    let stdout = std::io::stdout();
    let mut out = std::io::BufWriter::new(stdout.lock());
    let forward = |e: std::io::Error| -> Result<()> {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            Ok(())
        } else {
            Err(e.into())
        }
    };
    for line in lines {
        if let Err(e) = writeln!(out, "{line}") {
            return forward(e);
        }
    }
    if let Err(e) = out.flush() {
        return forward(e);
    }
    Ok(())
}

fn cmd_entropy(file: &Path, csv: bool) -> Result<ExitCode> {
    let bytes = std::fs::read(file)?;
    let ets = entropy::compute_ets::<Scalar>(&bytes)?;
    let header = (!csv).then(|| {
        format!(
            "# {}: {} windows of {} bytes (index,entropy)",
            file.display(),
            ets.len(),
            ets.window_size
        )
    });
    let lines = ets
        .values
        .iter()
        .enumerate()
        .map(|(index, value)| format!("{index},{value:.6}"));
    emit_lines(header.into_iter().chain(lines))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_extract(
    paths: &[PathBuf],
    codebook_path: &Path,
    out: Option<&Path>,
    labels: Option<&Path>,
) -> Result<ExitCode> {
    let codebook = load_codebook_flexible(codebook_path)?;

    // With a label CSV the corpus is ingested (deduplicated, CSV excluded)
    // and each record carries its label; otherwise records stay unlabeled.
    let mut label_of: std::collections::HashMap<String, Label> = std::collections::HashMap::new();
    let files: Vec<PathBuf> = match labels {
        Some(csv) => {
            if paths.len() != 1 || !paths[0].is_dir() {
                return Err(Error::ParseError(
                    "--labels requires a single directory argument".into(),
                ));
            }
            let corpus = corpus::ingest(&paths[0], Some(csv))?;
            for warning in &corpus.warnings {
                eprintln!("warning: {warning}");
            }
            for entry in &corpus.entries {
                if let Some(label) = entry.label {
                    label_of.insert(entry.file_id.clone(), label);
                }
            }
            corpus.entries.iter().map(|e| e.path.clone()).collect()
        }
        None => expand_paths(paths)?,
    };
    let outcomes = pipeline::extract_paths(&files, &codebook);

    let mut records = Vec::new();
    let mut saw_io_failure = false;
    for outcome in outcomes {
        match outcome.result {
            Ok(mut record) => {
                record.label = label_of.get(&record.file_id).copied();
                records.push(record);
            }
            Err(failure) => {
                saw_io_failure |= failure.io;
                eprintln!(
                    "warning: skipping {}: {}",
                    outcome.path.display(),
                    failure.reason
                );
            }
        }
    }
    records.sort_by(|a, b| a.file_id.cmp(&b.file_id));

    match out {
        Some(path) => {
            let file = std::fs::File::create(path)?;
            features::write_jsonl(&records, std::io::BufWriter::new(file))?;
        }
        None => {
            let stdout = std::io::stdout();
            features::write_jsonl(&records, stdout.lock())?;
        }
    }
    Ok(if saw_io_failure {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_build_codebook(
    dir: &Path,
    segment_len: usize,
    codebook_size: usize,
    sample_frac: f64,
    seed: u64,
    out: &Path,
) -> Result<ExitCode> {
    let corpus = corpus::ingest(dir, None)?;
    for warning in &corpus.warnings {
        eprintln!("warning: {warning}");
    }
    let (prepared, skipped) = pipeline::prepare_corpus::<Scalar>(&corpus);
    for skip in &skipped {
        eprintln!("warning: skipping {}: {}", skip.path.display(), skip.reason);
    }
    let codebook =
        pipeline::build_corpus_codebook(&prepared, segment_len, codebook_size, sample_frac, seed)?;
    bow::save_codebook(&codebook, out)?;
    eprintln!(
        "codebook: {} codewords of dimension {} from {} files -> {}",
        codebook.k,
        bow::descriptor_dim(segment_len),
        prepared.len(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_train(
    features_path: &Path,
    codebook_path: &Path,
    trees: usize,
    max_depth: usize,
    seed: u64,
    out: &Path,
) -> Result<ExitCode> {
    let file = std::fs::File::open(features_path)?;
    let records = features::read_jsonl::<Scalar, _>(std::io::BufReader::new(file))?;
    let codebook = load_codebook_flexible(codebook_path)?;
    let config = ForestConfig {
        n_trees: trees,
        max_depth,
        seed,
        ..ForestConfig::default()
    };
    let model = classifier::train(&records, &codebook, &config)?;
    classifier::save(&model, out)?;
    eprintln!(
        "model: {} trees, depth <= {}, {} features -> {}",
        model.trees.len(),
        model.config.max_depth,
        model.feature_dim,
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct ScanLine<'a> {
    file_id: &'a str,
    path: String,
    score: Scalar,
    label: Label,
}

#[derive(Serialize)]
struct ScanErrorLine {
    path: String,
    error: String,
}

fn cmd_scan(paths: &[PathBuf], model_path: &Path, threshold: f64) -> Result<ExitCode> {
    let model = classifier::load::<Scalar>(model_path)?;
    let files = expand_paths(paths)?;
    let outcomes = pipeline::scan_files(&files, &model, threshold);

    let mut saw_io_failure = false;
    let mut lines = Vec::with_capacity(outcomes.len());
    for outcome in &outcomes {
        let line = match &outcome.result {
            Ok((file_id, verdict)) => serde_json::to_string(&ScanLine {
                file_id,
                path: outcome.path.display().to_string(),
                score: verdict.score,
                label: verdict.label,
            }),
            Err(failure) => {
                saw_io_failure |= failure.io;
                serde_json::to_string(&ScanErrorLine {
                    path: outcome.path.display().to_string(),
                    error: failure.reason.clone(),
                })
            }
        };
        lines.push(line.map_err(|e| Error::ParseError(e.to_string()))?);
    }
    emit_lines(lines)?;
    Ok(if saw_io_failure {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

struct EvaluateArgs {
    dataset: PathBuf,
    labels: PathBuf,
    repeats: usize,
    split: f64,
    seed: u64,
    segment_len: usize,
    codebook_size: usize,
    sample_frac: f64,
    trees: usize,
    max_depth: usize,
    kfold: Option<usize>,
    roc_out: Option<PathBuf>,
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<ExitCode> {
    let corpus = corpus::ingest(&args.dataset, Some(&args.labels))?;
    for warning in &corpus.warnings {
        eprintln!("warning: {warning}");
    }
    let (prepared, skipped) = pipeline::prepare_corpus::<Scalar>(&corpus);
    for skip in &skipped {
        eprintln!("warning: skipping {}: {}", skip.path.display(), skip.reason);
    }
    let config = ExperimentConfig {
        segment_length: args.segment_len,
        codebook_size: args.codebook_size,
        sample_fraction: args.sample_frac,
        forest: ForestConfig {
            n_trees: args.trees,
            max_depth: args.max_depth,
            ..ForestConfig::default()
        },
        repeats: args.repeats,
        train_fraction: args.split,
    };

    let report = match args.kfold {
        Some(folds) => {
            let codebook = pipeline::build_corpus_codebook(
                &prepared,
                config.segment_length,
                config.codebook_size,
                config.sample_fraction,
                args.seed,
            )?;
            let vectors = pipeline::corpus_features(&prepared, &codebook)?;
            eval::stratified_k_fold(&vectors, &codebook, &config.forest, folds, args.seed)?
        }
        None => {
            let (report, scores) = pipeline::run_experiment(&prepared, &config, args.seed)?;
            if let Some(roc_path) = &args.roc_out {
                write_roc_csv(&scores, roc_path)?;
            }
            report
        }
    };
    emit_lines([
        serde_json::to_string_pretty(&report).map_err(|e| Error::ParseError(e.to_string()))?
    ])?;
    Ok(ExitCode::SUCCESS)
}

fn write_roc_csv(scores: &[(Scalar, Label)], path: &Path) -> Result<()> {
    let curve = eval::roc_curve(scores)?;
    let mut out = String::from("threshold,fpr,tpr\n");
    for point in curve {
        out.push_str(&format!(
            "{},{},{}\n",
            point.threshold, point.fpr, point.tpr
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct GridFile {
    #[serde(default = "default_segment_lens")]
    segment_len: Vec<usize>,
    #[serde(default = "default_codebook_sizes")]
    codebook_size: Vec<usize>,
    #[serde(default = "default_tree_counts")]
    n_trees: Vec<usize>,
    #[serde(default = "default_depths")]
    max_depth: Vec<usize>,
}

fn default_segment_lens() -> Vec<usize> {
    vec![bow::DEFAULT_SEGMENT_LENGTH]
}
fn default_codebook_sizes() -> Vec<usize> {
    vec![bow::DEFAULT_CODEBOOK_SIZE]
}
fn default_tree_counts() -> Vec<usize> {
    vec![500]
}
fn default_depths() -> Vec<usize> {
    vec![30]
}

fn cmd_gridsearch(dataset: &Path, labels: &Path, grid_path: &Path, seed: u64) -> Result<ExitCode> {
    let text = std::fs::read_to_string(grid_path)?;
    let grid: GridFile = serde_json::from_str(&text)
        .map_err(|e| Error::ParseError(format!("{}: {e}", grid_path.display())))?;

    let mut points = Vec::new();
    for &segment_length in &grid.segment_len {
        for &codebook_size in &grid.codebook_size {
            for &n_trees in &grid.n_trees {
                for &max_depth in &grid.max_depth {
                    points.push(GridPoint {
                        segment_length,
                        codebook_size,
                        n_trees,
                        max_depth,
                    });
                }
            }
        }
    }
    if points.is_empty() {
        return Err(Error::ParseError("empty parameter grid".into()));
    }

    let corpus = corpus::ingest(dataset, Some(labels))?;
    for warning in &corpus.warnings {
        eprintln!("warning: {warning}");
    }
    let (prepared, skipped) = pipeline::prepare_corpus::<Scalar>(&corpus);
    for skip in &skipped {
        eprintln!("warning: skipping {}: {}", skip.path.display(), skip.reason);
    }

    let outcomes = eval::grid_search(&points, seed, |point, point_seed| {
        let config = ExperimentConfig {
            segment_length: point.segment_length,
            codebook_size: point.codebook_size,
            forest: ForestConfig {
                n_trees: point.n_trees,
                max_depth: point.max_depth,
                ..ForestConfig::default()
            },
            ..ExperimentConfig::default()
        };
        let (report, _) = pipeline::run_experiment(&prepared, &config, point_seed)?;
        report.auc.ok_or_else(|| {
            Error::DegenerateLabels("holdout produced no AUC".into())
        })
    });
    emit_lines([
        serde_json::to_string_pretty(&outcomes).map_err(|e| Error::ParseError(e.to_string()))?
    ])?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_synth(out: &Path, benign: usize, malicious: usize, seed: u64) -> Result<ExitCode> {
    let spec = SyntheticSpec::new(benign, malicious, seed);
    let corpus = corpus::generate_synthetic(&spec, out)?;
    emit_lines([format!(
        "wrote {} files ({} benign, {} malicious) and labels.csv to {}",
        corpus.entries.len(),
        benign,
        malicious,
        out.display()
    )])?;
    Ok(ExitCode::SUCCESS)
}

/// Accept `--codebook` arguments that are either a standalone codebook
/// document or a full model document (the embedded codebook is used).
fn load_codebook_flexible(path: &Path) -> Result<Codebook> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::ParseError(format!("{}: {e}", path.display())))?;
    if value.get("trees").is_some() {
        classifier::parse_model::<Scalar>(&text).map(|m| m.codebook)
    } else {
        bow::parse_codebook::<Scalar>(&text)
    }
}

/// Expand mixed file/directory arguments into a flat file list, directories
/// walked recursively in sorted order.
fn expand_paths(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for path in paths {
        if path.is_dir() {
            for entry in walkdir::WalkDir::new(path).sort_by_file_name() {
                let entry = entry.map_err(|e| {
                    Error::Io(std::io::Error::other(format!(
                        "walking {}: {e}",
                        path.display()
                    )))
                })?;
                if entry.file_type().is_file() {
                    files.push(entry.path().to_path_buf());
                }
            }
        } else {
            files.push(path.clone());
        }
    }
    Ok(files)
}
