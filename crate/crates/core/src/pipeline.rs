//! Corpus-level drivers: prepare entropy series once per file, build
//! codebooks, extract feature batches, run holdout experiments, and scan
//! files against a trained model. Parallel over files, deterministic
//! regardless of scheduling.

use std::path::PathBuf;

use rayon::prelude::*;

use crate::bow::{self, Codebook, LocalFeature};
use crate::classifier::{self, ForestConfig, TrainedModel, Verdict};
use crate::corpus::LabeledCorpus;
use crate::entropy::{self, EntropyTimeSeries};
use crate::error::{Error, Result};
use crate::eval::{self, EvalReport};
use crate::features::{self, FeatureVector};
use crate::preprocess;
use crate::real::Real;
use crate::Label;

/// A corpus file with its entropy series computed.
#[derive(Debug, Clone)]
pub struct PreparedFile<F> {
    pub path: PathBuf,
    pub file_id: String,
    pub label: Option<Label>,
    pub ets: EntropyTimeSeries<F>,
}

/// A corpus file the pipeline could not analyze, with the reason.
#[derive(Debug, Clone)]
pub struct SkippedFile {
    pub path: PathBuf,
    pub reason: String,
}

/// Canonicalize and compute the entropy series for every corpus entry.
/// Unreadable or too-short files are reported as skipped, not fatal.
pub fn prepare_corpus<F: Real>(corpus: &LabeledCorpus) -> (Vec<PreparedFile<F>>, Vec<SkippedFile>) {
    let results: Vec<std::result::Result<PreparedFile<F>, SkippedFile>> = corpus
        .entries
        .par_iter()
        .map(|entry| {
            let bytes = std::fs::read(&entry.path).map_err(|e| SkippedFile {
                path: entry.path.clone(),
                reason: e.to_string(),
            })?;
            let canonical = preprocess::canonicalize(&bytes);
            let ets = entropy::compute_ets::<F>(&canonical.bytes).map_err(|e| SkippedFile {
                path: entry.path.clone(),
                reason: e.to_string(),
            })?;
            Ok(PreparedFile {
                path: entry.path.clone(),
                file_id: entry.file_id.clone(),
                label: entry.label,
                ets,
            })
        })
        .collect();

    let mut prepared = Vec::new();
    let mut skipped = Vec::new();
    for r in results {
        match r {
            Ok(p) => prepared.push(p),
            Err(s) => skipped.push(s),
        }
    }
    (prepared, skipped)
}

/// All local features of the corpus, in file order.
pub fn corpus_local_features<F: Real>(
    files: &[PreparedFile<F>],
    segment_length: usize,
) -> Vec<LocalFeature<F>> {
    files
        .par_iter()
        .map(|f| bow::local_features(&f.ets, segment_length, &f.file_id))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Build a codebook over the whole corpus's local features.
pub fn build_corpus_codebook<F: Real>(
    files: &[PreparedFile<F>],
    segment_length: usize,
    codebook_size: usize,
    sample_fraction: f64,
    seed: u64,
) -> Result<Codebook<F>> {
    let locals = corpus_local_features(files, segment_length);
    bow::build_codebook(&locals, segment_length, codebook_size, sample_fraction, seed)
}

/// Feature vectors for every prepared file, labels attached, ordered by
/// file id so output is stable under parallel extraction.
pub fn corpus_features<F: Real>(
    files: &[PreparedFile<F>],
    codebook: &Codebook<F>,
) -> Result<Vec<FeatureVector<F>>> {
    let mut vectors = files
        .par_iter()
        .map(|f| {
            let global = features::global_features(&f.ets)?;
            let spectrum = crate::wavelet::energy_spectrum(&f.ets)?;
            let histogram = bow::encode(&f.ets, codebook);
            Ok(features::assemble(
                f.file_id.clone(),
                f.label,
                &global,
                &spectrum,
                &histogram,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    vectors.sort_by(|a, b| a.file_id.cmp(&b.file_id));
    Ok(vectors)
}

/// Everything a holdout experiment needs besides the corpus and a seed.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub segment_length: usize,
    pub codebook_size: usize,
    pub sample_fraction: f64,
    pub forest: ForestConfig,
    pub repeats: usize,
    pub train_fraction: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            segment_length: bow::DEFAULT_SEGMENT_LENGTH,
            codebook_size: bow::DEFAULT_CODEBOOK_SIZE,
            sample_fraction: bow::DEFAULT_SAMPLE_FRACTION,
            forest: ForestConfig::default(),
            repeats: 3,
            train_fraction: 0.7,
        }
    }
}

/// Codebook + features + repeated holdout in one call. Returns the report and
/// the pooled test scores of all repeats.
pub fn run_experiment<F: Real>(
    files: &[PreparedFile<F>],
    config: &ExperimentConfig,
    seed: u64,
) -> Result<(EvalReport, Vec<(F, Label)>)> {
    let codebook = build_corpus_codebook(
        files,
        config.segment_length,
        config.codebook_size,
        config.sample_fraction,
        seed,
    )?;
    let vectors = corpus_features(files, &codebook)?;
    eval::repeated_holdout_with_scores(
        &vectors,
        &codebook,
        &config.forest,
        config.repeats,
        config.train_fraction,
        seed,
    )
}

/// Feature vector or failure for one path, in input order.
#[derive(Debug, Clone)]
pub struct ExtractOutcome<F> {
    pub path: PathBuf,
    pub result: std::result::Result<FeatureVector<F>, ScanFailure>,
}

/// Extract feature vectors for a batch of files. Failures are per-file.
pub fn extract_paths<F: Real>(paths: &[PathBuf], codebook: &Codebook<F>) -> Vec<ExtractOutcome<F>> {
    paths
        .par_iter()
        .map(|path| {
            let result = std::fs::read(path)
                .map_err(|e| ScanFailure {
                    reason: e.to_string(),
                    io: true,
                })
                .and_then(|bytes| {
                    features::extract(&bytes, codebook).map_err(|e| ScanFailure {
                        reason: e.to_string(),
                        io: matches!(e, Error::Io(_)),
                    })
                });
            ExtractOutcome {
                path: path.clone(),
                result,
            }
        })
        .collect()
}

/// Why a scan produced no verdict for a file.
#[derive(Debug, Clone)]
pub struct ScanFailure {
    pub reason: String,
    /// True when the failure was an I/O error (drives the process exit code).
    pub io: bool,
}

/// Verdict or failure for one scanned path, in input order.
#[derive(Debug, Clone)]
pub struct ScanOutcome<F> {
    pub path: PathBuf,
    pub result: std::result::Result<(String, Verdict<F>), ScanFailure>,
}

/// Scan files against a trained model. Failures are per-file; output order
/// matches input order.
pub fn scan_files<F: Real>(
    paths: &[PathBuf],
    model: &TrainedModel<F>,
    threshold: F,
) -> Vec<ScanOutcome<F>> {
    paths
        .par_iter()
        .map(|path| {
            let result = scan_one(path, model, threshold);
            ScanOutcome {
                path: path.clone(),
                result,
            }
        })
        .collect()
}

fn scan_one<F: Real>(
    path: &PathBuf,
    model: &TrainedModel<F>,
    threshold: F,
) -> std::result::Result<(String, Verdict<F>), ScanFailure> {
    let bytes = std::fs::read(path).map_err(|e| ScanFailure {
        reason: e.to_string(),
        io: true,
    })?;
    let vector = features::extract(&bytes, &model.codebook).map_err(|e| ScanFailure {
        reason: e.to_string(),
        io: matches!(e, Error::Io(_)),
    })?;
    let verdict =
        classifier::predict_with_threshold(model, &vector, threshold).map_err(|e| ScanFailure {
            reason: e.to_string(),
            io: false,
        })?;
    Ok((vector.file_id, verdict))
}
