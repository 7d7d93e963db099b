//! Global statistics and final feature-vector assembly.
//!
//! Each file becomes a fixed-length vector: six order-free statistics of the
//! entropy series, the 20-entry wavelet energy spectrum, and the k-entry
//! bag-of-words histogram, in that order.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bow::{self, BowHistogram, Codebook};
use crate::entropy::{self, EntropyTimeSeries};
use crate::error::{Error, Result};
use crate::preprocess;
use crate::real::Real;
use crate::wavelet::{self, EnergySpectrum, SPECTRUM_LEN};
use crate::Label;

/// Number of global statistics at the head of every feature vector.
pub const GLOBAL_FEATURE_COUNT: usize = 6;

/// Order-free statistics of one entropy time series.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalFeatures<F> {
    /// Number of windows.
    pub length: usize,
    pub mean: F,
    /// Population standard deviation.
    pub stdev: F,
    pub max_value: F,
    /// Fraction of values strictly greater than 7.0.
    pub max_percentage: F,
    /// Fraction of values exactly equal to 0.0.
    pub zero_percentage: F,
}

impl<F: Real> GlobalFeatures<F> {
    /// Vector form, in the fixed order
    /// `[length, mean, stdev, max_value, max_percentage, zero_percentage]`.
    pub fn to_vec(&self) -> Vec<F> {
        vec![
            F::from_count(self.length),
            self.mean,
            self.stdev,
            self.max_value,
            self.max_percentage,
            self.zero_percentage,
        ]
    }
}

/// One file's feature vector: `[global | DWT energies | BOW histogram]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector<F> {
    /// Content hash of the original file bytes.
    pub file_id: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub label: Option<Label>,
    #[serde(rename = "features")]
    pub values: Vec<F>,
}

impl<F: Real> FeatureVector<F> {
    /// Total length for a given codebook size: 6 + 20 + k.
    pub fn expected_len(codebook_size: usize) -> usize {
        GLOBAL_FEATURE_COUNT + SPECTRUM_LEN + codebook_size
    }
}

/// Compute the six global statistics of a non-empty series.
pub fn global_features<F: Real>(ets: &EntropyTimeSeries<F>) -> Result<GlobalFeatures<F>> {
    if ets.values.is_empty() {
        return Err(Error::EmptyInput(
            "cannot compute global features of an empty series".into(),
        ));
    }
    let n = F::from_count(ets.values.len());
    let sum: F = ets.values.iter().copied().sum();
    let mean = sum / n;
    let var: F = ets
        .values
        .iter()
        .map(|&v| (v - mean) * (v - mean))
        .sum::<F>()
        / n;
    let max_value = ets
        .values
        .iter()
        .copied()
        .fold(F::neg_infinity(), F::max);
    let seven = F::from_f64_lossy(7.0);
    let above = ets.values.iter().filter(|&&v| v > seven).count();
    let zeros = ets.values.iter().filter(|&&v| v == F::zero()).count();
    Ok(GlobalFeatures {
        length: ets.values.len(),
        mean,
        stdev: var.sqrt(),
        max_value,
        max_percentage: F::from_count(above) / n,
        zero_percentage: F::from_count(zeros) / n,
    })
}

/// Concatenate the three feature families into the final vector.
pub fn assemble<F: Real>(
    file_id: String,
    label: Option<Label>,
    global: &GlobalFeatures<F>,
    spectrum: &EnergySpectrum<F>,
    bow: &BowHistogram<F>,
) -> FeatureVector<F> {
    let mut values = global.to_vec();
    values.extend_from_slice(&spectrum.energies);
    values.extend_from_slice(&bow.weights);
    FeatureVector {
        file_id,
        label,
        values,
    }
}

/// Lowercase hex SHA-256 of the raw file bytes; used as the file id.
pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Full per-file pipeline: canonicalize, compute the entropy series, and
/// assemble `[global | DWT | BOW]`. Deterministic in the file bytes and the
/// codebook; the label is left unset.
pub fn extract<F: Real>(bytes: &[u8], codebook: &Codebook<F>) -> Result<FeatureVector<F>> {
    let file_id = content_hash(bytes);
    let canonical = preprocess::canonicalize(bytes);
    let ets = entropy::compute_ets::<F>(&canonical.bytes)?;
    let global = global_features(&ets)?;
    let spectrum = wavelet::energy_spectrum(&ets)?;
    let histogram = bow::encode(&ets, codebook);
    Ok(assemble(file_id, None, &global, &spectrum, &histogram))
}

/// Write feature records as line-delimited JSON, one record per file.
pub fn write_jsonl<F, W>(records: &[FeatureVector<F>], mut writer: W) -> Result<()>
where
    F: Real + Serialize,
    W: std::io::Write,
{
    for record in records {
        serde_json::to_writer(&mut writer, record)
            .map_err(|e| Error::ParseError(e.to_string()))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Read feature records from line-delimited JSON.
pub fn read_jsonl<F, R>(reader: R) -> Result<Vec<FeatureVector<F>>>
where
    F: Real + serde::de::DeserializeOwned,
    R: std::io::BufRead,
{
    let mut records = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: FeatureVector<F> = serde_json::from_str(&line)
            .map_err(|e| Error::ParseError(format!("features line {}: {e}", lineno + 1)))?;
        records.push(record);
    }
    Ok(records)
}
