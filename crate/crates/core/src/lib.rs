//! Entropy-signal document scanning.
//!
//! A file's bytes are canonicalized (ZIP/PDF payloads decompressed), cut into
//! fixed-size windows, and turned into an entropy time series. Three feature
//! families are computed from that series — six global statistics, a 20-entry
//! Haar wavelet energy spectrum, and a bag-of-words codeword histogram — and
//! concatenated into one vector per file, which a from-scratch random forest
//! scores as benign or malicious.
//!
//! The numeric pipeline is generic over the scalar type via [`Real`]; the
//! type aliases at the crate root pin the shipped `f64` configuration.

use serde::{Deserialize, Serialize};

pub mod bow;
pub mod classifier;
pub mod corpus;
pub mod entropy;
pub mod error;
pub mod eval;
pub mod features;
pub mod pipeline;
pub mod preprocess;
pub mod real;
pub mod rng;
pub mod wavelet;

pub use error::{Error, Result};
pub use real::Real;

/// Sample class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Benign,
    Malicious,
}

impl Label {
    pub fn is_malicious(self) -> bool {
        matches!(self, Label::Malicious)
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Label::Benign => write!(f, "benign"),
            Label::Malicious => write!(f, "malicious"),
        }
    }
}

impl std::str::FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "benign" => Ok(Label::Benign),
            "malicious" => Ok(Label::Malicious),
            other => Err(Error::ParseError(format!(
                "unknown label `{other}` (expected benign or malicious)"
            ))),
        }
    }
}

/// Scalar used by the shipped pipeline and CLI.
pub type Scalar = f64;

pub type EntropyTimeSeries = entropy::EntropyTimeSeries<Scalar>;
pub type HaarDecomposition = wavelet::HaarDecomposition<Scalar>;
pub type EnergySpectrum = wavelet::EnergySpectrum<Scalar>;
pub type LocalFeature = bow::LocalFeature<Scalar>;
pub type Codebook = bow::Codebook<Scalar>;
pub type BowHistogram = bow::BowHistogram<Scalar>;
pub type GlobalFeatures = features::GlobalFeatures<Scalar>;
pub type FeatureVector = features::FeatureVector<Scalar>;
pub type TrainedModel = classifier::TrainedModel<Scalar>;
pub type Verdict = classifier::Verdict<Scalar>;
