//! Haar discrete wavelet decomposition and the wavelet energy spectrum.
//!
//! The transform uses the orthonormal pairwise rule
//! `a_k = (x_{2k} + x_{2k+1})/sqrt(2)`, `d_k = (x_{2k} - x_{2k+1})/sqrt(2)`,
//! recursing on the approximations until a single coefficient remains, so the
//! energy identity `sum(detail^2) + final_approx^2 = sum(x^2)` holds.

use crate::entropy::EntropyTimeSeries;
use crate::error::{Error, Result};
use crate::real::Real;

/// Number of energy-spectrum features. Caps the usable decomposition depth at
/// the 20 finest levels (a 2^20-window series, about a 20 MB file).
pub const SPECTRUM_LEN: usize = 20;

/// Full Haar pyramid of a dyadic-length series.
///
/// `detail[0]` / `approx[0]` are level 1 (finest). At level `l` over a
/// length-`2^m` input each holds `2^(m-l)` coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct HaarDecomposition<F> {
    pub detail: Vec<Vec<F>>,
    pub approx: Vec<Vec<F>>,
    pub levels: usize,
}

/// Per-level detail energies, finest level first, zero-padded to exactly
/// [`SPECTRUM_LEN`] entries.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergySpectrum<F> {
    pub energies: [F; SPECTRUM_LEN],
}

/// Zero-pad a series at the tail to the next power of two (a length-1 series
/// pads to 2).
pub fn pad_to_dyadic<F: Real>(values: &[F]) -> Vec<F> {
    let target = values.len().next_power_of_two().max(2);
    let mut padded = values.to_vec();
    padded.resize(target, F::zero());
    padded
}

/// Full Haar pyramid. The input length must be a power of two, at least 2;
/// callers pad first (see [`pad_to_dyadic`]).
pub fn haar_dwt<F: Real>(series: &[F]) -> HaarDecomposition<F> {
    assert!(
        series.len() >= 2 && series.len().is_power_of_two(),
        "haar_dwt requires dyadic input length >= 2, got {}",
        series.len()
    );
    let sqrt2 = F::from_f64_lossy(std::f64::consts::SQRT_2);
    let mut detail = Vec::new();
    let mut approx = Vec::new();
    let mut current = series.to_vec();
    while current.len() >= 2 {
        let half = current.len() / 2;
        let mut a = Vec::with_capacity(half);
        let mut d = Vec::with_capacity(half);
        for k in 0..half {
            let lo = current[2 * k];
            let hi = current[2 * k + 1];
            a.push((lo + hi) / sqrt2);
            d.push((lo - hi) / sqrt2);
        }
        detail.push(d);
        approx.push(a.clone());
        current = a;
    }
    HaarDecomposition {
        levels: detail.len(),
        detail,
        approx,
    }
}

/// Wavelet energy spectrum of an entropy time series.
///
/// The series is zero-padded to dyadic length, decomposed, and each level's
/// detail coefficients are squared and summed (`E_j`), finest level first.
/// Levels beyond the 20 finest are dropped; missing levels stay zero.
pub fn energy_spectrum<F: Real>(ets: &EntropyTimeSeries<F>) -> Result<EnergySpectrum<F>> {
    if ets.values.is_empty() {
        return Err(Error::EmptyInput(
            "cannot compute an energy spectrum of an empty series".into(),
        ));
    }
    let padded = pad_to_dyadic(&ets.values);
    let decomposition = haar_dwt(&padded);
    let mut energies = [F::zero(); SPECTRUM_LEN];
    for (level, coeffs) in decomposition.detail.iter().take(SPECTRUM_LEN).enumerate() {
        energies[level] = coeffs.iter().map(|&c| c * c).sum();
    }
    Ok(EnergySpectrum { energies })
}
