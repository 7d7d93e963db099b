//! Entropy time series: per-window Shannon entropy of a byte stream.
//!
//! The stream is cut into consecutive non-overlapping windows (256 bytes by
//! default). Each window maps to one entropy value in `[0, 8]` bits per byte;
//! the sequence of those values is the signal every downstream feature is
//! computed from.

use crate::error::{Error, Result};
use crate::real::Real;

/// Window length in bytes used by the shipped pipeline.
pub const DEFAULT_WINDOW_SIZE: usize = 256;

/// Sequence of per-window Shannon entropies, one value per window.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyTimeSeries<F> {
    /// Entropy of each window, in bits per byte, each in `[0, 8]`.
    pub values: Vec<F>,
    /// Window length in bytes the series was computed with.
    pub window_size: usize,
}

impl<F: Real> EntropyTimeSeries<F> {
    /// Wrap precomputed values with the default window size. Intended for
    /// tests and synthetic signals.
    pub fn from_values(values: Vec<F>) -> Self {
        Self {
            values,
            window_size: DEFAULT_WINDOW_SIZE,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Shannon entropy of one window, in bits per byte.
///
/// A constant block yields exactly 0.0 and a block containing each byte value
/// the same number of times yields exactly 8.0.
pub fn block_entropy<F: Real>(block: &[u8]) -> F {
    assert!(!block.is_empty(), "block_entropy requires a non-empty block");
    let mut counts = [0usize; 256];
    for &b in block {
        counts[b as usize] += 1;
    }
    let len = F::from_count(block.len());
    let mut entropy = F::zero();
    for &count in counts.iter() {
        if count == 0 {
            continue;
        }
        let p = F::from_count(count) / len;
        entropy = entropy - p * p.log2();
    }
    entropy
}

/// Compute the entropy time series with the default 256-byte window.
pub fn compute_ets<F: Real>(stream: &[u8]) -> Result<EntropyTimeSeries<F>> {
    compute_ets_with(stream, DEFAULT_WINDOW_SIZE)
}

/// Compute the entropy time series with an explicit window size.
///
/// The stream is split into consecutive non-overlapping windows. A trailing
/// partial window longer than half the window size is zero-padded (with 0x00
/// bytes) to a full window and included; a shorter one is discarded. Streams
/// yielding no windows at all are rejected.
pub fn compute_ets_with<F: Real>(stream: &[u8], window_size: usize) -> Result<EntropyTimeSeries<F>> {
    assert!(window_size >= 2, "window size must be at least 2");
    let full = stream.len() / window_size;
    let remainder = stream.len() % window_size;
    let keep_tail = remainder > window_size / 2;

    if full == 0 && !keep_tail {
        return Err(Error::EmptyInput(format!(
            "stream of {} bytes yields no {}-byte windows (need more than {})",
            stream.len(),
            window_size,
            window_size / 2
        )));
    }

    let mut values = Vec::with_capacity(full + keep_tail as usize);
    for chunk in stream.chunks_exact(window_size) {
        values.push(block_entropy(chunk));
    }
    if keep_tail {
        let mut padded = vec![0u8; window_size];
        padded[..remainder].copy_from_slice(&stream[full * window_size..]);
        values.push(block_entropy(&padded));
    }

    Ok(EntropyTimeSeries {
        values,
        window_size,
    })
}
