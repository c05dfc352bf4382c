//! Spectrum estimation: periodogram baseline and sparse reconstruction over a
//! pruned complex-exponential dictionary.
//!
//! Bins are 1-based throughout: bin `k` of an `N`-point grid sits at
//! `(k - 1) / N * fs` Hz, so bin 1 is DC.

mod dictionary;
mod focuss;
mod periodogram;

pub use dictionary::{build_dictionary, BandMargins, Dictionary};
pub use focuss::{focuss_spectrum, FocussParams, FocussSolution, FocussSolver};
pub use periodogram::{periodogram, Periodogram};

use crate::error::{Error, Result};

/// Frequency of a 1-based bin, Hz.
pub fn bin_to_hz(bin: usize, n_bins: usize, fs: f64) -> f64 {
    (bin as f64 - 1.0) / n_bins as f64 * fs
}

pub fn bin_to_bpm(bin: usize, n_bins: usize, fs: f64) -> Result<f64> {
    if bin < 1 || bin > n_bins {
        return Err(Error::param(format!("bin {bin} outside [1, {n_bins}]")));
    }
    Ok(60.0 * bin_to_hz(bin, n_bins, fs))
}

/// Nearest 1-based bin for a frequency in Hz.
pub fn hz_to_bin(hz: f64, n_bins: usize, fs: f64) -> usize {
    (hz * n_bins as f64 / fs).round() as usize + 1
}

/// Bin of the conjugate-symmetric partner: `k ↦ N - k + 2`, with DC mapping to itself.
pub fn mirror_bin(bin: usize, n_bins: usize) -> usize {
    (n_bins + 1 - bin) % n_bins + 1
}

/// Non-negative spectrum over `N` bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    values: Vec<f64>,
    fs: f64,
}

impl Spectrum {
    pub fn new(values: Vec<f64>, fs: f64) -> Self {
        Self { values, fs }
    }

    pub fn n_bins(&self) -> usize {
        self.values.len()
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    /// All `N` values; index `k - 1` holds bin `k`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at a 1-based bin; zero outside `[1, N]`.
    pub fn at(&self, bin: usize) -> f64 {
        if bin == 0 {
            return 0.0;
        }
        self.values.get(bin - 1).copied().unwrap_or(0.0)
    }

    /// Highest physical bin (`N/2 + 1`, the Nyquist bin for even `N`).
    pub fn last_physical_bin(&self) -> usize {
        self.n_bins() / 2 + 1
    }

    /// Bins covering `[0, fs/2]`.
    pub fn physical(&self) -> &[f64] {
        &self.values[..self.last_physical_bin().min(self.n_bins())]
    }

    pub fn hz(&self, bin: usize) -> f64 {
        bin_to_hz(bin, self.n_bins(), self.fs)
    }

    pub fn bpm(&self, bin: usize) -> f64 {
        60.0 * self.hz(bin)
    }

    pub fn bin_for_hz(&self, hz: f64) -> usize {
        hz_to_bin(hz, self.n_bins(), self.fs)
    }

    /// 1-based bin of the largest physical value (lowest bin wins ties).
    pub fn physical_argmax(&self) -> usize {
        self.argmax_in(1, self.last_physical_bin()).unwrap_or(1)
    }

    /// 1-based argmax over the inclusive bin range, clipped to the physical band.
    pub fn argmax_in(&self, lo: usize, hi: usize) -> Option<usize> {
        let lo = lo.max(1);
        let hi = hi.min(self.last_physical_bin());
        (lo..=hi).fold(None, |best: Option<usize>, k| match best {
            Some(b) if self.at(b) >= self.at(k) => Some(b),
            _ => Some(k),
        })
    }

    /// Strict local maxima (`s[k-1] < s[k] >= s[k+1]`) within the inclusive
    /// range, clipped to the physical band. Zero-valued bins never qualify.
    pub fn local_maxima(&self, lo: usize, hi: usize) -> Vec<usize> {
        let lo = lo.max(1);
        let hi = hi.min(self.last_physical_bin());
        (lo..=hi)
            .filter(|&k| {
                let v = self.at(k);
                v > 0.0 && v > self.at(k - 1) && v >= self.at(k + 1)
            })
            .collect()
    }
}
