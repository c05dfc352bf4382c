use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::Spectrum;
use crate::error::{Error, Result};

/// Zero-padded `N`-point periodogram with a cached FFT plan.
#[derive(Clone)]
pub struct Periodogram {
    fft: Arc<dyn Fft<f64>>,
    n_bins: usize,
    fs: f64,
}

impl std::fmt::Debug for Periodogram {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Periodogram")
            .field("n_bins", &self.n_bins)
            .field("fs", &self.fs)
            .finish()
    }
}

impl Periodogram {
    pub fn new(n_bins: usize, fs: f64) -> Self {
        Self {
            fft: FftPlanner::new().plan_fft_forward(n_bins),
            n_bins,
            fs,
        }
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    /// Raw `N`-point DFT of the zero-padded input.
    pub fn dft(&self, y: &[f64]) -> Result<Vec<Complex64>> {
        if y.is_empty() {
            return Err(Error::length("periodogram of an empty sequence"));
        }
        if y.len() > self.n_bins {
            return Err(Error::length(format!(
                "{} samples do not fit a {}-point transform",
                y.len(),
                self.n_bins
            )));
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n_bins];
        for (b, &v) in buf.iter_mut().zip(y) {
            b.re = v;
        }
        self.fft.process(&mut buf);
        Ok(buf)
    }

    /// `s_k = |DFT_N(y)_k|^2 / len(y)`.
    pub fn compute(&self, y: &[f64]) -> Result<Spectrum> {
        let scale = 1.0 / y.len().max(1) as f64;
        let values = self.dft(y)?.into_iter().map(|c| c.norm_sqr() * scale).collect();
        Ok(Spectrum::new(values, self.fs))
    }
}

pub fn periodogram(y: &[f64], n_bins: usize, fs: f64) -> Result<Spectrum> {
    Periodogram::new(n_bins, fs).compute(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn on_grid_cosine_peaks_at_its_bin() {
        let bin = 77;
        let y: Vec<f64> = (0..1024)
            .map(|t| (2.0 * PI * (bin - 1) as f64 * t as f64 / 4096.0).cos())
            .collect();
        assert_eq!(periodogram(&y, 4096, 125.0).unwrap().physical_argmax(), bin);
    }

    #[test]
    fn parseval() {
        let y: Vec<f64> = (0..1000).map(|t| ((t * 37 % 101) as f64 - 50.0) / 7.0).collect();
        let s = periodogram(&y, 4096, 125.0).unwrap();
        let lhs = s.values().iter().sum::<f64>() / 4096.0;
        let rhs = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
        assert!(((lhs - rhs) / rhs).abs() < 1e-9);
    }

    #[test]
    fn zeros_and_empty() {
        let s = periodogram(&[0.0; 10], 64, 1.0).unwrap();
        assert!(s.values().iter().all(|&v| v == 0.0));
        assert!(matches!(periodogram(&[], 64, 1.0), Err(Error::Length(_))));
        assert!(periodogram(&[1.0; 65], 64, 1.0).is_err());
    }
}
