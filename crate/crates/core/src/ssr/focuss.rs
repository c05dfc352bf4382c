use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::dictionary::{Dictionary, Part};
use super::{Periodogram, Spectrum};
use crate::error::{Error, Result};

/// Relative floor on `|x_i|` inside the reweighting matrix.
const WEIGHT_FLOOR: f64 = 1e-12;
/// Cholesky pivots below this fraction of the largest diagonal mark a singular system.
const SINGULAR_PIVOT: f64 = f64::EPSILON;

fn singular() -> Error {
    Error::Numeric {
        window: None,
        message: "reweighted normal equations are singular".into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocussParams {
    /// Exponent of the `ℓ_p` sparsity penalty.
    pub p: f64,
    pub lambda: f64,
    pub iters: usize,
}

impl Default for FocussParams {
    fn default() -> Self {
        Self {
            p: 0.8,
            lambda: 0.1,
            iters: 5,
        }
    }
}

impl FocussParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::param(format!("p must be in (0, 1], got {}", self.p)));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::param(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.iters == 0 {
            return Err(Error::param("iteration count must be positive"));
        }
        Ok(())
    }

    /// Ridge added in each reweighted solve. Each step then minimises a
    /// quadratic majoriser of `‖y − Φx‖² + λ Σ|x_k|^p`, so that objective
    /// cannot increase.
    pub fn ridge(&self) -> f64 {
        0.5 * self.p * self.lambda
    }
}

/// Iterates and objective values of one FOCUSS run.
#[derive(Debug, Clone)]
pub struct FocussSolution {
    /// Coefficients over all `N` bins (zero at pruned bins), after the last iteration.
    pub coeffs: Vec<Complex64>,
    /// Objective `‖y − Φx‖² + λ Σ|x_k|^p` at the initial point and after each iteration.
    pub objective: Vec<f64>,
}

impl FocussSolution {
    pub fn spectrum(&self, fs: f64) -> Spectrum {
        Spectrum::new(self.coeffs.iter().map(|c| c.norm_sqr()).collect(), fs)
    }
}

/// Regularised FOCUSS over a pruned [`Dictionary`].
///
/// Works on the real parametrisation of the conjugate-symmetric solution:
/// `x_k = a + jb`, `x_{mirror(k)} = a - jb`, which makes every reweighted
/// solve a `P × P` symmetric positive-definite system with `P` the number of
/// retained bins. The Gram matrix comes precomputed with the dictionary.
#[derive(Debug, Clone)]
pub struct FocussSolver<'a> {
    dict: &'a Dictionary,
    params: FocussParams,
    dft: Periodogram,
}

impl<'a> FocussSolver<'a> {
    pub fn new(dict: &'a Dictionary, params: FocussParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            dict,
            params,
            dft: Periodogram::new(dict.n_bins(), dict.fs()),
        })
    }

    pub fn params(&self) -> FocussParams {
        self.params
    }

    /// `B^T y` via one zero-padded FFT.
    fn correlate(&self, y: &[f64]) -> Result<DVector<f64>> {
        let spec = self.dft.dft(y)?;
        Ok(DVector::from_iterator(
            self.dict.unknowns.len(),
            self.dict.unknowns.iter().map(|u| {
                let c = spec[u.bin - 1];
                // DFT uses e^{-jθ}: Σ y cos = re, Σ y sin = -im
                match u.part {
                    Part::Re => 2.0 * c.re,
                    Part::Im => 2.0 * c.im,
                    Part::Real => c.re,
                }
            }),
        ))
    }

    fn magnitudes(&self, z: &DVector<f64>) -> Vec<f64> {
        let u = &self.dict.unknowns;
        let mut mags = vec![0.0; u.len()];
        let mut i = 0;
        while i < u.len() {
            match u[i].part {
                Part::Real => {
                    mags[i] = z[i].abs();
                    i += 1;
                }
                _ => {
                    let m = z[i].hypot(z[i + 1]);
                    mags[i] = m;
                    mags[i + 1] = m;
                    i += 2;
                }
            }
        }
        mags
    }

    fn objective(&self, yy: f64, bty: &DVector<f64>, z: &DVector<f64>) -> f64 {
        let fit = yy - 2.0 * z.dot(bty) + z.dot(&(&self.dict.gram * z));
        let mags = self.magnitudes(z);
        let penalty: f64 = self
            .dict
            .unknowns
            .iter()
            .zip(&mags)
            .map(|(u, m)| match u.part {
                Part::Real => m.powf(self.params.p),
                // one Re/Im pair stands for two mirrored bins; count the pair once here
                Part::Re => 2.0 * m.powf(self.params.p),
                Part::Im => 0.0,
            })
            .sum();
        fit.max(0.0) + self.params.lambda * penalty
    }

    /// Runs the fixed number of reweighted iterations on `y` as given.
    pub fn solve(&self, y: &[f64]) -> Result<FocussSolution> {
        if y.len() != self.dict.rows() {
            return Err(Error::length(format!(
                "signal has {} samples, dictionary expects {}",
                y.len(),
                self.dict.rows()
            )));
        }
        if y.iter().all(|&v| v == 0.0) {
            return Err(Error::Degenerate("FOCUSS input is all zeros".into()));
        }
        let unknowns = &self.dict.unknowns;
        let p = unknowns.len();
        let bty = self.correlate(y)?;
        let yy: f64 = y.iter().map(|v| v * v).sum();

        // matched filter Φ^H y / M
        let rows = self.dict.rows() as f64;
        let mut z = DVector::from_iterator(
            p,
            unknowns.iter().zip(bty.iter()).map(|(u, b)| match u.part {
                Part::Real => b / rows,
                _ => b / (2.0 * rows),
            }),
        );

        let ridge = self.params.ridge();
        let exponent = 1.0 - self.params.p / 2.0;
        let mut objective = vec![self.objective(yy, &bty, &z)];

        for _ in 0..self.params.iters {
            let mags = self.magnitudes(&z);
            let floor = WEIGHT_FLOOR * mags.iter().cloned().fold(0.0, f64::max);
            let w: Vec<f64> = mags.iter().map(|&m| m.max(floor).powf(exponent)).collect();

            let mut system = DMatrix::from_fn(p, p, |i, j| w[i] * self.dict.gram[(i, j)] * w[j]);
            for (i, u) in unknowns.iter().enumerate() {
                system[(i, i)] += ridge * u.multiplicity();
            }
            let rhs = DVector::from_iterator(p, (0..p).map(|i| w[i] * bty[i]));
            let max_diag = system.diagonal().iter().cloned().fold(0.0, f64::max);
            let chol = system.cholesky().ok_or_else(singular)?;
            let min_pivot = chol.l_dirty().diagonal().iter().map(|d| d * d).fold(f64::INFINITY, f64::min);
            if !(min_pivot > SINGULAR_PIVOT * p as f64 * max_diag) {
                return Err(singular());
            }
            let scaled = chol.solve(&rhs);
            z = DVector::from_iterator(p, (0..p).map(|i| w[i] * scaled[i]));
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric {
                    window: None,
                    message: "non-finite FOCUSS coefficients".into(),
                });
            }
            objective.push(self.objective(yy, &bty, &z));
        }

        let n = self.dict.n_bins();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); n];
        let mut i = 0;
        while i < p {
            let u = unknowns[i];
            match u.part {
                Part::Real => {
                    coeffs[u.bin - 1] = Complex64::new(z[i], 0.0);
                    i += 1;
                }
                _ => {
                    let c = Complex64::new(z[i], z[i + 1]);
                    coeffs[u.bin - 1] = c;
                    coeffs[super::mirror_bin(u.bin, n) - 1] = c.conj();
                    i += 2;
                }
            }
        }
        Ok(FocussSolution { coeffs, objective })
    }

    /// Sparse spectrum `s_k = |x_k|^2` of `y` scaled to unit RMS.
    pub fn spectrum(&self, y: &[f64]) -> Result<Spectrum> {
        let rms = (y.iter().map(|v| v * v).sum::<f64>() / y.len().max(1) as f64).sqrt();
        if rms == 0.0 {
            return Err(Error::Degenerate("FOCUSS input is all zeros".into()));
        }
        let scaled: Vec<f64> = y.iter().map(|v| v / rms).collect();
        Ok(self.solve(&scaled)?.spectrum(self.dict.fs()))
    }
}

pub fn focuss_spectrum(y: &[f64], dict: &Dictionary, params: FocussParams) -> Result<Spectrum> {
    FocussSolver::new(dict, params)?.spectrum(y)
}
