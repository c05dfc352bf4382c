use std::f64::consts::PI;

use nalgebra::DMatrix;

use super::mirror_bin;
use crate::error::{Error, Result};

/// Passband edges kept in the dictionary, Hz.
pub const PASS_LOW_HZ: f64 = 0.4;
pub const PASS_HIGH_HZ: f64 = 5.0;

/// Extra bins kept below and above the passband for the filter's transition band.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BandMargins {
    pub low: i64,
    pub high: i64,
}

impl BandMargins {
    pub const NONE: Self = Self { low: 0, high: 0 };

    /// Low margin reaches down to bin 2 (the first bin above DC); high margin
    /// adds `2 N / fs` bins, i.e. 2 Hz.
    pub fn default_for(n_bins: usize, fs: f64) -> Self {
        let n = n_bins as f64;
        Self {
            low: (PASS_LOW_HZ * n / fs).ceil() as i64 - 1,
            high: (2.0 * n / fs).round() as i64,
        }
    }
}

/// Role of one real unknown in the conjugate-symmetric parametrisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Part {
    /// Real part of the coefficient at a bin whose mirror is a different bin.
    Re,
    /// Imaginary part of the same.
    Im,
    /// Coefficient of a self-mirrored bin (DC or Nyquist), real for real input.
    Real,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Unknown {
    /// Lower (physical) bin of the pair, 1-based.
    pub bin: usize,
    pub part: Part,
}

impl Unknown {
    /// Weight of this unknown in the complex penalty, counting both mirror bins.
    pub fn multiplicity(&self) -> f64 {
        match self.part {
            Part::Real => 1.0,
            Part::Re | Part::Im => 2.0,
        }
    }
}

/// Pruned Fourier dictionary `Φ[m, k] = exp(j 2π m (k-1) / N)` for `m < rows`.
///
/// The retained bin set is closed under mirroring, so a real observation has
/// a conjugate-symmetric solution. Internally the columns are stored as the
/// equivalent real design (`2 cos`, `-2 sin` per mirror pair) together with
/// its Gram matrix, which is shared across windows.
#[derive(Debug, Clone)]
pub struct Dictionary {
    rows: usize,
    n_bins: usize,
    fs: f64,
    retained: Vec<usize>,
    pub(crate) unknowns: Vec<Unknown>,
    pub(crate) gram: DMatrix<f64>,
}

impl Dictionary {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    /// Retained 1-based bins in ascending order (both halves).
    pub fn retained(&self) -> &[usize] {
        &self.retained
    }

    pub fn is_retained(&self, bin: usize) -> bool {
        self.retained.binary_search(&bin).is_ok()
    }

    /// Retained bins in `[1, N/2 + 1]`.
    pub fn physical_bins(&self) -> impl Iterator<Item = usize> + '_ {
        let last = self.n_bins / 2 + 1;
        self.retained.iter().copied().filter(move |&b| b <= last)
    }

    /// Real design column `i` evaluated at sample `m`.
    #[cfg(test)]
    pub(crate) fn column_value(&self, unknown: Unknown, m: usize) -> f64 {
        let idx = ((unknown.bin - 1) * m) % self.n_bins;
        let theta = 2.0 * PI * idx as f64 / self.n_bins as f64;
        match unknown.part {
            Part::Re => 2.0 * theta.cos(),
            Part::Im => -2.0 * theta.sin(),
            Part::Real => theta.cos(),
        }
    }
}

pub fn build_dictionary(rows: usize, n_bins: usize, fs: f64, margins: BandMargins) -> Result<Dictionary> {
    if rows == 0 || n_bins < rows {
        return Err(Error::param(format!("need N >= rows >= 1, got N={n_bins}, rows={rows}")));
    }
    if !(fs > 0.0) {
        return Err(Error::param("sampling rate must be positive"));
    }
    let n = n_bins as f64;
    let lo = (PASS_LOW_HZ * n / fs).ceil() as i64 + 1 - margins.low;
    let hi = (PASS_HIGH_HZ * n / fs).floor() as i64 + 1 + margins.high;
    let lo = lo.max(1);
    let hi = hi.min(n_bins as i64);
    if lo > hi {
        return Err(Error::param(format!("empty retained band [{lo}, {hi}]")));
    }

    let mut retained: Vec<usize> = (lo as usize..=hi as usize)
        .flat_map(|k| [k, mirror_bin(k, n_bins)])
        .collect();
    retained.sort_unstable();
    retained.dedup();

    let mut unknowns = Vec::new();
    for &k in &retained {
        let m = mirror_bin(k, n_bins);
        if m == k {
            unknowns.push(Unknown { bin: k, part: Part::Real });
        } else if k < m {
            unknowns.push(Unknown { bin: k, part: Part::Re });
            unknowns.push(Unknown { bin: k, part: Part::Im });
        }
    }

    let gram = gram_matrix(&unknowns, rows, n_bins);
    Ok(Dictionary {
        rows,
        n_bins,
        fs,
        retained,
        unknowns,
        gram,
    })
}

/// `B^T B` for the real design, from tabulated sums `Σ_m cos/sin(2π d m / N)`.
fn gram_matrix(unknowns: &[Unknown], rows: usize, n_bins: usize) -> DMatrix<f64> {
    let cos_tab: Vec<f64> = (0..n_bins)
        .map(|i| (2.0 * PI * i as f64 / n_bins as f64).cos())
        .collect();
    let sin_tab: Vec<f64> = (0..n_bins)
        .map(|i| (2.0 * PI * i as f64 / n_bins as f64).sin())
        .collect();
    let mut csum = vec![0.0; n_bins];
    let mut ssum = vec![0.0; n_bins];
    for d in 0..n_bins {
        let (mut c, mut s) = (0.0, 0.0);
        for m in 0..rows {
            let idx = (d * m) % n_bins;
            c += cos_tab[idx];
            s += sin_tab[idx];
        }
        csum[d] = c;
        ssum[d] = s;
    }
    let wrap = |d: i64| d.rem_euclid(n_bins as i64) as usize;
    // Σ cos(a)cos(b), Σ sin(a)sin(b), Σ cos(a)sin(b) with a, b frequency indices.
    let cc = |a: i64, b: i64| 0.5 * (csum[wrap(a - b)] + csum[wrap(a + b)]);
    let ss = |a: i64, b: i64| 0.5 * (csum[wrap(a - b)] - csum[wrap(a + b)]);
    let cs = |a: i64, b: i64| 0.5 * (ssum[wrap(a + b)] - ssum[wrap(a - b)]);

    let scale = |u: &Unknown| match u.part {
        Part::Re => 2.0,
        Part::Im => -2.0,
        Part::Real => 1.0,
    };
    let is_sin = |u: &Unknown| u.part == Part::Im;

    let p = unknowns.len();
    DMatrix::from_fn(p, p, |i, j| {
        let (ui, uj) = (&unknowns[i], &unknowns[j]);
        let (a, b) = (ui.bin as i64 - 1, uj.bin as i64 - 1);
        let base = match (is_sin(ui), is_sin(uj)) {
            (false, false) => cc(a, b),
            (true, true) => ss(a, b),
            (false, true) => cs(a, b),
            (true, false) => cs(b, a),
        };
        scale(ui) * scale(uj) * base
    })
}
