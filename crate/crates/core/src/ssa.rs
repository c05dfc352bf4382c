//! Singular spectrum analysis of PPG windows and removal of components that
//! share a dominant frequency with the accelerometer.

use std::collections::BTreeSet;

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::ssr::Periodogram;

/// Tunables for decomposition and exclusion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsaConfig {
    /// Embedding dimension (rows of the trajectory matrix).
    pub window_len: usize,
    /// FFT size for dominant-frequency detection.
    pub n_bins: usize,
    /// Guard half-width, in bins, around the previous HR and its harmonic.
    pub delta: usize,
    /// Adjacent components pair up when `σ_{i+1} / σ_i` reaches this ratio ...
    pub pair_ratio: f64,
    /// ... and their dominant bins are at most this far apart.
    pub pair_max_bin_gap: usize,
    /// Components below `noise_floor * σ_1` are always kept and never classified.
    pub noise_floor: f64,
}

impl Default for SsaConfig {
    fn default() -> Self {
        Self {
            window_len: 400,
            n_bins: 4096,
            delta: 10,
            pair_ratio: 0.9,
            pair_max_bin_gap: 2,
            noise_floor: 1e-3,
        }
    }
}

/// `L × K` Hankel embedding of a series.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory(DMatrix<f64>);

impl Trajectory {
    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

fn check_embedding(m: usize, l: usize) -> Result<()> {
    if l < 2 || 2 * l >= m {
        return Err(Error::param(format!(
            "embedding dimension must satisfy 2 <= L < M/2, got L={l}, M={m}"
        )));
    }
    Ok(())
}

/// Trajectory matrix with `entry(i, j) = y[i + j]`.
pub fn embed(y: &[f64], l: usize) -> Result<Trajectory> {
    check_embedding(y.len(), l)?;
    let k = y.len() - l + 1;
    Ok(Trajectory(DMatrix::from_fn(l, k, |i, j| y[i + j])))
}

/// Averages each anti-diagonal `i + j = s` into `out[s]`.
pub fn diagonal_average(mat: &DMatrix<f64>) -> Vec<f64> {
    let (l, k) = mat.shape();
    if l == 0 || k == 0 {
        return Vec::new();
    }
    let mut out = vec![0.0; l + k - 1];
    for j in 0..k {
        for i in 0..l {
            out[i + j] += mat[(i, j)];
        }
    }
    for (s, v) in out.iter_mut().enumerate() {
        *v /= anti_diagonal_len(s, l, k) as f64;
    }
    out
}

fn anti_diagonal_len(s: usize, l: usize, k: usize) -> usize {
    let (short, long) = (l.min(k), l.max(k));
    if s < short {
        s + 1
    } else if s < long {
        short
    } else {
        l + k - 1 - s
    }
}

/// Diagonal average of the rank-one matrix `u w^T` without forming it.
#[cfg(test)]
fn rank_one_series(u: &[f64], w: &[f64]) -> Vec<f64> {
    let (l, k) = (u.len(), w.len());
    let mut out = vec![0.0; l + k - 1];
    for (i, &ui) in u.iter().enumerate() {
        for (o, &wj) in out[i..i + k].iter_mut().zip(w) {
            *o += ui * wj;
        }
    }
    for (s, v) in out.iter_mut().enumerate() {
        *v /= anti_diagonal_len(s, l, k) as f64;
    }
    out
}

/// Anti-diagonal sums of `u w^T` are the linear convolution `u * w`, done by FFT.
struct RankOneAverager {
    l: usize,
    k: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    size: usize,
}

impl RankOneAverager {
    fn new(l: usize, k: usize) -> Self {
        let size = (l + k - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        Self {
            l,
            k,
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
            size,
        }
    }

    fn series(&self, u: &[f64], w: &[f64]) -> Vec<f64> {
        // both real: transform u + jw once and split by conjugate symmetry
        let mut buf = vec![Complex64::new(0.0, 0.0); self.size];
        for (b, &v) in buf.iter_mut().zip(u) {
            b.re = v;
        }
        for (b, &v) in buf.iter_mut().zip(w) {
            b.im = v;
        }
        self.forward.process(&mut buf);
        let n = self.size;
        let mut prod = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..n {
            let z = buf[i];
            let zc = buf[(n - i) % n].conj();
            let fu = (z + zc) * 0.5;
            let fw = (z - zc) * Complex64::new(0.0, -0.5);
            prod[i] = fu * fw;
        }
        self.inverse.process(&mut prod);
        let scale = 1.0 / n as f64;
        (0..self.l + self.k - 1)
            .map(|s| prod[s].re * scale / anti_diagonal_len(s, self.l, self.k) as f64)
            .collect()
    }
}

/// One reconstructed SSA group.
#[derive(Debug, Clone, PartialEq)]
pub struct SsaComponent {
    /// Largest singular value in the group.
    pub sigma: f64,
    /// Eigentriple indices (0-based, descending σ) merged into this group.
    pub triples: Vec<usize>,
    /// Diagonal-averaged series, same length as the input.
    pub series: Vec<f64>,
    /// 1-based periodogram peak bin of `series`.
    pub dominant_bin: usize,
}

/// Eigentriple `σ u v^T`, stored as `u` and `w = σ v = Y^T u`.
struct Triple {
    sigma: f64,
    u: Vec<f64>,
    w: Vec<f64>,
}

/// Eigentriples of the trajectory matrix from the `L × L` lag-covariance `Y Y^T`.
fn eigentriples(y: &[f64], l: usize) -> Result<Vec<Triple>> {
    check_embedding(y.len(), l)?;
    if y.iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate("SSA input is all zeros".into()));
    }
    let k = y.len() - l + 1;

    // C[a][b] = Σ_j y[a+j] y[b+j], filled along diagonals by recurrence.
    let mut cov = DMatrix::zeros(l, l);
    for d in 0..l {
        let mut acc: f64 = (0..k).map(|j| y[j] * y[d + j]).sum();
        cov[(0, d)] = acc;
        cov[(d, 0)] = acc;
        for a in 1..l - d {
            let b = a + d;
            acc += y[a + k - 1] * y[b + k - 1] - y[a - 1] * y[b - 1];
            cov[(a, b)] = acc;
            cov[(b, a)] = acc;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let u_sorted = DMatrix::from_fn(l, l, |i, c| eig.eigenvectors[(i, order[c])]);
    // W = Y^T U, one column per triple
    let w_all = embed(y, l)?.0.tr_mul(&u_sorted);
    Ok(order
        .iter()
        .enumerate()
        .map(|(c, &idx)| Triple {
            sigma: eig.eigenvalues[idx].max(0.0).sqrt(),
            u: u_sorted.column(c).iter().copied().collect(),
            w: w_all.column(c).iter().copied().collect(),
        })
        .collect())
}

/// Groups consecutive triples into [`SsaComponent`]s.
fn group(triples: &[Triple], first_index: usize, cfg: &SsaConfig, fft: &Periodogram) -> Result<Vec<SsaComponent>> {
    let Some(first) = triples.first() else {
        return Ok(Vec::new());
    };
    let averager = RankOneAverager::new(first.u.len(), first.w.len());
    let singles: Vec<(Vec<f64>, usize)> = triples
        .iter()
        .map(|t| {
            let series = averager.series(&t.u, &t.w);
            let bin = fft.compute(&series)?.physical_argmax();
            Ok((series, bin))
        })
        .collect::<Result<_>>()?;

    let mut out = Vec::new();
    let mut i = 0;
    while i < singles.len() {
        let pairs = i + 1 < singles.len()
            && triples[i].sigma > 0.0
            && triples[i + 1].sigma / triples[i].sigma >= cfg.pair_ratio
            && singles[i].1.abs_diff(singles[i + 1].1) <= cfg.pair_max_bin_gap;
        if pairs {
            let series: Vec<f64> = singles[i].0.iter().zip(&singles[i + 1].0).map(|(a, b)| a + b).collect();
            let dominant_bin = fft.compute(&series)?.physical_argmax();
            out.push(SsaComponent {
                sigma: triples[i].sigma,
                triples: vec![first_index + i, first_index + i + 1],
                series,
                dominant_bin,
            });
            i += 2;
        } else {
            out.push(SsaComponent {
                sigma: triples[i].sigma,
                triples: vec![first_index + i],
                series: singles[i].0.clone(),
                dominant_bin: singles[i].1,
            });
            i += 1;
        }
    }
    Ok(out)
}

/// Full decomposition: every eigentriple ends up in exactly one component, so
/// the component series sum back to `y`.
pub fn decompose(y: &[f64], l: usize, n_bins: usize) -> Result<Vec<SsaComponent>> {
    let cfg = SsaConfig {
        window_len: l,
        n_bins,
        ..SsaConfig::default()
    };
    let triples = eigentriples(y, l)?;
    group(&triples, 0, &cfg, &Periodogram::new(n_bins, 1.0))
}

/// 1-based frequency bins to exclude.
pub type ExclusionSet = BTreeSet<usize>;

/// Periodogram peaks above half the channel maximum, pooled over the three axes.
pub fn accel_dominant_bins(acc: [&[f64]; 3], n_bins: usize) -> Result<ExclusionSet> {
    let fft = Periodogram::new(n_bins, 1.0);
    let mut set = ExclusionSet::new();
    for channel in acc {
        if channel.is_empty() {
            return Err(Error::length("empty accelerometer window"));
        }
        let spec = fft.compute(channel)?;
        let max = spec.physical().iter().cloned().fold(0.0, f64::max);
        if max <= 0.0 {
            continue;
        }
        set.extend(
            spec.local_maxima(1, spec.last_physical_bin())
                .into_iter()
                .filter(|&k| spec.at(k) > 0.5 * max),
        );
    }
    Ok(set)
}

/// Drops bins within `±delta` of the previous HR bin and of its first harmonic.
pub fn refine_exclusions(f_acc: &ExclusionSet, n_prev: Option<usize>, delta: usize) -> ExclusionSet {
    let Some(n_prev) = n_prev else {
        return f_acc.clone();
    };
    let harmonic = 2 * (n_prev.max(1) - 1) + 1;
    f_acc
        .iter()
        .copied()
        .filter(|&b| b.abs_diff(n_prev) > delta && b.abs_diff(harmonic) > delta)
        .collect()
}

/// Output of [`cleanse`].
#[derive(Debug, Clone, PartialEq)]
pub struct Cleansed {
    pub series: Vec<f64>,
    /// Dominant bins of the removed components.
    pub removed_bins: Vec<usize>,
    /// Every classified component matched the exclusion set; `series` is the raw window.
    pub all_excluded: bool,
}

/// Decomposition of one window, restricted to components above the noise floor.
///
/// Everything below the floor is carried implicitly: cleansing subtracts the
/// excluded components from the original window.
#[derive(Debug, Clone)]
pub struct SsaAnalysis {
    input: Vec<f64>,
    components: Vec<SsaComponent>,
}

impl SsaAnalysis {
    pub fn new(y: &[f64], cfg: &SsaConfig) -> Result<Self> {
        let mut triples = eigentriples(y, cfg.window_len)?;
        let floor = cfg.noise_floor * triples[0].sigma;
        triples.retain(|t| t.sigma >= floor);
        let components = group(&triples, 0, cfg, &Periodogram::new(cfg.n_bins, 1.0))?;
        Ok(Self {
            input: y.to_vec(),
            components,
        })
    }

    /// Components above the noise floor, by non-increasing σ.
    pub fn components(&self) -> &[SsaComponent] {
        &self.components
    }

    pub fn cleanse(&self, exclude: &ExclusionSet) -> Cleansed {
        let removed: Vec<&SsaComponent> = self
            .components
            .iter()
            .filter(|c| exclude.contains(&c.dominant_bin))
            .collect();
        if !self.components.is_empty() && removed.len() == self.components.len() {
            return Cleansed {
                series: self.input.clone(),
                removed_bins: Vec::new(),
                all_excluded: true,
            };
        }
        let mut series = self.input.clone();
        for c in &removed {
            for (s, v) in series.iter_mut().zip(&c.series) {
                *s -= v;
            }
        }
        Cleansed {
            series,
            removed_bins: removed.iter().map(|c| c.dominant_bin).collect(),
            all_excluded: false,
        }
    }
}

/// Removes motion-artifact components from one PPG window.
pub fn cleanse(y: &[f64], acc: [&[f64]; 3], n_prev: Option<usize>, cfg: &SsaConfig) -> Result<Cleansed> {
    let f_acc = accel_dominant_bins(acc, cfg.n_bins)?;
    let exclude = refine_exclusions(&f_acc, n_prev, cfg.delta);
    Ok(SsaAnalysis::new(y, cfg)?.cleanse(&exclude))
}
