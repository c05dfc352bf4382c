//! ECG-derived ground truth and agreement statistics.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{fir_zero_delay, FilterSpec};
use crate::tracker::Case;

/// Heart-rate estimate for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct HrEstimate {
    pub window_index: usize,
    /// Spectrum bin of the estimate.
    pub bin: usize,
    pub bpm_est: f64,
    pub bpm_true: Option<f64>,
    pub case: Case,
    pub rule1: bool,
    pub rule2: bool,
}

impl HrEstimate {
    pub fn abs_error(&self) -> Option<f64> {
        self.bpm_true.map(|t| (self.bpm_est - t).abs())
    }
}

// ---- R-peak detection ----

const QRS_BAND_HZ: (f64, f64) = (5.0, 15.0);
const QRS_TAPS: usize = 101;
const THRESHOLD_SPAN_S: f64 = 2.0;
const THRESHOLD_RATIO: f64 = 0.5;
const REFRACTORY_S: f64 = 0.25;
/// Detections are moved to the filtered-signal maximum within this distance.
const REFINE_S: f64 = 0.05;

/// Sample indices of R peaks: 5–15 Hz bandpass, squared first difference,
/// half of the 2-second rolling maximum as threshold, 250 ms refractory period.
/// Each detection is then moved to the largest filtered sample nearby.
pub fn detect_r_peaks(ecg: &[f64], fs: f64) -> Result<Vec<usize>> {
    let spec = FilterSpec {
        low_cut: QRS_BAND_HZ.0,
        high_cut: QRS_BAND_HZ.1.min(0.45 * fs),
        taps: QRS_TAPS,
        fs,
    };
    let filtered = fir_zero_delay(ecg, &spec.design()?)?;
    let mut energy = vec![0.0; filtered.len()];
    for i in 1..filtered.len() {
        energy[i] = (filtered[i] - filtered[i - 1]).powi(2);
    }

    let half_span = (THRESHOLD_SPAN_S * fs / 2.0).round() as usize;
    let refractory = (REFRACTORY_S * fs).round() as usize;
    let n = energy.len();
    let mut peaks: Vec<usize> = Vec::new();
    for i in 1..n.saturating_sub(1) {
        let e = energy[i];
        if !(e > 0.0 && e > energy[i - 1] && e >= energy[i + 1]) {
            continue;
        }
        let lo = i.saturating_sub(half_span);
        let hi = (i + half_span + 1).min(n);
        let local_max = energy[lo..hi].iter().cloned().fold(0.0, f64::max);
        if e < THRESHOLD_RATIO * local_max {
            continue;
        }
        match peaks.last_mut() {
            Some(last) if i - *last < refractory => {
                if e > energy[*last] {
                    *last = i;
                }
            }
            _ => peaks.push(i),
        }
    }

    // the energy peak sits on the QRS slope; snap to the R apex
    let reach = (REFINE_S * fs).round() as usize;
    for p in &mut peaks {
        let lo = p.saturating_sub(reach);
        let hi = (*p + reach + 1).min(n);
        *p = (lo..hi)
            .max_by(|&a, &b| filtered[a].total_cmp(&filtered[b]).then(b.cmp(&a)))
            .unwrap_or(*p);
    }
    peaks.dedup();
    Ok(peaks)
}

/// `60 H / D` with `H` cycles between the first and last R peak spanning `D` seconds.
///
/// `None` when fewer than two peaks are present.
pub fn bpm_from_peaks(peaks: &[usize], fs: f64) -> Option<f64> {
    let (&first, &last) = (peaks.first()?, peaks.last()?);
    if peaks.len() < 2 || last == first {
        return None;
    }
    let cycles = (peaks.len() - 1) as f64;
    let duration = (last - first) as f64 / fs;
    Some(60.0 * cycles / duration)
}

pub fn ecg_ground_truth(ecg: &[f64], fs: f64) -> Result<Option<f64>> {
    Ok(bpm_from_peaks(&detect_r_peaks(ecg, fs)?, fs))
}

/// Reads `window_index,bpm` rows (header required).
pub fn load_truth_csv(path: &Path) -> Result<BTreeMap<usize, f64>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim().replace(' ', "") == "window_index,bpm" => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "expected header `window_index,bpm`".into(),
            })
        }
    }
    let mut out = BTreeMap::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse { line: idx + 1, message };
        let (w, b) = line
            .split_once(',')
            .ok_or_else(|| bad("expected two columns".into()))?;
        let w: usize = w.trim().parse().map_err(|_| bad(format!("bad window index {w:?}")))?;
        let b: f64 = b.trim().parse().map_err(|_| bad(format!("bad bpm {b:?}")))?;
        out.insert(w, b);
    }
    Ok(out)
}

// ---- agreement ----

fn check_pair(est: &[f64], truth: &[f64], min_len: usize) -> Result<()> {
    if est.len() != truth.len() {
        return Err(Error::param(format!(
            "length mismatch: {} estimates vs {} truths",
            est.len(),
            truth.len()
        )));
    }
    if est.len() < min_len {
        return Err(Error::param(format!("need at least {min_len} pairs, got {}", est.len())));
    }
    Ok(())
}

/// Mean absolute error, BPM.
pub fn error1(est: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(est, truth, 1)?;
    Ok(est.iter().zip(truth).map(|(e, t)| (e - t).abs()).sum::<f64>() / est.len() as f64)
}

/// Mean absolute relative error, as a ratio (multiply by 100 for percent).
pub fn error2(est: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(est, truth, 1)?;
    if let Some(t) = truth.iter().find(|&&t| !(t > 0.0)) {
        return Err(Error::param(format!("ground truth must be positive, got {t}")));
    }
    Ok(est.iter().zip(truth).map(|(e, t)| (e - t).abs() / t).sum::<f64>() / est.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlandAltman {
    pub mean_diff: f64,
    /// Sample standard deviation of the differences.
    pub sigma: f64,
    pub loa_low: f64,
    pub loa_high: f64,
    /// `(mean of pair, estimate − truth)` for plotting.
    pub points: Vec<(f64, f64)>,
}

pub fn bland_altman(est: &[f64], truth: &[f64]) -> Result<BlandAltman> {
    check_pair(est, truth, 2)?;
    let n = est.len() as f64;
    let diffs: Vec<f64> = est.iter().zip(truth).map(|(e, t)| e - t).collect();
    let mu = diffs.iter().sum::<f64>() / n;
    let sigma = (diffs.iter().map(|d| (d - mu).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    Ok(BlandAltman {
        mean_diff: mu,
        sigma,
        loa_low: mu - 1.96 * sigma,
        loa_high: mu + 1.96 * sigma,
        points: est
            .iter()
            .zip(truth)
            .map(|(e, t)| (0.5 * (e + t), e - t))
            .collect(),
    })
}

/// Sample Pearson correlation.
pub fn pearson(est: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(est, truth, 2)?;
    let n = est.len() as f64;
    let me = est.iter().sum::<f64>() / n;
    let mt = truth.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (e, t) in est.iter().zip(truth) {
        let (a, b) = (e - me, t - mt);
        sxy += a * b;
        sxx += a * a;
        syy += b * b;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("one of the series is constant".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Per-recording or aggregate metrics, as written to `*.metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub error1_bpm: Option<f64>,
    pub error2_pct: Option<f64>,
    pub loa_low: Option<f64>,
    pub loa_high: Option<f64>,
    pub sigma_bpm: Option<f64>,
    pub pearson_r: Option<f64>,
    /// Windows with ground truth that entered the statistics.
    pub n_windows: usize,
}

impl MetricsReport {
    /// Statistics over paired samples; entries that cannot be computed are `None`.
    pub fn from_pairs(est: &[f64], truth: &[f64]) -> Result<Self> {
        check_pair(est, truth, 0)?;
        let ba = bland_altman(est, truth).ok();
        Ok(Self {
            error1_bpm: error1(est, truth).ok(),
            error2_pct: error2(est, truth).ok().map(|r| 100.0 * r),
            loa_low: ba.as_ref().map(|b| b.loa_low),
            loa_high: ba.as_ref().map(|b| b.loa_high),
            sigma_bpm: ba.as_ref().map(|b| b.sigma),
            pearson_r: pearson(est, truth).ok(),
            n_windows: est.len(),
        })
    }

    pub fn from_estimates(estimates: &[HrEstimate]) -> Result<Self> {
        let (est, truth) = paired(estimates);
        Self::from_pairs(&est, &truth)
    }

    /// Error1/Error2 averaged over recordings; Bland–Altman and Pearson on pooled windows.
    pub fn aggregate(recordings: &[Vec<HrEstimate>]) -> Result<Self> {
        let per: Vec<Self> = recordings
            .iter()
            .map(|r| Self::from_estimates(r))
            .collect::<Result<_>>()?;
        let mean_of = |f: fn(&Self) -> Option<f64>| {
            let vals: Vec<f64> = per.iter().filter_map(f).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        };
        let (mut est, mut truth) = (Vec::new(), Vec::new());
        for r in recordings {
            let (e, t) = paired(r);
            est.extend(e);
            truth.extend(t);
        }
        let pooled = Self::from_pairs(&est, &truth)?;
        Ok(Self {
            error1_bpm: mean_of(|m| m.error1_bpm),
            error2_pct: mean_of(|m| m.error2_pct),
            ..pooled
        })
    }
}

/// Estimates and truths for windows that have ground truth.
pub fn paired(estimates: &[HrEstimate]) -> (Vec<f64>, Vec<f64>) {
    estimates
        .iter()
        .filter_map(|e| e.bpm_true.map(|t| (e.bpm_est, t)))
        .unzip()
}
