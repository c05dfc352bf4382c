//! Spectral peak tracking with harmonic-pair selection and two verification rules.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::metrics::HrEstimate;
use crate::ssr::Spectrum;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerParams {
    /// Half-width of the fundamental search range, bins.
    pub delta_s: usize,
    /// Widened half-width used after a prolonged hold.
    pub delta_s_wide: usize,
    /// Candidate threshold as a fraction of the highest value in the fundamental range.
    pub eta_ratio: f64,
    /// Rule 1 trigger, bins.
    pub theta: usize,
    /// Rule 1 step, bins.
    pub tau: usize,
    /// Consecutive holds before Rule 2 fires.
    pub stall_windows: usize,
    /// Max distance, bins, between a harmonic peak and `2(N0 - 1) + 1`.
    pub harmonic_tolerance: usize,
    /// Number of past estimates fed to the cubic trend fit.
    pub trend_window: usize,
    pub trend_threshold_bpm: f64,
    /// Band searched at initialisation, Hz.
    pub init_band_hz: (f64, f64),
    /// Apply Rules 1 and 2. Off reproduces the selection-only ablation.
    pub verify: bool,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            delta_s: 16,
            delta_s_wide: 20,
            eta_ratio: 0.3,
            theta: 6,
            tau: 2,
            stall_windows: 3,
            harmonic_tolerance: 3,
            trend_window: 20,
            trend_threshold_bpm: 3.0,
            init_band_hz: (0.7, 3.0),
            verify: true,
        }
    }
}

/// How the peak for a window was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Case {
    /// Highest peak of the first window.
    Init,
    /// Fundamental with a matching first-harmonic peak.
    HarmonicPair,
    /// Candidate closest to the previous estimate.
    Nearest,
    /// No candidates: previous estimate held.
    Hold,
}

impl Case {
    /// Numeric label used in traces (0 for initialisation).
    pub fn number(self) -> u8 {
        match self {
            Case::Init => 0,
            Case::HarmonicPair => 1,
            Case::Nearest => 2,
            Case::Hold => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerState {
    pub n_prev: usize,
    pub bpm_history: Vec<f64>,
    /// Consecutive [`Case::Hold`] windows so far.
    pub stall_count: usize,
    pub delta_s: usize,
    pub n_trend: i8,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub bin: usize,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PeakCandidates {
    /// Up to three peaks in the fundamental range, highest first.
    pub fundamental: Vec<Peak>,
    /// Up to three peaks in the first-harmonic range, highest first.
    pub harmonic: Vec<Peak>,
}

/// Result of the verification stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Verdict {
    pub n_cur: usize,
    pub rule1: bool,
    pub rule2: bool,
}

fn harmonic_of(bin: usize) -> usize {
    2 * (bin - 1) + 1
}

fn fundamental_of(harmonic_bin: usize) -> usize {
    ((harmonic_bin as f64 - 1.0) / 2.0).round() as usize + 1
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Tracker {
    pub params: TrackerParams,
}

impl Tracker {
    pub fn new(params: TrackerParams) -> Self {
        Self { params }
    }

    fn init_range(&self, spectrum: &Spectrum) -> (usize, usize) {
        let n = spectrum.n_bins() as f64;
        let fs = spectrum.fs();
        let (lo, hi) = self.params.init_band_hz;
        ((lo * n / fs).ceil() as usize + 1, (hi * n / fs).floor() as usize + 1)
    }

    fn fresh_state(&self, spectrum: &Spectrum, bin: usize) -> TrackerState {
        TrackerState {
            n_prev: bin,
            bpm_history: vec![spectrum.bpm(bin)],
            stall_count: 0,
            delta_s: self.params.delta_s,
            n_trend: 0,
        }
    }

    /// Starts tracking at the highest peak inside the initialisation band.
    pub fn initialize(&self, spectrum: &Spectrum) -> Result<TrackerState> {
        self.initialize_excluding(spectrum, &BTreeSet::new(), 0)
    }

    /// Like [`Tracker::initialize`], skipping bins within `guard` of any excluded bin.
    pub fn initialize_excluding(
        &self,
        spectrum: &Spectrum,
        exclude: &BTreeSet<usize>,
        guard: usize,
    ) -> Result<TrackerState> {
        let (lo, hi) = self.init_range(spectrum);
        let hi = hi.min(spectrum.last_physical_bin());
        let blocked = |k: usize| exclude.iter().any(|&e| e.abs_diff(k) <= guard);
        let mut best: Option<usize> = None;
        for k in lo..=hi {
            if blocked(k) {
                continue;
            }
            if best.map_or(true, |b| spectrum.at(k) > spectrum.at(b)) {
                best = Some(k);
            }
        }
        match best {
            Some(b) if spectrum.at(b) > 0.0 => Ok(self.fresh_state(spectrum, b)),
            _ => Err(Error::Init("no spectral energy in the initialisation band".into())),
        }
    }

    pub fn select_candidates(&self, spectrum: &Spectrum, state: &TrackerState) -> PeakCandidates {
        let ds = state.delta_s;
        let lo0 = state.n_prev.saturating_sub(ds).max(1);
        let hi0 = state.n_prev + ds;
        let lo1 = harmonic_of(lo0);
        let hi1 = harmonic_of(hi0);

        let eta = self.params.eta_ratio
            * (lo0..=hi0.min(spectrum.last_physical_bin()))
                .map(|k| spectrum.at(k))
                .fold(0.0, f64::max);
        let top3 = |lo: usize, hi: usize| {
            let mut peaks: Vec<Peak> = spectrum
                .local_maxima(lo, hi)
                .into_iter()
                .map(|bin| Peak {
                    bin,
                    amplitude: spectrum.at(bin),
                })
                .filter(|p| p.amplitude >= eta)
                .collect();
            peaks.sort_by(|a, b| b.amplitude.total_cmp(&a.amplitude).then(a.bin.cmp(&b.bin)));
            peaks.truncate(3);
            peaks
        };
        PeakCandidates {
            fundamental: top3(lo0, hi0),
            harmonic: top3(lo1, hi1),
        }
    }

    pub fn select_peak(&self, cands: &PeakCandidates, state: &TrackerState) -> (usize, Case) {
        let tol = self.params.harmonic_tolerance;
        let paired = cands
            .fundamental
            .iter()
            .filter(|f| {
                cands
                    .harmonic
                    .iter()
                    .any(|h| h.bin.abs_diff(harmonic_of(f.bin)) <= tol)
            })
            .max_by(|a, b| a.amplitude.total_cmp(&b.amplitude).then(b.bin.cmp(&a.bin)));
        if let Some(f) = paired {
            return (f.bin, Case::HarmonicPair);
        }

        let nearest = cands
            .fundamental
            .iter()
            .map(|p| p.bin)
            .chain(cands.harmonic.iter().map(|p| fundamental_of(p.bin)))
            .min_by_key(|&b| b.abs_diff(state.n_prev));
        match nearest {
            Some(b) => (b, Case::Nearest),
            None => (state.n_prev, Case::Hold),
        }
    }

    /// Direction of the cubic-fit BPM prediction relative to the last estimate.
    pub fn update_trend(&self, state: &TrackerState) -> i8 {
        let hist = &state.bpm_history;
        let take = hist.len().min(self.params.trend_window);
        if take < 4 {
            return 0;
        }
        let recent = &hist[hist.len() - take..];
        let Some(predicted) = cubic_extrapolate(recent) else {
            return 0;
        };
        let change = predicted - recent[take - 1];
        if change >= self.params.trend_threshold_bpm {
            1
        } else if change <= -self.params.trend_threshold_bpm {
            -1
        } else {
            0
        }
    }

    /// Rule 1 caps jumps of `theta` bins or more to `tau`; Rule 2 nudges by
    /// `2 * n_trend` once `stall_windows` holds in a row (this one included).
    pub fn verify(&self, n_hat: usize, case: Case, state: &TrackerState) -> Verdict {
        let p = &self.params;
        if !p.verify {
            return Verdict {
                n_cur: n_hat,
                rule1: false,
                rule2: false,
            };
        }
        let stall = if case == Case::Hold { state.stall_count + 1 } else { 0 };
        if stall >= p.stall_windows {
            let n_cur = (state.n_prev as i64 + 2 * state.n_trend as i64).max(2) as usize;
            return Verdict {
                n_cur,
                rule1: false,
                rule2: true,
            };
        }
        let diff = n_hat as i64 - state.n_prev as i64;
        let (n_cur, rule1) = if diff >= p.theta as i64 {
            (state.n_prev + p.tau, true)
        } else if diff <= -(p.theta as i64) {
            (state.n_prev.saturating_sub(p.tau).max(2), true)
        } else {
            (n_hat, false)
        };
        Verdict { n_cur, rule1, rule2: false }
    }

    /// One tracking step: candidates, selection, trend, verification.
    pub fn step(&self, window_index: usize, spectrum: &Spectrum, state: &TrackerState) -> (HrEstimate, TrackerState) {
        let cands = self.select_candidates(spectrum, state);
        let (n_hat, case) = self.select_peak(&cands, state);

        let mut next = state.clone();
        next.n_trend = self.update_trend(state);
        let verdict = self.verify(n_hat, case, &next);
        let n_cur = verdict.n_cur.clamp(2, spectrum.last_physical_bin());

        if case == Case::Hold {
            next.stall_count += 1;
        } else {
            next.stall_count = 0;
        }
        next.delta_s = if verdict.rule2 {
            self.params.delta_s_wide
        } else if case != Case::Hold {
            self.params.delta_s
        } else {
            next.delta_s
        };
        next.n_prev = n_cur;
        let bpm = spectrum.bpm(n_cur);
        next.bpm_history.push(bpm);

        let estimate = HrEstimate {
            window_index,
            bin: n_cur,
            bpm_est: bpm,
            bpm_true: None,
            case,
            rule1: verdict.rule1,
            rule2: verdict.rule2,
        };
        (estimate, next)
    }
}

/// Least-squares cubic through `(1, y_1) .. (n, y_n)`, evaluated at `n + 1`.
pub fn cubic_extrapolate(y: &[f64]) -> Option<f64> {
    let n = y.len();
    if n < 4 {
        return None;
    }
    // centre and scale the abscissa to keep the Vandermonde matrix well conditioned
    let centre = (n as f64 + 1.0) / 2.0;
    let scale = (n as f64 - 1.0) / 2.0;
    let t = |x: f64| (x - centre) / scale;
    let a = DMatrix::from_fn(n, 4, |i, j| t(i as f64 + 1.0).powi(j as i32));
    let b = DVector::from_column_slice(y);
    let coef = a.svd(true, true).solve(&b, 1e-12).ok()?;
    let x = t(n as f64 + 1.0);
    Some((0..4).map(|j| coef[j] * x.powi(j as i32)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    const N: usize = 4096;
    const FS: f64 = 125.0;

    fn spectrum_with(peaks: &[(usize, f64)]) -> Spectrum {
        let mut v = vec![0.0; N];
        for &(bin, amp) in peaks {
            v[bin - 1] = amp;
        }
        Spectrum::new(v, FS)
    }

    fn state_at(n_prev: usize) -> TrackerState {
        TrackerState {
            n_prev,
            bpm_history: vec![60.0 * (n_prev - 1) as f64 * FS / N as f64],
            stall_count: 0,
            delta_s: 16,
            n_trend: 0,
        }
    }

    #[test]
    fn initialize_picks_highest_peak() {
        let bin = crate::ssr::hz_to_bin(1.5, N, FS);
        let s = spectrum_with(&[(bin, 1.0)]);
        let st = Tracker::default().initialize(&s).unwrap();
        assert_eq!(st.n_prev, bin);
        assert!((st.bpm_history[0] - 90.0).abs() < 1.0);
        assert_eq!((st.stall_count, st.delta_s, st.n_trend), (0, 16, 0));

        let b1 = crate::ssr::hz_to_bin(1.0, N, FS);
        let b2 = crate::ssr::hz_to_bin(2.0, N, FS);
        let s = spectrum_with(&[(b1, 0.7), (b2, 1.0)]);
        assert_eq!(Tracker::default().initialize(&s).unwrap().n_prev, b2);
    }

    #[test]
    fn initialize_ignores_out_of_band_peaks() {
        let s = spectrum_with(&[(crate::ssr::hz_to_bin(4.0, N, FS), 10.0), (60, 1.0)]);
        assert_eq!(Tracker::default().initialize(&s).unwrap().n_prev, 60);
    }

    #[test]
    fn initialize_zero_spectrum_fails() {
        let err = Tracker::default().initialize(&spectrum_with(&[])).unwrap_err();
        assert!(matches!(err, Error::Init(_)));
    }

    #[test]
    fn candidates_threshold_and_cap() {
        let t = Tracker::default();
        let s = spectrum_with(&[(95, 1.0), (100, 0.5), (108, 0.2)]);
        let c = t.select_candidates(&s, &state_at(100));
        let bins: Vec<usize> = c.fundamental.iter().map(|p| p.bin).collect();
        assert_eq!(bins, vec![95, 100]);

        let s = spectrum_with(&[(90, 1.0), (95, 0.9), (100, 0.8), (105, 0.7)]);
        let c = t.select_candidates(&s, &state_at(100));
        let bins: Vec<usize> = c.fundamental.iter().map(|p| p.bin).collect();
        assert_eq!(bins, vec![90, 95, 100]);
    }

    #[test]
    fn flat_spectrum_has_no_candidates() {
        let c = Tracker::default().select_candidates(&spectrum_with(&[]), &state_at(100));
        assert!(c.fundamental.is_empty() && c.harmonic.is_empty());
    }

    #[test]
    fn harmonic_range_is_searched() {
        let s = spectrum_with(&[(110, 1.0), (219, 0.6), (300, 5.0)]);
        let c = Tracker::default().select_candidates(&s, &state_at(100));
        assert_eq!(c.harmonic.iter().map(|p| p.bin).collect::<Vec<_>>(), vec![219]);
    }

    fn peaks(bins: &[usize]) -> Vec<Peak> {
        bins.iter().map(|&bin| Peak { bin, amplitude: 1.0 }).collect()
    }

    #[test]
    fn case_one_exact_harmonic() {
        let c = PeakCandidates {
            fundamental: peaks(&[110]),
            harmonic: peaks(&[219]),
        };
        assert_eq!(Tracker::default().select_peak(&c, &state_at(100)), (110, Case::HarmonicPair));
    }

    #[test]
    fn case_one_prefers_stronger_fundamental() {
        let c = PeakCandidates {
            fundamental: vec![Peak { bin: 112, amplitude: 0.9 }, Peak { bin: 99, amplitude: 0.5 }],
            harmonic: peaks(&[197, 223]),
        };
        assert_eq!(Tracker::default().select_peak(&c, &state_at(100)).0, 112);
    }

    #[test]
    fn case_two_nearest_to_previous() {
        let c = PeakCandidates {
            fundamental: peaks(&[104, 120]),
            harmonic: vec![],
        };
        assert_eq!(Tracker::default().select_peak(&c, &state_at(100)), (104, Case::Nearest));

        // a lone harmonic maps back via (N1 - 1) / 2 + 1
        let c = PeakCandidates {
            fundamental: peaks(&[120]),
            harmonic: peaks(&[203]),
        };
        assert_eq!(Tracker::default().select_peak(&c, &state_at(100)), (102, Case::Nearest));
    }

    #[test]
    fn case_three_holds() {
        let c = PeakCandidates::default();
        assert_eq!(Tracker::default().select_peak(&c, &state_at(100)), (100, Case::Hold));
    }

    #[test]
    fn rule_one() {
        let t = Tracker::default();
        let v = t.verify(110, Case::Nearest, &state_at(100));
        assert_eq!(v, Verdict { n_cur: 102, rule1: true, rule2: false });
        let v = t.verify(90, Case::Nearest, &state_at(100));
        assert_eq!(v.n_cur, 98);
        let v = t.verify(103, Case::Nearest, &state_at(100));
        assert_eq!(v, Verdict { n_cur: 103, rule1: false, rule2: false });
        let v = t.verify(106, Case::Nearest, &state_at(100));
        assert_eq!(v.n_cur, 102);
        let v = t.verify(105, Case::Nearest, &state_at(100));
        assert_eq!(v.n_cur, 105);
    }

    #[test]
    fn rule_two_after_three_holds() {
        let t = Tracker::default();
        let mut st = state_at(100);
        st.n_trend = 1;
        st.stall_count = 2;
        let v = t.verify(100, Case::Hold, &st);
        assert_eq!(v, Verdict { n_cur: 102, rule1: false, rule2: true });

        // through step: three empty spectra in a row with a rising history
        let mut st = state_at(100);
        st.bpm_history = (0..20).map(|i| 100.0 + 4.0 * i as f64).collect();
        let empty = spectrum_with(&[]);
        let mut outs = Vec::new();
        for w in 0..3 {
            let (est, next) = t.step(w, &empty, &st);
            outs.push(est);
            st = next;
        }
        assert_eq!(outs.iter().map(|e| e.rule2).collect::<Vec<_>>(), vec![false, false, true]);
        assert_eq!(outs[2].bin, 102);
        assert_eq!(st.delta_s, 20);
        assert_eq!(st.stall_count, 3);

        // a real peak brings the search width back
        let s = spectrum_with(&[(103, 1.0)]);
        let (est, st) = t.step(3, &s, &st);
        assert_eq!(est.case, Case::Nearest);
        assert_eq!((st.delta_s, st.stall_count), (16, 0));
    }

    #[test]
    fn skip_verify_passes_selection_through() {
        let t = Tracker::new(TrackerParams { verify: false, ..TrackerParams::default() });
        assert_eq!(t.verify(130, Case::Nearest, &state_at(100)).n_cur, 130);
    }

    #[test]
    fn trend_examples() {
        let t = Tracker::default();
        let mut st = state_at(100);
        st.bpm_history = vec![120.0; 20];
        assert_eq!(t.update_trend(&st), 0);
        st.bpm_history = vec![120.0, 140.0];
        assert_eq!(t.update_trend(&st), 0);
        // an exact line extrapolates by one slope step
        st.bpm_history = (0..20).map(|i| 90.0 + 2.0 * i as f64).collect();
        assert_eq!(t.update_trend(&st), 0);
        st.bpm_history = (0..20).map(|i| 90.0 + 3.0 * i as f64).collect();
        assert_eq!(t.update_trend(&st), 1);
        st.bpm_history = (0..30).map(|i| 150.0 - 3.5 * i as f64).collect();
        assert_eq!(t.update_trend(&st), -1);
    }

    #[test]
    fn cubic_reproduces_cubics() {
        let f = |x: f64| 0.01 * x.powi(3) - 0.3 * x * x + 2.0 * x + 100.0;
        for n in [4usize, 7, 20] {
            let y: Vec<f64> = (1..=n).map(|i| f(i as f64)).collect();
            let p = cubic_extrapolate(&y).unwrap();
            assert!((p - f(n as f64 + 1.0)).abs() < 1e-8, "n={n}");
        }
    }

    #[test]
    fn step_is_deterministic() {
        let t = Tracker::default();
        let s = spectrum_with(&[(103, 1.0), (205, 0.5), (90, 0.4)]);
        let st = state_at(100);
        assert_eq!(t.step(1, &s, &st), t.step(1, &s, &st));
        let (est, _) = t.step(1, &s, &st);
        assert_eq!(est.bin, 103);
        assert_eq!(est.case, Case::HarmonicPair);
        assert!(!est.rule1 && !est.rule2);
    }
}
