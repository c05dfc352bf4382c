//! Per-recording orchestration: filtering, windowing, the per-window chain and
//! ground-truth attachment.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::{windows, Recording, Window};
use crate::metrics::{ecg_ground_truth, HrEstimate};
use crate::preprocess::{fir_zero_delay, second_difference, FilterSpec};
use crate::ssa::{accel_dominant_bins, refine_exclusions, SsaAnalysis, SsaConfig};
use crate::ssr::{build_dictionary, BandMargins, Dictionary, FocussParams, FocussSolver, Periodogram, Spectrum};
use crate::tracker::{Case, Tracker, TrackerParams, TrackerState};

/// Windows decomposed concurrently before the sequential tracking pass.
const SSA_BATCH: usize = 16;

/// How the tracker picks its starting bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitMode {
    /// The first window is low-motion: take its highest peak.
    #[default]
    Rest,
    /// No rest period: skip peaks near accelerometer-dominant frequencies.
    AccelMasked,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub fs: f64,
    pub window_s: f64,
    pub step_s: f64,
    pub filter_taps: usize,
    pub ssa: SsaConfig,
    pub focuss: FocussParams,
    pub tracker: TrackerParams,
    pub skip_ssa: bool,
    pub use_periodogram: bool,
    pub init_mode: InitMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            fs: 125.0,
            window_s: 8.0,
            step_s: 2.0,
            filter_taps: 251,
            ssa: SsaConfig::default(),
            focuss: FocussParams::default(),
            tracker: TrackerParams::default(),
            skip_ssa: false,
            use_periodogram: false,
            init_mode: InitMode::Rest,
        }
    }
}

impl RunConfig {
    pub fn n_bins(&self) -> usize {
        self.ssa.n_bins
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("fs", self.fs),
            ("window", self.window_s),
            ("step", self.step_s),
            ("p", self.focuss.p),
            ("eta ratio", self.tracker.eta_ratio),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(*v > 0.0)) {
            return Err(Error::param(format!("{name} must be positive, got {v}")));
        }
        let counts = [
            ("L", self.ssa.window_len),
            ("delta", self.ssa.delta),
            ("N", self.ssa.n_bins),
            ("iters", self.focuss.iters),
            ("delta_s", self.tracker.delta_s),
            ("theta", self.tracker.theta),
            ("tau", self.tracker.tau),
            ("h", self.tracker.stall_windows),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::param(format!("{name} must be positive")));
        }
        if self.step_s > self.window_s {
            return Err(Error::param("step must not exceed the window length"));
        }
        crate::ingest::samples_for(self.window_s, self.fs)?;
        crate::ingest::samples_for(self.step_s, self.fs)?;
        self.focuss.validate()
    }

    /// Step longer than half a window; allowed but outside the intended regime.
    pub fn step_exceeds_half_window(&self) -> bool {
        self.step_s > self.window_s / 2.0
    }

    fn window_samples(&self) -> usize {
        (self.window_s * self.fs).round() as usize
    }
}

/// What happened in one window, beyond the estimate itself.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowTrace {
    pub estimate: HrEstimate,
    pub t_start_s: f64,
    /// Every SSA component matched the accelerometer; the raw window was used.
    pub ssa_all_excluded: bool,
}

/// Reusable per-configuration state: filter taps, dictionary, FFT plans.
#[derive(Debug, Clone)]
pub struct Pipeline {
    cfg: RunConfig,
    taps: Vec<f64>,
    dict: Option<Dictionary>,
    fft: Periodogram,
    tracker: Tracker,
}

impl Pipeline {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let taps = FilterSpec {
            taps: cfg.filter_taps,
            ..FilterSpec::ppg_band(cfg.fs)
        }
        .design()?;
        let rows = cfg.window_samples() - 2;
        let dict = if cfg.use_periodogram {
            None
        } else {
            Some(build_dictionary(rows, cfg.n_bins(), cfg.fs, BandMargins::default_for(cfg.n_bins(), cfg.fs))?)
        };
        Ok(Self {
            fft: Periodogram::new(cfg.n_bins(), cfg.fs),
            tracker: Tracker::new(cfg.tracker),
            taps,
            dict,
            cfg,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    /// Bandpasses every PPG and accelerometer channel; ECG is left untouched.
    pub fn filter(&self, rec: &Recording) -> Result<Recording> {
        rec.validate()?;
        let f = |x: &[f64]| fir_zero_delay(x, &self.taps);
        Ok(Recording {
            subject_id: rec.subject_id.clone(),
            fs: rec.fs,
            ppg: f(&rec.ppg)?,
            acc_x: f(&rec.acc_x)?,
            acc_y: f(&rec.acc_y)?,
            acc_z: f(&rec.acc_z)?,
            ecg: rec.ecg.clone(),
        })
    }

    fn check_rate(&self, rec: &Recording) -> Result<()> {
        if (rec.fs - self.cfg.fs).abs() > 1e-9 {
            return Err(Error::param(format!(
                "recording sampled at {} Hz, pipeline configured for {} Hz",
                rec.fs, self.cfg.fs
            )));
        }
        Ok(())
    }

    fn spectrum_of(&self, window_index: usize, y: &[f64]) -> Result<Spectrum> {
        let diff = second_difference(y)?;
        match &self.dict {
            Some(dict) => FocussSolver::new(dict, self.cfg.focuss)?
                .spectrum(&diff)
                .map_err(|e| e.in_window(window_index)),
            None => self.fft.compute(&diff),
        }
    }

    /// Cleansed PPG for one window given the previous HR bin.
    fn cleansed(&self, w: &Window<'_>, analysis: Option<&SsaAnalysis>, n_prev: Option<usize>) -> Result<(Vec<f64>, bool)> {
        match analysis {
            None => Ok((w.ppg.to_vec(), false)),
            Some(a) => {
                let f_acc = accel_dominant_bins(w.acc, self.cfg.n_bins())?;
                let exclude = refine_exclusions(&f_acc, n_prev, self.cfg.ssa.delta);
                let out = a.cleanse(&exclude);
                Ok((out.series, out.all_excluded))
            }
        }
    }

    fn analyze(&self, w: &Window<'_>) -> Result<Option<SsaAnalysis>> {
        if self.cfg.skip_ssa || w.ppg.iter().all(|&v| v == 0.0) {
            return Ok(None);
        }
        SsaAnalysis::new(w.ppg, &self.cfg.ssa).map(Some)
    }

    fn initial_state(&self, w: &Window<'_>, spectrum: &Spectrum) -> Result<TrackerState> {
        match self.cfg.init_mode {
            InitMode::Rest => self.tracker.initialize(spectrum),
            InitMode::AccelMasked => {
                let f_acc = accel_dominant_bins(w.acc, self.cfg.n_bins())?;
                self.tracker.initialize_excluding(spectrum, &f_acc, self.cfg.ssa.delta)
            }
        }
    }

    /// Runs the whole chain over one recording.
    ///
    /// `truth` overrides ECG-derived ground truth per window index.
    pub fn process(&self, rec: &Recording, truth: Option<&BTreeMap<usize, f64>>) -> Result<Vec<WindowTrace>> {
        self.check_rate(rec)?;
        let filtered = self.filter(rec)?;
        let ws = windows(&filtered, self.cfg.window_s, self.cfg.step_s)?;
        // ECG windows come from the unfiltered recording
        let raw_ws = windows(rec, self.cfg.window_s, self.cfg.step_s)?;

        let mut out = Vec::with_capacity(ws.len());
        let mut state: Option<TrackerState> = None;
        for (batch, raw_batch) in ws.chunks(SSA_BATCH).zip(raw_ws.chunks(SSA_BATCH)) {
            let analyses: Vec<Option<SsaAnalysis>> = batch
                .par_iter()
                .map(|w| self.analyze(w))
                .collect::<Result<_>>()?;

            for ((w, raw), analysis) in batch.iter().zip(raw_batch).zip(&analyses) {
                let (y, all_excluded) = self.cleansed(w, analysis.as_ref(), state.as_ref().map(|s| s.n_prev))?;
                let spectrum = self.spectrum_of(w.index, &y)?;

                let mut estimate = match &state {
                    None => {
                        let s = self.initial_state(w, &spectrum)?;
                        let est = HrEstimate {
                            window_index: w.index,
                            bin: s.n_prev,
                            bpm_est: spectrum.bpm(s.n_prev),
                            bpm_true: None,
                            case: Case::Init,
                            rule1: false,
                            rule2: false,
                        };
                        state = Some(s);
                        est
                    }
                    Some(prev) => {
                        let (est, next) = self.tracker.step(w.index, &spectrum, prev);
                        state = Some(next);
                        est
                    }
                };

                estimate.bpm_true = match truth {
                    Some(map) => map.get(&w.index).copied(),
                    None => match raw.ecg {
                        Some(ecg) => ecg_ground_truth(ecg, rec.fs)?,
                        None => None,
                    },
                };
                out.push(WindowTrace {
                    estimate,
                    t_start_s: w.start_s(),
                    ssa_all_excluded: all_excluded,
                });
            }
        }
        Ok(out)
    }

    /// Spectrum the tracker would see for one window, given a previous HR bin.
    pub fn window_spectrum(&self, rec: &Recording, window_index: usize, n_prev: Option<usize>) -> Result<Spectrum> {
        self.check_rate(rec)?;
        let filtered = self.filter(rec)?;
        let ws = windows(&filtered, self.cfg.window_s, self.cfg.step_s)?;
        let w = ws.get(window_index).ok_or_else(|| {
            Error::param(format!("window {window_index} out of range (recording has {})", ws.len()))
        })?;
        let analysis = self.analyze(w)?;
        let (y, _) = self.cleansed(w, analysis.as_ref(), n_prev)?;
        self.spectrum_of(window_index, &y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{generate_synthetic, PiecewiseLinear, SynthSpec};

    #[test]
    fn config_validation() {
        assert!(RunConfig::default().validate().is_ok());
        let bad = RunConfig { step_s: 9.0, ..RunConfig::default() };
        assert!(bad.validate().is_err());
        let bad = RunConfig { window_s: 8.003, ..RunConfig::default() };
        assert!(bad.validate().is_err());
        let wide = RunConfig { step_s: 5.0, ..RunConfig::default() };
        assert!(wide.validate().is_ok() && wide.step_exceeds_half_window());
    }

    #[test]
    fn rate_mismatch_is_rejected() {
        let spec = SynthSpec {
            duration_s: 20.0,
            fs: 100.0,
            hr_trace: PiecewiseLinear::constant(80.0),
            tones: vec![],
            noise_std: 0.0,
            seed: 1,
        };
        let rec = generate_synthetic(&spec).unwrap();
        let p = Pipeline::new(RunConfig::default()).unwrap();
        assert!(p.process(&rec, None).is_err());
    }
}
