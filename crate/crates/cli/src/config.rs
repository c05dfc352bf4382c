use clap::{Args, ValueEnum};
use troika_core::pipeline::{InitMode, RunConfig};
use troika_core::ssa::SsaConfig;
use troika_core::ssr::FocussParams;
use troika_core::tracker::TrackerParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    /// First window is assumed motion-free; take its highest peak.
    Rest,
    /// Skip peaks near accelerometer-dominant frequencies when initializing.
    AccelMasked,
}

/// Pipeline parameters shared by `run`, `spectrum` and `sweep`.
#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// Sampling rate of the input recordings, Hz.
    #[arg(long, default_value_t = 125.0)]
    pub fs: f64,
    /// Window length T, seconds.
    #[arg(long, default_value_t = 8.0)]
    pub window_s: f64,
    /// Window step S, seconds.
    #[arg(long, default_value_t = 2.0)]
    pub step_s: f64,
    /// Bandpass FIR length.
    #[arg(long, default_value_t = 251)]
    pub filter_taps: usize,
    /// SSA embedding length L.
    #[arg(long, default_value_t = 400)]
    pub ssa_len: usize,
    /// Bins kept around the previous HR and its harmonic during SSA grouping.
    #[arg(long, default_value_t = 10)]
    pub delta: usize,
    /// Spectral grid size N.
    #[arg(long, default_value_t = 4096)]
    pub n_bins: usize,
    /// FOCUSS sparsity exponent.
    #[arg(long, default_value_t = 0.8)]
    pub p: f64,
    /// FOCUSS regularization.
    #[arg(long, default_value_t = 0.1)]
    pub lambda: f64,
    /// FOCUSS iterations.
    #[arg(long, default_value_t = 5)]
    pub iters: usize,
    /// Half-width of the tracker search range, bins.
    #[arg(long, default_value_t = 16)]
    pub delta_s: usize,
    /// Peak threshold relative to the range maximum.
    #[arg(long, default_value_t = 0.3)]
    pub eta_ratio: f64,
    /// Largest accepted change between windows, bins.
    #[arg(long, default_value_t = 6)]
    pub theta: usize,
    /// Step applied when a change exceeds theta, bins.
    #[arg(long, default_value_t = 2)]
    pub tau: usize,
    /// Consecutive held windows before the trend nudge applies.
    #[arg(long, default_value_t = 3)]
    pub stall_windows: usize,
    /// Run without SSA cleansing.
    #[arg(long)]
    pub skip_ssa: bool,
    /// Replace FOCUSS with the periodogram.
    #[arg(long)]
    pub use_periodogram: bool,
    /// Accept the selected peak without verification.
    #[arg(long)]
    pub skip_verify: bool,
    #[arg(long, value_enum, default_value_t = InitArg::Rest)]
    pub init_mode: InitArg,
}

impl ConfigArgs {
    pub fn to_config(&self) -> RunConfig {
        RunConfig {
            fs: self.fs,
            window_s: self.window_s,
            step_s: self.step_s,
            filter_taps: self.filter_taps,
            ssa: SsaConfig {
                window_len: self.ssa_len,
                n_bins: self.n_bins,
                delta: self.delta,
                ..SsaConfig::default()
            },
            focuss: FocussParams {
                p: self.p,
                lambda: self.lambda,
                iters: self.iters,
            },
            tracker: TrackerParams {
                delta_s: self.delta_s,
                eta_ratio: self.eta_ratio,
                theta: self.theta,
                tau: self.tau,
                stall_windows: self.stall_windows,
                verify: !self.skip_verify,
                ..TrackerParams::default()
            },
            skip_ssa: self.skip_ssa,
            use_periodogram: self.use_periodogram,
            init_mode: match self.init_mode {
                InitArg::Rest => InitMode::Rest,
                InitArg::AccelMasked => InitMode::AccelMasked,
            },
        }
    }
}
