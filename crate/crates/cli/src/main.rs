//! `troika`: heart-rate tracking from wrist PPG with accelerometer-guided
//! artifact removal.

mod config;
mod run;
mod synth;

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use troika_core::ingest::{generate_synthetic, load_recording, pulse_train_std, SynthSpec};
use troika_core::metrics::MetricsReport;
use troika_core::pipeline::{Pipeline, RunConfig};

use config::ConfigArgs;

#[derive(Debug, Parser)]
#[command(name = "troika", version, about = "Heart-rate estimation from PPG during motion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Process every recording CSV in a directory.
    Run {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Recordings processed concurrently; TROIKA_JOBS overrides.
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Write a synthetic recording with a known heart-rate trace.
    Synth {
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 300.0)]
        duration_s: f64,
        #[arg(long, default_value_t = 125.0)]
        fs: f64,
        /// Heart rate in BPM: a constant or `t:bpm,t:bpm,...`.
        #[arg(long, default_value = "75")]
        hr: String,
        /// Motion tone `HZ[/AMPLITUDE[/START_S]]`, HZ constant or `t:hz,...`. Repeatable.
        #[arg(long)]
        tone: Vec<String>,
        /// PPG noise as SNR against the pulse train, dB.
        #[arg(long, conflicts_with = "noise_std")]
        snr_db: Option<f64>,
        /// PPG noise standard deviation.
        #[arg(long, default_value_t = 0.0)]
        noise_std: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Also write `<stem>.bpm_truth.csv` with the per-window construction rate.
        #[arg(long)]
        truth: bool,
        #[arg(long, default_value_t = 8.0)]
        window_s: f64,
        #[arg(long, default_value_t = 2.0)]
        step_s: f64,
    },
    /// Dump the spectrum the tracker sees for one window as CSV.
    Spectrum {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        window: usize,
        /// Previous HR bin to guard during SSA cleansing.
        #[arg(long)]
        n_prev: Option<usize>,
        /// Output file; stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Recompute metrics from trace CSVs.
    Metrics {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        /// Output file; stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run once per value of one parameter and tabulate the errors.
    Sweep {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// One of L, delta, tau, delta-s.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Run {
            input,
            output,
            jobs,
            config,
        } => {
            let cfg = checked_config(&config)?;
            let inputs = run::discover(&input)?;
            let (summary, traces) = with_jobs(jobs, || run::run_all(&cfg, &inputs))??;
            for (stem, e) in &summary.failures {
                eprintln!("error: {stem}: {e:#}");
            }
            if summary.per_recording.is_empty() {
                bail!("all {} recordings failed", inputs.len());
            }
            run::write_outputs(&output, &summary, &traces)?;
            Ok(if summary.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Synth {
            output,
            duration_s,
            fs,
            hr,
            tone,
            snr_db,
            noise_std,
            seed,
            truth,
            window_s,
            step_s,
        } => {
            let spec = SynthSpec {
                duration_s,
                fs,
                hr_trace: synth::parse_trace(&hr).context("--hr")?,
                tones: tone
                    .iter()
                    .map(|t| synth::parse_tone(t))
                    .collect::<Result<_>>()
                    .context("--tone")?,
                noise_std: match snr_db {
                    Some(db) => pulse_train_std() * 10f64.powf(-db / 20.0),
                    None => noise_std,
                },
                seed,
            };
            let rec = generate_synthetic(&spec)?;
            rec.write_csv(&output)?;
            if truth {
                let stem = output
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .context("output path has no file name")?;
                let path = output.with_file_name(format!("{stem}.bpm_truth.csv"));
                fs::write(&path, synth::truth_csv(&spec, window_s, step_s))
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Spectrum {
            input,
            window,
            n_prev,
            output,
            config,
        } => {
            let cfg = checked_config(&config)?;
            let rec = load_recording(&input, cfg.fs)?;
            let spectrum = Pipeline::new(cfg)?.window_spectrum(&rec, window, n_prev)?;
            let mut out = String::from("bin,hz,s\n");
            for bin in 1..=spectrum.last_physical_bin() {
                let _ = writeln!(out, "{bin},{:.6},{:e}", spectrum.hz(bin), spectrum.at(bin));
            }
            emit(output, &out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Metrics { traces, output } => {
            let (mut est, mut truth) = (Vec::new(), Vec::new());
            let mut per = Vec::new();
            for path in &traces {
                let (e, t) = run::read_trace(path)?;
                per.push(MetricsReport::from_pairs(&e, &t)?);
                est.extend(e);
                truth.extend(t);
            }
            let pooled = MetricsReport::from_pairs(&est, &truth)?;
            let mean = |f: fn(&MetricsReport) -> Option<f64>| {
                let v: Vec<f64> = per.iter().filter_map(f).collect();
                (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
            };
            let report = MetricsReport {
                error1_bpm: mean(|m| m.error1_bpm),
                error2_pct: mean(|m| m.error2_pct),
                ..pooled
            };
            emit(output, &run::metrics_json(&report)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep {
            input,
            output,
            param,
            values,
            jobs,
            config,
        } => {
            let base = checked_config(&config)?;
            let inputs = run::discover(&input)?;
            let mut csv = String::from("value,error1_bpm,error2_pct\n");
            for v in values {
                let cfg = with_param(&base, &param, v)?;
                let (summary, _) = with_jobs(jobs, || run::run_all(&cfg, &inputs))??;
                for (stem, e) in &summary.failures {
                    eprintln!("error: {param}={v}: {stem}: {e:#}");
                }
                let agg = summary.aggregate()?;
                let f = |x: Option<f64>| x.map(|x| format!("{x:.4}")).unwrap_or_default();
                let _ = writeln!(csv, "{v},{},{}", f(agg.error1_bpm), f(agg.error2_pct));
            }
            if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(&output, csv).with_context(|| format!("writing {}", output.display()))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn checked_config(args: &ConfigArgs) -> Result<RunConfig> {
    let cfg = args.to_config();
    cfg.validate()?;
    if cfg.step_exceeds_half_window() {
        eprintln!(
            "warning: step {} s exceeds half the {} s window; consecutive windows overlap little",
            cfg.step_s, cfg.window_s
        );
    }
    Ok(cfg)
}

fn with_param(base: &RunConfig, name: &str, value: usize) -> Result<RunConfig> {
    let mut cfg = base.clone();
    match name {
        "L" | "ssa-len" => cfg.ssa.window_len = value,
        "delta" | "Δ" => cfg.ssa.delta = value,
        "tau" | "τ" => cfg.tracker.tau = value,
        "delta-s" | "delta_s" | "Δs" => cfg.tracker.delta_s = value,
        other => bail!("unknown sweep parameter {other:?}; expected one of L, delta, tau, delta-s"),
    }
    cfg.validate()?;
    Ok(cfg)
}

fn jobs_from_env(flag: Option<usize>) -> Result<Option<usize>> {
    match std::env::var("TROIKA_JOBS") {
        Ok(v) if !v.trim().is_empty() => {
            let n: usize = v.trim().parse().with_context(|| format!("TROIKA_JOBS={v:?}"))?;
            Ok(Some(n))
        }
        _ => Ok(flag),
    }
}

fn with_jobs<T: Send>(flag: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs_from_env(flag)? {
        if n == 0 {
            bail!("jobs must be positive");
        }
        builder = builder.num_threads(n);
    }
    Ok(builder.build()?.install(f))
}

fn emit(path: Option<PathBuf>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(&p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
