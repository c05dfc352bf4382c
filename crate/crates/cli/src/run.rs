use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use troika_core::ingest::load_recording;
use troika_core::metrics::{load_truth_csv, HrEstimate, MetricsReport};
use troika_core::pipeline::{Pipeline, RunConfig, WindowTrace};

const TRUTH_SUFFIX: &str = ".bpm_truth.csv";

/// One recording CSV and its optional ground-truth override.
#[derive(Debug, Clone)]
pub struct Input {
    pub stem: String,
    pub path: PathBuf,
    pub truth: Option<PathBuf>,
}

/// Recording CSVs in `dir`, sorted by name. Truth files are paired, not listed.
pub fn discover(dir: &Path) -> Result<Vec<Input>> {
    let entries = fs::read_dir(dir).with_context(|| format!("reading input directory {}", dir.display()))?;
    let mut names: Vec<String> = Vec::new();
    for entry in entries {
        let entry = entry?;
        if !entry.file_type()?.is_file() {
            continue;
        }
        if let Some(name) = entry.file_name().to_str() {
            names.push(name.to_string());
        }
    }
    names.sort();
    let inputs: Vec<Input> = names
        .iter()
        .filter(|n| n.ends_with(".csv") && !n.ends_with(TRUTH_SUFFIX))
        .map(|n| {
            let stem = n.trim_end_matches(".csv").to_string();
            let truth = dir.join(format!("{stem}{TRUTH_SUFFIX}"));
            Input {
                path: dir.join(n),
                truth: truth.is_file().then_some(truth),
                stem,
            }
        })
        .collect();
    if inputs.is_empty() {
        bail!("no recording CSV files in {}", dir.display());
    }
    Ok(inputs)
}

pub fn process_input(pipeline: &Pipeline, input: &Input) -> Result<Vec<WindowTrace>> {
    let rec = load_recording(&input.path, pipeline.config().fs)?;
    let truth: Option<BTreeMap<usize, f64>> = match &input.truth {
        Some(p) => Some(load_truth_csv(p)?),
        None => None,
    };
    Ok(pipeline.process(&rec, truth.as_ref())?)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

pub fn trace_csv(traces: &[WindowTrace]) -> String {
    let mut out = String::from("window_index,t_start_s,bpm_est,bpm_true,abs_err,case,rule1_fired,rule2_fired\n");
    for t in traces {
        let e = &t.estimate;
        let _ = writeln!(
            out,
            "{},{:.3},{:.4},{},{},{},{},{}",
            e.window_index,
            t.t_start_s,
            e.bpm_est,
            fmt_opt(e.bpm_true),
            fmt_opt(e.abs_error()),
            e.case.number(),
            u8::from(e.rule1),
            u8::from(e.rule2),
        );
    }
    out
}

pub fn metrics_json(report: &MetricsReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)? + "\n")
}

/// Outcome of `run` over a directory.
pub struct RunSummary {
    pub per_recording: Vec<(String, Vec<HrEstimate>)>,
    pub failures: Vec<(String, anyhow::Error)>,
}

impl RunSummary {
    pub fn aggregate(&self) -> Result<MetricsReport> {
        let all: Vec<Vec<HrEstimate>> = self.per_recording.iter().map(|(_, e)| e.clone()).collect();
        Ok(MetricsReport::aggregate(&all)?)
    }
}

/// Processes every input in parallel; failures are collected, not fatal.
pub fn run_all(cfg: &RunConfig, inputs: &[Input]) -> Result<(RunSummary, Vec<Vec<WindowTrace>>)> {
    let pipeline = Pipeline::new(cfg.clone())?;
    let results: Vec<Result<Vec<WindowTrace>>> = inputs.par_iter().map(|i| process_input(&pipeline, i)).collect();
    let mut summary = RunSummary {
        per_recording: Vec::new(),
        failures: Vec::new(),
    };
    let mut traces = Vec::new();
    for (input, r) in inputs.iter().zip(results) {
        match r {
            Ok(t) => {
                summary
                    .per_recording
                    .push((input.stem.clone(), t.iter().map(|w| w.estimate.clone()).collect()));
                traces.push(t);
            }
            Err(e) => summary.failures.push((input.stem.clone(), e)),
        }
    }
    Ok((summary, traces))
}

pub fn write_outputs(out_dir: &Path, summary: &RunSummary, traces: &[Vec<WindowTrace>]) -> Result<()> {
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    for ((stem, estimates), t) in summary.per_recording.iter().zip(traces) {
        let trace_path = out_dir.join(format!("{stem}.trace.csv"));
        fs::write(&trace_path, trace_csv(t)).with_context(|| format!("writing {}", trace_path.display()))?;
        let report = MetricsReport::from_estimates(estimates)?;
        let metrics_path = out_dir.join(format!("{stem}.metrics.json"));
        fs::write(&metrics_path, metrics_json(&report)?)
            .with_context(|| format!("writing {}", metrics_path.display()))?;
    }
    let agg_path = out_dir.join("aggregate.metrics.json");
    fs::write(&agg_path, metrics_json(&summary.aggregate()?)?)
        .with_context(|| format!("writing {}", agg_path.display()))?;
    Ok(())
}

/// Estimates and truths from a trace CSV written by `run`.
pub fn read_trace(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .with_context(|| format!("{}: missing column {name}", path.display()))
    };
    let (ie, it) = (col("bpm_est")?, col("bpm_true")?);
    let (mut est, mut truth) = (Vec::new(), Vec::new());
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let get = |j: usize| fields.get(j).map(|s| s.trim()).unwrap_or("");
        let t = get(it);
        if t.is_empty() {
            continue;
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .with_context(|| format!("{}:{}: bad number {s:?}", path.display(), i + 2))
        };
        est.push(parse(get(ie))?);
        truth.push(parse(t)?);
    }
    Ok((est, truth))
}
