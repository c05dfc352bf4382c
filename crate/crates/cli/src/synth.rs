use std::fmt::Write as _;

use anyhow::{bail, Context, Result};
use troika_core::ingest::{ArtifactTone, PiecewiseLinear, SynthSpec};

/// Parses `t:v,t:v,...`, or a bare value for a constant trace.
pub fn parse_trace(s: &str) -> Result<PiecewiseLinear> {
    let s = s.trim();
    if !s.contains(':') {
        let v: f64 = s.parse().with_context(|| format!("bad value {s:?}"))?;
        return Ok(PiecewiseLinear::constant(v));
    }
    let mut knots = Vec::new();
    for part in s.split(',') {
        let (t, v) = part
            .split_once(':')
            .with_context(|| format!("expected time:value, got {part:?}"))?;
        let t: f64 = t.trim().parse().with_context(|| format!("bad time {t:?}"))?;
        let v: f64 = v.trim().parse().with_context(|| format!("bad value {v:?}"))?;
        knots.push((t, v));
    }
    Ok(PiecewiseLinear::new(knots)?)
}

/// Parses `FREQS[/AMPLITUDE[/START_S]]`, with `FREQS` in Hz as for [`parse_trace`].
pub fn parse_tone(s: &str) -> Result<ArtifactTone> {
    let mut parts = s.split('/');
    let freq = parse_trace(parts.next().unwrap_or_default())?;
    let amplitude = match parts.next() {
        Some(a) => a.trim().parse().with_context(|| format!("bad tone amplitude {a:?}"))?,
        None => 1.0,
    };
    let start_s = match parts.next() {
        Some(a) => a.trim().parse().with_context(|| format!("bad tone start {a:?}"))?,
        None => 0.0,
    };
    if parts.next().is_some() {
        bail!("tone spec has too many fields: {s:?}");
    }
    Ok(ArtifactTone {
        freq_hz: freq,
        amplitude,
        start_s,
        ..ArtifactTone::steady(0.0, 0.0)
    })
}

/// Per-window mean of the construction heart rate, as a truth CSV.
pub fn truth_csv(spec: &SynthSpec, window_s: f64, step_s: f64) -> String {
    let mut out = String::from("window_index,bpm\n");
    let mut i = 0;
    loop {
        let start = i as f64 * step_s;
        let end = start + window_s;
        if end > spec.duration_s + 1e-9 {
            break;
        }
        let bpm = spec.hr_trace.integral(start, end) / window_s;
        let _ = writeln!(out, "{i},{bpm:.6}");
        i += 1;
    }
    out
}
