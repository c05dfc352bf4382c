//! Recordings on disk, analysis windows, and synthetic test recordings.

mod synth;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

pub use synth::{generate_synthetic, pulse_train_std, ArtifactTone, PiecewiseLinear, SynthSpec};

use crate::error::{Error, Result};

/// Synchronised PPG, 3-axis acceleration and optional ECG at one sampling rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub subject_id: String,
    pub fs: f64,
    pub ppg: Vec<f64>,
    pub acc_x: Vec<f64>,
    pub acc_y: Vec<f64>,
    pub acc_z: Vec<f64>,
    pub ecg: Option<Vec<f64>>,
}

impl Recording {
    pub fn len(&self) -> usize {
        self.ppg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ppg.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.fs
    }

    /// Checks the channel-length and sampling-rate invariants.
    pub fn validate(&self) -> Result<()> {
        if !(self.fs > 0.0) || !self.fs.is_finite() {
            return Err(Error::param(format!("sampling rate must be > 0, got {}", self.fs)));
        }
        let n = self.ppg.len();
        let mut lens = vec![self.acc_x.len(), self.acc_y.len(), self.acc_z.len()];
        if let Some(ecg) = &self.ecg {
            lens.push(ecg.len());
        }
        if lens.iter().any(|&l| l != n) {
            return Err(Error::length(format!(
                "channel lengths differ: ppg={n}, others={lens:?}"
            )));
        }
        Ok(())
    }

    /// Serialises to the canonical CSV layout (`ppg,acc_x,acc_y,acc_z[,ecg]`).
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.len() * 64);
        out.push_str("ppg,acc_x,acc_y,acc_z");
        if self.ecg.is_some() {
            out.push_str(",ecg");
        }
        out.push('\n');
        for i in 0..self.len() {
            let _ = write!(
                out,
                "{},{},{},{}",
                self.ppg[i], self.acc_x[i], self.acc_y[i], self.acc_z[i]
            );
            if let Some(ecg) = &self.ecg {
                let _ = write!(out, ",{}", ecg[i]);
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Column {
    Ppg,
    AccX,
    AccY,
    AccZ,
    Ecg,
}

impl Column {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "ppg" => Column::Ppg,
            "acc_x" => Column::AccX,
            "acc_y" => Column::AccY,
            "acc_z" => Column::AccZ,
            "ecg" => Column::Ecg,
            _ => return None,
        })
    }
}

/// Loads a recording CSV. The subject id is taken from the file stem.
pub fn load_recording(path: &Path, fs: f64) -> Result<Recording> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let subject_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_recording(&text, fs, subject_id)
}

/// Parses CSV text with header `ppg,acc_x,acc_y,acc_z[,ecg]`.
///
/// Line numbers in errors are 1-based and count the header as line 1.
pub fn parse_recording(text: &str, fs: f64, subject_id: impl Into<String>) -> Result<Recording> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        line: 1,
        message: "missing header row".into(),
    })?;

    let mut columns = Vec::new();
    for name in header.split(',') {
        let name = name.trim();
        let col = Column::from_name(name).ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("unknown column {name:?}"),
        })?;
        if columns.contains(&col) {
            return Err(Error::Parse {
                line: 1,
                message: format!("duplicate column {name:?}"),
            });
        }
        columns.push(col);
    }
    for required in [Column::Ppg, Column::AccX, Column::AccY, Column::AccZ] {
        if !columns.contains(&required) {
            return Err(Error::Parse {
                line: 1,
                message: format!("missing required column {required:?}"),
            });
        }
    }
    let has_ecg = columns.contains(&Column::Ecg);

    let mut rec = Recording {
        subject_id: subject_id.into(),
        fs,
        ppg: Vec::new(),
        acc_x: Vec::new(),
        acc_y: Vec::new(),
        acc_z: Vec::new(),
        ecg: has_ecg.then(Vec::new),
    };

    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != columns.len() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {} columns, found {}", columns.len(), cells.len()),
            });
        }
        for (col, cell) in columns.iter().zip(&cells) {
            let value: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("non-numeric cell {:?} in column {col:?}", cell.trim()),
            })?;
            match col {
                Column::Ppg => rec.ppg.push(value),
                Column::AccX => rec.acc_x.push(value),
                Column::AccY => rec.acc_y.push(value),
                Column::AccZ => rec.acc_z.push(value),
                Column::Ecg => rec.ecg.as_mut().expect("ecg column present").push(value),
            }
        }
    }

    rec.validate()?;
    Ok(rec)
}

/// One analysis frame borrowed from a [`Recording`].
#[derive(Debug, Clone, Copy)]
pub struct Window<'a> {
    pub index: usize,
    pub start_sample: usize,
    pub fs: f64,
    pub ppg: &'a [f64],
    pub acc: [&'a [f64]; 3],
    pub ecg: Option<&'a [f64]>,
}

impl Window<'_> {
    pub fn len(&self) -> usize {
        self.ppg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ppg.is_empty()
    }

    pub fn start_s(&self) -> f64 {
        self.start_sample as f64 / self.fs
    }
}

/// Converts a duration to a whole number of samples, rejecting fractional results.
pub fn samples_for(seconds: f64, fs: f64) -> Result<usize> {
    let exact = seconds * fs;
    let n = exact.round();
    if !(seconds > 0.0) || (exact - n).abs() > 1e-9 * exact.abs().max(1.0) {
        return Err(Error::param(format!(
            "{seconds} s at {fs} Hz is not a positive whole number of samples"
        )));
    }
    Ok(n as usize)
}

/// Slices a recording into `window_s`-second frames advanced by `step_s` seconds.
///
/// Trailing samples that do not fill a whole window are dropped. A step longer
/// than half the window is allowed; callers that care should warn about it.
pub fn windows(rec: &Recording, window_s: f64, step_s: f64) -> Result<Vec<Window<'_>>> {
    let len = samples_for(window_s, rec.fs)?;
    let step = samples_for(step_s, rec.fs)?;
    if rec.len() < len {
        return Err(Error::EmptyInput(format!(
            "recording has {} samples, one window needs {len}",
            rec.len()
        )));
    }
    let count = (rec.len() - len) / step + 1;
    Ok((0..count)
        .map(|index| {
            let start = index * step;
            let range = start..start + len;
            Window {
                index,
                start_sample: start,
                fs: rec.fs,
                ppg: &rec.ppg[range.clone()],
                acc: [
                    &rec.acc_x[range.clone()],
                    &rec.acc_y[range.clone()],
                    &rec.acc_z[range.clone()],
                ],
                ecg: rec.ecg.as_ref().map(|e| &e[range]),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(seconds: f64, fs: f64) -> Recording {
        let n = (seconds * fs).round() as usize;
        Recording {
            subject_id: "t".into(),
            fs,
            ppg: vec![0.0; n],
            acc_x: vec![0.0; n],
            acc_y: vec![0.0; n],
            acc_z: vec![0.0; n],
            ecg: None,
        }
    }

    #[test]
    fn parses_four_columns_without_ecg() {
        let rec = parse_recording("ppg,acc_x,acc_y,acc_z\n1,2,3,4\n5,6,7,8\n9,10,11,12\n", 125.0, "s")
            .unwrap();
        assert_eq!(rec.len(), 3);
        assert!(rec.ecg.is_none());
        assert_eq!(rec.acc_z, vec![4.0, 8.0, 12.0]);
    }

    #[test]
    fn parses_ecg_column() {
        let rec = parse_recording("ppg,acc_x,acc_y,acc_z,ecg\n1,2,3,4,5\n1.5,2,3,4,-0.25\n", 125.0, "s")
            .unwrap();
        assert_eq!(rec.ecg.as_deref(), Some(&[5.0, -0.25][..]));
    }

    #[test]
    fn non_numeric_cell_reports_line() {
        let err = parse_recording("ppg,acc_x,acc_y,acc_z\n1.0,abc,0,0\n", 125.0, "s").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn ragged_row_reports_line() {
        let err = parse_recording("ppg,acc_x,acc_y,acc_z\n1,2,3,4\n1,2,3\n", 125.0, "s").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn unknown_header_is_rejected() {
        let err = parse_recording("ppg,acc_x,acc_y,foo\n", 125.0, "s").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn csv_round_trip() {
        let mut rec = flat(0.1, 125.0);
        rec.ppg[3] = 0.125;
        rec.ecg = Some((0..rec.len()).map(|i| i as f64 * 0.5).collect());
        let back = parse_recording(&rec.to_csv(), 125.0, "t").unwrap();
        assert_eq!(back, rec);
    }

    #[test]
    fn window_count_for_five_minutes() {
        let rec = flat(300.0, 125.0);
        let ws = windows(&rec, 8.0, 2.0).unwrap();
        assert_eq!(ws.len(), 147);
        for (i, w) in ws.iter().enumerate() {
            assert_eq!(w.index, i);
            assert_eq!(w.start_sample, i * 250);
            assert_eq!(w.len(), 1000);
        }
    }

    #[test]
    fn exactly_one_window() {
        assert_eq!(windows(&flat(8.0, 125.0), 8.0, 2.0).unwrap().len(), 1);
    }

    #[test]
    fn short_recording_is_empty_input() {
        let err = windows(&flat(7.9, 125.0), 8.0, 2.0).unwrap_err();
        assert!(matches!(err, Error::EmptyInput(_)));
    }

    #[test]
    fn fractional_window_rejected() {
        assert!(windows(&flat(10.0, 125.0), 8.001, 2.0).is_err());
    }
}
