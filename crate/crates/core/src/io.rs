//! Curve and trace files.
//!
//! A `.curve` file holds one JSON record; a trace is JSON lines, a header record
//! followed by one record per frame. Writes go through a temporary file and a rename.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::curve::{DiscreteCurve, GeometricReport};
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::thickness;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub format_version: u32,
    pub closed: bool,
    pub tube_radius: f64,
    pub points: Vec<[f64; 3]>,
    /// Component starts after the first, for multi-component curves.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub breaks: Vec<usize>,
}

impl CurveRecord {
    pub fn from_curve(c: &DiscreteCurve) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            closed: c.is_closed(),
            tube_radius: c.tube_radius(),
            points: c.points().iter().map(|p| [p.x, p.y, p.z]).collect(),
            breaks: c.breaks().to_vec(),
        }
    }

    pub fn to_curve(&self) -> Result<DiscreteCurve> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        let pts = self.points.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect();
        DiscreteCurve::with_breaks(pts, self.closed, self.tube_radius, self.breaks.clone())
    }
}

/// Write `bytes` next to `path` and rename over it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".{}.tmp", std::process::id()));
    let tmp: PathBuf = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::Io(e)
    })
}

pub fn curve_to_string(c: &DiscreteCurve) -> Result<String> {
    Ok(serde_json::to_string_pretty(&CurveRecord::from_curve(c))? + "\n")
}

pub fn curve_from_str(s: &str) -> Result<DiscreteCurve> {
    serde_json::from_str::<CurveRecord>(s)?.to_curve()
}

pub fn write_curve(path: &Path, c: &DiscreteCurve) -> Result<()> {
    write_atomic(path, curve_to_string(c)?.as_bytes())
}

pub fn read_curve(path: &Path) -> Result<DiscreteCurve> {
    curve_from_str(&fs::read_to_string(path)?)
}

/// Header line of a trace file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format_version: u32,
    pub closed: bool,
    pub tube_radius: f64,
    pub seed: u64,
    /// Name of the pipeline stage that produced the trace.
    pub stage: String,
    /// Settings of the producing run, free-form.
    #[serde(default)]
    pub config: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct FrameRecord {
    iteration: usize,
    report: GeometricReport,
    points: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    breaks: Vec<usize>,
}

/// One sampled state of a deformation.
#[derive(Clone, Debug)]
pub struct TraceFrame {
    pub iteration: usize,
    pub curve: DiscreteCurve,
    pub report: GeometricReport,
}

/// Frames of a candidate isotopy with per-frame reports.
#[derive(Clone, Debug)]
pub struct IsotopyTrace {
    pub header: TraceHeader,
    pub frames: Vec<TraceFrame>,
}

/// Relative tolerance for a stored report to agree with its frame on load.
const REPORT_CHECK_TOLERANCE: f64 = 1e-6;

impl IsotopyTrace {
    /// Build a trace from `(iteration, curve)` pairs, computing every report.
    pub fn from_frames(frames: Vec<(usize, DiscreteCurve)>, seed: u64, stage: &str, config: serde_json::Value) -> Result<Self> {
        let first = frames.first().ok_or(Error::EmptyTrace)?;
        let header = TraceHeader {
            format_version: FORMAT_VERSION,
            closed: first.1.is_closed(),
            tube_radius: first.1.tube_radius(),
            seed,
            stage: stage.to_string(),
            config,
        };
        let frames = frames
            .into_iter()
            .map(|(iteration, curve)| TraceFrame {
                iteration,
                report: thickness::report(&curve),
                curve,
            })
            .collect();
        let t = Self { header, frames };
        t.check_shared()?;
        Ok(t)
    }

    pub fn curves(&self) -> Vec<DiscreteCurve> {
        self.frames.iter().map(|f| f.curve.clone()).collect()
    }

    fn check_shared(&self) -> Result<()> {
        for f in &self.frames {
            if f.curve.is_closed() != self.header.closed || f.curve.tube_radius() != self.header.tube_radius {
                return Err(Error::InvalidInput(format!(
                    "frame at iteration {} does not match the trace's closed flag and tube radius",
                    f.iteration
                )));
            }
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = serde_json::to_string(&self.header)? + "\n";
        for f in &self.frames {
            let rec = FrameRecord {
                iteration: f.iteration,
                report: f.report.clone(),
                points: f.curve.points().iter().map(|p| [p.x, p.y, p.z]).collect(),
                breaks: f.curve.breaks().to_vec(),
            };
            out += &serde_json::to_string(&rec)?;
            out.push('\n');
        }
        Ok(out)
    }

    /// Parse a trace, re-deriving the report of every tenth frame as a consistency check.
    pub fn from_jsonl<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
        let header: TraceHeader = match lines.next() {
            Some(l) => serde_json::from_str(&l?)?,
            None => return Err(Error::EmptyTrace),
        };
        if header.format_version != FORMAT_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported format_version {}",
                header.format_version
            )));
        }
        let mut frames = Vec::new();
        for (k, line) in lines.enumerate() {
            let rec: FrameRecord = serde_json::from_str(&line?)?;
            let pts = rec.points.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect();
            let curve = DiscreteCurve::with_breaks(pts, header.closed, header.tube_radius, rec.breaks)?;
            if k % 10 == 0 {
                let fresh = thickness::report(&curve);
                let close = |a: f64, b: f64| (a == b) || (a - b).abs() <= REPORT_CHECK_TOLERANCE * a.abs().max(1.0);
                if !close(fresh.length, rec.report.length) || !close(fresh.thickness, rec.report.thickness) {
                    return Err(Error::InvalidInput(format!(
                        "stored report of frame {} disagrees with its curve",
                        rec.iteration
                    )));
                }
            }
            frames.push(TraceFrame {
                iteration: rec.iteration,
                curve,
                report: rec.report,
            });
        }
        if frames.is_empty() {
            return Err(Error::EmptyTrace);
        }
        let t = Self { header, frames };
        t.check_shared()?;
        Ok(t)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_jsonl()?.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_jsonl(BufReader::new(fs::File::open(path)?))
    }
}
