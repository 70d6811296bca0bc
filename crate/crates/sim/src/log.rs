//! Versioned CSV tick log.
//!
//! The first line is `# pps-sim-log v1`; the second is the column header.
//! Columns, with `n` joints, body parts `P` and keypoints `K`:
//!
//! | column | unit |
//! |---|---|
//! | `t` | s |
//! | `q_i`, `qdot_i`, `lo_i`, `hi_i` for `i < n` | rad, rad/s |
//! | `a_P` | peak activation of part `P` |
//! | `pc_P_x`, `pc_P_y`, `pc_P_z` | control point, m (empty when undefined) |
//! | `src_P` | keypoint seen by the most active taxel of `P` |
//! | `srcdist_P` | its distance to the nearest taxel of `P`, m |
//! | `d_ee_K`, `d_elbow_K` | keypoint distance to end effector / elbow, m |
//! | `d_P_K` | keypoint distance to the nearest taxel of `P`, m |
//! | `ee_err`, `ee_err_rot` | position error m, orientation error rad |
//! | `avoidance`, `conflict`, `infeasible` | flags, 0 or 1 |
//!
//! Empty cells mean "not available" (occluded keypoint, inactive part).
//! Wall-clock timings are not logged so that reruns are byte-identical.

use std::io::{BufRead, Write};

use pps_core::{Keypoint, TickFlags};

use crate::sim::TickRecord;
use crate::SimError;

pub const LOG_VERSION: &str = "# pps-sim-log v1";

#[derive(Clone, Debug, PartialEq)]
pub struct PartRow {
    pub name: String,
    pub activation: f64,
    pub position: Option<[f64; 3]>,
    pub source: Option<Keypoint>,
    pub source_distance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KeypointRow {
    pub label: Keypoint,
    pub to_ee: Option<f64>,
    pub to_elbow: Option<f64>,
    /// Same order as [`LogRow::parts`].
    pub to_parts: Vec<Option<f64>>,
}

/// One tick as stored in the log.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub parts: Vec<PartRow>,
    pub keypoints: Vec<KeypointRow>,
    pub ee_err: f64,
    pub ee_err_rot: f64,
    pub flags: TickFlags,
}

impl LogRow {
    pub fn from_record(r: &TickRecord) -> Self {
        let v = |x: &nalgebra::DVector<f64>| x.iter().copied().collect::<Vec<_>>();
        LogRow {
            t: r.t,
            q: v(&r.q),
            qdot: v(&r.qdot),
            lo: v(&r.bounds_lo),
            hi: v(&r.bounds_hi),
            parts: r
                .parts
                .iter()
                .map(|p| PartRow {
                    name: p.part.name().to_string(),
                    activation: p.activation,
                    position: p.position.map(|x| [x.x, x.y, x.z]),
                    source: p.source,
                    source_distance: p.source_distance,
                })
                .collect(),
            keypoints: r
                .keypoints
                .iter()
                .map(|k| KeypointRow {
                    label: k.label,
                    to_ee: k.to_ee,
                    to_elbow: k.to_elbow,
                    to_parts: k.to_parts.clone(),
                })
                .collect(),
            ee_err: r.ee_err,
            ee_err_rot: r.ee_err_rot,
            flags: r.flags,
        }
    }

    /// Smallest keypoint-to-taxel distance this tick, if any keypoint is visible.
    pub fn min_taxel_distance(&self) -> Option<f64> {
        self.keypoints
            .iter()
            .flat_map(|k| k.to_parts.iter().flatten())
            .copied()
            .reduce(f64::min)
    }

    pub fn part(&self, name: &str) -> Option<&PartRow> {
        self.parts.iter().find(|p| p.name == name)
    }

    fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        for prefix in ["q", "qdot", "lo", "hi"] {
            h.extend((0..self.q.len()).map(|i| format!("{prefix}_{i}")));
        }
        for p in &self.parts {
            let n = &p.name;
            h.push(format!("a_{n}"));
            h.extend(["x", "y", "z"].iter().map(|c| format!("pc_{n}_{c}")));
            h.push(format!("src_{n}"));
            h.push(format!("srcdist_{n}"));
        }
        for k in &self.keypoints {
            let l = k.label.label();
            h.push(format!("d_ee_{l}"));
            h.push(format!("d_elbow_{l}"));
            h.extend(self.parts.iter().map(|p| format!("d_{}_{l}", p.name)));
        }
        h.extend(["ee_err", "ee_err_rot", "avoidance", "conflict", "infeasible"].map(String::from));
        h
    }

    fn fields(&self) -> Vec<String> {
        let num = |x: f64| format!("{x}");
        let opt = |x: Option<f64>| x.map(num).unwrap_or_default();
        let flag = |b: bool| if b { "1" } else { "0" }.to_string();
        let mut f = vec![num(self.t)];
        for v in [&self.q, &self.qdot, &self.lo, &self.hi] {
            f.extend(v.iter().copied().map(num));
        }
        for p in &self.parts {
            f.push(num(p.activation));
            for c in 0..3 {
                f.push(opt(p.position.map(|x| x[c])));
            }
            f.push(p.source.map(|k| k.label().to_string()).unwrap_or_default());
            f.push(opt(p.source_distance));
        }
        for k in &self.keypoints {
            f.push(opt(k.to_ee));
            f.push(opt(k.to_elbow));
            f.extend(k.to_parts.iter().copied().map(opt));
        }
        f.push(num(self.ee_err));
        f.push(num(self.ee_err_rot));
        f.extend([self.flags.avoidance, self.flags.conflict, self.flags.infeasible].map(flag));
        f
    }
}

/// Streams [`TickRecord`]s to CSV.
pub struct LogWriter<W: Write> {
    out: csv::Writer<W>,
    wrote_header: bool,
}

impl<W: Write> LogWriter<W> {
    pub fn new(mut sink: W) -> Result<Self, SimError> {
        writeln!(sink, "{LOG_VERSION}").map_err(|e| SimError::LogFormat(e.to_string()))?;
        Ok(Self {
            out: csv::Writer::from_writer(sink),
            wrote_header: false,
        })
    }

    pub fn write(&mut self, record: &TickRecord) -> Result<(), SimError> {
        self.write_row(&LogRow::from_record(record))
    }

    pub fn write_row(&mut self, row: &LogRow) -> Result<(), SimError> {
        if !self.wrote_header {
            self.out.write_record(row.header())?;
            self.wrote_header = true;
        }
        self.out.write_record(row.fields())?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, SimError> {
        self.out.flush().map_err(|e| SimError::LogFormat(e.to_string()))?;
        self.out.into_inner().map_err(|e| SimError::LogFormat(e.to_string()))
    }
}

/// Writes a whole run to CSV in memory.
pub fn log_to_string(records: &[TickRecord]) -> Result<String, SimError> {
    let mut w = LogWriter::new(Vec::new())?;
    for r in records {
        w.write(r)?;
    }
    String::from_utf8(w.finish()?).map_err(|e| SimError::LogFormat(e.to_string()))
}

/// Parses a log written by [`LogWriter`].
pub fn read_log<R: BufRead>(mut source: R) -> Result<Vec<LogRow>, SimError> {
    let mut first = String::new();
    source
        .read_line(&mut first)
        .map_err(|e| SimError::LogFormat(e.to_string()))?;
    if first.trim_end() != LOG_VERSION {
        return Err(SimError::LogFormat(format!(
            "unsupported log version line {:?}",
            first.trim_end()
        )));
    }
    let mut reader = csv::Reader::from_reader(source);
    let header: Vec<String> = reader.headers()?.iter().map(String::from).collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let need = |name: &str| col(name).ok_or_else(|| SimError::LogFormat(format!("missing column {name}")));

    let dof = header.iter().filter(|h| h.starts_with("q_")).count();
    let parts: Vec<String> = header
        .iter()
        .filter_map(|h| h.strip_prefix("a_"))
        .map(String::from)
        .collect();
    let labels: Vec<Keypoint> = Keypoint::ALL
        .iter()
        .copied()
        .filter(|k| col(&format!("d_ee_{}", k.label())).is_some())
        .collect();

    let mut rows = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let bad = |name: &str| SimError::LogFormat(format!("row {}: bad value in column {name}", line + 1));
        let opt = |name: &str| -> Result<Option<f64>, SimError> {
            let cell = &rec[need(name)?];
            if cell.is_empty() {
                Ok(None)
            } else {
                cell.parse().map(Some).map_err(|_| bad(name))
            }
        };
        let num = |name: &str| opt(name)?.ok_or_else(|| bad(name));
        let vec = |prefix: &str| {
            (0..dof)
                .map(|i| num(&format!("{prefix}_{i}")))
                .collect::<Result<Vec<_>, _>>()
        };
        let flag = |name: &str| -> Result<bool, SimError> {
            match &rec[need(name)?] {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(bad(name)),
            }
        };

        let mut part_rows = Vec::new();
        for p in &parts {
            let pos = match (
                opt(&format!("pc_{p}_x"))?,
                opt(&format!("pc_{p}_y"))?,
                opt(&format!("pc_{p}_z"))?,
            ) {
                (Some(x), Some(y), Some(z)) => Some([x, y, z]),
                _ => None,
            };
            let src_col = format!("src_{p}");
            let src = &rec[need(&src_col)?];
            part_rows.push(PartRow {
                name: p.clone(),
                activation: num(&format!("a_{p}"))?,
                position: pos,
                source: if src.is_empty() {
                    None
                } else {
                    Some(src.parse().map_err(|_| bad(&src_col))?)
                },
                source_distance: opt(&format!("srcdist_{p}"))?,
            });
        }
        let mut kp_rows = Vec::new();
        for k in &labels {
            let l = k.label();
            kp_rows.push(KeypointRow {
                label: *k,
                to_ee: opt(&format!("d_ee_{l}"))?,
                to_elbow: opt(&format!("d_elbow_{l}"))?,
                to_parts: parts
                    .iter()
                    .map(|p| opt(&format!("d_{p}_{l}")))
                    .collect::<Result<_, _>>()?,
            });
        }
        rows.push(LogRow {
            t: num("t")?,
            q: vec("q")?,
            qdot: vec("qdot")?,
            lo: vec("lo")?,
            hi: vec("hi")?,
            parts: part_rows,
            keypoints: kp_rows,
            ee_err: num("ee_err")?,
            ee_err_rot: num("ee_err_rot")?,
            flags: TickFlags {
                avoidance: flag("avoidance")?,
                conflict: flag("conflict")?,
                infeasible: flag("infeasible")?,
            },
        });
    }
    Ok(rows)
}
