//! Summary figures computed from a tick log.

use std::fmt;
use std::time::Duration;

use pps_core::Keypoint;

use crate::log::LogRow;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsOptions {
    /// Activation above which a part counts as triggered.
    pub threshold: f64,
    /// Quiet time after the last avoidance before a span counts as
    /// obstacle-free again, s.
    pub settle: f64,
    /// Error below which tracking counts as recovered, m.
    pub recovery_tolerance: f64,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        Self {
            threshold: 0.2,
            settle: 3.0,
            recovery_tolerance: 0.005,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trigger {
    pub t: f64,
    pub source: Option<Keypoint>,
    /// Distance of the triggering keypoint to the part's nearest taxel, m.
    pub distance: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Timing {
    pub p50: Duration,
    pub p99: Duration,
    pub max: Duration,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub ticks: usize,
    /// Smallest keypoint-to-taxel distance over the run, m.
    pub min_taxel_distance: Option<f64>,
    /// First activation above threshold, per body part.
    pub triggers: Vec<(String, Option<Trigger>)>,
    /// Time of the first avoidance tick.
    pub first_avoidance: Option<f64>,
    /// RMS position error over ticks with no stimulus in any field and no
    /// avoidance during the preceding settle time.
    pub rms_obstacle_free: Option<f64>,
    pub max_err_before_avoidance: Option<f64>,
    /// Largest error from the first to the last avoidance tick.
    pub max_err_interference: Option<f64>,
    /// First tick after the last avoidance tick.
    pub retreat: Option<f64>,
    /// Time from `retreat` until the error first drops below tolerance.
    pub recovery: Option<f64>,
    pub timing: Option<Timing>,
}

fn percentile(sorted: &[Duration], p: f64) -> Duration {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn compute_metrics(rows: &[LogRow], wall: Option<&[Duration]>, opts: &MetricsOptions) -> Metrics {
    let min_taxel_distance = rows.iter().filter_map(LogRow::min_taxel_distance).reduce(f64::min);

    let part_names: Vec<String> = rows
        .first()
        .map(|r| r.parts.iter().map(|p| p.name.clone()).collect())
        .unwrap_or_default();
    let triggers = part_names
        .iter()
        .map(|name| {
            let hit = rows.iter().find_map(|r| {
                let p = r.part(name)?;
                (p.activation > opts.threshold).then_some(Trigger {
                    t: r.t,
                    source: p.source,
                    distance: p.source_distance,
                })
            });
            (name.clone(), hit)
        })
        .collect();

    let first = rows.iter().position(|r| r.flags.avoidance);
    let last = rows.iter().rposition(|r| r.flags.avoidance);

    let mut last_avoid: Option<f64> = None;
    let mut sum = 0.0;
    let mut count = 0usize;
    for r in rows {
        if r.flags.avoidance {
            last_avoid = Some(r.t);
        }
        let quiet = r.parts.iter().all(|p| p.activation == 0.0);
        let settled = last_avoid.is_none_or(|ta| r.t - ta >= opts.settle);
        if quiet && settled {
            sum += r.ee_err * r.ee_err;
            count += 1;
        }
    }

    let max_err = |slice: &[LogRow]| slice.iter().map(|r| r.ee_err).reduce(f64::max);
    let (retreat, recovery) = match last {
        Some(l) if l + 1 < rows.len() => {
            let t0 = rows[l + 1].t;
            let rec = rows[l + 1..]
                .iter()
                .find(|r| r.ee_err < opts.recovery_tolerance)
                .map(|r| r.t - t0);
            (Some(t0), rec)
        }
        _ => (None, None),
    };

    let timing = wall.filter(|w| !w.is_empty()).map(|w| {
        let mut sorted = w.to_vec();
        sorted.sort();
        Timing {
            p50: percentile(&sorted, 50.0),
            p99: percentile(&sorted, 99.0),
            max: *sorted.last().expect("non-empty"),
        }
    });

    Metrics {
        ticks: rows.len(),
        min_taxel_distance,
        triggers,
        first_avoidance: first.map(|i| rows[i].t),
        rms_obstacle_free: (count > 0).then(|| (sum / count as f64).sqrt()),
        max_err_before_avoidance: max_err(&rows[..first.unwrap_or(rows.len())]),
        max_err_interference: first.zip(last).and_then(|(a, b)| max_err(&rows[a..=b])),
        retreat,
        recovery,
        timing,
    }
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = |x: Option<f64>| x.map(|v| format!("{v:.4} m")).unwrap_or_else(|| "none".into());
        let s = |x: Option<f64>| x.map(|v| format!("{v:.2} s")).unwrap_or_else(|| "none".into());
        writeln!(f, "ticks: {}", self.ticks)?;
        writeln!(f, "min human-taxel distance: {}", m(self.min_taxel_distance))?;
        for (part, trig) in &self.triggers {
            match trig {
                Some(tr) => writeln!(
                    f,
                    "trigger {part}: t = {:.2} s, {} at {}",
                    tr.t,
                    tr.source.map(|k| k.label()).unwrap_or("?"),
                    m(tr.distance)
                )?,
                None => writeln!(f, "trigger {part}: none")?,
            }
        }
        writeln!(f, "first avoidance: {}", s(self.first_avoidance))?;
        writeln!(f, "EE error RMS (obstacle-free): {}", m(self.rms_obstacle_free))?;
        writeln!(f, "max EE error before avoidance: {}", m(self.max_err_before_avoidance))?;
        writeln!(f, "max EE error during interference: {}", m(self.max_err_interference))?;
        writeln!(f, "retreat: {}, recovery: {}", s(self.retreat), s(self.recovery))?;
        match &self.timing {
            Some(t) => write!(
                f,
                "tick compute: p50 {:.3} ms, p99 {:.3} ms, max {:.3} ms",
                t.p50.as_secs_f64() * 1e3,
                t.p99.as_secs_f64() * 1e3,
                t.max.as_secs_f64() * 1e3
            ),
            None => write!(f, "tick compute: not recorded"),
        }
    }
}
