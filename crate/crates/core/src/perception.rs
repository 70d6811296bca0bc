//! Human keypoint model: stream ingestion, median filtering, scripted
//! trajectories and valence assignment.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pps::Stimulus;
use crate::scalar::{lit, to_f64, Real};

/// The 13 tracked human body points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Keypoint {
    Head,
    ShoulderL,
    ShoulderR,
    ElbowL,
    ElbowR,
    HandL,
    HandR,
    HipL,
    HipR,
    KneeL,
    KneeR,
    AnkleL,
    AnkleR,
}

impl Keypoint {
    pub const COUNT: usize = 13;

    pub const ALL: [Keypoint; Self::COUNT] = [
        Keypoint::Head,
        Keypoint::ShoulderL,
        Keypoint::ShoulderR,
        Keypoint::ElbowL,
        Keypoint::ElbowR,
        Keypoint::HandL,
        Keypoint::HandR,
        Keypoint::HipL,
        Keypoint::HipR,
        Keypoint::KneeL,
        Keypoint::KneeR,
        Keypoint::AnkleL,
        Keypoint::AnkleR,
    ];

    /// Skeleton edges used by the bone-length sanity check.
    pub const BONES: [(Keypoint, Keypoint); 13] = [
        (Keypoint::Head, Keypoint::ShoulderL),
        (Keypoint::Head, Keypoint::ShoulderR),
        (Keypoint::ShoulderL, Keypoint::ShoulderR),
        (Keypoint::ShoulderL, Keypoint::ElbowL),
        (Keypoint::ShoulderR, Keypoint::ElbowR),
        (Keypoint::ElbowL, Keypoint::HandL),
        (Keypoint::ElbowR, Keypoint::HandR),
        (Keypoint::ShoulderL, Keypoint::HipL),
        (Keypoint::ShoulderR, Keypoint::HipR),
        (Keypoint::HipL, Keypoint::KneeL),
        (Keypoint::HipR, Keypoint::KneeR),
        (Keypoint::KneeL, Keypoint::AnkleL),
        (Keypoint::KneeR, Keypoint::AnkleR),
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Keypoint::Head => "head",
            Keypoint::ShoulderL => "shoulder_l",
            Keypoint::ShoulderR => "shoulder_r",
            Keypoint::ElbowL => "elbow_l",
            Keypoint::ElbowR => "elbow_r",
            Keypoint::HandL => "hand_l",
            Keypoint::HandR => "hand_r",
            Keypoint::HipL => "hip_l",
            Keypoint::HipR => "hip_r",
            Keypoint::KneeL => "knee_l",
            Keypoint::KneeR => "knee_r",
            Keypoint::AnkleL => "ankle_l",
            Keypoint::AnkleR => "ankle_r",
        }
    }
}

impl fmt::Display for Keypoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Keypoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Keypoint::ALL
            .into_iter()
            .find(|k| k.label() == s)
            .ok_or_else(|| Error::UnknownKeypoint(s.to_string()))
    }
}

/// Maximum admissible distance between adjacent keypoints, m.
pub const MAX_BONE_LENGTH: f64 = 1.0;

/// One observation of the human: a timestamp and up to 13 keypoints.
#[derive(Clone, Debug, PartialEq)]
pub struct HumanFrame<T: Real> {
    pub t: T,
    keypoints: [Option<Vector3<T>>; Keypoint::COUNT],
}

impl<T: Real> HumanFrame<T> {
    pub fn empty(t: T) -> Self {
        Self {
            t,
            keypoints: [None; Keypoint::COUNT],
        }
    }

    pub fn get(&self, k: Keypoint) -> Option<&Vector3<T>> {
        self.keypoints[k.index()].as_ref()
    }

    pub fn set(&mut self, k: Keypoint, p: Option<Vector3<T>>) {
        self.keypoints[k.index()] = p;
    }

    pub fn with(mut self, k: Keypoint, p: Vector3<T>) -> Self {
        self.set(k, Some(p));
        self
    }

    pub fn len(&self) -> usize {
        self.keypoints.iter().flatten().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Present keypoints in canonical order.
    pub fn iter(&self) -> impl Iterator<Item = (Keypoint, &Vector3<T>)> {
        Keypoint::ALL
            .iter()
            .zip(&self.keypoints)
            .filter_map(|(&k, p)| p.as_ref().map(|p| (k, p)))
    }

    /// First bone longer than [`MAX_BONE_LENGTH`], if any.
    pub fn oversized_bone(&self) -> Option<(Keypoint, Keypoint)> {
        Keypoint::BONES
            .into_iter()
            .find(|&(a, b)| match (self.get(a), self.get(b)) {
                (Some(pa), Some(pb)) => to_f64((pa - pb).norm()) > MAX_BONE_LENGTH,
                _ => false,
            })
    }
}

#[derive(Serialize, Deserialize)]
struct FrameRecord {
    t: f64,
    keypoints: BTreeMap<String, [f64; 3]>,
}

/// Serializes a frame as one newline-free JSON record.
pub fn frame_to_json_line(frame: &HumanFrame<f64>) -> String {
    let record = FrameRecord {
        t: frame.t,
        keypoints: frame
            .iter()
            .map(|(k, p)| (k.label().to_string(), [p.x, p.y, p.z]))
            .collect(),
    };
    serde_json::to_string(&record).expect("finite frame serializes")
}

fn parse_record(line: &str) -> std::result::Result<HumanFrame<f64>, String> {
    let record: FrameRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if !record.t.is_finite() {
        return Err("non-finite timestamp".into());
    }
    let mut frame = HumanFrame::empty(record.t);
    for (label, p) in record.keypoints {
        let k: Keypoint = label.parse().map_err(|e: Error| e.to_string())?;
        if p.iter().any(|v| !v.is_finite()) {
            return Err(format!("non-finite coordinate for {k}"));
        }
        frame.set(k, Some(Vector3::from(p)));
    }
    if let Some((a, b)) = frame.oversized_bone() {
        return Err(format!("bone {a}-{b} longer than {MAX_BONE_LENGTH} m"));
    }
    Ok(frame)
}

/// Result of reading a keypoint stream.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParsedStream {
    pub frames: Vec<HumanFrame<f64>>,
    /// Records skipped as malformed, out of order or anatomically implausible.
    pub skipped: usize,
}

/// Reads newline-delimited JSON records `{t, keypoints: {label: [x, y, z]}}`.
///
/// Blank lines are ignored. Bad records are skipped and counted; the stream
/// is rejected when more than half of the records are bad.
pub fn parse_keypoint_stream<R: BufRead>(source: R) -> Result<ParsedStream> {
    let mut out = ParsedStream::default();
    let mut total = 0;
    let mut first_error = None;
    for (lineno, line) in source.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        total += 1;
        let parsed = parse_record(line).and_then(|f| match out.frames.last() {
            Some(prev) if f.t <= prev.t => Err(format!("timestamp {} not after {}", f.t, prev.t)),
            _ => Ok(f),
        });
        match parsed {
            Ok(frame) => out.frames.push(frame),
            Err(e) => {
                out.skipped += 1;
                if first_error.is_none() {
                    first_error = Some(format!("line {}: {e}", lineno + 1));
                }
            }
        }
    }
    if out.skipped * 2 > total {
        return Err(Error::MalformedStream {
            malformed: out.skipped,
            total,
            first: first_error.unwrap_or_default(),
        });
    }
    if out.skipped > 0 {
        log::warn!(
            "skipped {} of {total} keypoint records ({})",
            out.skipped,
            first_error.unwrap_or_default()
        );
    }
    Ok(out)
}

fn median<T: Real>(values: &mut [T]) -> T {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) * lit(0.5)
    }
}

/// Componentwise median over the last `width` frames of `window`.
///
/// Keypoints missing from the newest frame stay missing; otherwise only the
/// frames where a keypoint is present contribute to its median. The result
/// carries the newest frame's timestamp.
pub fn median_filter<T: Real>(window: &[HumanFrame<T>], width: usize) -> Result<HumanFrame<T>> {
    if width == 0 || width.is_multiple_of(2) {
        return Err(Error::Config(format!("median width {width} must be odd and >= 1")));
    }
    let Some(newest) = window.last() else {
        return Err(Error::Config("median over an empty window".into()));
    };
    let start = window.len().saturating_sub(width);
    let recent = &window[start..];
    let mut out = HumanFrame::empty(newest.t);
    let mut buf = Vec::with_capacity(recent.len());
    for (k, _) in newest.iter() {
        let mut p = Vector3::zeros();
        for axis in 0..3 {
            buf.clear();
            buf.extend(recent.iter().filter_map(|f| f.get(k).map(|v| v[axis])));
            p[axis] = median(&mut buf);
        }
        out.set(k, Some(p));
    }
    Ok(out)
}

/// Streaming form of [`median_filter`].
#[derive(Clone, Debug)]
pub struct MedianFilter<T: Real> {
    width: usize,
    window: VecDeque<HumanFrame<T>>,
}

impl<T: Real> MedianFilter<T> {
    pub fn new(width: usize) -> Result<Self> {
        if width == 0 || width.is_multiple_of(2) {
            return Err(Error::Config(format!("median width {width} must be odd and >= 1")));
        }
        Ok(Self {
            width,
            window: VecDeque::with_capacity(width),
        })
    }

    pub fn push(&mut self, frame: HumanFrame<T>) -> HumanFrame<T> {
        if self.window.len() == self.width {
            self.window.pop_front();
        }
        self.window.push_back(frame);
        let slice: Vec<_> = self.window.iter().cloned().collect();
        median_filter(&slice, self.width).expect("validated width")
    }

    pub fn reset(&mut self) {
        self.window.clear();
    }
}

/// One piece of a scripted keypoint path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    /// Straight line along `direction` from `anchor + from_distance * direction`
    /// to `anchor + to_distance * direction`. Covers both approach
    /// (`from > to`) and retreat (`from < to`).
    Approach {
        anchor: [f64; 3],
        direction: [f64; 3],
        from_distance: f64,
        to_distance: f64,
        speed: f64,
        /// Only used when `speed` is zero: how long to hold the start point.
        #[serde(default)]
        duration: Option<f64>,
    },
    Line {
        from: [f64; 3],
        to: [f64; 3],
        speed: f64,
        #[serde(default)]
        duration: Option<f64>,
    },
    Hold {
        at: [f64; 3],
        duration: f64,
    },
    /// Back-and-forth sweep between `from` and `to` with a cosine profile.
    Sweep {
        from: [f64; 3],
        to: [f64; 3],
        period: f64,
        duration: f64,
    },
}

/// Path of the lead keypoint plus rigid offsets of the others.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub lead: Keypoint,
    pub segments: Vec<Segment>,
    /// Offsets of the other keypoints from the lead; keypoints not listed
    /// are treated as occluded.
    #[serde(default)]
    pub offsets: BTreeMap<Keypoint, [f64; 3]>,
    #[serde(default)]
    pub start_time: f64,
    /// Standard deviation of isotropic Gaussian noise added per keypoint, m.
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub seed: u64,
}

fn finite(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite())
}

struct Resolved {
    from: Vector3<f64>,
    to: Vector3<f64>,
    duration: f64,
    sweep_period: Option<f64>,
}

fn resolve(segment: &Segment) -> Result<Resolved> {
    let bad = |msg: &str| Err(Error::Trajectory(msg.to_string()));
    let linear = |from: Vector3<f64>, to: Vector3<f64>, speed: f64, hold: Option<f64>| {
        if !(speed >= 0.0) || !speed.is_finite() {
            return bad("speed must be finite and non-negative");
        }
        let length = (to - from).norm();
        let duration = if speed > 0.0 {
            length / speed
        } else {
            hold.unwrap_or(0.0)
        };
        let to = if speed > 0.0 { to } else { from };
        Ok(Resolved {
            from,
            to,
            duration,
            sweep_period: None,
        })
    };
    let r = match segment {
        Segment::Approach {
            anchor,
            direction,
            from_distance,
            to_distance,
            speed,
            duration,
        } => {
            if !finite(anchor) || !finite(direction) || !finite(&[*from_distance, *to_distance]) {
                return bad("non-finite approach geometry");
            }
            let dir = Vector3::from(*direction);
            if dir.norm() < 1e-12 {
                return bad("zero approach direction");
            }
            let dir = dir.normalize();
            let anchor = Vector3::from(*anchor);
            linear(
                anchor + dir * *from_distance,
                anchor + dir * *to_distance,
                *speed,
                *duration,
            )?
        }
        Segment::Line {
            from,
            to,
            speed,
            duration,
        } => {
            if !finite(from) || !finite(to) {
                return bad("non-finite line endpoints");
            }
            linear(Vector3::from(*from), Vector3::from(*to), *speed, *duration)?
        }
        Segment::Hold { at, duration } => {
            if !finite(at) {
                return bad("non-finite hold point");
            }
            Resolved {
                from: Vector3::from(*at),
                to: Vector3::from(*at),
                duration: *duration,
                sweep_period: None,
            }
        }
        Segment::Sweep {
            from,
            to,
            period,
            duration,
        } => {
            if !finite(from) || !finite(to) || !(period.is_finite() && *period > 0.0) {
                return bad("invalid sweep");
            }
            Resolved {
                from: Vector3::from(*from),
                to: Vector3::from(*to),
                duration: *duration,
                sweep_period: Some(*period),
            }
        }
    };
    if !(r.duration.is_finite() && r.duration > 0.0) {
        return bad("segment has zero or non-finite duration");
    }
    Ok(r)
}

impl Resolved {
    fn at(&self, t: f64) -> Vector3<f64> {
        let s = match self.sweep_period {
            Some(period) => 0.5 * (1.0 - (2.0 * std::f64::consts::PI * t / period).cos()),
            None => t / self.duration,
        };
        self.from + (self.to - self.from) * s
    }
}

/// Samples the scripted path every `tick` seconds.
///
/// A segment lasting `D` contributes `round(D / tick)` frames at local times
/// `0, tick, ...`; its end point is the next segment's first sample.
pub fn synth_trajectory(spec: &TrajectorySpec, tick: f64) -> Result<Vec<HumanFrame<f64>>> {
    if !(tick.is_finite() && tick > 0.0) {
        return Err(Error::Trajectory("tick must be positive".into()));
    }
    if spec.segments.is_empty() {
        return Err(Error::Trajectory("no segments".into()));
    }
    if !spec.start_time.is_finite() || !(spec.noise_std >= 0.0 && spec.noise_std.is_finite()) {
        return Err(Error::Trajectory("invalid start time or noise".into()));
    }
    if spec.offsets.values().any(|o| !finite(o)) {
        return Err(Error::Trajectory("non-finite keypoint offset".into()));
    }
    let resolved = spec.segments.iter().map(resolve).collect::<Result<Vec<_>>>()?;

    let noise = Normal::new(0.0, spec.noise_std.max(f64::MIN_POSITIVE)).expect("valid std");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut frames = Vec::new();
    let mut k: u64 = 0;
    for seg in &resolved {
        let count = (seg.duration / tick).round() as u64;
        for i in 0..count {
            let local = i as f64 * tick;
            let lead = seg.at(local);
            let mut frame = HumanFrame::empty(spec.start_time + k as f64 * tick);
            let mut place = |key: Keypoint, p: Vector3<f64>| {
                let jitter = if spec.noise_std > 0.0 {
                    Vector3::from_fn(|_, _| noise.sample(&mut rng))
                } else {
                    Vector3::zeros()
                };
                frame.set(key, Some(p + jitter));
            };
            place(spec.lead, lead);
            for (&key, off) in &spec.offsets {
                if key != spec.lead {
                    place(key, lead + Vector3::from(*off));
                }
            }
            frames.push(frame);
            k += 1;
        }
    }
    Ok(frames)
}

/// Per-keypoint valences; unlisted keypoints default to 0.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValenceMap<T: Real> {
    values: BTreeMap<Keypoint, T>,
}

impl<T: Real> ValenceMap<T> {
    pub fn new(values: BTreeMap<Keypoint, T>) -> Result<Self> {
        for v in values.values() {
            if !(*v >= -T::one() && *v <= T::one()) {
                return Err(Error::Valence(to_f64(*v)));
            }
        }
        Ok(Self { values })
    }

    /// Parses a JSON object `{label: theta}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: BTreeMap<String, f64> = serde_json::from_str(text)?;
        let mut values = BTreeMap::new();
        for (label, theta) in raw {
            values.insert(label.parse()?, lit(theta));
        }
        Self::new(values)
    }

    pub fn get(&self, k: Keypoint) -> T {
        self.values.get(&k).copied().unwrap_or_else(T::zero)
    }

    pub fn set(&mut self, k: Keypoint, theta: T) -> Result<()> {
        if !(theta >= -T::one() && theta <= T::one()) {
            return Err(Error::Valence(to_f64(theta)));
        }
        self.values.insert(k, theta);
        Ok(())
    }

    pub fn entries(&self) -> impl Iterator<Item = (Keypoint, T)> + '_ {
        self.values.iter().map(|(k, v)| (*k, *v))
    }
}

/// One stimulus per present keypoint, carrying that keypoint's valence.
pub fn assign_valence<T: Real>(frame: &HumanFrame<T>, valences: &ValenceMap<T>) -> Vec<Stimulus<T>> {
    frame
        .iter()
        .map(|(k, p)| Stimulus {
            position: *p,
            valence: valences.get(k),
            label: k,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn full_record(t: f64) -> String {
        let kps: Vec<String> = Keypoint::ALL
            .iter()
            .enumerate()
            .map(|(i, k)| format!("\"{}\": [0.{i}, 0.5, 1.0]", k.label()))
            .collect();
        format!("{{\"t\": {t}, \"keypoints\": {{{}}}}}", kps.join(", "))
    }

    #[test]
    fn parse_empty_and_full() {
        let parsed = parse_keypoint_stream(Cursor::new("")).unwrap();
        assert!(parsed.frames.is_empty());

        let parsed = parse_keypoint_stream(Cursor::new(full_record(0.0))).unwrap();
        assert_eq!(parsed.frames.len(), 1);
        assert_eq!(parsed.frames[0].len(), 13);
    }

    #[test]
    fn parse_occluded_keypoint() {
        let line = full_record(0.0).replace("\"ankle_l\": [0.11, 0.5, 1.0], ", "");
        let parsed = parse_keypoint_stream(Cursor::new(line)).unwrap();
        assert_eq!(parsed.frames[0].len(), 12);
        assert!(parsed.frames[0].get(Keypoint::AnkleL).is_none());
        assert_eq!(parsed.skipped, 0);
    }

    #[test]
    fn parse_skips_and_rejects() {
        let text = format!(
            "{}\nnot json\n{}\n{}\n",
            full_record(0.0),
            full_record(0.02),
            full_record(0.01)
        );
        let parsed = parse_keypoint_stream(Cursor::new(text)).unwrap();
        assert_eq!(parsed.frames.len(), 2);
        assert_eq!(parsed.skipped, 2);

        let text = format!("{}\nbad\nworse\n", full_record(0.0));
        assert!(matches!(
            parse_keypoint_stream(Cursor::new(text)),
            Err(Error::MalformedStream {
                malformed: 2,
                total: 3,
                ..
            })
        ));
    }

    #[test]
    fn parse_rejects_long_bone() {
        let text = format!(
            "{}\n{{\"t\": 1.0, \"keypoints\": {{\"head\": [0,0,0], \"shoulder_l\": [0,0,1.5]}}}}\n{}",
            full_record(0.0),
            full_record(2.0)
        );
        let parsed = parse_keypoint_stream(Cursor::new(text)).unwrap();
        assert_eq!(parsed.frames.len(), 2);
        assert_eq!(parsed.skipped, 1);
    }

    fn scalar_frames(values: &[f64]) -> Vec<HumanFrame<f64>> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| HumanFrame::empty(i as f64).with(Keypoint::Head, Vector3::new(v, 1.0, 2.0)))
            .collect()
    }

    #[test]
    fn median_examples() {
        let window = scalar_frames(&[0.10, 0.10, 0.90, 0.10, 0.10]);
        let m = median_filter(&window, 5).unwrap();
        assert_eq!(m.get(Keypoint::Head).unwrap().x, 0.10);
        assert_eq!(m.t, 4.0);

        let m = median_filter(&window[..3], 1).unwrap();
        assert_eq!(m, window[2]);

        let constant = scalar_frames(&[0.3; 5]);
        assert_eq!(median_filter(&constant, 5).unwrap(), constant[4]);
        assert!(median_filter(&constant, 4).is_err());
    }

    #[test]
    fn median_uses_present_frames_only() {
        let mut window = scalar_frames(&[0.1, 0.2, 0.3]);
        window[1].set(Keypoint::Head, None);
        let m = median_filter(&window, 3).unwrap();
        assert!((m.get(Keypoint::Head).unwrap().x - 0.2).abs() < 1e-15);
        window[2].set(Keypoint::Head, None);
        assert!(median_filter(&window, 3).unwrap().is_empty());
    }

    #[test]
    fn streaming_median_matches_batch() {
        let frames = scalar_frames(&[0.5, 0.1, 0.9, 0.3, 0.2, 0.8, 0.4]);
        let mut filter = MedianFilter::new(5).unwrap();
        for i in 0..frames.len() {
            let streamed = filter.push(frames[i].clone());
            assert_eq!(streamed, median_filter(&frames[..=i], 5).unwrap());
        }
    }

    fn approach(from: f64, to: f64, speed: f64) -> TrajectorySpec {
        TrajectorySpec {
            lead: Keypoint::HandL,
            segments: vec![Segment::Approach {
                anchor: [0.3, 0.0, 0.4],
                direction: [1.0, 0.0, 0.0],
                from_distance: from,
                to_distance: to,
                speed,
                duration: if speed == 0.0 { Some(1.0) } else { None },
            }],
            offsets: BTreeMap::from([(Keypoint::Head, [0.4, 0.1, 0.4])]),
            start_time: 0.0,
            noise_std: 0.0,
            seed: 0,
        }
    }

    #[test]
    fn approach_frame_count() {
        let frames = synth_trajectory(&approach(0.60, 0.10, 0.10), 0.02).unwrap();
        assert_eq!(frames.len(), 250);
        let first = frames[0].get(Keypoint::HandL).unwrap();
        assert!((first.x - 0.9).abs() < 1e-12);
        let head = frames[10].get(Keypoint::Head).unwrap() - frames[10].get(Keypoint::HandL).unwrap();
        assert!((head - Vector3::new(0.4, 0.1, 0.4)).norm() < 1e-12);
        assert!(frames[0].get(Keypoint::KneeL).is_none());
    }

    #[test]
    fn zero_speed_holds() {
        let frames = synth_trajectory(&approach(0.60, 0.10, 0.0), 0.02).unwrap();
        assert_eq!(frames.len(), 50);
        assert!(frames
            .windows(2)
            .all(|w| w[0].get(Keypoint::HandL) == w[1].get(Keypoint::HandL)));
    }

    #[test]
    fn retreat_mirrors_approach() {
        let a = synth_trajectory(&approach(0.60, 0.10, 0.10), 0.02).unwrap();
        let r = synth_trajectory(&approach(0.10, 0.60, 0.10), 0.02).unwrap();
        assert_eq!(a.len(), r.len());
        for k in 1..a.len() {
            let pa = a[a.len() - k].get(Keypoint::HandL).unwrap();
            let pr = r[k].get(Keypoint::HandL).unwrap();
            assert!((pa - pr).norm() < 1e-12, "k = {k}");
        }
    }

    #[test]
    fn invalid_specs() {
        let mut spec = approach(0.6, 0.1, 0.1);
        spec.segments = vec![Segment::Hold {
            at: [0.0; 3],
            duration: 0.0,
        }];
        assert!(synth_trajectory(&spec, 0.02).is_err());
        spec.segments = vec![Segment::Line {
            from: [f64::NAN, 0.0, 0.0],
            to: [0.0; 3],
            speed: 0.1,
            duration: None,
        }];
        assert!(synth_trajectory(&spec, 0.02).is_err());
        let no_hold = TrajectorySpec {
            segments: vec![Segment::Line {
                from: [0.0; 3],
                to: [1.0, 0.0, 0.0],
                speed: 0.0,
                duration: None,
            }],
            ..approach(0.6, 0.1, 0.1)
        };
        assert!(synth_trajectory(&no_hold, 0.02).is_err());
    }

    #[test]
    fn noise_is_seeded() {
        let mut spec = approach(0.6, 0.1, 0.1);
        spec.noise_std = 0.01;
        spec.seed = 7;
        let a = synth_trajectory(&spec, 0.02).unwrap();
        let b = synth_trajectory(&spec, 0.02).unwrap();
        assert_eq!(a, b);
        spec.seed = 8;
        assert_ne!(a, synth_trajectory(&spec, 0.02).unwrap());
    }

    #[test]
    fn valence_assignment() {
        let map = ValenceMap::<f64>::from_json(r#"{"hand_l": -0.5, "head": 1.0}"#).unwrap();
        let frame = HumanFrame::empty(0.0)
            .with(Keypoint::HandL, Vector3::zeros())
            .with(Keypoint::Head, Vector3::x())
            .with(Keypoint::KneeR, Vector3::y());
        let stimuli = assign_valence(&frame, &map);
        let theta: Vec<_> = stimuli.iter().map(|s| (s.label, s.valence)).collect();
        assert_eq!(
            theta,
            vec![(Keypoint::Head, 1.0), (Keypoint::HandL, -0.5), (Keypoint::KneeR, 0.0)]
        );

        let nominal = assign_valence(&frame, &ValenceMap::default());
        assert!(nominal.iter().all(|s| s.valence == 0.0));
        assert!(assign_valence(&HumanFrame::empty(0.0), &map).is_empty());

        assert!(matches!(
            ValenceMap::<f64>::from_json(r#"{"head": 1.5}"#),
            Err(Error::Valence(_))
        ));
        assert!(matches!(
            ValenceMap::<f64>::from_json(r#"{"tail": 0.5}"#),
            Err(Error::UnknownKeypoint(_))
        ));
    }
}
