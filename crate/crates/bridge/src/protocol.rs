//! Wire format. Every message is a JSON envelope
//! `{schema, kind, seq, payload}`; see `PROTOCOL.md` in this crate.

use std::collections::BTreeMap;
use std::path::PathBuf;

use nalgebra::{DVector, Vector3};
use pps_core::{Keypoint, Pose};
use pps_sim::{Command, Simulation, TargetSpec, TickRecord};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const SCHEMA: &str = "pps-bridge/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    State,
    Command,
    Ack,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub schema: String,
    pub kind: Kind,
    pub seq: u64,
    pub payload: Value,
}

impl Envelope {
    pub fn new(kind: Kind, seq: u64, payload: Value) -> Self {
        Self {
            schema: SCHEMA.to_string(),
            kind,
            seq,
            payload,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosePayload {
    pub position: [f64; 3],
    /// `[w, x, y, z]`.
    pub orientation: [f64; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartPayload {
    pub name: String,
    pub a_pps: f64,
    #[serde(rename = "P_C")]
    pub p_c: Option<[f64; 3]>,
    #[serde(rename = "n_C")]
    pub n_c: Option<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlagsPayload {
    pub avoidance: bool,
    pub conflict: bool,
    pub infeasible: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValencePayload {
    pub theta: f64,
    /// Distance at which a stimulus with this valence crosses the
    /// activation threshold, m; `null` if it never does.
    pub threshold_distance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaxelPayload {
    pub pos: [f64; 3],
    pub a: f64,
}

/// Per-tick state broadcast to every client.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatePayload {
    pub tick: u64,
    pub t: f64,
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub bounds_lo: Vec<f64>,
    pub bounds_hi: Vec<f64>,
    pub ee_pose: PosePayload,
    pub target_pose: PosePayload,
    pub ee_err: f64,
    pub parts: Vec<PartPayload>,
    pub human: BTreeMap<String, [f64; 3]>,
    pub valence: BTreeMap<String, ValencePayload>,
    pub flags: FlagsPayload,
    /// Link frame origins, root to end effector.
    pub links: Vec<[f64; 3]>,
    pub taxels: Vec<TaxelPayload>,
    pub paused: bool,
}

fn arr(v: &Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn pose(p: &Pose<f64>) -> PosePayload {
    let q = p.rotation.quaternion();
    PosePayload {
        position: arr(&p.translation.vector),
        orientation: [q.w, q.i, q.j, q.k],
    }
}

impl StatePayload {
    /// State after `rec`, as seen from `sim` (valences and pause state).
    pub fn new(rec: &TickRecord, sim: &Simulation) -> Self {
        let v = |x: &DVector<f64>| x.iter().copied().collect::<Vec<_>>();
        let rf = sim.controller().receptive_field();
        let threshold = sim.controller().config().activation_threshold;
        StatePayload {
            tick: rec.tick,
            t: rec.t,
            q: v(&rec.q),
            qdot: v(&rec.qdot),
            bounds_lo: v(&rec.bounds_lo),
            bounds_hi: v(&rec.bounds_hi),
            ee_pose: pose(&rec.ee),
            target_pose: pose(&rec.target),
            ee_err: rec.ee_err,
            parts: rec
                .parts
                .iter()
                .map(|p| PartPayload {
                    name: p.part.name().to_string(),
                    a_pps: p.activation,
                    p_c: p.position.as_ref().map(arr),
                    n_c: p.normal.as_ref().map(arr),
                })
                .collect(),
            human: rec
                .keypoints
                .iter()
                .filter_map(|k| k.position.as_ref().map(|p| (k.label.label().to_string(), arr(p))))
                .collect(),
            valence: Keypoint::ALL
                .iter()
                .map(|&k| {
                    let theta = sim.valence().get(k);
                    (
                        k.label().to_string(),
                        ValencePayload {
                            theta,
                            threshold_distance: rf.crossing_distance(threshold, theta),
                        },
                    )
                })
                .collect(),
            flags: FlagsPayload {
                avoidance: rec.flags.avoidance,
                conflict: rec.flags.conflict,
                infeasible: rec.flags.infeasible,
            },
            links: rec.link_origins.iter().map(arr).collect(),
            taxels: rec
                .taxels
                .iter()
                .map(|t| TaxelPayload {
                    pos: arr(&t.position),
                    a: t.activation,
                })
                .collect(),
            paused: sim.is_paused(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AckPayload {
    /// Sequence number of the acknowledged command.
    pub ack_of: u64,
    pub cmd: String,
    /// First tick whose state reflects the command.
    pub effect_tick: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    /// Sequence number of the offending command, when it could be read.
    pub ack_of: Option<u64>,
    pub reason: String,
}

/// A rejected inbound message.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("{reason}")]
pub struct ProtocolError {
    pub seq: Option<u64>,
    pub reason: String,
}

impl ProtocolError {
    fn new(seq: Option<u64>, reason: impl Into<String>) -> Self {
        Self {
            seq,
            reason: reason.into(),
        }
    }
}

/// JSON cannot carry NaN or infinities; clients encode them as `null`
/// (what `JSON.stringify` does) or as strings such as `"NaN"`.
fn coordinate(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::Null => Some(f64::NAN),
        Value::String(s) => s.parse().ok(),
        _ => None,
    }
}

fn vector<const N: usize>(v: &Value, seq: Option<u64>, what: &str) -> Result<[f64; N], ProtocolError> {
    let items = v
        .as_array()
        .filter(|a| a.len() == N)
        .ok_or_else(|| ProtocolError::new(seq, format!("{what} must be an array of {N} numbers")))?;
    let mut out = [0.0; N];
    for (o, item) in out.iter_mut().zip(items) {
        *o = coordinate(item)
            .ok_or_else(|| ProtocolError::new(seq, format!("{what} must be an array of {N} numbers")))?;
        if !o.is_finite() {
            return Err(ProtocolError::new(seq, "non-finite coordinate"));
        }
    }
    Ok(out)
}

fn optional_vector<const N: usize>(
    obj: &Value,
    key: &str,
    seq: Option<u64>,
) -> Result<Option<[f64; N]>, ProtocolError> {
    match obj.get(key) {
        None => Ok(None),
        Some(v) => vector(v, seq, key).map(Some),
    }
}

fn number(obj: &Value, key: &str, seq: Option<u64>) -> Result<f64, ProtocolError> {
    let v = obj
        .get(key)
        .and_then(coordinate)
        .ok_or_else(|| ProtocolError::new(seq, format!("missing numeric field '{key}'")))?;
    if !v.is_finite() {
        return Err(ProtocolError::new(seq, "non-finite coordinate"));
    }
    Ok(v)
}

fn label(obj: &Value, seq: Option<u64>) -> Result<Keypoint, ProtocolError> {
    let s = obj
        .get("label")
        .and_then(Value::as_str)
        .ok_or_else(|| ProtocolError::new(seq, "missing field 'label'"))?;
    s.parse()
        .map_err(|_| ProtocolError::new(seq, format!("unknown keypoint '{s}'")))
}

/// Parses one client message into its sequence number and command.
pub fn parse_command(text: &str) -> Result<(u64, Command), ProtocolError> {
    let raw: Value =
        serde_json::from_str(text).map_err(|e| ProtocolError::new(None, format!("malformed message: {e}")))?;
    let seq = raw.get("seq").and_then(Value::as_u64);
    if raw.get("schema").and_then(Value::as_str) != Some(SCHEMA) {
        return Err(ProtocolError::new(
            seq,
            format!("unsupported schema, expected {SCHEMA}"),
        ));
    }
    if raw.get("kind").and_then(Value::as_str) != Some("command") {
        return Err(ProtocolError::new(seq, "only command messages are accepted"));
    }
    let seq = seq.ok_or_else(|| ProtocolError::new(None, "missing or invalid seq"))?;
    let p = raw
        .get("payload")
        .filter(|p| p.is_object())
        .ok_or_else(|| ProtocolError::new(Some(seq), "missing payload"))?;
    let s = Some(seq);
    let name = p
        .get("cmd")
        .and_then(Value::as_str)
        .ok_or_else(|| ProtocolError::new(s, "missing field 'cmd'"))?;
    let cmd = match name {
        "set_keypoint" => Command::SetKeypoint {
            label: label(p, s)?,
            pos: match p.get("pos") {
                None | Some(Value::Null) => None,
                Some(v) => Some(vector(v, s, "pos")?),
            },
        },
        "set_valence" => {
            let theta = number(p, "theta", s)?;
            if !(-1.0..=1.0).contains(&theta) {
                return Err(ProtocolError::new(s, format!("valence {theta} outside [-1, 1]")));
            }
            Command::SetValence {
                label: label(p, s)?,
                theta,
            }
        }
        "set_target" => {
            if let Some(pose) = p.get("pose") {
                Command::SetTarget(TargetSpec::Static {
                    position: optional_vector(pose, "position", s)?,
                    orientation: optional_vector(pose, "orientation", s)?,
                })
            } else if let Some(c) = p.get("circle") {
                let start_time = match c.get("start_time") {
                    None => 0.0,
                    Some(_) => number(c, "start_time", s)?,
                };
                Command::SetTarget(TargetSpec::Circle {
                    radius: number(c, "radius", s)?,
                    period: number(c, "period", s)?,
                    normal: vector(c.get("normal").unwrap_or(&Value::Null), s, "normal")?,
                    start_direction: vector(c.get("start_direction").unwrap_or(&Value::Null), s, "start_direction")?,
                    center: optional_vector(c, "center", s)?,
                    orientation: optional_vector(c, "orientation", s)?,
                    start_time,
                })
            } else {
                return Err(ProtocolError::new(s, "set_target needs 'pose' or 'circle'"));
            }
        }
        "pause" => Command::Pause,
        "resume" => Command::Resume,
        "reset" => Command::Reset {
            scenario: match p.get("scenario") {
                None | Some(Value::Null) => None,
                Some(Value::String(path)) => Some(PathBuf::from(path)),
                Some(_) => return Err(ProtocolError::new(s, "scenario must be a path string")),
            },
        },
        other => return Err(ProtocolError::new(s, format!("unknown command '{other}'"))),
    };
    Ok((seq, cmd))
}

/// Builds a command envelope, as a client would send it.
pub fn command_message(seq: u64, payload: Value) -> String {
    serde_json::to_string(&Envelope::new(Kind::Command, seq, payload)).expect("JSON value serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn parse(payload: Value) -> Result<(u64, Command), ProtocolError> {
        parse_command(&command_message(5, payload))
    }

    #[test]
    fn parses_each_command() {
        assert_eq!(
            parse(json!({"cmd": "set_keypoint", "label": "head", "pos": [1, 2, 3]})).unwrap(),
            (
                5,
                Command::SetKeypoint {
                    label: Keypoint::Head,
                    pos: Some([1.0, 2.0, 3.0])
                }
            )
        );
        assert_eq!(
            parse(json!({"cmd": "set_keypoint", "label": "head"})).unwrap().1,
            Command::SetKeypoint {
                label: Keypoint::Head,
                pos: None
            }
        );
        assert_eq!(
            parse(json!({"cmd": "set_valence", "label": "hand_l", "theta": -0.5}))
                .unwrap()
                .1,
            Command::SetValence {
                label: Keypoint::HandL,
                theta: -0.5
            }
        );
        assert_eq!(
            parse(json!({"cmd": "set_target", "pose": {"position": [0.3, 0.0, 0.2]}}))
                .unwrap()
                .1,
            Command::SetTarget(TargetSpec::Static {
                position: Some([0.3, 0.0, 0.2]),
                orientation: None
            })
        );
        assert!(matches!(
            parse(json!({"cmd": "set_target", "circle": {"radius": 0.05, "period": 10, "normal": [0, 1, 0], "start_direction": [0, 0, 1]}}))
                .unwrap()
                .1,
            Command::SetTarget(TargetSpec::Circle { .. })
        ));
        assert_eq!(parse(json!({"cmd": "pause"})).unwrap().1, Command::Pause);
        assert_eq!(parse(json!({"cmd": "resume"})).unwrap().1, Command::Resume);
        assert_eq!(
            parse(json!({"cmd": "reset", "scenario": "a.json"})).unwrap().1,
            Command::Reset {
                scenario: Some(PathBuf::from("a.json"))
            }
        );
    }

    #[test]
    fn rejects_non_finite_values() {
        for pos in [json!([0, null, 0]), json!(["NaN", 0, 0]), json!([0, 0, "inf"])] {
            let e = parse(json!({"cmd": "set_keypoint", "label": "head", "pos": pos})).unwrap_err();
            assert_eq!(e.reason, "non-finite coordinate");
            assert_eq!(e.seq, Some(5));
        }
        let e = parse(json!({"cmd": "set_valence", "label": "head", "theta": null})).unwrap_err();
        assert_eq!(e.reason, "non-finite coordinate");
    }

    #[test]
    fn rejects_bad_envelopes() {
        assert_eq!(parse_command("[1,").unwrap_err().seq, None);
        let wrong_schema = json!({"schema": "other/1", "kind": "command", "seq": 1, "payload": {"cmd": "pause"}});
        assert!(parse_command(&wrong_schema.to_string()).is_err());
        let wrong_kind = json!({"schema": SCHEMA, "kind": "state", "seq": 1, "payload": {"cmd": "pause"}});
        assert!(parse_command(&wrong_kind.to_string()).is_err());
        let no_seq = json!({"schema": SCHEMA, "kind": "command", "payload": {"cmd": "pause"}});
        assert!(parse_command(&no_seq.to_string()).is_err());
        assert!(parse(json!({"cmd": "set_keypoint", "label": "tail", "pos": [0, 0, 0]})).is_err());
        assert!(parse(json!({"cmd": "set_keypoint", "label": "head", "pos": [0, 0]})).is_err());
        assert!(parse(json!({"cmd": "set_target"})).is_err());
    }
}
