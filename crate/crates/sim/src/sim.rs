//! The deterministic tick loop.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use nalgebra::{DVector, Vector3};
use pps_core::chain::orientation_error;
use pps_core::perception::{assign_valence, MedianFilter};
use pps_core::{BodyPart, ControlTarget, Controller, Frame, Keypoint, Pose, TickFlags, ValenceMap};

use crate::scenario::{Scenario, TargetSpec};
use crate::SimError;

/// Live input applied between ticks.
#[derive(Clone, Debug, PartialEq)]
pub enum Command {
    /// Pins a keypoint at `pos`, bypassing the median filter; `None` releases it.
    SetKeypoint {
        label: Keypoint,
        pos: Option<[f64; 3]>,
    },
    SetValence {
        label: Keypoint,
        theta: f64,
    },
    SetTarget(TargetSpec),
    Pause,
    Resume,
    /// Restarts from tick 0, optionally with another scenario file.
    Reset {
        scenario: Option<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SetKeypoint { .. } => "set_keypoint",
            Command::SetValence { .. } => "set_valence",
            Command::SetTarget(_) => "set_target",
            Command::Pause => "pause",
            Command::Resume => "resume",
            Command::Reset { .. } => "reset",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PartRecord {
    pub part: BodyPart,
    /// Largest taxel activation of the part.
    pub activation: f64,
    /// Control point and direction; absent unless the aggregate is defined.
    pub position: Option<Vector3<f64>>,
    pub normal: Option<Vector3<f64>>,
    /// Stimulus seen by the part's most active taxel.
    pub source: Option<Keypoint>,
    /// Distance from that stimulus to the part's nearest taxel, m.
    pub source_distance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KeypointRecord {
    pub label: Keypoint,
    /// Perceived position (after filtering and overrides).
    pub position: Option<Vector3<f64>>,
    pub to_ee: Option<f64>,
    pub to_elbow: Option<f64>,
    /// Distance to the nearest taxel of each part, in [`TickRecord::parts`] order.
    pub to_parts: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaxelRecord {
    pub position: Vector3<f64>,
    pub activation: f64,
}

/// Everything observable about one tick.
#[derive(Clone, Debug, PartialEq)]
pub struct TickRecord {
    pub tick: u64,
    pub t: f64,
    /// Configuration at the start of the tick.
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
    pub bounds_lo: DVector<f64>,
    pub bounds_hi: DVector<f64>,
    pub ee: Pose<f64>,
    pub target: Pose<f64>,
    /// Position error, m.
    pub ee_err: f64,
    /// Orientation error angle, rad.
    pub ee_err_rot: f64,
    pub parts: Vec<PartRecord>,
    pub keypoints: Vec<KeypointRecord>,
    pub flags: TickFlags,
    pub link_origins: Vec<Vector3<f64>>,
    pub taxels: Vec<TaxelRecord>,
    /// Wall time spent in the controller pipeline.
    pub compute: Duration,
}

/// One arm, one human, stepped in fixed ticks of logical time.
#[derive(Clone, Debug)]
pub struct Simulation {
    scenario: Scenario,
    controller: Controller,
    target: ControlTarget<f64>,
    valence: ValenceMap<f64>,
    frames: Vec<Frame>,
    cursor: usize,
    median: MedianFilter<f64>,
    perceived: Option<Frame>,
    overrides: BTreeMap<Keypoint, Vector3<f64>>,
    q: DVector<f64>,
    tick: u64,
    paused: bool,
    part_taxels: Vec<(BodyPart, Vec<usize>)>,
}

impl Simulation {
    pub fn new(scenario: Scenario) -> Result<Self, SimError> {
        let built = scenario.build()?;
        let skin = built.controller.skin();
        let part_taxels = BodyPart::ALL
            .iter()
            .map(|&p| {
                (
                    p,
                    (0..skin.len())
                        .filter(|&i| skin.taxels()[i].body_part == p)
                        .collect::<Vec<_>>(),
                )
            })
            .filter(|(_, idx)| !idx.is_empty())
            .collect();
        Ok(Self {
            median: MedianFilter::new(scenario.config.median_window)?,
            q: scenario.home.clone(),
            scenario,
            controller: built.controller,
            target: built.target,
            valence: built.valence,
            frames: built.frames,
            cursor: 0,
            perceived: None,
            overrides: BTreeMap::new(),
            tick: 0,
            paused: false,
            part_taxels,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    pub fn q(&self) -> &DVector<f64> {
        &self.q
    }

    /// Index of the next tick to run.
    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.period()
    }

    pub fn period(&self) -> f64 {
        self.controller.config().period
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    pub fn is_finished(&self) -> bool {
        self.tick >= self.scenario.ticks()
    }

    pub fn valence(&self) -> &ValenceMap<f64> {
        &self.valence
    }

    pub fn apply(&mut self, cmd: Command) -> Result<(), SimError> {
        match cmd {
            Command::SetKeypoint { label, pos } => match pos {
                Some(p) if p.iter().all(|v| v.is_finite()) => {
                    self.overrides.insert(label, Vector3::from(p));
                }
                Some(_) => return Err(SimError::Command("non-finite coordinate".into())),
                None => {
                    self.overrides.remove(&label);
                }
            },
            Command::SetValence { label, theta } => self.valence.set(label, theta)?,
            Command::SetTarget(spec) => {
                let home = *self.controller.chain().forward_kinematics(&self.scenario.home)?.ee();
                self.target = spec.resolve(&home)?;
            }
            Command::Pause => self.paused = true,
            Command::Resume => self.paused = false,
            Command::Reset { scenario } => {
                let next = match scenario {
                    Some(path) => Scenario::load(path)?,
                    None => self.scenario.clone(),
                };
                *self = Simulation::new(next)?;
            }
        }
        Ok(())
    }

    /// Human frame the controller sees this tick.
    fn ingest(&mut self, t: f64) -> Frame {
        let eps = 1e-9 * self.period();
        while self.cursor < self.frames.len() && self.frames[self.cursor].t <= t + eps {
            let raw = self.frames[self.cursor].clone();
            self.perceived = Some(self.median.push(raw));
            self.cursor += 1;
        }
        let mut frame = self.perceived.clone().unwrap_or_else(|| Frame::empty(t));
        for (&k, &p) in &self.overrides {
            frame.set(k, Some(p));
        }
        frame
    }

    /// Runs one tick and advances the configuration.
    pub fn step(&mut self) -> Result<TickRecord, SimError> {
        let t = self.time();
        let frame = self.ingest(t);
        let stimuli = assign_valence(&frame, &self.valence);
        let target = self.target.pose_at(t);

        let started = Instant::now();
        let out = self.controller.tick(&self.q, &stimuli, &target)?;
        let compute = started.elapsed();

        let chain = self.controller.chain();
        let poses = chain.forward_kinematics(&self.q)?;
        let ee_p = out.ee.translation.vector;
        let elbow = poses.link(chain.elbow_link()).translation.vector;
        let world = &out.pps.world;

        let nearest = |p: &Vector3<f64>, idx: &[usize]| {
            idx.iter()
                .map(|&i| (world[i].position - p).norm())
                .fold(f64::INFINITY, f64::min)
        };

        let parts = self
            .part_taxels
            .iter()
            .map(|(part, idx)| {
                let peak = idx
                    .iter()
                    .copied()
                    .max_by(|&a, &b| {
                        out.pps.responses[a]
                            .activation
                            .partial_cmp(&out.pps.responses[b].activation)
                            .expect("finite activations")
                            .then(b.cmp(&a))
                    })
                    .expect("non-empty part");
                let activation = out.pps.responses[peak].activation;
                let agg = out.pps.part(*part).and_then(|s| s.outcome.active());
                let winner = if activation > 0.0 {
                    out.pps.responses[peak].winner
                } else {
                    None
                };
                PartRecord {
                    part: *part,
                    activation,
                    position: agg.map(|a| a.position),
                    normal: agg.map(|a| a.normal),
                    source: winner.map(|w| stimuli[w].label),
                    source_distance: winner.map(|w| nearest(&stimuli[w].position, idx)),
                }
            })
            .collect();

        let keypoints = Keypoint::ALL
            .iter()
            .map(|&label| {
                let position = frame.get(label).copied();
                KeypointRecord {
                    label,
                    position,
                    to_ee: position.map(|p| (p - ee_p).norm()),
                    to_elbow: position.map(|p| (p - elbow).norm()),
                    to_parts: self
                        .part_taxels
                        .iter()
                        .map(|(_, idx)| position.map(|p| nearest(&p, idx)))
                        .collect(),
                }
            })
            .collect();

        let record = TickRecord {
            tick: self.tick,
            t,
            q: self.q.clone(),
            qdot: out.qdot_cmd.clone(),
            bounds_lo: out.bounds.lo.clone(),
            bounds_hi: out.bounds.hi.clone(),
            ee: out.ee,
            target,
            ee_err: (target.translation.vector - ee_p).norm(),
            ee_err_rot: orientation_error(&target.rotation, &out.ee.rotation).norm(),
            parts,
            keypoints,
            flags: out.flags,
            link_origins: poses.links().iter().map(|p| p.translation.vector).collect(),
            taxels: world
                .iter()
                .zip(&out.pps.responses)
                .map(|(w, r)| TaxelRecord {
                    position: w.position,
                    activation: r.activation,
                })
                .collect(),
            compute,
        };
        self.q = out.q_next;
        self.tick += 1;
        Ok(record)
    }
}

/// Runs a scenario to completion.
pub fn run_scenario(scenario: Scenario) -> Result<Vec<TickRecord>, SimError> {
    let mut sim = Simulation::new(scenario)?;
    let mut records = Vec::with_capacity(sim.scenario().ticks() as usize);
    while !sim.is_finished() {
        records.push(sim.step()?);
    }
    Ok(records)
}
