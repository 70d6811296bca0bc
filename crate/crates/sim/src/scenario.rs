//! Scenario files and the configs they reference.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use nalgebra::{DVector, Quaternion, Translation3, UnitQuaternion, Vector3};
use pps_core::perception::{parse_keypoint_stream, synth_trajectory};
use pps_core::skin::load_skin_layout;
use pps_core::{
    Chain, ChainConfig, ControlTarget, Controller, ControllerConfig, ControllerConfigFile, Field, Frame, Keypoint,
    Pose, RfConfig, SkinConfig, TrajectorySpec, ValenceMap,
};
use serde::{Deserialize, Serialize};

use crate::SimError;

/// Receptive-field and controller parameters shared by all scenarios.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MainConfig {
    pub receptive_field: RfConfig,
    pub controller: ControllerConfigFile,
    /// Width of the keypoint median filter, in frames.
    pub median_window: usize,
}

impl Default for MainConfig {
    fn default() -> Self {
        Self {
            receptive_field: RfConfig::default(),
            controller: ControllerConfigFile::default(),
            median_window: 5,
        }
    }
}

/// Desired end-effector motion. Missing positions and orientations default
/// to the end-effector pose at the home configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    Static {
        #[serde(default)]
        position: Option<[f64; 3]>,
        /// Unit quaternion `[w, x, y, z]`.
        #[serde(default)]
        orientation: Option<[f64; 4]>,
    },
    Circle {
        radius: f64,
        period: f64,
        normal: [f64; 3],
        /// The target starts at `center + radius * start_direction`.
        start_direction: [f64; 3],
        /// Defaults to the point that puts the start of the circle on the
        /// home end-effector position.
        #[serde(default)]
        center: Option<[f64; 3]>,
        #[serde(default)]
        orientation: Option<[f64; 4]>,
        #[serde(default)]
        start_time: f64,
    },
}

impl TargetSpec {
    pub fn resolve(&self, home: &Pose<f64>) -> Result<ControlTarget<f64>, SimError> {
        let orientation = |o: &Option<[f64; 4]>| -> Result<UnitQuaternion<f64>, SimError> {
            match o {
                None => Ok(home.rotation),
                Some([w, x, y, z]) => {
                    let q = Quaternion::new(*w, *x, *y, *z);
                    if !q.coords.iter().all(|v| v.is_finite()) || q.norm() < 1e-9 {
                        return Err(SimError::Invalid(
                            "target orientation must be a finite non-zero quaternion".into(),
                        ));
                    }
                    Ok(UnitQuaternion::from_quaternion(q))
                }
            }
        };
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            TargetSpec::Static {
                position,
                orientation: o,
            } => {
                let p = match position {
                    Some(p) if finite(p) => Vector3::from(*p),
                    Some(_) => return Err(SimError::Invalid("non-finite target position".into())),
                    None => home.translation.vector,
                };
                Ok(ControlTarget::Static(Pose::from_parts(
                    Translation3::from(p),
                    orientation(o)?,
                )))
            }
            TargetSpec::Circle {
                radius,
                period,
                normal,
                start_direction,
                center,
                orientation: o,
                start_time,
            } => {
                if !finite(normal) || !finite(start_direction) || !finite(&[*radius, *period, *start_time]) {
                    return Err(SimError::Invalid("non-finite circle parameters".into()));
                }
                let n = Vector3::from(*normal);
                let d = Vector3::from(*start_direction);
                let probe =
                    ControlTarget::circle(Vector3::zeros(), *radius, *period, n, d, home.rotation, *start_time)?;
                let center = match center {
                    Some(c) if finite(c) => Vector3::from(*c),
                    Some(_) => return Err(SimError::Invalid("non-finite circle center".into())),
                    None => home.translation.vector - probe.pose_at(*start_time).translation.vector,
                };
                Ok(ControlTarget::circle(
                    center,
                    *radius,
                    *period,
                    n,
                    d,
                    orientation(o)?,
                    *start_time,
                )?)
            }
        }
    }
}

/// Where the human keypoints come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HumanSpec {
    Synth {
        trajectory: TrajectorySpec,
    },
    /// Newline-delimited JSON keypoint records, relative to the scenario file.
    Stream {
        path: PathBuf,
    },
}

/// Scenario as written on disk. Paths are relative to the scenario file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub chain: PathBuf,
    pub skin: PathBuf,
    pub config: PathBuf,
    /// Initial joint configuration, degrees.
    pub home_deg: Vec<f64>,
    pub target: TargetSpec,
    #[serde(default)]
    pub human: Option<HumanSpec>,
    #[serde(default)]
    pub valence: BTreeMap<Keypoint, f64>,
    /// Simulated time, s.
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Human input after loading: either a script to synthesize or recorded frames.
#[derive(Clone, Debug, PartialEq)]
pub enum HumanSource {
    None,
    Synth(TrajectorySpec),
    Frames(Vec<Frame>),
}

/// A fully loaded, cross-validated scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub chain: ChainConfig,
    pub skin: SkinConfig,
    pub config: MainConfig,
    /// Initial joint configuration, radians.
    pub home: DVector<f64>,
    pub target: TargetSpec,
    pub human: HumanSource,
    pub valence: BTreeMap<Keypoint, f64>,
    pub duration: f64,
    pub seed: u64,
    /// File the scenario was read from, if any.
    pub source: Option<PathBuf>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, SimError> {
    let text = fs::read_to_string(path).map_err(|source| SimError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| SimError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a main config file on its own.
pub fn read_main_config(path: &Path) -> Result<MainConfig, SimError> {
    read_json(path)
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let path = path.as_ref();
        let file: ScenarioFile = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let chain: ChainConfig = read_json(&base.join(&file.chain))?;
        let skin: SkinConfig = read_json(&base.join(&file.skin))?;
        let config: MainConfig = read_json(&base.join(&file.config))?;
        let human = match file.human {
            None => HumanSource::None,
            Some(HumanSpec::Synth { trajectory }) => HumanSource::Synth(trajectory),
            Some(HumanSpec::Stream { path: rel }) => {
                let p = base.join(rel);
                let f = fs::File::open(&p).map_err(|source| SimError::Io {
                    path: p.clone(),
                    source,
                })?;
                let parsed = parse_keypoint_stream(BufReader::new(f))?;
                if parsed.skipped > 0 {
                    log::warn!("{}: skipped {} malformed records", p.display(), parsed.skipped);
                }
                HumanSource::Frames(parsed.frames)
            }
        };
        let scenario = Scenario {
            name: file.name,
            chain,
            skin,
            config,
            home: DVector::from_iterator(file.home_deg.len(), file.home_deg.iter().map(|d| d.to_radians())),
            target: file.target,
            human,
            valence: file.valence,
            duration: file.duration,
            seed: file.seed,
            source: Some(path.to_path_buf()),
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Number of ticks the scenario runs for.
    pub fn ticks(&self) -> u64 {
        (self.duration / self.config.controller.period_s).round() as u64
    }

    /// Builds the controller and checks that chain, skin, configs and
    /// scenario agree with each other.
    pub fn build(&self) -> Result<Built, SimError> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(SimError::Invalid(format!(
                "duration {} must be positive",
                self.duration
            )));
        }
        let chain = Chain::from_config(&self.chain)?;
        let n = chain.dof();
        if self.home.len() != n {
            return Err(SimError::Mismatch(format!(
                "home has {} joints, chain has {n}",
                self.home.len()
            )));
        }
        for j in 0..n {
            if !(self.home[j] >= chain.q_lo()[j] && self.home[j] <= chain.q_hi()[j]) {
                return Err(SimError::Mismatch(format!("home joint {j} is outside its limits")));
            }
        }
        let skin = load_skin_layout::<f64>(&self.skin, n).map_err(|e| SimError::Mismatch(e.to_string()))?;
        let rf = Field::from_config(&self.config.receptive_field)?;
        let cfg = ControllerConfig::<f64>::from_file(&self.config.controller)?;
        let valence = ValenceMap::new(self.valence.clone())?;
        let home_pose = *chain.forward_kinematics(&self.home)?.ee();
        let target = self.target.resolve(&home_pose)?;
        let frames = match &self.human {
            HumanSource::None => Vec::new(),
            HumanSource::Frames(f) => f.clone(),
            HumanSource::Synth(spec) => {
                let spec = TrajectorySpec {
                    seed: self.seed,
                    ..spec.clone()
                };
                synth_trajectory(&spec, cfg.period)?
            }
        };
        let controller = Controller::new(chain, skin, rf, cfg)?;
        Ok(Built {
            controller,
            target,
            valence,
            frames,
        })
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let w = self.config.median_window;
        if w == 0 || w.is_multiple_of(2) {
            return Err(SimError::Invalid(format!("median window {w} must be odd")));
        }
        self.build().map(|_| ())
    }
}

/// Runtime objects derived from a [`Scenario`].
#[derive(Clone, Debug)]
pub struct Built {
    pub controller: Controller,
    pub target: ControlTarget<f64>,
    pub valence: ValenceMap<f64>,
    pub frames: Vec<Frame>,
}
