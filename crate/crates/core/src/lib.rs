//! Pre-impact safety for a serial arm: distributed peripersonal-space
//! receptive fields on a virtual skin, valence modulation, and a per-tick
//! velocity-space reaching controller that turns PPS activations into
//! joint-velocity constraints.
//!
//! All numeric code is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar for the common cases.

// `!(a < b)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chain;
pub mod controller;
pub mod error;
pub mod perception;
pub mod pps;
pub mod scalar;
pub mod skin;
pub mod stack;

pub use chain::{ChainConfig, ChainPoses, DhRow, KinematicChain, Pose};
pub use controller::{ControlTarget, ControllerConfig, ControllerConfigFile, VelocityBounds};
pub use error::{Error, Result};
pub use perception::{HumanFrame, Keypoint, TrajectorySpec, ValenceMap};
pub use pps::{PpsAggregate, ReceptiveField, RfConfig, Stimulus};
pub use scalar::Real;
pub use skin::{BodyPart, SkinConfig, SkinLayout, Taxel};
pub use stack::{ReactiveController, TickFlags, TickOutput};

pub type Chain = KinematicChain<f64>;
pub type Chain32 = KinematicChain<f32>;
pub type Skin = SkinLayout<f64>;
pub type Skin32 = SkinLayout<f32>;
pub type Field = ReceptiveField<f64>;
pub type Field32 = ReceptiveField<f32>;
pub type Frame = HumanFrame<f64>;
pub type Controller = ReactiveController<f64>;
pub type Controller32 = ReactiveController<f32>;
