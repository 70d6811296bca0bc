//! Per-tick reaching with active avoidance.
//!
//! Each tick the PPS control points reshape the joint-velocity box, a
//! one-step-ahead pose-tracking QP picks the joint velocities inside it, the
//! result is smoothed and integrated into the next position command.

mod bounds;
mod filter;
pub mod qp;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix6xX, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

pub use bounds::{avoidance_constraints, repulsion, BoundSource, ControlPoint, VelocityBounds};
pub use filter::MinJerkFilter;

use crate::chain::{orientation_error, KinematicChain, Pose};
use crate::error::{Error, Result};
use crate::scalar::{clamp, lit, max, min, Real};

/// Controller parameters, radians internally.
#[derive(Clone, Debug, PartialEq)]
pub struct ControllerConfig<T> {
    /// Tick period, s.
    pub period: T,
    /// Avoidance gain `V_C`.
    pub avoidance_gain: T,
    /// Weight of the orientation error term.
    pub orientation_weight: T,
    /// Aggregates at or below this activation leave the bounds untouched.
    pub activation_threshold: T,
    /// Characteristic time of the velocity smoothing filter, s.
    pub filter_time: T,
    /// Symmetric nominal joint-velocity limit, rad/s.
    pub nominal_velocity: T,
}

impl<T: Real> Default for ControllerConfig<T> {
    fn default() -> Self {
        Self::from_file(&ControllerConfigFile::default()).expect("defaults are valid")
    }
}

/// On-disk form of [`ControllerConfig`]; angles in degrees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfigFile {
    pub period_s: f64,
    pub avoidance_gain: f64,
    pub orientation_weight: f64,
    pub activation_threshold: f64,
    pub filter_time_s: f64,
    pub nominal_velocity_deg_s: f64,
}

impl Default for ControllerConfigFile {
    fn default() -> Self {
        Self {
            period_s: 0.020,
            avoidance_gain: 1.0,
            orientation_weight: 0.5,
            activation_threshold: 0.2,
            filter_time_s: 0.1,
            nominal_velocity_deg_s: 25.0,
        }
    }
}

impl<T: Real> ControllerConfig<T> {
    pub fn from_file(f: &ControllerConfigFile) -> Result<Self> {
        if !(f.period_s > 0.0) {
            return Err(Error::Config("period must be positive".into()));
        }
        if !(f.activation_threshold > 0.0 && f.activation_threshold < 1.0) {
            return Err(Error::Config("activation threshold must lie in (0, 1)".into()));
        }
        if !(f.orientation_weight >= 0.0) {
            return Err(Error::Config("orientation weight must be non-negative".into()));
        }
        if !(f.avoidance_gain >= 0.0) || !(f.filter_time_s >= 0.0) || !(f.nominal_velocity_deg_s > 0.0) {
            return Err(Error::Config(
                "gain, filter time and nominal velocity must be non-negative".into(),
            ));
        }
        Ok(Self {
            period: lit(f.period_s),
            avoidance_gain: lit(f.avoidance_gain),
            orientation_weight: lit(f.orientation_weight),
            activation_threshold: lit(f.activation_threshold),
            filter_time: lit(f.filter_time_s),
            nominal_velocity: lit(f.nominal_velocity_deg_s.to_radians()),
        })
    }
}

/// Desired end-effector pose, either fixed or moving on a circle with a
/// fixed orientation.
#[derive(Clone, Debug, PartialEq)]
pub enum ControlTarget<T: Real> {
    Static(Pose<T>),
    Circle {
        center: Vector3<T>,
        radius: T,
        period: T,
        /// In-plane unit axes; the target starts at `center + radius * u`.
        u: Vector3<T>,
        v: Vector3<T>,
        orientation: UnitQuaternion<T>,
        /// Time at which the circle starts; the target holds its start
        /// point before then.
        start: T,
    },
}

impl<T: Real> ControlTarget<T> {
    pub fn circle(
        center: Vector3<T>,
        radius: T,
        period: T,
        normal: Vector3<T>,
        start_direction: Vector3<T>,
        orientation: UnitQuaternion<T>,
        start: T,
    ) -> Result<Self> {
        if !(radius > T::zero()) || !(period > T::zero()) {
            return Err(Error::Config("circle radius and period must be positive".into()));
        }
        let n = normal
            .try_normalize(T::default_epsilon())
            .ok_or_else(|| Error::Config("zero circle normal".into()))?;
        let u = start_direction - n * n.dot(&start_direction);
        let u = u
            .try_normalize(T::default_epsilon())
            .ok_or_else(|| Error::Config("circle start direction parallel to its normal".into()))?;
        Ok(ControlTarget::Circle {
            center,
            radius,
            period,
            u,
            v: n.cross(&u),
            orientation,
            start,
        })
    }

    pub fn pose_at(&self, t: T) -> Pose<T> {
        match self {
            ControlTarget::Static(p) => *p,
            ControlTarget::Circle {
                center,
                radius,
                period,
                u,
                v,
                orientation,
                start,
            } => {
                let elapsed = max(t - *start, T::zero());
                let phase = lit::<T>(2.0 * PI) * elapsed / *period;
                let p = center + (u * phase.cos() + v * phase.sin()) * *radius;
                Pose::from_parts(Translation3::from(p), *orientation)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// Constraint set empty or solver failure: zero velocity was emitted.
    Emergency,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TickSolution<T: Real> {
    pub qdot: DVector<T>,
    pub status: SolveStatus,
    /// Objective value at `qdot`.
    pub objective: T,
    pub iterations: usize,
}

/// Weighted pose-tracking least squares for one tick, in the form
/// `0.5 x' H x + g' x + c`.
#[derive(Clone, Debug, PartialEq)]
pub struct TickObjective<T: Real> {
    pub hessian: DMatrix<T>,
    pub gradient: DVector<T>,
    pub constant: T,
}

impl<T: Real> TickObjective<T> {
    pub fn new(
        position_error: &Vector3<T>,
        orientation_error: &Vector3<T>,
        jacobian: &Matrix6xX<T>,
        cfg: &ControllerConfig<T>,
    ) -> Self {
        let ts = cfg.period;
        let w = cfg.orientation_weight;
        let jp = jacobian.fixed_rows::<3>(0);
        let jo = jacobian.fixed_rows::<3>(3);
        let two = lit::<T>(2.0);
        let hessian = (jp.transpose() * jp + jo.transpose() * jo * w) * (two * ts * ts);
        let gradient = (jp.transpose() * position_error + jo.transpose() * orientation_error * w) * (-two * ts);
        let constant = position_error.norm_squared() + orientation_error.norm_squared() * w;
        Self {
            hessian,
            gradient,
            constant,
        }
    }

    pub fn value(&self, x: &DVector<T>) -> T {
        (x.transpose() * &self.hessian * x)[(0, 0)] * lit(0.5) + self.gradient.dot(x) + self.constant
    }
}

/// Intersects `bounds` with the one-step joint-position box.
fn feasible_box<T: Real>(
    chain: &KinematicChain<T>,
    q: &DVector<T>,
    bounds: &VelocityBounds<T>,
    ts: T,
) -> (DVector<T>, DVector<T>) {
    let n = chain.dof();
    let lo = DVector::from_fn(n, |j, _| max(bounds.lo[j], (chain.q_lo()[j] - q[j]) / ts));
    let hi = DVector::from_fn(n, |j, _| min(bounds.hi[j], (chain.q_hi()[j] - q[j]) / ts));
    (lo, hi)
}

/// Joint velocities minimizing the weighted one-step-ahead pose error
/// `|e_p - T_S J_p qdot|^2 + w_o |e_o - T_S J_o qdot|^2` inside `bounds`
/// and the one-step joint-position limits.
pub fn solve_tick<T: Real>(
    chain: &KinematicChain<T>,
    q: &DVector<T>,
    current: &Pose<T>,
    target: &Pose<T>,
    bounds: &VelocityBounds<T>,
    jacobian: &Matrix6xX<T>,
    cfg: &ControllerConfig<T>,
) -> Result<TickSolution<T>> {
    let n = chain.dof();
    if q.len() != n || bounds.dof() != n || jacobian.ncols() != n {
        return Err(Error::Dimension {
            expected: n,
            got: q.len().min(bounds.dof()).min(jacobian.ncols()),
        });
    }
    let e_p = target.translation.vector - current.translation.vector;
    let e_o = orientation_error(&target.rotation, &current.rotation);
    let objective = TickObjective::new(&e_p, &e_o, jacobian, cfg);
    let (lo, hi) = feasible_box(chain, q, bounds, cfg.period);

    match qp::solve_box_qp(&objective.hessian, &objective.gradient, &lo, &hi) {
        Ok(sol) => Ok(TickSolution {
            objective: objective.value(&sol.x),
            qdot: sol.x,
            status: SolveStatus::Optimal,
            iterations: sol.iterations,
        }),
        Err(e) => {
            log::warn!("tick QP failed ({e}); emitting zero velocity");
            let zero = DVector::zeros(n);
            Ok(TickSolution {
                objective: objective.value(&zero),
                qdot: zero,
                status: SolveStatus::Emergency,
                iterations: 0,
            })
        }
    }
}

/// Next position command `clamp(q + T_S qdot, q_lo, q_hi)`.
pub fn integrate<T: Real>(
    chain: &KinematicChain<T>,
    q: &DVector<T>,
    qdot: &DVector<T>,
    cfg: &ControllerConfig<T>,
) -> DVector<T> {
    DVector::from_fn(chain.dof(), |j, _| {
        clamp(q[j] + qdot[j] * cfg.period, chain.q_lo()[j], chain.q_hi()[j])
    })
}
