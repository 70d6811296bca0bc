//! Joint-velocity bounds reshaped by PPS control points.

use nalgebra::{DVector, Matrix3xX};

use crate::chain::KinematicChain;
use crate::pps::PpsAggregate;
use crate::scalar::{clamp, max, min, Real};

use super::ControllerConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundSource {
    Nominal,
    Avoidance,
    JointLimit,
}

/// Admissible joint-velocity box for one tick.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityBounds<T: Real> {
    pub lo: DVector<T>,
    pub hi: DVector<T>,
    pub lo_source: Vec<BoundSource>,
    pub hi_source: Vec<BoundSource>,
    /// Joints where opposing constraints had to be reconciled this tick.
    pub conflicts: Vec<usize>,
}

impl<T: Real> VelocityBounds<T> {
    /// Nominal limits: the chain's velocity limits, further capped by the
    /// configured symmetric nominal limit.
    pub fn nominal(chain: &KinematicChain<T>, cfg: &ControllerConfig<T>) -> Self {
        let n = chain.dof();
        Self {
            lo: DVector::from_fn(n, |j, _| max(chain.v_lo()[j], -cfg.nominal_velocity)),
            hi: DVector::from_fn(n, |j, _| min(chain.v_hi()[j], cfg.nominal_velocity)),
            lo_source: vec![BoundSource::Nominal; n],
            hi_source: vec![BoundSource::Nominal; n],
            conflicts: Vec::new(),
        }
    }

    pub fn dof(&self) -> usize {
        self.lo.len()
    }

    pub fn is_consistent(&self) -> bool {
        self.lo.iter().zip(self.hi.iter()).all(|(l, h)| l <= h)
    }

    pub fn is_nominal(&self) -> bool {
        self.lo_source
            .iter()
            .chain(&self.hi_source)
            .all(|s| *s == BoundSource::Nominal)
    }

    pub fn contains(&self, qdot: &DVector<T>, tol: T) -> bool {
        (0..self.dof()).all(|j| qdot[j] >= self.lo[j] - tol && qdot[j] <= self.hi[j] + tol)
    }

    pub fn clamp(&self, qdot: &DVector<T>) -> DVector<T> {
        DVector::from_fn(self.dof(), |j, _| clamp(qdot[j], self.lo[j], self.hi[j]))
    }
}

/// Aggregate plus the positional Jacobian of its control point.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlPoint<T: Real> {
    pub aggregate: PpsAggregate<T>,
    pub jacobian: Matrix3xX<T>,
}

/// Joint-space repulsion `s = -J_C' n_C V_C a_PPS` of one control point.
pub fn repulsion<T: Real>(point: &ControlPoint<T>, gain: T) -> DVector<T> {
    let agg = &point.aggregate;
    -(point.jacobian.transpose() * agg.normal) * (gain * agg.activation)
}

/// Builds the velocity box for the current tick.
///
/// Starting from the nominal limits, every control point above the
/// activation threshold forces its retreat direction: a positive `s_j`
/// raises the lower bound of joint `j` to `s_j`, a negative one lowers the
/// upper bound to `s_j`. Several points combine by keeping the most
/// restrictive bound. When a joint ends up with `lo > hi`, the bound owned
/// by the point with the larger activation is kept and the other collapses
/// onto it. Finally the box is intersected with the one-step joint-position
/// feasibility interval, which wins any remaining conflict.
pub fn avoidance_constraints<T: Real>(
    points: &[ControlPoint<T>],
    chain: &KinematicChain<T>,
    q: &DVector<T>,
    cfg: &ControllerConfig<T>,
) -> VelocityBounds<T> {
    let n = chain.dof();
    let mut b = VelocityBounds::nominal(chain, cfg);
    let (v_lo, v_hi) = (b.lo.clone(), b.hi.clone());
    let mut lo_strength = vec![T::zero(); n];
    let mut hi_strength = vec![T::zero(); n];

    for point in points {
        let a = point.aggregate.activation;
        if !(a > cfg.activation_threshold) {
            continue;
        }
        let s = repulsion(point, cfg.avoidance_gain);
        for j in 0..n {
            if s[j] > T::zero() {
                let bound = min(s[j], v_hi[j]);
                if bound > b.lo[j]
                    || (b.lo_source[j] == BoundSource::Avoidance && bound == b.lo[j] && a > lo_strength[j])
                {
                    b.lo[j] = bound;
                    b.lo_source[j] = BoundSource::Avoidance;
                    lo_strength[j] = a;
                }
            } else if s[j] < T::zero() {
                let bound = max(s[j], v_lo[j]);
                if bound < b.hi[j]
                    || (b.hi_source[j] == BoundSource::Avoidance && bound == b.hi[j] && a > hi_strength[j])
                {
                    b.hi[j] = bound;
                    b.hi_source[j] = BoundSource::Avoidance;
                    hi_strength[j] = a;
                }
            }
        }
    }

    for j in 0..n {
        if b.lo[j] > b.hi[j] {
            if lo_strength[j] >= hi_strength[j] {
                b.hi[j] = b.lo[j];
                b.hi_source[j] = BoundSource::Avoidance;
            } else {
                b.lo[j] = b.hi[j];
                b.lo_source[j] = BoundSource::Avoidance;
            }
            b.conflicts.push(j);
            log::debug!("joint {j}: opposing avoidance constraints collapsed");
        }
    }

    for j in 0..n {
        let pos_lo = (chain.q_lo()[j] - q[j]) / cfg.period;
        let pos_hi = (chain.q_hi()[j] - q[j]) / cfg.period;
        if pos_lo > b.lo[j] {
            b.lo[j] = pos_lo;
            b.lo_source[j] = BoundSource::JointLimit;
        }
        if pos_hi < b.hi[j] {
            b.hi[j] = pos_hi;
            b.hi_source[j] = BoundSource::JointLimit;
        }
        if b.lo[j] > b.hi[j] {
            // Avoidance pushing into a joint limit: the limit wins.
            if b.hi_source[j] == BoundSource::JointLimit {
                b.lo[j] = b.hi[j];
                b.lo_source[j] = BoundSource::JointLimit;
            } else {
                b.hi[j] = b.lo[j];
                b.hi_source[j] = BoundSource::JointLimit;
            }
            if !b.conflicts.contains(&j) {
                b.conflicts.push(j);
            }
        }
    }
    b
}
