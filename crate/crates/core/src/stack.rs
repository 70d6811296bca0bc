//! The full per-tick pipeline: taxel responses, aggregation, avoidance
//! bounds, the tracking QP, smoothing and integration.

use nalgebra::DVector;

use crate::chain::{KinematicChain, Pose};
use crate::controller::{
    avoidance_constraints, integrate, solve_tick, ControlPoint, ControllerConfig, MinJerkFilter, SolveStatus,
    TickSolution, VelocityBounds,
};
use crate::error::{Error, Result};
use crate::pps::{evaluate, PpsEvaluation, ReceptiveField, Stimulus};
use crate::scalar::{clamp, Real};
use crate::skin::SkinLayout;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TickFlags {
    /// Some control point exceeded the activation threshold.
    pub avoidance: bool,
    /// Opposing constraints were reconciled on at least one joint.
    pub conflict: bool,
    /// The QP could not be solved; zero velocity was requested.
    pub infeasible: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TickOutput<T: Real> {
    /// End-effector pose at the tick's input configuration.
    pub ee: Pose<T>,
    pub pps: PpsEvaluation<T>,
    pub control_points: Vec<ControlPoint<T>>,
    pub bounds: VelocityBounds<T>,
    pub solution: TickSolution<T>,
    /// Smoothed velocity actually integrated.
    pub qdot_cmd: DVector<T>,
    pub q_next: DVector<T>,
    pub flags: TickFlags,
}

/// One arm's reaching-with-avoidance controller.
///
/// The smoothing filter delays the solver's velocities by a few ticks. To
/// keep the one-step-ahead tracking loop stable, the pose handed to the QP
/// is the one the arm reaches once the motion still queued in the filter has
/// played out.
#[derive(Clone, Debug)]
pub struct ReactiveController<T: Real> {
    chain: KinematicChain<T>,
    skin: SkinLayout<T>,
    rf: ReceptiveField<T>,
    cfg: ControllerConfig<T>,
    filter: MinJerkFilter<T>,
}

impl<T: Real> ReactiveController<T> {
    pub fn new(
        chain: KinematicChain<T>,
        skin: SkinLayout<T>,
        rf: ReceptiveField<T>,
        cfg: ControllerConfig<T>,
    ) -> Result<Self> {
        if let Some(t) = skin.taxels().iter().find(|t| t.link >= chain.dof()) {
            return Err(Error::Skin(format!("taxel {} is mounted on a missing link", t.id)));
        }
        let filter = MinJerkFilter::new(chain.dof(), cfg.period, cfg.filter_time);
        Ok(Self {
            chain,
            skin,
            rf,
            cfg,
            filter,
        })
    }

    pub fn chain(&self) -> &KinematicChain<T> {
        &self.chain
    }

    pub fn skin(&self) -> &SkinLayout<T> {
        &self.skin
    }

    pub fn receptive_field(&self) -> &ReceptiveField<T> {
        &self.rf
    }

    pub fn config(&self) -> &ControllerConfig<T> {
        &self.cfg
    }

    pub fn reset(&mut self) {
        self.filter.reset();
    }

    pub fn tick(&mut self, q: &DVector<T>, stimuli: &[Stimulus<T>], target: &Pose<T>) -> Result<TickOutput<T>> {
        let chain = &self.chain;
        let cfg = &self.cfg;
        let poses = chain.forward_kinematics(q)?;
        let pps = evaluate(&self.skin, self.skin.world(&poses), stimuli, &self.rf);

        let control_points: Vec<_> = pps
            .parts
            .iter()
            .filter_map(|(_, state)| {
                let agg = state.outcome.active()?;
                let link = state.link?;
                Some(ControlPoint {
                    aggregate: *agg,
                    jacobian: poses.world_point_jacobian(link, &agg.position),
                })
            })
            .collect();
        let bounds = avoidance_constraints(&control_points, chain, q, cfg);

        let pending = self.filter.pending_displacement(cfg.period);
        let settled = DVector::from_fn(chain.dof(), |j, _| {
            clamp(q[j] + pending[j], chain.q_lo()[j], chain.q_hi()[j])
        });
        let settled_poses = chain.forward_kinematics(&settled)?;
        let solution = solve_tick(
            chain,
            q,
            settled_poses.ee(),
            target,
            &bounds,
            &settled_poses.ee_jacobian(),
            cfg,
        )?;

        let qdot_cmd = if bounds.is_consistent() {
            let smooth = self.filter.step(&solution.qdot);
            let ts = cfg.period;
            DVector::from_fn(chain.dof(), |j, _| {
                let lo = bounds.lo[j].max((chain.q_lo()[j] - q[j]) / ts);
                let hi = bounds.hi[j].min((chain.q_hi()[j] - q[j]) / ts);
                clamp(smooth[j], lo, hi.max(lo))
            })
        } else {
            self.filter.reset();
            DVector::zeros(chain.dof())
        };
        let q_next = integrate(chain, q, &qdot_cmd, cfg);

        let flags = TickFlags {
            avoidance: control_points
                .iter()
                .any(|c| c.aggregate.activation > cfg.activation_threshold),
            conflict: !bounds.conflicts.is_empty(),
            infeasible: solution.status == SolveStatus::Emergency,
        };
        Ok(TickOutput {
            ee: *poses.ee(),
            pps,
            control_points,
            bounds,
            solution,
            qdot_cmd,
            q_next,
            flags,
        })
    }
}
