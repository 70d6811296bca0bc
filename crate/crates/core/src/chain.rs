//! Serial-chain kinematics in the standard (distal) Denavit-Hartenberg
//! convention.
//!
//! Link frame `i` is the frame attached after joint `i`, i.e. the product
//! `T_0 * T_1 * ... * T_i` with `T_k = Rz(q_k + offset_k) Tz(d_k) Tx(a_k) Rx(alpha_k)`.
//! Frame `n - 1` is the end-effector. Joint `j` rotates about the z axis of
//! the frame preceding it (the chain root for `j = 0`).

use nalgebra::{DVector, Isometry3, Matrix3xX, Matrix6xX, Point3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Rigid pose: position plus unit-quaternion orientation.
pub type Pose<T> = Isometry3<T>;

/// One row of the DH table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DhRow<T> {
    pub a: T,
    pub d: T,
    pub alpha: T,
    pub theta_offset: T,
}

impl<T: Real> DhRow<T> {
    pub fn new(a: T, d: T, alpha: T, theta_offset: T) -> Self {
        Self {
            a,
            d,
            alpha,
            theta_offset,
        }
    }

    /// Transform from the previous frame to this link's frame at joint angle `q`.
    pub fn transform(&self, q: T) -> Pose<T> {
        let rz = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), q + self.theta_offset);
        let rx = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), self.alpha);
        let screw_z = Isometry3::from_parts(Translation3::new(T::zero(), T::zero(), self.d), rz);
        let screw_x = Isometry3::from_parts(Translation3::new(self.a, T::zero(), T::zero()), rx);
        screw_z * screw_x
    }
}

/// Chain geometry as stored on disk. Angles are in degrees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub links: Vec<DhRowConfig>,
    pub q_limits_deg: Vec<[f64; 2]>,
    pub v_limits_deg_s: Vec<[f64; 2]>,
    /// Link whose frame origin is reported as the elbow; defaults to `n / 2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elbow_link: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DhRowConfig {
    pub a: f64,
    pub d: f64,
    /// Link twist, degrees.
    pub alpha: f64,
    /// Joint angle offset, degrees.
    pub theta_offset: f64,
}

impl ChainConfig {
    /// Generic anthropomorphic 7-DoF arm: 3-DoF shoulder, elbow, forearm roll
    /// and a 2-DoF wrist. Upper arm 0.22 m, forearm 0.20 m, hand 0.08 m.
    /// Stretched straight up along the root z axis at `q = 0`.
    pub fn default_arm() -> Self {
        let row = |d: f64, alpha: f64| DhRowConfig {
            a: 0.0,
            d,
            alpha,
            theta_offset: 0.0,
        };
        Self {
            links: vec![
                row(0.0, -90.0),
                row(0.0, 90.0),
                row(0.22, -90.0),
                row(0.0, 90.0),
                row(0.20, -90.0),
                row(0.0, 90.0),
                row(0.08, 0.0),
            ],
            q_limits_deg: vec![
                [-170.0, 170.0],
                [-120.0, 120.0],
                [-170.0, 170.0],
                [-5.0, 150.0],
                [-170.0, 170.0],
                [-100.0, 100.0],
                [-170.0, 170.0],
            ],
            v_limits_deg_s: vec![[-25.0, 25.0]; 7],
            elbow_link: Some(3),
        }
    }
}

/// DH-parameterized serial arm with position and nominal velocity limits.
#[derive(Clone, Debug, PartialEq)]
pub struct KinematicChain<T> {
    links: Vec<DhRow<T>>,
    q_lo: DVector<T>,
    q_hi: DVector<T>,
    v_lo: DVector<T>,
    v_hi: DVector<T>,
    elbow_link: usize,
}

impl<T: Real> KinematicChain<T> {
    pub fn new(links: Vec<DhRow<T>>, q_limits: &[(T, T)], v_limits: &[(T, T)]) -> Result<Self> {
        let n = links.len();
        if n == 0 {
            return Err(Error::Chain("chain needs at least one link".into()));
        }
        if q_limits.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: q_limits.len(),
            });
        }
        if v_limits.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: v_limits.len(),
            });
        }
        for (j, (lo, hi)) in q_limits.iter().enumerate() {
            if !(lo < hi) {
                return Err(Error::Chain(format!("joint {j}: q_lo must be < q_hi")));
            }
        }
        for (j, (lo, hi)) in v_limits.iter().enumerate() {
            if !(*lo < T::zero() && T::zero() < *hi) {
                return Err(Error::Chain(format!("joint {j}: need v_lo < 0 < v_hi")));
            }
        }
        Ok(Self {
            q_lo: DVector::from_iterator(n, q_limits.iter().map(|l| l.0)),
            q_hi: DVector::from_iterator(n, q_limits.iter().map(|l| l.1)),
            v_lo: DVector::from_iterator(n, v_limits.iter().map(|l| l.0)),
            v_hi: DVector::from_iterator(n, v_limits.iter().map(|l| l.1)),
            elbow_link: n / 2,
            links,
        })
    }

    pub fn from_config(cfg: &ChainConfig) -> Result<Self> {
        let deg = |x: f64| lit::<T>(x.to_radians());
        let links = cfg
            .links
            .iter()
            .map(|r| DhRow::new(lit(r.a), lit(r.d), deg(r.alpha), deg(r.theta_offset)))
            .collect();
        let q: Vec<_> = cfg.q_limits_deg.iter().map(|l| (deg(l[0]), deg(l[1]))).collect();
        let v: Vec<_> = cfg.v_limits_deg_s.iter().map(|l| (deg(l[0]), deg(l[1]))).collect();
        let mut chain = Self::new(links, &q, &v)?;
        if let Some(elbow) = cfg.elbow_link {
            if elbow >= chain.dof() {
                return Err(Error::LinkIndex {
                    index: elbow,
                    dof: chain.dof(),
                });
            }
            chain.elbow_link = elbow;
        }
        Ok(chain)
    }

    pub fn dof(&self) -> usize {
        self.links.len()
    }

    pub fn links(&self) -> &[DhRow<T>] {
        &self.links
    }

    pub fn q_lo(&self) -> &DVector<T> {
        &self.q_lo
    }

    pub fn q_hi(&self) -> &DVector<T> {
        &self.q_hi
    }

    pub fn v_lo(&self) -> &DVector<T> {
        &self.v_lo
    }

    pub fn v_hi(&self) -> &DVector<T> {
        &self.v_hi
    }

    pub fn elbow_link(&self) -> usize {
        self.elbow_link
    }

    fn check_dim(&self, q: &DVector<T>) -> Result<()> {
        if q.len() != self.dof() {
            return Err(Error::Dimension {
                expected: self.dof(),
                got: q.len(),
            });
        }
        Ok(())
    }

    /// Link frames for configuration `q`, expressed in the chain root frame.
    ///
    /// Positions outside the joint limits are evaluated anyway and reported
    /// with a warning; the controller enforces the limits.
    pub fn forward_kinematics(&self, q: &DVector<T>) -> Result<ChainPoses<T>> {
        self.check_dim(q)?;
        if let Some(j) = (0..self.dof()).find(|&j| q[j] < self.q_lo[j] || q[j] > self.q_hi[j]) {
            log::warn!("joint {j} outside its position limits");
        }
        let mut frames = Vec::with_capacity(self.dof());
        let mut acc = Pose::identity();
        for (row, &qj) in self.links.iter().zip(q.iter()) {
            acc *= row.transform(qj);
            frames.push(acc);
        }
        Ok(ChainPoses { frames })
    }

    /// Positional Jacobian (3 x n) of a point rigidly attached to `link`.
    pub fn point_jacobian(&self, q: &DVector<T>, link: usize, local_point: &Vector3<T>) -> Result<Matrix3xX<T>> {
        let poses = self.forward_kinematics(q)?;
        poses.point_jacobian(link, local_point)
    }

    /// Full 6 x n end-effector Jacobian: linear rows on top, angular below.
    pub fn ee_jacobian(&self, q: &DVector<T>) -> Result<Matrix6xX<T>> {
        Ok(self.forward_kinematics(q)?.ee_jacobian())
    }
}

/// Link frames produced by [`KinematicChain::forward_kinematics`].
#[derive(Clone, Debug, PartialEq)]
pub struct ChainPoses<T: Real> {
    frames: Vec<Pose<T>>,
}

impl<T: Real> ChainPoses<T> {
    /// Frame of link `i` (after joint `i`).
    pub fn link(&self, i: usize) -> &Pose<T> {
        &self.frames[i]
    }

    pub fn links(&self) -> &[Pose<T>] {
        &self.frames
    }

    pub fn ee(&self) -> &Pose<T> {
        self.frames.last().expect("non-empty chain")
    }

    pub fn dof(&self) -> usize {
        self.frames.len()
    }

    /// Frame about whose z axis joint `j` rotates.
    fn joint_frame(&self, j: usize) -> Pose<T> {
        if j == 0 {
            Pose::identity()
        } else {
            self.frames[j - 1]
        }
    }

    pub fn point_jacobian(&self, link: usize, local_point: &Vector3<T>) -> Result<Matrix3xX<T>> {
        if link >= self.dof() {
            return Err(Error::LinkIndex {
                index: link,
                dof: self.dof(),
            });
        }
        let p = self.frames[link] * Point3::from(*local_point);
        Ok(self.world_point_jacobian(link, &p.coords))
    }

    /// Same as [`Self::point_jacobian`] for a point already given in world
    /// coordinates (still moving rigidly with `link`).
    pub fn world_point_jacobian(&self, link: usize, p: &Vector3<T>) -> Matrix3xX<T> {
        let n = self.dof();
        let mut jac = Matrix3xX::zeros(n);
        for j in 0..=link.min(n - 1) {
            let f = self.joint_frame(j);
            let z = f.rotation * Vector3::z();
            jac.set_column(j, &z.cross(&(p - f.translation.vector)));
        }
        jac
    }

    pub fn ee_jacobian(&self) -> Matrix6xX<T> {
        let n = self.dof();
        let p = self.ee().translation.vector;
        let mut jac = Matrix6xX::zeros(n);
        for j in 0..n {
            let f = self.joint_frame(j);
            let z = f.rotation * Vector3::z();
            let lin = z.cross(&(p - f.translation.vector));
            jac.fixed_view_mut::<3, 1>(0, j).copy_from(&lin);
            jac.fixed_view_mut::<3, 1>(3, j).copy_from(&z);
        }
        jac
    }
}

/// Axis-angle vector (rad) of the rotation taking `current` to `desired`,
/// expressed in the root frame.
pub fn orientation_error<T: Real>(desired: &UnitQuaternion<T>, current: &UnitQuaternion<T>) -> Vector3<T> {
    (desired * current.inverse()).scaled_axis()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn planar(l1: f64, l2: f64) -> KinematicChain<f64> {
        let pi = std::f64::consts::PI;
        KinematicChain::new(
            vec![DhRow::new(l1, 0.0, 0.0, 0.0), DhRow::new(l2, 0.0, 0.0, 0.0)],
            &[(-pi, pi), (-pi, pi)],
            &[(-1.0, 1.0), (-1.0, 1.0)],
        )
        .unwrap()
    }

    #[test]
    fn zero_length_links_stay_at_origin() {
        let chain = KinematicChain::new(
            vec![DhRow::new(0.0, 0.0, 0.3, 0.0); 4],
            &[(-1.0, 1.0); 4],
            &[(-1.0, 1.0); 4],
        )
        .unwrap();
        let poses = chain.forward_kinematics(&DVector::zeros(4)).unwrap();
        for f in poses.links() {
            assert_relative_eq!(f.translation.vector.norm(), 0.0);
        }
    }

    #[test]
    fn default_arm_home_golden() {
        // Hand evaluation of the DH product at q = 0: every twist pair
        // (-90, +90) cancels, offsets stack along z: 0.22 + 0.20 + 0.08.
        let chain = KinematicChain::<f64>::from_config(&ChainConfig::default_arm()).unwrap();
        let ee = *chain.forward_kinematics(&DVector::zeros(7)).unwrap().ee();
        assert_relative_eq!(ee.translation.vector, Vector3::new(0.0, 0.0, 0.50), epsilon = 1e-12);
        assert_relative_eq!(ee.rotation.angle(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn planar_base_rotation_mirrors_ee() {
        let chain = planar(0.3, 0.2);
        let stretched = chain.forward_kinematics(&DVector::zeros(2)).unwrap();
        assert_relative_eq!(
            stretched.ee().translation.vector,
            Vector3::new(0.5, 0.0, 0.0),
            epsilon = 1e-12
        );
        let q = DVector::from_vec(vec![std::f64::consts::PI, 0.0]);
        let turned = chain.forward_kinematics(&q).unwrap();
        assert_relative_eq!(
            turned.ee().translation.vector,
            Vector3::new(-0.5, 0.0, 0.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn planar_first_column() {
        let chain = planar(0.3, 0.2);
        let jac = chain.point_jacobian(&DVector::zeros(2), 1, &Vector3::zeros()).unwrap();
        assert_relative_eq!(jac.column(0).into_owned(), Vector3::new(0.0, 0.5, 0.0), epsilon = 1e-12);
        assert_relative_eq!(jac.column(1).into_owned(), Vector3::new(0.0, 0.2, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn distal_columns_are_zero() {
        let chain = KinematicChain::<f64>::from_config(&ChainConfig::default_arm()).unwrap();
        let q = DVector::from_vec(vec![0.1, 0.4, -0.3, 1.2, 0.2, -0.5, 0.3]);
        for link in 0..7 {
            let jac = chain.point_jacobian(&q, link, &Vector3::new(0.01, 0.02, 0.03)).unwrap();
            for j in link + 1..7 {
                assert_eq!(jac.column(j).norm(), 0.0, "link {link} column {j}");
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let chain = planar(0.3, 0.2);
        assert!(matches!(
            chain.forward_kinematics(&DVector::zeros(3)),
            Err(Error::Dimension { expected: 2, got: 3 })
        ));
        assert!(matches!(
            chain.point_jacobian(&DVector::zeros(2), 2, &Vector3::zeros()),
            Err(Error::LinkIndex { index: 2, dof: 2 })
        ));
        assert!(KinematicChain::<f64>::new(vec![], &[], &[]).is_err());
        assert!(KinematicChain::new(vec![DhRow::new(0.1, 0.0, 0.0, 0.0)], &[(1.0, -1.0)], &[(-1.0, 1.0)]).is_err());
        assert!(KinematicChain::new(vec![DhRow::new(0.1, 0.0, 0.0, 0.0)], &[(-1.0, 1.0)], &[(0.1, 1.0)]).is_err());
    }

    #[test]
    fn frames_chain_by_dh_transform() {
        let chain = KinematicChain::<f64>::from_config(&ChainConfig::default_arm()).unwrap();
        let q = DVector::from_vec(vec![0.3, -0.2, 0.5, 0.9, -0.4, 0.7, 0.1]);
        let poses = chain.forward_kinematics(&q).unwrap();
        let mut prev = Pose::identity();
        for k in 0..7 {
            let expect = prev * chain.links()[k].transform(q[k]);
            assert_relative_eq!(poses.link(k).to_homogeneous(), expect.to_homogeneous(), epsilon = 1e-14);
            prev = expect;
        }
    }

    #[test]
    fn single_precision_matches_double() {
        let c64 = KinematicChain::<f64>::from_config(&ChainConfig::default_arm()).unwrap();
        let c32 = KinematicChain::<f32>::from_config(&ChainConfig::default_arm()).unwrap();
        let q = [0.3, -0.2, 0.5, 0.9, -0.4, 0.7, 0.1];
        let p64 = c64
            .forward_kinematics(&DVector::from_row_slice(&q))
            .unwrap()
            .ee()
            .translation
            .vector;
        let q32: Vec<f32> = q.iter().map(|&x| x as f32).collect();
        let p32 = c32
            .forward_kinematics(&DVector::from_vec(q32))
            .unwrap()
            .ee()
            .translation
            .vector;
        for i in 0..3 {
            assert!((p64[i] - p32[i] as f64).abs() < 1e-5);
        }
    }

    #[test]
    fn orientation_error_is_axis_angle() {
        let cur = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), 0.2);
        let des = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), 0.5);
        assert_relative_eq!(
            orientation_error(&des, &cur),
            Vector3::new(0.3, 0.0, 0.0),
            epsilon = 1e-12
        );
    }
}
