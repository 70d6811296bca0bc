//! Virtual taxel layout on the forearm and the palm.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::chain::{ChainPoses, Pose};
use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

const UNIT_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BodyPart {
    Forearm,
    Hand,
}

impl BodyPart {
    pub const ALL: [BodyPart; 2] = [BodyPart::Forearm, BodyPart::Hand];

    pub fn name(self) -> &'static str {
        match self {
            BodyPart::Forearm => "forearm",
            BodyPart::Hand => "hand",
        }
    }
}

impl fmt::Display for BodyPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaxelConfig {
    pub id: u32,
    pub body_part: BodyPart,
    pub link: usize,
    pub pos: [f64; 3],
    pub normal: [f64; 3],
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SkinConfig {
    pub taxels: Vec<TaxelConfig>,
}

impl SkinConfig {
    /// Forearm cylinder (radius 0.035 m, length 0.14 m, 4 rings of 6) on
    /// `forearm_link` and a 5-taxel palm patch (0.06 m x 0.04 m) on `hand_link`.
    ///
    /// The forearm frame is expected to sit at the wrist with local +y
    /// pointing back along the forearm; the hand frame at the fingertip end
    /// with local +z along the hand and the palm facing local +x.
    pub fn default_arm(forearm_link: usize, hand_link: usize) -> Self {
        const RADIUS: f64 = 0.035;
        const START: f64 = 0.03;
        const LENGTH: f64 = 0.14;
        const RINGS: usize = 4;
        const PER_RING: usize = 6;

        let mut taxels = Vec::with_capacity(RINGS * PER_RING + 5);
        let mut id = 0;
        for ring in 0..RINGS {
            let y = START + LENGTH / RINGS as f64 * (ring as f64 + 0.5);
            let stagger = if ring % 2 == 1 { PI / PER_RING as f64 } else { 0.0 };
            for k in 0..PER_RING {
                let phi = 2.0 * PI * k as f64 / PER_RING as f64 + stagger;
                let (s, c) = phi.sin_cos();
                taxels.push(TaxelConfig {
                    id,
                    body_part: BodyPart::Forearm,
                    link: forearm_link,
                    pos: [RADIUS * c, y, RADIUS * s],
                    normal: [c, 0.0, s],
                });
                id += 1;
            }
        }

        let palm = [
            (0.0, -0.04),
            (0.012, -0.02),
            (-0.012, -0.02),
            (0.012, -0.06),
            (-0.012, -0.06),
        ];
        for (y, z) in palm {
            taxels.push(TaxelConfig {
                id,
                body_part: BodyPart::Hand,
                link: hand_link,
                pos: [0.015, y, z],
                normal: [1.0, 0.0, 0.0],
            });
            id += 1;
        }
        Self { taxels }
    }
}

/// Skin point carrying one receptive field.
#[derive(Clone, Debug, PartialEq)]
pub struct Taxel<T: Real> {
    pub id: u32,
    pub body_part: BodyPart,
    pub link: usize,
    pub local_position: Vector3<T>,
    pub local_normal: Vector3<T>,
}

/// Taxel position and outward normal in the chain root frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TaxelWorld<T: Real> {
    pub position: Vector3<T>,
    pub normal: Vector3<T>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SkinLayout<T: Real> {
    taxels: Vec<Taxel<T>>,
}

/// Validates `cfg` against a chain with `dof` links.
///
/// Every taxel with a non-unit normal is reported at once.
pub fn load_skin_layout<T: Real>(cfg: &SkinConfig, dof: usize) -> Result<SkinLayout<T>> {
    let mut bad_normals = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for t in &cfg.taxels {
        if t.link >= dof {
            return Err(Error::Skin(format!(
                "taxel {} references link {} of a {dof}-link chain",
                t.id, t.link
            )));
        }
        if !seen.insert(t.id) {
            return Err(Error::Skin(format!("duplicate taxel id {}", t.id)));
        }
        if t.pos.iter().chain(&t.normal).any(|v| !v.is_finite()) {
            return Err(Error::Skin(format!("taxel {} has non-finite geometry", t.id)));
        }
        let norm = t.normal.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > UNIT_TOLERANCE {
            bad_normals.push((t.id, norm));
        }
    }
    if !bad_normals.is_empty() {
        return Err(Error::TaxelNormals(bad_normals));
    }

    let taxels = cfg
        .taxels
        .iter()
        .map(|t| {
            let n = Vector3::new(lit::<T>(t.normal[0]), lit(t.normal[1]), lit(t.normal[2]));
            Taxel {
                id: t.id,
                body_part: t.body_part,
                link: t.link,
                local_position: Vector3::new(lit(t.pos[0]), lit(t.pos[1]), lit(t.pos[2])),
                local_normal: n.normalize(),
            }
        })
        .collect();
    Ok(SkinLayout { taxels })
}

/// Rigid transform of a taxel by the pose of the link it is mounted on.
pub fn taxel_world_pose<T: Real>(taxel: &Taxel<T>, link_pose: &Pose<T>) -> TaxelWorld<T> {
    TaxelWorld {
        position: (link_pose * Point3::from(taxel.local_position)).coords,
        normal: link_pose.rotation * taxel.local_normal,
    }
}

impl<T: Real> SkinLayout<T> {
    pub fn taxels(&self) -> &[Taxel<T>] {
        &self.taxels
    }

    pub fn len(&self) -> usize {
        self.taxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taxels.is_empty()
    }

    pub fn count(&self, part: BodyPart) -> usize {
        self.taxels.iter().filter(|t| t.body_part == part).count()
    }

    /// World poses of every taxel, in layout order.
    pub fn world(&self, poses: &ChainPoses<T>) -> Vec<TaxelWorld<T>> {
        self.taxels
            .iter()
            .map(|t| taxel_world_pose(t, poses.link(t.link)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{Translation3, UnitQuaternion};

    #[test]
    fn default_layout_counts() {
        let skin = load_skin_layout::<f64>(&SkinConfig::default_arm(4, 6), 7).unwrap();
        assert_eq!(skin.len(), 29);
        assert_eq!(skin.count(BodyPart::Forearm), 24);
        assert_eq!(skin.count(BodyPart::Hand), 5);
        for t in skin.taxels() {
            assert_relative_eq!(t.local_normal.norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn empty_layout_is_valid() {
        let skin = load_skin_layout::<f64>(&SkinConfig::default(), 7).unwrap();
        assert!(skin.is_empty());
    }

    #[test]
    fn short_normal_names_the_taxel() {
        let mut cfg = SkinConfig::default_arm(4, 6);
        cfg.taxels[7].normal = [0.5, 0.0, 0.0];
        let err = load_skin_layout::<f64>(&cfg, 7).unwrap_err();
        match &err {
            Error::TaxelNormals(list) => assert_eq!(list, &vec![(7, 0.5)]),
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("taxel 7"));
    }

    #[test]
    fn bad_link_rejected() {
        let cfg = SkinConfig::default_arm(4, 6);
        assert!(load_skin_layout::<f64>(&cfg, 5).is_err());
    }

    fn taxel(pos: [f64; 3], normal: [f64; 3]) -> Taxel<f64> {
        Taxel {
            id: 0,
            body_part: BodyPart::Hand,
            link: 0,
            local_position: Vector3::from(pos),
            local_normal: Vector3::from(normal),
        }
    }

    #[test]
    fn world_pose_transforms() {
        let t = taxel([0.1, 0.2, 0.3], [0.0, 0.0, 1.0]);
        let w = taxel_world_pose(&t, &Pose::identity());
        assert_eq!(w.position, t.local_position);
        assert_eq!(w.normal, t.local_normal);

        let shift = Pose::from_parts(Translation3::new(1.0, -2.0, 0.5), UnitQuaternion::identity());
        let w = taxel_world_pose(&t, &shift);
        assert_relative_eq!(w.position, Vector3::new(1.1, -1.8, 0.8));
        assert_eq!(w.normal, t.local_normal);

        let t = taxel([0.0; 3], [1.0, 0.0, 0.0]);
        let rot = Pose::from_parts(
            Translation3::identity(),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2),
        );
        assert_relative_eq!(
            taxel_world_pose(&t, &rot).normal,
            Vector3::new(0.0, 1.0, 0.0),
            epsilon = 1e-15
        );
    }
}
