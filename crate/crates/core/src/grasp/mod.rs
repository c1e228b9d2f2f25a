//! Parametric three-finger grasp simulator.
//!
//! The hand stands beside the object at a configurable distance from the
//! object's vertical axis and rotates about that axis in `L` equal steps.
//! Each finger is modelled as a ray converging on a grasp centre on the
//! object axis; the first surface hit is the contact. Contacts are reported
//! in the hand frame, which is what makes downstream features independent
//! of how the object is turned.

mod contact_file;
mod noise;

pub use contact_file::{load_contacts, read_contacts, save_contacts, write_contacts};
pub use noise::{perturb, NoiseModel, NoiseStream};

use std::f64::consts::TAU;

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::mesh::{ray_intersect, Ray, TriangleMesh};
use crate::{Error, Result, Vec3};

/// Direction of one finger's closing ray, relative to the grasp centre.
///
/// The ray starts `reach` mm from the centre along the unit vector given by
/// `azimuth` (about the hand z axis, from hand +x) and `elevation`, and
/// travels back towards the centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FingerSpec {
    pub azimuth: f64,
    pub elevation: f64,
}

impl FingerSpec {
    pub fn degrees(azimuth: f64, elevation: f64) -> Self {
        Self {
            azimuth: azimuth.to_radians(),
            elevation: elevation.to_radians(),
        }
    }

    fn outward(&self) -> Vec3 {
        let (sa, ca) = self.azimuth.sin_cos();
        let (se, ce) = self.elevation.sin_cos();
        Vec3::new(ce * ca, ce * sa, se)
    }
}

/// Finger geometry of the simulated hand. The default is a Barrett-like
/// layout: a thumb on one side, two spread fingers opposing it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HandModel {
    /// Horizontal distance from palm to the object z axis, mm.
    pub standoff_radius: f64,
    /// Palm height above the object base, mm.
    pub approach_height: f64,
    /// Distance from the grasp centre at which finger rays start, mm.
    pub reach: f64,
    pub fingers: [FingerSpec; 3],
}

impl Default for HandModel {
    fn default() -> Self {
        Self {
            standoff_radius: 150.0,
            approach_height: 18.0,
            reach: 140.0,
            fingers: [
                FingerSpec::degrees(-90.0, 0.0),
                FingerSpec::degrees(60.0, 25.0),
                FingerSpec::degrees(120.0, -10.0),
            ],
        }
    }
}

impl HandModel {
    pub fn validate(&self) -> Result<()> {
        let ok = self.standoff_radius > 0.0
            && self.reach > 0.0
            && self.approach_height.is_finite()
            && self.standoff_radius.is_finite()
            && self.reach.is_finite()
            && self
                .fingers
                .iter()
                .all(|f| f.azimuth.is_finite() && f.elevation.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid hand model {self:?}")))
        }
    }

    /// Stable 16-hex-digit fingerprint of the geometry, written into contact
    /// files so mismatched simulations are caught.
    pub fn fingerprint(&self) -> String {
        let mut text = format!(
            "standoff={};height={};reach={}",
            self.standoff_radius, self.approach_height, self.reach
        );
        for f in &self.fingers {
            text.push_str(&format!(";finger={},{}", f.azimuth, f.elevation));
        }
        let digest = Sha256::digest(text.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// One of the `L` hand placements around the object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandPose {
    pub pose_index: usize,
    pub poses: usize,
    /// `pose_index * 2π / L`.
    pub azimuth: f64,
    pub standoff_radius: f64,
    pub approach_height: f64,
}

impl HandPose {
    pub fn new(pose_index: usize, poses: usize, hand: &HandModel) -> Result<Self> {
        if poses == 0 || pose_index >= poses {
            return Err(Error::InvalidConfig(format!(
                "pose index {pose_index} outside [0, {poses})"
            )));
        }
        Ok(Self {
            pose_index,
            poses,
            azimuth: pose_index as f64 * TAU / poses as f64,
            standoff_radius: hand.standoff_radius,
            approach_height: hand.approach_height,
        })
    }

    /// Palm position in the object frame.
    pub fn palm(&self) -> Vec3 {
        let (s, c) = self.azimuth.sin_cos();
        Vec3::new(
            self.standoff_radius * c,
            self.standoff_radius * s,
            self.approach_height,
        )
    }

    /// Columns are the hand axes expressed in the object frame: x towards
    /// the object axis, z vertical.
    pub fn hand_to_object(&self) -> Matrix3<f64> {
        let (s, c) = self.azimuth.sin_cos();
        let x = Vec3::new(-c, -s, 0.0);
        let y = Vec3::new(s, -c, 0.0);
        Matrix3::from_columns(&[x, y, Vec3::z()])
    }
}

/// A finger contact in the hand frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    pub position: Vec3,
    /// Unit surface normal, pointing out of the object towards the finger.
    pub normal: Vec3,
}

impl Contact {
    pub fn new(position: Vec3, normal: Vec3) -> Result<Self> {
        let norm = normal.norm();
        if !norm.is_finite() || norm <= 0.0 || !position.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "bad contact position {position:?} / normal {normal:?}"
            )));
        }
        Ok(Self {
            position,
            normal: normal / norm,
        })
    }
}

/// The three contacts of one grasp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraspObservation {
    pub pose_index: usize,
    pub contacts: [Contact; 3],
}

impl GraspObservation {
    /// Fails with [`Error::DegenerateGrasp`] if two contacts coincide.
    pub fn new(pose_index: usize, contacts: [Contact; 3]) -> Result<Self> {
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            if (contacts[i].position - contacts[j].position).norm() < 1e-9 {
                return Err(Error::DegenerateGrasp { pose: pose_index });
            }
        }
        Ok(Self {
            pose_index,
            contacts,
        })
    }

    /// Pairwise contact distances, sorted ascending.
    pub fn distance_multiset(&self) -> [f64; 3] {
        let c = &self.contacts;
        let mut d = [
            (c[0].position - c[1].position).norm(),
            (c[0].position - c[2].position).norm(),
            (c[1].position - c[2].position).norm(),
        ];
        d.sort_by(f64::total_cmp);
        d
    }
}

/// Simulates the grasp at `pose`. Deterministic in all inputs.
pub fn grasp_at(
    mesh: &TriangleMesh,
    pose: &HandPose,
    hand: &HandModel,
) -> Result<GraspObservation> {
    let palm = pose.palm();
    let to_object = pose.hand_to_object();
    let to_hand = to_object.transpose();
    let centre = Vec3::new(pose.standoff_radius, 0.0, 0.0);
    let mut contacts = [Contact {
        position: Vec3::zeros(),
        normal: Vec3::z(),
    }; 3];
    for (k, finger) in hand.fingers.iter().enumerate() {
        let out = finger.outward();
        let origin = palm + to_object * (centre + out * hand.reach);
        let ray = Ray::new(origin, to_object * -out)?;
        let hit = ray_intersect(mesh, &ray).ok_or(Error::MissedGrasp {
            pose: pose.pose_index,
            finger: k,
        })?;
        contacts[k] = Contact::new(to_hand * (hit.point - palm), to_hand * hit.normal)?;
    }
    GraspObservation::new(pose.pose_index, contacts)
}

/// Noiseless grasps of one object at every pose of the grid. Poses where a
/// finger misses are kept as `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseGrid {
    pub object: String,
    pub hand_fingerprint: String,
    pub observations: Vec<Option<GraspObservation>>,
}

impl PoseGrid {
    /// `L`, the number of poses in the grid (valid or not).
    pub fn poses(&self) -> usize {
        self.observations.len()
    }

    pub fn get(&self, pose: usize) -> Option<&GraspObservation> {
        self.observations.get(pose).and_then(Option::as_ref)
    }

    pub fn valid_count(&self) -> usize {
        self.observations.iter().flatten().count()
    }

    pub fn valid_poses(&self) -> impl Iterator<Item = usize> + '_ {
        self.observations
            .iter()
            .enumerate()
            .filter_map(|(i, o)| o.as_ref().map(|_| i))
    }
}

/// Grasps the object at all `poses` grid positions in parallel.
///
/// Fails with [`Error::ObjectUnreachable`] when fewer than 10% of the poses
/// produce a grasp.
pub fn build_pose_grid(
    object: &str,
    mesh: &TriangleMesh,
    poses: usize,
    hand: &HandModel,
) -> Result<PoseGrid> {
    if poses == 0 {
        return Err(Error::InvalidConfig("pose grid needs L >= 1".into()));
    }
    hand.validate()?;
    let observations = (0..poses)
        .into_par_iter()
        .map(|i| {
            let pose = HandPose::new(i, poses, hand)?;
            match grasp_at(mesh, &pose, hand) {
                Ok(obs) => Ok(Some(obs)),
                Err(Error::MissedGrasp { .. } | Error::DegenerateGrasp { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let grid = PoseGrid {
        object: object.to_string(),
        hand_fingerprint: hand.fingerprint(),
        observations,
    };
    let valid = grid.valid_count();
    if valid * 10 < poses {
        return Err(Error::ObjectUnreachable {
            object: object.to_string(),
            valid,
            total: poses,
        });
    }
    Ok(grid)
}
