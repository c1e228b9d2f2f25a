use nalgebra::{Rotation3, Unit};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Contact, GraspObservation};
use crate::{rng, Vec3};

/// Simulated sensor noise on contact positions and normals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Per-axis position standard deviation, mm.
    pub sigma_distance: f64,
    /// Standard deviation of the normal's rotation angle, radians.
    pub sigma_angle: f64,
    pub rng_seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            sigma_distance: 1.0,
            sigma_angle: 0.05,
            rng_seed: 0,
        }
    }
}

/// Which family of noise draws a sample belongs to. Training and every test
/// grasp get disjoint streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseStream {
    Train,
    Test { trial: u64, grasp: u64 },
}

impl NoiseStream {
    pub(crate) fn coords(self, pose: usize, sample: usize, extra: u64) -> Vec<u64> {
        match self {
            NoiseStream::Train => vec![0, pose as u64, sample as u64, extra],
            NoiseStream::Test { trial, grasp } => {
                vec![1, trial, grasp, pose as u64, sample as u64, extra]
            }
        }
    }
}

fn random_unit<R: Rng>(rng: &mut R) -> Unit<Vec3> {
    loop {
        let v = Vec3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        if let Some(u) = Unit::try_new(v, 1e-9) {
            return u;
        }
    }
}

/// One noisy copy of `obs`: positions get Gaussian jitter per axis, normals
/// are turned about a random axis by a Gaussian angle.
///
/// The result is a pure function of the noise seed, the stream, the pose
/// and `sample_index`.
pub fn perturb(
    obs: &GraspObservation,
    noise: &NoiseModel,
    stream: NoiseStream,
    sample_index: usize,
) -> GraspObservation {
    let mut rng = rng::stream(
        noise.rng_seed,
        &stream.coords(obs.pose_index, sample_index, 0),
    );
    let position = Normal::new(0.0, noise.sigma_distance.max(0.0)).unwrap();
    let angle = Normal::new(0.0, noise.sigma_angle.max(0.0)).unwrap();
    let contacts = obs.contacts.map(|c| {
        let mut p = c.position;
        if noise.sigma_distance > 0.0 {
            p += Vec3::new(
                position.sample(&mut rng),
                position.sample(&mut rng),
                position.sample(&mut rng),
            );
        }
        let mut n = c.normal;
        if noise.sigma_angle > 0.0 {
            let axis = random_unit(&mut rng);
            let rot = Rotation3::from_axis_angle(&axis, angle.sample(&mut rng));
            n = (rot * n).normalize();
        }
        Contact {
            position: p,
            normal: n,
        }
    });
    GraspObservation {
        pose_index: obs.pose_index,
        contacts,
    }
}
