//! Pose-free haptic object identification.
//!
//! A three-finger hand grasps an object; each grasp yields three contacts
//! (position + surface normal) in the hand frame. Pairs of contacts are
//! turned into rigid-motion invariant point pair features, quantized into
//! hash keys, and matched against per-object tables built from simulated
//! training grasps. Votes become likelihoods that are folded into a
//! sequential Bayesian posterior until one object crosses a confidence
//! threshold. The next grasp is chosen either uniformly at random (no
//! knowledge of the object pose needed) or actively, by the pose that best
//! separates the two leading hypotheses.
//!
//! Module map:
//!
//! * [`mesh`]: triangle meshes, PLY I/O, ray casting.
//! * [`fixtures`]: the five bundled synthetic objects.
//! * [`grasp`]: the parametric grasp simulator, pose grids, contact files,
//!   sensor noise.
//! * [`features`]: point pair features, keys, hash tables, persistence.
//! * [`recognizer`]: vote tallies, Bayesian update, stop rule.
//! * [`explore`]: passive and active next-pose policies.
//! * [`harness`]: trials, experiment sweeps, statistics, CSV and SVG output.

pub mod error;
pub mod explore;
pub mod features;
pub mod fixtures;
pub mod grasp;
pub mod harness;
pub mod mesh;
pub mod recognizer;
pub mod rng;

pub use error::{Error, Result};

/// 3D vector type used throughout (millimetres for positions).
pub type Vec3 = nalgebra::Vector3<f64>;
