//! Point pair features, their quantized hash keys, and per-object tables.

mod persist;
mod table;

pub use persist::{dump_table_csv, load_tables, read_tables, save_tables, write_tables};
pub use table::{train, ObjectTable, TableSet, TrainingOptions};

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::grasp::{perturb, Contact, GraspObservation, NoiseModel, NoiseStream};
use crate::{rng, Error, Result};

/// Recognition method: full point pair features, or distances only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    /// Positions and normals.
    #[serde(rename = "PN")]
    PointNormal,
    /// Positions only.
    #[serde(rename = "P")]
    Point,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::PointNormal, Method::Point];

    pub fn tag(self) -> &'static str {
        match self {
            Method::PointNormal => "PN",
            Method::Point => "P",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "PN" | "pn" => Ok(Method::PointNormal),
            "P" | "p" => Ok(Method::Point),
            _ => Err(Error::InvalidConfig(format!("unknown method `{s}`"))),
        }
    }
}

/// Where simulated sensor noise is injected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    /// Jitter contact positions and normals, then compute features.
    #[default]
    Contact,
    /// Compute features from clean contacts, then jitter the distance and
    /// the three angles directly.
    Feature,
}

/// Point pair feature of two oriented points: segment length and the three
/// angles between normals and the segment. Angles are in `[0, π]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ppf {
    pub distance: f64,
    pub angle_n1_d: f64,
    pub angle_n2_d: f64,
    pub angle_n1_n2: f64,
}

// atan2 form stays accurate near 0 and π, where acos of a dot product loses
// about half the significant digits.
fn angle_between(a: &crate::Vec3, b: &crate::Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// The feature of the ordered pair `(c1, c2)`, with `d = m2 - m1`.
pub fn ppf(c1: &Contact, c2: &Contact) -> Result<Ppf> {
    let d = c2.position - c1.position;
    let distance = d.norm();
    if distance.is_nan() || distance < 1e-9 {
        return Err(Error::DegeneratePair { distance });
    }
    Ok(Ppf {
        distance,
        angle_n1_d: angle_between(&c1.normal, &d),
        angle_n2_d: angle_between(&c2.normal, &d),
        angle_n1_n2: angle_between(&c1.normal, &c2.normal),
    })
}

/// Feature of the unordered pair `{c1, c2}`.
///
/// The pair is oriented so that `∠(n1, d) + ∠(n2, d) <= π`. Swapping the
/// inputs turns the two angles `(a, b)` into `(π - b, π - a)` and negates
/// both dot products exactly, so the choice is identical either way; an
/// exact tie falls back to comparing coordinates.
pub fn canonical_ppf(c1: &Contact, c2: &Contact) -> Result<Ppf> {
    let d = c2.position - c1.position;
    let s = c1.normal.dot(&d) + c2.normal.dot(&d);
    let keep = if s != 0.0 {
        s > 0.0
    } else {
        let a = c1.position.iter().chain(c1.normal.iter());
        let b = c2.position.iter().chain(c2.normal.iter());
        a.partial_cmp(b) != Some(std::cmp::Ordering::Greater)
    };
    if keep {
        ppf(c1, c2)
    } else {
        ppf(c2, c1)
    }
}

/// Bin widths for feature quantization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantizer {
    /// mm
    pub distance_step: f64,
    /// radians
    pub angle_step: f64,
}

impl Default for Quantizer {
    fn default() -> Self {
        Self {
            distance_step: 5.0,
            angle_step: PI / 15.0,
        }
    }
}

impl Quantizer {
    pub fn new(distance_step: f64, angle_step: f64) -> Result<Self> {
        let q = Self {
            distance_step,
            angle_step,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x > 0.0 && x.is_finite();
        if ok(self.distance_step) && ok(self.angle_step) && self.angle_step <= PI {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid quantizer {self:?}")))
        }
    }

    /// Number of angle bins covering `[0, π]`. A ratio within 1e-9 of an
    /// integer counts as that integer, so `π` itself lands in the last bin.
    pub fn angle_bins(&self) -> u32 {
        let ratio = PI / self.angle_step;
        let nearest = ratio.round();
        let bins = if (ratio - nearest).abs() < 1e-9 {
            nearest
        } else {
            ratio.ceil()
        };
        bins.max(1.0) as u32
    }

    fn angle_bin(&self, angle: f64) -> u32 {
        let bin = (angle.clamp(0.0, PI) / self.angle_step).floor() as u32;
        bin.min(self.angle_bins() - 1)
    }

    fn distance_bin(&self, distance: f64) -> u32 {
        (distance.max(0.0) / self.distance_step).floor() as u32
    }

    pub fn quantize(&self, f: &Ppf, method: Method) -> FeatureKey {
        let d = self.distance_bin(f.distance);
        match method {
            Method::PointNormal => FeatureKey::PointNormal([
                d,
                self.angle_bin(f.angle_n1_d),
                self.angle_bin(f.angle_n2_d),
                self.angle_bin(f.angle_n1_n2),
            ]),
            Method::Point => FeatureKey::Point(d),
        }
    }
}

/// Quantized feature used as a hash key. Keys of different methods never
/// compare equal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureKey {
    /// Distance bin, then the three angle bins.
    PointNormal([u32; 4]),
    /// Distance bin.
    Point(u32),
}

impl FeatureKey {
    pub fn method(&self) -> Method {
        match self {
            FeatureKey::PointNormal(_) => Method::PointNormal,
            FeatureKey::Point(_) => Method::Point,
        }
    }

    pub fn components(&self) -> &[u32] {
        match self {
            FeatureKey::PointNormal(c) => c,
            FeatureKey::Point(d) => std::slice::from_ref(d),
        }
    }
}

pub fn quantize(f: &Ppf, q: &Quantizer, method: Method) -> FeatureKey {
    q.quantize(f, method)
}

/// Canonical features of the three contact pairs.
pub fn grasp_features(obs: &GraspObservation) -> Result<[Ppf; 3]> {
    let c = &obs.contacts;
    Ok([
        canonical_ppf(&c[0], &c[1])?,
        canonical_ppf(&c[0], &c[2])?,
        canonical_ppf(&c[1], &c[2])?,
    ])
}

/// The three keys of a grasp, sorted so the result does not depend on how
/// the contacts are labelled.
pub fn keys_for_grasp(
    obs: &GraspObservation,
    q: &Quantizer,
    method: Method,
) -> Result<[FeatureKey; 3]> {
    let mut keys = grasp_features(obs)?.map(|f| q.quantize(&f, method));
    keys.sort();
    Ok(keys)
}

/// Jitters a feature directly: Gaussian noise on the distance and on each
/// angle, clamped back into range.
pub fn perturb_ppf(
    f: &Ppf,
    noise: &NoiseModel,
    stream: NoiseStream,
    pose: usize,
    sample_index: usize,
    pair: usize,
) -> Ppf {
    let mut rng = rng::stream(
        noise.rng_seed,
        &stream.coords(pose, sample_index, pair as u64 + 1),
    );
    let dist = Normal::new(0.0, noise.sigma_distance.max(0.0)).unwrap();
    let ang = Normal::new(0.0, noise.sigma_angle.max(0.0)).unwrap();
    let mut jitter_angle = |a: f64| (a + ang.sample(&mut rng)).clamp(0.0, PI);
    let angle_n1_d = jitter_angle(f.angle_n1_d);
    let angle_n2_d = jitter_angle(f.angle_n2_d);
    let angle_n1_n2 = jitter_angle(f.angle_n1_n2);
    Ppf {
        distance: (f.distance + dist.sample(&mut rng)).max(0.0),
        angle_n1_d,
        angle_n2_d,
        angle_n1_n2,
    }
}

/// Keys of one noisy sample of a grasp, under either noise mode.
///
/// For a given sample the distance component is the same for both methods,
/// so P-method keys are exactly the distance marginal of PN-method keys.
pub fn sample_keys(
    obs: &GraspObservation,
    noise: &NoiseModel,
    mode: NoiseMode,
    stream: NoiseStream,
    sample_index: usize,
    q: &Quantizer,
    method: Method,
) -> Result<[FeatureKey; 3]> {
    match mode {
        NoiseMode::Contact => keys_for_grasp(&perturb(obs, noise, stream, sample_index), q, method),
        NoiseMode::Feature => {
            let clean = grasp_features(obs)?;
            let mut keys = [FeatureKey::Point(0); 3];
            for (pair, f) in clean.iter().enumerate() {
                let noisy = perturb_ppf(f, noise, stream, obs.pose_index, sample_index, pair);
                keys[pair] = q.quantize(&noisy, method);
            }
            keys.sort();
            Ok(keys)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Vec3;
    use nalgebra::{Rotation3, Unit};
    use proptest::prelude::*;

    fn contact(p: [f64; 3], n: [f64; 3]) -> Contact {
        Contact::new(Vec3::from(p), Vec3::from(n)).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn parallel_normals_orthogonal_to_segment() {
        let f = ppf(
            &contact([0., 0., 0.], [0., 0., 1.]),
            &contact([10., 0., 0.], [0., 0., 1.]),
        )
        .unwrap();
        assert!(close(f.distance, 10.0));
        assert!(close(f.angle_n1_d, PI / 2.0));
        assert!(close(f.angle_n2_d, PI / 2.0));
        assert!(close(f.angle_n1_n2, 0.0));
    }

    #[test]
    fn antipodal_normals() {
        let f = ppf(
            &contact([0., 0., 0.], [1., 0., 0.]),
            &contact([10., 0., 0.], [-1., 0., 0.]),
        )
        .unwrap();
        assert!(close(f.distance, 10.0));
        assert!(close(f.angle_n1_d, 0.0));
        assert!(close(f.angle_n2_d, PI));
        assert!(close(f.angle_n1_n2, PI));
    }

    #[test]
    fn coincident_contacts_are_degenerate() {
        let c = contact([1., 2., 3.], [0., 0., 1.]);
        assert!(matches!(ppf(&c, &c), Err(Error::DegeneratePair { .. })));
    }

    #[test]
    fn quantize_examples() {
        let f = Ppf {
            distance: 10.0,
            angle_n1_d: PI / 2.0,
            angle_n2_d: PI / 2.0,
            angle_n1_n2: 0.0,
        };
        let q = Quantizer::new(5.0, PI / 15.0).unwrap();
        assert_eq!(
            q.quantize(&f, Method::PointNormal),
            FeatureKey::PointNormal([2, 7, 7, 0])
        );
        assert_eq!(q.quantize(&f, Method::Point), FeatureKey::Point(2));
        let top = Ppf {
            angle_n1_d: PI,
            ..f
        };
        assert_eq!(
            q.quantize(&top, Method::PointNormal),
            FeatureKey::PointNormal([2, 14, 7, 0])
        );
        assert_eq!(q.angle_bins(), 15);
    }

    #[test]
    fn methods_never_collide() {
        assert_ne!(FeatureKey::Point(2), FeatureKey::PointNormal([2, 0, 0, 0]));
    }

    #[test]
    fn uneven_angle_step_keeps_top_bin() {
        let q = Quantizer::new(5.0, 0.5).unwrap();
        assert_eq!(q.angle_bins(), 7);
        assert_eq!(q.angle_bin(PI), 6);
    }

    #[test]
    fn bad_quantizer_rejected() {
        assert!(Quantizer::new(0.0, 0.1).is_err());
        assert!(Quantizer::new(5.0, -1.0).is_err());
        assert!(Quantizer::new(f64::NAN, 0.1).is_err());
    }

    #[test]
    fn equilateral_grasp_gives_identical_keys() {
        let h = 3f64.sqrt() / 2.0 * 20.0;
        let obs = GraspObservation::new(
            0,
            [
                contact([0., 0., 0.], [0., 0., 1.]),
                contact([20., 0., 0.], [0., 0., 1.]),
                contact([10., h, 0.], [0., 0., 1.]),
            ],
        )
        .unwrap();
        let keys = keys_for_grasp(&obs, &Quantizer::default(), Method::PointNormal).unwrap();
        assert_eq!(keys.len(), 3);
        assert!(keys.iter().all(|k| *k == keys[0]));
    }

    fn arb_vec(r: f64) -> impl Strategy<Value = Vec3> {
        (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    fn arb_unit() -> impl Strategy<Value = Vec3> {
        arb_vec(1.0)
            .prop_filter("non-zero", |v| v.norm() > 1e-3)
            .prop_map(|v| v.normalize())
    }

    fn arb_contact() -> impl Strategy<Value = Contact> {
        (arb_vec(100.0), arb_unit()).prop_map(|(p, n)| Contact {
            position: p,
            normal: n,
        })
    }

    proptest! {
        #[test]
        fn canonical_pair_is_symmetric(a in arb_contact(), b in arb_contact()) {
            prop_assume!((a.position - b.position).norm() > 1e-6);
            let ab = canonical_ppf(&a, &b).unwrap();
            let ba = canonical_ppf(&b, &a).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!(ab.angle_n1_d + ab.angle_n2_d <= PI + 1e-9);
        }

        #[test]
        fn ppf_is_rigid_invariant(a in arb_contact(), b in arb_contact(), axis in arb_unit(),
                                  angle in -PI..PI, shift in arb_vec(500.0)) {
            prop_assume!((a.position - b.position).norm() > 1e-3);
            let rot = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle);
            let mv = |c: &Contact| Contact { position: rot * c.position + shift, normal: rot * c.normal };
            let f = ppf(&a, &b).unwrap();
            let g = ppf(&mv(&a), &mv(&b)).unwrap();
            prop_assert!((f.distance - g.distance).abs() < 1e-9);
            prop_assert!((f.angle_n1_d - g.angle_n1_d).abs() < 1e-9);
            prop_assert!((f.angle_n2_d - g.angle_n2_d).abs() < 1e-9);
            prop_assert!((f.angle_n1_n2 - g.angle_n1_n2).abs() < 1e-9);
        }

        #[test]
        fn angles_stay_in_range(a in arb_contact(), b in arb_contact()) {
            prop_assume!((a.position - b.position).norm() > 1e-6);
            let f = ppf(&a, &b).unwrap();
            for x in [f.angle_n1_d, f.angle_n2_d, f.angle_n1_n2] {
                prop_assert!((0.0..=PI).contains(&x));
            }
        }
    }
}
