//! Next-grasp selection.
//!
//! The passive policy draws poses uniformly and never looks at the belief,
//! so it works without knowing how the object is turned. The active policy
//! assumes the relative pose is known and picks the pose whose predicted
//! outcome best separates the two leading hypotheses.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::TableSet;
use crate::recognizer::{tally, Posterior, Weighting};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Passive,
    Active,
}

impl Policy {
    pub const ALL: [Policy; 2] = [Policy::Passive, Policy::Active];

    pub fn tag(self) -> &'static str {
        match self {
            Policy::Passive => "passive",
            Policy::Active => "active",
        }
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "passive" => Ok(Policy::Passive),
            "active" => Ok(Policy::Active),
            _ => Err(Error::InvalidConfig(format!("unknown policy `{s}`"))),
        }
    }
}

/// Predicted likelihood vector for a grasp at each (object, pose), computed
/// by tallying the clean training keys of that pose against all tables.
#[derive(Debug, Clone, PartialEq)]
pub struct PosePredictionTable {
    objects: Vec<String>,
    poses: usize,
    /// `[object][pose]`, `None` where the pose was not a valid grasp.
    predictions: Vec<Vec<Option<Vec<f64>>>>,
}

impl PosePredictionTable {
    pub fn poses(&self) -> usize {
        self.poses
    }

    pub fn objects(&self) -> &[String] {
        &self.objects
    }

    pub fn prediction(&self, object: usize, pose: usize) -> Option<&[f64]> {
        self.predictions.get(object)?.get(pose)?.as_deref()
    }

    /// Builds a table directly from prediction vectors (`[object][pose]`).
    pub fn from_predictions(
        objects: Vec<String>,
        predictions: Vec<Vec<Option<Vec<f64>>>>,
    ) -> Result<Self> {
        let poses = predictions.first().map_or(0, Vec::len);
        if objects.len() != predictions.len()
            || predictions.iter().any(|p| p.len() != poses)
            || predictions
                .iter()
                .flatten()
                .flatten()
                .any(|v| v.len() != objects.len())
        {
            return Err(Error::TableMismatch("ragged prediction table".into()));
        }
        Ok(Self {
            objects,
            poses,
            predictions,
        })
    }
}

pub fn build_predictions(
    tables: &TableSet,
    weighting: Weighting,
    smoothing: f64,
) -> Result<PosePredictionTable> {
    let poses = tables.tables()[0].poses();
    let mut predictions = Vec::with_capacity(tables.len());
    for t in tables.tables() {
        if t.poses() != poses {
            return Err(Error::TableMismatch(format!(
                "table `{}` has {} poses, expected {poses}",
                t.name(),
                t.poses()
            )));
        }
        let records = t.pose_keys().ok_or(Error::MissingPoseRecords)?;
        let mut row = vec![None; poses];
        for (&pose, keys) in records {
            row[pose] = Some(tally(keys, tables, weighting, smoothing)?.likelihood);
        }
        predictions.push(row);
    }
    Ok(PosePredictionTable {
        objects: tables.names(),
        poses,
        predictions,
    })
}

/// Per-trial exploration bookkeeping.
#[derive(Debug, Clone)]
pub struct ExplorationState {
    pub policy: Policy,
    /// Forbid returning to a pose already grasped (off by default).
    pub exclude_visited: bool,
    visited: Vec<bool>,
    blocked: Vec<bool>,
    rng: ChaCha8Rng,
}

impl ExplorationState {
    pub fn new(policy: Policy, poses: usize, rng: ChaCha8Rng) -> Self {
        Self {
            policy,
            exclude_visited: false,
            visited: vec![false; poses],
            blocked: vec![false; poses],
            rng,
        }
    }

    pub fn poses(&self) -> usize {
        self.visited.len()
    }

    pub fn visit(&mut self, pose: usize) {
        self.visited[pose] = true;
    }

    pub fn visited(&self, pose: usize) -> bool {
        self.visited[pose]
    }

    /// Marks a pose where the real object could not be grasped.
    pub fn block(&mut self, pose: usize) {
        self.blocked[pose] = true;
    }

    pub fn blocked(&self, pose: usize) -> bool {
        self.blocked[pose]
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// Uniform draw from `[0, L)`. Only the state's random stream is consulted.
pub fn next_pose_passive(state: &mut ExplorationState) -> usize {
    let poses = state.poses();
    if state.exclude_visited {
        let open: Vec<usize> = (0..poses).filter(|&p| !state.visited[p]).collect();
        if !open.is_empty() {
            return open[state.rng.random_range(0..open.len())];
        }
    }
    state.rng.random_range(0..poses)
}

/// The pose maximizing `P(Z(φ)|o') - P(Z(φ)|o'')`, where the prediction is
/// made for o' and o', o'' are the two leading objects. Poses invalid for
/// o' or blocked are skipped; ties go to the lowest pose index.
pub fn next_pose_active(
    posterior: &Posterior,
    predictions: &PosePredictionTable,
    state: &ExplorationState,
) -> Result<usize> {
    let (first, second) = posterior.top_two().ok_or_else(|| {
        Error::InvalidConfig("active exploration needs at least two objects".into())
    })?;
    let pick = |skip_visited: bool| {
        let mut best: Option<(usize, f64)> = None;
        for pose in 0..predictions.poses {
            if state.blocked[pose] || (skip_visited && state.visited[pose]) {
                continue;
            }
            let Some(v) = predictions.prediction(first, pose) else {
                continue;
            };
            let gap = v[first] - v[second];
            if best.is_none_or(|(_, g)| gap > g) {
                best = Some((pose, gap));
            }
        }
        best.map(|(p, _)| p)
    };
    let choice = if state.exclude_visited {
        pick(true).or_else(|| pick(false))
    } else {
        pick(false)
    };
    choice.ok_or_else(|| Error::NoValidPose {
        object: predictions.objects[first].clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureKey, Method, ObjectTable, Quantizer};
    use crate::rng;
    use std::collections::BTreeMap;

    fn state(poses: usize, seed: u64) -> ExplorationState {
        ExplorationState::new(Policy::Passive, poses, rng::stream(seed, &[]))
    }

    fn table_with_records(name: &str, poses: usize, records: &[(usize, u32)]) -> ObjectTable {
        let map: BTreeMap<usize, [FeatureKey; 3]> = records
            .iter()
            .map(|&(p, d)| (p, [FeatureKey::Point(d); 3]))
            .collect();
        let counts = records.iter().map(|&(_, d)| (FeatureKey::Point(d), 3u64));
        ObjectTable::from_parts(
            name,
            Method::Point,
            Quantizer::default(),
            poses,
            counts,
            Some(map),
        )
        .unwrap()
    }

    #[test]
    fn single_pose_grid_always_zero() {
        let mut s = state(1, 5);
        for _ in 0..100 {
            assert_eq!(next_pose_passive(&mut s), 0);
        }
    }

    #[test]
    fn passive_is_reproducible() {
        let (mut a, mut b) = (state(360, 11), state(360, 11));
        let xs: Vec<_> = (0..50).map(|_| next_pose_passive(&mut a)).collect();
        let ys: Vec<_> = (0..50).map(|_| next_pose_passive(&mut b)).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn passive_draws_are_uniform() {
        let mut s = state(360, 2024);
        let mut counts = [0u32; 360];
        let draws = 100_000;
        for _ in 0..draws {
            counts[next_pose_passive(&mut s)] += 1;
        }
        let expected = draws as f64 / 360.0;
        let sigma = (expected * (1.0 - 1.0 / 360.0)).sqrt();
        let mut chi2 = 0.0;
        for c in counts {
            assert!((c as f64 - expected).abs() < 5.0 * sigma);
            chi2 += (c as f64 - expected).powi(2) / expected;
        }
        // 359 degrees of freedom: mean 359, sd ~26.8.
        assert!(chi2 < 359.0 + 5.0 * 26.8, "chi2 {chi2}");
    }

    #[test]
    fn passive_exclusion_visits_everything_once() {
        let mut s = state(20, 1);
        s.exclude_visited = true;
        let mut seen = Vec::new();
        for _ in 0..20 {
            let p = next_pose_passive(&mut s);
            s.visit(p);
            seen.push(p);
        }
        seen.sort();
        assert_eq!(seen, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn dominant_gap_wins() {
        let mut rows = vec![Some(vec![0.5, 0.45, 0.05]); 360];
        rows[42] = Some(vec![0.95, 0.05, 0.0]);
        let others = vec![Some(vec![1.0 / 3.0; 3]); 360];
        let table = PosePredictionTable::from_predictions(
            vec!["a".into(), "b".into(), "c".into()],
            vec![rows, others.clone(), others],
        )
        .unwrap();
        let post = Posterior {
            probabilities: vec![0.6, 0.3, 0.1],
            grasps: 1,
        };
        let s = ExplorationState::new(Policy::Active, 360, rng::stream(0, &[]));
        assert_eq!(next_pose_active(&post, &table, &s).unwrap(), 42);
    }

    #[test]
    fn equal_gaps_pick_pose_zero_and_skip_invalid() {
        let mut rows = vec![Some(vec![0.5, 0.5]); 10];
        let table = PosePredictionTable::from_predictions(
            vec!["a".into(), "b".into()],
            vec![rows.clone(), rows.clone()],
        )
        .unwrap();
        let post = Posterior::uniform(2);
        let mut s = ExplorationState::new(Policy::Active, 10, rng::stream(0, &[]));
        assert_eq!(next_pose_active(&post, &table, &s).unwrap(), 0);
        s.block(0);
        assert_eq!(next_pose_active(&post, &table, &s).unwrap(), 1);
        rows.iter_mut().for_each(|r| *r = None);
        let empty = PosePredictionTable::from_predictions(
            vec!["a".into(), "b".into()],
            vec![rows.clone(), rows],
        )
        .unwrap();
        assert!(matches!(
            next_pose_active(&post, &empty, &s),
            Err(Error::NoValidPose { .. })
        ));
    }

    #[test]
    fn single_object_predictions_are_certain() {
        let set = TableSet::new(vec![table_with_records(
            "solo",
            4,
            &[(0, 1), (1, 2), (3, 2)],
        )])
        .unwrap();
        let pred = build_predictions(&set, Weighting::Count, 1.0).unwrap();
        for pose in [0, 1, 3] {
            assert_eq!(pred.prediction(0, pose).unwrap(), [1.0]);
        }
        assert!(pred.prediction(0, 2).is_none());
    }

    #[test]
    fn identical_objects_have_no_gap() {
        let recs = [(0, 1), (1, 2), (2, 7)];
        let set = TableSet::new(vec![
            table_with_records("twin_a", 3, &recs),
            table_with_records("twin_b", 3, &recs),
        ])
        .unwrap();
        let pred = build_predictions(&set, Weighting::Count, 1.0).unwrap();
        for o in 0..2 {
            for p in 0..3 {
                let v = pred.prediction(o, p).unwrap();
                assert!((v[0] - v[1]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn missing_records_are_reported() {
        let t = ObjectTable::from_parts(
            "x",
            Method::Point,
            Quantizer::default(),
            2,
            [(FeatureKey::Point(1), 1)],
            None,
        )
        .unwrap();
        let set = TableSet::new(vec![t]).unwrap();
        assert!(matches!(
            build_predictions(&set, Weighting::Count, 1.0),
            Err(Error::MissingPoseRecords)
        ));
    }

    #[test]
    fn active_ignores_mass_outside_the_top_two() {
        let rows_a: Vec<_> = (0..30)
            .map(|p| {
                Some(vec![
                    0.2 + 0.01 * (p % 7) as f64,
                    0.3,
                    0.2,
                    0.3 - 0.01 * (p % 7) as f64,
                ])
            })
            .collect();
        let flat = vec![Some(vec![0.25; 4]); 30];
        let table = PosePredictionTable::from_predictions(
            (0..4).map(|i| format!("o{i}")).collect(),
            vec![rows_a, flat.clone(), flat.clone(), flat],
        )
        .unwrap();
        let s = ExplorationState::new(Policy::Active, 30, rng::stream(0, &[]));
        let a = Posterior {
            probabilities: vec![0.5, 0.1, 0.3, 0.1],
            grasps: 1,
        };
        let b = Posterior {
            probabilities: vec![0.5, 0.15, 0.3, 0.05],
            grasps: 1,
        };
        assert_eq!(
            next_pose_active(&a, &table, &s).unwrap(),
            next_pose_active(&b, &table, &s).unwrap()
        );
    }
}
