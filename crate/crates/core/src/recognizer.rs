//! Vote tallies, the sequential Bayesian update and the stop rule.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::features::{FeatureKey, TableSet};
use crate::{Error, Result};

/// Floor applied to every posterior entry before renormalizing, so that no
/// object is ever ruled out for good.
pub const POSTERIOR_FLOOR: f64 = 1e-9;

/// How a matching key votes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// A key adds the number of times the object produced it in training.
    #[default]
    Count,
    /// A key adds one vote to every object whose table contains it.
    Binary,
}

impl std::str::FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "count" => Ok(Weighting::Count),
            "binary" => Ok(Weighting::Binary),
            _ => Err(Error::InvalidConfig(format!("unknown weighting `{s}`"))),
        }
    }
}

/// Votes per object for one grasp and the likelihood they imply.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteTally {
    pub votes: Vec<u64>,
    /// `(votes + α) / (Σ votes + K α)`; sums to one.
    pub likelihood: Vec<f64>,
}

/// Matches `keys` (one grasp: N samples of three keys) against every table.
///
/// `smoothing` is the pseudo-vote α added to each object. With α = 0 and
/// no votes at all the likelihood is uniform.
pub fn tally(
    keys: &[FeatureKey],
    tables: &TableSet,
    weighting: Weighting,
    smoothing: f64,
) -> Result<VoteTally> {
    if keys.is_empty() {
        return Err(Error::InvalidConfig("cannot tally an empty key set".into()));
    }
    if !(smoothing >= 0.0 && smoothing.is_finite()) {
        return Err(Error::InvalidConfig(format!("bad smoothing {smoothing}")));
    }
    let method = tables.method();
    if let Some(k) = keys.iter().find(|k| k.method() != method) {
        return Err(Error::TableMismatch(format!(
            "{} key {k:?} tallied against {method} tables",
            k.method()
        )));
    }
    let votes: Vec<u64> = tables
        .tables()
        .iter()
        .map(|t| {
            keys.iter()
                .map(|k| match weighting {
                    Weighting::Count => t.count(k),
                    Weighting::Binary => u64::from(t.count(k) > 0),
                })
                .sum()
        })
        .collect();
    let k = votes.len() as f64;
    let total = votes.iter().sum::<u64>() as f64 + k * smoothing;
    let likelihood = if total > 0.0 {
        votes
            .iter()
            .map(|&v| (v as f64 + smoothing) / total)
            .collect()
    } else {
        vec![1.0 / k; votes.len()]
    };
    Ok(VoteTally { votes, likelihood })
}

/// Belief over the object set after `grasps` grasps.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub probabilities: Vec<f64>,
    pub grasps: usize,
}

impl Posterior {
    pub fn uniform(objects: usize) -> Self {
        Self {
            probabilities: vec![1.0 / objects as f64; objects],
            grasps: 0,
        }
    }

    /// Index and value of the most probable object; ties go to the lowest
    /// index (objects are kept in name order).
    pub fn best(&self) -> (usize, f64) {
        let mut best = (0, self.probabilities[0]);
        for (i, &p) in self.probabilities.iter().enumerate().skip(1) {
            if p > best.1 {
                best = (i, p);
            }
        }
        best
    }

    /// The two leading objects `(o', o'')`, ties broken by index.
    pub fn top_two(&self) -> Option<(usize, usize)> {
        if self.probabilities.len() < 2 {
            return None;
        }
        let (first, _) = self.best();
        let mut second: Option<(usize, f64)> = None;
        for (i, &p) in self.probabilities.iter().enumerate() {
            if i != first && second.is_none_or(|(_, q)| p > q) {
                second = Some((i, p));
            }
        }
        second.map(|(s, _)| (first, s))
    }
}

fn normalize(values: &mut [f64]) -> Result<()> {
    let sum: f64 = values.iter().sum();
    if !sum.is_finite() || sum <= 0.0 {
        return Err(Error::DegeneratePosterior);
    }
    values.iter_mut().for_each(|v| *v /= sum);
    Ok(())
}

/// One step of the sequential update: multiply by the likelihood,
/// normalize, floor at [`POSTERIOR_FLOOR`], normalize again.
pub fn bayes_update(prior: &Posterior, likelihood: &[f64]) -> Result<Posterior> {
    if likelihood.len() != prior.probabilities.len() {
        return Err(Error::TableMismatch(format!(
            "likelihood has {} entries, posterior {}",
            likelihood.len(),
            prior.probabilities.len()
        )));
    }
    let mut next: Vec<f64> = prior
        .probabilities
        .iter()
        .zip(likelihood)
        .map(|(p, l)| p * l)
        .collect();
    normalize(&mut next)?;
    next.iter_mut().for_each(|v| *v = v.max(POSTERIOR_FLOOR));
    normalize(&mut next)?;
    Ok(Posterior {
        probabilities: next,
        grasps: prior.grasps + 1,
    })
}

/// Outcome of the stop rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    /// Index of the chosen object, or `None` while undecided.
    pub object: Option<usize>,
    pub beta: f64,
    pub grasps: usize,
}

/// Commits to the most probable object once its probability exceeds `beta`.
pub fn decide(posterior: &Posterior, beta: f64) -> Decision {
    let (best, p) = posterior.best();
    Decision {
        object: (p > beta).then_some(best),
        beta,
        grasps: posterior.grasps,
    }
}

/// A running identification: a belief plus the tables it is matched against.
#[derive(Debug, Clone)]
pub struct Session<'a> {
    pub tables: &'a TableSet,
    pub weighting: Weighting,
    pub smoothing: f64,
    pub posterior: Posterior,
}

impl<'a> Session<'a> {
    pub fn new(tables: &'a TableSet, weighting: Weighting, smoothing: f64) -> Self {
        Self {
            tables,
            weighting,
            smoothing,
            posterior: Posterior::uniform(tables.len()),
        }
    }

    /// Folds one grasp's keys into the belief.
    pub fn observe(&mut self, keys: &[FeatureKey]) -> Result<VoteTally> {
        let t = tally(keys, self.tables, self.weighting, self.smoothing)?;
        self.posterior = bayes_update(&self.posterior, &t.likelihood)?;
        Ok(t)
    }
}

/// One grasp of a recorded identification run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub trial: u64,
    pub grasp: usize,
    pub pose: usize,
    pub likelihood: Vec<f64>,
    pub posterior: Vec<f64>,
}

/// Header of the trace CSV for the given object names.
pub fn trace_header(objects: &[String]) -> String {
    let mut h = String::from("trial,t,pose");
    for o in objects {
        write!(h, ",lik_{o}").unwrap();
    }
    for o in objects {
        write!(h, ",post_{o}").unwrap();
    }
    h.push('\n');
    h
}

pub fn write_trace_row(out: &mut String, row: &TraceRow) {
    write!(out, "{},{},{}", row.trial, row.grasp, row.pose).unwrap();
    for v in row.likelihood.iter().chain(&row.posterior) {
        write!(out, ",{v:.9e}").unwrap();
    }
    out.push('\n');
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{Method, ObjectTable, Quantizer};
    use proptest::prelude::*;

    fn toy_set(entries: &[&[(u32, u64)]]) -> TableSet {
        let q = Quantizer::default();
        TableSet::new(
            entries
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    ObjectTable::from_parts(
                        format!("o{i}"),
                        Method::Point,
                        q,
                        1,
                        e.iter().map(|&(d, c)| (FeatureKey::Point(d), c)),
                        None,
                    )
                    .unwrap()
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_key_in_one_table() {
        let set = toy_set(&[&[(1, 40)], &[(2, 5)], &[(3, 5)]]);
        let t = tally(&[FeatureKey::Point(1)], &set, Weighting::Count, 1.0).unwrap();
        assert_eq!(t.votes, [40, 0, 0]);
        assert!((t.likelihood[0] - 41.0 / 43.0).abs() < 1e-15);
        assert!((t.likelihood[1] - 1.0 / 43.0).abs() < 1e-15);
    }

    #[test]
    fn unknown_key_gives_uniform() {
        let set = toy_set(&[&[(1, 4)], &[(2, 5)], &[(3, 5)], &[(4, 1)]]);
        let t = tally(&[FeatureKey::Point(9)], &set, Weighting::Count, 1.0).unwrap();
        for l in t.likelihood {
            assert!((l - 0.25).abs() < 1e-15);
        }
        let t = tally(&[FeatureKey::Point(9)], &set, Weighting::Count, 0.0).unwrap();
        assert_eq!(t.likelihood, [0.25; 4]);
    }

    #[test]
    fn binary_weighting_counts_presence() {
        let set = toy_set(&[&[(1, 40), (2, 1)], &[(2, 5)]]);
        let keys = [
            FeatureKey::Point(1),
            FeatureKey::Point(2),
            FeatureKey::Point(2),
        ];
        assert_eq!(
            tally(&keys, &set, Weighting::Binary, 1.0).unwrap().votes,
            [3, 2]
        );
        assert_eq!(
            tally(&keys, &set, Weighting::Count, 1.0).unwrap().votes,
            [42, 10]
        );
    }

    #[test]
    fn mismatched_keys_and_empty_keys_are_errors() {
        let set = toy_set(&[&[(1, 4)], &[(2, 5)]]);
        assert!(matches!(
            tally(
                &[FeatureKey::PointNormal([1, 0, 0, 0])],
                &set,
                Weighting::Count,
                1.0
            ),
            Err(Error::TableMismatch(_))
        ));
        assert!(tally(&[], &set, Weighting::Count, 1.0).is_err());
    }

    #[test]
    fn uniform_likelihood_keeps_prior() {
        let prior = Posterior {
            probabilities: vec![0.5, 0.3, 0.2],
            grasps: 2,
        };
        let post = bayes_update(&prior, &[1.0 / 3.0; 3]).unwrap();
        for (a, b) in post.probabilities.iter().zip(&prior.probabilities) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(post.grasps, 3);
    }

    #[test]
    fn uniform_prior_returns_likelihood() {
        let lik = [0.8, 0.05, 0.05, 0.05, 0.05];
        let post = bayes_update(&Posterior::uniform(5), &lik).unwrap();
        for (a, b) in post.probabilities.iter().zip(lik) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_likelihood_is_floored() {
        let post = bayes_update(&Posterior::uniform(3), &[1.0, 0.0, 0.0]).unwrap();
        assert!(post.probabilities[1] > 0.0);
        assert!(post.probabilities[1] >= POSTERIOR_FLOOR / (1.0 + 3.0 * POSTERIOR_FLOOR));
        assert!(matches!(
            bayes_update(&Posterior::uniform(2), &[0.0, 0.0]),
            Err(Error::DegeneratePosterior)
        ));
    }

    #[test]
    fn decide_examples() {
        let p = |v: &[f64]| Posterior {
            probabilities: v.to_vec(),
            grasps: 4,
        };
        let d = decide(&p(&[0.991, 0.003, 0.003, 0.003]), 0.99);
        assert_eq!(d.object, Some(0));
        assert_eq!(d.grasps, 4);
        assert_eq!(decide(&Posterior::uniform(5), 0.5).object, None);
        let post = p(&[0.91, 0.05, 0.02, 0.01, 0.01]);
        assert_eq!(decide(&post, 0.9).object, Some(0));
        assert_eq!(decide(&post, 0.95).object, None);
        // Strictly greater than beta.
        assert_eq!(decide(&p(&[0.5, 0.5]), 0.5).object, None);
    }

    #[test]
    fn top_two_breaks_ties_by_index() {
        let p = Posterior {
            probabilities: vec![0.2, 0.4, 0.4],
            grasps: 0,
        };
        assert_eq!(p.top_two(), Some((1, 2)));
        assert_eq!(Posterior::uniform(1).top_two(), None);
    }

    fn arb_lik(k: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..1.0, k).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn posterior_stays_normalized(liks in prop::collection::vec(arb_lik(5), 1..40)) {
            let mut post = Posterior::uniform(5);
            for l in &liks {
                post = bayes_update(&post, l).unwrap();
                let sum: f64 = post.probabilities.iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-12);
                for &p in &post.probabilities {
                    prop_assert!(p >= POSTERIOR_FLOOR / (1.0 + 5.0 * POSTERIOR_FLOOR) * (1.0 - 1e-12));
                }
            }
        }

        #[test]
        fn exclusive_evidence_raises_its_object(prior in arb_lik(4), repeats in 1usize..50) {
            let set = toy_set(&[&[(1, 7)], &[(2, 3)], &[(3, 9)], &[(4, 1)]]);
            let keys = vec![FeatureKey::Point(1); repeats];
            let t = tally(&keys, &set, Weighting::Count, 1.0).unwrap();
            let prior = Posterior { probabilities: prior, grasps: 0 };
            let post = bayes_update(&prior, &t.likelihood).unwrap();
            if prior.probabilities[0] < 1.0 - 4.0 * POSTERIOR_FLOOR {
                prop_assert!(post.probabilities[0] > prior.probabilities[0]);
            }
        }

        #[test]
        fn tally_is_scale_invariant(scale in 1u64..1000, keys in prop::collection::vec(0u32..6, 1..30)) {
            let base: [&[(u32, u64)]; 3] = [&[(0, 3), (1, 2)], &[(1, 5), (2, 1), (3, 4)], &[(4, 2), (0, 1)]];
            let scaled: Vec<Vec<(u32, u64)>> = base.iter().map(|e| e.iter().map(|&(d, c)| (d, c * scale)).collect()).collect();
            let scaled_refs: Vec<&[(u32, u64)]> = scaled.iter().map(|v| v.as_slice()).collect();
            let keys: Vec<_> = keys.into_iter().map(FeatureKey::Point).collect();
            let a = tally(&keys, &toy_set(&base), Weighting::Count, 1.0).unwrap();
            let b = tally(&keys, &toy_set(&scaled_refs), Weighting::Count, scale as f64).unwrap();
            for (x, y) in a.likelihood.iter().zip(&b.likelihood) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn decision_is_the_strict_argmax(probs in arb_lik(5), beta in 0.05f64..0.95) {
            let post = Posterior { probabilities: probs.clone(), grasps: 1 };
            if let Some(o) = decide(&post, beta).object {
                prop_assert!(probs[o] > beta);
                for (i, &p) in probs.iter().enumerate() {
                    if i != o { prop_assert!(probs[o] > p); }
                }
            }
        }
    }
}
