//! Summary statistics and the two-sample Kolmogorov–Smirnov test.

use std::collections::BTreeMap;

use serde::Serialize;

use super::TrialRecord;
use crate::explore::Policy;
use crate::features::Method;
use crate::{Error, Result};

/// Grasp-count statistics of one (object, method, policy, β) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatSummary {
    pub object: String,
    pub method: Method,
    pub policy: Policy,
    pub beta: f64,
    pub trials: usize,
    pub min: usize,
    pub max: usize,
    pub avg: f64,
    pub median: f64,
    /// Percentage of trials that decided wrongly or not at all.
    pub error_pct: f64,
    pub capped: usize,
}

/// Median of a sample; even sizes average the two middle values.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty sample");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Groups records by object, method, policy and β. Rows come out in
/// object-name order, then PN before P, passive before active, and β
/// ascending.
pub fn summarize(records: &[TrialRecord]) -> Result<Vec<StatSummary>> {
    if records.is_empty() {
        return Err(Error::InvalidConfig("no records to summarize".into()));
    }
    type Key<'a> = (&'a str, Method, Policy, u64);
    let mut groups: BTreeMap<Key, Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        // β is positive, so its bit pattern sorts like the value.
        groups
            .entry((r.object.as_str(), r.method, r.policy, r.beta.to_bits()))
            .or_default()
            .push(r);
    }
    Ok(groups
        .into_iter()
        .map(|((object, method, policy, beta), rs)| {
            let counts: Vec<f64> = rs.iter().map(|r| r.grasps as f64).collect();
            let n = rs.len();
            let wrong = rs.iter().filter(|r| !r.correct).count();
            StatSummary {
                object: object.to_string(),
                method,
                policy,
                beta: f64::from_bits(beta),
                trials: n,
                min: rs.iter().map(|r| r.grasps).min().unwrap(),
                max: rs.iter().map(|r| r.grasps).max().unwrap(),
                avg: counts.iter().sum::<f64>() / n as f64,
                median: median(&counts),
                error_pct: 100.0 * wrong as f64 / n as f64,
                capped: rs.iter().filter(|r| r.capped).count(),
            }
        })
        .collect())
}

/// Mean error percentage over objects for one method, policy and β.
pub fn overall_error(
    summaries: &[StatSummary],
    method: Method,
    policy: Policy,
    beta: f64,
) -> Option<f64> {
    let cells: Vec<f64> = summaries
        .iter()
        .filter(|s| s.method == method && s.policy == policy && s.beta == beta)
        .map(|s| s.error_pct)
        .collect();
    (!cells.is_empty()).then(|| cells.iter().sum::<f64>() / cells.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsTest {
    /// Largest gap between the two empirical CDFs.
    pub statistic: f64,
    /// Asymptotic p-value.
    pub p_value: f64,
}

impl KsTest {
    pub fn rejects_at(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// Two-sample Kolmogorov–Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsTest {
    assert!(
        !a.is_empty() && !b.is_empty(),
        "KS test needs two non-empty samples"
    );
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let en = (n * m / (n + m)).sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    KsTest {
        statistic: d,
        p_value: kolmogorov_q(lambda),
    }
}

/// Survival function of the Kolmogorov distribution.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = sign * (-2.0 * (k as f64 * lambda).powi(2)).exp();
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
