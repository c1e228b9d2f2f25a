//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line
//! (run with `--nocapture` to see them); the test fails if any criterion
//! does.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use haptic_ppf::explore::{next_pose_active, ExplorationState, Policy, PosePredictionTable};
use haptic_ppf::features::{
    canonical_ppf, ppf, FeatureKey, Method, ObjectTable, Ppf, Quantizer, TableSet,
};
use haptic_ppf::grasp::Contact;
use haptic_ppf::harness::report::{records_csv, summary_csv, traces_csv, write_outputs};
use haptic_ppf::harness::{
    build_grids, ks_two_sample, run_experiment, run_trials, train_models, ExperimentConfig,
    ExperimentOutput, StatSummary,
};
use haptic_ppf::recognizer::{bayes_update, tally, Posterior, Weighting};
use haptic_ppf::{rng, Error, Vec3};
use nalgebra::{Rotation3, Unit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 2024;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: &str, name: &str, o: &Outcome) {
    println!(
        "criterion {id} [{}] {name}: {}",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail
    );
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

fn max_gap(a: &Ppf, b: &Ppf) -> f64 {
    [
        a.distance - b.distance,
        a.angle_n1_d - b.angle_n1_d,
        a.angle_n2_d - b.angle_n2_d,
        a.angle_n1_n2 - b.angle_n1_n2,
    ]
    .iter()
    .fold(0.0f64, |m, v| m.max(v.abs()))
}

fn rigid_invariance() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let c1 = Contact::new(
            random_unit(&mut rng) * rng.random_range(0.0..150.0),
            random_unit(&mut rng),
        )
        .unwrap();
        let c2 = Contact::new(
            random_unit(&mut rng) * rng.random_range(0.0..150.0),
            random_unit(&mut rng),
        )
        .unwrap();
        let axis = Unit::new_normalize(random_unit(&mut rng));
        let rot = Rotation3::from_axis_angle(
            &axis,
            rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
        );
        let shift = random_unit(&mut rng) * rng.random_range(0.0..500.0);
        let move_contact =
            |c: &Contact| Contact::new(rot * c.position + shift, rot * c.normal).unwrap();
        let (m1, m2) = (move_contact(&c1), move_contact(&c2));
        worst = worst.max(max_gap(&ppf(&c1, &c2).unwrap(), &ppf(&m1, &m2).unwrap()));
        worst = worst.max(max_gap(
            &canonical_ppf(&c1, &c2).unwrap(),
            &canonical_ppf(&m2, &m1).unwrap(),
        ));
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: worst < 1e-9 && elapsed < Duration::from_secs(5),
        detail: format!(
            "max deviation {worst:.3e} (< 1e-9), {:.2} s (< 5 s)",
            elapsed.as_secs_f64()
        ),
    }
}

fn random_key(rng: &mut ChaCha8Rng, method: Method) -> FeatureKey {
    match method {
        Method::Point => FeatureKey::Point(rng.random_range(0..40)),
        Method::PointNormal => FeatureKey::PointNormal([
            rng.random_range(0..4),
            rng.random_range(0..3),
            rng.random_range(0..3),
            rng.random_range(0..3),
        ]),
    }
}

fn voting_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    let mut mismatches = 0;
    for case in 0..200 {
        let method = Method::ALL[case % 2];
        let k = rng.random_range(1..=5);
        let tables: Vec<ObjectTable> = (0..k)
            .map(|i| {
                let n = rng.random_range(1..=100);
                let mut counts: BTreeMap<FeatureKey, u64> = BTreeMap::new();
                for _ in 0..n {
                    *counts.entry(random_key(&mut rng, method)).or_default() +=
                        rng.random_range(1..20);
                }
                ObjectTable::from_parts(
                    format!("obj{i}"),
                    method,
                    Quantizer::default(),
                    1,
                    counts,
                    None,
                )
                .unwrap()
            })
            .collect();
        let set = TableSet::new(tables).unwrap();
        let keys: Vec<FeatureKey> = (0..rng.random_range(1..150))
            .map(|_| random_key(&mut rng, method))
            .collect();
        let alpha = [0.0, 0.5, 1.0][case % 3];
        for weighting in [Weighting::Count, Weighting::Binary] {
            let got = tally(&keys, &set, weighting, alpha).unwrap();
            // Linear scan over every stored entry of every table.
            let votes: Vec<u64> = set
                .tables()
                .iter()
                .map(|t| {
                    let entries = t.sorted_entries();
                    keys.iter()
                        .map(|q| {
                            entries.iter().find(|(k, _)| k == q).map_or(0, |&(_, c)| {
                                if weighting == Weighting::Count {
                                    c
                                } else {
                                    1
                                }
                            })
                        })
                        .sum()
                })
                .collect();
            let total = votes.iter().sum::<u64>() as f64 + k as f64 * alpha;
            let lik: Vec<f64> = if total == 0.0 {
                vec![1.0 / k as f64; k]
            } else {
                votes.iter().map(|&v| (v as f64 + alpha) / total).collect()
            };
            if got.votes != votes || got.likelihood != lik {
                mismatches += 1;
            }
        }
    }
    Outcome {
        pass: mismatches == 0,
        detail: format!("{mismatches} mismatches in 200 cases x 2 weightings"),
    }
}

fn bayes_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let (mut worst_gap, mut worst_sum) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let k = rng.random_range(2..=6);
        let len = rng.random_range(1..=5);
        let seq: Vec<Vec<f64>> = (0..len)
            .map(|_| (0..k).map(|_| rng.random_range(0.05..1.0)).collect())
            .collect();
        let mut post = Posterior::uniform(k);
        for lik in &seq {
            post = bayes_update(&post, lik).unwrap();
            worst_sum = worst_sum.max((post.probabilities.iter().sum::<f64>() - 1.0).abs());
        }
        let mut product = vec![1.0; k];
        for lik in &seq {
            for (p, l) in product.iter_mut().zip(lik) {
                *p *= l;
            }
        }
        let z: f64 = product.iter().sum();
        for (p, q) in post.probabilities.iter().zip(&product) {
            worst_gap = worst_gap.max((p - q / z).abs());
        }
    }
    Outcome {
        pass: worst_gap < 1e-9 && worst_sum <= 1e-12,
        detail: format!("max sequential/batch gap {worst_gap:.3e} (< 1e-9), max |sum - 1| {worst_sum:.3e} (<= 1e-12)"),
    }
}

fn active_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 3);
    let mut mismatches = 0;
    for case in 0..100 {
        let k = rng.random_range(2..=5);
        let poses = rng.random_range(1..=360);
        let coarse = case % 3 == 0;
        let value = |rng: &mut ChaCha8Rng| {
            let v: f64 = rng.random_range(0.0..1.0);
            if coarse {
                (v * 4.0).round() / 4.0
            } else {
                v
            }
        };
        let predictions: Vec<Vec<Option<Vec<f64>>>> = (0..k)
            .map(|_| {
                (0..poses)
                    .map(|_| {
                        (rng.random_range(0.0..1.0) > 0.2)
                            .then(|| (0..k).map(|_| value(&mut rng)).collect())
                    })
                    .collect()
            })
            .collect();
        let names: Vec<String> = (0..k).map(|i| format!("o{i}")).collect();
        let table = PosePredictionTable::from_predictions(names, predictions.clone()).unwrap();
        let mut probs: Vec<f64> = (0..k).map(|_| value(&mut rng) + 0.01).collect();
        let s: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= s);
        let post = Posterior {
            probabilities: probs.clone(),
            grasps: 1,
        };
        // Exhaustive scan: leader and runner-up by probability then index.
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
        let (o1, o2) = (order[0], order[1]);
        let mut best: Option<(usize, f64)> = None;
        for (pose, v) in predictions[o1].iter().enumerate() {
            if let Some(v) = v {
                let gap = v[o1] - v[o2];
                if best.is_none_or(|(_, g)| gap > g) {
                    best = Some((pose, gap));
                }
            }
        }
        let state = ExplorationState::new(Policy::Active, poses, rng::stream(case as u64, &[]));
        let got = next_pose_active(&post, &table, &state);
        let ok = match (best, got) {
            (Some((p, _)), Ok(q)) => p == q,
            (None, Err(Error::NoValidPose { .. })) => true,
            _ => false,
        };
        mismatches += !ok as usize;
    }
    Outcome {
        pass: mismatches == 0,
        detail: format!("{mismatches} mismatches in 100 random tables"),
    }
}

fn summary_at<'a>(
    s: &'a [StatSummary],
    object: &str,
    m: Method,
    p: Policy,
    beta: f64,
) -> &'a StatSummary {
    s.iter()
        .find(|x| x.object == object && x.method == m && x.policy == p && x.beta == beta)
        .expect("summary cell")
}

fn desk_scale(out: &ExperimentOutput, elapsed: Duration) -> Outcome {
    let top = 0.99;
    let s = &out.summaries;
    let mut notes = Vec::new();
    let mut pass = elapsed < Duration::from_secs(600);
    for policy in Policy::ALL {
        let recs: Vec<_> = out
            .records
            .iter()
            .filter(|r| r.method == Method::PointNormal && r.policy == policy && r.beta == top)
            .collect();
        let acc = 100.0 * recs.iter().filter(|r| r.correct).count() as f64 / recs.len() as f64;
        pass &= acc >= 95.0;
        notes.push(format!("(a) PN+{policy} accuracy {acc:.1}%"));
    }
    let mut holding = 0;
    for object in &out.objects {
        let med = |m, p| summary_at(s, object, m, p, top).median;
        let ok = Policy::ALL
            .iter()
            .all(|&p| med(Method::PointNormal, p) <= med(Method::Point, p))
            && Method::ALL
                .iter()
                .all(|&m| med(m, Policy::Active) <= med(m, Policy::Passive));
        holding += ok as usize;
        notes.push(format!(
            "{object} medians PN/P passive {}/{} active {}/{}",
            med(Method::PointNormal, Policy::Passive),
            med(Method::Point, Policy::Passive),
            med(Method::PointNormal, Policy::Active),
            med(Method::Point, Policy::Active)
        ));
    }
    pass &= holding >= 4;
    notes.push(format!(
        "(b) orderings hold on {holding} of {} objects",
        out.objects.len()
    ));
    let bowl_min = Policy::ALL
        .iter()
        .map(|&p| summary_at(s, "bowl", Method::PointNormal, p, top).min)
        .min()
        .unwrap();
    pass &= bowl_min == 1;
    notes.push(format!("(c) widest fixture PN min grasps {bowl_min}"));
    notes.push(format!("runtime {:.1} s", elapsed.as_secs_f64()));
    Outcome {
        pass,
        detail: notes.join("; "),
    }
}

fn pose_freeness(cfg: &ExperimentConfig, trained: &haptic_ppf::harness::Trained) -> Outcome {
    let run = |hidden| {
        let c = ExperimentConfig {
            methods: vec![Method::PointNormal],
            policies: vec![Policy::Passive],
            hidden_rotation: hidden,
            record_traces: false,
            ..cfg.clone()
        };
        run_trials(trained, &c).unwrap().records
    };
    let (rotated, fixed) = (run(true), run(false));
    let mut pass = true;
    let mut notes = Vec::new();
    for object in trained.names() {
        let counts = |recs: &[haptic_ppf::harness::TrialRecord]| -> Vec<f64> {
            recs.iter()
                .filter(|r| r.object == object && r.beta == 0.99)
                .map(|r| r.grasps as f64)
                .collect()
        };
        let (a, b) = (counts(&rotated), counts(&fixed));
        let ks = ks_two_sample(&a, &b);
        pass &= a.len() == 100 && b.len() == 100 && !ks.rejects_at(0.01);
        notes.push(format!(
            "{object} D={:.3} p={:.3}",
            ks.statistic, ks.p_value
        ));
    }
    Outcome {
        pass,
        detail: notes.join("; "),
    }
}

fn determinism(cfg: &ExperimentConfig) -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut texts = Vec::new();
    for (dir, workers) in dirs.iter().zip([1, 4]) {
        let out = run_experiment(cfg, Some(workers)).unwrap();
        write_outputs(&out, dir.path()).unwrap();
        let mut files = BTreeMap::new();
        for name in ["records.csv", "summary.csv", "traces.csv"] {
            files.insert(name, std::fs::read(dir.path().join(name)).unwrap());
        }
        assert_eq!(files["records.csv"], records_csv(&out.records).into_bytes());
        assert_eq!(
            files["summary.csv"],
            summary_csv(&out.summaries).into_bytes()
        );
        assert_eq!(
            files["traces.csv"],
            traces_csv(&out.traces, &out.objects).into_bytes()
        );
        texts.push(files);
    }
    let identical = texts[0] == texts[1];
    Outcome {
        pass: identical,
        detail: format!(
            "workers 1 vs 4: {} ({} bytes of CSV)",
            if identical {
                "byte-identical"
            } else {
                "different"
            },
            texts[0].values().map(Vec::len).sum::<usize>()
        ),
    }
}

#[test]
fn acceptance() {
    let mut results = Vec::new();
    let mut record = |id: &str, name: &str, o: Outcome| {
        report(id, name, &o);
        results.push((id.to_string(), o.pass));
    };
    record(
        "1",
        "point pair feature rigid invariance",
        rigid_invariance(),
    );
    record("2", "vote tally matches brute-force scan", voting_oracle());
    record(
        "3",
        "sequential Bayes equals batch product",
        bayes_correctness(),
    );
    record(
        "4",
        "active policy matches exhaustive argmax",
        active_oracle(),
    );

    let cfg = ExperimentConfig {
        seed: SEED,
        ..ExperimentConfig::default()
    };
    let start = Instant::now();
    let trained = train_models(&cfg, build_grids(&cfg).unwrap()).unwrap();
    let out = run_trials(&trained, &cfg).unwrap();
    let elapsed = start.elapsed();
    for s in out.summaries.iter().filter(|s| s.beta == 0.99) {
        println!(
            "    {:<10} {:<2} {:<7} min {:>3} max {:>3} avg {:>7.2} median {:>5.1} error {:>5.1}%",
            s.object,
            s.method.tag(),
            s.policy.tag(),
            s.min,
            s.max,
            s.avg,
            s.median,
            s.error_pct
        );
    }
    record("5", "desk-scale experiment", desk_scale(&out, elapsed));
    record(
        "6",
        "pose-freeness of passive exploration",
        pose_freeness(&cfg, &trained),
    );
    record("7", "determinism across worker counts", determinism(&cfg));

    let failed: Vec<_> = results
        .iter()
        .filter(|r| !r.1)
        .map(|r| r.0.clone())
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
