//! Monte Carlo identification experiments.
//!
//! A trial grasps one object repeatedly until the posterior crosses the
//! highest threshold of the sweep (or the grasp cap is hit). The stop rule
//! only truncates the run, so one trace answers every threshold at once.
//! Trials are independent and seeded from `(seed, object, policy, trial)`,
//! which makes results identical for any number of worker threads. The
//! method is deliberately left out of the seed so that PN and P runs see
//! the same poses and the same sensor noise.

pub mod plot;
pub mod report;
pub mod stats;

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::explore::{
    build_predictions, next_pose_active, next_pose_passive, ExplorationState, Policy,
    PosePredictionTable,
};
use crate::features::{sample_keys, Method, NoiseMode, Quantizer, TableSet, TrainingOptions};
use crate::grasp::{build_pose_grid, HandModel, NoiseModel, NoiseStream, PoseGrid};
use crate::recognizer::{bayes_update, tally, Posterior, TraceRow, Weighting};
use crate::{fixtures, rng, Error, Result};

pub use stats::{ks_two_sample, summarize, KsTest, StatSummary};

pub const DEFAULT_BETAS: [f64; 7] = [0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99];

/// Everything that determines an experiment's results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Bundled fixture names.
    pub objects: Vec<String>,
    /// Pose grid size `L`.
    pub poses: usize,
    /// Noisy samples per grasp `N`, in training and in testing.
    pub samples: usize,
    pub sigma_distance: f64,
    pub sigma_angle: f64,
    pub noise_mode: NoiseMode,
    pub distance_step: f64,
    pub angle_step: f64,
    pub betas: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub weighting: Weighting,
    pub smoothing: f64,
    /// Grasps after which an undecided trial gives up.
    pub cap: usize,
    pub methods: Vec<Method>,
    pub policies: Vec<Policy>,
    pub exclude_visited: bool,
    /// Turn the object by a random whole number of poses in passive trials.
    pub hidden_rotation: bool,
    /// Keep per-grasp traces (needed for `traces.csv`).
    pub record_traces: bool,
    pub hand: HandModel,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let q = Quantizer::default();
        let noise = NoiseModel::default();
        Self {
            objects: fixtures::ALL.iter().map(|f| f.name.to_string()).collect(),
            poses: 360,
            samples: 50,
            sigma_distance: noise.sigma_distance,
            sigma_angle: noise.sigma_angle,
            noise_mode: NoiseMode::Contact,
            distance_step: q.distance_step,
            angle_step: q.angle_step,
            betas: DEFAULT_BETAS.to_vec(),
            trials: 100,
            seed: 0,
            weighting: Weighting::Count,
            smoothing: 1.0,
            cap: 500,
            methods: Method::ALL.to_vec(),
            policies: Policy::ALL.to_vec(),
            exclude_visited: false,
            hidden_rotation: true,
            record_traces: true,
            hand: HandModel::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn quantizer(&self) -> Quantizer {
        Quantizer {
            distance_step: self.distance_step,
            angle_step: self.angle_step,
        }
    }

    pub fn noise(&self) -> NoiseModel {
        NoiseModel {
            sigma_distance: self.sigma_distance,
            sigma_angle: self.sigma_angle,
            rng_seed: self.seed,
        }
    }

    pub fn training_options(&self) -> TrainingOptions {
        TrainingOptions {
            samples: self.samples,
            noise: self.noise(),
            noise_mode: self.noise_mode,
            quantizer: self.quantizer(),
            retain_pose_records: true,
        }
    }

    pub fn max_beta(&self) -> f64 {
        self.betas.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.objects.is_empty() {
            return bad("no objects".into());
        }
        if self.poses == 0 || self.samples == 0 || self.trials == 0 || self.cap == 0 {
            return bad("poses, samples, trials and cap must all be at least 1".into());
        }
        if self.betas.is_empty() || self.betas.iter().any(|&b| !(b > 0.0 && b < 1.0)) {
            return bad(format!("thresholds must lie in (0, 1): {:?}", self.betas));
        }
        if !(self.sigma_distance >= 0.0 && self.sigma_angle >= 0.0) {
            return bad("noise sigmas must be non-negative".into());
        }
        if !(self.smoothing >= 0.0 && self.smoothing.is_finite()) {
            return bad(format!("bad smoothing {}", self.smoothing));
        }
        if self.methods.is_empty() || self.policies.is_empty() {
            return bad("need at least one method and one policy".into());
        }
        self.quantizer().validate()?;
        self.hand.validate()
    }
}

/// Trained tables and their pose predictions for one method.
#[derive(Debug, Clone)]
pub struct MethodModel {
    pub tables: TableSet,
    pub predictions: PosePredictionTable,
}

/// Pose grids of the objects (in name order) and one model per method.
#[derive(Debug, Clone)]
pub struct Trained {
    pub grids: Vec<PoseGrid>,
    pub models: BTreeMap<Method, MethodModel>,
}

impl Trained {
    pub fn names(&self) -> Vec<String> {
        self.grids.iter().map(|g| g.object.clone()).collect()
    }

    pub fn model(&self, method: Method) -> Result<&MethodModel> {
        self.models
            .get(&method)
            .ok_or_else(|| Error::InvalidConfig(format!("method {method} was not trained")))
    }
}

/// Grasps every configured fixture on the pose grid.
pub fn build_grids(cfg: &ExperimentConfig) -> Result<Vec<PoseGrid>> {
    cfg.objects
        .iter()
        .map(|name| build_pose_grid(name, &fixtures::load(name)?, cfg.poses, &cfg.hand))
        .collect()
}

/// Trains every configured method on the given grids.
pub fn train_models(cfg: &ExperimentConfig, mut grids: Vec<PoseGrid>) -> Result<Trained> {
    cfg.validate()?;
    grids.sort_by(|a, b| a.object.cmp(&b.object));
    if grids.iter().any(|g| g.poses() != cfg.poses) {
        return Err(Error::InvalidConfig(
            "pose grid size differs from config".into(),
        ));
    }
    let opts = cfg.training_options();
    let mut models = BTreeMap::new();
    for &method in &cfg.methods {
        let tables = crate::features::train(&grids, &opts, method)?;
        let predictions = build_predictions(&tables, cfg.weighting, cfg.smoothing)?;
        models.insert(
            method,
            MethodModel {
                tables,
                predictions,
            },
        );
    }
    Ok(Trained { grids, models })
}

/// One run of the identification loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TrialSpec {
    /// Index of the true object in name order.
    pub object: usize,
    pub method: Method,
    pub policy: Policy,
    pub trial: usize,
}

/// Per-grasp history of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub spec: TrialSpec,
    pub rows: Vec<TraceRow>,
}

/// Outcome of one trial at one threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub object: String,
    pub method: Method,
    pub policy: Policy,
    pub beta: f64,
    pub trial: usize,
    pub grasps: usize,
    /// `None` when the cap was reached first.
    pub decided: Option<String>,
    pub correct: bool,
    pub capped: bool,
}

fn policy_index(p: Policy) -> u64 {
    match p {
        Policy::Passive => 0,
        Policy::Active => 1,
    }
}

fn trial_seed(cfg: &ExperimentConfig, spec: &TrialSpec) -> u64 {
    rng::derive_seed(
        cfg.seed,
        &[
            3,
            spec.object as u64,
            policy_index(spec.policy),
            spec.trial as u64,
        ],
    )
}

/// Runs one trial until the posterior exceeds `stop_beta` or the cap.
pub fn run_trace(
    spec: TrialSpec,
    trained: &Trained,
    cfg: &ExperimentConfig,
    stop_beta: f64,
) -> Result<Trace> {
    let model = trained.model(spec.method)?;
    let grid = trained
        .grids
        .get(spec.object)
        .ok_or_else(|| Error::InvalidConfig(format!("no object with index {}", spec.object)))?;
    let poses = grid.poses();
    let seed = trial_seed(cfg, &spec);
    let mut state = ExplorationState::new(spec.policy, poses, rng::stream(seed, &[]));
    state.exclude_visited = cfg.exclude_visited;
    let rotation = state.rng().random_range(0..poses);
    let offset = if cfg.hidden_rotation && spec.policy == Policy::Passive {
        rotation
    } else {
        0
    };
    let noise = cfg.noise();
    let q = cfg.quantizer();
    let mut posterior = Posterior::uniform(model.tables.len());
    let mut rows = Vec::new();
    let mut keys = Vec::with_capacity(3 * cfg.samples);
    for t in 1..=cfg.cap {
        let chosen = if t == 1 || spec.policy == Policy::Passive {
            passive_choice(&mut state, grid, offset)
        } else {
            active_choice(&posterior, &model.predictions, &mut state, grid)?
        };
        state.visit(chosen);
        let actual = (chosen + offset) % poses;
        let obs = grid.get(actual).expect("chosen pose is valid");
        let stream = NoiseStream::Test {
            trial: seed,
            grasp: t as u64,
        };
        keys.clear();
        for s in 0..cfg.samples {
            keys.extend(sample_keys(
                obs,
                &noise,
                cfg.noise_mode,
                stream,
                s,
                &q,
                spec.method,
            )?);
        }
        let vt = tally(&keys, &model.tables, cfg.weighting, cfg.smoothing)?;
        posterior = bayes_update(&posterior, &vt.likelihood)?;
        let done = posterior.best().1 > stop_beta;
        rows.push(TraceRow {
            trial: spec.trial as u64,
            grasp: t,
            pose: actual,
            likelihood: vt.likelihood,
            posterior: posterior.probabilities.clone(),
        });
        if done {
            break;
        }
    }
    Ok(Trace { spec, rows })
}

/// Uniform draws until the hand lands on a graspable pose.
fn passive_choice(state: &mut ExplorationState, grid: &PoseGrid, offset: usize) -> usize {
    loop {
        let p = next_pose_passive(state);
        if grid.get((p + offset) % grid.poses()).is_some() {
            return p;
        }
    }
}

/// The active choice, blocking poses where the true object turns out not
/// to be graspable. If every pose worth trying is blocked the grasp falls
/// back to a random one.
fn active_choice(
    posterior: &Posterior,
    predictions: &PosePredictionTable,
    state: &mut ExplorationState,
    grid: &PoseGrid,
) -> Result<usize> {
    loop {
        match next_pose_active(posterior, predictions, state) {
            Ok(p) if grid.get(p).is_some() => return Ok(p),
            Ok(p) => state.block(p),
            Err(Error::NoValidPose { .. }) => return Ok(passive_choice(state, grid, 0)),
            Err(e) => return Err(e),
        }
    }
}

/// Reads the decision for each threshold off a trace.
pub fn records_from_trace(
    trace: &Trace,
    names: &[String],
    betas: &[f64],
    cap: usize,
) -> Vec<TrialRecord> {
    let truth = trace.spec.object;
    betas
        .iter()
        .map(|&beta| {
            let hit = trace.rows.iter().find_map(|r| {
                let (best, p) = Posterior {
                    probabilities: r.posterior.clone(),
                    grasps: r.grasp,
                }
                .best();
                (p > beta).then_some((r.grasp, best))
            });
            let (grasps, decided) = match hit {
                Some((g, o)) => (g, Some(o)),
                None => (cap, None),
            };
            TrialRecord {
                object: names[truth].clone(),
                method: trace.spec.method,
                policy: trace.spec.policy,
                beta,
                trial: trace.spec.trial,
                grasps,
                decided: decided.map(|o| names[o].clone()),
                correct: decided == Some(truth),
                capped: hit.is_none(),
            }
        })
        .collect()
}

/// A single trial at a single threshold.
pub fn run_trial(
    spec: TrialSpec,
    beta: f64,
    trained: &Trained,
    cfg: &ExperimentConfig,
) -> Result<TrialRecord> {
    let trace = run_trace(spec, trained, cfg, beta)?;
    Ok(records_from_trace(&trace, &trained.names(), &[beta], cfg.cap).remove(0))
}

/// Records, summaries and (optionally) traces of a full sweep.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub objects: Vec<String>,
    pub records: Vec<TrialRecord>,
    pub summaries: Vec<StatSummary>,
    pub traces: Vec<Trace>,
}

/// All trial specs of a sweep in output order.
pub fn trial_specs(cfg: &ExperimentConfig, objects: usize) -> Vec<TrialSpec> {
    let mut specs = Vec::new();
    for object in 0..objects {
        for &method in &cfg.methods {
            for &policy in &cfg.policies {
                for trial in 0..cfg.trials {
                    specs.push(TrialSpec {
                        object,
                        method,
                        policy,
                        trial,
                    });
                }
            }
        }
    }
    specs
}

/// Runs every trial of an already trained setup.
pub fn run_trials(trained: &Trained, cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let names = trained.names();
    let stop = cfg.max_beta();
    let traces = trial_specs(cfg, names.len())
        .into_par_iter()
        .map(|spec| run_trace(spec, trained, cfg, stop))
        .collect::<Result<Vec<_>>>()?;
    let records: Vec<TrialRecord> = traces
        .iter()
        .flat_map(|t| records_from_trace(t, &names, &cfg.betas, cfg.cap))
        .collect();
    let summaries = summarize(&records)?;
    Ok(ExperimentOutput {
        objects: names,
        records,
        summaries,
        traces: if cfg.record_traces {
            traces
        } else {
            Vec::new()
        },
    })
}

/// Grasp grids, training and all trials. `workers` bounds the thread pool
/// (`None` uses rayon's default); it never changes the results.
pub fn run_experiment(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let go = || {
        let grids = build_grids(cfg)?;
        let trained = train_models(cfg, grids)?;
        run_trials(&trained, cfg)
    };
    match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(go),
        None => go(),
    }
}
