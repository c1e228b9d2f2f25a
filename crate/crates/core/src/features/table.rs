use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;

use super::{keys_for_grasp, sample_keys, FeatureKey, Method, NoiseMode, Quantizer};
use crate::grasp::{NoiseModel, NoiseStream, PoseGrid};
use crate::{Error, Result};

/// Hash table of one object: how often each key was produced in training.
///
/// Optionally also keeps the clean (noise-free) keys of every trained pose,
/// which active exploration needs to predict the outcome of a grasp.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectTable {
    name: String,
    method: Method,
    quantizer: Quantizer,
    poses: usize,
    counts: HashMap<FeatureKey, u64>,
    total: u64,
    pose_keys: Option<BTreeMap<usize, [FeatureKey; 3]>>,
}

impl ObjectTable {
    pub fn new(
        name: impl Into<String>,
        method: Method,
        quantizer: Quantizer,
        poses: usize,
    ) -> Self {
        Self {
            name: name.into(),
            method,
            quantizer,
            poses,
            counts: HashMap::new(),
            total: 0,
            pose_keys: None,
        }
    }

    /// Rebuilds a table from stored parts, checking its invariants.
    pub fn from_parts(
        name: impl Into<String>,
        method: Method,
        quantizer: Quantizer,
        poses: usize,
        counts: impl IntoIterator<Item = (FeatureKey, u64)>,
        pose_keys: Option<BTreeMap<usize, [FeatureKey; 3]>>,
    ) -> Result<Self> {
        let mut table = Self::new(name, method, quantizer, poses);
        for (key, count) in counts {
            if count == 0 {
                return Err(Error::TableMismatch(format!("zero count for key {key:?}")));
            }
            table.add_count(key, count)?;
        }
        if let Some(records) = &pose_keys {
            for (&pose, keys) in records {
                if pose >= poses {
                    return Err(Error::TableMismatch(format!(
                        "pose record {pose} outside [0, {poses})"
                    )));
                }
                table.check_key(&keys[0])?;
                table.check_key(&keys[1])?;
                table.check_key(&keys[2])?;
            }
        }
        table.pose_keys = pose_keys;
        Ok(table)
    }

    fn check_key(&self, key: &FeatureKey) -> Result<()> {
        if key.method() != self.method {
            return Err(Error::TableMismatch(format!(
                "{} key {key:?} in {} table `{}`",
                key.method(),
                self.method,
                self.name
            )));
        }
        Ok(())
    }

    pub fn add_count(&mut self, key: FeatureKey, count: u64) -> Result<()> {
        self.check_key(&key)?;
        *self.counts.entry(key).or_insert(0) += count;
        self.total += count;
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn quantizer(&self) -> Quantizer {
        self.quantizer
    }

    /// Size `L` of the pose grid the table was trained on.
    pub fn poses(&self) -> usize {
        self.poses
    }

    pub fn count(&self, key: &FeatureKey) -> u64 {
        self.counts.get(key).copied().unwrap_or(0)
    }

    pub fn total_count(&self) -> u64 {
        self.total
    }

    /// Number of distinct keys.
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// `(key, count)` pairs in key order.
    pub fn sorted_entries(&self) -> Vec<(FeatureKey, u64)> {
        let mut entries: Vec<_> = self.counts.iter().map(|(k, c)| (*k, *c)).collect();
        entries.sort_unstable();
        entries
    }

    /// Clean keys per trained pose, if they were retained.
    pub fn pose_keys(&self) -> Option<&BTreeMap<usize, [FeatureKey; 3]>> {
        self.pose_keys.as_ref()
    }

    /// Adds another partial table of the same object into this one.
    /// Summation makes the result independent of merge order.
    pub fn merge(&mut self, other: &ObjectTable) -> Result<()> {
        if other.name != self.name
            || other.method != self.method
            || other.quantizer != self.quantizer
            || other.poses != self.poses
        {
            return Err(Error::TableMismatch(format!(
                "cannot merge table `{}` into `{}`",
                other.name, self.name
            )));
        }
        for (k, c) in &other.counts {
            *self.counts.entry(*k).or_insert(0) += c;
        }
        self.total += other.total;
        if let Some(theirs) = &other.pose_keys {
            let mine = self.pose_keys.get_or_insert_with(BTreeMap::new);
            for (p, keys) in theirs {
                mine.insert(*p, *keys);
            }
        }
        Ok(())
    }
}

/// The tables of all known objects, sharing one method and quantizer,
/// ordered by object name.
#[derive(Debug, Clone, PartialEq)]
pub struct TableSet {
    tables: Vec<ObjectTable>,
}

impl TableSet {
    pub fn new(mut tables: Vec<ObjectTable>) -> Result<Self> {
        let first = tables.first().ok_or(Error::EmptyTableSet)?;
        let (method, quantizer) = (first.method, first.quantizer);
        for t in &tables {
            if t.method != method {
                return Err(Error::TableMismatch(format!(
                    "table `{}` uses method {} but `{}` uses {}",
                    t.name, t.method, first.name, method
                )));
            }
            if t.quantizer != quantizer {
                return Err(Error::TableMismatch(format!(
                    "table `{}` uses quantizer {:?} but `{}` uses {:?}",
                    t.name, t.quantizer, first.name, quantizer
                )));
            }
        }
        tables.sort_by(|a, b| a.name.cmp(&b.name));
        if let Some(w) = tables.windows(2).find(|w| w[0].name == w[1].name) {
            return Err(Error::TableMismatch(format!(
                "duplicate object `{}`",
                w[0].name
            )));
        }
        Ok(Self { tables })
    }

    pub fn method(&self) -> Method {
        self.tables[0].method
    }

    pub fn quantizer(&self) -> Quantizer {
        self.tables[0].quantizer
    }

    pub fn tables(&self) -> &[ObjectTable] {
        &self.tables
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.tables.iter().map(|t| t.name.clone()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.tables.iter().position(|t| t.name == name)
    }

    pub fn into_tables(self) -> Vec<ObjectTable> {
        self.tables
    }
}

/// How training grasps are sampled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingOptions {
    /// Noisy samples per grasp (`N`).
    pub samples: usize,
    pub noise: NoiseModel,
    pub noise_mode: NoiseMode,
    pub quantizer: Quantizer,
    /// Keep the clean keys of every pose for active exploration.
    pub retain_pose_records: bool,
}

impl Default for TrainingOptions {
    fn default() -> Self {
        Self {
            samples: 50,
            noise: NoiseModel::default(),
            noise_mode: NoiseMode::Contact,
            quantizer: Quantizer::default(),
            retain_pose_records: true,
        }
    }
}

fn train_object(grid: &PoseGrid, opts: &TrainingOptions, method: Method) -> Result<ObjectTable> {
    let empty = || ObjectTable::new(grid.object.clone(), method, opts.quantizer, grid.poses());
    let partials = grid
        .observations
        .par_iter()
        .flatten()
        .map(|obs| {
            let mut table = empty();
            for s in 0..opts.samples {
                let keys = sample_keys(
                    obs,
                    &opts.noise,
                    opts.noise_mode,
                    NoiseStream::Train,
                    s,
                    &opts.quantizer,
                    method,
                )?;
                for k in keys {
                    table.add_count(k, 1)?;
                }
            }
            if opts.retain_pose_records {
                let clean = keys_for_grasp(obs, &opts.quantizer, method)?;
                table.pose_keys = Some(BTreeMap::from([(obs.pose_index, clean)]));
            }
            Ok(table)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = empty();
    if opts.retain_pose_records {
        table.pose_keys = Some(BTreeMap::new());
    }
    for p in &partials {
        table.merge(p)?;
    }
    Ok(table)
}

/// Builds one table per object: every valid pose contributes
/// `samples` noisy grasps of three keys each.
pub fn train(grids: &[PoseGrid], opts: &TrainingOptions, method: Method) -> Result<TableSet> {
    if opts.samples == 0 {
        return Err(Error::InvalidConfig(
            "training needs at least one sample per grasp".into(),
        ));
    }
    opts.quantizer.validate()?;
    let tables = grids
        .iter()
        .map(|g| train_object(g, opts, method))
        .collect::<Result<Vec<_>>>()?;
    TableSet::new(tables)
}
