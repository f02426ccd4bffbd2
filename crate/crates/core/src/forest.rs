//! Full-sample forests: `B` trees grown on the same dataset, predictions
//! averaged.
//!
//! Tree `b` draws from the stream `(master_seed, b)`, so a fitted forest does
//! not depend on how trees are scheduled across threads.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::builder::{grow_tree, BuildConfig};
use crate::error::{Error, Result};
use crate::nlar::Dataset;
use crate::partition::{validate_akm, Tree};
use crate::rng::RandomStream;
use crate::util::compensated_sum;

#[derive(Debug, Clone)]
pub struct Forest {
    trees: Vec<Tree>,
    data: Arc<Dataset>,
    config: BuildConfig,
    master_seed: u64,
}

/// Metadata written next to serialized trees.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ForestHeader {
    pub format: String,
    pub library_version: String,
    pub p: usize,
    #[serde(rename = "B")]
    pub b: usize,
    pub master_seed: u64,
    pub config: BuildConfig,
    pub n_train: usize,
    pub dataset_fingerprint: String,
}

const FORMAT: &str = "rfnlar-forest-v1";
const HEADER_FILE: &str = "forest.json";
const DATA_FILE: &str = "data.csv";
const TREE_DIR: &str = "trees";

fn tree_file(b: usize) -> String {
    format!("tree_{b:05}.txt")
}

/// Grows `b` trees and checks every one for (α, k, m)-validity.
pub fn fit_forest(
    data: Arc<Dataset>,
    config: &BuildConfig,
    b: usize,
    master_seed: u64,
) -> Result<Forest> {
    if b == 0 {
        return Err(Error::Config("B must be at least 1".into()));
    }
    if data.is_empty() {
        return Err(Error::Config(
            "cannot fit a forest on an empty dataset".into(),
        ));
    }
    config.validate(data.p())?;
    let config = config.clone().with_seed(master_seed);
    let trees = (0..b)
        .into_par_iter()
        .map(|i| {
            let mut rng = RandomStream::for_tree(master_seed, i);
            let mut tree = grow_tree(&data, &config, &mut rng)?;
            tree.index = i;
            let report = validate_akm(&tree, &data, config.alpha, config.k, config.m)?;
            if !report.ok {
                return Err(Error::Invariant(format!(
                    "tree {i} failed validation: {report:?}"
                )));
            }
            Ok(tree)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Forest {
        trees,
        data,
        config,
        master_seed,
    })
}

/// Mean of `Y` over the training points in the leaf containing `x`,
/// recomputed from the leaf's sample indices.
pub fn tree_predict(tree: &Tree, data: &Dataset, x: &[f64]) -> Result<f64> {
    let leaf = tree.leaf_of(x)?;
    if leaf.samples.is_empty() {
        return Err(Error::Invariant(format!(
            "leaf {} of tree {} holds no samples",
            leaf.id, tree.index
        )));
    }
    let sum: f64 = leaf.samples.iter().map(|&i| data.y(i as usize)).sum();
    Ok(sum / leaf.samples.len() as f64)
}

impl Forest {
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn data(&self) -> &Arc<Dataset> {
        &self.data
    }

    pub fn config(&self) -> &BuildConfig {
        &self.config
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn p(&self) -> usize {
        self.data.p()
    }

    /// Compensated mean of the per-tree predictions at `x`.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.p() {
            return Err(Error::Shape {
                expected: self.p(),
                got: x.len(),
                context: "query point",
            });
        }
        let sum = compensated_sum(self.trees.iter().map(|t| t.node(t.leaf_index(x)).value));
        Ok(sum / self.trees.len() as f64)
    }

    /// Elementwise [`predict`](Self::predict), parallel over query points.
    pub fn predict_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        xs.par_iter().map(|x| self.predict(x)).collect()
    }

    pub fn header(&self) -> ForestHeader {
        ForestHeader {
            format: FORMAT.to_string(),
            library_version: crate::VERSION.to_string(),
            p: self.p(),
            b: self.trees.len(),
            master_seed: self.master_seed,
            config: self.config.clone(),
            n_train: self.data.len(),
            dataset_fingerprint: self.data.fingerprint(),
        }
    }

    /// Writes `forest.json`, a copy of the training data and one text file
    /// per tree under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let tree_dir = dir.join(TREE_DIR);
        fs::create_dir_all(&tree_dir).map_err(|e| Error::io(&tree_dir, e))?;
        let header = serde_json::to_string_pretty(&self.header())?;
        let hp = dir.join(HEADER_FILE);
        fs::write(&hp, header + "\n").map_err(|e| Error::io(&hp, e))?;
        self.data.write_csv(&dir.join(DATA_FILE))?;
        for t in &self.trees {
            let path = tree_dir.join(tree_file(t.index));
            fs::write(&path, t.to_text()).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    /// Loads a forest saved by [`save`](Self::save) with its bundled data.
    pub fn load(dir: &Path) -> Result<Self> {
        let data = Dataset::read_csv(&dir.join(DATA_FILE))?;
        Self::load_with_data(dir, Arc::new(data))
    }

    /// Loads the trees under `dir` against `data`, which must match the
    /// recorded fingerprint.
    pub fn load_with_data(dir: &Path, data: Arc<Dataset>) -> Result<Self> {
        let hp = dir.join(HEADER_FILE);
        let text = fs::read_to_string(&hp).map_err(|e| Error::io(&hp, e))?;
        let header: ForestHeader = serde_json::from_str(&text)?;
        if header.format != FORMAT {
            return Err(Error::Config(format!(
                "unsupported forest format '{}'",
                header.format
            )));
        }
        if header.dataset_fingerprint != data.fingerprint() {
            return Err(Error::Config(
                "dataset does not match the fingerprint recorded with the forest".into(),
            ));
        }
        header.config.validate(header.p)?;
        let trees = (0..header.b)
            .map(|b| {
                let path = dir.join(TREE_DIR).join(tree_file(b));
                let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                let mut t = Tree::from_text(
                    &text,
                    &data,
                    header.config.clone(),
                    &path.display().to_string(),
                )?;
                t.index = b;
                Ok(t)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            trees,
            data,
            config: header.config,
            master_seed: header.master_seed,
        })
    }
}
