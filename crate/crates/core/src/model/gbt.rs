use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{FeatureMatrix, Tree, TreeBuilder};
use crate::data::{Dataset, JobRecord, START_TIME};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MODEL_FORMAT: &str = "ioattrib-gbt";
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Deepest node on a variance lookup path must hold at least this many rows.
pub const MIN_VARIANCE_ROWS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GbtHyperparams {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Fraction of features each tree may split on.
    pub colsample: f64,
    /// Fraction of rows each tree is fit to, drawn without replacement.
    pub subsample: f64,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for GbtHyperparams {
    /// The usual out-of-the-box boosting setup: 100 trees of depth 6.
    fn default() -> Self {
        GbtHyperparams {
            n_trees: 100,
            max_depth: 6,
            colsample: 1.0,
            subsample: 1.0,
            learning_rate: 0.3,
            seed: 0,
        }
    }
}

impl GbtHyperparams {
    pub fn validate(&self) -> Result<()> {
        let frac = |x: f64| x > 0.0 && x <= 1.0;
        if self.n_trees == 0 {
            return Err(Error::Config("n_trees must be >= 1".into()));
        }
        if !frac(self.colsample) || !frac(self.subsample) || !frac(self.learning_rate) {
            return Err(Error::Config(format!(
                "colsample, subsample and learning_rate must be in (0, 1]: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Min-max scaling applied to a timestamp feature before conversion to the
/// model's scalar type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeScaling {
    pub min: f64,
    pub max: f64,
}

impl TimeScaling {
    /// Training-span scaling if `features` include [`START_TIME`].
    pub fn for_features<T: Real>(train: &Dataset<T>, features: &[String]) -> Option<Self> {
        features.iter().any(|f| f == START_TIME).then(|| {
            let (min, max) = train.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                (lo.min(r.start_time), hi.max(r.start_time))
            });
            TimeScaling { min, max }
        })
    }

    pub fn apply(&self, t: f64) -> f64 {
        let span = self.max - self.min;
        if span > 0.0 {
            (t - self.min) / span
        } else {
            0.0
        }
    }
}

/// Gradient-boosted regression trees over log10 throughput.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel<T> {
    pub hyperparams: GbtHyperparams,
    pub feature_names: Vec<String>,
    /// Scaling for [`START_TIME`] if it is among the features.
    pub time_scaling: Option<TimeScaling>,
    /// Mean training target.
    pub base: T,
    pub trees: Vec<Tree<T>>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile<T> {
    format: String,
    format_version: u32,
    model: GbtModel<T>,
}

/// Builds the model input matrix for a dataset.
pub fn feature_matrix<T: Real>(
    dataset: &Dataset<T>,
    names: &[String],
    time_scaling: Option<TimeScaling>,
) -> Result<FeatureMatrix<T>> {
    let columns = names
        .iter()
        .map(|name| {
            dataset
                .iter()
                .map(|r| feature_value(r, name, time_scaling))
                .collect::<Result<Vec<T>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    if names.is_empty() {
        return Err(Error::InvalidArgument("empty feature list".into()));
    }
    Ok(FeatureMatrix::from_columns(columns))
}

fn feature_value<T: Real>(r: &JobRecord<T>, name: &str, scaling: Option<TimeScaling>) -> Result<T> {
    if name == START_TIME {
        let t = scaling.map_or(r.start_time, |s| s.apply(r.start_time));
        return Ok(T::lit(t));
    }
    r.feature(name).ok_or_else(|| Error::UnknownFeature(name.to_string()))
}

impl<T: Real> GbtModel<T> {
    /// Trains on the dataset's log10 throughput.
    pub fn train(train: &Dataset<T>, feature_names: &[String], hp: &GbtHyperparams) -> Result<Self> {
        if feature_names.is_empty() {
            return Err(Error::InvalidArgument("empty feature list".into()));
        }
        train.schema().check_features(feature_names)?;
        let time_scaling = TimeScaling::for_features(train, feature_names);
        let matrix = feature_matrix(train, feature_names, time_scaling)?;
        let mut model = Self::fit(&matrix, &train.log_throughputs(), hp)?;
        model.feature_names = feature_names.to_vec();
        model.time_scaling = time_scaling;
        Ok(model)
    }

    /// Squared-loss boosting on a prepared matrix. Feature names are left
    /// as `f0, f1, …`.
    pub fn fit(matrix: &FeatureMatrix<T>, targets: &[T], hp: &GbtHyperparams) -> Result<Self> {
        hp.validate()?;
        let n = matrix.n_rows();
        if n < 2 || targets.len() != n {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 training rows with one target each (rows {n}, targets {})",
                targets.len()
            )));
        }
        if matrix.n_features() == 0 {
            return Err(Error::InvalidArgument("empty feature list".into()));
        }
        let lr = T::lit(hp.learning_rate);
        let base = crate::stats::mean(targets).expect("non-empty");
        let mut pred = vec![base; n];
        let presorted = matrix.presort();
        let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
        let n_rows_per_tree = ((hp.subsample * n as f64).round() as usize).clamp(1, n);
        let n_feats = matrix.n_features();
        let n_feats_per_tree = ((hp.colsample * n_feats as f64).round() as usize).clamp(1, n_feats);
        let mut in_sample = vec![true; n];
        let mut trees = Vec::with_capacity(hp.n_trees);
        for _ in 0..hp.n_trees {
            if n_rows_per_tree < n {
                in_sample.iter_mut().for_each(|b| *b = false);
                for i in index::sample(&mut rng, n, n_rows_per_tree) {
                    in_sample[i] = true;
                }
            }
            let features: Vec<usize> = if n_feats_per_tree < n_feats {
                let mut f = index::sample(&mut rng, n_feats, n_feats_per_tree).into_vec();
                f.sort_unstable();
                f
            } else {
                (0..n_feats).collect()
            };
            let residuals: Vec<T> = targets.iter().zip(&pred).map(|(y, p)| *y - *p).collect();
            let sorted: Vec<Vec<usize>> = features
                .iter()
                .map(|&f| presorted[f].iter().copied().filter(|&r| in_sample[r]).collect())
                .collect();
            let tree = TreeBuilder::new(matrix, &residuals, hp.max_depth).build(&features, sorted);
            tree.add_predictions(matrix, lr, &mut pred);
            trees.push(tree);
        }
        Ok(GbtModel {
            hyperparams: *hp,
            feature_names: (0..n_feats).map(|i| format!("f{i}")).collect(),
            time_scaling: None,
            base,
            trees,
        })
    }

    /// Prediction for a feature vector in model order.
    pub fn predict_row(&self, x: &[T]) -> T {
        let lr = T::lit(self.hyperparams.learning_rate);
        let sum: T = self.trees.iter().map(|t| t.predict(x)).sum();
        self.base + lr * sum
    }

    /// Predicted log10 throughput of one job.
    pub fn predict(&self, record: &JobRecord<T>) -> Result<T> {
        let x = self.features_of(record)?;
        Ok(self.predict_row(&x))
    }

    pub fn features_of(&self, record: &JobRecord<T>) -> Result<Vec<T>> {
        self.feature_names
            .iter()
            .map(|name| feature_value(record, name, self.time_scaling))
            .collect()
    }

    pub fn matrix_for(&self, dataset: &Dataset<T>) -> Result<FeatureMatrix<T>> {
        feature_matrix(dataset, &self.feature_names, self.time_scaling)
    }

    pub fn predict_matrix(&self, m: &FeatureMatrix<T>) -> Vec<T> {
        let mut out = vec![self.base; m.n_rows()];
        let lr = T::lit(self.hyperparams.learning_rate);
        for tree in &self.trees {
            tree.add_predictions(m, lr, &mut out);
        }
        out
    }

    pub fn predict_dataset(&self, dataset: &Dataset<T>) -> Result<Vec<T>> {
        Ok(self.predict_matrix(&self.matrix_for(dataset)?))
    }

    /// Signed log10 errors (predicted − measured) over a dataset.
    pub fn signed_errors(&self, dataset: &Dataset<T>) -> Result<Vec<T>> {
        let pred = self.predict_dataset(dataset)?;
        Ok(pred
            .iter()
            .zip(dataset.iter())
            .map(|(p, r)| *p - r.log_throughput())
            .collect())
    }

    /// Residual variance at `x`, read from the first tree: the deepest node
    /// on the path holding at least [`MIN_VARIANCE_ROWS`] rows (the root if
    /// none does).
    pub fn residual_variance(&self, x: &[T]) -> T {
        let Some(tree) = self.trees.first() else {
            return T::zero();
        };
        let path = tree.path(x);
        path.iter()
            .rev()
            .map(|&i| &tree.nodes[i])
            .find(|n| n.n_rows() >= MIN_VARIANCE_ROWS)
            .unwrap_or(&tree.nodes[0])
            .variance()
    }

    /// Re-estimates the variance lookup of [`Self::residual_variance`] from
    /// held-out rows, using this model's residuals on them.
    pub fn calibrate_variance(&mut self, m: &FeatureMatrix<T>, targets: &[T]) {
        let pred = self.predict_matrix(m);
        let residuals: Vec<T> = targets.iter().zip(&pred).map(|(y, p)| *y - *p).collect();
        if let Some(first) = self.trees.first_mut() {
            first.restat(m, &residuals);
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            format_version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile<T> = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT || file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported model file {} v{}",
                file.format, file.format_version
            )));
        }
        Ok(file.model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
