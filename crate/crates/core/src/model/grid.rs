//! Exhaustive hyperparameter grid search.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gbt::{GbtHyperparams, GbtModel};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::ErrorSummary;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperparamGrid {
    pub n_trees: Vec<usize>,
    pub max_depth: Vec<usize>,
    pub colsample: Vec<f64>,
    pub subsample: Vec<f64>,
    pub learning_rate: Vec<f64>,
    pub seed: u64,
}

impl Default for HyperparamGrid {
    fn default() -> Self {
        HyperparamGrid {
            n_trees: vec![8, 16, 32, 64, 128],
            max_depth: vec![3, 6, 9, 12, 15, 18, 21],
            colsample: vec![0.5, 1.0],
            subsample: vec![0.5, 1.0],
            learning_rate: vec![0.1],
            seed: 0,
        }
    }
}

impl HyperparamGrid {
    /// Default grid with the depth axis extended to 27, for models that have
    /// to memorize system behavior over time.
    pub fn golden_default() -> Self {
        let mut grid = Self::default();
        grid.max_depth.push(24);
        grid.max_depth.push(27);
        grid
    }

    pub fn single(hp: GbtHyperparams) -> Self {
        HyperparamGrid {
            n_trees: vec![hp.n_trees],
            max_depth: vec![hp.max_depth],
            colsample: vec![hp.colsample],
            subsample: vec![hp.subsample],
            learning_rate: vec![hp.learning_rate],
            seed: hp.seed,
        }
    }

    /// Grid points, n_trees outermost and learning rate innermost.
    pub fn points(&self) -> Vec<GbtHyperparams> {
        let mut out = Vec::new();
        for &n_trees in &self.n_trees {
            for &max_depth in &self.max_depth {
                for &colsample in &self.colsample {
                    for &subsample in &self.subsample {
                        for &learning_rate in &self.learning_rate {
                            out.push(GbtHyperparams {
                                n_trees,
                                max_depth,
                                colsample,
                                subsample,
                                learning_rate,
                                seed: self.seed,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.n_trees.len()
            * self.max_depth.len()
            * self.colsample.len()
            * self.subsample.len()
            * self.learning_rate.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow<T> {
    pub hyperparams: GbtHyperparams,
    pub validation: ErrorSummary<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult<T> {
    pub best: GbtHyperparams,
    /// One row per grid point, in grid order.
    pub table: Vec<GridRow<T>>,
}

/// Trains every grid point on `train` and picks the lowest validation median
/// absolute log error. Ties go to fewer trees, then smaller depth, then grid
/// order. Grid points are evaluated in parallel.
pub fn grid_search<T: Real>(
    train: &Dataset<T>,
    validation: &Dataset<T>,
    features: &[String],
    grid: &HyperparamGrid,
) -> Result<GridSearchResult<T>> {
    let points = grid.points();
    if points.is_empty() {
        return Err(Error::InvalidArgument("empty hyperparameter grid".into()));
    }
    if validation.is_empty() {
        return Err(Error::InvalidArgument("grid search needs a validation set".into()));
    }
    let table = points
        .par_iter()
        .map(|hp| {
            let model = GbtModel::train(train, features, hp)?;
            let errors = model.signed_errors(validation)?;
            Ok(GridRow {
                hyperparams: *hp,
                validation: ErrorSummary::from_signed(&errors)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = table
        .iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| {
            crate::scalar::cmp(&a.validation.log_error, &b.validation.log_error)
                .then(a.hyperparams.n_trees.cmp(&b.hyperparams.n_trees))
                .then(a.hyperparams.max_depth.cmp(&b.hyperparams.max_depth))
                .then(ia.cmp(ib))
        })
        .map(|(_, row)| row.hyperparams)
        .expect("non-empty");
    Ok(GridSearchResult { best, table })
}

/// Heatmap-ready CSV of a grid search.
pub fn write_grid_csv<T: Real, W: Write>(table: &[GridRow<T>], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "n_trees",
        "max_depth",
        "colsample",
        "subsample",
        "learning_rate",
        "validation_median_abs_log_error",
        "validation_median_abs_percent",
    ])?;
    for row in table {
        let h = &row.hyperparams;
        w.write_record([
            h.n_trees.to_string(),
            h.max_depth.to_string(),
            h.colsample.to_string(),
            h.subsample.to_string(),
            h.learning_rate.to_string(),
            row.validation.log_error.to_string(),
            row.validation.percent.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_shape() {
        let g = HyperparamGrid::default();
        assert_eq!(g.len(), 5 * 7 * 2 * 2);
        assert_eq!(g.points().len(), g.len());
        assert!(g.points().iter().any(|p| p.n_trees == 32 && p.max_depth == 21));
        assert_eq!(*HyperparamGrid::golden_default().max_depth.last().unwrap(), 27);
    }

    #[test]
    fn grid_toml_partial_override() {
        let g: HyperparamGrid = toml::from_str("n_trees = [4]\nmax_depth = [2, 3]\n").unwrap();
        assert_eq!(g.len(), 2 * 2 * 2);
        assert_eq!(g.learning_rate, vec![0.1]);
    }

    #[test]
    fn csv_has_one_row_per_point() {
        let table = vec![
            GridRow {
                hyperparams: GbtHyperparams::default(),
                validation: ErrorSummary::from_log_error(0.1),
            };
            3
        ];
        let mut buf = Vec::new();
        write_grid_csv(&table, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
    }
}
