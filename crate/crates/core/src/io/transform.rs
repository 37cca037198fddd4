use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{QifError, Result};
use crate::model::{LongitudinalDataset, Subject};
use crate::stats::mean_sd;

/// Location and scale removed from one column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnTransform {
    pub mean: f64,
    pub sd: f64,
}

fn pooled(values: Vec<f64>) -> Option<ColumnTransform> {
    let (mean, sd) = mean_sd(&values);
    let sd = sd?;
    (sd > 0.0 && sd.is_finite()).then_some(ColumnTransform { mean, sd })
}

/// Centers and scales the selected covariate columns (0-based), pooling over
/// subjects and time points and using the sample SD (divisor `N − 1`).
pub fn standardize_columns(
    dataset: &LongitudinalDataset,
    columns: &[usize],
) -> Result<(LongitudinalDataset, Vec<ColumnTransform>)> {
    let mut transforms = Vec::with_capacity(columns.len());
    for &c in columns {
        if c >= dataset.p() {
            return Err(QifError::DimensionMismatch(format!(
                "column {c} out of range for p = {}",
                dataset.p()
            )));
        }
        let values = dataset
            .subjects()
            .iter()
            .flat_map(|s| s.covariates.column(c).iter().copied().collect::<Vec<_>>())
            .collect();
        transforms.push(pooled(values).ok_or(QifError::ZeroVariance(c))?);
    }
    let subjects = dataset
        .subjects()
        .iter()
        .map(|s| {
            let mut x = s.covariates.clone();
            for (&c, t) in columns.iter().zip(&transforms) {
                x.column_mut(c).apply(|v| *v = (*v - t.mean) / t.sd);
            }
            Subject::new(s.response.clone(), x)
        })
        .collect();
    Ok((LongitudinalDataset::new(subjects)?, transforms))
}

/// Same transform applied to the response.
pub fn standardize_response(dataset: &LongitudinalDataset) -> Result<(LongitudinalDataset, ColumnTransform)> {
    let values = dataset
        .subjects()
        .iter()
        .flat_map(|s| s.response.iter().copied().collect::<Vec<_>>())
        .collect();
    let t = pooled(values).ok_or_else(|| QifError::InvalidDataset("response has zero variance".into()))?;
    let subjects = dataset
        .subjects()
        .iter()
        .map(|s| Subject::new(s.response.map(|v| (v - t.mean) / t.sd), s.covariates.clone()))
        .collect();
    Ok((LongitudinalDataset::new(subjects)?, t))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub analysis: LongitudinalDataset,
    pub holdout: LongitudinalDataset,
    /// Original subject indices, ascending.
    pub analysis_indices: Vec<usize>,
    pub holdout_indices: Vec<usize>,
}

/// Uniform random split into an analysis sample of `analysis_size` subjects
/// and the remaining holdout, reproducible for a given seed.
pub fn split_sample(dataset: &LongitudinalDataset, analysis_size: usize, seed: u64) -> Result<Split> {
    let n = dataset.n();
    if analysis_size == 0 || analysis_size >= n {
        return Err(QifError::InvalidSize { size: analysis_size, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![false; n];
    for i in sample(&mut rng, n, analysis_size) {
        chosen[i] = true;
    }
    let (analysis_indices, holdout_indices): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| chosen[i]);
    Ok(Split {
        analysis: dataset.select(&analysis_indices)?,
        holdout: dataset.select(&holdout_indices)?,
        analysis_indices,
        holdout_indices,
    })
}
