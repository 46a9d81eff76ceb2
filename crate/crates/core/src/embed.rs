//! Set embeddings: map variable-size value vectors to fixed-dimension
//! vectors. Mean/median/moments are permutation-invariant; padding sorts
//! its input descending first so set semantics still hold.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CarlError, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    Mean,
    Median,
    Moments,
    Padding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSpec {
    pub kind: EmbeddingKind,
    /// Number of moment channels (moments only).
    pub k_moments: usize,
    /// Fixed output length (padding only).
    pub pad_len: usize,
    /// Out-of-band filler for absent positions (padding only).
    pub pad_marker: f64,
    /// Append the input cardinality as a trailing channel (ignored by
    /// padding, whose length already encodes it).
    pub include_count: bool,
}

impl EmbeddingSpec {
    pub fn mean() -> Self {
        EmbeddingSpec {
            kind: EmbeddingKind::Mean,
            k_moments: 0,
            pad_len: 0,
            pad_marker: 0.0,
            include_count: true,
        }
    }

    pub fn median() -> Self {
        EmbeddingSpec {
            kind: EmbeddingKind::Median,
            ..EmbeddingSpec::mean()
        }
    }

    pub fn moments(k: usize) -> Self {
        EmbeddingSpec {
            kind: EmbeddingKind::Moments,
            k_moments: k.max(1),
            ..EmbeddingSpec::mean()
        }
    }

    pub fn padding(pad_len: usize, pad_marker: f64) -> Self {
        EmbeddingSpec {
            kind: EmbeddingKind::Padding,
            k_moments: 0,
            pad_len: pad_len.max(1),
            pad_marker,
            include_count: false,
        }
    }

    /// Output dimensionality, identical for every input under one spec.
    pub fn dim(&self) -> usize {
        let count = usize::from(self.include_count);
        match self.kind {
            EmbeddingKind::Mean | EmbeddingKind::Median => 1 + count,
            EmbeddingKind::Moments => self.k_moments + count,
            EmbeddingKind::Padding => self.pad_len,
        }
    }

    /// The same spec with the count channel stripped, for covariate columns
    /// whose cardinality is already carried elsewhere in the table.
    pub fn without_count(&self) -> Self {
        EmbeddingSpec {
            include_count: false,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedVector {
    pub values: Vec<f64>,
}

impl EmbeddedVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Embeds one variable-length vector. Empty inputs give zero location
/// channels with count 0 (all markers for padding).
pub fn embed(values: &[f64], spec: &EmbeddingSpec) -> Result<EmbeddedVector> {
    let n = values.len();
    let mut out = Vec::with_capacity(spec.dim());
    match spec.kind {
        EmbeddingKind::Mean => out.push(linalg::mean(values)),
        EmbeddingKind::Median => out.push(median(values)),
        EmbeddingKind::Moments => {
            let m = linalg::mean(values);
            let var = linalg::pop_variance(values);
            for order in 1..=spec.k_moments {
                out.push(match order {
                    1 => m,
                    2 => var,
                    _ => standardized_moment(values, m, var, order),
                });
            }
        }
        EmbeddingKind::Padding => {
            if n > spec.pad_len {
                return Err(CarlError::PadOverflow {
                    len: n,
                    pad_len: spec.pad_len,
                });
            }
            let mut sorted = values.to_vec();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            sorted.resize(spec.pad_len, spec.pad_marker);
            out = sorted;
        }
    }
    if spec.include_count && spec.kind != EmbeddingKind::Padding {
        out.push(n as f64);
    }
    debug_assert_eq!(out.len(), spec.dim());
    Ok(EmbeddedVector { values: out })
}

fn median(values: &[f64]) -> f64 {
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Central moment of the given order divided by sigma^order; 0 when the
/// variance vanishes or fewer than two values exist.
fn standardized_moment(values: &[f64], mean: f64, var: f64, order: usize) -> f64 {
    if values.len() < 2 || var <= 0.0 {
        return 0.0;
    }
    let sigma = var.sqrt();
    let central: f64 = values
        .iter()
        .map(|v| (v - mean).powi(order as i32))
        .sum::<f64>()
        / values.len() as f64;
    central / sigma.powi(order as i32)
}

/// Options for [`fit_spec`].
#[derive(Debug, Clone, Default)]
pub struct FitConfig {
    /// Largest moment order tried during selection (moments only).
    pub k_max: usize,
    /// Response column aligned with the dataset vectors; enables
    /// cross-validated moment selection.
    pub response: Option<Vec<f64>>,
}

/// Fits data-dependent spec parameters on a dataset of vectors.
///
/// Padding: length = longest observed vector, marker = global minimum - 1.
/// Moments: k chosen from 1..=k_max by 5-fold cross-validated squared
/// response-prediction loss when a response is supplied (ties to the
/// smallest k), else k = 3.
pub fn fit_spec(
    dataset: &[Vec<f64>],
    kind: EmbeddingKind,
    config: &FitConfig,
) -> Result<EmbeddingSpec> {
    if dataset.is_empty() {
        return Err(CarlError::EmptyDataset("no vectors to fit on".into()));
    }
    match kind {
        EmbeddingKind::Mean => Ok(EmbeddingSpec::mean()),
        EmbeddingKind::Median => Ok(EmbeddingSpec::median()),
        EmbeddingKind::Padding => {
            let pad_len = dataset.iter().map(Vec::len).max().unwrap().max(1);
            let marker = dataset
                .iter()
                .flatten()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            let marker = if marker.is_finite() {
                marker - 1.0
            } else {
                -1.0
            };
            Ok(EmbeddingSpec::padding(pad_len, marker))
        }
        EmbeddingKind::Moments => {
            let k_max = config.k_max.max(1);
            let Some(response) = &config.response else {
                return Ok(EmbeddingSpec::moments(3.min(k_max)));
            };
            assert_eq!(response.len(), dataset.len());
            let mut best_k = 1;
            let mut best_loss = f64::INFINITY;
            for k in 1..=k_max {
                let loss = cv_loss(dataset, response, k)?;
                // Ties (within noise) go to the smaller k.
                if loss < best_loss && best_loss - loss > 1e-9 * (1.0 + loss.abs()) {
                    best_loss = loss;
                    best_k = k;
                }
            }
            Ok(EmbeddingSpec::moments(best_k))
        }
    }
}

/// 5-fold cross-validated squared loss of predicting the response from the
/// k-moment embedding by least squares. Folds are contiguous index chunks,
/// keeping selection deterministic.
fn cv_loss(dataset: &[Vec<f64>], response: &[f64], k: usize) -> Result<f64> {
    let spec = EmbeddingSpec::moments(k);
    let rows: Vec<Vec<f64>> = dataset
        .iter()
        .map(|v| embed(v, &spec).map(|e| e.values))
        .collect::<Result<_>>()?;
    let n = rows.len();
    let folds = 5.min(n);
    let mut total = 0.0;
    for fold in 0..folds {
        let test: Vec<usize> = (0..n).filter(|i| i % folds == fold).collect();
        let train: Vec<usize> = (0..n).filter(|i| i % folds != fold).collect();
        if train.is_empty() || test.is_empty() {
            continue;
        }
        // Constant channels (e.g. a fixed cardinality) are absorbed into
        // the intercept instead of making the design singular.
        let channels: Vec<usize> = (0..rows[0].len())
            .filter(|&c| train.iter().any(|&r| rows[r][c] != rows[train[0]][c]))
            .collect();
        let d = channels.len() + 1;
        let x = DMatrix::from_fn(train.len(), d, |r, c| {
            if c == 0 {
                1.0
            } else {
                rows[train[r]][channels[c - 1]]
            }
        });
        let y = DVector::from_fn(train.len(), |r, _| response[train[r]]);
        let beta = match linalg::least_squares(&x, &y) {
            Ok(b) => b,
            // Truly collinear embedding channels disqualify this k.
            Err(_) => return Ok(f64::INFINITY),
        };
        for &i in &test {
            let mut pred = beta[0];
            for (c, &ch) in channels.iter().enumerate() {
                pred += beta[c + 1] * rows[i][ch];
            }
            total += (response[i] - pred).powi(2);
        }
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mean_count_examples() {
        let spec = EmbeddingSpec::mean();
        assert_eq!(embed(&[1.0, 1.0], &spec).unwrap().values, vec![1.0, 2.0]);
        assert_eq!(embed(&[1.0, 0.0], &spec).unwrap().values, vec![0.5, 2.0]);
        assert_eq!(embed(&[], &spec).unwrap().values, vec![0.0, 0.0]);
        assert_eq!(embed(&[1.0], &spec).unwrap().values, vec![1.0, 1.0]);
    }

    #[test]
    fn moments_match_hand_arithmetic() {
        let spec = EmbeddingSpec::moments(2).without_count();
        let out = embed(&[50.0, 20.0], &spec).unwrap();
        assert_relative_eq!(out.values[0], 35.0);
        assert_relative_eq!(out.values[1], 225.0);
    }

    #[test]
    fn moments_match_bruteforce_for_higher_orders() {
        let values = [1.0, 4.0, 2.0, 8.0, 5.5];
        let spec = EmbeddingSpec::moments(4).without_count();
        let out = embed(&values, &spec).unwrap();

        let n = values.len() as f64;
        let m: f64 = values.iter().sum::<f64>() / n;
        let var: f64 = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
        let sk: f64 = values.iter().map(|v| (v - m).powi(3)).sum::<f64>() / n / var.sqrt().powi(3);
        let kurt: f64 =
            values.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n / var.sqrt().powi(4);
        assert_relative_eq!(out.values[0], m);
        assert_relative_eq!(out.values[1], var);
        assert_relative_eq!(out.values[2], sk);
        assert_relative_eq!(out.values[3], kurt);
    }

    #[test]
    fn moments_k1_with_count_equals_mean_embedding() {
        let spec_m = EmbeddingSpec::moments(1);
        let spec_mean = EmbeddingSpec::mean();
        for v in [vec![], vec![2.0], vec![3.0, 1.0, 0.5]] {
            assert_eq!(
                embed(&v, &spec_m).unwrap().values,
                embed(&v, &spec_mean).unwrap().values
            );
        }
    }

    #[test]
    fn padding_sorts_descending_and_pads() {
        let spec = EmbeddingSpec::padding(4, -1.0);
        let out = embed(&[0.2, 0.9, 0.5], &spec).unwrap();
        assert_eq!(out.values, vec![0.9, 0.5, 0.2, -1.0]);
        assert_eq!(embed(&[], &spec).unwrap().values, vec![-1.0; 4]);
    }

    #[test]
    fn padding_overflow_rejected() {
        let spec = EmbeddingSpec::padding(2, -1.0);
        let err = embed(&[1.0, 2.0, 3.0], &spec).unwrap_err();
        assert!(matches!(err, CarlError::PadOverflow { .. }));
    }

    #[test]
    fn fit_padding_uses_max_len_and_min_minus_one() {
        let spec = fit_spec(
            &[vec![0.3], vec![0.1, 0.9], vec![0.0, 1.0]],
            EmbeddingKind::Padding,
            &FitConfig::default(),
        )
        .unwrap();
        assert_eq!(spec.pad_len, 2);
        assert_relative_eq!(spec.pad_marker, -1.0);
    }

    #[test]
    fn fit_padding_on_fixed_arity_is_identity() {
        let spec = fit_spec(
            &[vec![5.0], vec![7.0]],
            EmbeddingKind::Padding,
            &FitConfig::default(),
        )
        .unwrap();
        assert_eq!(spec.pad_len, 1);
        let out = embed(&[7.0], &spec).unwrap();
        assert_eq!(out.values, vec![7.0]);
    }

    #[test]
    fn constant_response_selects_smallest_k() {
        let dataset: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![i as f64, (i * 3 % 7) as f64, 1.0])
            .collect();
        let config = FitConfig {
            k_max: 4,
            response: Some(vec![2.5; 40]),
        };
        let spec = fit_spec(&dataset, EmbeddingKind::Moments, &config).unwrap();
        assert_eq!(spec.k_moments, 1);
    }

    #[test]
    fn variance_signal_selects_k_at_least_2() {
        // Response driven purely by the spread of each vector.
        let dataset: Vec<Vec<f64>> = (0..60)
            .map(|i| {
                let spread = (i % 6) as f64;
                vec![10.0 - spread, 10.0 + spread, 10.0]
            })
            .collect();
        let response: Vec<f64> = dataset
            .iter()
            .map(|v| crate::linalg::pop_variance(v))
            .collect();
        let config = FitConfig {
            k_max: 4,
            response: Some(response),
        };
        let spec = fit_spec(&dataset, EmbeddingKind::Moments, &config).unwrap();
        assert!(spec.k_moments >= 2, "selected k = {}", spec.k_moments);
    }

    #[test]
    fn empty_dataset_rejected() {
        assert!(matches!(
            fit_spec(&[], EmbeddingKind::Mean, &FitConfig::default()),
            Err(CarlError::EmptyDataset(_))
        ));
    }

    #[test]
    fn fixed_dim_across_inputs() {
        for spec in [
            EmbeddingSpec::mean(),
            EmbeddingSpec::median(),
            EmbeddingSpec::moments(3),
            EmbeddingSpec::padding(5, -1.0),
        ] {
            let dims: Vec<usize> = [vec![], vec![1.0], vec![1.0, 2.0, 3.0]]
                .iter()
                .map(|v| embed(v, &spec).unwrap().dim())
                .collect();
            assert!(dims.windows(2).all(|w| w[0] == w[1]));
            assert_eq!(dims[0], spec.dim());
        }
    }
}
