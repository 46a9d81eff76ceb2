//! Outcome-model fitting over the unit table and counterfactual plug-in
//! prediction.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::embed::{embed, EmbeddingSpec};
use crate::error::{CarlError, Result};
use crate::linalg;
use crate::unit_table::UnitTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorMethod {
    Ols,
    Stratify,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub method: EstimatorMethod,
    /// 0 disables standard errors.
    pub bootstrap_reps: usize,
    pub seed: u64,
    /// Equal-frequency bins per covariate channel (stratified estimator).
    pub strata_bins: usize,
    /// Which own-treatment arm conditions the relational effect (0 or 1).
    pub are_arm: u8,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            method: EstimatorMethod::Ols,
            bootstrap_reps: 200,
            seed: 0,
            strata_bins: 5,
            are_arm: 1,
        }
    }
}

/// Embedded peer-treatment vector for `k` treated among `n` peers.
fn counterfactual_embed(
    spec: &EmbeddingSpec,
    cache: &mut HashMap<(usize, usize), Vec<f64>>,
    k: usize,
    n: usize,
) -> Result<Vec<f64>> {
    if let Some(hit) = cache.get(&(k, n)) {
        return Ok(hit.clone());
    }
    let mut v = vec![1.0; k];
    v.resize(n, 0.0);
    let e = embed(&v, spec)?.values;
    cache.insert((k, n), e.clone());
    Ok(e)
}

/// A fitted outcome model over a row subset of a unit table.
pub enum Fitted {
    Ols(OlsFit),
    Stratified(StratFit),
}

impl Fitted {
    pub fn fit(table: &UnitTable, rows: &[usize], cfg: &EstimatorConfig) -> Result<Fitted> {
        if rows.is_empty() {
            return Err(CarlError::EmptyDataset("unit table has no rows".into()));
        }
        match cfg.method {
            EstimatorMethod::Ols => Ok(Fitted::Ols(OlsFit::fit(table, rows)?)),
            EstimatorMethod::Stratify => Ok(Fitted::Stratified(StratFit::fit(
                table,
                rows,
                cfg.strata_bins,
            ))),
        }
    }

    /// Mean counterfactual response when every unit's own treatment is set
    /// to `own` and its treated-peer count to `target(row)`.
    pub fn adjusted_mean(
        &self,
        table: &UnitTable,
        rows: &[usize],
        own: f64,
        target: &dyn Fn(usize) -> usize,
    ) -> Result<f64> {
        match self {
            Fitted::Ols(fit) => fit.adjusted_mean(table, rows, own, target),
            Fitted::Stratified(fit) => fit.adjusted_mean(table, rows, own, target),
        }
    }
}

/// Least-squares fit of `Y ~ [1, t, psi_T, covariates]`.
///
/// Columns constant over the fitted rows (beyond the intercept) carry no
/// information and are absorbed into the intercept rather than failing the
/// rank check; a constant treatment column is a genuine error since the
/// contrast of interest is then unidentified.
pub struct OlsFit {
    beta: DVector<f64>,
    kept: Vec<usize>,
    psi_offset: usize,
    psi_dim: usize,
    embed_cache: std::cell::RefCell<HashMap<(usize, usize), Vec<f64>>>,
}

fn design_row(table: &UnitTable, row: usize) -> Vec<f64> {
    let mut x = Vec::with_capacity(2 + table.peer_embed_cols.len() + 8);
    x.push(1.0);
    x.push(table.treatment[row]);
    for col in &table.peer_embed_cols {
        x.push(col[row]);
    }
    for g in &table.cov_groups {
        for col in &g.cols {
            x.push(col[row]);
        }
    }
    x
}

impl OlsFit {
    fn fit(table: &UnitTable, rows: &[usize]) -> Result<OlsFit> {
        let d = design_row(table, rows[0]).len();
        let full: Vec<Vec<f64>> = rows.iter().map(|&r| design_row(table, r)).collect();

        if full.iter().all(|row| row[1] == full[0][1]) {
            return Err(CarlError::RankDeficient(
                "treatment takes a single value over the fitted rows".into(),
            ));
        }

        // Greedy rank-revealing pass in column order (intercept and
        // treatment first): columns in the span of earlier kept columns
        // are redundant (constants, duplicated padding channels) and get
        // a zero coefficient instead of failing the fit.
        let n = rows.len();
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let mut kept: Vec<usize> = Vec::new();
        #[allow(clippy::needless_range_loop)]
        for c in 0..d {
            let mut v: Vec<f64> = (0..n).map(|r| full[r][c]).collect();
            let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for q in &basis {
                let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= dot * qi;
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-8 * (1.0 + norm0) {
                for vi in &mut v {
                    *vi /= norm;
                }
                basis.push(v);
                kept.push(c);
            } else if c == 1 {
                return Err(CarlError::RankDeficient(
                    "treatment is collinear with the intercept".into(),
                ));
            }
        }

        let x = DMatrix::from_fn(n, kept.len(), |r, c| full[r][kept[c]]);
        let y = DVector::from_fn(n, |r, _| table.response[rows[r]]);
        let beta = linalg::least_squares(&x, &y)?;
        Ok(OlsFit {
            beta,
            kept,
            psi_offset: 2,
            psi_dim: table.peer_embed_cols.len(),
            embed_cache: Default::default(),
        })
    }

    /// Fitted value with own treatment and the whole peer-embedding block
    /// overridden; covariates keep their per-row values, which realizes
    /// the outer expectation over the empirical covariate distribution.
    fn predict(&self, table: &UnitTable, row: usize, own: f64, k_treated: usize) -> Result<f64> {
        let mut x = design_row(table, row);
        x[1] = own;
        let n = table.peer_counts[row];
        let e = counterfactual_embed(
            &table.spec,
            &mut self.embed_cache.borrow_mut(),
            k_treated.min(n),
            n,
        )?;
        x[self.psi_offset..self.psi_offset + self.psi_dim].copy_from_slice(&e);
        Ok(self
            .kept
            .iter()
            .zip(self.beta.iter())
            .map(|(&c, b)| x[c] * b)
            .sum())
    }

    fn adjusted_mean(
        &self,
        table: &UnitTable,
        rows: &[usize],
        own: f64,
        target: &dyn Fn(usize) -> usize,
    ) -> Result<f64> {
        let mut total = 0.0;
        for &row in rows {
            total += self.predict(table, row, own, target(row))?;
        }
        Ok(total / rows.len() as f64)
    }
}

/// Equal-frequency stratification on every covariate channel; the adjusted
/// mean weights within-stratum outcome averages by stratum mass.
pub struct StratFit {
    /// Bin boundaries per covariate channel.
    boundaries: Vec<Vec<f64>>,
    /// stratum key -> member rows.
    strata: BTreeMap<Vec<u8>, Vec<usize>>,
    total: usize,
}

impl StratFit {
    fn fit(table: &UnitTable, rows: &[usize], bins: usize) -> StratFit {
        let bins = bins.max(1);
        let channels: Vec<&Vec<f64>> = table
            .cov_groups
            .iter()
            .flat_map(|g| g.cols.iter())
            .collect();
        let mut boundaries = Vec::with_capacity(channels.len());
        for col in &channels {
            let mut sorted: Vec<f64> = rows.iter().map(|&r| col[r]).collect();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut cuts = Vec::with_capacity(bins - 1);
            for b in 1..bins {
                let q = b * sorted.len() / bins;
                cuts.push(sorted[q.min(sorted.len() - 1)]);
            }
            cuts.dedup_by(|a, b| a == b);
            boundaries.push(cuts);
        }

        let key_of = |row: usize| -> Vec<u8> {
            channels
                .iter()
                .zip(&boundaries)
                .map(|(col, cuts)| cuts.iter().take_while(|&&c| col[row] >= c).count() as u8)
                .collect()
        };
        let mut strata: BTreeMap<Vec<u8>, Vec<usize>> = BTreeMap::new();
        for &row in rows {
            strata.entry(key_of(row)).or_default().push(row);
        }
        StratFit {
            boundaries,
            strata,
            total: rows.len(),
        }
    }

    fn adjusted_mean(
        &self,
        table: &UnitTable,
        _rows: &[usize],
        own: f64,
        target: &dyn Fn(usize) -> usize,
    ) -> Result<f64> {
        let _ = &self.boundaries;
        let mut weighted = 0.0;
        let mut kept_mass = 0.0;
        for members in self.strata.values() {
            let matching: Vec<usize> = members
                .iter()
                .copied()
                .filter(|&r| table.treatment[r] == own && table.peer_treated_counts[r] == target(r))
                .collect();
            if matching.is_empty() {
                continue; // dropped; its mass is renormalized away
            }
            let mass = members.len() as f64 / self.total as f64;
            let mean_y =
                matching.iter().map(|&r| table.response[r]).sum::<f64>() / matching.len() as f64;
            weighted += mass * mean_y;
            kept_mass += mass;
        }
        if kept_mass == 0.0 {
            return Err(CarlError::EmptyStrata(format!(
                "no stratum contains a unit matching own={own} at the requested exposure"
            )));
        }
        Ok(weighted / kept_mass)
    }
}
