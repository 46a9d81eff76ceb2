//! ATE and isolated/relational/overall effect queries with seeded
//! nonparametric bootstrap standard errors.

use std::collections::BTreeMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingSpec;
use crate::error::Result;
use crate::lang::CndAst;
use crate::linalg;
use crate::unit_table::UnitTable;

use super::contrast::{contrast_counts, realize_fraction, validate_condition};
use super::fitting::{EstimatorConfig, Fitted};

/// Answer to one causal query, ready for JSON output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EffectResult {
    pub query: String,
    pub kind: String,
    pub estimates: BTreeMap<String, f64>,
    pub stderr: BTreeMap<String, f64>,
    pub n_units: usize,
    pub covariates: Vec<String>,
    pub embedding: EmbeddingSpec,
    pub naive_diff: Option<f64>,
    pub seed: u64,
}

fn naive_diff(table: &UnitTable) -> Option<f64> {
    let treated: Vec<f64> = table
        .response
        .iter()
        .zip(&table.treatment)
        .filter(|(_, &t)| t == 1.0)
        .map(|(y, _)| *y)
        .collect();
    let control: Vec<f64> = table
        .response
        .iter()
        .zip(&table.treatment)
        .filter(|(_, &t)| t == 0.0)
        .map(|(y, _)| *y)
        .collect();
    if treated.is_empty() || control.is_empty() {
        return None;
    }
    Some(linalg::mean(&treated) - linalg::mean(&control))
}

/// The three plug-in contrasts. With `are_arm = 1` the isolated effect is
/// evaluated at the baseline peer regime and the relational effect under
/// own treatment; with `are_arm = 0` the arms swap. Either pairing makes
/// the overall effect decompose exactly.
fn triple(
    fit: &Fitted,
    table: &UnitTable,
    rows: &[usize],
    hi: &dyn Fn(usize) -> usize,
    lo: &dyn Fn(usize) -> usize,
    are_arm: u8,
) -> Result<(f64, f64, f64)> {
    let (aie, are) = if are_arm == 0 {
        let aie =
            fit.adjusted_mean(table, rows, 1.0, hi)? - fit.adjusted_mean(table, rows, 0.0, hi)?;
        let are =
            fit.adjusted_mean(table, rows, 0.0, hi)? - fit.adjusted_mean(table, rows, 0.0, lo)?;
        (aie, are)
    } else {
        let aie =
            fit.adjusted_mean(table, rows, 1.0, lo)? - fit.adjusted_mean(table, rows, 0.0, lo)?;
        let are =
            fit.adjusted_mean(table, rows, 1.0, hi)? - fit.adjusted_mean(table, rows, 1.0, lo)?;
        (aie, are)
    };
    Ok((aie, are, aie + are))
}

fn ate_estimate(fit: &Fitted, table: &UnitTable, rows: &[usize]) -> Result<f64> {
    let all = |row: usize| table.peer_counts[row];
    let none = |_: usize| 0usize;
    Ok(fit.adjusted_mean(table, rows, 1.0, &all)? - fit.adjusted_mean(table, rows, 0.0, &none)?)
}

/// Bootstrap over units with replacement; replicate seeds derive from the
/// base seed plus the replicate index, and replicates that fail to fit
/// (e.g. a resample without both treatment arms) are dropped.
fn bootstrap_stderr<F>(table: &UnitTable, cfg: &EstimatorConfig, estimate: F) -> Vec<Vec<f64>>
where
    F: Fn(&Fitted, &[usize]) -> Result<Vec<f64>> + Sync,
{
    let n = table.n_units();
    let replicates: Vec<Option<Vec<f64>>> = (0..cfg.bootstrap_reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(rep + 1));
            let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let fit = Fitted::fit(table, &rows, cfg).ok()?;
            estimate(&fit, &rows).ok()
        })
        .collect();
    let kept: Vec<Vec<f64>> = replicates.into_iter().flatten().collect();
    kept
}

fn stderr_of(replicates: &[Vec<f64>], idx: usize) -> Option<f64> {
    if replicates.len() < 2 {
        return None;
    }
    let column: Vec<f64> = replicates.iter().map(|r| r[idx]).collect();
    Some(linalg::sample_std(&column))
}

/// Mean counterfactual response at one own-treatment value and peer
/// fraction (rounded per row to the nearest realizable exposure).
pub fn estimate_adjusted_mean(
    table: &UnitTable,
    own: u8,
    peer_fraction: f64,
    cfg: &EstimatorConfig,
) -> Result<f64> {
    let rows: Vec<usize> = (0..table.n_units()).collect();
    let fit = Fitted::fit(table, &rows, cfg)?;
    let target = |row: usize| realize_fraction(peer_fraction, table.peer_counts[row]);
    fit.adjusted_mean(table, &rows, own as f64, &target)
}

/// Average treatment effect: all units and peers treated versus none.
pub fn answer_ate(table: &UnitTable, cfg: &EstimatorConfig, query: &str) -> Result<EffectResult> {
    let rows: Vec<usize> = (0..table.n_units()).collect();
    let fit = Fitted::fit(table, &rows, cfg)?;
    let ate = ate_estimate(&fit, table, &rows)?;

    let mut stderr = BTreeMap::new();
    if cfg.bootstrap_reps > 0 {
        let reps = bootstrap_stderr(table, cfg, |fit, rows| {
            ate_estimate(fit, table, rows).map(|v| vec![v])
        });
        if let Some(se) = stderr_of(&reps, 0) {
            stderr.insert("ate".to_string(), se);
        }
    }

    Ok(EffectResult {
        query: query.to_string(),
        kind: "ate".into(),
        estimates: [("ate".to_string(), ate)].into_iter().collect(),
        stderr,
        n_units: table.n_units(),
        covariates: table.covariate_attrs(),
        embedding: table.spec.clone(),
        naive_diff: naive_diff(table),
        seed: cfg.seed,
    })
}

/// Isolated, relational, and overall effects under a peer condition.
pub fn answer_effects(
    table: &UnitTable,
    cnd: &CndAst,
    cfg: &EstimatorConfig,
    query: &str,
) -> Result<EffectResult> {
    validate_condition(cnd)?;
    let rows: Vec<usize> = (0..table.n_units()).collect();
    let fit = Fitted::fit(table, &rows, cfg)?;

    let hi = |row: usize| contrast_counts(cnd, table.peer_counts[row]).0;
    let lo = |row: usize| contrast_counts(cnd, table.peer_counts[row]).1;
    let (aie, are, aoe) = triple(&fit, table, &rows, &hi, &lo, cfg.are_arm)?;

    let mut stderr = BTreeMap::new();
    if cfg.bootstrap_reps > 0 {
        let reps = bootstrap_stderr(table, cfg, |fit, rows| {
            triple(fit, table, rows, &hi, &lo, cfg.are_arm).map(|(a, r, o)| vec![a, r, o])
        });
        for (i, name) in ["aie", "are", "aoe"].iter().enumerate() {
            if let Some(se) = stderr_of(&reps, i) {
                stderr.insert(name.to_string(), se);
            }
        }
    }

    Ok(EffectResult {
        query: query.to_string(),
        kind: "triple".into(),
        estimates: [
            ("aie".to_string(), aie),
            ("are".to_string(), are),
            ("aoe".to_string(), aoe),
        ]
        .into_iter()
        .collect(),
        stderr,
        n_units: table.n_units(),
        covariates: table.covariate_attrs(),
        embedding: table.spec.clone(),
        naive_diff: naive_diff(table),
        seed: cfg.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::EmbeddingSpec;
    use crate::estimate::EstimatorMethod;
    use crate::lang::CndKind;
    use crate::unit_table::CovGroup;

    /// Hand-assembled table: y, t, peer exposure (mean+count embedding),
    /// optional single covariate column.
    pub(crate) fn table(
        y: Vec<f64>,
        t: Vec<f64>,
        peer_frac: Vec<f64>,
        peer_n: Vec<usize>,
        cov: Option<Vec<f64>>,
    ) -> UnitTable {
        let n = y.len();
        let peer_treated: Vec<usize> = peer_frac
            .iter()
            .zip(&peer_n)
            .map(|(f, &c)| (f * c as f64).round() as usize)
            .collect();
        UnitTable {
            units: (0..n).map(|i| vec![format!("u{i}")]).collect(),
            response: y,
            treatment: t,
            peer_counts: peer_n.clone(),
            peer_treated_counts: peer_treated,
            peer_embed_cols: vec![peer_frac, peer_n.iter().map(|&c| c as f64).collect()],
            cov_groups: cov
                .map(|c| {
                    vec![CovGroup {
                        attr: "X".into(),
                        own: true,
                        cols: vec![c],
                        col_names: vec!["Zown_X".into()],
                    }]
                })
                .unwrap_or_default(),
            spec: EmbeddingSpec::mean(),
            response_attr: "Y".into(),
            treatment_attr: "T".into(),
        }
    }

    fn cfg(seed: u64) -> EstimatorConfig {
        EstimatorConfig {
            bootstrap_reps: 50,
            seed,
            ..Default::default()
        }
    }

    /// y = 2t + noise, no peers/covariates: ATE should recover 2.
    #[test]
    fn recovers_known_coefficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1000;
        let t: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_bool(0.5))).collect();
        let y: Vec<f64> = t
            .iter()
            .map(|&ti| 2.0 * ti + rng.gen_range(-0.5..0.5))
            .collect();
        let tbl = table(y, t, vec![0.0; n], vec![0; n], None);
        let r = answer_ate(&tbl, &cfg(3), "Y[u] <= T[u] ?").unwrap();
        let ate = r.estimates["ate"];
        let se = r.stderr["ate"];
        assert!((ate - 2.0).abs() < 3.0 * se + 0.05, "ate={ate} se={se}");
    }

    #[test]
    fn shrinking_error_with_sample_size() {
        let run = |n: usize| {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let t: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_bool(0.5))).collect();
            let y: Vec<f64> = t
                .iter()
                .map(|&ti| 2.0 * ti + rng.gen_range(-1.0..1.0))
                .collect();
            let tbl = table(y, t, vec![0.0; n], vec![0; n], None);
            (answer_ate(&tbl, &cfg(5), "q").unwrap().estimates["ate"] - 2.0).abs()
        };
        let err_small = run(200);
        let err_large = run(2000);
        assert!(
            err_large < err_small + 0.02,
            "err200={err_small} err2000={err_large}"
        );
        assert!(err_large < 0.1);
    }

    #[test]
    fn null_effect_is_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let n = 800;
        let t: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_bool(0.5))).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let tbl = table(y, t, vec![0.0; n], vec![0; n], None);
        let r = answer_ate(&tbl, &cfg(23), "q").unwrap();
        assert!(r.estimates["ate"].abs() < 3.0 * r.stderr["ate"] + 0.02);
    }

    #[test]
    fn constant_response_estimates_constant() {
        let tbl = table(
            vec![4.5; 6],
            vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0],
            vec![0.0; 6],
            vec![0; 6],
            None,
        );
        let cfg = EstimatorConfig {
            bootstrap_reps: 0,
            ..Default::default()
        };
        let m1 = estimate_adjusted_mean(&tbl, 1, 1.0, &cfg).unwrap();
        let m0 = estimate_adjusted_mean(&tbl, 0, 0.0, &cfg).unwrap();
        assert!((m1 - 4.5).abs() < 1e-9);
        assert!((m0 - 4.5).abs() < 1e-9);
    }

    #[test]
    fn two_row_saturated_case() {
        let tbl = table(
            vec![3.0, 1.0],
            vec![1.0, 0.0],
            vec![0.0; 2],
            vec![0; 2],
            None,
        );
        let cfg = EstimatorConfig {
            bootstrap_reps: 0,
            ..Default::default()
        };
        let r = answer_ate(&tbl, &cfg, "q").unwrap();
        assert!((r.estimates["ate"] - 2.0).abs() < 1e-9);
        assert_eq!(r.naive_diff, Some(2.0));
    }

    #[test]
    fn decomposition_identity_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 400;
        let t: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_bool(0.5))).collect();
        let peer_n: Vec<usize> = (0..n).map(|_| rng.gen_range(1..5)).collect();
        let frac: Vec<f64> = peer_n
            .iter()
            .map(|&c| rng.gen_range(0..=c) as f64 / c as f64)
            .collect();
        let y: Vec<f64> = (0..n)
            .map(|i| 1.0 * t[i] + 0.5 * frac[i] + rng.gen_range(-0.3..0.3))
            .collect();
        let tbl = table(y, t, frac, peer_n, None);
        for arm in [0u8, 1u8] {
            for kind in [CndKind::All, CndKind::MoreThanPct, CndKind::AtLeast] {
                let cnd = CndAst {
                    kind,
                    k: match kind {
                        CndKind::MoreThanPct => 100.0 / 3.0,
                        CndKind::AtLeast => 2.0,
                        _ => 0.0,
                    },
                };
                let cfg = EstimatorConfig {
                    bootstrap_reps: 0,
                    are_arm: arm,
                    ..Default::default()
                };
                let r = answer_effects(&tbl, &cnd, &cfg, "q").unwrap();
                let (aie, are, aoe) = (r.estimates["aie"], r.estimates["are"], r.estimates["aoe"]);
                assert!(
                    (aie + are - aoe).abs() < 1e-9,
                    "arm={arm} kind={kind:?}: {aie} + {are} != {aoe}"
                );
            }
        }
    }

    #[test]
    fn linear_interference_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let n = 1500;
        let t: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_bool(0.5))).collect();
        let peer_n: Vec<usize> = (0..n).map(|_| rng.gen_range(1..6)).collect();
        let frac: Vec<f64> = peer_n
            .iter()
            .map(|&c| rng.gen_range(0..=c) as f64 / c as f64)
            .collect();
        let y: Vec<f64> = (0..n)
            .map(|i| 1.0 * t[i] + 0.5 * frac[i] + rng.gen_range(-0.5..0.5))
            .collect();
        let tbl = table(y, t, frac, peer_n, None);
        let cnd = CndAst {
            kind: CndKind::All,
            k: 0.0,
        };
        let r = answer_effects(&tbl, &cnd, &cfg(41), "q").unwrap();
        assert!((r.estimates["aie"] - 1.0).abs() < 0.1, "{:?}", r.estimates);
        assert!((r.estimates["are"] - 0.5).abs() < 0.1);
        assert!((r.estimates["aoe"] - 1.5).abs() < 0.1);
    }

    #[test]
    fn determinism_same_seed_same_result() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let n = 120;
        let t: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_bool(0.5))).collect();
        let y: Vec<f64> = t.iter().map(|&ti| ti + rng.gen_range(-1.0..1.0)).collect();
        let tbl = table(y, t, vec![0.0; n], vec![0; n], None);
        let a = answer_ate(&tbl, &cfg(99), "q").unwrap();
        let b = answer_ate(&tbl, &cfg(99), "q").unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn bootstrap_stderr_positive_for_nonconstant_response() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let n = 100;
        let t: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_bool(0.5))).collect();
        let y: Vec<f64> = t.iter().map(|&ti| ti + rng.gen_range(-1.0..1.0)).collect();
        let tbl = table(y, t, vec![0.0; n], vec![0; n], None);
        let r = answer_ate(&tbl, &cfg(51), "q").unwrap();
        assert!(r.stderr["ate"] > 0.0);
    }

    #[test]
    fn ate_invariant_to_affine_covariate_rescaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let n = 500;
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let t: Vec<f64> = x
            .iter()
            .map(|&xi| f64::from(rng.gen_bool(1.0 / (1.0 + (-xi).exp()))))
            .collect();
        let y: Vec<f64> = (0..n)
            .map(|i| 2.0 * t[i] + 1.5 * x[i] + rng.gen_range(-0.2..0.2))
            .collect();
        let cfg = EstimatorConfig {
            bootstrap_reps: 0,
            ..Default::default()
        };
        let t1 = table(
            y.clone(),
            t.clone(),
            vec![0.0; n],
            vec![0; n],
            Some(x.clone()),
        );
        let rescaled: Vec<f64> = x.iter().map(|v| 100.0 * v - 7.0).collect();
        let t2 = table(y, t, vec![0.0; n], vec![0; n], Some(rescaled));
        let a = answer_ate(&t1, &cfg, "q").unwrap().estimates["ate"];
        let b = answer_ate(&t2, &cfg, "q").unwrap().estimates["ate"];
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }

    #[test]
    fn stratify_estimator_runs_and_adjusts() {
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        let n = 2000;
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let t: Vec<f64> = x
            .iter()
            .map(|&xi| f64::from(rng.gen_bool(0.2 + 0.6 * xi)))
            .collect();
        let y: Vec<f64> = (0..n)
            .map(|i| 1.0 * t[i] + 3.0 * x[i] + rng.gen_range(-0.1..0.1))
            .collect();
        let tbl = table(y, t, vec![0.0; n], vec![0; n], Some(x));
        let cfg = EstimatorConfig {
            method: EstimatorMethod::Stratify,
            bootstrap_reps: 0,
            ..Default::default()
        };
        let r = answer_ate(&tbl, &cfg, "q").unwrap();
        let naive = r.naive_diff.unwrap();
        let ate = r.estimates["ate"];
        assert!((ate - 1.0).abs() < 0.15, "ate={ate}");
        assert!((naive - 1.0).abs() > (ate - 1.0).abs());
    }

    #[test]
    fn degenerate_condition_propagates() {
        let tbl = table(
            vec![1.0, 2.0],
            vec![1.0, 0.0],
            vec![0.0; 2],
            vec![0; 2],
            None,
        );
        let cnd = CndAst {
            kind: CndKind::None,
            k: 0.0,
        };
        let err = answer_effects(&tbl, &cnd, &EstimatorConfig::default(), "q").unwrap_err();
        assert!(matches!(err, crate::CarlError::DegenerateContrast(_)));
    }

    #[test]
    fn rank_deficient_design_reported() {
        // Constant treatment column collapses the design.
        let tbl = table(
            vec![1.0, 2.0, 3.0],
            vec![1.0; 3],
            vec![0.0; 3],
            vec![0; 3],
            None,
        );
        let cfg = EstimatorConfig {
            bootstrap_reps: 0,
            ..Default::default()
        };
        let err = answer_ate(&tbl, &cfg, "q").unwrap_err();
        assert!(matches!(err, crate::CarlError::RankDeficient(_)), "{err}");
    }
}
