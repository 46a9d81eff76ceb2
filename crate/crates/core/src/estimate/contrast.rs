//! Mapping peer-treatment conditions onto realizable per-row contrasts.
//!
//! Realizable peer-treated fractions for a unit with `n` peers are the
//! multiples of `1/n`; each condition resolves to the number of treated
//! peers in the "exposed" regime, with the baseline regime always fully
//! untreated.

use crate::error::{CarlError, Result};
use crate::lang::{CndAst, CndKind};

/// Rejects conditions whose exposed regime coincides with the untreated
/// baseline for every possible peer count.
pub fn validate_condition(cnd: &CndAst) -> Result<()> {
    let degenerate = match cnd.kind {
        CndKind::None => true,
        CndKind::Exactly | CndKind::AtMost => cnd.k == 0.0,
        CndKind::LessThanPct => cnd.k == 0.0,
        _ => false,
    };
    if degenerate {
        return Err(CarlError::DegenerateContrast(format!(
            "condition `{cnd}` coincides with the all-untreated baseline"
        )));
    }
    Ok(())
}

/// Treated-peer counts `(exposed, baseline)` for a unit with `peer_count`
/// peers. Zero peers make both regimes empty.
pub fn contrast_counts(cnd: &CndAst, peer_count: usize) -> (usize, usize) {
    if peer_count == 0 {
        return (0, 0);
    }
    let n = peer_count as f64;
    let hi = match cnd.kind {
        CndKind::All => peer_count,
        CndKind::None => 0,
        // Smallest count strictly above k% of n; the epsilon absorbs float
        // error in thresholds like 1/3.
        CndKind::MoreThanPct => (((n * cnd.k / 100.0) + 1e-9).floor() as usize + 1).min(peer_count),
        // Largest count strictly below k% of n.
        CndKind::LessThanPct => {
            let bound = (n * cnd.k / 100.0 - 1e-9).ceil() as isize - 1;
            bound.max(0) as usize
        }
        CndKind::AtLeast | CndKind::AtMost | CndKind::Exactly => (cnd.k as usize).min(peer_count),
    };
    (hi, 0)
}

/// Nearest realizable treated-peer count for a requested fraction, ties
/// resolved downward.
pub fn realize_fraction(fraction: f64, peer_count: usize) -> usize {
    if peer_count == 0 {
        return 0;
    }
    let n = peer_count as f64;
    let lower = (fraction * n).floor().clamp(0.0, n) as usize;
    let upper = (lower + 1).min(peer_count);
    let d_lower = (lower as f64 / n - fraction).abs();
    let d_upper = (upper as f64 / n - fraction).abs();
    if d_upper < d_lower {
        upper
    } else {
        lower
    }
}
