//! Complexity exponents of multiple-collision search, in units of `n`, as
//! functions of `m̂ = m/n` and `k̂ = k/n`. Polynomial factors are dropped.
//!
//! Everything is generic over [`Exponent`], so region membership can be
//! decided exactly with rationals.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Exponent;

/// Exponents of every algorithm at one `(m̂, k̂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimePoint<E: Exponent> {
    pub m_hat: E,
    pub k_hat: E,
    /// `2k̂/3 + m̂/3`, valid when `k̂ ≤ 3 − 2m̂`.
    pub bht: E,
    pub bht_valid: bool,
    /// `k̂ + m̂ − 1`.
    pub bht_ext: E,
    /// `2k̂/3 + m̂/3`, valid when `k̂ ≤ min(2 − m̂, m̂/4)`.
    pub chained: E,
    pub chained_valid: bool,
    /// `k̂ + m̂/4`.
    pub chained_ext: E,
    /// `2k̂/3 + m̂/3` on the whole domain.
    pub new: E,
    /// Best earlier exponent: each earlier algorithm contributes its base
    /// exponent inside its range and its extended one outside.
    pub prior_best: E,
    pub chained_walk: E,
    pub improved: bool,
}

fn balanced<E: Exponent>(m: &E, k: &E) -> E {
    E::from_ratio(2, 3) * k.clone() + m.clone() / E::from_ratio(3, 1)
}

/// Exponents at `(m̂, k̂)` with `1 ≤ m̂ ≤ 2` and `0 ≤ k̂ ≤ 2 − m̂`.
pub fn evaluate<E: Exponent>(m_hat: E, k_hat: E) -> Result<RegimePoint<E>> {
    let one = E::one();
    let two = E::from_ratio(2, 1);
    let (mf, kf) = (m_hat.to_f64(), k_hat.to_f64());
    let slack = 1e-12;
    if !(mf >= 1.0 - slack && mf <= 2.0 + slack && kf >= -slack && kf <= 2.0 - mf + slack) {
        return Err(Error::Domain(format!(
            "(m̂, k̂) = ({:.4}, {:.4}) outside 1 ≤ m̂ ≤ 2, 0 ≤ k̂ ≤ 2 − m̂",
            mf, kf
        )));
    }
    let (m, k) = (m_hat, k_hat);
    let base = balanced(&m, &k);
    let bht_valid = k <= E::from_ratio(3, 1) - two.clone() * m.clone();
    let bht_ext = k.clone() + m.clone() - one;
    let quarter = m.clone() / E::from_ratio(4, 1);
    let chained_valid = k <= E::min_of(two - m.clone(), quarter.clone());
    let chained_ext = k.clone() + quarter;
    let bht_eff = if bht_valid { base.clone() } else { bht_ext.clone() };
    let chained_eff = if chained_valid {
        base.clone()
    } else {
        chained_ext.clone()
    };
    let prior_best = E::min_of(bht_eff, chained_eff);
    Ok(RegimePoint {
        improved: base < prior_best,
        m_hat: m,
        k_hat: k,
        bht: base.clone(),
        bht_valid,
        bht_ext,
        chained: base.clone(),
        chained_valid,
        chained_ext,
        new: base.clone(),
        prior_best,
        chained_walk: base,
    })
}

/// One row of the region grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRow {
    pub m_hat: f64,
    pub k_hat: f64,
    pub prior_best: f64,
    pub chained_walk: f64,
    pub improved: bool,
}

impl<E: Exponent> From<&RegimePoint<E>> for GridRow {
    fn from(p: &RegimePoint<E>) -> Self {
        GridRow {
            m_hat: p.m_hat.to_f64(),
            k_hat: p.k_hat.to_f64(),
            prior_best: p.prior_best.to_f64(),
            chained_walk: p.chained_walk.to_f64(),
            improved: p.improved,
        }
    }
}

/// Converts a grid step such as `0.01` into the number of steps per unit.
/// The step must satisfy `0 < step ≤ 0.1` and divide 1.
pub fn steps_per_unit(step: f64) -> Result<i64> {
    if !(step > 0.0 && step <= 0.1) {
        return Err(Error::Parameter(format!("step {step} outside (0, 0.1]")));
    }
    let d = (1.0 / step).round();
    if (d * step - 1.0).abs() > 1e-9 || d > 1e6 {
        return Err(Error::Parameter(format!("step {step} does not divide 1")));
    }
    Ok(d as i64)
}

/// All grid points `(1 + i/d, j/d)` of the valid domain, row-major in `m̂`.
pub fn region_grid<E: Exponent>(per_unit: i64) -> Result<Vec<RegimePoint<E>>> {
    if per_unit < 10 {
        return Err(Error::Parameter(format!(
            "{per_unit} steps per unit is coarser than 0.1"
        )));
    }
    let mut out = Vec::new();
    for i in 0..=per_unit {
        for j in 0..=(per_unit - i) {
            let m = E::from_ratio(per_unit + i, per_unit);
            let k = E::from_ratio(j, per_unit);
            out.push(evaluate(m, k)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffPoint<E: Exponent> {
    pub ell_hat: E,
    pub time_exponent: E,
}

/// `k̂ + m̂/2 − ℓ̂/2` at `steps + 1` evenly spaced `ℓ̂` from 0 to
/// `2k̂/3 + m̂/3`.
pub fn tradeoff_curve<E: Exponent>(m_hat: E, k_hat: E, steps: u32) -> Result<Vec<TradeoffPoint<E>>> {
    let point = evaluate(m_hat, k_hat)?;
    if steps == 0 {
        return Err(Error::Parameter("tradeoff needs at least one step".into()));
    }
    let two = E::from_ratio(2, 1);
    let end = point.chained_walk.clone();
    Ok((0..=steps)
        .map(|i| {
            let ell = end.clone() * E::from_ratio(i as i64, steps as i64);
            TradeoffPoint {
                time_exponent: point.k_hat.clone() + point.m_hat.clone() / two.clone()
                    - ell.clone() / two.clone(),
                ell_hat: ell,
            }
        })
        .collect())
}
