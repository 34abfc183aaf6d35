//! Multicollision statistics for `R` uniform draws into `M` bins.
//!
//! A random function restricted to a random `R`-subset has the same image
//! law as `R` independent uniform balls in `M` bins, so every Monte-Carlo
//! routine here samples that model directly.

use rand::Rng;
use serde::Serialize;
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, Discrete, Poisson};
use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};
use crate::oracle::{group_multicollisions, RestrictedFunction};
use crate::parallel::map_chunks;

/// Multicollision count `Z` of a subset of a restricted domain.
pub fn multicollision_count(f: &RestrictedFunction<'_>, subset: &[u64]) -> Result<usize> {
    if let Some(x) = subset.iter().find(|&&x| !f.contains(x)) {
        return Err(Error::Domain(format!("{x} is outside the restricted domain")));
    }
    Ok(group_multicollisions(subset.iter().copied(), |x| f.image(x)).len())
}

/// Sorted occupancy sizes of the nonempty bins after `r` draws into `m`.
fn occupancy<R: Rng + ?Sized>(r: u64, m: u64, rng: &mut R, buf: &mut Vec<u64>) -> Vec<u64> {
    buf.clear();
    buf.extend((0..r).map(|_| rng.random_range(0..m)));
    buf.sort_unstable();
    buf.chunk_by(|a, b| a == b).map(|g| g.len() as u64).collect()
}

fn check_model(r: u64, m: u64) -> Result<()> {
    if r == 0 || m == 0 {
        return Err(Error::Parameter("R and M must be positive".into()));
    }
    if 8 * r >= m {
        return Err(Error::Precondition(format!("need 8R < M, got R={r} M={m}")));
    }
    Ok(())
}

/// Exact histogram of sampled `Z` values; index `z` holds the number of
/// samples with `Z = z`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ZHistogram {
    pub counts: Vec<u64>,
}

impl ZHistogram {
    pub fn samples(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        let s: f64 = self
            .counts
            .iter()
            .enumerate()
            .map(|(z, &c)| z as f64 * c as f64)
            .sum();
        s / self.samples() as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        let n = self.samples() as f64;
        if n < 2.0 {
            return 0.0;
        }
        let mean = self.mean();
        let ss: f64 = self
            .counts
            .iter()
            .enumerate()
            .map(|(z, &c)| (z as f64 - mean).powi(2) * c as f64)
            .sum();
        ss / (n - 1.0)
    }

    /// Fraction of samples with `lo ≤ Z ≤ hi`.
    pub fn fraction_in(&self, lo: i64, hi: i64) -> f64 {
        let hit: u64 = self
            .counts
            .iter()
            .enumerate()
            .filter(|(z, _)| (lo..=hi).contains(&(*z as i64)))
            .map(|(_, &c)| c)
            .sum();
        hit as f64 / self.samples() as f64
    }

    fn merge(mut self, other: ZHistogram) -> ZHistogram {
        if other.counts.len() > self.counts.len() {
            self.counts.resize(other.counts.len(), 0);
        }
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
        self
    }
}

/// Samples `Z` for `samples` independent draws of `r` balls into `m` bins.
pub fn sample_z(r: u64, m: u64, samples: u64, seed: u64) -> Result<ZHistogram> {
    if r == 0 || m == 0 || samples == 0 {
        return Err(Error::Parameter("R, M and samples must be positive".into()));
    }
    let width = (r / 2 + 1) as usize;
    let parts = map_chunks(samples, seed, |rng, len| {
        let mut counts = vec![0u64; width];
        let mut buf = Vec::with_capacity(r as usize);
        for _ in 0..len {
            let z = occupancy(r, m, rng, &mut buf).iter().filter(|&&s| s >= 2).count();
            counts[z] += 1;
        }
        ZHistogram { counts }
    })?;
    Ok(parts.into_iter().fold(
        ZHistogram {
            counts: vec![0; width],
        },
        ZHistogram::merge,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollisionStats {
    pub sample_count: u64,
    pub mean_z: f64,
    pub var_z: f64,
    pub lambda: f64,
    /// Empirical probability that a fixed image has two or more preimages.
    pub p_hat: f64,
}

impl CollisionStats {
    pub fn from_histogram(h: &ZHistogram, r: u64, m: u64) -> Self {
        let mean_z = h.mean();
        CollisionStats {
            sample_count: h.samples(),
            mean_z,
            var_z: h.variance(),
            lambda: r as f64 / m as f64,
            p_hat: (mean_z / m as f64).clamp(0.0, 1.0),
        }
    }
}

/// Concrete interval parameters for a vertex size `r` and codomain `m`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalPlan {
    pub r: u64,
    pub m: u64,
    pub c: f64,
    pub e: i64,
    pub t: i64,
    pub e_prime: i64,
}

impl IntervalPlan {
    pub fn new(r: u64, m: u64, c: f64) -> Result<Self> {
        if m == 0 || !(c.is_finite() && c >= 0.0) {
            return Err(Error::Parameter(format!("invalid plan R={r} M={m} c={c}")));
        }
        let e = Self::expected(c, r, m);
        Ok(IntervalPlan {
            r,
            m,
            c,
            e,
            t: interval_width(r, m),
            e_prime: e,
        })
    }

    /// `round(c·r²/m)`.
    pub fn expected(c: f64, r: u64, m: u64) -> i64 {
        (c * (r * r) as f64 / m as f64).round() as i64
    }

    /// Recomputes `E'` for a shrunken vertex size and codomain.
    pub fn update(&mut self, r: u64, m: u64) {
        self.e_prime = Self::expected(self.c, r, m);
    }

    /// Whether `8R < M` holds.
    pub fn hypothesis_holds(&self) -> bool {
        8 * self.r < self.m
    }

    /// Fewer than two expected collisions per vertex.
    pub fn sparse(&self) -> bool {
        self.e < 2
    }

    pub fn upper(&self) -> (i64, i64) {
        (self.e, self.e + self.t)
    }

    pub fn lower(&self) -> (i64, i64) {
        (self.e - self.t, self.e)
    }
}

/// `max(1, round(r/√m))`.
pub fn interval_width(r: u64, m: u64) -> i64 {
    ((r as f64 / (m as f64).sqrt()).round() as i64).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub c: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub stats: CollisionStats,
}

/// Estimates `c = E[Z]·M/R²` with a 3σ confidence interval.
pub fn calibrate_constant(r: u64, m: u64, samples: u64, seed: u64) -> Result<Calibration> {
    check_model(r, m)?;
    let h = sample_z(r, m, samples, seed)?;
    let stats = CollisionStats::from_histogram(&h, r, m);
    let scale = m as f64 / (r * r) as f64;
    let half = 3.0 * (stats.var_z / samples as f64).sqrt() * scale;
    let c = stats.mean_z * scale;
    Ok(Calibration {
        c,
        ci_low: c - half,
        ci_high: c + half,
        stats,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Side {
    Upper,
    Lower,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HitReport {
    pub probability: f64,
    pub interval: (i64, i64),
    pub e: i64,
    pub t: i64,
    /// `c·R²/M < 1`: the intervals sit at the boundary `Z = 0`.
    pub degenerate: bool,
}

fn hit_from_histogram(h: &ZHistogram, plan: &IntervalPlan, side: Side, raw_e: f64) -> HitReport {
    let interval = match side {
        Side::Upper => plan.upper(),
        Side::Lower => plan.lower(),
    };
    HitReport {
        probability: h.fraction_in(interval.0, interval.1),
        interval,
        e: plan.e,
        t: plan.t,
        degenerate: raw_e < 1.0,
    }
}

/// Fraction of sampled subsets whose `Z` lands in `[E, E+T]` or `[E−T, E]`.
/// `width` replaces `T` when given.
pub fn interval_hit_probability(
    r: u64,
    m: u64,
    c: f64,
    side: Side,
    samples: u64,
    seed: u64,
    width: Option<i64>,
) -> Result<HitReport> {
    check_model(r, m)?;
    let mut plan = IntervalPlan::new(r, m, c)?;
    if let Some(w) = width {
        plan.t = w.max(0);
    }
    let h = sample_z(r, m, samples, seed)?;
    Ok(hit_from_histogram(&h, &plan, side, c * (r * r) as f64 / m as f64))
}

/// One stats report row: calibration and both hit probabilities from a
/// single sample stream.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsRow {
    #[serde(rename = "R")]
    pub r: u64,
    #[serde(rename = "M")]
    pub m: u64,
    pub samples: u64,
    pub mean_z: f64,
    pub var_z: f64,
    pub c_hat: f64,
    pub p_upper: f64,
    pub p_lower: f64,
}

pub fn stats_row(r: u64, m: u64, samples: u64, seed: u64) -> Result<StatsRow> {
    check_model(r, m)?;
    let h = sample_z(r, m, samples, seed)?;
    let stats = CollisionStats::from_histogram(&h, r, m);
    let c_hat = stats.mean_z * m as f64 / (r * r) as f64;
    let plan = IntervalPlan::new(r, m, c_hat)?;
    Ok(StatsRow {
        r,
        m,
        samples,
        mean_z: stats.mean_z,
        var_z: stats.var_z,
        c_hat,
        p_upper: hit_from_histogram(&h, &plan, Side::Upper, stats.mean_z).probability,
        p_lower: hit_from_histogram(&h, &plan, Side::Lower, stats.mean_z).probability,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceReport {
    pub stats: CollisionStats,
    pub margin: f64,
    /// `var ≤ mean·(1 + margin)`.
    pub variance_dominated: bool,
    pub sigma_bound: f64,
    pub sigma_within_bound: bool,
}

pub fn variance_check(r: u64, m: u64, samples: u64, seed: u64) -> Result<VarianceReport> {
    check_model(r, m)?;
    let h = sample_z(r, m, samples, seed)?;
    let stats = CollisionStats::from_histogram(&h, r, m);
    let margin = 5.0 / (samples as f64).sqrt();
    let sigma_bound = (2.0f64 / 3.0).sqrt() * r as f64 / (m as f64 / 2.0).sqrt();
    Ok(VarianceReport {
        variance_dominated: stats.var_z <= stats.mean_z * (1.0 + margin),
        sigma_within_bound: stats.var_z.sqrt() <= sigma_bound,
        margin,
        sigma_bound,
        stats,
    })
}

/// Upper bound `2^{-m(ℓ-1)}·C(2^n, ℓ)` on the probability that a random
/// function `{0,1}^n → {0,1}^m` has an `ℓ`-multicollision. Not clamped to 1.
pub fn multicollision_size_bound(n: u32, m: u32, ell: u64) -> Result<f64> {
    if n > m || n >= 64 {
        return Err(Error::Parameter(format!(
            "need n ≤ m and n < 64, got n={n} m={m}"
        )));
    }
    let domain = 1u64 << n;
    if ell < 2 || ell > domain {
        return Err(Error::Parameter(format!("need 2 ≤ ℓ ≤ 2^n, got ℓ={ell}")));
    }
    let log = ln_binomial(domain, ell) - (m as f64) * (ell - 1) as f64 * std::f64::consts::LN_2;
    Ok(log.exp())
}

/// Fraction of random functions `{0,1}^n → {0,1}^m` with an image of at
/// least `ell` preimages.
pub fn multicollision_frequency(n: u32, m: u32, ell: u64, samples: u64, seed: u64) -> Result<f64> {
    multicollision_size_bound(n, m, ell)?;
    if samples == 0 {
        return Err(Error::Parameter("samples must be positive".into()));
    }
    let hits = map_chunks(samples, seed, |rng, len| {
        let mut buf = Vec::new();
        (0..len)
            .filter(|_| occupancy(1 << n, 1 << m, rng, &mut buf).iter().any(|&s| s >= ell))
            .count() as u64
    })?;
    Ok(hits.iter().sum::<u64>() as f64 / samples as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftReport {
    pub r: u64,
    pub m: u64,
    pub t: i64,
    /// `(R', M', c·R'²/M')` at the four corners.
    pub corners: Vec<(u64, u64, f64)>,
    pub max_drift: f64,
    pub holds: bool,
    /// `R² > M^{3/2}/8`: outside the regime where the bound is claimed.
    pub flagged: bool,
}

/// Drift of `c·R'²/M'` over `R' ∈ [R−T, R]`, `M' ∈ [M−T, M]` with
/// `T = round(R/√M)`. The ratio is monotone in both arguments, so the
/// extremes sit at the corners.
pub fn drift_check(r: u64, m: u64, c: f64) -> Result<DriftReport> {
    if r == 0 || m == 0 {
        return Err(Error::Parameter("R and M must be positive".into()));
    }
    let t = (r as f64 / (m as f64).sqrt()).round() as u64;
    let base = c * (r * r) as f64 / m as f64;
    let corners: Vec<(u64, u64, f64)> = [
        (r, m),
        (r.saturating_sub(t), m),
        (r, m.saturating_sub(t)),
        (r.saturating_sub(t), m.saturating_sub(t)),
    ]
    .into_iter()
    .filter(|&(_, mm)| mm > 0)
    .map(|(rr, mm)| (rr, mm, c * (rr * rr) as f64 / mm as f64))
    .collect();
    let max_drift = corners.iter().map(|c| (c.2 - base).abs()).fold(0.0, f64::max);
    let flagged = (r as f64).powi(2) > (m as f64).powf(1.5) / 8.0;
    Ok(DriftReport {
        r,
        m,
        t: t as i64,
        corners,
        holds: max_drift <= t as f64,
        max_drift,
        flagged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoissonFit {
    pub lambda: f64,
    pub chi_square: f64,
    pub degrees_of_freedom: u64,
    pub p_value: f64,
    /// Observed bin counts by occupancy, pooled cells merged into the last.
    pub observed: Vec<u64>,
    pub expected: Vec<f64>,
}

/// Chi-square test of the per-image preimage counts against
/// `Poisson(R/M)`. Tail cells are pooled until every expected count is at
/// least 5.
pub fn poisson_fit(r: u64, m: u64, samples: u64, seed: u64) -> Result<PoissonFit> {
    check_model(r, m)?;
    if samples == 0 {
        return Err(Error::Parameter("samples must be positive".into()));
    }
    let width = r as usize + 1;
    let parts = map_chunks(samples, seed, |rng, len| {
        let mut hist = vec![0u64; width];
        let mut buf = Vec::with_capacity(r as usize);
        for _ in 0..len {
            let occ = occupancy(r, m, rng, &mut buf);
            hist[0] += m - occ.len() as u64;
            for s in occ {
                hist[s as usize] += 1;
            }
        }
        hist
    })?;
    let mut observed = vec![0u64; width];
    for p in parts {
        for (a, b) in observed.iter_mut().zip(p) {
            *a += b;
        }
    }
    let total = (samples * m) as f64;
    let lambda = r as f64 / m as f64;
    let pois = Poisson::new(lambda).map_err(|e| Error::Parameter(e.to_string()))?;

    let mut obs = Vec::new();
    let mut exp = Vec::new();
    let mut cum = 0.0;
    for (j, &o) in observed.iter().enumerate() {
        let e = total * pois.pmf(j as u64);
        let tail = total - cum - e;
        if tail >= 5.0 && j + 1 < width {
            obs.push(o);
            exp.push(e);
            cum += e;
        } else {
            obs.push(observed[j..].iter().sum());
            exp.push(total - cum);
            break;
        }
    }
    let chi_square: f64 = obs
        .iter()
        .zip(&exp)
        .map(|(&o, &e)| (o as f64 - e).powi(2) / e)
        .sum();
    let dof = obs.len().saturating_sub(1).max(1) as u64;
    let p_value = if obs.len() < 2 {
        1.0
    } else {
        let chi = ChiSquared::new(dof as f64).map_err(|e| Error::Parameter(e.to_string()))?;
        chi.sf(chi_square)
    };
    Ok(PoissonFit {
        lambda,
        chi_square,
        degrees_of_freedom: dof,
        p_value,
        observed: obs,
        expected: exp,
    })
}

/// Exact total-variation distance between `Binomial(R, 1/M)` and
/// `Poisson(R/M)`.
pub fn binomial_poisson_tv(r: u64, m: u64) -> Result<f64> {
    if r == 0 || m == 0 {
        return Err(Error::Parameter("R and M must be positive".into()));
    }
    let bin = Binomial::new(1.0 / m as f64, r).map_err(|e| Error::Parameter(e.to_string()))?;
    let pois = Poisson::new(r as f64 / m as f64).map_err(|e| Error::Parameter(e.to_string()))?;
    let mut diff = 0.0;
    let mut pois_mass = 0.0;
    for j in 0..=r {
        let q = pois.pmf(j);
        pois_mass += q;
        diff += (bin.pmf(j) - q).abs();
    }
    diff += (1.0 - pois_mass).max(0.0);
    Ok(diff / 2.0)
}
