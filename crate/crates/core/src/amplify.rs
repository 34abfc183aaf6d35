//! Amplitude amplification in both directions and the rejection-sampling
//! constructor for superpositions over a domain with excluded points.
//!
//! `Ref_B` (negate the good part) followed by `Ref_U` (reflect about the
//! axis) rotates by `2θ` in the plane spanned by the good and bad
//! projections of the axis, where `sin θ = α` is the good amplitude.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::statevector::{BasisKey, StateVector};

/// Upper bound on measure-and-retry rounds before `flip` gives up.
const MAX_ROUNDS: u64 = 100_000;

/// `|ψ_U> = β|ψ_B> + α|ψ_G>` with `θ = arcsin α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeDecomposition<T: Scalar> {
    pub alpha: T,
    pub beta: T,
    pub theta: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Want {
    Good,
    Bad,
}

/// Bookkeeping of one run of the search loop.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipStats {
    pub iterations_used: u64,
    pub restarts: u64,
    pub projections: Vec<Want>,
}

impl FlipStats {
    pub fn absorb(&mut self, other: &FlipStats) {
        self.iterations_used += other.iterations_used;
        self.restarts += other.restarts;
        self.projections.extend_from_slice(&other.projections);
    }

    /// Number of iterate-then-measure rounds.
    pub fn rounds(&self) -> u64 {
        self.projections.len() as u64
    }
}

pub fn decompose<T: Scalar>(
    state: &StateVector<T>,
    good: impl Fn(&BasisKey) -> bool,
) -> AmplitudeDecomposition<T> {
    let total = state.weight(|_| true);
    let g = (state.weight(good) / total).min(T::one());
    let alpha = g.sqrt();
    let beta = (T::one() - g).max(T::zero()).sqrt();
    AmplitudeDecomposition {
        alpha,
        beta,
        theta: alpha.asin(),
    }
}

/// Applies `count` rounds of `Ref_U · Ref_B`.
pub fn grover_iterate<T: Scalar>(
    state: &StateVector<T>,
    good: impl Fn(&BasisKey) -> bool,
    axis: &StateVector<T>,
    count: u64,
) -> StateVector<T> {
    let mut s = state.clone();
    for _ in 0..count {
        s = s.reflect_about_predicate(&good).reflect_about_state(axis);
    }
    s
}

/// Angle of `state` in the (bad, good) plane, measured from `ψ_B`.
fn plane_angle<T: Scalar>(
    state: &StateVector<T>,
    psi_good: Option<&StateVector<T>>,
    psi_bad: Option<&StateVector<T>>,
) -> Result<T> {
    let g = psi_good.map(|p| p.inner(state)).unwrap_or_default();
    let b = psi_bad.map(|p| p.inner(state)).unwrap_or_default();
    let in_plane = g.norm_sqr() + b.norm_sqr();
    if (in_plane - T::one()).abs() > T::of(1e3) * T::tolerance() {
        return Err(Error::Contract(format!(
            "input has weight {:?} in the rotation plane",
            in_plane
        )));
    }
    let reference = if g.norm() >= b.norm() { g } else { b };
    let phase = reference.conj() / reference.norm();
    Ok((g * phase).re.atan2((b * phase).re))
}

/// Number of iterations before the next measurement.
///
/// From the axis itself with a small good amplitude this is the usual
/// `round(π/(4θ) - 1/2)`. When the good amplitude already exceeds `1/√2`
/// and the input is the axis, measure directly. Otherwise pick the smallest
/// count that maximizes the probability of the wanted outcome over one
/// period of the rotation.
pub fn iteration_count<T: Scalar>(phi: T, theta: T, want: Want) -> u64 {
    let half_pi = T::FRAC_PI_2();
    let tol = T::of(1e3) * T::tolerance();
    let from_axis = (phi - theta).abs() < tol;
    if want == Want::Good && from_axis {
        if theta > T::FRAC_PI_4() {
            return 0;
        }
        let k = (T::PI() / (T::of(4.0) * theta) - T::of(0.5)).round();
        return k.max(T::zero()).to_u64().unwrap_or(0);
    }
    let narrow = theta.min(half_pi - theta);
    if narrow < T::tolerance() {
        return 0;
    }
    let span = (T::PI() / (T::of(2.0) * narrow)).ceil().to_u64().unwrap_or(0);
    let success = |k: u64| {
        let angle = phi + T::of(2.0 * k as f64) * theta;
        match want {
            Want::Good => angle.sin().powi(2),
            Want::Bad => angle.cos().powi(2),
        }
    };
    let mut best = (0u64, success(0));
    for k in 1..=span {
        let p = success(k);
        if p > best.1 + T::of(1e-12) {
            best = (k, p);
        }
    }
    best.0
}

/// Moves a state in the (bad, good) plane of `axis` onto the wanted
/// component by repeated iterate-and-measure rounds.
///
/// The returned state is the renormalized projection of `axis` onto the
/// wanted component.
pub fn flip<T, R, G>(
    state: &StateVector<T>,
    good: G,
    axis: &StateVector<T>,
    want: Want,
    rng: &mut R,
) -> Result<(StateVector<T>, FlipStats)>
where
    T: Scalar,
    R: Rng + ?Sized,
    G: Fn(&BasisKey) -> bool,
{
    let dec = decompose(axis, &good);
    let psi_good = axis.project(&good);
    let psi_bad = axis.project(|k| !good(k));
    match want {
        Want::Good if psi_good.is_none() => {
            return Err(Error::ImpossibleTarget("axis has no good component".into()))
        }
        Want::Bad if psi_bad.is_none() => {
            return Err(Error::ImpossibleTarget("axis has no bad component".into()))
        }
        _ => {}
    }

    let mut stats = FlipStats::default();
    let mut current = state.clone();
    for _ in 0..MAX_ROUNDS {
        let phi = plane_angle(&current, psi_good.as_ref(), psi_bad.as_ref())?;
        let k = iteration_count(phi, dec.theta, want);
        current = grover_iterate(&current, &good, axis, k);
        stats.iterations_used += k;
        let (outcome, collapsed) = current.measure(|key| if good(key) { Want::Good } else { Want::Bad }, rng);
        stats.projections.push(outcome);
        if outcome == want {
            return Ok((collapsed, stats));
        }
        stats.restarts += 1;
        current = collapsed;
    }
    Err(Error::Contract(format!(
        "search did not succeed within {MAX_ROUNDS} rounds"
    )))
}

/// Uniform superposition over `0..domain_size` minus the excluded points,
/// built by flagging excluded points and amplifying the flag-0 branch.
pub fn superpose_excluding<T, R>(
    domain_size: u64,
    excluded: impl Fn(u64) -> bool,
    rng: &mut R,
) -> Result<(StateVector<T>, FlipStats)>
where
    T: Scalar,
    R: Rng + ?Sized,
{
    let flagged: Vec<(u64, bool)> = (0..domain_size).map(|x| (x, excluded(x))).collect();
    let bad = flagged.iter().filter(|(_, e)| *e).count() as u64;
    if 2 * bad >= domain_size {
        return Err(Error::Precondition(format!(
            "{bad} of {domain_size} points excluded; need fewer than half"
        )));
    }
    let axis = StateVector::<T>::uniform(
        flagged
            .iter()
            .map(|&(x, e)| BasisKey::subset(&[x]).with_register(&[e as u8])),
    )?;
    let flag_clear = |k: &BasisKey| k.as_bytes().last() == Some(&0);
    let (state, stats) = flip(&axis, flag_clear, &axis, Want::Good, rng)?;
    let state = state.relabel(|k| k.subset_part().expect("subset key"))?;
    Ok((state, stats))
}
