//! Sparse normalized state vectors over explicitly labeled bases.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_complex::Complex;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Canonical byte label of a basis state.
///
/// Subsets are encoded as a big-endian `u16` length followed by the sorted
/// elements as big-endian `u32`; an optional register value is appended
/// verbatim after the subset.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BasisKey(Vec<u8>);

impl BasisKey {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        BasisKey(bytes)
    }

    pub fn subset(points: &[u64]) -> Self {
        let mut sorted = points.to_vec();
        sorted.sort_unstable();
        Self::sorted_subset(&sorted)
    }

    /// Same as [`BasisKey::subset`] but trusts the caller that `points` is
    /// strictly ascending.
    pub fn sorted_subset(points: &[u64]) -> Self {
        debug_assert!(points.windows(2).all(|w| w[0] < w[1]));
        let mut bytes = Vec::with_capacity(2 + 4 * points.len());
        bytes.extend_from_slice(&(points.len() as u16).to_be_bytes());
        for &x in points {
            bytes.extend_from_slice(&(x as u32).to_be_bytes());
        }
        BasisKey(bytes)
    }

    pub fn with_register(&self, register: &[u8]) -> Self {
        let mut bytes = self.0.clone();
        bytes.extend_from_slice(register);
        BasisKey(bytes)
    }

    /// Splits a subset-encoded key into its elements and the trailing
    /// register bytes.
    pub fn decode_subset(&self) -> Option<(Vec<u64>, &[u8])> {
        let len = u16::from_be_bytes(self.0.get(..2)?.try_into().ok()?) as usize;
        let body = self.0.get(2..2 + 4 * len)?;
        let points = body
            .chunks_exact(4)
            .map(|c| u32::from_be_bytes(c.try_into().unwrap()) as u64)
            .collect();
        Some((points, &self.0[2 + 4 * len..]))
    }

    /// The key with any register suffix removed.
    pub fn subset_part(&self) -> Option<BasisKey> {
        let len = u16::from_be_bytes(self.0.get(..2)?.try_into().ok()?) as usize;
        Some(BasisKey(self.0.get(..2 + 4 * len)?.to_vec()))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl fmt::Debug for BasisKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.decode_subset() {
            Some((pts, [])) => write!(f, "{pts:?}"),
            Some((pts, rest)) => write!(f, "{pts:?}|{}", hex_bytes(rest)),
            None => write!(f, "0x{}", self.hex()),
        }
    }
}

fn hex_bytes(b: &[u8]) -> String {
    b.iter().map(|x| format!("{x:02x}")).collect()
}

/// Map from basis key to complex amplitude.
#[derive(Clone, PartialEq)]
pub struct StateVector<T: Scalar> {
    amps: BTreeMap<BasisKey, Complex<T>>,
}

impl<T: Scalar> fmt::Debug for StateVector<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.amps.iter()).finish()
    }
}

#[derive(Serialize)]
struct DumpEntry {
    key: String,
    re: f64,
    im: f64,
}

impl<T: Scalar> StateVector<T> {
    /// Equal superposition over `basis`.
    pub fn uniform<I: IntoIterator<Item = BasisKey>>(basis: I) -> Result<Self> {
        let keys: BTreeSet<BasisKey> = basis.into_iter().collect();
        if keys.is_empty() {
            return Err(Error::Precondition("uniform state over empty basis".into()));
        }
        let a = T::one() / T::from_usize(keys.len()).unwrap().sqrt();
        Ok(StateVector {
            amps: keys
                .into_iter()
                .map(|k| (k, Complex::new(a, T::zero())))
                .collect(),
        })
    }

    /// Builds a state from raw amplitudes and normalizes it.
    pub fn from_amplitudes<I>(amps: I) -> Result<Self>
    where
        I: IntoIterator<Item = (BasisKey, Complex<T>)>,
    {
        let mut map = BTreeMap::new();
        for (k, a) in amps {
            *map.entry(k).or_insert_with(Complex::default) += a;
        }
        let raw = StateVector { amps: map }.pruned();
        raw.normalized()
            .ok_or_else(|| Error::Precondition("zero vector cannot be normalized".into()))
    }

    fn pruned(mut self) -> Self {
        let eps = T::prune_threshold();
        self.amps.retain(|_, a| a.norm() >= eps);
        self
    }

    /// Rescales to unit norm; `None` for the zero vector.
    pub fn normalized(mut self) -> Option<Self> {
        let n = self.norm();
        if n <= T::prune_threshold() {
            return None;
        }
        for a in self.amps.values_mut() {
            *a /= n;
        }
        Some(self.pruned())
    }

    pub fn norm(&self) -> T {
        self.amps
            .values()
            .fold(T::zero(), |acc, a| acc + a.norm_sqr())
            .sqrt()
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn amplitude(&self, key: &BasisKey) -> Complex<T> {
        self.amps.get(key).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&BasisKey, &Complex<T>)> {
        self.amps.iter()
    }

    pub fn keys(&self) -> impl Iterator<Item = &BasisKey> {
        self.amps.keys()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Self) -> Complex<T> {
        let (small, large, conj_small) = if self.len() <= other.len() {
            (self, other, true)
        } else {
            (other, self, false)
        };
        let mut acc = Complex::default();
        for (k, a) in &small.amps {
            if let Some(b) = large.amps.get(k) {
                acc += if conj_small { a.conj() * b } else { b.conj() * a };
            }
        }
        acc
    }

    /// `2<axis|self> axis - self`.
    pub fn reflect_about_state(&self, axis: &Self) -> Self {
        let overlap = axis.inner(self);
        let two = T::one() + T::one();
        let mut out = self.amps.clone();
        for a in out.values_mut() {
            *a = -*a;
        }
        for (k, b) in &axis.amps {
            *out.entry(k.clone()).or_default() += *b * overlap * two;
        }
        StateVector { amps: out }.pruned()
    }

    /// Negates the amplitude of every key accepted by `good`.
    pub fn reflect_about_predicate(&self, good: impl Fn(&BasisKey) -> bool) -> Self {
        StateVector {
            amps: self
                .amps
                .iter()
                .map(|(k, a)| (k.clone(), if good(k) { -*a } else { *a }))
                .collect(),
        }
    }

    /// Squared norm of the part accepted by `pred`.
    pub fn weight(&self, pred: impl Fn(&BasisKey) -> bool) -> T {
        self.amps
            .iter()
            .filter(|(k, _)| pred(k))
            .fold(T::zero(), |acc, (_, a)| acc + a.norm_sqr())
    }

    /// Renormalized restriction to the keys accepted by `pred`, or `None`
    /// when that part is empty.
    pub fn project(&self, pred: impl Fn(&BasisKey) -> bool) -> Option<Self> {
        StateVector {
            amps: self
                .amps
                .iter()
                .filter(|(k, _)| pred(k))
                .map(|(k, a)| (k.clone(), *a))
                .collect(),
        }
        .normalized()
    }

    /// Every outcome of `register` with its probability and collapsed state.
    pub fn outcome_distribution<L, F>(&self, register: F) -> BTreeMap<L, (T, Self)>
    where
        L: Ord + Clone,
        F: Fn(&BasisKey) -> L,
    {
        let mut parts: BTreeMap<L, BTreeMap<BasisKey, Complex<T>>> = BTreeMap::new();
        for (k, a) in &self.amps {
            parts.entry(register(k)).or_default().insert(k.clone(), *a);
        }
        let total = self.norm().powi(2);
        parts
            .into_iter()
            .filter_map(|(label, amps)| {
                let part = StateVector { amps };
                let p = part.norm().powi(2) / total;
                part.normalized().map(|s| (label, (p, s)))
            })
            .collect()
    }

    /// Samples an outcome of `register` and returns the collapsed state.
    pub fn measure<L, F, R>(&self, register: F, rng: &mut R) -> (L, Self)
    where
        L: Ord + Clone,
        F: Fn(&BasisKey) -> L,
        R: Rng + ?Sized,
    {
        let dist = self.outcome_distribution(register);
        let u = T::of(rng.random::<f64>());
        let mut acc = T::zero();
        let mut last = None;
        for (label, (p, state)) in dist {
            acc += p;
            if u < acc {
                return (label, state);
            }
            last = Some((label, state));
        }
        // rounding left u above the cumulative sum
        last.expect("normalized state has at least one outcome")
    }

    /// Applies an injective relabeling of basis keys.
    pub fn relabel(&self, f: impl Fn(&BasisKey) -> BasisKey) -> Result<Self> {
        let mut out = BTreeMap::new();
        for (k, a) in &self.amps {
            if out.insert(f(k), *a).is_some() {
                return Err(Error::Contract("relabeling is not injective".into()));
            }
        }
        Ok(StateVector { amps: out })
    }

    /// Equality up to global phase: both states are rotated so their first
    /// nonzero amplitude is real positive and then compared entrywise.
    pub fn approx_eq_up_to_phase(&self, other: &Self, tol: T) -> bool {
        fn canon<T: Scalar>(s: &StateVector<T>) -> Vec<(BasisKey, Complex<T>)> {
            let phase = s
                .amps
                .values()
                .next()
                .map(|a| a.conj() / a.norm())
                .unwrap_or(Complex::new(T::one(), T::zero()));
            s.amps.iter().map(|(k, a)| (k.clone(), *a * phase)).collect()
        }
        let (a, b) = (canon(self), canon(other));
        let keys: BTreeSet<&BasisKey> = a.iter().chain(b.iter()).map(|(k, _)| k).collect();
        let ma: BTreeMap<_, _> = a.iter().map(|(k, v)| (k, *v)).collect();
        let mb: BTreeMap<_, _> = b.iter().map(|(k, v)| (k, *v)).collect();
        let equal = keys.into_iter().all(|k| {
            let x = ma.get(k).copied().unwrap_or_default();
            let y = mb.get(k).copied().unwrap_or_default();
            (x - y).norm() <= tol
        });
        equal
    }

    /// Largest deviation from the uniform superposition over `family`
    /// (up to global phase). Keys outside `family` count with their full
    /// magnitude.
    pub fn uniformity_deviation<'a, I>(&self, family: I) -> T
    where
        I: IntoIterator<Item = &'a BasisKey>,
    {
        let family: BTreeSet<&BasisKey> = family.into_iter().collect();
        if family.is_empty() {
            return if self.is_empty() { T::zero() } else { T::one() };
        }
        let target = T::one() / T::from_usize(family.len()).unwrap().sqrt();
        let phase = self
            .amps
            .values()
            .next()
            .map(|a| a.conj() / a.norm())
            .unwrap_or(Complex::new(T::one(), T::zero()));
        let mut worst = T::zero();
        for (k, a) in &self.amps {
            let a = *a * phase;
            let d = if family.contains(k) {
                (a - Complex::new(target, T::zero())).norm()
            } else {
                a.norm()
            };
            worst = worst.max(d);
        }
        for k in family {
            if !self.amps.contains_key(k) {
                worst = worst.max(target);
            }
        }
        worst
    }

    /// JSON array of `{key, re, im}` sorted by key.
    pub fn debug_dump(&self) -> Result<String> {
        let entries: Vec<DumpEntry> = self
            .amps
            .iter()
            .map(|(k, a)| DumpEntry {
                key: k.hex(),
                re: a.re.to_f64().unwrap_or(f64::NAN),
                im: a.im.to_f64().unwrap_or(f64::NAN),
            })
            .collect();
        Ok(serde_json::to_string(&entries)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type State = StateVector<f64>;

    fn keys(n: u64) -> Vec<BasisKey> {
        (0..n).map(|i| BasisKey::subset(&[i])).collect()
    }

    fn random_state(seed: u64, n: u64) -> State {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        State::from_amplitudes(keys(n).into_iter().map(|k| {
            (
                k,
                Complex::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5),
            )
        }))
        .unwrap()
    }

    #[test]
    fn key_encoding_is_canonical() {
        assert_eq!(BasisKey::subset(&[3, 1, 2]), BasisKey::subset(&[1, 2, 3]));
        assert_ne!(BasisKey::subset(&[1, 2]), BasisKey::subset(&[1, 2, 3]));
        let k = BasisKey::subset(&[5, 9]).with_register(&[1, 2]);
        let (pts, reg) = k.decode_subset().unwrap();
        assert_eq!(pts, vec![5, 9]);
        assert_eq!(reg, &[1, 2]);
        assert_eq!(k.subset_part().unwrap(), BasisKey::subset(&[5, 9]));
    }

    #[test]
    fn uniform_states() {
        let one = State::uniform(keys(1)).unwrap();
        assert!((one.amplitude(&keys(1)[0]).re - 1.0).abs() < 1e-15);
        let four = State::uniform(keys(4)).unwrap();
        for k in keys(4) {
            assert!((four.amplitude(&k).re - 0.5).abs() < 1e-15);
        }
        assert!(State::uniform(Vec::new()).is_err());
        let big = State::uniform(keys(10_000)).unwrap();
        assert!((big.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reflection_about_state_cases() {
        let axis = random_state(1, 6);
        assert!(axis
            .reflect_about_state(&axis)
            .approx_eq_up_to_phase(&axis, 1e-12));
        let e0 = State::uniform(vec![keys(2)[0].clone()]).unwrap();
        let e1 = State::uniform(vec![keys(2)[1].clone()]).unwrap();
        let r = e1.reflect_about_state(&e0);
        assert!((r.amplitude(&keys(2)[1]).re + 1.0).abs() < 1e-15);
    }

    #[test]
    fn reflection_about_predicate_cases() {
        let s = random_state(2, 5);
        let same = s.reflect_about_predicate(|_| false);
        assert_eq!(same, s);
        let neg = s.reflect_about_predicate(|_| true);
        for (k, a) in s.iter() {
            assert_eq!(neg.amplitude(k), -*a);
        }
    }

    #[test]
    fn measurement_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_state(3, 4);
        let (label, after) = s.measure(|_| 0u8, &mut rng);
        assert_eq!(label, 0);
        assert!(after.approx_eq_up_to_phase(&s, 1e-12));

        let two = State::uniform(keys(2)).unwrap();
        let dist = two.outcome_distribution(|k| k.clone());
        for (p, _) in dist.values() {
            assert!((p - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn sampling_matches_distribution() {
        let s = random_state(9, 5);
        let dist = s.outcome_distribution(|k| k.clone());
        let mut counts: BTreeMap<BasisKey, u64> = BTreeMap::new();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let draws = 100_000u64;
        for _ in 0..draws {
            let (k, _) = s.measure(|k| k.clone(), &mut rng);
            *counts.entry(k).or_default() += 1;
        }
        for (k, (p, _)) in &dist {
            let freq = counts.get(k).copied().unwrap_or(0) as f64 / draws as f64;
            let sigma = (p * (1.0 - p) / draws as f64).sqrt();
            assert!((freq - p).abs() <= 3.0 * sigma + 1e-12, "{k:?}: {freq} vs {p}");
        }
    }

    #[test]
    fn collapsed_branches_are_orthogonal() {
        let s = random_state(4, 8);
        let dist = s.outcome_distribution(|k| k.decode_subset().unwrap().0[0] % 3);
        let total: f64 = dist.values().map(|(p, _)| p).sum();
        assert!((total - 1.0).abs() < 1e-9);
        let states: Vec<_> = dist.values().map(|(_, st)| st.clone()).collect();
        for i in 0..states.len() {
            assert!((states[i].norm() - 1.0).abs() < 1e-12);
            for j in i + 1..states.len() {
                assert!(states[i].inner(&states[j]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn dump_is_sorted_json() {
        let s = State::uniform(keys(2)).unwrap();
        let dump = s.debug_dump().unwrap();
        assert!(dump.starts_with(r#"[{"key":"000100000000","re":0.7071"#));
    }

    #[test]
    fn single_precision_smoke() {
        let s = StateVector::<f32>::uniform(keys(16)).unwrap();
        let r = s
            .reflect_about_predicate(|k| k == &keys(16)[0])
            .reflect_about_state(&s);
        assert!((r.norm() - 1.0).abs() < f32::tolerance());
    }

    proptest! {
        #[test]
        fn reflections_are_unitary_involutions(seed in 0u64..10_000, n in 1u64..40, mask in 0u64..u64::MAX) {
            let s = random_state(seed, n);
            let axis = random_state(seed ^ 0xabcdef, n);
            let good = |k: &BasisKey| (mask >> (k.decode_subset().unwrap().0[0] % 64)) & 1 == 1;
            let a = s.reflect_about_state(&axis);
            prop_assert!((a.norm() - 1.0).abs() < 1e-9);
            prop_assert!(a.reflect_about_state(&axis).approx_eq_up_to_phase(&s, 1e-9));
            let b = s.reflect_about_predicate(good);
            prop_assert!((b.norm() - 1.0).abs() < 1e-9);
            prop_assert!(b.reflect_about_predicate(good).approx_eq_up_to_phase(&s, 1e-12));
        }

        #[test]
        fn repeated_measurement_is_stable(seed in 0u64..1000) {
            let s = random_state(seed, 12);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let reg = |k: &BasisKey| k.decode_subset().unwrap().0[0] % 4;
            let (first, after) = s.measure(reg, &mut rng);
            for _ in 0..5 {
                let (again, _) = after.measure(reg, &mut rng);
                prop_assert_eq!(again, first);
            }
        }
    }
}
