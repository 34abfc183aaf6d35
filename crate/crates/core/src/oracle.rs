//! Random functions as explicit tables, the counted oracle, multicollision
//! enumeration, the classical collision table and restricted functions.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest domain exponent the simulator will materialize.
pub const MAX_DOMAIN_BITS: u32 = 24;

/// Problem parameters: `f: {0,1}^n -> {0,1}^m`, looking for `2^k` collisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Params {
    pub n: u32,
    pub m: u32,
    pub k: u32,
}

impl Params {
    pub fn new(n: u32, m: u32, k: u32) -> Result<Self> {
        if n == 0 || n > MAX_DOMAIN_BITS {
            return Err(Error::Parameter(format!("n = {n} outside 1..={MAX_DOMAIN_BITS}")));
        }
        if m < n || m > 2 * n {
            return Err(Error::Parameter(format!("need n <= m <= 2n, got n={n} m={m}")));
        }
        if k > 2 * n - m {
            return Err(Error::Parameter(format!(
                "need k <= 2n - m = {}, got k={k}",
                2 * n - m
            )));
        }
        Ok(Params { n, m, k })
    }

    pub fn domain_size(&self) -> u64 {
        1u64 << self.n
    }

    pub fn codomain_size(&self) -> u64 {
        1u64 << self.m
    }

    pub fn target_tuples(&self) -> u64 {
        1u64 << self.k
    }
}

/// Truth table of `f` together with the query counter of `O_f`.
#[derive(Debug)]
pub struct FunctionTable {
    params: Params,
    table: Vec<u64>,
    query_count: AtomicU64,
}

impl Clone for FunctionTable {
    fn clone(&self) -> Self {
        FunctionTable {
            params: self.params,
            table: self.table.clone(),
            query_count: AtomicU64::new(self.query_count()),
        }
    }
}

impl PartialEq for FunctionTable {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params && self.table == other.table
    }
}

impl FunctionTable {
    /// Draws every entry independently and uniformly from `0..2^m`.
    pub fn generate(params: Params, seed: u64) -> Result<Self> {
        let params = Params::new(params.n, params.m, params.k)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = params.codomain_size();
        let table = (0..params.domain_size())
            .map(|_| rng.random_range(0..bound))
            .collect();
        Ok(FunctionTable {
            params,
            table,
            query_count: AtomicU64::new(0),
        })
    }

    pub fn from_table(params: Params, table: Vec<u64>) -> Result<Self> {
        let params = Params::new(params.n, params.m, params.k)?;
        if table.len() as u64 != params.domain_size() {
            return Err(Error::Parameter(format!(
                "table has {} entries, expected {}",
                table.len(),
                params.domain_size()
            )));
        }
        if let Some(bad) = table.iter().find(|&&v| v >= params.codomain_size()) {
            return Err(Error::Parameter(format!(
                "table entry {bad:#x} does not fit in {} bits",
                params.m
            )));
        }
        Ok(FunctionTable {
            params,
            table,
            query_count: AtomicU64::new(0),
        })
    }

    pub fn params(&self) -> Params {
        self.params
    }

    /// One call to `O_f`. Increments the query counter.
    pub fn query(&self, x: u64) -> Result<u64> {
        let v = *self
            .table
            .get(x as usize)
            .ok_or_else(|| Error::Domain(format!("x = {x} outside domain of size {}", self.table.len())))?;
        self.query_count.fetch_add(1, Ordering::Relaxed);
        Ok(v)
    }

    pub fn query_count(&self) -> u64 {
        self.query_count.load(Ordering::Relaxed)
    }

    /// Ground-truth read used by the simulator to compute amplitudes and by
    /// verification code. Not an oracle call: algorithmic cost of quantum
    /// queries is charged to a [`crate::chain::CostLedger`] instead.
    pub fn image(&self, x: u64) -> u64 {
        self.table[x as usize]
    }

    pub fn table(&self) -> &[u64] {
        &self.table
    }

    /// Serializes as `n=<n> m=<m>` followed by one hex image per line.
    pub fn to_text(&self) -> String {
        let mut out = format!("n={} m={}\n", self.params.n, self.params.m);
        for v in &self.table {
            let _ = writeln!(out, "{v:x}");
        }
        out
    }

    /// Parses the text format. `k` is not part of the file and is set to 0.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parameter("empty function file".into()))?;
        let mut n = None;
        let mut m = None;
        for field in header.split_whitespace() {
            match field.split_once('=') {
                Some(("n", v)) => n = v.parse::<u32>().ok(),
                Some(("m", v)) => m = v.parse::<u32>().ok(),
                _ => return Err(Error::Parameter(format!("bad header field {field:?}"))),
            }
        }
        let (n, m) = match (n, m) {
            (Some(n), Some(m)) => (n, m),
            _ => return Err(Error::Parameter(format!("bad header {header:?}"))),
        };
        let table = lines
            .map(|l| {
                u64::from_str_radix(l.trim(), 16)
                    .map_err(|e| Error::Parameter(format!("bad image {l:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        FunctionTable::from_table(Params::new(n, m, 0)?, table)
    }
}

/// A multicollision tuple `u : {x_1, .., x_r}` with preimages sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Multicollision {
    pub image: u64,
    pub preimages: Vec<u64>,
}

impl Multicollision {
    pub fn new(image: u64, mut preimages: Vec<u64>) -> Self {
        preimages.sort_unstable();
        Multicollision { image, preimages }
    }

    pub fn size(&self) -> usize {
        self.preimages.len()
    }

    /// Number of collision pairs inside the tuple.
    pub fn pair_count(&self) -> u64 {
        let r = self.preimages.len() as u64;
        r * r.saturating_sub(1) / 2
    }
}

/// Groups `points` by image and keeps the groups with at least two members.
/// Output is sorted by image.
pub fn group_multicollisions<I>(points: I, image: impl Fn(u64) -> u64) -> Vec<Multicollision>
where
    I: IntoIterator<Item = u64>,
{
    let mut groups: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    for x in points {
        groups.entry(image(x)).or_default().push(x);
    }
    groups
        .into_iter()
        .filter(|(_, xs)| xs.len() >= 2)
        .map(|(u, xs)| Multicollision::new(u, xs))
        .collect()
}

/// Classical ground truth: every image with two or more preimages in the
/// (restricted) domain, with its complete preimage set.
pub fn enumerate_multicollisions(
    f: &FunctionTable,
    restriction: Option<&RestrictedFunction<'_>>,
) -> Vec<Multicollision> {
    let domain: Box<dyn Iterator<Item = u64>> = match restriction {
        Some(r) => Box::new(r.domain().into_iter()),
        None => Box::new(0..f.params().domain_size()),
    };
    group_multicollisions(domain, |x| f.image(x))
}

/// The classical table `C` of output tuples, in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CollisionTable {
    entries: Vec<Multicollision>,
    by_image: HashMap<u64, usize>,
}

impl CollisionTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Validates the tuple against the oracle (one query per preimage) and
    /// appends it.
    pub fn insert(&mut self, f: &FunctionTable, tuple: Multicollision) -> Result<()> {
        let tuple = Multicollision::new(tuple.image, tuple.preimages);
        if tuple.preimages.len() < 2 {
            return Err(Error::Validation(format!(
                "tuple for image {:#x} has fewer than two preimages",
                tuple.image
            )));
        }
        if tuple.preimages.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Validation("repeated preimage in tuple".into()));
        }
        if self.by_image.contains_key(&tuple.image) {
            return Err(Error::Validation(format!(
                "image {:#x} already in table",
                tuple.image
            )));
        }
        for &x in &tuple.preimages {
            let v = f.query(x)?;
            if v != tuple.image {
                return Err(Error::Validation(format!(
                    "f({x:#x}) = {v:#x}, not {:#x}",
                    tuple.image
                )));
            }
        }
        self.by_image.insert(tuple.image, self.entries.len());
        self.entries.push(tuple);
        Ok(())
    }

    pub fn contains_image(&self, u: u64) -> bool {
        self.by_image.contains_key(&u)
    }

    /// `I_C`.
    pub fn images(&self) -> BTreeSet<u64> {
        self.by_image.keys().copied().collect()
    }

    pub fn entries(&self) -> &[Multicollision] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.entries)?)
    }

    /// Re-validates every entry against `f` while loading.
    pub fn from_json(f: &FunctionTable, json: &str) -> Result<Self> {
        let entries: Vec<Multicollision> = serde_json::from_str(json)?;
        let mut table = CollisionTable::new();
        for e in entries {
            table.insert(f, e)?;
        }
        Ok(table)
    }
}

/// `f_C`: `f` with the full preimage closure of `I_C` removed from the domain
/// and `I_C` removed from the codomain.
#[derive(Debug, Clone)]
pub struct RestrictedFunction<'a> {
    base: &'a FunctionTable,
    excluded_preimages: BTreeSet<u64>,
    excluded_images: BTreeSet<u64>,
}

/// Builds `f_C`. `P_C` is computed by a full scan of the table.
pub fn restrict<'a>(f: &'a FunctionTable, table: &CollisionTable) -> Result<RestrictedFunction<'a>> {
    let r = closure(f, table);
    let half = f.params().domain_size() / 2;
    if r.excluded_preimages.len() as u64 >= half {
        return Err(Error::Capacity(format!(
            "|P_C| = {} reaches half the domain ({half})",
            r.excluded_preimages.len()
        )));
    }
    Ok(r)
}

/// `f_C` without the `|P_C| < 2^{n-1}` capacity check.
pub fn closure<'a>(f: &'a FunctionTable, table: &CollisionTable) -> RestrictedFunction<'a> {
    let excluded_images = table.images();
    let excluded_preimages: BTreeSet<u64> = (0..f.params().domain_size())
        .filter(|&x| excluded_images.contains(&f.image(x)))
        .collect();
    RestrictedFunction {
        base: f,
        excluded_preimages,
        excluded_images,
    }
}

impl<'a> RestrictedFunction<'a> {
    /// Unrestricted view of `f`.
    pub fn full(f: &'a FunctionTable) -> Self {
        RestrictedFunction {
            base: f,
            excluded_preimages: BTreeSet::new(),
            excluded_images: BTreeSet::new(),
        }
    }

    pub fn base(&self) -> &'a FunctionTable {
        self.base
    }

    pub fn excluded_preimages(&self) -> &BTreeSet<u64> {
        &self.excluded_preimages
    }

    pub fn excluded_images(&self) -> &BTreeSet<u64> {
        &self.excluded_images
    }

    pub fn contains(&self, x: u64) -> bool {
        x < self.base.params().domain_size() && !self.excluded_preimages.contains(&x)
    }

    /// `X \ P_C`, ascending.
    pub fn domain(&self) -> Vec<u64> {
        (0..self.base.params().domain_size())
            .filter(|x| !self.excluded_preimages.contains(x))
            .collect()
    }

    pub fn domain_size(&self) -> u64 {
        self.base.params().domain_size() - self.excluded_preimages.len() as u64
    }

    /// `|Y \ I_C|`.
    pub fn codomain_size(&self) -> u64 {
        self.base.params().codomain_size() - self.excluded_images.len() as u64
    }

    pub fn image(&self, x: u64) -> u64 {
        self.base.image(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairwise_groups(f: &FunctionTable) -> BTreeSet<(u64, Vec<u64>)> {
        let size = f.params().domain_size();
        let mut out = BTreeSet::new();
        for x in 0..size {
            let mut group = vec![];
            for y in 0..size {
                if f.image(x) == f.image(y) {
                    group.push(y);
                }
            }
            if group.len() >= 2 {
                out.insert((f.image(x), group));
            }
        }
        out
    }

    #[test]
    fn params_validation() {
        assert!(Params::new(4, 4, 4).is_ok());
        assert!(Params::new(4, 3, 0).is_err());
        assert!(Params::new(4, 9, 0).is_err());
        assert!(Params::new(4, 5, 4).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let p = Params::new(4, 4, 0).unwrap();
        let a = FunctionTable::generate(p, 7).unwrap();
        let b = FunctionTable::generate(p, 7).unwrap();
        assert_eq!(a, b);
        let tiny = FunctionTable::generate(Params::new(1, 1, 0).unwrap(), 3).unwrap();
        assert_eq!(tiny.table().len(), 2);
        assert!(tiny.table().iter().all(|&v| v < 2));
    }

    #[test]
    fn query_counts() {
        let f = FunctionTable::generate(Params::new(4, 5, 0).unwrap(), 1).unwrap();
        assert_eq!(f.query_count(), 0);
        let a = f.query(3).unwrap();
        let b = f.query(3).unwrap();
        assert_eq!(a, b);
        assert_eq!(f.query_count(), 2);
        for x in 0..16 {
            f.query(x).unwrap();
        }
        assert_eq!(f.query_count(), 18);
        assert!(matches!(f.query(16), Err(Error::Domain(_))));
        assert_eq!(f.query_count(), 18);
    }

    #[test]
    fn mean_pair_count_matches_birthday() {
        let p = Params::new(4, 5, 0).unwrap();
        let seeds = 10_000u64;
        let counts: Vec<f64> = (0..seeds)
            .map(|s| {
                let f = FunctionTable::generate(p, s).unwrap();
                enumerate_multicollisions(&f, None)
                    .iter()
                    .map(|t| t.pair_count() as f64)
                    .sum()
            })
            .collect();
        let mean = counts.iter().sum::<f64>() / seeds as f64;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (seeds - 1) as f64;
        let expected = 120.0 / 32.0;
        assert!(
            (mean - expected).abs() <= 3.0 * (var / seeds as f64).sqrt(),
            "mean {mean}"
        );
    }

    #[test]
    fn enumeration_edge_cases() {
        let p = Params::new(2, 2, 0).unwrap();
        let injective = FunctionTable::from_table(p, vec![0, 1, 2, 3]).unwrap();
        assert!(enumerate_multicollisions(&injective, None).is_empty());
        let constant = FunctionTable::from_table(p, vec![2, 2, 2, 2]).unwrap();
        let all = enumerate_multicollisions(&constant, None);
        assert_eq!(all, vec![Multicollision::new(2, vec![0, 1, 2, 3])]);
    }

    #[test]
    fn enumeration_matches_pairwise_scan() {
        for seed in 0..50 {
            let f = FunctionTable::generate(Params::new(4, 4, 0).unwrap(), seed).unwrap();
            let fast: BTreeSet<_> = enumerate_multicollisions(&f, None)
                .into_iter()
                .map(|t| (t.image, t.preimages))
                .collect();
            assert_eq!(fast, pairwise_groups(&f));
        }
    }

    #[test]
    fn table_insert_validates() {
        let p = Params::new(2, 2, 0).unwrap();
        let f = FunctionTable::from_table(p, vec![1, 1, 3, 1]).unwrap();
        let mut c = CollisionTable::new();
        c.insert(&f, Multicollision::new(1, vec![0, 3])).unwrap();
        assert!(c.contains_image(1));
        assert_eq!(f.query_count(), 2);
        assert!(c.insert(&f, Multicollision::new(1, vec![0, 1])).is_err());
        assert!(c.insert(&f, Multicollision::new(3, vec![2, 0])).is_err());
        assert!(c.insert(&f, Multicollision::new(3, vec![2])).is_err());
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn restriction_closure_exceeds_stored_tuple() {
        let p = Params::new(3, 3, 0).unwrap();
        let f = FunctionTable::from_table(p, vec![5, 5, 5, 0, 1, 2, 3, 4]).unwrap();
        let empty = restrict(&f, &CollisionTable::new()).unwrap();
        assert!(empty.excluded_preimages().is_empty());
        assert_eq!(empty.domain(), (0..8).collect::<Vec<_>>());

        let mut c = CollisionTable::new();
        c.insert(&f, Multicollision::new(5, vec![0, 2])).unwrap();
        let r = restrict(&f, &c).unwrap();
        assert_eq!(r.excluded_preimages().len(), 3);
        assert_eq!(r.domain(), vec![3, 4, 5, 6, 7]);
        assert_eq!(r.codomain_size(), 7);
        assert!(enumerate_multicollisions(&f, Some(&r)).is_empty());
    }

    #[test]
    fn restriction_capacity() {
        let p = Params::new(2, 2, 0).unwrap();
        let f = FunctionTable::from_table(p, vec![0, 0, 1, 2]).unwrap();
        let mut c = CollisionTable::new();
        c.insert(&f, Multicollision::new(0, vec![0, 1])).unwrap();
        assert!(matches!(restrict(&f, &c), Err(Error::Capacity(_))));
    }

    #[test]
    fn closure_soundness_exhaustive() {
        for seed in 0..20 {
            let f = FunctionTable::generate(Params::new(6, 7, 0).unwrap(), seed).unwrap();
            let all = enumerate_multicollisions(&f, None);
            let mut c = CollisionTable::new();
            for t in all.iter().take(2) {
                c.insert(&f, Multicollision::new(t.image, t.preimages[..2].to_vec()))
                    .unwrap();
            }
            let r = restrict(&f, &c).unwrap();
            for x in 0..64 {
                assert_eq!(
                    r.excluded_preimages().contains(&x),
                    c.images().contains(&f.image(x))
                );
            }
        }
    }

    #[test]
    fn text_and_json_formats() {
        let f = FunctionTable::generate(Params::new(3, 5, 0).unwrap(), 11).unwrap();
        let text = f.to_text();
        assert!(text.starts_with("n=3 m=5\n"));
        assert_eq!(text.lines().count(), 9);
        let back = FunctionTable::from_text(&text).unwrap();
        assert_eq!(back.table(), f.table());

        let p = Params::new(2, 2, 0).unwrap();
        let g = FunctionTable::from_table(p, vec![1, 1, 3, 1]).unwrap();
        let mut c = CollisionTable::new();
        c.insert(&g, Multicollision::new(1, vec![3, 0])).unwrap();
        let json = c.to_json().unwrap();
        assert_eq!(json, r#"[{"image":1,"preimages":[0,3]}]"#);
        assert_eq!(CollisionTable::from_json(&g, &json).unwrap(), c);
    }
}
