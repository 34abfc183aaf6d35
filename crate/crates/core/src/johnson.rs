//! Johnson graphs `J(X, R)`: neighbors, spectral gap, the edge-space walk
//! operator `Ref_B · Ref_A`, and vertex data with multicollision counts.

use std::collections::{BTreeMap, HashMap};

use itertools::Itertools;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::oracle::{group_multicollisions, Multicollision, RestrictedFunction};
use crate::statevector::BasisKey;
use crate::State;

/// Largest vertex count accepted by [`JohnsonGraph::spectral_gap`].
pub const MAX_GAP_VERTICES: u64 = 5000;
/// Largest edge-space dimension accepted by
/// [`JohnsonGraph::walk_operator_spectrum`].
pub const MAX_EDGE_DIMENSION: u64 = 20_000;
/// Largest vertex set that [`VertexSpace`] will enumerate.
pub const MAX_ENUMERATED_VERTICES: u64 = 200_000;

/// `C(n, r)`, saturating at `u64::MAX`.
pub fn binomial(n: u64, r: u64) -> u64 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JohnsonGraph {
    ground_set: Vec<u64>,
    subset_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WalkSpectrum {
    pub delta: f64,
    /// Smallest nonzero eigenphase of `Ref_B · Ref_A`.
    pub phase_gap: f64,
    pub marked_fraction: f64,
    /// Eigenphases in `[0, π]` of the walk operator restricted to `A + B`.
    pub eigenphases: Vec<f64>,
    /// Every vertex is marked, so there is nothing to search for.
    pub degenerate: bool,
}

/// One row of the spectrum report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumRow {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "R")]
    pub r: usize,
    pub delta_eigen: f64,
    pub delta_closed: f64,
    pub phase_gap: f64,
    pub sqrt_delta: f64,
}

impl JohnsonGraph {
    pub fn new(ground_set: Vec<u64>, subset_size: usize) -> Result<Self> {
        let mut ground_set = ground_set;
        ground_set.sort_unstable();
        ground_set.dedup();
        let n = ground_set.len();
        if subset_size == 0 || subset_size >= n {
            return Err(Error::Parameter(format!(
                "Johnson graph needs 0 < R < N, got R={subset_size} N={n}"
            )));
        }
        Ok(JohnsonGraph {
            ground_set,
            subset_size,
        })
    }

    /// `J({0..n}, r)`.
    pub fn on_range(n: usize, r: usize) -> Result<Self> {
        Self::new((0..n as u64).collect(), r)
    }

    pub fn ground_set(&self) -> &[u64] {
        &self.ground_set
    }

    pub fn subset_size(&self) -> usize {
        self.subset_size
    }

    pub fn vertex_count(&self) -> u64 {
        binomial(self.ground_set.len() as u64, self.subset_size as u64)
    }

    pub fn degree(&self) -> usize {
        self.subset_size * (self.ground_set.len() - self.subset_size)
    }

    /// `N / (R (N - R))`.
    pub fn closed_form_gap(&self) -> f64 {
        let n = self.ground_set.len() as f64;
        let r = self.subset_size as f64;
        n / (r * (n - r))
    }

    /// All vertices in lexicographic order.
    pub fn vertices(&self) -> Vec<Vec<u64>> {
        self.ground_set
            .iter()
            .copied()
            .combinations(self.subset_size)
            .collect()
    }

    fn check_vertex(&self, vertex: &[u64]) -> Result<()> {
        let sorted = vertex.windows(2).all(|w| w[0] < w[1]);
        let inside = vertex.iter().all(|x| self.ground_set.binary_search(x).is_ok());
        if vertex.len() != self.subset_size || !sorted || !inside {
            return Err(Error::Domain(format!(
                "{vertex:?} is not a sorted {}-subset of the ground set",
                self.subset_size
            )));
        }
        Ok(())
    }

    /// Every subset obtained by swapping one member for one non-member.
    pub fn neighbors(&self, vertex: &[u64]) -> Result<Vec<Vec<u64>>> {
        self.check_vertex(vertex)?;
        let outside: Vec<u64> = self
            .ground_set
            .iter()
            .copied()
            .filter(|x| vertex.binary_search(x).is_err())
            .collect();
        let mut out = Vec::with_capacity(self.degree());
        for (i, _) in vertex.iter().enumerate() {
            for &y in &outside {
                let mut v: Vec<u64> = vertex.to_vec();
                v[i] = y;
                v.sort_unstable();
                out.push(v);
            }
        }
        Ok(out)
    }

    fn adjacency_lists(&self) -> (Vec<Vec<u64>>, Vec<Vec<usize>>) {
        let vertices = self.vertices();
        let index: HashMap<&[u64], usize> = vertices
            .iter()
            .enumerate()
            .map(|(i, v)| (v.as_slice(), i))
            .collect();
        let lists = vertices
            .iter()
            .map(|v| {
                self.neighbors(v)
                    .expect("enumerated vertex")
                    .iter()
                    .map(|w| index[w.as_slice()])
                    .collect()
            })
            .collect();
        (vertices, lists)
    }

    /// `1 - λ₂` of the degree-normalized adjacency matrix, with `λ₂` the
    /// second-largest signed eigenvalue.
    pub fn spectral_gap(&self) -> Result<f64> {
        let count = self.vertex_count();
        if count > MAX_GAP_VERTICES {
            return Err(Error::Capacity(format!(
                "{count} vertices exceed the dense eigensolve limit {MAX_GAP_VERTICES}"
            )));
        }
        let (_, lists) = self.adjacency_lists();
        let n = lists.len();
        let d = self.degree() as f64;
        let mut p = DMatrix::<f64>::zeros(n, n);
        for (i, nb) in lists.iter().enumerate() {
            for &j in nb {
                p[(i, j)] = 1.0 / d;
            }
        }
        let mut eig: Vec<f64> = SymmetricEigen::new(p).eigenvalues.iter().copied().collect();
        eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
        Ok(1.0 - eig[1])
    }

    /// Builds `W = Ref_B · Ref_A` on the edge space and returns its
    /// eigenphases.
    ///
    /// `A = span(|x>|p_x>)` and `B = span(|p_x>|x>)` over ordered pairs
    /// `(vertex, neighbor)`. `W` acts as the identity on `(A + B)^⊥`, so the
    /// nonzero phases are found from `W` restricted to an orthonormal basis
    /// of `A + B`. `W` is real orthogonal there, and the symmetric part
    /// `(W + Wᵀ)/2` has eigenvalues `cos φ`.
    pub fn walk_operator_spectrum(&self, marked: impl Fn(&[u64]) -> bool) -> Result<WalkSpectrum> {
        let count = self.vertex_count();
        let d = self.degree();
        let edge_dim = count.saturating_mul(d as u64);
        if edge_dim > MAX_EDGE_DIMENSION {
            return Err(Error::Capacity(format!(
                "edge space of dimension {edge_dim} exceeds {MAX_EDGE_DIMENSION}"
            )));
        }
        let (vertices, lists) = self.adjacency_lists();
        let nv = vertices.len();
        let edge_dim = nv * d;
        let amp = 1.0 / (d as f64).sqrt();

        // position of vertex x inside the neighbor list of y
        let mut back: HashMap<(usize, usize), usize> = HashMap::new();
        for (y, nb) in lists.iter().enumerate() {
            for (j, &x) in nb.iter().enumerate() {
                back.insert((y, x), j);
            }
        }
        let a_support: Vec<Vec<usize>> = (0..nv).map(|x| (0..d).map(|j| x * d + j).collect()).collect();
        let b_support: Vec<Vec<usize>> = (0..nv)
            .map(|x| lists[x].iter().map(|&y| y * d + back[&(y, x)]).collect())
            .collect();

        let reflect = |support: &[Vec<usize>], v: &mut Vec<f64>| {
            let coeffs: Vec<f64> = support
                .iter()
                .map(|s| s.iter().map(|&e| v[e]).sum::<f64>() * amp)
                .collect();
            for e in v.iter_mut() {
                *e = -*e;
            }
            for (s, c) in support.iter().zip(coeffs) {
                for &e in s {
                    v[e] += 2.0 * c * amp;
                }
            }
        };

        // orthonormal basis of A + B by modified Gram-Schmidt
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(2 * nv);
        for support in a_support.iter().chain(b_support.iter()) {
            let mut v = vec![0.0; edge_dim];
            for &e in support {
                v[e] = amp;
            }
            for _ in 0..2 {
                for q in &basis {
                    let dot: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                    for (x, qx) in v.iter_mut().zip(q) {
                        *x -= dot * qx;
                    }
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-8 {
                v.iter_mut().for_each(|x| *x /= norm);
                basis.push(v);
            }
        }

        let r = basis.len();
        let mut w = DMatrix::<f64>::zeros(r, r);
        for j in 0..r {
            let mut v = basis[j].clone();
            reflect(&a_support, &mut v);
            reflect(&b_support, &mut v);
            for i in 0..r {
                w[(i, j)] = basis[i].iter().zip(&v).map(|(a, b)| a * b).sum();
            }
        }
        let sym = (&w + w.transpose()) * 0.5;
        let mut phases: Vec<f64> = SymmetricEigen::new(sym)
            .eigenvalues
            .iter()
            .map(|c| c.clamp(-1.0, 1.0).acos())
            .collect();
        phases.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let phase_gap = phases
            .iter()
            .copied()
            .find(|&p| p > 1e-6)
            .ok_or_else(|| Error::Contract("walk operator has no nonzero phase".into()))?;

        let marked_count = vertices.iter().filter(|v| marked(v)).count();
        Ok(WalkSpectrum {
            delta: self.spectral_gap()?,
            phase_gap,
            marked_fraction: marked_count as f64 / nv as f64,
            eigenphases: phases,
            degenerate: marked_count == nv,
        })
    }

    pub fn spectrum_row(&self) -> Result<SpectrumRow> {
        let delta = self.spectral_gap()?;
        let spectrum = self.walk_operator_spectrum(|_| false)?;
        Ok(SpectrumRow {
            n: self.ground_set.len(),
            r: self.subset_size,
            delta_eigen: delta,
            delta_closed: self.closed_form_gap(),
            phase_gap: spectrum.phase_gap,
            sqrt_delta: delta.sqrt(),
        })
    }
}

/// Classical stand-in for the augmented radix tree of a vertex: the sorted
/// subset, its images and the multicollision index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VertexData {
    pub subset: Vec<u64>,
    pub images: BTreeMap<u64, u64>,
    pub multicollisions: Vec<Multicollision>,
    pub count: usize,
}

pub fn vertex_data(f: &RestrictedFunction<'_>, subset: &[u64]) -> Result<VertexData> {
    let mut sorted = subset.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Domain("vertex has repeated elements".into()));
    }
    if let Some(x) = sorted.iter().find(|&&x| !f.contains(x)) {
        return Err(Error::Domain(format!("{x} is outside the restricted domain")));
    }
    let images = sorted.iter().map(|&x| (x, f.image(x))).collect();
    let multicollisions = group_multicollisions(sorted.iter().copied(), |x| f.image(x));
    Ok(VertexData {
        count: multicollisions.len(),
        subset: sorted,
        images,
        multicollisions,
    })
}

/// One vertex of an enumerated [`VertexSpace`].
#[derive(Debug, Clone)]
pub struct VertexEntry {
    pub key: BasisKey,
    pub subset: Vec<u64>,
    pub multicollisions: Vec<Multicollision>,
}

impl VertexEntry {
    pub fn count(&self) -> usize {
        self.multicollisions.len()
    }
}

/// Every `R`-subset of a domain together with its multicollision index.
#[derive(Debug, Clone)]
pub struct VertexSpace {
    domain: Vec<u64>,
    size: usize,
    entries: Vec<VertexEntry>,
    index: HashMap<BasisKey, usize>,
}

impl VertexSpace {
    pub fn new(domain: Vec<u64>, size: usize, image: impl Fn(u64) -> u64) -> Result<Self> {
        let mut domain = domain;
        domain.sort_unstable();
        domain.dedup();
        if size > domain.len() {
            return Err(Error::Parameter(format!(
                "vertex size {size} exceeds domain size {}",
                domain.len()
            )));
        }
        let count = binomial(domain.len() as u64, size as u64);
        if count > MAX_ENUMERATED_VERTICES {
            return Err(Error::Capacity(format!(
                "C({}, {size}) = {count} vertices exceed {MAX_ENUMERATED_VERTICES}",
                domain.len()
            )));
        }
        let entries: Vec<VertexEntry> = domain
            .iter()
            .copied()
            .combinations(size)
            .map(|subset| VertexEntry {
                key: BasisKey::sorted_subset(&subset),
                multicollisions: group_multicollisions(subset.iter().copied(), &image),
                subset,
            })
            .collect();
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.key.clone(), i))
            .collect();
        Ok(VertexSpace {
            domain,
            size,
            entries,
            index,
        })
    }

    pub fn for_restriction(f: &RestrictedFunction<'_>, size: usize) -> Result<Self> {
        Self::new(f.domain(), size, |x| f.image(x))
    }

    pub fn domain(&self) -> &[u64] {
        &self.domain
    }

    pub fn vertex_size(&self) -> usize {
        self.size
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[VertexEntry] {
        &self.entries
    }

    pub fn entry(&self, key: &BasisKey) -> Option<&VertexEntry> {
        self.index.get(key).map(|&i| &self.entries[i])
    }

    /// Multicollision count of the vertex under `key`, ignoring any
    /// register suffix.
    pub fn count_of(&self, key: &BasisKey) -> Option<usize> {
        match self.index.get(key) {
            Some(&i) => Some(self.entries[i].count()),
            None => self.entry(&key.subset_part()?).map(|e| e.count()),
        }
    }

    pub fn max_count(&self) -> usize {
        self.entries.iter().map(|e| e.count()).max().unwrap_or(0)
    }

    /// `|V_z|` for every count `z` that occurs.
    pub fn histogram(&self) -> BTreeMap<usize, u64> {
        let mut h = BTreeMap::new();
        for e in &self.entries {
            *h.entry(e.count()).or_insert(0) += 1;
        }
        h
    }

    pub fn class_size(&self, pred: impl Fn(usize) -> bool) -> u64 {
        self.entries.iter().filter(|e| pred(e.count())).count() as u64
    }

    pub fn class_keys(&self, pred: impl Fn(usize) -> bool) -> Vec<&BasisKey> {
        self.entries
            .iter()
            .filter(|e| pred(e.count()))
            .map(|e| &e.key)
            .collect()
    }

    /// Uniform superposition over all vertices.
    pub fn uniform_state(&self) -> Result<State> {
        State::uniform(self.entries.iter().map(|e| e.key.clone()))
    }

    /// Uniform superposition over the vertices whose count satisfies `pred`.
    pub fn class_state(&self, pred: impl Fn(usize) -> bool) -> Result<State> {
        State::uniform(
            self.entries
                .iter()
                .filter(|e| pred(e.count()))
                .map(|e| e.key.clone()),
        )
    }

    /// Mean multicollision count over all vertices.
    pub fn mean_count(&self) -> f64 {
        self.entries.iter().map(|e| e.count() as f64).sum::<f64>() / self.entries.len() as f64
    }
}
