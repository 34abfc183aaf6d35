//! Dummy-padded multicollision extraction and interval correction.
//!
//! Every vertex `V` with `z ≤ y` multicollisions gets an extraction register
//! holding one of its `z` tuples or one of the dummies `d_{z+1} .. d_y`, all
//! with amplitude `1/√y`. Measuring that register leaves a state that is
//! uniform over a vertex family again, whichever outcome occurs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::amplify::{flip, FlipStats, Want};
use crate::error::{Error, Result};
use crate::johnson::VertexSpace;
use crate::oracle::{closure, CollisionTable, FunctionTable, Multicollision, RestrictedFunction};
use crate::statevector::BasisKey;
use crate::State;

const TUPLE_TAG: u8 = 0x01;
const DUMMY_TAG: u8 = 0x02;

/// Upper bound on measure/flip rounds in [`steer`].
const MAX_STEER_ROUNDS: usize = 10_000;

/// Class fraction below which the constant-proportion hypothesis is
/// reported as failing.
pub const PROPORTION_FLOOR: f64 = 0.01;

/// Closed count interval `[lo, hi]`; `hi = None` is unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Interval {
    pub lo: usize,
    pub hi: Option<usize>,
}

impl Interval {
    pub fn new(lo: usize, hi: Option<usize>) -> Result<Self> {
        if matches!(hi, Some(h) if h < lo) {
            return Err(Error::Parameter(format!("empty interval [{lo}, {hi:?}]")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn closed(lo: usize, hi: usize) -> Result<Self> {
        Self::new(lo, Some(hi))
    }

    pub fn at_least(lo: usize) -> Self {
        Interval { lo, hi: None }
    }

    pub fn contains(&self, z: usize) -> bool {
        z >= self.lo && self.hi.is_none_or(|h| z <= h)
    }

    pub fn counts(&self, max: usize) -> BTreeSet<usize> {
        (self.lo..=self.hi.unwrap_or(max).min(max)).collect()
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.hi {
            Some(h) => write!(f, "[{}, {h}]", self.lo),
            None => write!(f, "[{}, inf)", self.lo),
        }
    }
}

/// Content of the extraction register.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Register {
    Tuple(Multicollision),
    Dummy(usize),
}

impl Register {
    pub fn encode(&self) -> Vec<u8> {
        match self {
            Register::Tuple(t) => {
                let mut b = vec![TUPLE_TAG];
                b.extend_from_slice(&(t.image as u32).to_be_bytes());
                b.extend_from_slice(&(t.preimages.len() as u16).to_be_bytes());
                for &x in &t.preimages {
                    b.extend_from_slice(&(x as u32).to_be_bytes());
                }
                b
            }
            Register::Dummy(i) => {
                let mut b = vec![DUMMY_TAG];
                b.extend_from_slice(&(*i as u32).to_be_bytes());
                b
            }
        }
    }

    pub fn decode(bytes: &[u8]) -> Option<Register> {
        let word = |at: usize| -> Option<u64> {
            Some(u32::from_be_bytes(bytes.get(at..at + 4)?.try_into().ok()?) as u64)
        };
        match *bytes.first()? {
            TUPLE_TAG => {
                let image = word(1)?;
                let len = u16::from_be_bytes(bytes.get(5..7)?.try_into().ok()?) as usize;
                let pre = (0..len).map(|j| word(7 + 4 * j)).collect::<Option<Vec<_>>>()?;
                Some(Register::Tuple(Multicollision::new(image, pre)))
            }
            DUMMY_TAG => Some(Register::Dummy(word(1)? as usize)),
            _ => None,
        }
    }
}

/// `V^{R,C}_{x,y}`: `R`-subsets of `X \ P_C` with a multicollision count in
/// `[x, y]`.
#[derive(Debug, Clone)]
pub struct VertexFamily<'a> {
    restriction: RestrictedFunction<'a>,
    table: CollisionTable,
    space: Arc<VertexSpace>,
    interval: Interval,
}

impl<'a> VertexFamily<'a> {
    /// Restricts `f` by `table` and enumerates all `size`-subsets of the
    /// remaining domain.
    pub fn new(f: &'a FunctionTable, table: CollisionTable, size: usize, interval: Interval) -> Result<Self> {
        let restriction = closure(f, &table);
        let space = Arc::new(VertexSpace::for_restriction(&restriction, size)?);
        Ok(VertexFamily {
            restriction,
            table,
            space,
            interval,
        })
    }

    pub fn from_parts(
        restriction: RestrictedFunction<'a>,
        table: CollisionTable,
        space: Arc<VertexSpace>,
        interval: Interval,
    ) -> Self {
        VertexFamily {
            restriction,
            table,
            space,
            interval,
        }
    }

    pub fn with_interval(&self, interval: Interval) -> Self {
        VertexFamily {
            interval,
            ..self.clone()
        }
    }

    pub fn restriction(&self) -> &RestrictedFunction<'a> {
        &self.restriction
    }

    pub fn table(&self) -> &CollisionTable {
        &self.table
    }

    pub fn space(&self) -> &Arc<VertexSpace> {
        &self.space
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    pub fn vertex_size(&self) -> usize {
        self.space.vertex_size()
    }

    pub fn contains(&self, key: &BasisKey) -> bool {
        self.space
            .count_of(key)
            .is_some_and(|z| self.interval.contains(z))
    }

    pub fn members(&self) -> Vec<&BasisKey> {
        self.space.class_keys(|z| self.interval.contains(z))
    }

    pub fn len(&self) -> u64 {
        self.space.class_size(|z| self.interval.contains(z))
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Uniform superposition over the family.
    pub fn state(&self) -> Result<State> {
        self.space.class_state(|z| self.interval.contains(z))
    }

    /// Largest amplitude deviation of `state` from the family's uniform
    /// superposition.
    pub fn deviation(&self, state: &State) -> f64 {
        state.uniformity_deviation(self.members())
    }
}

/// Attaches the padded extraction register with bound `y`.
pub fn pad_and_attach(state: &State, space: &VertexSpace, y: usize) -> Result<State> {
    if y == 0 {
        return Err(Error::Precondition("padding bound y must be at least 1".into()));
    }
    let amp = 1.0 / (y as f64).sqrt();
    let mut out = Vec::new();
    for (key, a) in state.iter() {
        let entry = space
            .entry(key)
            .ok_or_else(|| Error::Contract(format!("{key:?} is not a vertex of the space")))?;
        let z = entry.count();
        if z > y {
            return Err(Error::Contract(format!(
                "vertex holds {z} tuples, above the bound {y}"
            )));
        }
        for t in &entry.multicollisions {
            out.push((key.with_register(&Register::Tuple(t.clone()).encode()), a * amp));
        }
        for i in z + 1..=y {
            out.push((key.with_register(&Register::Dummy(i).encode()), a * amp));
        }
    }
    State::from_amplitudes(out)
}

/// The unpadded register `Σ_t (1/√z)|V>|t>`, whose collapse is not uniform.
pub fn attach_unpadded(state: &State, space: &VertexSpace) -> Result<State> {
    let mut out = Vec::new();
    for (key, a) in state.iter() {
        let entry = space
            .entry(key)
            .ok_or_else(|| Error::Contract(format!("{key:?} is not a vertex of the space")))?;
        let z = entry.count();
        if z == 0 {
            return Err(Error::Contract("vertex without multicollisions".into()));
        }
        let amp = 1.0 / (z as f64).sqrt();
        for t in &entry.multicollisions {
            out.push((key.with_register(&Register::Tuple(t.clone()).encode()), a * amp));
        }
    }
    State::from_amplitudes(out)
}

fn register_of(key: &BasisKey) -> Register {
    key.decode_subset()
        .and_then(|(_, reg)| Register::decode(reg))
        .expect("padded keys carry a register")
}

/// Vertex register of a collapsed branch: the subset minus the tuple for a
/// tuple outcome, the bare subset for a dummy.
fn strip(collapsed: &State, outcome: &Register) -> Result<State> {
    match outcome {
        Register::Tuple(t) => collapsed.relabel(|k| {
            let (points, _) = k.decode_subset().expect("subset key");
            let rest: Vec<u64> = points
                .into_iter()
                .filter(|x| t.preimages.binary_search(x).is_err())
                .collect();
            BasisKey::sorted_subset(&rest)
        }),
        Register::Dummy(_) => collapsed.relabel(|k| k.subset_part().expect("subset key")),
    }
}

fn finite_bound(family: &VertexFamily<'_>) -> Result<usize> {
    family.interval.hi.ok_or_else(|| {
        Error::Precondition("extraction needs a finite upper bound; reframe the family first".into())
    })
}

fn check_uniform(state: &State, family: &VertexFamily<'_>) -> Result<()> {
    let dev = family.deviation(state);
    if dev > 1e-9 {
        return Err(Error::Contract(format!(
            "state deviates from uniform over {} by {dev:.3e}",
            family.interval
        )));
    }
    Ok(())
}

/// Every outcome of the padded measurement with its probability and the
/// collapsed vertex state.
pub fn outcome_law(state: &State, family: &VertexFamily<'_>) -> Result<BTreeMap<Register, (f64, State)>> {
    let y = finite_bound(family)?;
    check_uniform(state, family)?;
    let padded = pad_and_attach(state, &family.space, y)?;
    padded
        .outcome_distribution(register_of)
        .into_iter()
        .map(|(reg, (p, collapsed))| {
            let s = strip(&collapsed, &reg)?;
            Ok((reg, (p, s)))
        })
        .collect()
}

/// Result of one padded measurement.
#[derive(Debug, Clone)]
pub struct ExtractionOutcome<'a> {
    pub register: Register,
    pub collapsed: State,
    pub new_family: VertexFamily<'a>,
}

impl ExtractionOutcome<'_> {
    pub fn tuple(&self) -> Option<&Multicollision> {
        match &self.register {
            Register::Tuple(t) => Some(t),
            Register::Dummy(_) => None,
        }
    }

    pub fn dummy_index(&self) -> Option<usize> {
        match self.register {
            Register::Dummy(i) => Some(i),
            Register::Tuple(_) => None,
        }
    }
}

/// Family reached after a given outcome.
pub fn family_after<'a>(family: &VertexFamily<'a>, outcome: &Register) -> Result<VertexFamily<'a>> {
    let y = finite_bound(family)?;
    let x = family.interval.lo;
    match outcome {
        Register::Tuple(t) => {
            let mut table = family.table.clone();
            table.insert(family.restriction.base(), t.clone())?;
            let size = family
                .vertex_size()
                .checked_sub(t.size())
                .ok_or_else(|| Error::Contract("tuple larger than the vertex".into()))?;
            let interval = Interval::closed(x.saturating_sub(1), y - 1)?;
            VertexFamily::new(family.restriction.base(), table, size, interval)
        }
        Register::Dummy(i) => Ok(family.with_interval(Interval::closed(x, i - 1)?)),
    }
}

/// Attaches the padded register to a uniform state over `family` and
/// measures it.
pub fn extract_once<'a, R: Rng + ?Sized>(
    state: &State,
    family: &VertexFamily<'a>,
    rng: &mut R,
) -> Result<ExtractionOutcome<'a>> {
    let y = finite_bound(family)?;
    check_uniform(state, family)?;
    let padded = pad_and_attach(state, &family.space, y)?;
    let (register, collapsed) = padded.measure(register_of, rng);
    let collapsed = strip(&collapsed, &register)?;
    let new_family = family_after(family, &register)?;
    Ok(ExtractionOutcome {
        register,
        collapsed,
        new_family,
    })
}

/// Fractions of the vertex space falling in each partition cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProportionReport {
    pub fractions: Vec<f64>,
    pub min: f64,
    pub ok: bool,
}

pub fn check_proportions(space: &VertexSpace, partition: &[Interval]) -> ProportionReport {
    let total = space.len() as f64;
    let fractions: Vec<f64> = partition
        .iter()
        .map(|c| space.class_size(|z| c.contains(z)) as f64 / total)
        .collect();
    let min = fractions.iter().copied().fold(1.0, f64::min);
    ProportionReport {
        ok: min >= PROPORTION_FLOOR,
        fractions,
        min,
    }
}

/// Work done by [`steer`] and the procedures built on it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SteerStats {
    pub flips: FlipStats,
    /// Partition-class measurements.
    pub measurements: u64,
    /// Flips to a complementary count set.
    pub transitions: u64,
}

impl SteerStats {
    pub fn absorb(&mut self, other: &SteerStats) {
        self.flips.absorb(&other.flips);
        self.measurements += other.measurements;
        self.transitions += other.transitions;
    }

    /// Diffusion iterations across all flips.
    pub fn iterations(&self) -> u64 {
        self.flips.iterations_used
    }
}

/// Drives a state that is uniform over the vertices whose count lies in
/// `current` to the uniform state over `target`, by alternately measuring
/// which `partition` cell the count lies in and flipping to the complement
/// of the current count set. `target` must be a union of partition cells.
pub fn steer<R: Rng + ?Sized>(
    state: &State,
    space: &VertexSpace,
    current: &BTreeSet<usize>,
    partition: &[Interval],
    target: Interval,
    rng: &mut R,
) -> Result<(State, SteerStats)> {
    let hist = space.histogram();
    let populated = |s: &BTreeSet<usize>| -> BTreeSet<usize> {
        s.iter().copied().filter(|z| hist.contains_key(z)).collect()
    };
    let max = space.max_count();
    let goal = populated(&target.counts(max));
    if goal.is_empty() {
        return Err(Error::ImpossibleTarget(format!(
            "no vertex has a count in {target}"
        )));
    }
    let mut set = populated(current);
    let mut state = state.clone();
    let mut stats = SteerStats::default();
    let axis = space.uniform_state()?;
    let cell_of = |z: usize| partition.iter().position(|c| c.contains(z));

    for _ in 0..MAX_STEER_ROUNDS {
        if set == goal {
            return Ok((state, stats));
        }
        let (cell, collapsed) = state.measure(|k| space.count_of(k).and_then(cell_of), rng);
        stats.measurements += 1;
        state = collapsed;
        let cell = cell.ok_or_else(|| Error::Contract("count outside the partition".into()))?;
        set.retain(|&z| partition[cell].contains(z));
        if set == goal {
            return Ok((state, stats));
        }
        let inside = set.clone();
        let (flipped, s) = flip(
            &state,
            |k: &BasisKey| space.count_of(k).is_some_and(|z| !inside.contains(&z)),
            &axis,
            Want::Good,
            rng,
        )?;
        stats.flips.absorb(&s);
        stats.transitions += 1;
        state = flipped;
        set = hist.keys().copied().filter(|z| !inside.contains(z)).collect();
    }
    Err(Error::Contract(format!(
        "interval steering did not settle within {MAX_STEER_ROUNDS} rounds"
    )))
}

/// Returns a state uniform over `family` re-bounded to `target`, starting
/// from a state uniform over `family`. Works through the partition
/// `[0, x)`, `[x, y]`, `(y, ∞)` of `target = [x, y]`.
pub fn correct_interval<'a, R: Rng + ?Sized>(
    state: &State,
    family: &VertexFamily<'a>,
    target: Interval,
    rng: &mut R,
) -> Result<(State, VertexFamily<'a>, SteerStats)> {
    check_uniform(state, family)?;
    let mut partition = Vec::new();
    if target.lo > 0 {
        partition.push(Interval::closed(0, target.lo - 1)?);
    }
    partition.push(target);
    if let Some(h) = target.hi {
        partition.push(Interval::at_least(h + 1));
    }
    let max = family.space.max_count();
    let (s, stats) = steer(
        state,
        &family.space,
        &family.interval.counts(max),
        &partition,
        target,
        rng,
    )?;
    Ok((s, family.with_interval(target), stats))
}

/// One line of the extraction trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEvent {
    pub event: &'static str,
    pub image: Option<u64>,
    pub preimages: Option<Vec<u64>>,
    pub interval_before: Interval,
    pub interval_after: Interval,
    pub iterations: u64,
}

impl TraceEvent {
    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Result of [`extract_tuple`].
#[derive(Debug, Clone)]
pub struct TupleExtraction<'a> {
    pub tuple: Multicollision,
    pub state: State,
    pub family: VertexFamily<'a>,
    pub stats: SteerStats,
    pub extract_calls: u64,
    pub trace: Vec<TraceEvent>,
}

/// Repeats padded measurements, correcting the interval after each dummy,
/// until a tuple comes out.
pub fn extract_tuple<'a, R: Rng + ?Sized>(
    state: &State,
    family: &VertexFamily<'a>,
    rng: &mut R,
) -> Result<TupleExtraction<'a>> {
    finite_bound(family)?;
    if family.interval.lo == 0 {
        return Err(Error::Precondition(
            "tuple extraction needs x ≥ 1 so every vertex holds a tuple".into(),
        ));
    }
    let target = family.interval;
    let mut state = state.clone();
    let mut stats = SteerStats::default();
    let mut trace = Vec::new();
    let mut calls = 0;
    loop {
        calls += 1;
        let out = extract_once(&state, family, rng)?;
        match out.register {
            Register::Tuple(t) => {
                trace.push(TraceEvent {
                    event: "tuple",
                    image: Some(t.image),
                    preimages: Some(t.preimages.clone()),
                    interval_before: target,
                    interval_after: out.new_family.interval,
                    iterations: 0,
                });
                return Ok(TupleExtraction {
                    tuple: t,
                    state: out.collapsed,
                    family: out.new_family,
                    stats,
                    extract_calls: calls,
                    trace,
                });
            }
            Register::Dummy(_) => {
                let (s, _, st) = correct_interval(&out.collapsed, &out.new_family, target, rng)?;
                trace.push(TraceEvent {
                    event: "dummy",
                    image: None,
                    preimages: None,
                    interval_before: out.new_family.interval,
                    interval_after: target,
                    iterations: st.iterations(),
                });
                stats.absorb(&st);
                state = s;
            }
        }
    }
}
