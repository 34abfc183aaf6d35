//! The chained walk: alternate extraction of multicollisions from the live
//! vertex superposition with walk steps that re-center it on a count
//! interval, over a shrinking restricted function.
//!
//! Diffusions are simulated exactly by reflecting about the uniform vertex
//! state, while the ledger charges what a quantum walk would spend.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::extraction::{
    check_proportions, extract_tuple, steer, Interval, SteerStats, TraceEvent, VertexFamily,
};
use crate::oracle::{CollisionTable, FunctionTable, Multicollision, Params};
use crate::stats::{interval_width, IntervalPlan};
use crate::State;

/// Deviation from uniform above which a step is reported as broken.
pub const UNIFORMITY_TOLERANCE: f64 = 1e-9;

/// Slack allowed above the optimal memory exponent `(2k + m)/3`.
pub const ELL_SLACK: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainConfig {
    pub params: Params,
    /// Memory exponent: the initial vertex size is `2^ell`.
    pub ell: u32,
    pub seed: u64,
    pub max_outer_iterations: Option<u64>,
    /// Number of tuples to find; `2^k` when unset.
    pub target_tuples: Option<u64>,
    /// Initial vertex size overriding `2^ell`.
    pub vertex_size: Option<usize>,
}

impl ChainConfig {
    pub fn new(params: Params, ell: u32, seed: u64) -> Self {
        ChainConfig {
            params,
            ell,
            seed,
            max_outer_iterations: None,
            target_tuples: None,
            vertex_size: None,
        }
    }

    pub fn vertex_size(&self) -> usize {
        self.vertex_size.unwrap_or(1usize << self.ell.min(63))
    }

    pub fn target(&self) -> u64 {
        self.target_tuples.unwrap_or(self.params.target_tuples())
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.params;
        let r = self.vertex_size();
        if r < 2 {
            return Err(Error::Parameter(format!("vertex size {r} below 2")));
        }
        if r as u64 >= p.domain_size() {
            return Err(Error::Parameter(format!(
                "vertex size {r} must be below the domain size {}",
                p.domain_size()
            )));
        }
        if self.vertex_size.is_none() && self.ell as f64 > (2 * p.k + p.m) as f64 / 3.0 + ELL_SLACK {
            return Err(Error::Parameter(format!(
                "ell = {} exceeds (2k+m)/3 + {ELL_SLACK}",
                self.ell
            )));
        }
        if self.target() == 0 {
            return Err(Error::Parameter("target tuple count is zero".into()));
        }
        Ok(())
    }

    /// `max(⌈target·2^{m/2}/R⌉, target)`: a desk-scale iteration may yield a
    /// single tuple, so the bound never drops below the request.
    pub fn loop_bound(&self) -> u64 {
        if let Some(b) = self.max_outer_iterations {
            return b;
        }
        let t = self.target() as f64;
        let walk = (t * 2f64.powf(self.params.m as f64 / 2.0) / self.vertex_size() as f64).ceil();
        (walk as u64).max(self.target())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CostLedger {
    pub setup_calls: u64,
    /// Queries spent loading vertices, `R` per setup.
    pub setup_queries: u64,
    pub update_calls: u64,
    pub check_calls: u64,
    pub oracle_queries: u64,
    /// Queries spent validating output tuples against `O_f`.
    pub verification_queries: u64,
    pub extraction_events: u64,
    pub predicted_total: f64,
}

impl CostLedger {
    fn charge_setup(&mut self, r: usize) {
        self.setup_calls += 1;
        self.setup_queries += r as u64;
    }

    fn charge_steer(&mut self, stats: &SteerStats, per_diffusion: u64) {
        self.update_calls += stats.iterations() * per_diffusion;
        self.check_calls += stats.iterations() + stats.flips.rounds() + stats.measurements;
    }

    fn close(&mut self, verification: u64) {
        self.verification_queries = verification;
        self.oracle_queries = self.setup_queries + 2 * self.update_calls + verification;
    }

    /// Setup queries plus walk updates.
    pub fn total_cost(&self) -> u64 {
        self.setup_queries + self.update_calls
    }
}

/// `⌈1/√δ⌉` Update calls per emulated diffusion, with
/// `δ = N/(R(N−R))` the gap of `J(N, R)`.
pub fn updates_per_diffusion(domain: u64, r: u64) -> u64 {
    if r == 0 || r >= domain {
        return 1;
    }
    let inv_delta = (r * (domain - r)) as f64 / domain as f64;
    (inv_delta.sqrt().ceil() as u64).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// Vertices hold at most one collision on average.
    Prior,
    /// Vertices hold many multicollisions.
    New,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostPrediction {
    pub setup: f64,
    pub walk: f64,
    pub total: f64,
    /// Whether `R` lies in the regime's validity range.
    pub valid: bool,
}

/// `R + 2^k·2^{m/2}/√R` at `R = 2^ell`. Both regimes share the formula and
/// differ in where it applies: `R ≤ 2^{m/2}` for `Prior`, `R ≥ 2^{m/2}` for
/// `New`.
pub fn predict_cost(params: Params, ell: f64, regime: Regime) -> CostPrediction {
    let r = 2f64.powf(ell);
    let half_m = 2f64.powf(params.m as f64 / 2.0);
    let walk = 2f64.powi(params.k as i32) * half_m / r.sqrt();
    let valid = match regime {
        Regime::Prior => r <= half_m,
        Regime::New => r >= half_m,
    };
    CostPrediction {
        setup: r,
        walk,
        total: r + walk,
        valid,
    }
}

/// `(2k + m)/3`, where the two cost terms balance.
pub fn optimal_ell(params: Params) -> f64 {
    (2 * params.k + params.m) as f64 / 3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Status {
    Completed,
    /// Reached the target, but at least one step ran in the one-tuple regime.
    SparseFallback,
    Capacity,
    MaxIterations,
    /// No multicollision is left to find in the restricted domain.
    Exhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Mode {
    Dense,
    Sparse,
}

/// State of one chain step, recorded after the step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepTrace {
    pub outer: u64,
    pub kind: &'static str,
    pub mode: Mode,
    pub vertex_size: usize,
    pub domain_size: u64,
    pub codomain_size: u64,
    pub interval: Interval,
    pub tuples_found: usize,
    pub iterations: u64,
    pub deviation: f64,
    pub proportion_min: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainResult {
    pub params: Params,
    pub ell: u32,
    pub seed: u64,
    pub vertex_size: usize,
    pub status: Status,
    #[serde(skip)]
    pub collision_table: CollisionTable,
    pub tuples: Vec<Multicollision>,
    pub ledger: CostLedger,
    pub outer_iterations: u64,
    pub calibrated_c: f64,
    pub interval_width: i64,
    pub max_deviation: f64,
    pub per_step_trace: Vec<StepTrace>,
    #[serde(skip)]
    pub extraction_trace: Vec<TraceEvent>,
}

impl ChainResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Extraction events as JSON lines.
    pub fn trace_lines(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.extraction_trace {
            out.push_str(&e.to_json_line()?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn images(&self) -> BTreeSet<u64> {
        self.collision_table.images()
    }
}

/// Result of [`extraction_step`].
#[derive(Debug, Clone)]
pub struct ExtractionStep<'a> {
    pub tuples: Vec<Multicollision>,
    pub state: State,
    pub family: VertexFamily<'a>,
    pub plan: IntervalPlan,
    pub stats: SteerStats,
    pub extract_calls: u64,
    pub updates: u64,
    pub trace: Vec<TraceEvent>,
}

fn per_diffusion(family: &VertexFamily<'_>) -> u64 {
    updates_per_diffusion(family.restriction().domain_size(), family.vertex_size() as u64)
}

/// Extracts `T` tuples from a state over `[x, y]`, then keeps extracting
/// while the interval's upper end exceeds the recomputed `E'`. Stops early
/// if the lower end reaches 0.
pub fn extraction_step<'a, R: Rng + ?Sized>(
    state: &State,
    family: &VertexFamily<'a>,
    plan: &IntervalPlan,
    rng: &mut R,
) -> Result<ExtractionStep<'a>> {
    let mut plan = plan.clone();
    let mut state = state.clone();
    let mut family = family.clone();
    let mut tuples = Vec::new();
    let mut stats = SteerStats::default();
    let mut calls = 0;
    let mut updates = 0;
    let mut trace = Vec::new();
    loop {
        let iv = family.interval();
        let hi = iv
            .hi
            .ok_or_else(|| Error::Precondition("extraction needs a finite interval".into()))?;
        if iv.lo == 0 || family.vertex_size() < 2 {
            break;
        }
        if tuples.len() as i64 >= plan.t && hi as i64 <= plan.e_prime {
            break;
        }
        let out = extract_tuple(&state, &family, rng)?;
        updates += out.stats.iterations() * per_diffusion(&family);
        stats.absorb(&out.stats);
        calls += out.extract_calls;
        trace.extend(out.trace);
        tuples.push(out.tuple);
        state = out.state;
        family = out.family;
        plan.update(family.vertex_size() as u64, family.restriction().codomain_size());
    }
    Ok(ExtractionStep {
        tuples,
        state,
        family,
        plan,
        stats,
        extract_calls: calls,
        updates,
        trace,
    })
}

/// Result of [`walk_step`].
#[derive(Debug, Clone)]
pub struct WalkStep<'a> {
    pub state: State,
    pub family: VertexFamily<'a>,
    pub stats: SteerStats,
    pub proportion_min: f64,
}

/// Measurement classes `[0, E'−T)`, `[E'−T, E']`, `(E', E'+T]`,
/// `(E'+T, ∞)`, dropping empty ones.
pub fn walk_partition(e_prime: i64, t: i64) -> Vec<Interval> {
    let mut cells = Vec::new();
    let lo1 = (e_prime - t).max(0);
    if lo1 >= 1 {
        cells.push(Interval {
            lo: 0,
            hi: Some(lo1 as usize - 1),
        });
    }
    cells.push(Interval {
        lo: lo1 as usize,
        hi: Some(e_prime.max(0) as usize),
    });
    cells.push(Interval {
        lo: (e_prime + 1) as usize,
        hi: Some((e_prime + t) as usize),
    });
    cells.push(Interval::at_least((e_prime + t + 1) as usize));
    cells
}

/// Runs the case machine until the state is uniform over `(E', E'+T]`.
/// Each case flips to the complement of the current count set.
pub fn walk_step<'a, R: Rng + ?Sized>(
    state: &State,
    family: &VertexFamily<'a>,
    plan: &IntervalPlan,
    rng: &mut R,
) -> Result<WalkStep<'a>> {
    let partition = walk_partition(plan.e_prime, plan.t);
    let target = partition[partition.len() - 2];
    let space = family.space();
    let (state, stats) = steer(
        state,
        space,
        &family.interval().counts(space.max_count()),
        &partition,
        target,
        rng,
    )?;
    Ok(WalkStep {
        state,
        family: family.with_interval(target),
        stats,
        proportion_min: check_proportions(space, &partition).min,
    })
}

/// Dedicated rng stream for the walk, distinct from the function stream.
pub fn chain_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

struct Runner<'a> {
    f: &'a FunctionTable,
    rng: ChaCha8Rng,
    ledger: CostLedger,
    trace: Vec<StepTrace>,
    events: Vec<TraceEvent>,
    family: VertexFamily<'a>,
    state: State,
    plan: IntervalPlan,
    mode: Mode,
    sparse_used: bool,
    c: f64,
    t: i64,
    outer: u64,
    max_dev: f64,
}

enum Setup {
    Ready,
    Exhausted,
}

impl<'a> Runner<'a> {
    fn record(&mut self, kind: &'static str, iterations: u64, proportion_min: Option<f64>) {
        let dev = self.family.deviation(&self.state);
        self.max_dev = self.max_dev.max(dev);
        self.trace.push(StepTrace {
            outer: self.outer,
            kind,
            mode: self.mode,
            vertex_size: self.family.vertex_size(),
            domain_size: self.family.restriction().domain_size(),
            codomain_size: self.family.restriction().codomain_size(),
            interval: self.family.interval(),
            tuples_found: self.family.table().len(),
            iterations,
            deviation: dev,
            proportion_min,
        });
    }

    fn charge(&mut self, stats: &SteerStats) {
        let per = per_diffusion(&self.family);
        self.ledger.charge_steer(stats, per);
    }

    /// Loads a fresh uniform superposition of `r`-subsets and projects it
    /// onto the starting interval.
    fn setup(&mut self, r: usize) -> Result<Setup> {
        let table = self.family.table().clone();
        let family = VertexFamily::new(self.f, table, r, Interval::at_least(0))?;
        self.state = family.state()?;
        self.family = family;
        self.ledger.charge_setup(r);
        let m = self.family.restriction().codomain_size();
        self.plan = IntervalPlan::new(r as u64, m, self.c)?;
        self.plan.t = self.t;
        self.mode = if self.plan.sparse() {
            Mode::Sparse
        } else {
            Mode::Dense
        };
        self.record("setup", 0, None);
        if self.mode == Mode::Dense {
            let (lo, hi) = self.plan.upper();
            let target = Interval::closed(lo as usize, hi as usize)?;
            let partition = [
                Interval {
                    lo: 0,
                    hi: lo.checked_sub(1).map(|h| h as usize),
                },
                target,
                Interval::at_least(hi as usize + 1),
            ];
            let partition: Vec<Interval> = partition
                .into_iter()
                .filter(|c| c.hi.is_none_or(|h| h >= c.lo) && !(lo == 0 && c.lo == 0 && c.hi.is_none()))
                .collect();
            let current = self.family.interval().counts(self.family.space().max_count());
            match steer(
                &self.state,
                self.family.space(),
                &current,
                &partition,
                target,
                &mut self.rng,
            ) {
                Ok((s, stats)) => {
                    self.charge(&stats);
                    self.state = s;
                    self.family = self.family.with_interval(target);
                    self.record(
                        "project",
                        stats.iterations(),
                        Some(check_proportions(self.family.space(), &partition).min),
                    );
                    return Ok(Setup::Ready);
                }
                Err(Error::ImpossibleTarget(_)) => self.mode = Mode::Sparse,
                Err(e) => return Err(e),
            }
        }
        self.sparse_project("project")
    }

    /// Steers the live state onto all vertices holding at least one tuple.
    fn sparse_project(&mut self, kind: &'static str) -> Result<Setup> {
        self.mode = Mode::Sparse;
        self.sparse_used = true;
        let space = self.family.space().clone();
        let ymax = space.max_count();
        if ymax == 0 {
            return Ok(Setup::Exhausted);
        }
        let partition = [Interval::closed(0, 0)?, Interval::at_least(1)];
        let current = self.family.interval().counts(ymax);
        let (s, stats) = steer(
            &self.state,
            &space,
            &current,
            &partition,
            Interval::at_least(1),
            &mut self.rng,
        )?;
        self.charge(&stats);
        self.state = s;
        self.family = self.family.with_interval(Interval::closed(1, ymax)?);
        self.record(
            kind,
            stats.iterations(),
            Some(check_proportions(&space, &partition).min),
        );
        Ok(Setup::Ready)
    }

    fn extraction(&mut self) -> Result<()> {
        if self.mode == Mode::Sparse {
            let before = per_diffusion(&self.family);
            let out = extract_tuple(&self.state, &self.family, &mut self.rng)?;
            self.ledger.charge_steer(&out.stats, before);
            self.ledger.extraction_events += out.extract_calls;
            self.events.extend(out.trace);
            self.state = out.state;
            self.family = out.family;
            self.record("extract", out.stats.iterations(), None);
            return Ok(());
        }
        let step = extraction_step(&self.state, &self.family, &self.plan, &mut self.rng)?;
        self.ledger.update_calls += step.updates;
        self.ledger.check_calls +=
            step.stats.iterations() + step.stats.flips.rounds() + step.stats.measurements;
        self.ledger.extraction_events += step.extract_calls;
        self.events.extend(step.trace);
        self.state = step.state;
        self.family = step.family;
        self.plan = step.plan;
        self.record("extract", step.stats.iterations(), None);
        Ok(())
    }

    /// Largest vertex size worth restarting with on the current domain.
    fn restart_size(&self, r0: usize) -> Option<usize> {
        let domain = self.family.restriction().domain_size() as usize;
        let r = r0.min(domain.saturating_sub(1));
        (r >= 2).then_some(r)
    }

    fn walk(&mut self, r0: usize) -> Result<Setup> {
        if self.family.vertex_size() >= 2 {
            if self.mode == Mode::Dense && self.plan.e_prime >= 2 {
                match walk_step(&self.state, &self.family, &self.plan, &mut self.rng) {
                    Ok(w) => {
                        self.charge(&w.stats);
                        self.state = w.state;
                        self.family = w.family;
                        self.record("walk", w.stats.iterations(), Some(w.proportion_min));
                        return Ok(Setup::Ready);
                    }
                    Err(Error::ImpossibleTarget(_)) => {}
                    Err(e) => return Err(e),
                }
            }
            if let Setup::Ready = self.sparse_project("walk")? {
                return Ok(Setup::Ready);
            }
        }
        match self.restart_size(r0) {
            Some(r) => self.setup(r),
            None => Ok(Setup::Exhausted),
        }
    }
}

/// Generates `f` from the config seed and runs the chain on it.
pub fn run(config: &ChainConfig) -> Result<ChainResult> {
    let f = FunctionTable::generate(config.params, config.seed)?;
    run_on(&f, config)
}

pub fn run_on(f: &FunctionTable, config: &ChainConfig) -> Result<ChainResult> {
    config.validate()?;
    if f.params().n != config.params.n || f.params().m != config.params.m {
        return Err(Error::Parameter("function and config disagree on (n, m)".into()));
    }
    let queries_before = f.query_count();
    let r0 = config.vertex_size();
    let target = config.target();
    let m = f.params().codomain_size();

    let family = VertexFamily::new(f, CollisionTable::new(), r0, Interval::at_least(0))?;
    let c = family.space().mean_count() * m as f64 / (r0 * r0) as f64;
    let t = interval_width(r0 as u64, m);
    let mut runner = Runner {
        f,
        rng: chain_rng(config.seed),
        ledger: CostLedger::default(),
        trace: Vec::new(),
        events: Vec::new(),
        state: family.state()?,
        plan: IntervalPlan::new(r0 as u64, m, c)?,
        family,
        mode: Mode::Dense,
        sparse_used: false,
        c,
        t,
        outer: 0,
        max_dev: 0.0,
    };

    let bound = config.loop_bound();
    let half = f.params().domain_size() / 2;
    let mut status = match runner.setup(r0)? {
        Setup::Exhausted => Some(Status::Exhausted),
        Setup::Ready => None,
    };
    while status.is_none() {
        if runner.family.table().len() as u64 >= target {
            break;
        }
        if runner.outer >= bound {
            status = Some(Status::MaxIterations);
            break;
        }
        runner.outer += 1;
        runner.extraction()?;
        if runner.family.table().len() as u64 >= target {
            break;
        }
        if runner.family.restriction().excluded_preimages().len() as u64 >= half {
            status = Some(Status::Capacity);
            break;
        }
        match runner.walk(r0) {
            Ok(Setup::Ready) => {}
            Ok(Setup::Exhausted) => status = Some(Status::Exhausted),
            Err(Error::Capacity(_)) => status = Some(Status::Capacity),
            Err(e) => return Err(e),
        }
    }
    let status = status.unwrap_or(if runner.sparse_used {
        Status::SparseFallback
    } else {
        Status::Completed
    });

    let mut ledger = runner.ledger;
    ledger.close(f.query_count() - queries_before);
    ledger.predicted_total =
        r0 as f64 + target as f64 * 2f64.powf(config.params.m as f64 / 2.0) / (r0 as f64).sqrt();
    let table = runner.family.table().clone();
    Ok(ChainResult {
        params: config.params,
        ell: config.ell,
        seed: config.seed,
        vertex_size: r0,
        status,
        tuples: table.entries().to_vec(),
        collision_table: table,
        ledger,
        outer_iterations: runner.outer,
        calibrated_c: c,
        interval_width: t,
        max_deviation: runner.max_dev,
        per_step_trace: runner.trace,
        extraction_trace: runner.events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::enumerate_multicollisions;
    use crate::stats::drift_check;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn halving() -> FunctionTable {
        let p = Params::new(4, 4, 3).unwrap();
        FunctionTable::from_table(p, (0..16).map(|x| x >> 1).collect()).unwrap()
    }

    #[test]
    fn config_validation() {
        let p = Params::new(4, 4, 1).unwrap();
        assert!(ChainConfig::new(p, 3, 0).validate().is_ok());
        assert!(ChainConfig::new(p, 0, 0).validate().is_err());
        assert!(ChainConfig::new(p, 4, 0).validate().is_err());
        let mut c = ChainConfig::new(Params::new(8, 8, 0).unwrap(), 7, 0);
        assert!(c.validate().is_err());
        c.vertex_size = Some(100);
        assert!(c.validate().is_ok());
        assert_eq!(ChainConfig::new(p, 3, 0).loop_bound(), 2);
    }

    #[test]
    fn update_cost_per_diffusion() {
        assert_eq!(updates_per_diffusion(16, 8), 2);
        assert_eq!(updates_per_diffusion(100, 50), 5);
        assert_eq!(updates_per_diffusion(16, 1), 1);
        assert_eq!(updates_per_diffusion(16, 16), 1);
        assert_eq!(updates_per_diffusion(100, 10), 3);
    }

    #[test]
    fn predicted_cost_balances() {
        for (m, k) in [(4, 1), (6, 0), (9, 3), (12, 2)] {
            let p = Params { n: 8, m, k };
            let c = predict_cost(p, optimal_ell(p), Regime::New);
            assert!((c.setup - c.walk).abs() < 1e-9 * c.setup);
            let expected = 2f64.powf(2.0 * k as f64 / 3.0 + m as f64 / 3.0);
            assert!((c.setup - expected).abs() < 1e-9 * expected);
        }
        let p = Params { n: 12, m: 12, k: 3 };
        let c = predict_cost(p, optimal_ell(p), Regime::Prior);
        assert!(c.valid);
        assert!(c.total <= 2.0 * 2f64.powf(12.0 / 3.0 + 2.0));
        assert!(!predict_cost(p, 7.0, Regime::Prior).valid);
        assert!(!predict_cost(p, 5.0, Regime::New).valid);
    }

    #[test]
    fn partition_cells() {
        let cells = walk_partition(3, 1);
        assert_eq!(cells.len(), 4);
        assert_eq!(cells[0], Interval::closed(0, 1).unwrap());
        assert_eq!(cells[1], Interval::closed(2, 3).unwrap());
        assert_eq!(cells[2], Interval::closed(4, 4).unwrap());
        assert_eq!(cells[3], Interval::at_least(5));
        let cells = walk_partition(2, 2);
        assert_eq!(cells[0], Interval::closed(0, 2).unwrap());
        assert_eq!(cells.len(), 3);
    }

    #[test]
    fn extraction_step_bookkeeping() {
        let f = halving();
        let family =
            VertexFamily::new(&f, CollisionTable::new(), 8, Interval::closed(3, 3).unwrap()).unwrap();
        let mut plan = IntervalPlan::new(8, 16, 0.5).unwrap();
        plan.t = 1;
        plan.update(8, 16);
        let step = extraction_step(&family.state().unwrap(), &family, &plan, &mut rng(1)).unwrap();
        // E' falls from 2 to round(0.5·36/15) = 1 after the first tuple, so a
        // second extraction brings the upper end down to E'
        assert_eq!(step.tuples.len(), 2);
        assert_eq!(step.family.vertex_size(), 4);
        assert_eq!(step.family.interval(), Interval::closed(1, 1).unwrap());
        assert!(step.family.deviation(&step.state) <= 1e-9);
        assert_eq!(step.plan.e_prime, IntervalPlan::expected(0.5, 4, 14));
        assert_eq!(step.family.table().len(), 2);
        let drift = drift_check(8, 16, 0.5).unwrap();
        assert!((step.plan.e_prime - plan.e).abs() <= plan.t || drift.flagged);
    }

    #[test]
    fn walk_step_lands_in_target() {
        let f = FunctionTable::generate(Params::new(4, 4, 0).unwrap(), 21).unwrap();
        let family = VertexFamily::new(&f, CollisionTable::new(), 8, Interval::at_least(0)).unwrap();
        let hist = family.space().histogram();
        let c = family.space().mean_count() * 16.0 / 64.0;
        let mut plan = IntervalPlan::new(8, 16, c).unwrap();
        plan.t = 1;
        let start = family.with_interval(Interval::closed(plan.e as usize - 1, plan.e as usize).unwrap());
        let state = start.state().unwrap();
        let mut transitions = 0;
        let seeds = 200;
        for seed in 0..seeds {
            let w = walk_step(&state, &start, &plan, &mut rng(seed)).unwrap();
            let target = Interval::closed(plan.e as usize + 1, plan.e as usize + 1).unwrap();
            assert_eq!(w.family.interval(), target);
            assert!(w.family.deviation(&w.state) <= 1e-9);
            transitions += w.stats.transitions;
        }
        assert!(transitions as f64 / seeds as f64 <= 16.0, "{hist:?}");

        let already =
            family.with_interval(Interval::closed(plan.e as usize + 1, plan.e as usize + 1).unwrap());
        let w = walk_step(&already.state().unwrap(), &already, &plan, &mut rng(0)).unwrap();
        assert_eq!(w.stats.transitions, 0);
    }

    #[test]
    fn single_collision_run() {
        for seed in 0..4 {
            let cfg = ChainConfig::new(Params::new(4, 4, 0).unwrap(), 2, seed);
            let res = run(&cfg).unwrap();
            let f = FunctionTable::generate(cfg.params, seed).unwrap();
            if enumerate_multicollisions(&f, None).is_empty() {
                assert_eq!(res.status, Status::Exhausted);
                continue;
            }
            assert!(matches!(res.status, Status::Completed | Status::SparseFallback));
            assert!(!res.tuples.is_empty());
            for t in &res.tuples {
                assert!(t.preimages.iter().all(|&x| f.image(x) == t.image));
            }
            assert!(res.max_deviation <= UNIFORMITY_TOLERANCE);
        }
    }

    #[test]
    fn full_extraction_matches_enumeration() {
        let mut checked = 0;
        for seed in 0..40 {
            let p = Params::new(4, 4 + (seed % 2) as u32, 0).unwrap();
            let f = FunctionTable::generate(p, seed).unwrap();
            let truth = enumerate_multicollisions(&f, None);
            let colliding: usize = truth.iter().map(|t| t.size()).sum();
            if truth.is_empty() || colliding >= 8 {
                continue;
            }
            let mut cfg = ChainConfig::new(p, 3, seed);
            cfg.target_tuples = Some(truth.len() as u64);
            let res = run_on(&f, &cfg).unwrap();
            assert!(
                matches!(res.status, Status::Completed | Status::SparseFallback),
                "{:?}",
                res.status
            );
            let images: BTreeSet<u64> = truth.iter().map(|t| t.image).collect();
            assert_eq!(res.images(), images);
            for t in &res.tuples {
                let full = truth.iter().find(|g| g.image == t.image).unwrap();
                assert!(t.preimages.iter().all(|x| full.preimages.contains(x)));
            }
            assert!(res.max_deviation <= UNIFORMITY_TOLERANCE);
            assert_eq!(
                res.ledger.verification_queries,
                res.tuples.iter().map(|t| t.size() as u64).sum::<u64>()
            );
            checked += 1;
        }
        assert!(checked >= 3);
    }

    #[test]
    fn dense_run_on_halving_function() {
        let f = halving();
        let mut cfg = ChainConfig::new(f.params(), 3, 5);
        cfg.target_tuples = Some(8);
        let res = run_on(&f, &cfg).unwrap();
        assert!(res.per_step_trace.iter().any(|s| s.mode == Mode::Dense));
        assert!(res.max_deviation <= UNIFORMITY_TOLERANCE);
        for t in &res.tuples {
            assert_eq!(t.preimages.len(), 2);
            assert_eq!(t.preimages[0] >> 1, t.image);
        }
        assert!(matches!(
            res.status,
            Status::Completed | Status::SparseFallback | Status::Capacity
        ));
        let l = &res.ledger;
        assert_eq!(
            l.oracle_queries,
            l.setup_queries + 2 * l.update_calls + l.verification_queries
        );
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = ChainConfig::new(Params::new(4, 5, 2).unwrap(), 3, 7);
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(a.trace_lines().unwrap(), b.trace_lines().unwrap());
    }
}
