//! Pattern pursuit: grow a pattern pool by solving the affine problem under the
//! utility's gradient, re-splitting the band over the pool after every addition.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::extended::CoopMode;
use crate::fp::{solve_affine_from, AffineSolution, FpOptions};
use crate::master::{margin_prices, solve_beta_from, sparsify, MarginPrices, MasterOptions, MasterSolution};
use crate::matching::{max_weight_selection, PairingGraph};
use crate::network::Network;
use crate::rates::{
    combine_rates, pattern_rates, utility, utility_gradient, Allocation, Link, Pattern, RateVector, TrafficProfile, UtilityKind,
    UtilitySpec,
};

/// Distinct patterns in insertion order. Powers are compared after rounding to
/// `1e-12 * pmax`.
#[derive(Clone, Debug)]
pub struct PatternSet {
    patterns: Vec<Pattern>,
    index: HashMap<Vec<(usize, usize, i64)>, usize>,
    pmax: f64,
}

impl PatternSet {
    pub fn new(pmax: f64) -> Self {
        PatternSet { patterns: Vec::new(), index: HashMap::new(), pmax }
    }

    fn fingerprint(&self, pattern: &Pattern) -> Vec<(usize, usize, i64)> {
        pattern.links().iter().map(|l| (l.ext, l.ue, (l.power / self.pmax * 1e12).round() as i64)).collect()
    }

    /// Index of the new pattern, or `Err` with the index of an identical one.
    pub fn insert(&mut self, pattern: Pattern) -> std::result::Result<usize, usize> {
        let key = self.fingerprint(&pattern);
        if let Some(&idx) = self.index.get(&key) {
            return Err(idx);
        }
        self.index.insert(key, self.patterns.len());
        self.patterns.push(pattern);
        Ok(self.patterns.len() - 1)
    }

    pub fn find(&self, pattern: &Pattern) -> Option<usize> {
        self.index.get(&self.fingerprint(pattern)).copied()
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn get(&self, idx: usize) -> &Pattern {
        &self.patterns[idx]
    }

    pub fn patterns(&self) -> &[Pattern] {
        &self.patterns
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PursuitOptions {
    /// Stop when an outer iteration improves the utility by less than this fraction.
    /// While no split is stable the loop instead runs until no pattern can raise the
    /// best queue margin.
    pub outer_tol: f64,
    /// Defaults to four times the UE count.
    pub max_outer: Option<usize>,
    /// Each outer iteration also warm-starts the solver from the pool pattern that is
    /// best under the current weights. Multi-start is off by default.
    pub fp: FpOptions,
    pub master: MasterOptions,
    /// Seed for the random patterns that replace duplicates.
    pub seed: u64,
    /// Draws per duplicate before giving up on finding a new pattern.
    pub random_tries: usize,
}

impl Default for PursuitOptions {
    fn default() -> Self {
        PursuitOptions {
            outer_tol: 1e-5,
            max_outer: None,
            fp: FpOptions { multi_start: false, ..FpOptions::default() },
            master: MasterOptions::default(),
            seed: 0,
            random_tries: 16,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub utility: f64,
    pub deficit: f64,
    pub stable: bool,
    pub pool: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PursuitResult {
    /// Patterns with positive bandwidth only, at most one per UE.
    pub allocation: Allocation,
    pub utility: f64,
    /// Utility of the split before inactive patterns were dropped and the support reduced.
    pub unpruned_utility: f64,
    pub rates: RateVector,
    pub stable: bool,
    pub deficit: f64,
    /// State after the initial split and after every outer iteration.
    pub trace: Vec<Progress>,
    pub outer_iterations: usize,
    pub fp_iterations: usize,
    pub duplicates: usize,
    /// True when the loop stopped on the tolerance or ran out of new patterns rather
    /// than on `max_outer`.
    pub converged: bool,
}

/// Every physical AP (extended ids `0..n`) serving its strongest candidate UE at `pmax`.
pub fn initial_pattern(net: &Network) -> Pattern {
    let pmax = net.params.pmax;
    let links = (0..net.n_aps()).filter_map(|i| strongest(net, i).map(|ue| Link { ext: i, ue, power: pmax })).collect();
    Pattern::new(links)
}

pub fn initial_allocation(net: &Network) -> Allocation {
    Allocation::single(initial_pattern(net), net.params.bandwidth_w)
}

/// Candidate UE with the largest gain from `e`, lowest index on ties.
fn strongest(net: &Network, e: usize) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for (idx, &j) in net.ext.candidates(e).iter().enumerate() {
        let h = net.ext.h_at(CoopMode::NonCoherent, e, idx);
        if best.is_none_or(|(b, _)| h > b) {
            best = Some((h, j));
        }
    }
    best.map(|(_, j)| j)
}

/// A feasible pattern from a matching with random weights, each selected extended AP
/// serving its strongest candidate at `pmax`.
pub fn random_pattern(net: &Network, opts: &FpOptions, rng: &mut impl Rng) -> Pattern {
    let mut edges = Vec::new();
    let mut owner = Vec::new();
    for e in 0..net.ext.len() {
        let ap = net.ext.ap(e);
        if (ap.is_virtual() && !opts.allow_virtual) || net.ext.candidates(e).is_empty() {
            continue;
        }
        let (a, b) = ap.members();
        edges.push((a, b.unwrap_or(a), rng.random_range(f64::EPSILON..1.0)));
        owner.push(e);
    }
    let graph = PairingGraph::new(net.n_aps(), edges).expect("extended APs map to distinct edges");
    let links = max_weight_selection(&graph)
        .edges
        .iter()
        .map(|&idx| {
            let e = owner[idx];
            Link { ext: e, ue: strongest(net, e).expect("edge has a candidate"), power: net.params.pmax }
        })
        .collect();
    Pattern::new(links)
}

/// Pursuit state that outlives a single run: the pattern pool and its rates are reused
/// across traffic levels.
pub struct Pursuit<'a> {
    net: &'a Network,
    opts: PursuitOptions,
    pool: PatternSet,
    per_hz: Vec<RateVector>,
    rng: ChaCha8Rng,
}

impl<'a> Pursuit<'a> {
    pub fn new(net: &'a Network, opts: PursuitOptions) -> Self {
        Pursuit { net, opts, pool: PatternSet::new(net.params.pmax), per_hz: Vec::new(), rng: ChaCha8Rng::seed_from_u64(opts.seed) }
    }

    pub fn pool(&self) -> &PatternSet {
        &self.pool
    }

    pub fn options(&self) -> &PursuitOptions {
        &self.opts
    }

    fn add(&mut self, pattern: Pattern) -> std::result::Result<usize, usize> {
        let rates = pattern_rates(&pattern, self.net, self.opts.fp.mode);
        let added = self.pool.insert(pattern);
        if added.is_ok() {
            self.per_hz.push(rates);
        }
        added
    }

    /// Runs the outer loop at one traffic level. With `start` the first split is that
    /// allocation, so the result is at least as good; otherwise the whole pool (or the
    /// initial pattern when the pool is empty) is split from scratch.
    pub fn run(&mut self, traffic: &TrafficProfile, spec: &UtilitySpec, start: Option<&Allocation>) -> Result<PursuitResult> {
        let mut beta: Option<Vec<f64>> = None;
        if let Some(alloc) = start {
            let mut b = vec![0.0; self.pool.len()];
            for (p, &share) in alloc.patterns.iter().zip(&alloc.beta) {
                let idx = self.add(p.clone()).unwrap_or_else(|i| i);
                b.resize(self.pool.len(), 0.0);
                b[idx] += share;
            }
            beta = Some(b);
        } else if self.pool.is_empty() {
            let _ = self.add(initial_pattern(self.net));
        }
        // The master and the pricing LP see only a working set: the current support
        // plus columns added since. The pool itself keeps every pattern.
        let mut work: Vec<usize> = match &beta {
            Some(b) => support(b),
            None => (0..self.pool.len()).collect(),
        };
        let mut master = self.solve_master(traffic, spec, &work, beta.as_deref())?;
        if master.stable {
            work = support(&master.beta);
        }
        let mut trace = vec![progress(&master, self.pool.len())];
        let max_outer = self.opts.max_outer.unwrap_or(4 * self.net.n_ues());
        let (mut outer, mut fp_iterations, mut duplicates) = (0, 0, 0);
        let mut converged = false;
        // While unstable the pricing LP alone tracks the best margin; the split itself
        // is only recomputed once that margin turns positive, or at the end.
        let mut stale = false;
        let mut center: Option<Center> = None;
        let mut best_margin = f64::NEG_INFINITY;
        let mut margins: Vec<f64> = Vec::new();
        let window = (max_outer / 16).max(8);
        while outer < max_outer {
            outer += 1;
            let solution = if master.stable {
                let mut c = utility_gradient(&master.rates, traffic, spec);
                let top = c.iter().fold(0.0f64, |m, v| m.max(*v));
                if !(top > 0.0 && top.is_finite()) {
                    converged = true;
                    break;
                }
                c.iter_mut().for_each(|v| *v /= top);
                let solution = solve_affine_from(self.net, &c, &self.opts.fp, self.best_in_pool(&c).as_slice());
                fp_iterations += solution.iterations;
                solution
            } else {
                // Column generation on the max-margin split of the working set.
                let columns: Vec<RateVector> = work.iter().map(|&l| self.per_hz[l].clone()).collect();
                let dual = margin_prices(&columns, traffic, self.net.params.bandwidth_w)?;
                let split = scatter(&work, &dual.split, self.pool.len());
                // Columns outside the max-margin support are dropped whenever the margin
                // strictly improves, which rules out cycling.
                if dual.margin > best_margin + 1e-9 * (1.0 + dual.margin.abs()) {
                    best_margin = dual.margin;
                    work = support(&split);
                }
                // Give up once the recent gain, kept up over the remaining budget, would
                // not close the gap. The margin cannot move while some loaded UE gets no
                // rate from any column, so counting starts once all are covered.
                if !margins.is_empty() || self.covers(&work, traffic) {
                    margins.push(best_margin);
                }
                if margins.len() > window && best_margin < 0.0 {
                    let gain = best_margin - margins[margins.len() - 1 - window];
                    if gain * (max_outer - outer) as f64 <= -best_margin * window as f64 {
                        break;
                    }
                }
                if dual.margin > 0.0 && stale {
                    stale = false;
                    let next = self.solve_master(traffic, spec, &work, Some(&split))?;
                    if next.stable {
                        work = support(&next.beta);
                        master = next;
                        trace.push(progress(&master, self.pool.len()));
                        continue;
                    }
                }
                match self.price_margin(traffic, &dual, &mut center, &mut fp_iterations) {
                    Some(solution) => solution,
                    None => {
                        converged = true;
                        break;
                    }
                }
            };
            match self.add(solution.pattern) {
                Ok(l) => work.push(l),
                Err(l) if !work.contains(&l) => work.push(l),
                Err(_) => {
                    duplicates += 1;
                    match self.add_random(&work) {
                        Some(l) => work.push(l),
                        None => {
                            converged = true;
                            break;
                        }
                    }
                }
            }
            if !master.stable {
                stale = true;
                trace.push(progress(&master, self.pool.len()));
                continue;
            }
            let next = self.solve_master(traffic, spec, &work, Some(&padded(&master.beta, self.pool.len())))?;
            work = support(&next.beta);
            let done = next.stable && next.utility - master.utility < self.opts.outer_tol * master.utility.abs();
            master = next;
            trace.push(progress(&master, self.pool.len()));
            if done {
                converged = true;
                break;
            }
        }
        if stale {
            master = self.solve_master(traffic, spec, &work, None)?;
        }
        let allocation = self.compact(&master, traffic, spec)?;
        let per_hz: Vec<RateVector> =
            allocation.patterns.iter().map(|p| self.per_hz[self.pool.find(p).expect("allocated patterns are pooled")].clone()).collect();
        let rates = combine_rates(&per_hz, &allocation.beta, self.net.n_ues());
        Ok(PursuitResult {
            allocation,
            utility: utility(&rates, traffic, spec).unwrap_or(f64::NEG_INFINITY),
            unpruned_utility: master.utility,
            stable: master.stable && (spec.kind != UtilityKind::Sojourn || traffic.is_stable(&rates)),
            deficit: traffic.deficit(&rates),
            rates,
            trace,
            outer_iterations: outer,
            fp_iterations,
            duplicates,
            converged,
        })
    }

    /// A pattern that raises the working set's margin, priced by the LP duals; `None`
    /// when none is found or the bound shows that no split over any patterns is stable.
    /// For any prices `c` (non-negative, summing to one) the margin of every split is at
    /// most `(W/D) max_P c.r_P - c.lambda`. Prices are first smoothed toward the center,
    /// the prices with the lowest such bound so far; the plain duals and then a
    /// multi-start solve are the fallbacks.
    fn price_margin(
        &self,
        traffic: &TrafficProfile,
        dual: &MarginPrices,
        center: &mut Option<Center>,
        fp_iterations: &mut usize,
    ) -> Option<AffineSolution> {
        let scale = self.net.params.bandwidth_w / traffic.packet_bits;
        let mut attempts = Vec::with_capacity(3);
        if let Some(ctr) = center.as_ref() {
            let mixed = ctr.prices.iter().zip(&dual.prices).map(|(a, b)| SMOOTHING * a + (1.0 - SMOOTHING) * b).collect();
            attempts.push((mixed, self.opts.fp));
        }
        attempts.push((dual.prices.clone(), self.opts.fp));
        if !self.opts.fp.multi_start {
            attempts.push((dual.prices.clone(), FpOptions { multi_start: true, ..self.opts.fp }));
        }
        for (c, fp) in attempts {
            let warm = self.best_in_pool(&c);
            let solution = solve_affine_from(self.net, &c, &fp, warm.as_slice());
            *fp_iterations += solution.iterations;
            let bound = scale * solution.value - dot(&c, &traffic.lambda);
            if center.as_ref().is_none_or(|ctr| bound < ctr.bound) {
                *center = Some(Center { prices: c, bound });
            }
            if center.as_ref().is_some_and(|ctr| ctr.bound <= 0.0) {
                return None;
            }
            let worth = dot(&pattern_rates(&solution.pattern, self.net, self.opts.fp.mode), &dual.prices);
            if worth > dual.threshold * (1.0 + 1e-9) {
                return Some(solution);
            }
        }
        None
    }

    /// Whether every loaded UE gets some rate from the columns in `work`.
    fn covers(&self, work: &[usize], traffic: &TrafficProfile) -> bool {
        (0..self.net.n_ues()).all(|j| traffic.lambda[j] == 0.0 || work.iter().any(|&l| self.per_hz[l][j] > 0.0))
    }

    /// The pooled pattern worth most under `c`, as a warm start.
    fn best_in_pool(&self, c: &[f64]) -> Option<Pattern> {
        (0..self.pool.len())
            .max_by(|&a, &b| dot(&self.per_hz[a], c).total_cmp(&dot(&self.per_hz[b], c)).then(b.cmp(&a)))
            .map(|l| self.pool.get(l).clone())
    }

    /// A random pattern outside the working set, pooling it if new.
    fn add_random(&mut self, work: &[usize]) -> Option<usize> {
        for _ in 0..self.opts.random_tries {
            let pattern = random_pattern(self.net, &self.opts.fp, &mut self.rng);
            let l = self.add(pattern).unwrap_or_else(|l| l);
            if !work.contains(&l) {
                return Some(l);
            }
        }
        None
    }

    /// Splits the band over the working set; the returned `beta` is indexed by pool.
    fn solve_master(&self, traffic: &TrafficProfile, spec: &UtilitySpec, work: &[usize], beta: Option<&[f64]>) -> Result<MasterSolution> {
        let per_hz: Vec<RateVector> = work.iter().map(|&l| self.per_hz[l].clone()).collect();
        let start: Option<Vec<f64>> = beta.map(|b| work.iter().map(|&l| b.get(l).copied().unwrap_or(0.0)).collect());
        let mut solution = solve_beta_from(&per_hz, traffic, spec, self.net.params.bandwidth_w, &self.opts.master, start.as_deref())?;
        let mut full = vec![0.0; self.pool.len()];
        for (&l, &b) in work.iter().zip(&solution.beta) {
            full[l] = b;
        }
        solution.beta = full;
        Ok(solution)
    }

    /// Active patterns only, reduced to at most one per UE. When the exact reduction is
    /// unavailable the smallest shares are dropped and the rest re-split.
    fn compact(&self, master: &MasterSolution, traffic: &TrafficProfile, spec: &UtilitySpec) -> Result<Allocation> {
        let limit = self.net.n_ues().max(1);
        let beta = match sparsify(&self.per_hz, &master.beta, limit) {
            Some(beta) => beta,
            None => {
                let mut order: Vec<usize> = (0..master.beta.len()).filter(|&l| master.beta[l] > 0.0).collect();
                order.sort_by(|&a, &b| master.beta[b].total_cmp(&master.beta[a]).then(a.cmp(&b)));
                order.truncate(limit);
                order.sort_unstable();
                let per_hz: Vec<RateVector> = order.iter().map(|&l| self.per_hz[l].clone()).collect();
                let start: Vec<f64> = order.iter().map(|&l| master.beta[l]).collect();
                let bandwidth = self.net.params.bandwidth_w;
                let reduced = solve_beta_from(&per_hz, traffic, spec, bandwidth, &self.opts.master, Some(&start))?;
                let mut beta = vec![0.0; master.beta.len()];
                for (&l, b) in order.iter().zip(reduced.beta) {
                    beta[l] = b;
                }
                beta
            }
        };
        let active: Vec<usize> = (0..beta.len()).filter(|&l| beta[l] > 0.0).collect();
        Ok(Allocation {
            patterns: active.iter().map(|&l| self.pool.get(l).clone()).collect(),
            beta: active.iter().map(|&l| beta[l]).collect(),
        })
    }
}

fn progress(master: &MasterSolution, pool: usize) -> Progress {
    Progress { utility: master.utility, deficit: master.deficit, stable: master.stable, pool }
}

/// Weight of the center in the smoothed prices.
const SMOOTHING: f64 = 0.8;

struct Center {
    prices: Vec<f64>,
    bound: f64,
}

fn padded(beta: &[f64], len: usize) -> Vec<f64> {
    let mut b = beta.to_vec();
    b.resize(len, 0.0);
    b
}

/// Shares over `work` spread onto the whole pool.
fn scatter(work: &[usize], shares: &[f64], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for (&l, &x) in work.iter().zip(shares) {
        out[l] = x;
    }
    out
}

fn support(beta: &[f64]) -> Vec<usize> {
    (0..beta.len()).filter(|&l| beta[l] > 0.0).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// One pursuit run from the initial allocation.
pub fn pursue(net: &Network, traffic: &TrafficProfile, spec: &UtilitySpec, opts: &PursuitOptions) -> Result<PursuitResult> {
    let start = initial_allocation(net);
    Pursuit::new(net, *opts).run(traffic, spec, Some(&start))
}
