//! Single-pattern solver for an affine utility `sum_j c_j r_j`.
//!
//! The weighted sum of log-SINR terms is lifted with two auxiliary vectors (a Lagrangian
//! dual transform `gamma` and a quadratic transform `y`) into an objective that is
//! maximized by block coordinate ascent over `gamma`, `y`, powers `p`, associations `u`
//! and activity `d`. Activity is chosen by a maximum-weight matching over physical APs.
//!
//! Internally the objective is kept in nats with weights `w_j = c_j / ln 2`, so at
//! consistent auxiliaries it equals `sum_j c_j * log2(1 + SINR)`.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::extended::CoopMode;
use crate::matching::{max_weight_selection, PairingGraph};
use crate::network::Network;
use crate::rates::{pattern_rates, Link, Pattern};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FpOptions {
    pub mode: CoopMode,
    /// When false only physical APs may be activated.
    pub allow_virtual: bool,
    /// When true powers stay at `pmax` for every active link.
    pub fixed_power: bool,
    /// Stop when a full cycle improves the objective by less than `tol` (relative).
    pub tol: f64,
    pub max_iters: usize,
    /// Also run from the all-physical start, a greedy start and a physical-first
    /// schedule, keeping the best. When false only the caller's starts are used.
    #[serde(default = "default_multi_start")]
    pub multi_start: bool,
}

fn default_multi_start() -> bool {
    true
}

impl Default for FpOptions {
    fn default() -> Self {
        FpOptions { mode: CoopMode::Coherent, allow_virtual: true, fixed_power: false, tol: 1e-6, max_iters: 200, multi_start: true }
    }
}

/// Per-extended-AP variables. `d[e]` with `u[e] == None` reserves the members without
/// transmitting to anyone.
#[derive(Clone, Debug, PartialEq)]
pub struct FpState {
    pub p: Vec<f64>,
    pub u: Vec<Option<usize>>,
    pub d: Vec<bool>,
    pub gamma: Vec<f64>,
    pub y: Vec<f64>,
}

/// Result of [`solve_affine`].
#[derive(Clone, Debug, PartialEq)]
pub struct AffineSolution {
    pub pattern: Pattern,
    /// `sum_j c_j r_j` of `pattern`, per Hz.
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Coordinate-ascent state machine for one affine weight vector.
#[derive(Clone, Debug)]
pub struct FpSolver<'a> {
    net: &'a Network,
    opts: FpOptions,
    c: Vec<f64>,
    w: Vec<f64>,
    state: FpState,
    links: Vec<usize>,
}

/// Hypothetical activation of an inactive extended AP.
#[derive(Clone, Copy, Debug)]
struct Activation {
    ue: usize,
    gain: f64,
}

impl<'a> FpSolver<'a> {
    /// Every physical AP active at `pmax`, serving its best `c`-weighted candidate, with
    /// auxiliaries at their closed-form values.
    pub fn new(net: &'a Network, c: &[f64], opts: FpOptions) -> Self {
        assert_eq!(c.len(), net.n_ues(), "one weight per UE");
        assert!(c.iter().all(|&x| x >= 0.0 && x.is_finite()), "weights must be finite and non-negative");
        let m = net.ext.len();
        let n = net.n_aps();
        let mut state = FpState { p: vec![0.0; m], u: vec![None; m], d: vec![false; m], gamma: vec![0.0; m], y: vec![0.0; m] };
        for i in 0..n {
            state.d[i] = true;
            state.p[i] = net.params.pmax;
            let mut best: Option<(usize, f64)> = None;
            for &j in net.ext.candidates(i) {
                let score = c[j] * net.gains.get(i, j);
                if score > 0.0 && best.is_none_or(|(_, s)| score > s) {
                    best = Some((j, score));
                }
            }
            state.u[i] = best.map(|(j, _)| j);
        }
        let mut solver = FpSolver { net, opts, c: c.to_vec(), w: c.iter().map(|x| x / LN_2).collect(), state, links: Vec::new() };
        solver.refresh_links();
        for e in solver.links.clone() {
            solver.state.gamma[e] = solver.sinr(e);
        }
        solver.update_y();
        solver
    }

    /// Starts from the links of `pattern` that the options allow, with auxiliaries at
    /// their optimum.
    pub fn from_pattern(net: &'a Network, c: &[f64], opts: FpOptions, pattern: &Pattern) -> Self {
        let mut solver = FpSolver::new(net, c, opts);
        let m = net.ext.len();
        solver.state = FpState { p: vec![0.0; m], u: vec![None; m], d: vec![false; m], gamma: vec![0.0; m], y: vec![0.0; m] };
        for l in pattern.links().iter().filter(|l| opts.allow_virtual || !net.ext.ap(l.ext).is_virtual()) {
            solver.state.d[l.ext] = true;
            solver.state.u[l.ext] = Some(l.ue);
            solver.state.p[l.ext] = if opts.fixed_power { net.params.pmax } else { l.power };
        }
        solver.refresh_links();
        solver.settle_auxiliaries();
        solver
    }

    pub fn state(&self) -> &FpState {
        &self.state
    }

    pub fn weights(&self) -> &[f64] {
        &self.c
    }

    fn refresh_links(&mut self) {
        let s = &self.state;
        self.links = (0..s.d.len()).filter(|&e| s.d[e] && s.u[e].is_some()).collect();
    }

    fn is_link(&self, e: usize) -> bool {
        self.state.d[e] && self.state.u[e].is_some()
    }

    fn allowed(&self, e: usize) -> bool {
        self.opts.allow_virtual || !self.net.ext.ap(e).is_virtual()
    }

    fn h(&self, e: usize, j: usize) -> f64 {
        self.net.ext.h(self.opts.mode, e, j).expect("served UE is a candidate")
    }

    fn g(&self, e: usize, j: usize) -> f64 {
        self.net.ext.g(&self.net.gains, e, j)
    }

    /// Interference at UE `j` from every link except `skip`.
    fn interference(&self, j: usize, skip: usize) -> f64 {
        self.links.iter().filter(|&&l| l != skip).map(|&l| self.state.p[l] * self.g(l, j)).sum()
    }

    /// Cost that link `e` at power `p` imposes on every other link: `p * sum y'^2 g(e -> u')`.
    fn cross_cost(&self, e: usize, p: f64) -> f64 {
        if p == 0.0 {
            return 0.0;
        }
        let sum: f64 = self
            .links
            .iter()
            .filter(|&&l| l != e)
            .map(|&l| {
                let y = self.state.y[l];
                y * y * self.g(e, self.state.u[l].expect("link serves a UE"))
            })
            .sum();
        p * sum
    }

    fn sinr(&self, e: usize) -> f64 {
        let j = self.state.u[e].expect("link serves a UE");
        self.state.p[e] * self.h(e, j) / (self.net.params.n0 + self.interference(j, e))
    }

    /// The link's own contribution to the objective if it served `j` with the current
    /// power and auxiliaries, given interference `i` at `j`.
    fn own_term(&self, e: usize, j: usize, i: f64) -> f64 {
        let s = &self.state;
        let (w, g, y) = (self.w[j], s.gamma[e], s.y[e]);
        let a = s.p[e] * self.h(e, j);
        w * g.ln_1p() - w * g + 2.0 * y * (w * (1.0 + g) * a).sqrt() - y * y * (self.net.params.n0 + i + a)
    }

    /// The lifted objective at the current state.
    pub fn objective(&self) -> f64 {
        self.links
            .iter()
            .map(|&e| {
                let j = self.state.u[e].expect("link serves a UE");
                self.own_term(e, j, self.interference(j, e))
            })
            .sum()
    }

    /// Current active links as a pattern (zero-power links dropped).
    pub fn pattern(&self) -> Pattern {
        Pattern::new(
            self.links.iter().map(|&e| Link { ext: e, ue: self.state.u[e].expect("link serves a UE"), power: self.state.p[e] }).collect(),
        )
    }

    /// `sum_j c_j r_j` per Hz of the current pattern.
    pub fn affine_value(&self) -> f64 {
        affine_value(self.net, &self.c, &self.pattern(), self.opts.mode)
    }

    /// Moves each `gamma` to its closed-form SINR value. When the other blocks have moved
    /// since the last update that value can lower the objective; the step then stops at
    /// the farthest point toward it that keeps the link's term from falling.
    pub fn update_gamma(&mut self) {
        for e in 0..self.state.d.len() {
            if !self.is_link(e) {
                self.state.gamma[e] = 0.0;
                continue;
            }
            let target = self.sinr(e);
            let j = self.state.u[e].expect("link serves a UE");
            let (w, y) = (self.w[j], self.state.y[e]);
            let a = self.state.p[e] * self.h(e, j);
            self.state.gamma[e] = safeguarded_gamma(w, y, a, self.state.gamma[e], target);
        }
    }

    /// Sets each `y` to its exact maximizer.
    pub fn update_y(&mut self) {
        for e in 0..self.state.d.len() {
            if !self.is_link(e) {
                self.state.y[e] = 0.0;
                continue;
            }
            let j = self.state.u[e].expect("link serves a UE");
            let a = self.state.p[e] * self.h(e, j);
            let denom = self.net.params.n0 + self.interference(j, e) + a;
            self.state.y[e] = (self.w[j] * (1.0 + self.state.gamma[e]) * a).sqrt() / denom;
        }
    }

    /// Sets each link power to its exact maximizer, capped at `pmax`. The cross term uses
    /// AP `e`'s gain toward the UEs of the other links.
    pub fn update_p(&mut self) {
        if self.opts.fixed_power {
            return;
        }
        let pmax = self.net.params.pmax;
        let mut next = self.state.p.clone();
        for &e in &self.links {
            let j = self.state.u[e].expect("link serves a UE");
            let (g, y) = (self.state.gamma[e], self.state.y[e]);
            let h = self.h(e, j);
            let weighted = self.w[j] * (1.0 + g) * h;
            let others: f64 = self
                .links
                .iter()
                .filter(|&&l| l != e)
                .map(|&l| self.state.y[l].powi(2) * self.g(e, self.state.u[l].expect("link serves a UE")))
                .sum();
            let denom = (y * y * h + others).powi(2);
            next[e] = if denom > 0.0 {
                (weighted * y * y / denom).min(pmax)
            } else if weighted > 0.0 {
                pmax
            } else {
                0.0
            };
        }
        self.state.p = next;
    }

    /// Re-picks the served UE of every active extended AP, in id order. Serving nobody is
    /// chosen only when every candidate's term is below the interference cost the
    /// transmission imposes on the other links. Ties go to the lowest UE index.
    pub fn update_u(&mut self) {
        for e in 0..self.state.d.len() {
            if !self.state.d[e] {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for &j in self.net.ext.candidates(e) {
                let t = self.own_term(e, j, self.interference(j, e));
                if best.is_none_or(|(_, b)| t > b) {
                    best = Some((j, t));
                }
            }
            let choice = best.and_then(|(j, t)| (t - self.cross_cost(e, self.state.p[e]) >= 0.0).then_some(j));
            if choice.is_some() != self.state.u[e].is_some() {
                self.state.u[e] = choice;
                self.refresh_links();
            } else {
                self.state.u[e] = choice;
            }
        }
    }

    /// Chooses the active extended APs by maximum-weight matching. Each edge weight is the
    /// exact change of the objective from toggling that extended AP alone: for an active
    /// link its current contribution net of its cross cost, for an inactive one the
    /// value of activating it at `pmax` (after silencing the links it conflicts with) net
    /// of the cross cost it would impose. The matched set is applied if it does not lower
    /// the objective; otherwise its moves are tried one at a time, best first. Returns
    /// whether the set of links changed.
    pub fn update_d(&mut self) -> bool {
        let m = self.state.d.len();
        let n = self.net.n_aps();
        let pmax = self.net.params.pmax;
        let n0 = self.net.params.n0;
        let k = self.net.n_ues();

        let mut total_interference = vec![0.0; k];
        for &l in &self.links {
            let p = self.state.p[l];
            for (j, t) in total_interference.iter_mut().enumerate() {
                *t += p * self.g(l, j);
            }
        }
        // y-weighted gain of each physical AP toward the served UEs.
        let mut pulled = vec![0.0; n];
        for &l in &self.links {
            let (y, j) = (self.state.y[l], self.state.u[l].expect("link serves a UE"));
            for (i, z) in pulled.iter_mut().enumerate() {
                *z += y * y * self.net.gains.get(i, j);
            }
        }
        let ext_pulled = |e: usize| {
            let (a, b) = self.net.ext.ap(e).members();
            pulled[a] + b.map_or(0.0, |b| pulled[b])
        };

        let mut weight = vec![0.0; m];
        let mut activation: Vec<Option<Activation>> = vec![None; m];
        for e in 0..m {
            if !self.allowed(e) {
                continue;
            }
            if self.state.d[e] {
                if let Some(j) = self.state.u[e] {
                    let own = self.own_term(e, j, self.interference(j, e));
                    weight[e] = own - self.cross_cost(e, self.state.p[e]);
                }
                continue;
            }
            let conflicting: Vec<usize> = self.links.iter().copied().filter(|&l| self.net.ext.conflicts(e, l)).collect();
            let mut best: Option<Activation> = None;
            for (idx, &j) in self.net.ext.candidates(e).iter().enumerate() {
                if self.c[j] == 0.0 {
                    continue;
                }
                let removed: f64 = conflicting.iter().map(|&l| self.state.p[l] * self.g(l, j)).sum();
                let i = (total_interference[j] - removed).max(0.0);
                let sinr = pmax * self.net.ext.h_at(self.opts.mode, e, idx) / (n0 + i);
                let gain = self.w[j] * sinr.ln_1p();
                if best.is_none_or(|b| gain > b.gain) {
                    best = Some(Activation { ue: j, gain });
                }
            }
            if let Some(act) = best {
                let freed: f64 =
                    conflicting.iter().map(|&l| self.state.y[l].powi(2) * self.g(e, self.state.u[l].expect("link serves a UE"))).sum();
                weight[e] = act.gain - pmax * (ext_pulled(e) - freed).max(0.0);
                activation[e] = Some(act);
            }
        }

        let mut edges = Vec::new();
        let mut owner = Vec::new();
        for (e, &w) in weight.iter().enumerate() {
            if !self.allowed(e) || w <= 0.0 {
                continue;
            }
            let (a, b) = self.net.ext.ap(e).members();
            edges.push((a, b.unwrap_or(a), w));
            owner.push(e);
        }
        let graph = PairingGraph::new(n, edges).expect("extended APs map to distinct edges");
        let selection = max_weight_selection(&graph);
        let mut chosen = vec![false; m];
        for &idx in &selection.edges {
            chosen[owner[idx]] = true;
        }

        // Candidates are compared by their exact affine value. Re-optimizing the
        // auxiliaries afterwards lifts the objective to that value, which is at least the
        // current pattern's value and hence at least the current objective.
        let start_value = self.affine_value();
        let current: Vec<Link> =
            self.links.iter().map(|&e| Link { ext: e, ue: self.state.u[e].expect("link serves a UE"), power: self.state.p[e] }).collect();
        let mut search = LinkSearch::new(self.net, self.opts.mode, &self.c, current.clone());
        let mut proposal: Vec<Link> = current.iter().filter(|l| chosen[l.ext]).copied().collect();
        for e in (0..m).filter(|&e| chosen[e] && !self.state.d[e]) {
            let ue = activation[e].expect("positive weight implies a candidate").ue;
            proposal.push(Link { ext: e, ue, power: pmax });
        }
        let matched = LinkSearch::new(self.net, self.opts.mode, &self.c, proposal);
        if matched.value > search.value {
            search = matched;
        }

        // The matching weights ignore interactions between moves, so refine with single
        // activations, removals and re-associations until none helps.
        let mut order: Vec<usize> = (0..m).filter(|&e| self.allowed(e)).collect();
        order.sort_by(|&a, &b| weight[b].total_cmp(&weight[a]).then(a.cmp(&b)));
        for _ in 0..LOCAL_SEARCH_PASSES {
            let mut improved = false;
            for &e in &order {
                improved |= if search.position(e).is_some() {
                    search.try_remove(e) || search.try_reassociate(e)
                } else {
                    search.try_activate(e, pmax)
                };
            }
            if !improved {
                break;
            }
        }

        let final_links = search.links;
        let result = Pattern::new(final_links.clone());
        let changed = affine_value(self.net, &self.c, &result, self.opts.mode) > start_value;
        if changed {
            for e in 0..m {
                self.state.d[e] = false;
                self.state.u[e] = None;
                self.state.p[e] = 0.0;
            }
            for l in final_links {
                self.state.d[l.ext] = true;
                self.state.u[l.ext] = Some(l.ue);
                self.state.p[l.ext] = l.power;
            }
            self.refresh_links();
        } else {
            for e in 0..m {
                if self.state.d[e] && self.state.u[e].is_none() {
                    self.state.d[e] = false;
                    self.state.p[e] = 0.0;
                }
            }
            self.refresh_links();
        }
        self.settle_auxiliaries();
        changed
    }

    /// Auxiliaries at their joint optimum, where the objective equals the affine value.
    fn settle_auxiliaries(&mut self) {
        for e in 0..self.state.d.len() {
            self.state.gamma[e] = if self.is_link(e) { self.sinr(e) } else { 0.0 };
        }
        self.update_y();
    }

    /// One pass over all five blocks.
    pub fn cycle(&mut self) {
        self.cycle_continuous();
        self.update_d();
    }

    /// The blocks other than the link selection.
    fn cycle_continuous(&mut self) {
        self.update_gamma();
        self.update_y();
        self.update_p();
        self.update_u();
    }
}

const LOCAL_SEARCH_PASSES: usize = 20;

/// Cycles between selection steps once the links have settled.
const SELECTION_EVERY: usize = 8;

/// Active links with incremental evaluation of the affine value under single moves.
struct LinkSearch<'a> {
    net: &'a Network,
    mode: CoopMode,
    c: &'a [f64],
    links: Vec<Link>,
    /// Received power from all links at every UE.
    received: Vec<f64>,
    /// Per link: its own contribution to `received` at its UE, its useful signal and its value.
    own: Vec<f64>,
    signal: Vec<f64>,
    values: Vec<f64>,
    value: f64,
}

impl<'a> LinkSearch<'a> {
    fn new(net: &'a Network, mode: CoopMode, c: &'a [f64], links: Vec<Link>) -> Self {
        let mut search = LinkSearch {
            net,
            mode,
            c,
            links,
            received: vec![0.0; net.n_ues()],
            own: Vec::new(),
            signal: Vec::new(),
            values: Vec::new(),
            value: 0.0,
        };
        search.rebuild();
        search
    }

    fn rebuild(&mut self) {
        self.received.iter_mut().for_each(|r| *r = 0.0);
        for l in &self.links {
            for (j, r) in self.received.iter_mut().enumerate() {
                *r += l.power * self.net.ext.g(&self.net.gains, l.ext, j);
            }
        }
        self.own = self.links.iter().map(|l| l.power * self.g(l.ext, l.ue)).collect();
        self.signal =
            self.links.iter().map(|l| l.power * self.net.ext.h(self.mode, l.ext, l.ue).expect("served UE is a candidate")).collect();
        self.values = (0..self.links.len())
            .map(|idx| self.rate(self.links[idx].ue, self.signal[idx], self.received[self.links[idx].ue] - self.own[idx]))
            .collect();
        self.value = self.values.iter().sum();
    }

    fn position(&self, e: usize) -> Option<usize> {
        self.links.iter().position(|l| l.ext == e)
    }

    fn g(&self, e: usize, j: usize) -> f64 {
        self.net.ext.g(&self.net.gains, e, j)
    }

    fn rate(&self, j: usize, signal: f64, interference: f64) -> f64 {
        if signal == 0.0 || self.c[j] == 0.0 {
            return 0.0;
        }
        self.c[j] * (1.0 + signal / (self.net.params.n0 + interference.max(0.0))).log2()
    }

    fn removed_at(&self, removed: &[usize], j: usize) -> f64 {
        removed.iter().map(|&r| self.links[r].power * self.g(self.links[r].ext, j)).sum()
    }

    /// Value of the links that stay after removing `removed` and switching on `added`
    /// (extended AP and power) without counting the added link itself.
    fn remaining_value(&self, removed: &[usize], added: Option<(usize, f64)>) -> f64 {
        let mut total = 0.0;
        for (idx, l) in self.links.iter().enumerate() {
            if removed.contains(&idx) {
                continue;
            }
            let shift = added.map_or(0.0, |(e, p)| p * self.g(e, l.ue)) - self.removed_at(removed, l.ue);
            total += if shift == 0.0 {
                self.values[idx]
            } else {
                self.rate(l.ue, self.signal[idx], self.received[l.ue] - self.own[idx] + shift)
            };
        }
        total
    }

    fn apply(&mut self, removed: &[usize], added: Option<Link>) {
        let mut removed = removed.to_vec();
        removed.sort_unstable();
        for &r in removed.iter().rev() {
            self.links.remove(r);
        }
        self.links.extend(added);
        self.rebuild();
    }

    fn try_remove(&mut self, e: usize) -> bool {
        let idx = self.position(e).expect("active link");
        if self.remaining_value(&[idx], None) > self.value {
            self.apply(&[idx], None);
            return true;
        }
        false
    }

    /// Moving a link to another UE leaves every other link's interference unchanged.
    fn try_reassociate(&mut self, e: usize) -> bool {
        let idx = self.position(e).expect("active link");
        let link = self.links[idx];
        let base = self.value - self.values[idx];
        let mut best: Option<(f64, Link)> = None;
        for (slot, &j) in self.net.ext.candidates(e).iter().enumerate() {
            if j == link.ue {
                continue;
            }
            let signal = link.power * self.net.ext.h_at(self.mode, e, slot);
            let value = base + self.rate(j, signal, self.received[j] - link.power * self.g(e, j));
            if value > self.value && best.is_none_or(|(b, _)| value > b) {
                best = Some((value, Link { ue: j, ..link }));
            }
        }
        if let Some((_, moved)) = best {
            self.apply(&[idx], Some(moved));
            return true;
        }
        false
    }

    /// The effect on the other links does not depend on which UE the new link serves.
    fn try_activate(&mut self, e: usize, power: f64) -> bool {
        let removed: Vec<usize> = (0..self.links.len()).filter(|&idx| self.net.ext.conflicts(e, self.links[idx].ext)).collect();
        let mut remaining: Option<f64> = None;
        let mut best: Option<(f64, Link)> = None;
        for (slot, &j) in self.net.ext.candidates(e).iter().enumerate() {
            if self.c[j] == 0.0 {
                continue;
            }
            let base = *remaining.get_or_insert_with(|| self.remaining_value(&removed, Some((e, power))));
            let signal = power * self.net.ext.h_at(self.mode, e, slot);
            let value = base + self.rate(j, signal, self.received[j] - self.removed_at(&removed, j));
            if value > self.value && best.is_none_or(|(b, _)| value > b) {
                best = Some((value, Link { ext: e, ue: j, power }));
            }
        }
        if let Some((_, link)) = best {
            self.apply(&removed, Some(link));
            return true;
        }
        false
    }
}

/// Step for `gamma` toward `target`, never lowering
/// `G(x) = w ln(1+x) - w x + 2 y sqrt(w (1+x) a)`.
fn safeguarded_gamma(w: f64, y: f64, a: f64, current: f64, target: f64) -> f64 {
    let value = |x: f64| w * x.ln_1p() - w * x + 2.0 * y * (w * (1.0 + x) * a).sqrt();
    let floor = value(current);
    if value(target) >= floor || w == 0.0 {
        return target;
    }
    // G is concave in x with its maximum at s^2 - 1, s = sqrt(1+x).
    let s = (y * (w * a).sqrt() + (y * y * w * a + 4.0 * w * w).sqrt()) / (2.0 * w);
    let peak = (s * s - 1.0).max(0.0);
    let (lo_end, hi_end) = if current <= target { (current, target) } else { (target, current) };
    let mut inside = peak.clamp(lo_end, hi_end);
    let mut outside = target;
    if value(inside) < floor {
        return current;
    }
    for _ in 0..200 {
        let mid = 0.5 * (inside + outside);
        if mid == inside || mid == outside {
            break;
        }
        if value(mid) >= floor {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    inside
}

/// `sum_j c_j r_j` per Hz of a pattern.
pub fn affine_value(net: &Network, c: &[f64], pattern: &Pattern, mode: CoopMode) -> f64 {
    pattern_rates(pattern, net, mode).iter().zip(c).map(|(r, c)| r * c).sum()
}

/// Pattern built by activating extended APs one at a time, strongest stand-alone link
/// first, keeping each activation that raises the affine value.
pub fn greedy_pattern(net: &Network, c: &[f64], opts: &FpOptions) -> Pattern {
    let pmax = net.params.pmax;
    let mut scored: Vec<(f64, usize)> = (0..net.ext.len())
        .filter(|&e| opts.allow_virtual || !net.ext.ap(e).is_virtual())
        .map(|e| {
            let best = net
                .ext
                .candidates(e)
                .iter()
                .enumerate()
                .map(|(idx, &j)| c[j] * (pmax * net.ext.h_at(opts.mode, e, idx) / net.params.n0).ln_1p())
                .fold(0.0, f64::max);
            (best, e)
        })
        .filter(|&(v, _)| v > 0.0)
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut search = LinkSearch::new(net, opts.mode, c, Vec::new());
    for &(_, e) in &scored {
        if search.position(e).is_none() {
            search.try_activate(e, pmax);
        }
    }
    Pattern::new(search.links)
}

/// Runs full cycles until the objective stalls or `max_iters` is hit, from every
/// physical AP active, from a greedy build-up and from a physical-first schedule.
/// Returns the best pattern seen.
pub fn solve_affine(net: &Network, c: &[f64], opts: &FpOptions) -> AffineSolution {
    solve_affine_from(net, c, &FpOptions { multi_start: true, ..*opts }, &[])
}

/// Like [`solve_affine`] but also starts from each of `starts`; with
/// `opts.multi_start == false` only those starts are used (the all-physical start
/// when there are none).
pub fn solve_affine_from(net: &Network, c: &[f64], opts: &FpOptions, starts: &[Pattern]) -> AffineSolution {
    let mut runs: Vec<AffineSolution> = starts.iter().map(|s| run_cycles(FpSolver::from_pattern(net, c, *opts, s), opts)).collect();
    if opts.multi_start || starts.is_empty() {
        runs.push(run_cycles(FpSolver::new(net, c, *opts), opts));
    }
    if opts.multi_start {
        runs.push(run_cycles(FpSolver::from_pattern(net, c, *opts, &greedy_pattern(net, c, opts)), opts));
        if opts.allow_virtual && net.ext.virtual_pairs().next().is_some() {
            let physical = FpOptions { allow_virtual: false, ..*opts };
            let first = run_cycles(FpSolver::new(net, c, physical), &physical);
            let second = run_cycles(FpSolver::from_pattern(net, c, *opts, &first.pattern), opts);
            runs.push(AffineSolution { iterations: first.iterations + second.iterations, ..second });
            runs.push(first);
        }
    }
    let iterations = runs.iter().map(|r| r.iterations).sum();
    let mut best: Option<AffineSolution> = None;
    for run in runs {
        if best.as_ref().is_none_or(|b| run.value > b.value) {
            best = Some(run);
        }
    }
    let mut best = best.expect("at least one start");
    best.iterations = iterations;
    best
}

fn run_cycles(mut solver: FpSolver<'_>, opts: &FpOptions) -> AffineSolution {
    let (net, c) = (solver.net, solver.c.clone());
    let mut best = solver.pattern();
    let mut best_value = affine_value(net, &c, &best, opts.mode);
    let mut objective = solver.objective();
    let mut converged = false;
    let mut iterations = 0;
    // The selection step costs far more than the others and mostly confirms the current
    // links, so while it does it only runs every few cycles and before stopping.
    let mut settled = false;
    while iterations < opts.max_iters {
        iterations += 1;
        let full = !settled || iterations % SELECTION_EVERY == 0;
        if full {
            solver.cycle_continuous();
            settled = !solver.update_d();
        } else {
            solver.cycle_continuous();
        }
        let pattern = solver.pattern();
        let value = affine_value(net, &c, &pattern, opts.mode);
        if value > best_value {
            best = pattern;
            best_value = value;
        }
        let next = solver.objective();
        let gain = next - objective;
        objective = next;
        if gain <= opts.tol * objective.abs() {
            if full {
                converged = true;
                break;
            }
            settled = false;
        }
    }
    AffineSolution { pattern: best, value: best_value, iterations, converged }
}
