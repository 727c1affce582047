//! Spectral efficiencies, service rates and queueing utilities.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extended::{effective_gain, CoopMode};
use crate::network::Network;

/// One active transmission in a pattern: extended AP `ext` serves `ue` at PSD `power`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub ext: usize,
    pub ue: usize,
    pub power: f64,
}

/// A flat scheme applied over one subband. Only active links are stored: an extended AP
/// that is absent has `d = 0`, `p = 0` and serves nobody.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pattern {
    links: Vec<Link>,
}

impl Pattern {
    /// Sorts links by extended AP and drops silent ones.
    pub fn new(mut links: Vec<Link>) -> Self {
        links.retain(|l| l.power > 0.0);
        links.sort_by_key(|l| l.ext);
        Pattern { links }
    }

    pub fn silent() -> Self {
        Pattern::default()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn link(&self, ext: usize) -> Option<&Link> {
        self.links.binary_search_by_key(&ext, |l| l.ext).ok().map(|i| &self.links[i])
    }

    /// `p_e`, zero for inactive extended APs.
    pub fn power(&self, ext: usize) -> f64 {
        self.link(ext).map_or(0.0, |l| l.power)
    }

    /// `d_e`.
    pub fn is_active(&self, ext: usize) -> bool {
        self.link(ext).is_some()
    }

    /// `u_e`, `None` standing for "serves nobody".
    pub fn served(&self, ext: usize) -> Option<usize> {
        self.link(ext).map(|l| l.ue)
    }

    /// Checks power bounds, neighborhood membership and the one-member-per-AP rule.
    pub fn validate(&self, net: &Network) -> Result<()> {
        let pmax = net.params.pmax;
        let mut used = vec![false; net.n_aps()];
        for (idx, l) in self.links.iter().enumerate() {
            if idx > 0 && self.links[idx - 1].ext == l.ext {
                return Err(Error::InvalidPattern(format!("extended AP {} listed twice", l.ext)));
            }
            if l.ext >= net.ext.len() {
                return Err(Error::InvalidPattern(format!("unknown extended AP {}", l.ext)));
            }
            if !(l.power.is_finite() && l.power >= 0.0 && l.power <= pmax * (1.0 + 1e-12)) {
                return Err(Error::InvalidPattern(format!("power {} of extended AP {} outside [0, {pmax}]", l.power, l.ext)));
            }
            if !net.ext.is_candidate(l.ext, l.ue) {
                return Err(Error::InvalidPattern(format!("extended AP {} is not in the neighborhood of UE {}", l.ext, l.ue)));
            }
            let (a, b) = net.ext.ap(l.ext).members();
            for m in std::iter::once(a).chain(b) {
                if std::mem::replace(&mut used[m], true) {
                    return Err(Error::InvalidPattern(format!("physical AP {m} is active more than once")));
                }
            }
        }
        Ok(())
    }
}

/// Per-UE service rates.
#[derive(Clone, Debug, PartialEq)]
pub struct RateVector(pub Vec<f64>);

impl Deref for RateVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Patterns with their bandwidth shares (Hz).
#[derive(Clone, Debug, PartialEq)]
pub struct Allocation {
    pub patterns: Vec<Pattern>,
    pub beta: Vec<f64>,
}

impl Allocation {
    pub fn single(pattern: Pattern, bandwidth: f64) -> Self {
        Allocation { patterns: vec![pattern], beta: vec![bandwidth] }
    }

    /// Number of patterns carrying bandwidth.
    pub fn active_count(&self) -> usize {
        self.beta.iter().filter(|&&b| b > 0.0).count()
    }

    pub fn validate(&self, net: &Network) -> Result<()> {
        if self.patterns.len() != self.beta.len() {
            return Err(Error::InvalidAllocation(format!("{} patterns but {} bandwidth shares", self.patterns.len(), self.beta.len())));
        }
        if let Some(b) = self.beta.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
            return Err(Error::InvalidAllocation(format!("bandwidth share {b} is negative or not finite")));
        }
        let w = net.params.bandwidth_w;
        let total: f64 = self.beta.iter().sum();
        if (total - w).abs() > 1e-9 * w {
            return Err(Error::InvalidAllocation(format!("bandwidth shares sum to {total}, expected {w}")));
        }
        for (l, p) in self.patterns.iter().enumerate() {
            p.validate(net).map_err(|e| Error::InvalidAllocation(format!("pattern {l}: {e}")))?;
        }
        Ok(())
    }
}

/// Packet arrival rates (packets/s) and mean packet length (bits).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrafficProfile {
    pub lambda: Vec<f64>,
    pub packet_bits: f64,
}

impl TrafficProfile {
    pub fn new(lambda: Vec<f64>, packet_bits: f64) -> Result<Self> {
        if !(packet_bits.is_finite() && packet_bits > 0.0) {
            return Err(Error::InvalidTraffic(format!("packet length must be positive, got {packet_bits}")));
        }
        if let Some(l) = lambda.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(Error::InvalidTraffic(format!("arrival rate {l} is negative or not finite")));
        }
        Ok(TrafficProfile { lambda, packet_bits })
    }

    /// The same arrival rate at every UE flagged in `mask`, zero elsewhere.
    pub fn uniform(mask: &[bool], lambda: f64, packet_bits: f64) -> Result<Self> {
        TrafficProfile::new(mask.iter().map(|&m| if m { lambda } else { 0.0 }).collect(), packet_bits)
    }

    pub fn total(&self) -> f64 {
        self.lambda.iter().sum()
    }

    /// Smallest `r_j / D - lambda_j` over UEs with traffic, in packets/s.
    pub fn margin(&self, rates: &[f64]) -> f64 {
        self.lambda.iter().zip(rates).filter(|(l, _)| **l > 0.0).map(|(l, r)| r / self.packet_bits - l).fold(f64::INFINITY, f64::min)
    }

    pub fn is_stable(&self, rates: &[f64]) -> bool {
        self.margin(rates) > 0.0
    }

    /// Total shortfall `sum_j max(lambda_j D - r_j, 0)` in bits/s.
    pub fn deficit(&self, rates: &[f64]) -> f64 {
        self.lambda.iter().zip(rates).map(|(l, r)| (l * self.packet_bits - r).max(0.0)).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UtilityKind {
    /// Minus the traffic-weighted mean M/M/1 sojourn time.
    Sojourn,
    SumRate,
    LogSumRate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilitySpec {
    pub kind: UtilityKind,
    /// Rate floor (bits/s) that keeps gradients finite.
    pub epsilon_grad: f64,
}

impl Default for UtilitySpec {
    fn default() -> Self {
        UtilitySpec { kind: UtilityKind::Sojourn, epsilon_grad: 1.0 }
    }
}

impl UtilitySpec {
    pub fn new(kind: UtilityKind) -> Self {
        UtilitySpec { kind, ..Default::default() }
    }
}

/// Shannon efficiency of `ext_ap -> ue` with every other active link of the pattern
/// interfering through the sum of its members' gains.
pub fn spectral_efficiency(pattern: &Pattern, ext_ap: usize, ue: usize, net: &Network, mode: CoopMode) -> f64 {
    let p = pattern.power(ext_ap);
    if p == 0.0 {
        return 0.0;
    }
    let h = effective_gain(net.ext.ap(ext_ap), &net.gains, ue, mode);
    let interference: f64 = pattern.links().iter().filter(|l| l.ext != ext_ap).map(|l| l.power * net.ext.g(&net.gains, l.ext, ue)).sum();
    (1.0 + h * p / (net.params.n0 + interference)).log2()
}

/// Per-Hz rates of one pattern.
pub fn pattern_rates(pattern: &Pattern, net: &Network, mode: CoopMode) -> RateVector {
    let mut r = vec![0.0; net.n_ues()];
    for l in pattern.links() {
        r[l.ue] += spectral_efficiency(pattern, l.ext, l.ue, net, mode);
    }
    RateVector(r)
}

/// `sum_l beta_l * pattern_rates(l)` in bits/s.
pub fn allocation_rates(alloc: &Allocation, net: &Network, mode: CoopMode) -> RateVector {
    let per_hz: Vec<RateVector> = alloc.patterns.iter().map(|p| pattern_rates(p, net, mode)).collect();
    combine_rates(&per_hz, &alloc.beta, net.n_ues())
}

/// Weighted sum of per-Hz rate vectors, accumulated in pattern order.
pub fn combine_rates(per_hz: &[RateVector], beta: &[f64], n_ues: usize) -> RateVector {
    let mut r = vec![0.0; n_ues];
    for (s, &b) in per_hz.iter().zip(beta) {
        if b == 0.0 {
            continue;
        }
        for (rj, sj) in r.iter_mut().zip(s.iter()) {
            *rj += b * sj;
        }
    }
    RateVector(r)
}

/// Utility of a rate vector; `-inf` signals an unstable queue or a zero rate under log.
/// UEs without traffic carry zero weight in the sojourn average.
pub fn utility(rates: &[f64], traffic: &TrafficProfile, spec: &UtilitySpec) -> Result<f64> {
    match spec.kind {
        UtilityKind::SumRate => Ok(rates.iter().sum()),
        UtilityKind::LogSumRate => Ok(rates.iter().map(|r| r.ln()).sum()),
        UtilityKind::Sojourn => {
            let total = traffic.total();
            if total <= 0.0 {
                return Err(Error::UndefinedUtility("sojourn utility needs positive total traffic".into()));
            }
            let mut u = 0.0;
            for (&l, &r) in traffic.lambda.iter().zip(rates) {
                if l == 0.0 {
                    continue;
                }
                let slack = r / traffic.packet_bits - l;
                if slack <= 0.0 {
                    return Ok(f64::NEG_INFINITY);
                }
                u -= (l / total) / slack;
            }
            Ok(u)
        }
    }
}

/// Gradient of the utility with respect to `r` (bits/s), with slacks floored at
/// `epsilon_grad / D` so unstable UEs get a large finite weight. Zero traffic gives zeros.
pub fn utility_gradient(rates: &[f64], traffic: &TrafficProfile, spec: &UtilitySpec) -> Vec<f64> {
    match spec.kind {
        UtilityKind::SumRate => vec![1.0; rates.len()],
        UtilityKind::LogSumRate => rates.iter().map(|r| 1.0 / r.max(spec.epsilon_grad)).collect(),
        UtilityKind::Sojourn => {
            let total = traffic.total();
            if total <= 0.0 {
                return vec![0.0; rates.len()];
            }
            let d = traffic.packet_bits;
            let eps = spec.epsilon_grad / d;
            traffic
                .lambda
                .iter()
                .zip(rates)
                .map(|(&l, &r)| {
                    let slack = (r / d - l).max(eps);
                    (l / total) / d / (slack * slack)
                })
                .collect()
        }
    }
}
