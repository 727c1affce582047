//! The five comparison scenarios and the cutoff-traffic sweep.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extended::CoopMode;
use crate::fp::FpOptions;
use crate::network::Network;
use crate::pursuit::{Pursuit, PursuitOptions};
use crate::rates::{allocation_rates, utility, Allocation, Link, Pattern, RateVector, TrafficProfile, UtilitySpec};

/// Scenarios in order of increasing freedom.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    /// Every UE on its strongest AP; APs time-share equally among their UEs.
    MaxRsrp,
    /// Pursuit over on/off patterns at full power, no cooperation.
    SpectrumUa,
    /// Pursuit with power control, no cooperation.
    PowerMgmt,
    NoncoherentComp,
    CoherentComp,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::MaxRsrp,
        ScenarioKind::SpectrumUa,
        ScenarioKind::PowerMgmt,
        ScenarioKind::NoncoherentComp,
        ScenarioKind::CoherentComp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::MaxRsrp => "max-rsrp",
            ScenarioKind::SpectrumUa => "spectrum-ua",
            ScenarioKind::PowerMgmt => "power-mgmt",
            ScenarioKind::NoncoherentComp => "noncoherent-comp",
            ScenarioKind::CoherentComp => "coherent-comp",
        }
    }

    /// Mode used to evaluate rates. Only the cooperative scenarios have virtual links,
    /// so the others are unaffected by it.
    pub fn mode(self) -> CoopMode {
        match self {
            ScenarioKind::CoherentComp => CoopMode::Coherent,
            _ => CoopMode::NonCoherent,
        }
    }

    /// Solver options with this scenario's degrees of freedom; `None` for max-rsrp.
    pub fn fp_options(self, base: FpOptions) -> Option<FpOptions> {
        let mode = self.mode();
        match self {
            ScenarioKind::MaxRsrp => None,
            ScenarioKind::SpectrumUa => Some(FpOptions { mode, allow_virtual: false, fixed_power: true, ..base }),
            ScenarioKind::PowerMgmt => Some(FpOptions { mode, allow_virtual: false, fixed_power: false, ..base }),
            ScenarioKind::NoncoherentComp | ScenarioKind::CoherentComp => {
                Some(FpOptions { mode, allow_virtual: true, fixed_power: false, ..base })
            }
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| Error::InvalidParams(format!("unknown scenario {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioResult {
    pub kind: ScenarioKind,
    pub allocation: Allocation,
    pub utility: f64,
    /// Utility before the allocation was pruned to its support; equal to `utility` for
    /// max-rsrp.
    pub unpruned_utility: f64,
    pub rates: RateVector,
    pub stable: bool,
    pub deficit: f64,
    pub outer_iterations: usize,
    pub fp_iterations: usize,
    pub converged: bool,
}

/// Strongest AP per servable UE, each AP splitting its time equally among its UEs.
/// Written as patterns: the unit interval is cut at every `q / m_i` (AP `i` with `m_i`
/// UEs) and on each piece AP `i` serves its `floor(t m_i)`-th UE at `pmax`.
pub fn max_rsrp_allocation(net: &Network) -> Allocation {
    let n = net.n_aps();
    let mut served: Vec<Vec<usize>> = vec![Vec::new(); n];
    for j in 0..net.n_ues() {
        let best =
            net.neighborhoods.get(j).iter().copied().max_by(|&a, &b| net.gains.get(a, j).total_cmp(&net.gains.get(b, j)).then(b.cmp(&a)));
        if let Some(i) = best {
            served[i].push(j);
        }
    }
    let mut cuts: Vec<f64> = vec![0.0, 1.0];
    for ues in &served {
        let m = ues.len();
        cuts.extend((1..m).map(|q| q as f64 / m as f64));
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let bandwidth = net.params.bandwidth_w;
    let mut patterns = Vec::new();
    let mut beta = Vec::new();
    for w in cuts.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        let links = served
            .iter()
            .enumerate()
            .filter(|(_, ues)| !ues.is_empty())
            .map(|(i, ues)| {
                let slot = ((mid * ues.len() as f64) as usize).min(ues.len() - 1);
                Link { ext: i, ue: ues[slot], power: net.params.pmax }
            })
            .collect();
        patterns.push(Pattern::new(links));
        beta.push((w[1] - w[0]) * bandwidth);
    }
    // Rounding in the cut widths is pushed onto the last piece.
    let total: f64 = beta[..beta.len() - 1].iter().sum();
    *beta.last_mut().expect("at least one piece") = bandwidth - total;
    Allocation { patterns, beta }
}

/// One scenario on one network. The pursuit state (pattern pool) is kept between runs
/// so later traffic levels start from everything found so far.
pub struct ScenarioRunner<'a> {
    kind: ScenarioKind,
    net: &'a Network,
    pursuit: Option<Pursuit<'a>>,
}

impl<'a> ScenarioRunner<'a> {
    pub fn new(kind: ScenarioKind, net: &'a Network, opts: &PursuitOptions) -> Self {
        let pursuit = kind.fp_options(opts.fp).map(|fp| Pursuit::new(net, PursuitOptions { fp, ..*opts }));
        ScenarioRunner { kind, net, pursuit }
    }

    pub fn kind(&self) -> ScenarioKind {
        self.kind
    }

    /// Solves at one traffic level. `warm` is typically the previous scenario's
    /// allocation at the same level; the result is then at least as good.
    pub fn run(&mut self, traffic: &TrafficProfile, spec: &UtilitySpec, warm: Option<&Allocation>) -> Result<ScenarioResult> {
        let kind = self.kind;
        match &mut self.pursuit {
            None => {
                let allocation = max_rsrp_allocation(self.net);
                let rates = allocation_rates(&allocation, self.net, kind.mode());
                let u = utility(&rates, traffic, spec)?;
                Ok(ScenarioResult {
                    kind,
                    utility: u,
                    unpruned_utility: u,
                    stable: traffic.is_stable(&rates),
                    deficit: traffic.deficit(&rates),
                    rates,
                    allocation,
                    outer_iterations: 0,
                    fp_iterations: 0,
                    converged: true,
                })
            }
            Some(pursuit) => {
                let initial;
                let start = match warm {
                    Some(a) => Some(a),
                    None if pursuit.pool().is_empty() => {
                        initial = max_rsrp_allocation(self.net);
                        Some(&initial)
                    }
                    None => None,
                };
                let r = pursuit.run(traffic, spec, start)?;
                Ok(ScenarioResult {
                    kind,
                    allocation: r.allocation,
                    utility: r.utility,
                    unpruned_utility: r.unpruned_utility,
                    rates: r.rates,
                    stable: r.stable,
                    deficit: r.deficit,
                    outer_iterations: r.outer_iterations,
                    fp_iterations: r.fp_iterations,
                    converged: r.converged,
                })
            }
        }
    }
}

/// One-shot scenario run.
pub fn run_scenario(
    kind: ScenarioKind,
    net: &Network,
    traffic: &TrafficProfile,
    spec: &UtilitySpec,
    opts: &PursuitOptions,
    warm: Option<&Allocation>,
) -> Result<ScenarioResult> {
    ScenarioRunner::new(kind, net, opts).run(traffic, spec, warm)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    /// Mean arrival rate per UE, packets/s.
    pub lambda: f64,
    pub result: ScenarioResult,
    pub wall_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CutoffResult {
    pub kind: ScenarioKind,
    /// Largest mean arrival rate found stable, packets/s.
    pub cutoff: f64,
    /// Grid points in grid order.
    pub grid: Vec<SweepPoint>,
    /// Refinement points in evaluation order.
    pub refinement: Vec<SweepPoint>,
}

impl CutoffResult {
    pub fn point(&self, lambda: f64) -> Option<&SweepPoint> {
        self.grid.iter().chain(&self.refinement).find(|p| p.lambda == lambda)
    }
}

/// Traffic at mean rate `lambda` on every servable UE.
pub fn uniform_traffic(net: &Network, lambda: f64, packet_bits: f64) -> Result<TrafficProfile> {
    TrafficProfile::uniform(&net.servable(), lambda, packet_bits)
}

/// Traffic levels for a cutoff sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// Strictly increasing mean arrival rates, packets/s.
    pub grid: Vec<f64>,
    /// Bisection stops once the bracket is at most this wide, packets/s.
    pub resolution: f64,
    /// Mean packet length, bits.
    pub packet_bits: f64,
}

/// Evaluates every grid point, then bisects between the last stable grid point and the
/// first unstable one until the bracket is at most `resolution` wide. With `previous`
/// (the sweep of a scenario with less freedom) each point is warm-started from the
/// previous scenario's allocation at the same rate, and the previous cutoff is
/// re-checked first so the cutoff cannot fall below it. Other bisection points start
/// from the allocation at the stable end of the bracket.
pub fn cutoff_sweep(
    kind: ScenarioKind,
    net: &Network,
    spec: &UtilitySpec,
    opts: &PursuitOptions,
    sweep: &SweepSpec,
    previous: Option<&CutoffResult>,
) -> Result<CutoffResult> {
    let (grid, resolution, packet_bits) = (&sweep.grid, sweep.resolution, sweep.packet_bits);
    if grid.is_empty() || grid.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(Error::InvalidTraffic("sweep grid needs positive finite rates".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidTraffic("sweep grid must be strictly increasing".into()));
    }
    if resolution.is_nan() || resolution <= 0.0 {
        return Err(Error::InvalidTraffic("sweep resolution must be positive".into()));
    }
    let mut runner = ScenarioRunner::new(kind, net, opts);
    let mut evaluate = |lambda: f64, nearby: Option<&Allocation>| -> Result<SweepPoint> {
        let traffic = uniform_traffic(net, lambda, packet_bits)?;
        let warm = previous.and_then(|p| p.point(lambda)).map(|p| &p.result.allocation).or(nearby);
        let started = std::time::Instant::now();
        let result = runner.run(&traffic, spec, warm)?;
        Ok(SweepPoint { lambda, result, wall_s: started.elapsed().as_secs_f64() })
    };
    let mut points = Vec::with_capacity(grid.len());
    for &lambda in grid.iter() {
        points.push(evaluate(lambda, None)?);
    }
    let mut refinement = Vec::new();
    let first_unstable = points.iter().position(|p| !p.result.stable);
    let mut lo = match first_unstable {
        Some(0) => 0.0,
        Some(i) => grid[i - 1],
        None => grid[grid.len() - 1],
    };
    if let Some(i) = first_unstable {
        let mut hi = grid[i];
        // Points between grid levels start from the allocation at the stable end of the
        // bracket rather than from the whole pool.
        let mut below = (i > 0).then(|| points[i - 1].result.allocation.clone());
        if let Some(prev) = previous.filter(|p| p.cutoff > lo && p.cutoff < hi) {
            let point = evaluate(prev.cutoff, below.as_ref())?;
            if point.result.stable {
                lo = prev.cutoff;
                below = Some(point.result.allocation.clone());
            } else {
                hi = prev.cutoff;
            }
            refinement.push(point);
        }
        // Below the first grid point the scenario is reported as having no stable rate.
        if lo > 0.0 {
            while hi - lo > resolution {
                let mid = 0.5 * (lo + hi);
                let point = evaluate(mid, below.as_ref())?;
                if point.result.stable {
                    lo = mid;
                    below = Some(point.result.allocation.clone());
                } else {
                    hi = mid;
                }
                refinement.push(point);
            }
        }
    }
    Ok(CutoffResult { kind, cutoff: lo, grid: points, refinement })
}

/// Sweeps `kinds` in order, each warm-started from the one before.
pub fn sweep_chain(
    kinds: &[ScenarioKind],
    net: &Network,
    spec: &UtilitySpec,
    opts: &PursuitOptions,
    sweep: &SweepSpec,
) -> Result<Vec<CutoffResult>> {
    let mut out: Vec<CutoffResult> = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let result = cutoff_sweep(kind, net, spec, opts, sweep, out.last())?;
        out.push(result);
    }
    Ok(out)
}
