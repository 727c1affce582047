//! Bandwidth split over a fixed pattern set.
//!
//! The utility is concave in the split and is maximized over the simplex of bandwidth
//! fractions by an active-set Newton method certified by the Frank-Wolfe gap. Under the sojourn utility the start
//! must stabilize every queue; it comes from a max-margin linear program, and when no
//! split is stable the split minimizing the total rate deficit is returned instead.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolution, DefaultSolver, IPSolver, NonnegativeConeT, SolverStatus, ZeroConeT};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rates::{combine_rates, utility, RateVector, TrafficProfile, UtilityKind, UtilitySpec};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MasterOptions {
    /// Stop when the duality gap `max_l g_l - g.x` is at most `gap_tol * |U|`.
    pub gap_tol: f64,
    pub max_iters: usize,
}

impl Default for MasterOptions {
    fn default() -> Self {
        MasterOptions { gap_tol: 1e-8, max_iters: 500 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MasterSolution {
    /// Hz per pattern, summing to the bandwidth.
    pub beta: Vec<f64>,
    pub utility: f64,
    pub rates: RateVector,
    /// False when no split stabilizes every queue under the sojourn utility; `beta`
    /// then minimizes the total deficit.
    pub stable: bool,
    /// Total shortfall in bits/s.
    pub deficit: f64,
    /// Last duality gap, in utility units.
    pub gap: f64,
    pub iterations: usize,
}

pub fn solve_beta(
    per_hz: &[RateVector],
    traffic: &TrafficProfile,
    spec: &UtilitySpec,
    bandwidth: f64,
    opts: &MasterOptions,
) -> Result<MasterSolution> {
    solve_beta_from(per_hz, traffic, spec, bandwidth, opts, None)
}

/// Like [`solve_beta`], starting from `start` (Hz per pattern) when it is usable. A
/// usable start is never made worse.
pub fn solve_beta_from(
    per_hz: &[RateVector],
    traffic: &TrafficProfile,
    spec: &UtilitySpec,
    bandwidth: f64,
    opts: &MasterOptions,
    start: Option<&[f64]>,
) -> Result<MasterSolution> {
    let k = traffic.lambda.len();
    if per_hz.is_empty() {
        return Err(Error::InvalidAllocation("the pattern set is empty".into()));
    }
    if let Some(r) = per_hz.iter().find(|r| r.len() != k) {
        return Err(Error::InvalidAllocation(format!("rate vector has {} entries for {k} UEs", r.len())));
    }
    if !(bandwidth.is_finite() && bandwidth > 0.0) {
        return Err(Error::InvalidAllocation(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let master = Master { per_hz, traffic, spec, bandwidth, k };

    let mut x = match start {
        Some(beta) => {
            if beta.len() != per_hz.len() || beta.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
                return Err(Error::InvalidAllocation("start split does not match the pattern set".into()));
            }
            let total: f64 = beta.iter().sum();
            if total <= 0.0 {
                return Err(Error::InvalidAllocation("start split is empty".into()));
            }
            beta.iter().map(|b| b / total).collect()
        }
        None => vec![1.0 / per_hz.len() as f64; per_hz.len()],
    };
    if spec.kind == UtilityKind::Sojourn {
        if traffic.total() <= 0.0 {
            return Err(Error::UndefinedUtility("sojourn utility needs positive total traffic".into()));
        }
        if !traffic.is_stable(&master.rates(&x)) {
            match master.max_margin()? {
                Some(stable) => x = stable,
                None => return master.finish(master.min_deficit()?, f64::INFINITY, 0),
            }
        }
    }
    let (x, gap, iterations) = master.ascend(x, opts);
    master.finish(x, gap, iterations)
}

struct Master<'a> {
    per_hz: &'a [RateVector],
    traffic: &'a TrafficProfile,
    spec: &'a UtilitySpec,
    bandwidth: f64,
    k: usize,
}

impl Master<'_> {
    fn rates(&self, x: &[f64]) -> RateVector {
        let beta: Vec<f64> = x.iter().map(|v| v * self.bandwidth).collect();
        combine_rates(self.per_hz, &beta, self.k)
    }

    fn utility(&self, rates: &[f64]) -> f64 {
        utility(rates, self.traffic, self.spec).unwrap_or(f64::NEG_INFINITY)
    }

    fn finish(&self, x: Vec<f64>, gap: f64, iterations: usize) -> Result<MasterSolution> {
        let rates = self.rates(&x);
        let stable = self.spec.kind != UtilityKind::Sojourn || self.traffic.is_stable(&rates);
        Ok(MasterSolution {
            beta: x.iter().map(|v| v * self.bandwidth).collect(),
            utility: self.utility(&rates),
            deficit: self.traffic.deficit(&rates),
            rates,
            stable,
            gap,
            iterations,
        })
    }

    /// Exact `dU/dr_j`, valid where the utility is finite.
    fn marginal(&self, rates: &[f64]) -> Vec<f64> {
        match self.spec.kind {
            UtilityKind::SumRate => vec![1.0; self.k],
            UtilityKind::LogSumRate => rates.iter().map(|r| 1.0 / r).collect(),
            UtilityKind::Sojourn => {
                let total = self.traffic.total();
                let d = self.traffic.packet_bits;
                self.traffic
                    .lambda
                    .iter()
                    .zip(rates)
                    .map(|(&l, &r)| if l == 0.0 { 0.0 } else { (l / total) / d / (r / d - l).powi(2) })
                    .collect()
            }
        }
    }

    /// `d2U/dr_j^2`, valid where the utility is finite.
    fn curvature(&self, rates: &[f64]) -> Vec<f64> {
        match self.spec.kind {
            UtilityKind::SumRate => vec![0.0; self.k],
            UtilityKind::LogSumRate => rates.iter().map(|r| -1.0 / (r * r)).collect(),
            UtilityKind::Sojourn => {
                let total = self.traffic.total();
                let d = self.traffic.packet_bits;
                self.traffic
                    .lambda
                    .iter()
                    .zip(rates)
                    .map(|(&l, &r)| if l == 0.0 { 0.0 } else { -2.0 * (l / total) / (d * d) / (r / d - l).powi(3) })
                    .collect()
            }
        }
    }

    /// Active-set Newton ascent on the simplex. Each iteration adds the pattern with the
    /// largest gradient when it is outside the support, takes a Newton step restricted to
    /// the support and the simplex, and line-searches it exactly. The Frank-Wolfe gap
    /// `max_l g_l - g.x` bounds the distance to the optimum and ends the loop.
    fn ascend(&self, mut x: Vec<f64>, opts: &MasterOptions) -> (Vec<f64>, f64, usize) {
        let mut rates = self.rates(&x);
        let mut value = self.utility(&rates);
        if !value.is_finite() {
            return (x, f64::INFINITY, 0);
        }
        let mut gap = f64::INFINITY;
        let mut iterations = 0;
        while iterations < opts.max_iters {
            let m = self.marginal(&rates);
            let g: Vec<f64> = self.per_hz.iter().map(|r| self.bandwidth * dot(r, &m)).collect();
            let s = argmax(&g);
            gap = g[s] - dot(&g, &x);
            if gap <= opts.gap_tol * value.abs().max(f64::MIN_POSITIVE) {
                break;
            }
            iterations += 1;
            let mut support: Vec<usize> = (0..x.len()).filter(|&l| x[l] > 0.0).collect();
            if x[s] == 0.0 {
                support.push(s);
            }
            let ascent = |support: &[usize], d: &[f64]| support.iter().zip(d).map(|(&l, dl)| g[l] * dl).sum::<f64>() > 0.0;
            // Entries at zero that the step would push negative leave the support.
            let mut newton = None;
            while !support.is_empty() {
                let Some(d) = self.newton_direction(&support, &g, &rates) else { break };
                let blocked: Vec<usize> = (0..support.len()).filter(|&i| d[i] < 0.0 && x[support[i]] == 0.0).collect();
                if blocked.is_empty() {
                    newton = ascent(&support, &d).then_some(d);
                    break;
                }
                support = support.iter().enumerate().filter(|(i, _)| !blocked.contains(i)).map(|(_, &l)| l).collect();
            }
            let mut candidates = Vec::new();
            if let Some(d) = newton {
                candidates.push((support.clone(), d));
            }
            let mut fw_support: Vec<usize> = (0..x.len()).filter(|&l| x[l] > 0.0 || l == s).collect();
            fw_support.sort_unstable();
            let fw: Vec<f64> = fw_support.iter().map(|&l| if l == s { 1.0 - x[l] } else { -x[l] }).collect();
            candidates.push((fw_support, fw));

            let mut moved = None;
            for (support, direction) in candidates {
                let mut max_step = f64::INFINITY;
                for (&l, &dl) in support.iter().zip(&direction) {
                    if dl < 0.0 {
                        max_step = max_step.min(x[l] / -dl);
                    }
                }
                let mut delta = vec![0.0; self.k];
                for (&l, &dl) in support.iter().zip(&direction) {
                    for (dj, r) in delta.iter_mut().zip(self.per_hz[l].iter()) {
                        *dj += self.bandwidth * dl * r;
                    }
                }
                let step = self.line_search(&rates, &delta, max_step);
                if step > 0.0 {
                    moved = Some((support, direction, step, max_step));
                    break;
                }
            }
            let Some((support, direction, step, max_step)) = moved else { break };
            let mut next = x.clone();
            for (&l, &dl) in support.iter().zip(&direction) {
                next[l] = if step >= max_step && dl < 0.0 && x[l] / -dl <= max_step { 0.0 } else { (x[l] + step * dl).max(0.0) };
            }
            let total: f64 = next.iter().sum();
            next.iter_mut().for_each(|v| *v /= total);
            let next_rates = self.rates(&next);
            let next_value = self.utility(&next_rates);
            if next_value.is_nan() || next_value < value {
                break;
            }
            (x, rates, value) = (next, next_rates, next_value);
        }
        (x, gap, iterations)
    }

    /// Maximizer of the second-order model over `{d : sum d = 0}` on `support`, with a
    /// small ridge so rank-deficient supports still give a step.
    fn newton_direction(&self, support: &[usize], g: &[f64], rates: &[f64]) -> Option<Vec<f64>> {
        let n = support.len();
        let curv = self.curvature(rates);
        let w2 = self.bandwidth * self.bandwidth;
        let mut h = DMatrix::<f64>::zeros(n, n);
        for a in 0..n {
            for b in a..n {
                let (ra, rb) = (&self.per_hz[support[a]], &self.per_hz[support[b]]);
                let v = w2 * (0..self.k).map(|j| curv[j] * ra[j] * rb[j]).sum::<f64>();
                h[(a, b)] = v;
                h[(b, a)] = v;
            }
        }
        let scale = (0..n).map(|a| h[(a, a)].abs()).fold(0.0, f64::max);
        let ridge = if scale > 0.0 { 1e-10 * scale } else { 1.0 };
        let mut kkt = DMatrix::<f64>::zeros(n + 1, n + 1);
        let mut rhs = DVector::<f64>::zeros(n + 1);
        for a in 0..n {
            for b in 0..n {
                kkt[(a, b)] = h[(a, b)];
            }
            kkt[(a, a)] -= ridge;
            kkt[(a, n)] = 1.0;
            kkt[(n, a)] = 1.0;
            rhs[a] = -g[support[a]];
        }
        let solution = kkt.lu().solve(&rhs)?;
        let d: Vec<f64> = solution.iter().take(n).copied().collect();
        d.iter().all(|v| v.is_finite()).then_some(d)
    }

    /// Largest step in `[0, max_step]` with non-negative directional derivative, by
    /// bisection. Steps that would destabilize a queue or zero a log-utility rate are
    /// excluded.
    fn line_search(&self, rates: &[f64], delta: &[f64], max_step: f64) -> f64 {
        let d = self.traffic.packet_bits;
        let mut limit = max_step;
        let mut open = false;
        for j in 0..self.k {
            if delta[j] >= 0.0 {
                continue;
            }
            let room = match self.spec.kind {
                UtilityKind::SumRate => continue,
                UtilityKind::LogSumRate => rates[j],
                UtilityKind::Sojourn if self.traffic.lambda[j] == 0.0 => continue,
                UtilityKind::Sojourn => rates[j] - self.traffic.lambda[j] * d,
            };
            let bound = room / -delta[j];
            if bound <= limit {
                limit = bound;
                open = true;
            }
        }
        let slope = |t: f64| -> f64 {
            let at: Vec<f64> = rates.iter().zip(delta).map(|(r, dr)| r + t * dr).collect();
            dot(&self.marginal(&at), delta)
        };
        if slope(0.0) <= 0.0 {
            return 0.0;
        }
        if !open && slope(limit) >= 0.0 {
            return limit;
        }
        let (mut lo, mut hi) = (0.0, limit);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if slope(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// Split maximizing the smallest queue margin, when that margin is positive.
    fn max_margin(&self) -> Result<Option<Vec<f64>>> {
        let x = margin_lp(self.per_hz, self.traffic, self.bandwidth)?.split;
        Ok(self.traffic.is_stable(&self.rates(&x)).then_some(x))
    }

    /// Split minimizing `sum_j max(lambda_j D - r_j, 0)`.
    fn min_deficit(&self) -> Result<Vec<f64>> {
        deficit_lp(self.per_hz, self.traffic, self.bandwidth)
    }
}

/// Dual of the max-margin split over a pattern set.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginPrices {
    /// UE weights, summing to one over loaded UEs and zero elsewhere.
    pub prices: Vec<f64>,
    /// Largest per-Hz value `sum_j pi_j r_lj` any of the patterns reaches. A new pattern
    /// worth more than this raises the best achievable margin; when none exists the
    /// set's margin is the best over all patterns.
    pub threshold: f64,
    /// Best achievable smallest queue margin `r_j / D - lambda_j`, packets/s.
    pub margin: f64,
    /// A split reaching it, as fractions of the band.
    pub split: Vec<f64>,
}

pub fn margin_prices(per_hz: &[RateVector], traffic: &TrafficProfile, bandwidth: f64) -> Result<MarginPrices> {
    let lp = margin_lp(per_hz, traffic, bandwidth)?;
    let threshold = per_hz.iter().map(|r| dot(r, &lp.prices)).fold(0.0, f64::max);
    Ok(MarginPrices { prices: lp.prices, threshold, margin: lp.margin, split: lp.split })
}

struct MarginLp {
    split: Vec<f64>,
    margin: f64,
    prices: Vec<f64>,
}

/// `max t` subject to `sum_l x_l (W/D) r_lj - t >= lambda_j` for loaded UEs, `x` on the
/// simplex. The multipliers of the queue rows are the prices.
fn margin_lp(per_hz: &[RateVector], traffic: &TrafficProfile, bandwidth: f64) -> Result<MarginLp> {
    let k = traffic.lambda.len();
    let loaded: Vec<usize> = (0..k).filter(|&j| traffic.lambda[j] > 0.0).collect();
    if loaded.is_empty() || per_hz.is_empty() {
        return Err(Error::InvalidTraffic("the margin split needs traffic and at least one pattern".into()));
    }
    let (m, q) = (per_hz.len(), loaded.len());
    let scale = bandwidth / traffic.packet_bits;
    // Rows: the simplex equality, one per loaded UE, then x >= 0.
    let mut a = ColumnBuilder::default();
    for (l, r) in per_hz.iter().enumerate() {
        a.push(0, 1.0);
        for (row, &j) in loaded.iter().enumerate() {
            a.push(1 + row, -scale * r[j]);
        }
        a.push(1 + q + l, -1.0);
        a.close();
    }
    for row in 0..q {
        a.push(1 + row, 1.0);
    }
    a.close();
    let mut b = vec![1.0];
    b.extend(loaded.iter().map(|&j| -traffic.lambda[j]));
    b.extend(std::iter::repeat_n(0.0, m));
    let mut cost = vec![0.0; m + 1];
    cost[m] = -1.0;
    let solution = solve_lp(a.finish(1 + q + m, m + 1), &cost, &b, q + m)?;

    let total: f64 = solution.z[1..=q].iter().map(|v| v.max(0.0)).sum();
    let mut prices = vec![0.0; k];
    for (row, &j) in loaded.iter().enumerate() {
        prices[j] = solution.z[1 + row].max(0.0) / total;
    }
    Ok(MarginLp { split: cleaned(&solution.x[..m]), margin: solution.x[m], prices })
}

/// `min sum_j s_j` subject to `sum_l x_l (W/D) r_lj + s_j >= lambda_j`, `s >= 0`, `x` on
/// the simplex.
fn deficit_lp(per_hz: &[RateVector], traffic: &TrafficProfile, bandwidth: f64) -> Result<Vec<f64>> {
    let k = traffic.lambda.len();
    let loaded: Vec<usize> = (0..k).filter(|&j| traffic.lambda[j] > 0.0).collect();
    if loaded.is_empty() || per_hz.is_empty() {
        return Err(Error::InvalidTraffic("the deficit split needs traffic and at least one pattern".into()));
    }
    let (m, q) = (per_hz.len(), loaded.len());
    let scale = bandwidth / traffic.packet_bits;
    // Rows: the simplex equality, one per loaded UE, x >= 0, then s >= 0.
    let mut a = ColumnBuilder::default();
    for (l, r) in per_hz.iter().enumerate() {
        a.push(0, 1.0);
        for (row, &j) in loaded.iter().enumerate() {
            a.push(1 + row, -scale * r[j]);
        }
        a.push(1 + q + l, -1.0);
        a.close();
    }
    for row in 0..q {
        a.push(1 + row, -1.0);
        a.push(1 + q + m + row, -1.0);
        a.close();
    }
    let mut b = vec![1.0];
    b.extend(loaded.iter().map(|&j| -traffic.lambda[j]));
    b.extend(std::iter::repeat_n(0.0, m + q));
    let mut cost = vec![0.0; m + q];
    cost[m..].iter_mut().for_each(|c| *c = 1.0);
    let solution = solve_lp(a.finish(1 + q + m + q, m + q), &cost, &b, q + m + q)?;
    Ok(cleaned(&solution.x[..m]))
}

/// Compressed-column matrix assembled one column at a time, rows ascending.
#[derive(Default)]
struct ColumnBuilder {
    colptr: Vec<usize>,
    rowval: Vec<usize>,
    nzval: Vec<f64>,
}

impl ColumnBuilder {
    fn push(&mut self, row: usize, value: f64) {
        if self.colptr.is_empty() {
            self.colptr.push(0);
        }
        if value != 0.0 {
            self.rowval.push(row);
            self.nzval.push(value);
        }
    }

    fn close(&mut self) {
        if self.colptr.is_empty() {
            self.colptr.push(0);
        }
        self.colptr.push(self.rowval.len());
    }

    fn finish(self, rows: usize, cols: usize) -> CscMatrix<f64> {
        debug_assert_eq!(self.colptr.len(), cols + 1);
        CscMatrix::new(rows, cols, self.colptr, self.rowval, self.nzval)
    }
}

/// Solves `min cost.x` subject to `A x + s = b` with the first row an equality and the
/// next `inequalities` rows `s >= 0`.
fn solve_lp(a: CscMatrix<f64>, cost: &[f64], b: &[f64], inequalities: usize) -> Result<DefaultSolution<f64>> {
    let n = cost.len();
    let p = CscMatrix::<f64>::zeros((n, n));
    let cones = [ZeroConeT(1), NonnegativeConeT(inequalities)];
    let settings = DefaultSettingsBuilder::default().verbose(false).build().map_err(|e| Error::Lp(format!("{e:?}")))?;
    let mut solver = DefaultSolver::new(&p, cost, &a, b, &cones, settings).map_err(|e| Error::Lp(format!("{e:?}")))?;
    solver.solve();
    match solver.solution.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => Ok(solver.solution),
        status => Err(Error::Lp(format!("{status:?}"))),
    }
}

/// Interior-point shares, with the numerically zero ones dropped, back on the simplex.
fn cleaned(x: &[f64]) -> Vec<f64> {
    let top = x.iter().fold(0.0f64, |m, v| m.max(*v));
    normalized(x.iter().map(|&v| if v > 1e-9 * top { v } else { 0.0 }).collect())
}

fn normalized(mut x: Vec<f64>) -> Vec<f64> {
    x.iter_mut().for_each(|v| *v = v.max(0.0));
    let total: f64 = x.iter().sum();
    x.iter_mut().for_each(|v| *v /= total);
    x
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// First index of the largest entry.
fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Rewrites `beta` on at most `limit` patterns without changing the rate vector, by
/// moving along null directions of the rate matrix (Carathéodory reduction). Returns
/// `None` when the active rate vectors are affinely independent so no exact reduction
/// exists.
pub fn sparsify(per_hz: &[RateVector], beta: &[f64], limit: usize) -> Option<Vec<f64>> {
    let mut beta = beta.to_vec();
    loop {
        let active: Vec<usize> = (0..beta.len()).filter(|&l| beta[l] > 0.0).collect();
        if active.len() <= limit.max(1) {
            return Some(beta);
        }
        let z = null_direction(per_hz, &active)?;
        // Step along z until the first active share reaches zero.
        let (mut step, mut hit) = (f64::INFINITY, active[0]);
        for (i, &l) in active.iter().enumerate() {
            if z[i] > 0.0 && beta[l] / z[i] < step {
                step = beta[l] / z[i];
                hit = l;
            }
        }
        for (i, &l) in active.iter().enumerate() {
            beta[l] = (beta[l] - step * z[i]).max(0.0);
        }
        beta[hit] = 0.0;
    }
}

/// Nonzero `z` with `sum z = 0` and `sum_i z_i r^{active_i} = 0`: the right singular
/// vector of the row-scaled system with the smallest singular value, when that value is
/// negligible.
fn null_direction(per_hz: &[RateVector], active: &[usize]) -> Option<Vec<f64>> {
    let cols = active.len();
    let k = per_hz[active[0]].len();
    // Zero rows pad the system to at least square so every right singular vector is
    // returned.
    let mut m = DMatrix::<f64>::zeros((k + 1).max(cols), cols);
    for c in 0..cols {
        m[(0, c)] = 1.0;
    }
    for j in 0..k {
        let scale = active.iter().map(|&l| per_hz[l][j].abs()).fold(0.0, f64::max);
        if scale > 0.0 {
            for (c, &l) in active.iter().enumerate() {
                m[(j + 1, c)] = per_hz[l][j] / scale;
            }
        }
    }
    let svd = m.svd(false, true);
    let v_t = svd.v_t?;
    let sigma = &svd.singular_values;
    let top = sigma.iter().fold(0.0f64, |a, &b| a.max(b));
    let (row, &smallest) = sigma.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1))?;
    if smallest > 1e-10 * top {
        return None;
    }
    let mut z: Vec<f64> = v_t.row(row).iter().copied().collect();
    // Orient so that some share decreases.
    if z.iter().all(|v| *v <= 0.0) {
        z.iter_mut().for_each(|v| *v = -*v);
    }
    Some(z)
}
