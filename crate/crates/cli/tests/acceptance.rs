//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL line each and
//! exits non-zero if any fails. Set `ACCEPTANCE_ONLY=3,5` to run a subset.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::time::{Duration, Instant};

use common::{brute_force_affine, random_network, random_weights, unit_network};
use coopalloc::fp::affine_value;
use coopalloc::matching::{brute_force_selection, max_weight_selection, PairingGraph};
use coopalloc::{
    solve_affine, sweep_chain, utility, utility_gradient, CoopMode, CutoffResult, FpOptions, FpSolver, Link, Network, Pattern,
    PursuitOptions, ScenarioKind, SweepSpec, TrafficProfile, UtilityKind, UtilitySpec,
};
use coopalloc_cli::{run_experiment, validate_mm1, ExperimentConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn fp_monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut updates, mut worst) = (0usize, 0.0f64);
    let mut failure = None;
    for instance in 0..50u64 {
        let n = rng.random_range(2..=16);
        let k = rng.random_range(2..=48);
        let net = random_network(n, k, 1000 + instance);
        let c = random_weights(k, 2000 + instance);
        for mode in [CoopMode::Coherent, CoopMode::NonCoherent] {
            let mut s = FpSolver::new(&net, &c, FpOptions { mode, ..FpOptions::default() });
            let mut last = s.objective();
            for cycle in 0..200 {
                let start = last;
                for step in 0..5 {
                    match step {
                        0 => s.update_gamma(),
                        1 => s.update_y(),
                        2 => s.update_p(),
                        3 => s.update_u(),
                        _ => {
                            s.update_d();
                        }
                    }
                    let now = s.objective();
                    updates += 1;
                    let drop = (last - now) / last.abs().max(f64::MIN_POSITIVE);
                    worst = worst.max(drop);
                    if drop > 1e-9 && failure.is_none() {
                        failure = Some(format!("instance {instance} {mode:?} cycle {cycle} step {step}: {last} -> {now}"));
                    }
                    last = now;
                }
                if last - start <= 1e-9 * last.abs() {
                    break;
                }
            }
        }
    }
    match failure {
        None => outcome(true, format!("{updates} updates, largest relative drop {worst:.2e}")),
        Some(f) => outcome(false, f),
    }
}

fn matching_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut loops = 0;
    for g in 0..200 {
        let n = rng.random_range(1..=10);
        let mut all: Vec<(usize, usize)> = (0..n).flat_map(|a| (a..n).map(move |b| (a, b))).collect();
        for i in (1..all.len()).rev() {
            all.swap(i, rng.random_range(0..=i));
        }
        let m = rng.random_range(0..=all.len().min(20));
        let edges: Vec<(usize, usize, f64)> = all[..m].iter().map(|&(a, b)| (a, b, rng.random_range(-1.0..1.0))).collect();
        loops += edges.iter().filter(|e| e.0 == e.1).count();
        let graph = PairingGraph::new(n, edges).unwrap();
        let fast = max_weight_selection(&graph);
        let slow = brute_force_selection(&graph).unwrap();
        if !graph.is_feasible(&fast.edges) || fast.weight != slow.weight {
            return outcome(false, format!("graph {g}: matching {} vs brute force {}", fast.weight, slow.weight));
        }
    }
    outcome(true, format!("200 graphs ({loops} self-loops), all exactly equal"))
}

/// Best per-Hz rate over the five ways two APs can serve one UE, each active transmitter
/// on a 101-point power grid.
fn two_ap_enumeration(net: &Network, mode: CoopMode) -> (f64, Pattern) {
    let pmax = net.params.pmax;
    let grid: Vec<f64> = (0..=100).map(|i| pmax * i as f64 / 100.0).collect();
    let virt = net.ext.virtual_id(0, 1).expect("the pair shares the UE's neighborhood");
    let link = |ext, power| Link { ext, ue: 0, power };
    let mut shapes: Vec<Pattern> = vec![Pattern::silent()];
    for &p in &grid {
        shapes.push(Pattern::new(vec![link(0, p)]));
        shapes.push(Pattern::new(vec![link(1, p)]));
        shapes.push(Pattern::new(vec![link(virt, p)]));
        for &q in &grid {
            shapes.push(Pattern::new(vec![link(0, p), link(1, q)]));
        }
    }
    shapes.into_iter().map(|p| (affine_value(net, &[1.0], &p, mode), p)).max_by(|a, b| a.0.total_cmp(&b.0)).unwrap()
}

fn two_ap_optimum() -> Outcome {
    let g = 3.0;
    let net = unit_network(&[vec![g], vec![g]]);
    let virt = net.ext.virtual_id(0, 1).unwrap();
    let mut details = Vec::new();
    for (mode, factor) in [(CoopMode::Coherent, 4.0), (CoopMode::NonCoherent, 2.0)] {
        let closed = (1.0 + factor * g * net.params.pmax / net.params.n0).log2();
        let (oracle, oracle_pattern) = two_ap_enumeration(&net, mode);
        let sol = solve_affine(&net, &[1.0], &FpOptions { mode, ..FpOptions::default() });
        let cooperative = sol.pattern.links() == [Link { ext: virt, ue: 0, power: net.params.pmax }];
        let ok = cooperative
            && (sol.value - closed).abs() <= 1e-6 * closed
            && (oracle - closed).abs() <= 1e-6 * closed
            && oracle_pattern.links().first().map(|l| l.ext) == Some(virt);
        details.push(format!("{mode:?} {:.9} (closed form {closed:.9}, enumeration {oracle:.9})", sol.value));
        if !ok {
            return outcome(false, format!("{}; pattern {:?}", details.join(", "), sol.pattern.links()));
        }
    }
    outcome(true, details.join(", "))
}

fn small_instances() -> Outcome {
    let mut worst = f64::INFINITY;
    for seed in 0..10u64 {
        let net = random_network(4, 4, 300 + seed);
        let c = vec![1.0; 4];
        for mode in [CoopMode::Coherent, CoopMode::NonCoherent] {
            let (best, _) = brute_force_affine(&net, &c, mode, true);
            let sol = solve_affine(&net, &c, &FpOptions { mode, ..FpOptions::default() });
            if best > 0.0 {
                worst = worst.min(sol.value / best);
            }
        }
    }
    outcome(worst >= 0.98, format!("worst ratio to brute force {worst:.6} over 10 instances x 2 modes"))
}

/// Random rates with every queue at least 40% idle, where a 1e-3 step resolves the
/// derivative to the required accuracy.
fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let d = 1e6;
    let mut worst = 0.0f64;
    for point in 0..20 {
        let k = rng.random_range(1..=30);
        let rates: Vec<f64> = (0..k).map(|_| rng.random_range(1e6..1e8)).collect();
        let lambda: Vec<f64> = rates.iter().map(|r| rng.random_range(0.05..0.6) * r / d).collect();
        let traffic = TrafficProfile::new(lambda, d).unwrap();
        for kind in [UtilityKind::Sojourn, UtilityKind::LogSumRate, UtilityKind::SumRate] {
            let spec = UtilitySpec::new(kind);
            let grad = utility_gradient(&rates, &traffic, &spec);
            for j in 0..k {
                let h = 1e-3 * rates[j];
                let mut up = rates.clone();
                let mut down = rates.clone();
                up[j] += h;
                down[j] -= h;
                let fd = (utility(&up, &traffic, &spec).unwrap() - utility(&down, &traffic, &spec).unwrap()) / (2.0 * h);
                let err = (grad[j] - fd).abs() / fd.abs();
                if err > worst {
                    worst = err;
                }
                if err > 1e-5 {
                    return outcome(false, format!("point {point} {kind:?} UE {j}: analytic {} vs difference {fd}", grad[j]));
                }
            }
        }
    }
    outcome(true, format!("20 points x 3 utilities, worst relative error {worst:.2e}"))
}

fn mm1() -> Outcome {
    let half = validate_mm1(5.0, 10.0, 1_000_000, 11).unwrap();
    let heavy = validate_mm1(9.0, 10.0, 1_000_000, 12).unwrap();
    let pass = half.relative_error() <= 0.03 && heavy.relative_error() <= 0.05;
    outcome(
        pass,
        format!(
            "rho 0.5: {:.5} s vs {:.5} s ({:.2}%); rho 0.9: {:.5} s vs {:.5} s ({:.2}%)",
            half.simulated,
            half.analytic,
            100.0 * half.relative_error(),
            heavy.simulated,
            heavy.analytic,
            100.0 * heavy.relative_error()
        ),
    )
}

/// Checks utilities at every shared rate and the cutoffs along one warm-started chain.
fn chain_ordering(sweeps: &[CutoffResult]) -> Result<(), String> {
    for pair in sweeps.windows(2) {
        let (lo, hi) = (&pair[0], &pair[1]);
        if hi.cutoff < lo.cutoff {
            return Err(format!("cutoff {} {} > {} {}", lo.kind, lo.cutoff, hi.kind, hi.cutoff));
        }
        for p in &lo.grid {
            let q = hi.point(p.lambda).expect("same grid");
            let (a, b) = (p.result.utility, q.result.utility);
            if a.is_finite() && b < a - 1e-9 * a.abs() {
                return Err(format!("utility at {}: {} {a} > {} {b}", p.lambda, lo.kind, hi.kind));
            }
        }
    }
    Ok(())
}

/// Every final allocation is supported on at most `k` patterns and pruning did not
/// change the utility.
fn sparsity_violations(sweeps: &[CutoffResult], k: usize) -> (usize, Vec<String>) {
    let mut checked = 0;
    let mut bad = Vec::new();
    for s in sweeps {
        for p in s.grid.iter().chain(&s.refinement) {
            checked += 1;
            let r = &p.result;
            let support = r.allocation.active_count();
            let (a, b) = (r.unpruned_utility, r.utility);
            let same = if a.is_finite() { (a - b).abs() <= 1e-9 * a.abs() } else { !b.is_finite() || b >= a };
            if support > k || !same {
                bad.push(format!("{} at {}: {support} patterns, utility {a} -> {b}", s.kind, p.lambda));
            }
        }
    }
    (checked, bad)
}

fn paper_grid() -> Vec<f64> {
    ExperimentConfig::default().sweep.grid
}

fn desk_ordering(sparsity: &mut Vec<(usize, Vec<String>)>) -> Outcome {
    let sweep = SweepSpec { grid: paper_grid(), resolution: 0.1, packet_bits: 1e6 };
    let spec = UtilitySpec::new(UtilityKind::Sojourn);
    let started = Instant::now();
    let mut cutoffs = Vec::new();
    for seed in 1..=5u64 {
        let net = random_network(16, 48, seed);
        let opts = PursuitOptions { seed, ..PursuitOptions::default() };
        let sweeps = sweep_chain(&ScenarioKind::ALL, &net, &spec, &opts, &sweep).unwrap();
        sparsity.push(sparsity_violations(&sweeps, net.n_ues()));
        if let Err(e) = chain_ordering(&sweeps) {
            return outcome(false, format!("seed {seed}: {e}"));
        }
        cutoffs.push(sweeps.iter().map(|s| format!("{:.1}", s.cutoff)).collect::<Vec<_>>().join("/"));
    }
    let elapsed = started.elapsed();
    outcome(elapsed < Duration::from_secs(600), format!("cutoffs {} in {:.0} s", cutoffs.join(", "), elapsed.as_secs_f64()))
}

fn paper_scale() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig { out_dir: dir.path().to_path_buf(), ..ExperimentConfig::default() };
    let started = Instant::now();
    let summary = run_experiment(&config, |s| {
        eprintln!("    paper scale: {} cutoff {:.2} after {:.0} s", s.kind, s.cutoff, started.elapsed().as_secs_f64())
    })
    .unwrap();
    let elapsed = started.elapsed();
    let cut: Vec<f64> = summary.cutoffs.iter().map(|c| c.1).collect();
    let ordered = cut.windows(2).all(|w| w[0] <= w[1]);
    let power = summary.cutoffs.iter().find(|c| c.0 == ScenarioKind::PowerMgmt).unwrap().1;
    let coherent = summary.cutoffs.iter().find(|c| c.0 == ScenarioKind::CoherentComp).unwrap().1;
    let ratio = coherent / power;
    let pass = elapsed < Duration::from_secs(3600) && ordered && ratio >= 1.15;
    outcome(
        pass,
        format!(
            "cutoffs {} packets/s (reference 9/11/12/14/16), coherent/power-mgmt {ratio:.3}, {:.0} s",
            cut.iter().map(|c| format!("{c:.1}")).collect::<Vec<_>>().join("/"),
            elapsed.as_secs_f64()
        ),
    )
}

fn main() {
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let wanted = |n: usize| only.as_ref().is_none_or(|o| o.contains(&n));
    let mut sparsity = Vec::new();
    let mut failed = 0;
    let mut report = |n: usize, name: &str, limit: Option<Duration>, run: &mut dyn FnMut() -> Outcome| {
        if !wanted(n) {
            return;
        }
        let started = Instant::now();
        let mut o = run();
        let elapsed = started.elapsed();
        if let Some(limit) = limit {
            if elapsed > limit {
                o.pass = false;
                o.detail.push_str(&format!("; took {:.1} s, limit {:.0} s", elapsed.as_secs_f64(), limit.as_secs_f64()));
            }
        }
        failed += usize::from(!o.pass);
        println!("[{}] criterion {n}: {name}: {} ({:.2} s)", if o.pass { "PASS" } else { "FAIL" }, o.detail, elapsed.as_secs_f64());
    };
    report(1, "FP objective monotone", Some(Duration::from_secs(60)), &mut fp_monotonicity);
    report(2, "matching exact", Some(Duration::from_secs(10)), &mut matching_exactness);
    report(3, "two-AP analytic optimum", Some(Duration::from_secs(1)), &mut two_ap_optimum);
    report(4, "small-instance near-optimality", Some(Duration::from_secs(120)), &mut small_instances);
    report(5, "gradient vs finite differences", None, &mut gradient_check);
    report(6, "M/M/1 sojourn", None, &mut mm1);
    report(7, "desk-scale scenario ordering", Some(Duration::from_secs(600)), &mut || desk_ordering(&mut sparsity));
    report(9, "sparse final allocations", None, &mut || {
        if sparsity.is_empty() {
            return outcome(false, "needs the criterion 7 runs".into());
        }
        let checked: usize = sparsity.iter().map(|s| s.0).sum();
        let bad: Vec<&String> = sparsity.iter().flat_map(|s| &s.1).collect();
        match bad.first() {
            None => outcome(true, format!("{checked} allocations at most k patterns, pruned utility unchanged")),
            Some(first) => outcome(false, format!("{} of {checked} violate, first: {first}", bad.len())),
        }
    });
    report(8, "paper-scale pipeline", Some(Duration::from_secs(3600)), &mut paper_scale);
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
