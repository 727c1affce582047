mod common;

use coopalloc::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sojourn() -> UtilitySpec {
    UtilitySpec::new(UtilityKind::Sojourn)
}

fn uniform(net: &Network, lambda: f64) -> TrafficProfile {
    TrafficProfile::uniform(&net.servable(), lambda, 1e6).unwrap()
}

/// Every entry at least the previous one: utility once stable, deficit before.
fn assert_monotone(trace: &[Progress]) {
    for w in trace.windows(2) {
        let (a, b) = (w[0], w[1]);
        assert!(!(a.stable && !b.stable), "lost stability: {trace:?}");
        if a.stable {
            assert!(b.utility >= a.utility - 1e-9 * a.utility.abs(), "{} -> {}", a.utility, b.utility);
        } else if !b.stable {
            assert!(b.deficit <= a.deficit + 1e-9 * a.deficit, "{} -> {}", a.deficit, b.deficit);
        }
    }
}

#[test]
fn sum_rate_trace_never_decreases() {
    for seed in 0..4 {
        let net = common::random_network(8, 16, seed);
        let traffic = uniform(&net, 1.0);
        let opts = PursuitOptions { max_outer: Some(20), ..Default::default() };
        let result = pursue(&net, &traffic, &UtilitySpec::new(UtilityKind::SumRate), &opts).unwrap();
        assert_monotone(&result.trace);
        result.allocation.validate(&net).unwrap();
    }
}

#[test]
fn two_ap_coherent_instance_ends_on_the_cooperative_pattern() {
    let g = 1.0;
    let net = common::unit_network(&[vec![g], vec![g]]);
    let traffic = TrafficProfile::new(vec![1.0], 1e6).unwrap();
    let result = pursue(&net, &traffic, &UtilitySpec::new(UtilityKind::SumRate), &PursuitOptions::default()).unwrap();
    assert_eq!(result.allocation.patterns.len(), 1);
    let links = result.allocation.patterns[0].links();
    assert_eq!(links.len(), 1);
    assert!(net.ext.ap(links[0].ext).is_virtual());
    assert_eq!(links[0].power, net.params.pmax);
    let expected = net.params.bandwidth_w * (1.0 + 4.0 * g).log2();
    assert!((result.rates[0] - expected).abs() <= 1e-9 * expected);
}

#[test]
fn desk_scale_sojourn_run_is_sparse_and_monotone() {
    let net = common::random_network(16, 48, 3);
    let traffic = uniform(&net, 10.0);
    let result = pursue(&net, &traffic, &sojourn(), &PursuitOptions::default()).unwrap();
    assert_monotone(&result.trace);
    assert!(result.allocation.active_count() <= net.n_ues());
    result.allocation.validate(&net).unwrap();
    let rates = allocation_rates(&result.allocation, &net, CoopMode::Coherent);
    let u = utility(&rates, &traffic, &sojourn()).unwrap();
    assert!((u - result.utility).abs() <= 1e-9 * u.abs().max(1e-300), "{u} vs {}", result.utility);
}

#[test]
fn runs_are_deterministic() {
    let net = common::random_network(8, 16, 9);
    let traffic = uniform(&net, 20.0);
    let opts = PursuitOptions { max_outer: Some(10), ..Default::default() };
    let a = pursue(&net, &traffic, &sojourn(), &opts).unwrap();
    let b = pursue(&net, &traffic, &sojourn(), &opts).unwrap();
    assert_eq!(a, b);
}

#[test]
fn pattern_set_rejects_duplicates_up_to_rounding() {
    let pmax = 1e-9;
    let mut set = PatternSet::new(pmax);
    let p = Pattern::new(vec![Link { ext: 0, ue: 1, power: pmax }]);
    assert_eq!(set.insert(p.clone()), Ok(0));
    let nudged = Pattern::new(vec![Link { ext: 0, ue: 1, power: pmax * (1.0 + 1e-14) }]);
    assert_eq!(set.insert(nudged), Err(0));
    let other = Pattern::new(vec![Link { ext: 0, ue: 1, power: pmax * 0.5 }]);
    assert_eq!(set.insert(other), Ok(1));
    assert_eq!(set.len(), 2);
}

#[test]
fn initial_allocation_is_full_reuse() {
    let net = common::unit_network(&[vec![1.0]]);
    let alloc = initial_allocation(&net);
    assert_eq!(alloc.beta, vec![net.params.bandwidth_w]);
    assert_eq!(alloc.patterns[0].links(), &[Link { ext: 0, ue: 0, power: 1.0 }]);

    let net = common::random_network(16, 48, 1);
    let alloc = initial_allocation(&net);
    alloc.validate(&net).unwrap();
    let rates = allocation_rates(&alloc, &net, CoopMode::Coherent);
    for (j, ok) in net.servable().iter().enumerate() {
        if !ok {
            assert_eq!(rates[j], 0.0);
        }
    }
}

#[test]
fn random_patterns_are_feasible() {
    let net = common::random_network(16, 48, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for allow_virtual in [false, true] {
        let opts = FpOptions { allow_virtual, ..Default::default() };
        for _ in 0..50 {
            let p = random_pattern(&net, &opts, &mut rng);
            p.validate(&net).unwrap();
            assert!(allow_virtual || p.links().iter().all(|l| !net.ext.ap(l.ext).is_virtual()));
        }
    }
}

/// Maximum of a concave function on [a, b] by golden-section search.
fn golden(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (lo, hi) = (a, b);
    for _ in 0..200 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if f(c) >= f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    f(0.5 * (a + b)).max(f(lo)).max(f(hi))
}

/// Interval of `t` where `t r1 + (1 - t) r2 > lambda` holds for every UE, if any.
fn stable_interval(r1: &[f64], r2: &[f64], lambda: &[f64]) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for j in 0..lambda.len() {
        // (r1 - r2) t > lambda - r2
        let (slope, need) = (r1[j] - r2[j], lambda[j] - r2[j]);
        if slope > 0.0 {
            lo = lo.max(need / slope);
        } else if slope < 0.0 {
            hi = hi.min(need / slope);
        } else if need >= 0.0 {
            return None;
        }
    }
    (lo < hi).then_some((lo, hi))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn two_pattern_split_matches_golden_section(
        r1 in prop::collection::vec(0.0f64..10.0, 3),
        r2 in prop::collection::vec(0.0f64..10.0, 3),
        lambda in prop::collection::vec(0.05f64..3.0, 3),
        log in any::<bool>(),
    ) {
        let traffic = TrafficProfile::new(lambda, 1.0).unwrap();
        let spec = UtilitySpec::new(if log { UtilityKind::LogSumRate } else { UtilityKind::Sojourn });
        let per_hz = vec![RateVector(r1.clone()), RateVector(r2.clone())];
        let u = |t: f64| {
            let r: Vec<f64> = (0..3).map(|j| t * r1[j] + (1.0 - t) * r2[j]).collect();
            utility(&r, &traffic, &spec).unwrap()
        };
        let best = if log {
            golden(u, 0.0, 1.0)
        } else {
            stable_interval(&r1, &r2, &traffic.lambda).map_or(f64::NEG_INFINITY, |(lo, hi)| golden(u, lo, hi))
        };
        let s = solve_beta(&per_hz, &traffic, &spec, 1.0, &MasterOptions::default()).unwrap();
        if best.is_finite() {
            prop_assert!(s.stable);
            prop_assert!((s.utility - best).abs() <= 1e-6 * best.abs().max(1.0), "{} vs {}", s.utility, best);
        } else {
            prop_assert!(!s.utility.is_finite());
        }
    }
}
