mod common;

use common::{random_network, unit_network};
use coopalloc::{
    allocation_rates, combine_rates, pattern_rates, spectral_efficiency, utility, utility_gradient, Allocation, CoopMode, Link, Pattern,
    TrafficProfile, UtilityKind, UtilitySpec,
};
use proptest::prelude::*;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn two_aps_one_ue() {
    let (g, p) = (2.0, 0.7);
    let net = unit_network(&[vec![g], vec![g]]);
    let both = Pattern::new(vec![Link { ext: 0, ue: 0, power: p }, Link { ext: 1, ue: 0, power: p }]);
    let alone = (1.0 + g * p / (1.0 + g * p)).log2();
    for e in 0..2 {
        assert!(close(spectral_efficiency(&both, e, 0, &net, CoopMode::NonCoherent), alone, 1e-14));
    }

    let pair = net.ext.virtual_id(0, 1).expect("pair shares a neighborhood");
    let joint = Pattern::new(vec![Link { ext: pair, ue: 0, power: p }]);
    let noncoherent = spectral_efficiency(&joint, pair, 0, &net, CoopMode::NonCoherent);
    let coherent = spectral_efficiency(&joint, pair, 0, &net, CoopMode::Coherent);
    assert!(close(noncoherent, (1.0 + 2.0 * g * p).log2(), 1e-14));
    assert!(close(coherent, (1.0 + 4.0 * g * p).log2(), 1e-14));
}

#[test]
fn silent_and_single_link_patterns() {
    let net = unit_network(&[vec![5.0, 0.1], vec![0.2, 3.0]]);
    assert!(pattern_rates(&Pattern::silent(), &net, CoopMode::Coherent).iter().all(|&r| r == 0.0));
    let one = Pattern::new(vec![Link { ext: 1, ue: 1, power: 1.0 }]);
    let r = pattern_rates(&one, &net, CoopMode::Coherent);
    assert_eq!(r[0], 0.0);
    assert!(close(r[1], 4.0f64.log2(), 1e-15));
}

#[test]
fn pair_and_single_ap_interfere_through_summed_gains() {
    // APs 0 and 1 cover UE 0, AP 2 covers UE 1.
    let rows = [vec![4.0, 0.3], vec![2.0, 0.5], vec![0.4, 6.0]];
    let net = unit_network(&rows);
    let pair = net.ext.virtual_id(0, 1).unwrap();
    let (p, q) = (0.8, 0.6);
    let pattern = Pattern::new(vec![Link { ext: pair, ue: 0, power: p }, Link { ext: 2, ue: 1, power: q }]);

    let ue1 = (1.0 + 6.0 * q / (1.0 + (0.3 + 0.5) * p)).log2();
    let h_nc = 4.0 + 2.0;
    let h_c = 4.0 + 2.0 + 2.0 * 8.0f64.sqrt();
    for (mode, h) in [(CoopMode::NonCoherent, h_nc), (CoopMode::Coherent, h_c)] {
        let r = pattern_rates(&pattern, &net, mode);
        let ue0 = (1.0 + h * p / (1.0 + 0.4 * q)).log2();
        assert!(close(r[0], ue0, 1e-14), "{mode:?}: {} vs {ue0}", r[0]);
        assert!(close(r[1], ue1, 1e-14), "{mode:?}: {} vs {ue1}", r[1]);
    }
}

#[test]
fn allocation_rates_are_linear_in_the_split() {
    let net = unit_network(&[vec![5.0, 0.1], vec![0.2, 3.0]]);
    let w = net.params.bandwidth_w;
    let a = Pattern::new(vec![Link { ext: 0, ue: 0, power: 1.0 }]);
    let b = Pattern::new(vec![Link { ext: 0, ue: 0, power: 1.0 }, Link { ext: 1, ue: 1, power: 1.0 }]);

    let single = allocation_rates(&Allocation::single(b.clone(), w), &net, CoopMode::Coherent);
    let halves = Allocation { patterns: vec![b.clone(), b.clone()], beta: vec![w / 2.0, w / 2.0] };
    let split = allocation_rates(&halves, &net, CoopMode::Coherent);
    for j in 0..2 {
        assert!(close(single[j], split[j], 1e-15));
    }

    let mixed = Allocation { patterns: vec![a, b], beta: vec![w / 3.0, 2.0 * w / 3.0] };
    let r = allocation_rates(&mixed, &net, CoopMode::Coherent);
    let ue0_alone = 6.0f64.log2();
    let ue0_shared = (1.0f64 + 5.0 / (1.0 + 0.2)).log2();
    let ue1_shared = (1.0f64 + 3.0 / (1.0 + 0.1)).log2();
    assert!(close(r[0], w / 3.0 * ue0_alone + 2.0 * w / 3.0 * ue0_shared, 1e-14));
    assert!(close(r[1], 2.0 * w / 3.0 * ue1_shared, 1e-14));
}

#[test]
fn sojourn_at_half_load() {
    let (lambda, d) = (7.0, 1e6);
    let traffic = TrafficProfile::new(vec![lambda; 3], d).unwrap();
    let rates = vec![2.0 * lambda * d; 3];
    let u = utility(&rates, &traffic, &UtilitySpec::new(UtilityKind::Sojourn)).unwrap();
    assert!(close(u, -1.0 / lambda, 1e-15));

    let mut overloaded = rates.clone();
    overloaded[1] = lambda * d;
    assert_eq!(utility(&overloaded, &traffic, &UtilitySpec::new(UtilityKind::Sojourn)).unwrap(), f64::NEG_INFINITY);
}

#[test]
fn zero_traffic() {
    let traffic = TrafficProfile::new(vec![0.0; 2], 1e6).unwrap();
    let rates = [3.0, 4.5];
    assert_eq!(utility(&rates, &traffic, &UtilitySpec::new(UtilityKind::SumRate)).unwrap(), 7.5);
    assert!(utility(&rates, &traffic, &UtilitySpec::new(UtilityKind::Sojourn)).is_err());
    assert!(utility_gradient(&rates, &traffic, &UtilitySpec::new(UtilityKind::Sojourn)).iter().all(|&g| g == 0.0));
}

#[test]
fn invalid_traffic_is_rejected() {
    assert!(TrafficProfile::new(vec![1.0, -0.5], 1e6).is_err());
    assert!(TrafficProfile::new(vec![1.0], 0.0).is_err());
}

fn stable_point() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    prop::collection::vec((0.1f64..5.0, 1.05f64..4.0), 1..8)
        .prop_map(|v| (v.iter().map(|(l, _)| *l).collect(), v.iter().map(|(l, m)| l * m * 1e6).collect()))
}

proptest! {
    #[test]
    fn sojourn_is_concave_along_segments(
        (lambda, a) in stable_point(),
        extra in prop::collection::vec(0.0f64..3e6, 8),
        t in 0.0f64..1.0,
    ) {
        let traffic = TrafficProfile::new(lambda, 1e6).unwrap();
        let b: Vec<f64> = a.iter().zip(&extra).map(|(r, e)| r + e).collect();
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (1.0 - t) * x + t * y).collect();
        let spec = UtilitySpec::new(UtilityKind::Sojourn);
        let (ua, ub, um) = (utility(&a, &traffic, &spec).unwrap(), utility(&b, &traffic, &spec).unwrap(), utility(&mid, &traffic, &spec).unwrap());
        prop_assert!(um >= (1.0 - t) * ua + t * ub - 1e-12 * ua.abs());
        prop_assert!(ub >= ua);
    }

    #[test]
    fn gradient_matches_central_differences((lambda, rates) in stable_point(), pick in 0usize..8) {
        let traffic = TrafficProfile::new(lambda, 1e6).unwrap();
        let j = pick % rates.len();
        for kind in [UtilityKind::Sojourn, UtilityKind::SumRate, UtilityKind::LogSumRate] {
            let spec = UtilitySpec::new(kind);
            let grad = utility_gradient(&rates, &traffic, &spec);
            let h = 1e-4 * rates[j];
            let (mut up, mut down) = (rates.clone(), rates.clone());
            up[j] += h;
            down[j] -= h;
            let fd = (utility(&up, &traffic, &spec).unwrap() - utility(&down, &traffic, &spec).unwrap()) / (2.0 * h);
            prop_assert!(close(grad[j], fd, 1e-5), "{:?}: {} vs {}", kind, grad[j], fd);
        }
    }

    #[test]
    fn coherent_rates_dominate_noncoherent(seed in 0u64..200) {
        let net = random_network(8, 16, seed);
        let pattern = coopalloc::random_pattern(&net, &coopalloc::FpOptions::default(), &mut seeded_rng(seed));
        let c = pattern_rates(&pattern, &net, CoopMode::Coherent);
        let n = pattern_rates(&pattern, &net, CoopMode::NonCoherent);
        for j in 0..net.n_ues() {
            prop_assert!(c[j] >= n[j]);
            let physical_only = pattern.links().iter().all(|l| l.ue != j || !net.ext.ap(l.ext).is_virtual());
            if physical_only {
                prop_assert_eq!(c[j], n[j]);
            }
        }
    }

    #[test]
    fn combine_rates_is_bilinear(
        a in prop::collection::vec(0.0f64..10.0, 4),
        b in prop::collection::vec(0.0f64..10.0, 4),
        x in 0.0f64..1e8,
        y in 0.0f64..1e8,
    ) {
        let per_hz = [coopalloc::RateVector(a.clone()), coopalloc::RateVector(b.clone())];
        let r = combine_rates(&per_hz, &[x, y], 4);
        for j in 0..4 {
            prop_assert!(close(r[j], x * a[j] + y * b[j], 1e-15));
        }
    }
}

fn seeded_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
