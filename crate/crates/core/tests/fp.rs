mod common;

use common::{random_network, random_weights, unit_network};
use coopalloc::fp::affine_value;
use coopalloc::{solve_affine, CoopMode, FpOptions, FpSolver};

#[test]
fn objective_never_decreases_within_a_cycle() {
    for seed in 0..20u64 {
        let net = random_network(12, 36, seed);
        let c = random_weights(36, seed + 100);
        for mode in [CoopMode::Coherent, CoopMode::NonCoherent] {
            let opts = FpOptions { mode, ..FpOptions::default() };
            let mut s = FpSolver::new(&net, &c, opts);
            let mut last = s.objective();
            for _ in 0..30 {
                for idx in 0..5 {
                    match idx {
                        0 => s.update_gamma(),
                        1 => s.update_y(),
                        2 => s.update_p(),
                        3 => s.update_u(),
                        _ => {
                            s.update_d();
                        }
                    }
                    let now = s.objective();
                    assert!(now >= last - 1e-9 * last.abs(), "seed {seed} step {idx}: {last} -> {now}");
                    last = now;
                }
            }
        }
    }
}

#[test]
fn lifted_objective_matches_affine_value_at_init() {
    for seed in 0..10u64 {
        let net = random_network(10, 30, seed);
        let c = random_weights(30, seed);
        let s = FpSolver::new(&net, &c, FpOptions::default());
        let a = s.affine_value();
        assert!((s.objective() - a).abs() <= 1e-9 * a.abs(), "{} vs {a}", s.objective());
    }
}

#[test]
fn two_ap_coherent_optimum() {
    let g = 3.0;
    let net = unit_network(&[vec![g], vec![g]]);
    for (mode, factor) in [(CoopMode::Coherent, 4.0), (CoopMode::NonCoherent, 2.0)] {
        let sol = solve_affine(&net, &[1.0], &FpOptions { mode, ..FpOptions::default() });
        let expected = (1.0 + factor * g).log2();
        assert!((sol.value - expected).abs() <= 1e-6 * expected, "{mode:?}: {} vs {expected}", sol.value);
    }
}

#[test]
fn zero_weights_give_silence() {
    let net = random_network(6, 12, 1);
    let sol = solve_affine(&net, &[0.0; 12], &FpOptions::default());
    assert_eq!(sol.value, 0.0);
    assert!(sol.pattern.is_empty());
}

#[test]
fn solution_is_feasible() {
    for seed in 0..10u64 {
        let net = random_network(16, 48, seed);
        let c = random_weights(48, seed);
        let sol = solve_affine(&net, &c, &FpOptions::default());
        sol.pattern.validate(&net).unwrap();
        assert!((affine_value(&net, &c, &sol.pattern, CoopMode::Coherent) - sol.value).abs() < 1e-12 * sol.value);
    }
}
