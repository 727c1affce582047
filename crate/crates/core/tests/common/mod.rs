#![allow(dead_code)]

use coopalloc::{generate_topology, ChannelParams, GainMatrix, Network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Side of a square area holding `n` APs at the density of 128 APs in 2400 m x 2400 m.
pub fn side_for(n: usize) -> f64 {
    2400.0 * (n as f64 / 128.0).sqrt()
}

pub fn random_network(n: usize, k: usize, seed: u64) -> Network {
    let side = side_for(n);
    let topo = generate_topology(n, k, [side, side], seed).unwrap();
    Network::build(&topo, &ChannelParams::default()).unwrap()
}

/// Unit-noise network with hand-set gains; pmax = 1, xi = 1.
pub fn unit_network(rows: &[Vec<f64>]) -> Network {
    let params = ChannelParams { pmax: 1.0, n0: 1.0, xi: 1.0, ..ChannelParams::default() };
    Network::from_gains(GainMatrix::from_rows(rows).unwrap(), params).unwrap()
}

pub fn random_weights(k: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k).map(|_| rng.random_range(0.0..1.0)).collect()
}

use coopalloc::fp::affine_value;
use coopalloc::{CoopMode, Link, Pattern};

/// Best affine value over every feasible set of extended APs at `pmax`, each serving any
/// of its candidates.
pub fn brute_force_affine(net: &Network, c: &[f64], mode: CoopMode, allow_virtual: bool) -> (f64, Pattern) {
    #[allow(clippy::too_many_arguments)]
    fn go(
        net: &Network,
        c: &[f64],
        mode: CoopMode,
        allow_virtual: bool,
        e: usize,
        used: &mut Vec<bool>,
        links: &mut Vec<Link>,
        best: &mut (f64, Pattern),
    ) {
        if e == net.ext.len() {
            let p = Pattern::new(links.clone());
            let v = affine_value(net, c, &p, mode);
            if v > best.0 {
                *best = (v, p);
            }
            return;
        }
        go(net, c, mode, allow_virtual, e + 1, used, links, best);
        let ap = net.ext.ap(e);
        if ap.is_virtual() && !allow_virtual {
            return;
        }
        let (a, b) = ap.members();
        if used[a] || b.is_some_and(|b| used[b]) {
            return;
        }
        used[a] = true;
        if let Some(b) = b {
            used[b] = true;
        }
        for &j in net.ext.candidates(e) {
            links.push(Link { ext: e, ue: j, power: net.params.pmax });
            go(net, c, mode, allow_virtual, e + 1, used, links, best);
            links.pop();
        }
        used[a] = false;
        if let Some(b) = b {
            used[b] = false;
        }
    }
    let mut best = (0.0, Pattern::silent());
    go(net, c, mode, allow_virtual, 0, &mut vec![false; net.n_aps()], &mut Vec::new(), &mut best);
    best
}
