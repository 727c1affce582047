//! Discrete-event M/M/1 queue, used to check the sojourn formula behind the utility.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;

use crate::error::{HarnessError, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Mm1Report {
    pub lambda: f64,
    pub mu: f64,
    pub packets: usize,
    pub seed: u64,
    /// Empirical mean time in system, seconds.
    pub simulated: f64,
    /// `1 / (mu - lambda)`.
    pub analytic: f64,
}

impl Mm1Report {
    pub fn relative_error(&self) -> f64 {
        (self.simulated - self.analytic).abs() / self.analytic
    }
}

/// Simulates `packets` FIFO departures starting from an empty queue and returns the mean
/// sojourn. Waiting times follow the Lindley recursion.
pub fn validate_mm1(lambda: f64, mu: f64, packets: usize, seed: u64) -> Result<Mm1Report> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(HarnessError::Queue(format!("arrival rate must be positive, got {lambda}")));
    }
    if !(mu.is_finite() && mu > 0.0) {
        return Err(HarnessError::Queue(format!("service rate must be positive, got {mu}")));
    }
    if lambda >= mu {
        return Err(HarnessError::Queue(format!("unstable queue: lambda {lambda} >= mu {mu}")));
    }
    if packets == 0 {
        return Err(HarnessError::Queue("need at least one packet".into()));
    }
    let arrivals = Exp::new(lambda).expect("positive rate");
    let service = Exp::new(mu).expect("positive rate");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut wait, mut total) = (0.0f64, 0.0f64);
    for _ in 0..packets {
        let s = service.sample(&mut rng);
        total += wait + s;
        let gap = arrivals.sample(&mut rng);
        wait = (wait + s - gap).max(0.0);
    }
    Ok(Mm1Report { lambda, mu, packets, seed, simulated: total / packets as f64, analytic: 1.0 / (mu - lambda) })
}
