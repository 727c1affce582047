//! Path loss and link gains.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::Topology;

/// Converts dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Distance-dependent path loss models.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum PathLoss {
    /// `intercept_db + slope_db * log10(d / 1 km)`.
    LogDistance { intercept_db: f64, slope_db: f64 },
}

impl Default for PathLoss {
    /// Urban macro: 128.1 + 37.6 log10(d_km).
    fn default() -> Self {
        PathLoss::LogDistance { intercept_db: 128.1, slope_db: 37.6 }
    }
}

impl PathLoss {
    pub fn loss_db(&self, distance_m: f64) -> f64 {
        match *self {
            PathLoss::LogDistance { intercept_db, slope_db } => intercept_db + slope_db * (distance_m / 1000.0).log10(),
        }
    }
}

/// Radio parameters. Powers are spectral densities: `pmax` and `n0` are in W/Hz.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub pmax: f64,
    pub n0: f64,
    pub bandwidth_w: f64,
    pub pathloss: PathLoss,
    /// Log-normal shadowing standard deviation in dB; 0 disables it.
    pub shadowing_sigma_db: f64,
    /// Distances below this are clamped before evaluating path loss.
    pub min_distance_m: f64,
    /// Linear SNR threshold for neighborhood membership.
    pub xi: f64,
    /// Maximum number of physical APs per neighborhood.
    pub b_cap: usize,
}

impl Default for ChannelParams {
    /// 20 dBm spread over 100 MHz, thermal noise at -174 dBm/Hz, xi = 4, B = 4.
    fn default() -> Self {
        ChannelParams::from_dbm(20.0, -174.0, 100e6)
    }
}

impl ChannelParams {
    /// Builds parameters from a total transmit power and a noise density, both in dBm.
    pub fn from_dbm(total_power_dbm: f64, noise_dbm_per_hz: f64, bandwidth_w: f64) -> Self {
        ChannelParams {
            pmax: dbm_to_watts(total_power_dbm) / bandwidth_w,
            n0: dbm_to_watts(noise_dbm_per_hz),
            bandwidth_w,
            pathloss: PathLoss::default(),
            shadowing_sigma_db: 0.0,
            min_distance_m: 10.0,
            xi: 4.0,
            b_cap: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParams(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("pmax", self.pmax)?;
        positive("n0", self.n0)?;
        positive("bandwidth_w", self.bandwidth_w)?;
        positive("xi", self.xi)?;
        positive("min_distance_m", self.min_distance_m)?;
        if !(self.shadowing_sigma_db.is_finite() && self.shadowing_sigma_db >= 0.0) {
            return Err(Error::InvalidParams("shadowing_sigma_db must be >= 0".into()));
        }
        if self.b_cap == 0 {
            return Err(Error::InvalidParams("b_cap must be at least 1".into()));
        }
        Ok(())
    }

    /// Single-link SNR at full power for a given gain.
    pub fn snr(&self, gain: f64) -> f64 {
        gain * self.pmax / self.n0
    }
}

/// Dense `n x k` matrix of linear power gains, row per AP.
#[derive(Clone, Debug, PartialEq)]
pub struct GainMatrix {
    n_aps: usize,
    n_ues: usize,
    data: Vec<f64>,
}

impl GainMatrix {
    pub fn new(n_aps: usize, n_ues: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_aps * n_ues {
            return Err(Error::InvalidParams(format!("gain matrix needs {} entries, got {}", n_aps * n_ues, data.len())));
        }
        if let Some(bad) = data.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
            return Err(Error::InvalidParams(format!("gain {bad} is not a finite non-negative number")));
        }
        Ok(GainMatrix { n_aps, n_ues, data })
    }

    /// Builds a matrix from rows indexed by AP.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_ues = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_ues) {
            return Err(Error::InvalidParams("ragged gain rows".into()));
        }
        GainMatrix::new(rows.len(), n_ues, rows.concat())
    }

    pub fn n_aps(&self) -> usize {
        self.n_aps
    }

    pub fn n_ues(&self) -> usize {
        self.n_ues
    }

    #[inline]
    pub fn get(&self, ap: usize, ue: usize) -> f64 {
        self.data[ap * self.n_ues + ue]
    }

    #[inline]
    pub fn row(&self, ap: usize) -> &[f64] {
        &self.data[ap * self.n_ues..(ap + 1) * self.n_ues]
    }
}

/// Evaluates path loss (and shadowing if enabled) for every AP-UE pair.
pub fn compute_gains(topology: &Topology, params: &ChannelParams) -> Result<GainMatrix> {
    topology.validate()?;
    params.validate()?;
    let (n, k) = (topology.n_aps(), topology.n_ues());
    // Shadowing draws use their own stream so enabling it leaves placement untouched.
    let mut rng = ChaCha8Rng::seed_from_u64(topology.seed);
    rng.set_stream(1);
    let shadow = Normal::new(0.0, params.shadowing_sigma_db).map_err(|e| Error::InvalidParams(e.to_string()))?;
    let mut data = Vec::with_capacity(n * k);
    for i in 0..n {
        for j in 0..k {
            let d = topology.distance(i, j).max(params.min_distance_m);
            let mut loss = params.pathloss.loss_db(d);
            if params.shadowing_sigma_db > 0.0 {
                loss += shadow.sample(&mut rng);
            }
            data.push(10f64.powf(-loss / 10.0));
        }
    }
    GainMatrix::new(n, k, data)
}
