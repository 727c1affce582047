//! Node placement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// AP and UE positions in a rectangular area, in meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    /// Width and height of the area.
    pub area: [f64; 2],
    #[serde(rename = "aps")]
    pub ap_positions: Vec<[f64; 2]>,
    #[serde(rename = "ues")]
    pub ue_positions: Vec<[f64; 2]>,
    pub seed: u64,
}

/// Scatters `n` APs and `k` UEs i.i.d. uniformly over `area`.
pub fn generate_topology(n: usize, k: usize, area: [f64; 2], seed: u64) -> Result<Topology> {
    if n == 0 || k == 0 {
        return Err(Error::InvalidTopology(format!("need at least one AP and one UE, got n={n}, k={k}")));
    }
    check_area(area)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let point = |rng: &mut ChaCha8Rng| [rng.random::<f64>() * area[0], rng.random::<f64>() * area[1]];
    let ap_positions = (0..n).map(|_| point(&mut rng)).collect();
    let ue_positions = (0..k).map(|_| point(&mut rng)).collect();
    Ok(Topology { area, ap_positions, ue_positions, seed })
}

fn check_area(area: [f64; 2]) -> Result<()> {
    if !(area[0].is_finite() && area[1].is_finite() && area[0] > 0.0 && area[1] > 0.0) {
        return Err(Error::InvalidTopology(format!("area must have positive finite size, got {} x {}", area[0], area[1])));
    }
    Ok(())
}

impl Topology {
    pub fn n_aps(&self) -> usize {
        self.ap_positions.len()
    }

    pub fn n_ues(&self) -> usize {
        self.ue_positions.len()
    }

    pub fn validate(&self) -> Result<()> {
        check_area(self.area)?;
        if self.ap_positions.is_empty() || self.ue_positions.is_empty() {
            return Err(Error::InvalidTopology("need at least one AP and one UE".into()));
        }
        let inside = |p: &[f64; 2]| {
            p[0].is_finite() && p[1].is_finite() && (0.0..=self.area[0]).contains(&p[0]) && (0.0..=self.area[1]).contains(&p[1])
        };
        for (kind, points) in [("AP", &self.ap_positions), ("UE", &self.ue_positions)] {
            if let Some(idx) = points.iter().position(|p| !inside(p)) {
                return Err(Error::InvalidTopology(format!(
                    "{kind} {idx} at ({}, {}) lies outside the area",
                    points[idx][0], points[idx][1]
                )));
            }
        }
        Ok(())
    }

    pub fn distance(&self, ap: usize, ue: usize) -> f64 {
        let a = self.ap_positions[ap];
        let u = self.ue_positions[ue];
        (a[0] - u[0]).hypot(a[1] - u[1])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("topology serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let topo: Topology = serde_json::from_str(text).map_err(|e| Error::InvalidTopology(e.to_string()))?;
        topo.validate()?;
        Ok(topo)
    }
}
