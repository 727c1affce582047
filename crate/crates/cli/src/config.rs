//! Experiment configuration (TOML). Every field has a default, so an empty file is the
//! paper-scale setup.

use std::path::{Path, PathBuf};

use coopalloc::{ChannelParams, FpOptions, MasterOptions, PathLoss, PursuitOptions, ScenarioKind, SweepSpec, UtilityKind, UtilitySpec};
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub topology: TopologyConfig,
    pub channel: ChannelConfig,
    pub utility: UtilityConfig,
    pub scenarios: Vec<ScenarioKind>,
    pub sweep: SweepConfig,
    pub solver: SolverConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            out_dir: PathBuf::from("out"),
            topology: TopologyConfig::default(),
            channel: ChannelConfig::default(),
            utility: UtilityConfig::default(),
            scenarios: ScenarioKind::ALL.to_vec(),
            sweep: SweepConfig::default(),
            solver: SolverConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopologySource {
    Generate,
    File,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    pub source: TopologySource,
    /// Topology JSON when `source = "file"`.
    pub path: Option<PathBuf>,
    pub n: usize,
    pub k: usize,
    /// Width and height in metres.
    pub area: [f64; 2],
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig { source: TopologySource::Generate, path: None, n: 128, k: 384, area: [2400.0, 2400.0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    /// Peak AP power over the whole band.
    pub pmax_dbm: f64,
    pub noise_dbm_per_hz: f64,
    pub bandwidth_hz: f64,
    pub pathloss: PathLoss,
    pub shadowing_sigma_db: f64,
    pub min_distance_m: f64,
    /// Linear SNR an AP needs at `pmax` to enter a UE's neighborhood.
    pub xi: f64,
    pub b_cap: usize,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        let p = ChannelParams::default();
        ChannelConfig {
            pmax_dbm: 20.0,
            noise_dbm_per_hz: -174.0,
            bandwidth_hz: p.bandwidth_w,
            pathloss: p.pathloss,
            shadowing_sigma_db: p.shadowing_sigma_db,
            min_distance_m: p.min_distance_m,
            xi: p.xi,
            b_cap: p.b_cap,
        }
    }
}

impl ChannelConfig {
    pub fn params(&self) -> ChannelParams {
        ChannelParams {
            pathloss: self.pathloss,
            shadowing_sigma_db: self.shadowing_sigma_db,
            min_distance_m: self.min_distance_m,
            xi: self.xi,
            b_cap: self.b_cap,
            ..ChannelParams::from_dbm(self.pmax_dbm, self.noise_dbm_per_hz, self.bandwidth_hz)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UtilityConfig {
    pub kind: UtilityKind,
    pub epsilon_grad: f64,
    pub packet_bits: f64,
}

impl Default for UtilityConfig {
    fn default() -> Self {
        UtilityConfig { kind: UtilityKind::Sojourn, epsilon_grad: 1.0, packet_bits: 1e6 }
    }
}

impl UtilityConfig {
    pub fn spec(&self) -> UtilitySpec {
        UtilitySpec { kind: self.kind, epsilon_grad: self.epsilon_grad }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Mean arrival rates per UE, packets/s, strictly increasing.
    pub grid: Vec<f64>,
    pub resolution: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { grid: vec![2.5, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 40.0], resolution: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub fp_tol: f64,
    pub fp_max_iters: usize,
    pub fp_multi_start: bool,
    pub outer_tol: f64,
    /// Defaults to four times the UE count.
    pub max_outer: Option<usize>,
    pub master_gap_tol: f64,
    pub master_max_iters: usize,
    pub random_tries: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let p = PursuitOptions::default();
        SolverConfig {
            fp_tol: p.fp.tol,
            fp_max_iters: p.fp.max_iters,
            fp_multi_start: p.fp.multi_start,
            outer_tol: p.outer_tol,
            max_outer: p.max_outer,
            master_gap_tol: p.master.gap_tol,
            master_max_iters: p.master.max_iters,
            random_tries: p.random_tries,
        }
    }
}

impl SolverConfig {
    pub fn pursuit(&self, seed: u64) -> PursuitOptions {
        PursuitOptions {
            outer_tol: self.outer_tol,
            max_outer: self.max_outer,
            fp: FpOptions { tol: self.fp_tol, max_iters: self.fp_max_iters, multi_start: self.fp_multi_start, ..FpOptions::default() },
            master: MasterOptions { gap_tol: self.master_gap_tol, max_iters: self.master_max_iters },
            seed,
            random_tries: self.random_tries,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Write measured wall-clock seconds to the results CSV. Off by default so reruns
    /// produce byte-identical files.
    pub record_wall_time: bool,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            HarnessError::Config(msg) => HarnessError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |msg: String| Err(HarnessError::Config(msg));
        if self.scenarios.is_empty() {
            return fail("the scenario list is empty".into());
        }
        let mut sorted = self.scenarios.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.scenarios.len() {
            return fail("scenarios are listed more than once".into());
        }
        if self.topology.source == TopologySource::File {
            match &self.topology.path {
                None => return fail("topology.source = \"file\" needs topology.path".into()),
                Some(p) if !p.exists() => return fail(format!("topology file {} does not exist", p.display())),
                Some(_) => {}
            }
        }
        if self.sweep.grid.is_empty() {
            return fail("the sweep grid is empty".into());
        }
        if self.sweep.grid.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return fail("sweep grid rates must be positive".into());
        }
        if self.sweep.grid.windows(2).any(|w| w[1] <= w[0]) {
            return fail("the sweep grid must be strictly increasing".into());
        }
        let positive = [
            ("sweep.resolution", self.sweep.resolution),
            ("solver.fp_tol", self.solver.fp_tol),
            ("solver.outer_tol", self.solver.outer_tol),
            ("solver.master_gap_tol", self.solver.master_gap_tol),
            ("utility.packet_bits", self.utility.packet_bits),
            ("utility.epsilon_grad", self.utility.epsilon_grad),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return fail(format!("{name} must be positive, got {value}"));
            }
        }
        if self.solver.fp_max_iters == 0 || self.solver.master_max_iters == 0 {
            return fail("iteration limits must be positive".into());
        }
        self.channel.params().validate().map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Scenarios in order of increasing freedom, the order warm starts chain in.
    pub fn scenario_chain(&self) -> Vec<ScenarioKind> {
        let mut kinds = self.scenarios.clone();
        kinds.sort();
        kinds
    }

    pub fn sweep_spec(&self) -> SweepSpec {
        SweepSpec { grid: self.sweep.grid.clone(), resolution: self.sweep.resolution, packet_bits: self.utility.packet_bits }
    }
}
