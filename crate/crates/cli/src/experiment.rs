//! Experiment orchestration and result files.
//!
//! Layout under the output directory:
//!
//! ```text
//! config.toml                     resolved configuration
//! topology.json
//! results.csv                     one row per (scenario, lambda)
//! cutoffs.csv
//! records.jsonl                   one full record per row of results.csv
//! allocations/<scenario>/lambda_<rate>.json
//! plots/topology.csv
//! plots/association_<scenario>.csv
//! plots/power_blocks_<scenario>.csv
//! plots/sojourn.csv
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use coopalloc::{
    allocation_rates, cutoff_sweep, generate_topology, utility, Allocation, CutoffResult, ExtAp, Network, ScenarioKind, ScenarioResult,
    ScenarioRunner, SweepPoint, Topology, TrafficProfile, UtilityKind, UtilitySpec,
};
use serde::{Deserialize, Serialize};

use crate::alloc_io::dump_allocation;
use crate::config::{ExperimentConfig, TopologySource};
use crate::error::{HarnessError, Result};

/// Cutoffs read off the published curves, packets/s.
pub fn paper_cutoff(kind: ScenarioKind) -> f64 {
    match kind {
        ScenarioKind::MaxRsrp => 9.0,
        ScenarioKind::SpectrumUa => 11.0,
        ScenarioKind::PowerMgmt => 12.0,
        ScenarioKind::NoncoherentComp => 14.0,
        ScenarioKind::CoherentComp => 16.0,
    }
}

/// Fixed 15-significant-digit scientific notation; `inf`, `-inf` and `NaN` as Rust prints them.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.14e}")
    } else {
        format!("{x}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub scenario: ScenarioKind,
    /// Mean arrival rate per loaded UE, packets/s.
    pub lambda: f64,
    /// Service rate per UE, bits/s.
    pub rates: Vec<f64>,
    /// `None` when the utility is not finite (an unstable queue).
    pub utility: Option<f64>,
    pub stable: bool,
    /// The scenario's cutoff, packets/s.
    pub cutoff: f64,
    pub wall_s: f64,
    pub outer_iterations: usize,
    pub fp_iterations: usize,
    pub patterns: usize,
    /// Allocation dump, relative to the output directory.
    pub allocation: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSummary {
    pub out_dir: PathBuf,
    pub cutoffs: Vec<(ScenarioKind, f64)>,
}

pub fn load_topology(config: &ExperimentConfig) -> Result<Topology> {
    match config.topology.source {
        TopologySource::Generate => {
            let t = &config.topology;
            Ok(generate_topology(t.n, t.k, t.area, config.seed)?)
        }
        TopologySource::File => {
            let path = config.topology.path.as_deref().ok_or_else(|| HarnessError::Config("topology.path is unset".into()))?;
            let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
            Ok(Topology::from_json(&text)?)
        }
    }
}

pub fn build_network(config: &ExperimentConfig, topology: &Topology) -> Result<Network> {
    Ok(Network::build(topology, &config.channel.params())?)
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| HarnessError::io(path, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

/// Writes the topology and the resolved configuration.
pub fn write_setup(config: &ExperimentConfig, topology: &Topology) -> Result<()> {
    let out = &config.out_dir;
    create_dir(out)?;
    let mut topo = topology.to_json();
    topo.push('\n');
    write_file(&out.join("topology.json"), &topo)?;
    let resolved = toml::to_string(config).map_err(|e| HarnessError::Config(e.to_string()))?;
    write_file(&out.join("config.toml"), &resolved)
}

/// Full sweep: every configured scenario over the grid, each warm-started from the one
/// before it in the chain. `progress` sees each scenario's sweep as it finishes.
pub fn run_experiment(config: &ExperimentConfig, mut progress: impl FnMut(&CutoffResult)) -> Result<ExperimentSummary> {
    config.validate()?;
    let topology = load_topology(config)?;
    let net = build_network(config, &topology)?;
    write_setup(config, &topology)?;
    let spec = config.utility.spec();
    let sweep = config.sweep_spec();
    let mut sweeps: Vec<CutoffResult> = Vec::new();
    for kind in config.scenario_chain() {
        let opts = config.solver.pursuit(config.seed);
        let result = cutoff_sweep(kind, &net, &spec, &opts, &sweep, sweeps.last())?;
        progress(&result);
        sweeps.push(result);
    }
    write_results(config, &net, &topology, &sweeps)?;
    Ok(ExperimentSummary { out_dir: config.out_dir.clone(), cutoffs: sweeps.iter().map(|s| (s.kind, s.cutoff)).collect() })
}

/// One scenario at one traffic level. The scenarios before it in the chain are solved
/// first at the same level so the result is warm-started exactly as in a sweep.
pub fn run_solve(config: &ExperimentConfig, kind: ScenarioKind, lambda: f64) -> Result<ResultRecord> {
    config.validate()?;
    let topology = load_topology(config)?;
    let net = build_network(config, &topology)?;
    write_setup(config, &topology)?;
    let spec = config.utility.spec();
    let traffic = coopalloc::uniform_traffic(&net, lambda, config.utility.packet_bits)?;
    let opts = config.solver.pursuit(config.seed);
    let mut warm: Option<Allocation> = None;
    let mut last = None;
    for k in ScenarioKind::ALL.into_iter().filter(|&k| k <= kind) {
        let started = std::time::Instant::now();
        let r = ScenarioRunner::new(k, &net, &opts).run(&traffic, &spec, warm.as_ref())?;
        let wall = started.elapsed().as_secs_f64();
        warm = Some(r.allocation.clone());
        last = Some((r, wall));
    }
    let (result, wall) = last.expect("the chain contains the requested scenario");
    let point = SweepPoint { lambda, result, wall_s: wall };
    let cutoff = if point.result.stable { lambda } else { 0.0 };
    let record = write_point(config, &net, kind, &point, cutoff)?;
    let mut w = csv_writer(&config.out_dir.join("results.csv"))?;
    w.write_record(RESULT_HEADER)?;
    w.write_record(result_row(&record, &traffic))?;
    w.flush().map_err(|e| HarnessError::io(&config.out_dir.join("results.csv"), e))?;
    let mut line = serde_json::to_string(&record).expect("plain data serializes");
    line.push('\n');
    write_file(&config.out_dir.join("records.jsonl"), &line)?;
    Ok(record)
}

const RESULT_HEADER: [&str; 8] = ["scenario", "lambda", "utility", "min_rate", "mean_rate", "cutoff_flag", "wall_s", "iters"];

/// Scenario points sorted by rate, grid and refinement together.
fn ordered_points(sweep: &CutoffResult) -> Vec<&SweepPoint> {
    let mut points: Vec<&SweepPoint> = sweep.grid.iter().chain(&sweep.refinement).collect();
    points.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    points.dedup_by(|a, b| a.lambda == b.lambda);
    points
}

fn allocation_path(kind: ScenarioKind, lambda: f64) -> String {
    format!("allocations/{}/lambda_{lambda}.json", kind.name())
}

fn write_point(config: &ExperimentConfig, net: &Network, kind: ScenarioKind, point: &SweepPoint, cutoff: f64) -> Result<ResultRecord> {
    let rel = allocation_path(kind, point.lambda);
    let path = config.out_dir.join(&rel);
    create_dir(path.parent().expect("nested path"))?;
    dump_allocation(&point.result.allocation, net, &path)?;
    let r: &ScenarioResult = &point.result;
    Ok(ResultRecord {
        scenario: kind,
        lambda: point.lambda,
        rates: r.rates.0.clone(),
        utility: r.utility.is_finite().then_some(r.utility),
        stable: r.stable,
        cutoff,
        wall_s: if config.output.record_wall_time { point.wall_s } else { 0.0 },
        outer_iterations: r.outer_iterations,
        fp_iterations: r.fp_iterations,
        patterns: r.allocation.patterns.len(),
        allocation: rel,
    })
}

/// Rate statistics over the UEs carrying traffic.
fn loaded_rates(record: &ResultRecord, traffic: &TrafficProfile) -> (f64, f64) {
    let loaded: Vec<f64> = record.rates.iter().zip(&traffic.lambda).filter(|(_, l)| **l > 0.0).map(|(r, _)| *r).collect();
    if loaded.is_empty() {
        return (0.0, 0.0);
    }
    let min = loaded.iter().copied().fold(f64::INFINITY, f64::min);
    (min, loaded.iter().sum::<f64>() / loaded.len() as f64)
}

fn result_row(record: &ResultRecord, traffic: &TrafficProfile) -> Vec<String> {
    let (min_rate, mean_rate) = loaded_rates(record, traffic);
    vec![
        record.scenario.name().to_string(),
        num(record.lambda),
        num(record.utility.unwrap_or(f64::NEG_INFINITY)),
        num(min_rate),
        num(mean_rate),
        // Set on points beyond the cutoff, where some queue is unstable.
        u8::from(!record.stable).to_string(),
        num(record.wall_s),
        record.outer_iterations.to_string(),
    ]
}

/// Mean packet sojourn weighted by traffic, seconds; infinite when a queue is unstable.
fn mean_sojourn(rates: &[f64], traffic: &TrafficProfile) -> f64 {
    match utility(rates, traffic, &UtilitySpec::new(UtilityKind::Sojourn)) {
        Ok(u) => -u,
        Err(_) => 0.0,
    }
}

/// The allocation drawn in the association and power plots: the last stable grid
/// point, or the first grid point when none is stable.
fn representative(sweep: &CutoffResult) -> &SweepPoint {
    sweep.grid.iter().rev().find(|p| p.result.stable).unwrap_or(&sweep.grid[0])
}

fn write_results(config: &ExperimentConfig, net: &Network, topology: &Topology, sweeps: &[CutoffResult]) -> Result<()> {
    let out = &config.out_dir;
    let plots = out.join("plots");
    create_dir(&plots)?;
    let results_path = out.join("results.csv");
    let mut results = csv_writer(&results_path)?;
    results.write_record(RESULT_HEADER)?;
    let mut sojourn = csv_writer(&plots.join("sojourn.csv"))?;
    sojourn.write_record(["scenario", "lambda", "mean_sojourn_s", "stable"])?;
    let records_path = out.join("records.jsonl");
    let mut records = Vec::new();
    for sweep in sweeps {
        for point in ordered_points(sweep) {
            let traffic = coopalloc::uniform_traffic(net, point.lambda, config.utility.packet_bits)?;
            let record = write_point(config, net, sweep.kind, point, sweep.cutoff)?;
            results.write_record(result_row(&record, &traffic))?;
            sojourn.write_record([
                sweep.kind.name().to_string(),
                num(point.lambda),
                num(mean_sojourn(&record.rates, &traffic)),
                u8::from(record.stable).to_string(),
            ])?;
            serde_json::to_writer(&mut records, &record).expect("plain data serializes");
            records.push(b'\n');
        }
        write_association(&plots, net, topology, sweep.kind, &representative(sweep).result.allocation)?;
        write_power_blocks(&plots, net, sweep.kind, &representative(sweep).result.allocation)?;
    }
    results.flush().map_err(|e| HarnessError::io(&results_path, e))?;
    sojourn.flush().map_err(|e| HarnessError::io(&plots.join("sojourn.csv"), e))?;
    fs::File::create(&records_path).and_then(|mut f| f.write_all(&records)).map_err(|e| HarnessError::io(&records_path, e))?;

    let mut cutoffs = csv_writer(&out.join("cutoffs.csv"))?;
    cutoffs.write_record(["scenario", "cutoff", "paper_reference"])?;
    for sweep in sweeps {
        cutoffs.write_record([sweep.kind.name().to_string(), num(sweep.cutoff), num(paper_cutoff(sweep.kind))])?;
    }
    cutoffs.flush().map_err(|e| HarnessError::io(&out.join("cutoffs.csv"), e))?;
    write_topology_plot(&plots, net, topology)
}

fn write_topology_plot(plots: &Path, net: &Network, topology: &Topology) -> Result<()> {
    let path = plots.join("topology.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["kind", "id", "x_m", "y_m", "neighbors"])?;
    for (i, p) in topology.ap_positions.iter().enumerate() {
        w.write_record(["ap".to_string(), i.to_string(), num(p[0]), num(p[1]), String::new()])?;
    }
    for (j, p) in topology.ue_positions.iter().enumerate() {
        let neighbors: Vec<String> = net.neighborhoods.get(j).iter().map(|i| i.to_string()).collect();
        w.write_record(["ue".to_string(), j.to_string(), num(p[0]), num(p[1]), neighbors.join(" ")])?;
    }
    w.flush().map_err(|e| HarnessError::io(&path, e))
}

/// Serving lines: one row per link, with both ends' coordinates.
fn write_association(plots: &Path, net: &Network, topology: &Topology, kind: ScenarioKind, alloc: &Allocation) -> Result<()> {
    let path = plots.join(format!("association_{}.csv", kind.name()));
    let mut w = csv_writer(&path)?;
    w.write_record(["pattern", "beta_hz", "ap", "ap2", "ue", "power", "ap_x", "ap_y", "ap2_x", "ap2_y", "ue_x", "ue_y"])?;
    for (l, (pattern, &beta)) in alloc.patterns.iter().zip(&alloc.beta).enumerate() {
        for link in pattern.links() {
            let (a, b) = net.ext.ap(link.ext).members();
            let pa = topology.ap_positions[a];
            let pu = topology.ue_positions[link.ue];
            let (ap2, x2, y2) = match b {
                Some(b) => (b.to_string(), num(topology.ap_positions[b][0]), num(topology.ap_positions[b][1])),
                None => (String::new(), String::new(), String::new()),
            };
            w.write_record([
                l.to_string(),
                num(beta),
                a.to_string(),
                ap2,
                link.ue.to_string(),
                num(link.power),
                num(pa[0]),
                num(pa[1]),
                x2,
                y2,
                num(pu[0]),
                num(pu[1]),
            ])?;
        }
    }
    w.flush().map_err(|e| HarnessError::io(&path, e))
}

/// Per-pattern frequency blocks: each physical AP's power over `[f_start, f_end)`.
fn write_power_blocks(plots: &Path, net: &Network, kind: ScenarioKind, alloc: &Allocation) -> Result<()> {
    let path = plots.join(format!("power_blocks_{}.csv", kind.name()));
    let mut w = csv_writer(&path)?;
    w.write_record(["pattern", "f_start_hz", "f_end_hz", "ap", "power", "transmitter", "ue"])?;
    let mut start = 0.0;
    for (l, (pattern, &beta)) in alloc.patterns.iter().zip(&alloc.beta).enumerate() {
        let end = start + beta;
        let mut rows: Vec<(usize, f64, String, usize)> = Vec::new();
        for link in pattern.links() {
            let ap = net.ext.ap(link.ext);
            let label = match ap {
                ExtAp::Physical(i) => i.to_string(),
                ExtAp::Virtual(a, b) => format!("{a}+{b}"),
            };
            let (a, b) = ap.members();
            rows.push((a, link.power, label.clone(), link.ue));
            if let Some(b) = b {
                rows.push((b, link.power, label, link.ue));
            }
        }
        rows.sort_by_key(|r| r.0);
        for (ap, power, label, ue) in rows {
            w.write_record([l.to_string(), num(start), num(end), ap.to_string(), num(power), label, ue.to_string()])?;
        }
        start = end;
    }
    w.flush().map_err(|e| HarnessError::io(&path, e))
}

/// Recomputes a record's utility from its allocation dump.
pub fn recompute_utility(config: &ExperimentConfig, net: &Network, record: &ResultRecord) -> Result<f64> {
    let alloc = crate::alloc_io::load_allocation(&config.out_dir.join(&record.allocation), net)?;
    let rates = allocation_rates(&alloc, net, record.scenario.mode());
    let traffic = coopalloc::uniform_traffic(net, record.lambda, config.utility.packet_bits)?;
    Ok(utility(&rates, &traffic, &config.utility.spec())?)
}
