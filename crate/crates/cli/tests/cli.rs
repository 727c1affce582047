use std::fs;
use std::path::Path;
use std::process::Command;

use coopalloc::{initial_allocation, max_rsrp_allocation, pursue, uniform_traffic, PursuitOptions, UtilityKind, UtilitySpec};
use coopalloc_cli::experiment::{build_network, load_topology};
use coopalloc_cli::{
    dump_allocation, load_allocation, recompute_utility, run_experiment, AllocationFile, ExperimentConfig, HarnessError, ResultRecord,
};

fn small_config(out: &Path) -> ExperimentConfig {
    let text = format!(
        r#"
        seed = 5
        out_dir = "{}"
        [topology]
        n = 8
        k = 24
        area = [600.0, 600.0]
        [sweep]
        grid = [5.0, 20.0, 80.0]
        resolution = 2.0
        [solver]
        max_outer = 30
        "#,
        out.display()
    );
    ExperimentConfig::parse(&text).unwrap()
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn records(out: &Path) -> Vec<ResultRecord> {
    read(&out.join("records.jsonl")).lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn sweep_writes_every_output_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let summary = run_experiment(&small_config(&a), |_| {}).unwrap();
    run_experiment(&small_config(&b), |_| {}).unwrap();
    assert_eq!(summary.cutoffs.len(), 5);

    for file in ["results.csv", "cutoffs.csv", "records.jsonl", "topology.json", "plots/topology.csv", "plots/sojourn.csv"] {
        assert_eq!(read(&a.join(file)), read(&b.join(file)), "{file} differs between reruns");
    }
    for kind in ["max-rsrp", "coherent-comp"] {
        assert!(a.join(format!("plots/association_{kind}.csv")).exists());
        assert!(a.join(format!("plots/power_blocks_{kind}.csv")).exists());
    }

    let results = read(&a.join("results.csv"));
    let mut lines = results.lines();
    assert_eq!(lines.next(), Some("scenario,lambda,utility,min_rate,mean_rate,cutoff_flag,wall_s,iters"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), records(&a).len());
    for row in &rows {
        assert_eq!(row.len(), 8);
        assert_eq!(row[6], "0.00000000000000e0", "wall time is off by default");
        let mantissa = row[1].split('e').next().unwrap();
        assert_eq!(mantissa.replace(['.', '-'], "").len(), 15, "{}", row[1]);
    }
}

#[test]
fn record_utilities_recompute_from_the_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    run_experiment(&config, |_| {}).unwrap();
    let net = build_network(&config, &load_topology(&config).unwrap()).unwrap();
    let recs = records(dir.path());
    assert!(!recs.is_empty());
    for r in recs {
        let again = recompute_utility(&config, &net, &r).unwrap();
        match r.utility {
            Some(u) => assert!((again - u).abs() <= 1e-9 * u.abs().max(1e-300), "{:?} {}: {u} vs {again}", r.scenario, r.lambda),
            None => assert!(!again.is_finite()),
        }
    }
}

#[test]
fn allocations_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let net = build_network(&config, &load_topology(&config).unwrap()).unwrap();
    let traffic = uniform_traffic(&net, 10.0, 1e6).unwrap();
    let solved =
        pursue(&net, &traffic, &UtilitySpec::new(UtilityKind::Sojourn), &PursuitOptions { max_outer: Some(10), ..Default::default() })
            .unwrap()
            .allocation;
    for (i, alloc) in [initial_allocation(&net), max_rsrp_allocation(&net), solved].into_iter().enumerate() {
        let path = dir.path().join(format!("alloc{i}.json"));
        dump_allocation(&alloc, &net, &path).unwrap();
        assert_eq!(load_allocation(&path, &net).unwrap(), alloc);
    }
}

#[test]
fn malformed_allocation_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let net = build_network(&config, &load_topology(&config).unwrap()).unwrap();
    let text = AllocationFile::from_allocation(&max_rsrp_allocation(&net), &net).to_json();

    let truncated = &text[..text.len() / 2];
    match AllocationFile::parse(truncated) {
        Err(HarnessError::Parse { line, .. }) => assert!(line > 1),
        other => panic!("expected a parse error, got {other:?}"),
    }

    let mut file = AllocationFile::parse(&text).unwrap();
    file.patterns[0].beta *= 0.5;
    let err = AllocationFile::parse(&file.to_json()).unwrap_err();
    assert!(matches!(err, HarnessError::Validation(_)), "{err}");
    assert!(err.to_string().contains("sum"), "{err}");

    let typo = text.replacen("\"beta\"", "\"bta\"", 1);
    assert!(matches!(AllocationFile::parse(&typo), Err(HarnessError::Parse { .. })));
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_coopalloc"))
}

#[test]
fn empty_scenario_list_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "scenarios = []\n").unwrap();
    let out = bin().args(["sweep", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("scenario list is empty"));
}

#[test]
fn validate_mm1_subcommand() {
    let ok = bin().args(["validate-mm1", "--lambda", "5", "--mu", "10", "--packets", "200000"]).output().unwrap();
    assert!(ok.status.success());
    assert!(String::from_utf8_lossy(&ok.stdout).contains("analytic 0.200000"));
    let bad = bin().args(["validate-mm1", "--lambda", "10", "--mu", "10"]).output().unwrap();
    assert!(!bad.status.success());
}

#[test]
fn generate_and_solve_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "[topology]\nn = 6\nk = 12\narea = [520.0, 520.0]\n[solver]\nmax_outer = 10\n").unwrap();
    let out = dir.path().join("out");
    let gen = bin().args(["generate", "--seed", "3", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert!(gen.status.success(), "{}", String::from_utf8_lossy(&gen.stderr));
    assert!(out.join("topology.json").exists());
    assert!(read(&out.join("config.toml")).contains("seed = 3"));

    let solve =
        bin().args(["solve", "--scenario", "power-mgmt", "--lambda", "4", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert!(solve.status.success(), "{}", String::from_utf8_lossy(&solve.stderr));
    assert!(out.join("allocations/power-mgmt/lambda_4.json").exists());
    assert_eq!(read(&out.join("results.csv")).lines().count(), 2);

    let two = bin().args(["solve", "--scenario", "power-mgmt,max-rsrp", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert!(!two.status.success());
}

#[test]
fn lambda_grid_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "[topology]\nn = 4\nk = 8\narea = [424.0, 424.0]\n[solver]\nmax_outer = 10\n").unwrap();
    let run = bin()
        .args(["sweep", "--scenario", "max-rsrp,spectrum-ua", "--lambda-grid", "1,2", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let cutoffs = read(&out.join("cutoffs.csv"));
    assert_eq!(cutoffs.lines().count(), 3, "{cutoffs}");
    assert!(read(&out.join("config.toml")).contains("grid = [1.0, 2.0]"));
}
