use std::fs;

use aimdgrid::config::RunConfig;
use aimdgrid::error::{CliError, ExitClass};
use aimdgrid::formats::*;
use aimdgrid::hashing::{file_hash, hash_of};
use aimdgrid_core::learning::RootProvenance;
use aimdgrid_core::powerflow::{solve_distflow, InjectionSet, SolverOptions};
use aimdgrid_core::scenario::generate_scenario;
use aimdgrid_core::topology::build_synthetic_feeder;
use aimdgrid_core::{BusId, FeederConfig, Network, ScenarioConfig};

fn small_feeder() -> Network {
    let cfg = FeederConfig {
        neighborhoods: 2,
        transformers_per_neighborhood: 2,
        houses_per_transformer: 2,
        ..FeederConfig::default()
    };
    build_synthetic_feeder(&cfg).unwrap()
}

fn small_scenario_config() -> ScenarioConfig {
    let mut cfg = ScenarioConfig { horizon_s: 3600, calibrate: false, ..ScenarioConfig::default() };
    cfg.fleet.arrival_mean_s = 600.0;
    cfg.fleet.arrival_latest_s = 1800;
    cfg
}

#[test]
fn topology_round_trip_is_exact_and_stable() {
    let dir = tempfile::tempdir().unwrap();
    let net = build_synthetic_feeder(&FeederConfig::default()).unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    write_topology(&a, &net).unwrap();
    write_topology(&b, &build_synthetic_feeder(&FeederConfig::default()).unwrap()).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let back = read_topology(&a).unwrap();
    assert_eq!(back, net);
    assert_eq!(hash_of(&back), hash_of(&net));

    let text = fs::read_to_string(&a).unwrap();
    for key in ["\"substation-root\"", "\"transformer-secondary\"", "\"service\"", "\"r\":", "\"x\":", "\"root\":", "\"substation_rating\":"] {
        assert!(text.contains(key), "missing {key}");
    }
}

#[test]
fn topology_with_a_cycle_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut net = small_feeder();
    let leaf = net.buses.last().unwrap().id;
    let mut back_edge = net.branches[0].clone();
    back_edge.from = leaf;
    back_edge.to = net.branches[0].to;
    net.branches.push(back_edge);
    let path = dir.path().join("t.json");
    write_topology(&path, &net).unwrap();
    let err = read_topology(&path).unwrap_err();
    assert!(matches!(err, CliError::Topology(_)), "{err}");
    assert_eq!(err.class(), ExitClass::Input);
}

#[test]
fn scenario_round_trip_is_lossless() {
    let dir = tempfile::tempdir().unwrap();
    let net = small_feeder();
    let mut cfg = small_scenario_config();
    cfg.calibrate = true;
    cfg.target_peak_va = 25_000.0;
    cfg.peak_band_va = (20_000.0, 30_000.0);
    let scen = generate_scenario(&net, 9, &cfg, 0.5).unwrap();
    assert_ne!(scen.load_scale, 1.0);
    write_scenario(dir.path(), &scen).unwrap();
    let back = read_scenario(dir.path()).unwrap();
    assert_eq!(back, scen);
    assert_eq!(hash_of(&back), hash_of(&scen));
}

#[test]
fn profile_ingestion_reports_gaps_and_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let net = small_feeder();
    let scen = generate_scenario(&net, 1, &small_scenario_config(), 0.0).unwrap();
    write_scenario(dir.path(), &scen).unwrap();
    let path = dir.path().join(PROFILES_FILE);
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();

    let dup = lines[1];
    lines.insert(2, dup);
    fs::write(&path, lines.join("\n")).unwrap();
    let err = read_scenario(dir.path()).unwrap_err().to_string();
    assert!(err.contains("duplicate"), "{err}");

    lines.remove(2);
    lines.remove(5);
    fs::write(&path, lines.join("\n")).unwrap();
    let err = read_scenario(dir.path()).unwrap_err().to_string();
    assert!(err.contains("missing minute"), "{err}");

    fs::write(&path, "time_min,house_id,power_w\n0,3,abc\n").unwrap();
    let err = read_scenario(dir.path()).unwrap_err();
    assert!(matches!(err, CliError::Parse { .. }), "{err}");
}

#[test]
fn series_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    let series = vec![(0..120).map(|k| 230.0 + k as f64 / 7.0).collect::<Vec<_>>(), vec![1.5; 120]];
    write_series(&path, &[7, 3], &series, 1, 10).unwrap();
    let t = read_series(&path).unwrap();
    assert_eq!(t.step_s, 10);
    assert_eq!(t.ids, vec![3, 7]);
    assert_eq!(t.values[1], series[0].iter().step_by(10).copied().collect::<Vec<_>>());
    assert_eq!(t.values[0], vec![1.5; 12]);
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("time_s,node_id,value\n0,7,230\n0,3,1.5\n10,7,"));
}

#[test]
fn irregular_series_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    fs::write(&path, "time_s,node_id,value\n0,1,2\n10,1,2\n30,1,2\n").unwrap();
    assert!(read_series(&path).is_err());
}

#[test]
fn power_flow_dump_has_one_row_per_bus() {
    let dir = tempfile::tempdir().unwrap();
    let net = small_feeder();
    let mut inj = InjectionSet::new(4800.0);
    for h in net.houses() {
        inj.add(h, 3000.0, 1000.0);
    }
    let sol = solve_distflow(&net, &inj, &SolverOptions::default()).unwrap();
    let path = dir.path().join("pf.csv");
    write_pf_debug(&path, &net, &sol).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "bus,V,P_L,Q_L");
    assert_eq!(rows.len(), net.buses.len() + 1);
    let root: Vec<f64> = rows[1].split(',').skip(1).map(|c| c.parse().unwrap()).collect();
    assert_eq!(root[0], 4800.0);
    let p_root = root[1];
    assert!((p_root - (8.0 * 3000.0 + sol.losses)).abs() < 1e-6 * p_root);
}

#[test]
fn threshold_entries_use_the_documented_keys() {
    let entry = ThresholdEntry {
        node_id: BusId(12),
        theta: [1.0, -2.0, 0.5],
        v_th: 221.5,
        root_provenance: RootProvenance::QuadraticUpper,
        rmse: 0.25,
        samples: 480,
    };
    let v: serde_json::Value = serde_json::to_value(&entry).unwrap();
    let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
    assert_eq!(keys.len(), 6);
    for k in ["node_id", "theta", "v_th", "root_provenance", "rmse", "samples"] {
        assert!(v.get(k).is_some(), "missing {k}");
    }
    assert_eq!(v["root_provenance"], "quadratic-upper");
    assert_eq!(v["theta"], serde_json::json!([1.0, -2.0, 0.5]));
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    fs::write(&path, r#"{"simulation": {"controller": {"alpha": "fast"}}}"#).unwrap();
    let err = RunConfig::load(&path).unwrap_err().to_string();
    assert!(err.contains("simulation.controller.alpha"), "{err}");

    fs::write(&path, r#"{"scenario": {"horizon_s": 3600}}"#).unwrap();
    let err = RunConfig::load(&path).unwrap_err().to_string();
    assert!(err.contains("horizon"), "{err}");

    fs::write(&path, r#"{"simulation": {"controller": {"controller": "d_aimd", "beta": 0.7}}}"#).unwrap();
    let cfg = RunConfig::load(&path).unwrap();
    assert_eq!(cfg.simulation.controller.beta, 0.7);
    assert_eq!(cfg.simulation.controller.alpha, 1.0);
}

#[test]
fn file_hash_matches_content_hash() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x");
    fs::write(&path, b"abc").unwrap();
    assert_eq!(file_hash(&path).unwrap(), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
