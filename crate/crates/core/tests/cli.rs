//! End-to-end runs of the `spbe` binary.

use std::path::Path;
use std::process::{Command, Output};

use spbe::io::EquilibriumDocument;
use spbe::pubgoods::{build_spec, PubGoodsParams};
use spbe::{forward_construct, validate_game, EquilibriumGenerator, FixedPointConfig, GameSpec};
use std::sync::Arc;
use tempfile::TempDir;

fn spbe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spbe")).args(args).output().unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) {
    std::fs::write(path, serde_json::to_string_pretty(value).unwrap()).unwrap();
}

/// One-stage matching pennies: its only equilibrium is fully mixed.
fn matching_pennies() -> GameSpec {
    let payoff = |i: usize, a: usize| if (i == 0) == (a == 0 || a == 3) { 1.0 } else { -1.0 };
    GameSpec {
        num_players: 2,
        horizon: 1,
        type_space_sizes: vec![1, 1],
        action_space_sizes: vec![2, 2],
        priors: vec![vec![1.0], vec![1.0]],
        kernels: None,
        rewards: (0..2).map(|i| vec![(0..4).map(|a| payoff(i, a)).collect()]).collect(),
    }
}

fn solved(dir: &TempDir) -> (std::path::PathBuf, EquilibriumDocument) {
    let game = dir.path().join("game.json");
    let eq = dir.path().join("eq.json");
    write_json(&game, &build_spec(&PubGoodsParams::reference()));
    let out = spbe(&["solve", "--game", path_str(&game), "--out", path_str(&eq), "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = EquilibriumDocument::read(&eq).unwrap();
    (eq, doc)
}

#[test]
fn solve_then_verify_passes_and_embeds_the_config() {
    let dir = TempDir::new().unwrap();
    let (eq, doc) = solved(&dir);
    assert_eq!(doc.format, spbe::io::EQUILIBRIUM_FORMAT);
    assert_eq!(doc.config["command"], "solve");
    assert_eq!(doc.config["solver"]["rng_seed"], 7);
    let report = dir.path().join("report.json");
    let out = spbe(&["verify", "--equilibrium", path_str(&eq), "--out", path_str(&report)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).trim_end().ends_with("PASS"));
    let body: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(body["format"], spbe::io::REPORT_FORMAT);
    assert_eq!(body["report"]["pass"], true);
}

#[test]
fn reingested_documents_are_bit_exact() {
    let dir = TempDir::new().unwrap();
    let (eq, doc) = solved(&dir);
    let text = std::fs::read_to_string(&eq).unwrap();
    assert_eq!(EquilibriumDocument::parse(&text).unwrap().to_json(), text);

    let config = FixedPointConfig {
        rng_seed: 7,
        ..FixedPointConfig::default()
    };
    let game = Arc::new(validate_game(build_spec(&PubGoodsParams::reference())).unwrap());
    let direct = forward_construct(&EquilibriumGenerator::new(game.clone(), config).unwrap());
    let (profile, beliefs, values) = doc.to_parts(&game).unwrap();
    for node in 0..direct.tree().node_count() {
        let (Some(a), Some(b)) = (direct.profile.prescriptions[node].as_ref(), profile.prescriptions[node].as_ref()) else {
            assert!(profile.prescriptions[node].is_none());
            continue;
        };
        assert_eq!(a.to_vecs(), b.to_vecs());
        assert_eq!(direct.beliefs.get(node).map(|v| v.to_vecs()), beliefs.get(node).map(|v| v.to_vecs()));
        assert!(values[node].is_some());
    }
}

#[test]
fn corrupted_strategy_fails_with_a_localized_gap() {
    let dir = TempDir::new().unwrap();
    let (_, mut doc) = solved(&dir);
    // Stage 2 after joint abstention: player 0 of the low type always contributes.
    let node = doc
        .nodes
        .iter()
        .position(|n| n.history == vec![vec![0, 0]])
        .unwrap();
    let solution = doc.nodes[node].solution.as_mut().unwrap();
    let original = solution.strategy[0][0].clone();
    solution.strategy[0][0] = if original[1] > 0.5 { vec![1.0, 0.0] } else { vec![0.0, 1.0] };
    let bad = dir.path().join("bad.json");
    write_json(&bad, &doc);
    let report = dir.path().join("report.json");
    let out = spbe(&["verify", "--equilibrium", path_str(&bad), "--out", path_str(&report)]);
    assert_eq!(out.status.code(), Some(1));
    let body: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    let worst = body["report"]["entries"]
        .as_array()
        .unwrap()
        .iter()
        .max_by(|a, b| a["gap"].as_f64().unwrap().total_cmp(&b["gap"].as_f64().unwrap()))
        .unwrap();
    assert!(worst["gap"].as_f64().unwrap() > 1e-3);
    assert_eq!(worst["player"], 0);
    assert_eq!(worst["own_type"], 0);
}

#[test]
fn corrupted_belief_fails_at_its_node() {
    let dir = TempDir::new().unwrap();
    let (_, mut doc) = solved(&dir);
    let node = doc
        .nodes
        .iter()
        .position(|n| n.history == vec![vec![0, 0]])
        .unwrap();
    let belief = doc.nodes[node].belief.as_mut().unwrap();
    belief[1] = if belief[1][1] > 0.5 { vec![0.9, 0.1] } else { vec![0.1, 0.9] };
    let bad = dir.path().join("bad.json");
    write_json(&bad, &doc);
    let report = dir.path().join("report.json");
    let out = spbe(&["verify", "--equilibrium", path_str(&bad), "--out", path_str(&report)]);
    assert_eq!(out.status.code(), Some(1));
    let body: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(body["report"]["pass"], false);
    assert!(body["report"]["belief_consistency_max_error"].as_f64().unwrap() > 1e-3);
    assert_eq!(body["report"]["belief_consistency_worst_node"], serde_json::json!([0]));
}

#[test]
fn malformed_inputs_exit_with_input_error() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ \"players\": 2,").unwrap();
    assert_eq!(spbe(&["solve", "--game", path_str(&bad)]).status.code(), Some(3));
    assert_eq!(spbe(&["verify", "--equilibrium", path_str(&bad)]).status.code(), Some(3));
    let mut spec = matching_pennies();
    spec.priors[0] = vec![0.5];
    write_json(&bad, &spec);
    assert_eq!(spbe(&["solve", "--game", path_str(&bad)]).status.code(), Some(3));
    assert_eq!(spbe(&["solve", "--game", "/nonexistent/game.json"]).status.code(), Some(3));
    assert_eq!(spbe(&["solve"]).status.code(), Some(3));
    assert_eq!(spbe(&["example", "--damping", "0"]).status.code(), Some(3));
    assert_eq!(spbe(&["--help"]).status.code(), Some(0));
}

#[test]
fn unreachable_mixed_equilibrium_is_a_solver_failure() {
    let dir = TempDir::new().unwrap();
    let game = dir.path().join("pennies.json");
    write_json(&game, &matching_pennies());
    let out = spbe(&["solve", "--game", path_str(&game), "--no-support-enumeration", "--max-iter", "50"]);
    assert_eq!(out.status.code(), Some(2));
    let doc = EquilibriumDocument::parse(&String::from_utf8_lossy(&out.stdout)).unwrap();
    assert_eq!(doc.nodes[0].status, spbe::io::NodeState::Failed);
    // The same game solves once support enumeration is allowed.
    assert_eq!(spbe(&["solve", "--game", path_str(&game)]).status.code(), Some(0));
}

#[test]
fn map_output_is_independent_of_thread_count() {
    let a = spbe(&["--threads", "1", "map", "--resolution", "0.05"]);
    let b = spbe(&["--threads", "2", "map", "--resolution", "0.05", "--mode", "canonical"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# region-map q=0.1 xl=0.2 xh=1.2"));
    lines.next();
    assert_eq!(lines.count(), 21 * 21);
}

#[test]
fn simulate_reports_exact_values() {
    let dir = TempDir::new().unwrap();
    let (eq, _) = solved(&dir);
    let out_path = dir.path().join("sim.json");
    let out = spbe(&["simulate", "--equilibrium", path_str(&eq), "--episodes", "2000", "--seed", "3", "--out", path_str(&out_path)]);
    assert_eq!(out.status.code(), Some(0));
    let body: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_path).unwrap()).unwrap();
    assert_eq!(body["format"], spbe::io::SIMULATION_FORMAT);
    assert_eq!(body["config"]["rng_seed"], 3);
    assert_eq!(body["exact"].as_array().unwrap().len(), 2);
}
