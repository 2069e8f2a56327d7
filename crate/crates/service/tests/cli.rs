use std::path::Path;
use std::process::Command;

use serde_json::{json, Value};

fn fbt(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_fbt")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "fbt {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write(path: &Path, v: &Value) -> String {
    std::fs::write(path, v.to_string()).unwrap();
    path.display().to_string()
}

#[test]
fn simulate_bootstrap_update_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write(
        &dir.path().join("plan.json"),
        &json!({ "lengths": [2, 4], "n_sequences": 30, "shots": 50, "seed": 3 }),
    );
    let injection = write(
        &dir.path().join("inj.json"),
        &json!({ "static": [{ "target": "x1", "generator": "H_IX", "value": 0.02 }] }),
    );
    let records = dir.path().join("records.ndjson");
    fbt(&["simulate", "--plan", &plan, "--injection", &injection, "--out", records.to_str().unwrap()]);
    let lines = std::fs::read_to_string(&records).unwrap();
    assert_eq!(lines.lines().count(), 30);

    let config = write(
        &dir.path().join("session.json"),
        &json!({ "estimator": { "approx_error": false }, "snapshot_interval": 10 }),
    );
    let ckpt = dir.path().join("s.ckpt");
    let ckpt_s = ckpt.to_str().unwrap();
    fbt(&["bootstrap", "--config", &config, "--id", "cli", "--out", ckpt_s]);
    let summaries = fbt(&["update", "--checkpoint", ckpt_s, "--records", records.to_str().unwrap()]);
    assert_eq!(summaries.lines().count(), 30);
    let last: Value = serde_json::from_str(summaries.lines().last().unwrap()).unwrap();
    assert_eq!(last["index"], 30);

    let info: Value = serde_json::from_str(&fbt(&["checkpoint", ckpt_s])).unwrap();
    assert_eq!(info["update_count"], 30);
    assert_eq!(info["dim"], 1792);
    assert_eq!(info["session"], "cli");
    let report: Value = serde_json::from_str(&fbt(&["checkpoint", ckpt_s, "--report"])).unwrap();
    assert_eq!(report["snapshot_count"], 3);
    let mean: Value = serde_json::from_str(&fbt(&["checkpoint", ckpt_s, "--mean"])).unwrap();
    assert_eq!(mean["schema"], "fbt.gateset.v1");
}

#[test]
fn gauge_opt_and_taxonomy() {
    use fbt_core::gateset::{ideal_two_qubit_gateset, TwoQubitGate};
    use fbt_core::pauli::{pauli_rotation, ptm_from_unitary};
    let dir = tempfile::tempdir().unwrap();
    let mut gs = ideal_two_qubit_gateset(TwoQubitGate::Cz);
    let u = pauli_rotation("IX", 0.03).unwrap();
    gs.set_noise(&"x1".into(), ptm_from_unitary(&u).unwrap()).unwrap();
    let path = dir.path().join("gs.json");
    std::fs::write(&path, gs.to_json()).unwrap();
    let p = path.to_str().unwrap();

    let g: Value = serde_json::from_str(&fbt(&["gauge-opt", "--gateset", p])).unwrap();
    assert!(g["objective"].as_f64().unwrap() >= 0.0);
    assert_eq!(g["gauge"].as_array().unwrap().len(), 16);

    let csv = fbt(&["taxonomy", "--gateset", p, "--csv"]);
    assert_eq!(csv.lines().next().unwrap(), "channel,label,class,coefficient,contribution");
    assert_eq!(csv.lines().count(), 1 + 7 * 240);
    let snap: Value = serde_json::from_str(&fbt(&["taxonomy", "--gateset", p])).unwrap();
    let x1 = snap["channels"].as_array().unwrap().iter().find(|c| c["channel"] == "x1").unwrap();
    assert!(x1["eps_ent"].as_f64().unwrap() > 0.0);
}

#[test]
fn experiments_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write(
        &dir.path().join("plan.json"),
        &json!({ "n_sequences": 12, "shots": 50, "seed": 5 }),
    );
    let analysis = write(
        &dir.path().join("analysis.json"),
        &json!({ "estimator": { "approx_error": false }, "ci_draws": 4, "min_records": 20 }),
    );
    let csv = fbt(&[
        "experiment", "length-sweep", "--plan", &plan, "--config", &analysis, "--lengths", "2,4",
    ]);
    assert_eq!(csv.lines().next().unwrap(), "gate,coefficient,L,value,ci_low,ci_high");
    assert!(csv.lines().count() > 1);

    let drift_plan = write(
        &dir.path().join("drift_plan.json"),
        &json!({ "lengths": [2, 4], "batch_size": 6, "n_batches": 3, "shots": 20, "seed": 2 }),
    );
    let drift = write(
        &dir.path().join("drift.json"),
        &json!({
            "analysis": { "estimator": { "approx_error": false }, "ci_draws": 3 },
            "tracked": [{ "channel": "x1", "generator": "eps_ent" }],
        }),
    );
    let out = dir.path().join("drift.json.out");
    let csv = fbt(&[
        "experiment", "drift-track", "--plan", &drift_plan, "--config", &drift,
        "--json", out.to_str().unwrap(),
    ]);
    assert_eq!(csv.lines().next().unwrap(), "batch,lab_time,gate,eps_ent,generator,contribution");
    let result: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(result["batches"].as_array().unwrap().len(), 3);
}

#[test]
fn bad_input_fails_with_context() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write(&dir.path().join("plan.json"), &json!({ "shots": "many" }));
    let out = Command::new(env!("CARGO_BIN_EXE_fbt"))
        .args(["simulate", "--plan", &plan])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("shots"), "{err}");
}
