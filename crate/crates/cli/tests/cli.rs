use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn corpus(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "core", "corpus", &format!("{name}.at")]
        .iter()
        .collect();
    p.to_string_lossy().into_owned()
}

fn intermit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_intermit"))
        .args(args)
        .env_remove("INTERMIT_COST_TABLE")
        .output()
        .expect("binary runs")
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

#[test]
fn analyze_reports_only_c_for_the_update_task() {
    let o = intermit(&["analyze", &corpus("partial_war")]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert_eq!(v["tasks"]["update"], serde_json::json!(["c"]));
    assert_eq!(v["tasks"]["report"], serde_json::json!([]));
    assert_eq!(v["maxCommitListSize"], 1);
}

#[test]
fn verify_protected_rsa_passes() {
    let o = intermit(&["verify", &corpus("rsa"), "--mode", "redo", "--exhaustive"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&o)["passed"], true);
}

#[test]
fn verify_unprotected_rsa_exits_2_with_first_divergent_step() {
    let dir = tempfile::tempdir().unwrap();
    let junit = dir.path().join("junit.xml");
    let o = intermit(&[
        "verify",
        &corpus("rsa_unprotected"),
        "--exhaustive",
        "--junit",
        junit.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("first divergent failure point is step"), "{err}");
    let v = json(&o);
    assert_eq!(v["passed"], false);
    assert!(v["campaigns"][0]["firstDivergentStep"].is_u64());
    let xml = fs::read_to_string(junit).unwrap();
    assert!(xml.contains("tests=\"2\" failures=\"2\""), "{xml}");
}

#[test]
fn verify_writes_summary_file_and_fuzzes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("summary.json");
    let o = intermit(&["verify", "bc", "--fuzz", "50", "--seed", "3", "--json", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(v["campaigns"].as_array().unwrap().len(), 2);
    assert_eq!(v["campaigns"][0]["runs"], 50);
}

#[test]
fn transform_emits_source_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.json");
    let o = intermit(&["transform", &corpus("partial_war"), "--mode", "redo", "--manifest", manifest.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let src = String::from_utf8(o.stdout).unwrap();
    assert!(src.contains("pre_commit"), "{src}");
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(manifest).unwrap()).unwrap();
    assert_eq!(m["mode"], "redo");
    assert_eq!(m["buffers"][0]["var"], "c");
}

#[test]
fn transform_output_is_stable() {
    for mode in ["redo", "undo", "ckpt"] {
        let o = intermit(&["transform", "cf", "--mode", mode, "--json"]);
        assert_eq!(o.status.code(), Some(0));
        assert_eq!(o.stdout, intermit(&["transform", "cf", "--mode", mode, "--json"]).stdout);
        assert_eq!(json(&o)["manifest"]["mode"], mode);
    }
}

#[test]
fn run_is_deterministic_and_reports_stats() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    let args = ["run", "lzw", "--mode", "undo", "--power", "budget=2000", "--seed", "9"];
    let a = intermit(&args);
    let b = intermit(&args);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let v = json(&a);
    assert_eq!(v["equivalence"], "pass");
    assert!(v["stats"]["reboots"].as_u64().unwrap() > 0);

    let mut traced = args.to_vec();
    traced.extend(["--trace", trace.to_str().unwrap()]);
    assert_eq!(intermit(&traced).status.code(), Some(0));
    let lines = fs::read_to_string(trace).unwrap();
    let first: serde_json::Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    assert_eq!(first["step"], 0);
}

#[test]
fn schedule_file_and_exhaustive_power_models() {
    let dir = tempfile::tempdir().unwrap();
    let sched = dir.path().join("s.txt");
    fs::write(&sched, "# two failures\n5\n\n20\n").unwrap();
    let spec = format!("schedule={}", sched.display());
    let o = intermit(&["run", "pair_update", "--mode", "redo", "--power", &spec]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&o)["stats"]["reboots"], 2);

    let o = intermit(&["run", "pair_update", "--mode", "undo", "--power", "exhaustive"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(&o)["divergent"], serde_json::json!([]));
}

#[test]
fn starved_budget_is_a_program_failure() {
    let o = intermit(&["run", "pair_update", "--power", "budget=10"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("forward-progress"));
}

#[test]
fn usage_errors_exit_3() {
    assert_eq!(intermit(&["run", "pair_update", "--power", "sometimes"]).status.code(), Some(3));
    assert_eq!(intermit(&["run", "pair_update", "--mode", "shadow"]).status.code(), Some(3));
    assert_eq!(intermit(&["analyze", "no_such_program"]).status.code(), Some(3));
    assert_eq!(intermit(&["frobnicate"]).status.code(), Some(3));
    assert_eq!(intermit(&["run", "pair_update", "--power", "budget=0"]).status.code(), Some(3));
}

#[test]
fn parse_errors_exit_1_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.at");
    fs::write(&p, "entry task t {\n  x = ;\n}\n").unwrap();
    let o = intermit(&["analyze", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.at:2"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn cost_table_flag_and_env_change_costs() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("costs.txt");
    fs::write(&t, "nv = 10\ncommit_copy = 20 # pricier copies\n").unwrap();
    let base = json(&intermit(&["run", "pair_update"]))["stats"]["cost"].clone();
    let flagged = json(&intermit(&["run", "pair_update", "--cost-table", t.to_str().unwrap()]))["stats"]["cost"].clone();
    assert_ne!(base, flagged);
    let env = Command::new(env!("CARGO_BIN_EXE_intermit"))
        .args(["run", "pair_update"])
        .env("INTERMIT_COST_TABLE", &t)
        .output()
        .unwrap();
    assert_eq!(json(&env)["stats"]["cost"], flagged);

    fs::write(&t, "nv = lots\n").unwrap();
    assert_eq!(intermit(&["run", "pair_update", "--cost-table", t.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn version_names_formats() {
    let o = intermit(&["--version"]);
    assert_eq!(o.status.code(), Some(0));
    let s = String::from_utf8_lossy(&o.stdout);
    assert!(s.contains("report format 1"), "{s}");
}

#[test]
fn bench_writes_csv_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, svg) = (dir.path().join("r.csv"), dir.path().join("p.svg"));
    let o = intermit(&[
        "bench",
        "--sweep",
        "tasksize",
        "--mode",
        "redo",
        "--mode",
        "undo",
        "--no-verify",
        "--out",
        csv.to_str().unwrap(),
        "--plot",
        svg.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 7);
    assert!(text.starts_with("benchmark,mode,sweep,point"));
    assert!(fs::read_to_string(svg).unwrap().starts_with("<svg"));

    let o = intermit(&["bench", "--suite", "rsa", "--mode", "ckpt"]);
    assert_eq!(o.status.code(), Some(0));
    let again = intermit(&["bench", "--suite", "rsa", "--mode", "ckpt"]);
    assert_eq!(o.stdout, again.stdout);
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 2);
}
