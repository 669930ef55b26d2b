use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tps-spectra"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.json", "b.json"] {
        let o = run(&["gen", "--class", "k-local", "--n", "4", "--k", "2", "--seed", "7", "--out", name], dir.path());
        assert_eq!(code(&o), 0);
    }
    let a = fs::read(dir.path().join("a.json")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.json")).unwrap());
    let c = run(&["gen", "--class", "k-local", "--n", "4", "--k", "2", "--seed", "8"], dir.path());
    assert_ne!(c.stdout, a);
}

#[test]
fn self_equivalence_has_identity_witness() {
    let dir = tempfile::tempdir().unwrap();
    run(&["gen", "--class", "nn-chain-open", "--n", "4", "--seed", "1", "--out", "a.json"], dir.path());
    let o = run(&["equiv", "a.json", "a.json"], dir.path());
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["verdict"], "equivalent");
    assert_eq!(v["witness"]["element"]["shift"], 0);
    assert_eq!(v["witness"]["element"]["reflect"], false);
    assert_eq!(v["witness"]["element"]["transpose"], false);
}

#[test]
fn statement1_instance_certifies() {
    let dir = tempfile::tempdir().unwrap();
    run(&["gen", "--class", "k-local", "--n", "10", "--k", "2", "--seed", "3", "--out", "h.json"], dir.path());
    let o = run(&["cert", "h.json"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["dim_ker_M"], 30);
    assert_eq!(v["verdict"], "pass");
    assert_eq!(v["seed"], 3);
    let csv = run(&["cert", "h.json", "--format", "csv"], dir.path());
    let text = String::from_utf8(csv.stdout).unwrap();
    assert!(text.starts_with("class_name,n,s,N,dim_ker_M"));
    assert!(text.lines().nth(1).unwrap().ends_with(",pass"));
}

#[test]
fn small_certificate_is_not_a_pass() {
    let dir = tempfile::tempdir().unwrap();
    run(&["gen", "--class", "k-local", "--n", "4", "--k", "2", "--seed", "3", "--out", "h.json"], dir.path());
    let o = run(&["cert", "h.json"], dir.path());
    assert_ne!(code(&o), 0);
}

#[test]
fn malformed_input_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.json"), "{\n  \"format\": \"tps-spectra/operator.v1\",\n  \"n\": [\n}\n").unwrap();
    let o = run(&["spectrum", "bad.json"], dir.path());
    assert_eq!(code(&o), 3);
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("bad.json") && err.contains("line 3"), "{err}");

    let out_of_class = r#"{"format":"tps-spectra/operator.v1","n":3,"d":2,"class":{"name":"k_local","k":1},
"terms":[{"letters":[3,3,0],"re":1.0,"im":0.0}]}"#;
    fs::write(dir.path().join("ooc.json"), out_of_class).unwrap();
    let o = run(&["spectrum", "ooc.json"], dir.path());
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8(o.stderr).unwrap().contains("line 2"));

    assert_eq!(code(&run(&["frobnicate"], dir.path())), 3);
    assert_eq!(code(&run(&["spectrum", "missing.json"], dir.path())), 3);
    assert_eq!(code(&run(&["gen", "--class", "k-local", "--n", "3"], dir.path())), 3);
}

#[test]
fn spectrum_outputs() {
    let dir = tempfile::tempdir().unwrap();
    run(&["gen", "--model", "ising", "--n", "3", "--out", "i.json"], dir.path());
    let o = run(&["spectrum", "i.json"], dir.path());
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["format"], "tps-spectra/spectrum.v1");
    assert_eq!(v["n_dim"], 8);
    assert_eq!(v["hermitian"], true);
    let csv = run(&["spectrum", "i.json", "--format", "csv"], dir.path());
    assert_eq!(String::from_utf8(csv.stdout).unwrap().lines().count(), 9);
}

#[test]
fn lemma_and_search_commands() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["lemma", "--n", "3", "--k", "1"], dir.path());
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["dim_found"], 10);

    run(&["gen", "--class", "ti-chain-periodic", "--n", "4", "--seed", "2", "--out", "t.json"], dir.path());
    let args = ["search", "t.json", "--class", "ti-chain-gauge-fixed", "--starts", "2", "--complexified", "--seed", "5"];
    let a = run(&args, dir.path());
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    let b = run(&args, dir.path());
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["format"], "tps-spectra/search.v1");
    assert_eq!(v["minima"].as_array().unwrap().len(), 2);
}

#[test]
fn experiment_is_reproducible_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"experiment":"statement3","n":4,"trials":2,"starts":2,"seed":11}"#;
    fs::write(dir.path().join("cfg.json"), cfg).unwrap();
    let one = run(&["experiment", "cfg.json", "--out", "r1", "--jobs", "1", "--format", "csv"], dir.path());
    assert!(matches!(code(&one), 0 | 1), "{}", String::from_utf8_lossy(&one.stderr));
    let four = run(&["experiment", "cfg.json", "--out", "r4", "--jobs", "4"], dir.path());
    assert_eq!(code(&one), code(&four));
    let r1 = fs::read(dir.path().join("r1/report.json")).unwrap();
    assert_eq!(r1, fs::read(dir.path().join("r4/report.json")).unwrap());
    assert!(dir.path().join("r1/metadata.json").exists());
    assert!(!dir.path().join("r1/trials.partial.jsonl").exists());
    let csv = fs::read_to_string(dir.path().join("r1/trials.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("trial,seed,input_digest,kind"));
}

#[test]
fn lemma_experiment_passes() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.json"), r#"{"experiment":"lemma_check","n":3}"#).unwrap();
    let o = run(&["experiment", "cfg.json", "--out", "out"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["success"], true);
    fs::write(dir.path().join("bad.json"), r#"{"experiment":"statement9"}"#).unwrap();
    assert_eq!(code(&run(&["experiment", "bad.json"], dir.path())), 3);
}
