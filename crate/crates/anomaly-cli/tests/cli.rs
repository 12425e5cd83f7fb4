use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anomaly-lab")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL: &[&str] = &["--l-cap", "1", "--xi-cap", "2", "--hbar-cap", "1"];

fn with_small<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend_from_slice(SMALL);
    v
}

#[test]
fn index_of_builtins() {
    let o = run(&["index", "--model", "boundary-tetrahedron"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["index"], 2);
    let o = run(&["index", "--model", "rank-one", "--format", "csv"]);
    assert_eq!(stdout(&o), "model,index\nrank-one,1\n");
}

#[test]
fn index_from_file_and_malformed_file() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("m.json");
    std::fs::write(&good, r#"{"kind":"abstract","vplus_dim":3,"vminus_dim":1,"dplus":[["1/2",0,0]]}"#).unwrap();
    let o = run(&["index", "--model", good.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("\"index\":2"));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"kind":"abstract","vplus_dim":1}"#).unwrap();
    let o = run(&["index", "--model", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("model file"));
}

#[test]
fn mckean_singer_csv_and_fault() {
    let o = run(&["mckean-singer", "--model", "boundary-tetrahedron", "--t-grid", "0.1,1,10", "--format", "csv"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "t,str_value,target,abs_error");
    assert_eq!(rows.len(), 4);
    for r in &rows[1..] {
        assert_eq!(r.split(',').nth(1), Some("2"), "{r}");
    }
    let o = run(&["mckean-singer", "--model", "hollow-triangle", "--format", "csv"]);
    for r in stdout(&o).lines().skip(1) {
        let v: f64 = r.split(',').nth(1).unwrap().parse().unwrap();
        assert!(v.abs() < 1e-9, "{r}");
    }
    let o = run(&["mckean-singer", "--model", "boundary-tetrahedron", "--break-adjoint", "1/1000"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn obstruction_values() {
    let o = run(&with_small(&["obstruction", "--model", "boundary-tetrahedron"]));
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let claim = v["claims"].as_array().unwrap().iter().find(|c| c["claim"].as_str().unwrap().starts_with("Obstr[t](gamma_0) =")).unwrap();
    assert_eq!(claim["computed"], serde_json::json!([-4.0, -4.0, -4.0]));
    let o = run(&with_small(&["obstruction", "--model", "hollow-triangle"]));
    assert_eq!(code(&o), 0);
    let o = run(&with_small(&["obstruction", "--model", "two-block"]));
    assert_eq!(code(&o), 0);
}

#[test]
fn suites_pass_and_faults_fail() {
    for s in ["qme", "rg", "hpl", "all"] {
        let o = run(&with_small(&["suite", s, "--model", "rank-one"]));
        assert_eq!(code(&o), 0, "{s}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = run(&with_small(&["suite", "hpl", "--model", "rank-one", "--break-eta"]));
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("iota∘pi − id = [d, eta]"));
    let o = run(&with_small(&["suite", "algebra", "--model", "rank-one", "--break-koszul", "phi,xi"]));
    assert_eq!(code(&o), 1);
}

#[test]
fn deterministic_output_and_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let p1 = dir.path().join("a.json");
    let p2 = dir.path().join("b.json");
    for p in [&p1, &p2] {
        let o = run(&with_small(&["suite", "rg", "--model", "solvable-block", "--out", p.to_str().unwrap()]));
        assert_eq!(code(&o), 0);
    }
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
}

#[test]
fn config_errors() {
    for args in [
        vec!["index", "--model", "rank-one", "--t-grid", "1,0.5"],
        vec!["index", "--model", "rank-one", "--t-grid", "-1"],
        vec!["index", "--model", "rank-one", "--l-cap", "0"],
        vec!["suite", "bogus", "--model", "rank-one"],
        vec!["index", "--model", "rank-one", "--action", "/no/such/action.json"],
    ] {
        assert_eq!(code(&run(&args)), 2, "{args:?}");
    }
}

#[test]
fn explicit_action_file() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    std::fs::write(&a, r#"{"name":"half","rho":[[["1/2",0,0],[0,"1/2",0],[0,0,"1/2"]]]}"#).unwrap();
    let o = run(&with_small(&["obstruction", "--model", "rank-one", "--action", a.to_str().unwrap()]));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("-1.0"));
}
