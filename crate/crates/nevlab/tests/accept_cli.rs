//! CLI contract: exit codes, emitted files, determinism and config files.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn nevlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nevlab")).current_dir(dir).args(args).output().expect("spawn nevlab")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn htree_writes_one_row_per_tip() {
    let d = tempfile::tempdir().unwrap();
    let o = nevlab(d.path(), &["htree", "--beta", "1.5", "--depth", "8", "--csv", "out.csv", "--svg", "t.svg"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(d.path().join("out.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x,y"));
    assert_eq!(lines.count(), 256);
    let svg = std::fs::read_to_string(d.path().join("t.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 511);
}

#[test]
fn scaling_csv_rows() {
    let d = tempfile::tempdir().unwrap();
    let o = nevlab(d.path(), &["snake-scaling", "--Ns", "16,32,64", "--csv", "s.csv", "--quiet"]);
    assert_eq!(code(&o), 0);
    assert!(o.stderr.is_empty());
    let csv = std::fs::read_to_string(d.path().join("s.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "N,degree,ell,sup_norm,slope_partial");
    assert_eq!(rows.len(), 4);
    let slope: f64 = rows[3].rsplit(',').next().unwrap().parse().unwrap();
    assert!((0.4..=0.6).contains(&slope), "{slope}");
}

#[test]
fn usage_errors_exit_64() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&nevlab(d.path(), &["needle", "--frobnicate"])), 64);
    assert_eq!(code(&nevlab(d.path(), &[])), 64);
    assert_eq!(code(&nevlab(d.path(), &["needle", "--nodes", "many"])), 64);
    assert_eq!(code(&nevlab(d.path(), &["verify"])), 64);
    let help = nevlab(d.path(), &["--help"]);
    assert_eq!(code(&help), 0);
    assert!(String::from_utf8_lossy(&help.stdout).contains("snake-scaling"));
}

#[test]
fn hard_errors_exit_1() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&nevlab(d.path(), &["needle", "--b", "1.5"])), 1);
    assert_eq!(code(&nevlab(d.path(), &["verify", "--in", "missing.json"])), 1);
    std::fs::write(d.path().join("junk.json"), "{\"not\": \"a map\"}").unwrap();
    let o = nevlab(d.path(), &["verify", "--in", "junk.json"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn verification_failure_still_writes_outputs() {
    let d = tempfile::tempdir().unwrap();
    // a bare needle is not a disc map: its image curve does not wind around F(0)
    assert_eq!(code(&nevlab(d.path(), &["needle", "--nodes", "16", "--out", "n.json"])), 0);
    let o = nevlab(d.path(), &["verify", "--in", "n.json", "--report", "v.json", "--json-report", "all.json"]);
    assert_eq!(code(&o), 2);
    let rep = json(&d.path().join("v.json"));
    assert_eq!(rep["pass"], false);
    assert_eq!(rep["result"]["winding"]["index"], 0);
    assert_eq!(rep["result"]["simple"]["simple"], true);
    assert!(rep["result"]["boxdim"]["slope"].as_f64().unwrap() > 0.9);
    assert_eq!(std::fs::read(d.path().join("v.json")).unwrap(), std::fs::read(d.path().join("all.json")).unwrap());

    let o = nevlab(d.path(), &["treemap", "--depth", "1", "--report", "t.json", "--out", "phi.json", "--svg", "t.svg"]);
    assert_eq!(code(&o), 2);
    let rep = json(&d.path().join("t.json"));
    assert_eq!(rep["pass"], false);
    assert_eq!(rep["result"]["failed_word"]["word"], "e");
    assert!(d.path().join("phi.json").exists() && d.path().join("t.svg").exists());
}

#[test]
fn verify_accepts_snake_output() {
    let d = tempfile::tempdir().unwrap();
    let o = nevlab(d.path(), &["snake", "--N", "16", "--beta", "0.25", "--out", "f.json", "--report", "s.json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&d.path().join("s.json"))["result"]["boxes"]["pass"], true);
    assert_eq!(json(&d.path().join("f.json"))["domain"], "upper-half-plane");
    let o = nevlab(d.path(), &["verify", "--in", "f.json", "--checks", "winding,simple", "--report", "v.json"]);
    assert_eq!(code(&o), 0);
    let rep = json(&d.path().join("v.json"));
    assert_eq!(rep["result"]["domain"], "upper-half-plane");
    assert_eq!(rep["result"]["winding"]["index"], 1);
    assert!(rep["result"].get("length").is_none());

    // the length along the real line agrees with the scaling experiment's
    let o = nevlab(d.path(), &["snake", "--N", "32", "--beta", "0.125", "--Q", "3", "--out", "g.json"]);
    assert_eq!(code(&o), 0);
    let o = nevlab(d.path(), &["verify", "--in", "g.json", "--checks", "length", "--report", "l.json"]);
    assert_eq!(code(&o), 0);
    let ell = json(&d.path().join("l.json"))["result"]["length"]["ell"].as_f64().unwrap();
    let o = nevlab(d.path(), &["snake-scaling", "--Ns", "16,32", "--beta", "0.125", "--Q", "3", "--report", "sc.json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let sc = json(&d.path().join("sc.json"));
    assert_eq!(sc["result"]["beta"], 0.125);
    let row = sc["result"]["rows"][1]["ell"].as_f64().unwrap();
    assert!((ell - row).abs() <= 1e-6 * row, "{ell} vs {row}");
}

#[test]
fn verify_rejects_unknown_domain() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("m.json"), r#"{"affine": [[0, 0], [1, 0]], "terms": [], "domain": "annulus"}"#).unwrap();
    let o = nevlab(d.path(), &["verify", "--in", "m.json", "--checks", "winding"]);
    assert_eq!(code(&o), 1);
    std::fs::write(d.path().join("m.json"), r#"{"affine": [[0, 0], [1, 0]], "terms": [], "domain": "disc"}"#).unwrap();
    let o = nevlab(d.path(), &["verify", "--in", "m.json", "--checks", "length,winding,simple"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn pw_and_needle_pass() {
    let d = tempfile::tempdir().unwrap();
    let o = nevlab(d.path(), &["pw", "--report", "pw.json", "--out", "fc.json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep = json(&d.path().join("pw.json"));
    assert_eq!(rep["result"]["spikes"]["pass"], true);
    let fc = std::fs::read_to_string(d.path().join("fc.json")).unwrap();
    assert!(fc.contains("one_minus"));
    let o = nevlab(d.path(), &["needle", "--b", "0.5", "--nodes", "32", "--verify", "--grid", "128", "--report", "n.json"]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&d.path().join("n.json"))["result"]["verification"]["grid"]["per_region"], 128);
}

#[test]
fn reruns_are_byte_identical() {
    let d = tempfile::tempdir().unwrap();
    let run = |tag: &str| {
        let args = ["snake", "--N", "32", "--auto-beta", "--svg", "s.svg", "--out", "f.json", "--report", "r.json", "--quiet"];
        assert_eq!(code(&nevlab(d.path(), &args)), 0);
        for f in ["s.svg", "f.json", "r.json"] {
            std::fs::rename(d.path().join(f), d.path().join(format!("{tag}-{f}"))).unwrap();
        }
    };
    run("a");
    run("b");
    for f in ["s.svg", "f.json", "r.json"] {
        let a = std::fs::read(d.path().join(format!("a-{f}"))).unwrap();
        let b = std::fs::read(d.path().join(format!("b-{f}"))).unwrap();
        assert!(a == b, "{f} differs between runs");
    }
}

#[test]
fn config_file_supplies_defaults() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(
        d.path().join("run.cfg"),
        "# shared settings\nbeta = 1.0\ndepth = 4\nseed = 9\nnodes = 12   # needle-only key, ignored here\nquiet = true\n",
    )
    .unwrap();
    let o = nevlab(d.path(), &["htree", "--config", "run.cfg", "--depth", "5", "--report", "r.json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stderr.is_empty());
    let rep = json(&d.path().join("r.json"));
    let cfg = &rep["config"];
    assert_eq!(cfg["global"]["seed"], 9);
    assert_eq!(cfg["cmd"]["htree"]["beta"], 1.0);
    assert_eq!(cfg["cmd"]["htree"]["depth"], 5);
    assert_eq!(rep["result"]["endpoints"], 32);

    // the same run spelled out on the command line gives the same report
    let d2 = tempfile::tempdir().unwrap();
    let o = nevlab(d2.path(), &["htree", "--beta", "1.0", "--depth", "5", "--seed", "9", "--quiet", "--report", "r.json"]);
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read(d.path().join("r.json")).unwrap(), std::fs::read(d2.path().join("r.json")).unwrap());

    std::fs::write(d.path().join("bad.cfg"), "wibble = 3\n").unwrap();
    assert_eq!(code(&nevlab(d.path(), &["htree", "--config", "bad.cfg"])), 64);
    assert_eq!(code(&nevlab(d.path(), &["htree", "--config", "nope.cfg"])), 64);
}
