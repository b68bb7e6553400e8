use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pklap(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pklap"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env_remove("PKLAP_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn decay_ladder_has_three_rungs_and_falling_norms() {
    let dir = tempfile::tempdir().unwrap();
    let o = pklap(dir.path(), &["--preset", "decay", "ladder"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("ladder.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(csv.lines().next().unwrap(), "n,K,J,norm_E,sup_norm,residual_sup,verdict");
    assert_eq!(rows.len(), 3);
    let norms: Vec<f64> = rows.iter().filter(|r| !r[3].is_empty()).map(|r| r[3].parse().unwrap()).collect();
    assert_eq!(norms.len(), 2);
    assert!(norms[1] < norms[0]);
    assert_eq!(rows[2][6], "certified");
}

#[test]
fn summary_numbers_equal_the_json() {
    let dir = tempfile::tempdir().unwrap();
    let o = pklap(dir.path(), &["--preset", "decay", "ladder"]);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("ladder.json")).unwrap()).unwrap();
    assert_eq!(json["schema"], "pklap-report/1");
    let out = stdout(&o);
    for rec in json["data"].as_array().unwrap().iter().take(2) {
        for field in ["j_value", "norm_e", "sup_norm", "residual_sup"] {
            let v = rec[field].as_f64().unwrap();
            assert!(out.contains(&format!("{v:e}")), "{field} = {v:e} missing from summary");
        }
    }
}

#[test]
fn ricceri_verdicts_on_the_decay_preset() {
    let dir = tempfile::tempdir().unwrap();
    let o = pklap(dir.path(), &["--preset", "decay", "ricceri"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("ricceri.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.ends_with("delta<1: yes")));
    let first: Vec<&str> = rows[0].split(',').collect();
    assert!((first[3].parse::<f64>().unwrap() - 0.125).abs() < 1e-9);
}

#[test]
fn check_with_the_tent_supports_fails_with_an_offender() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config::decay().replace("intervals = \"gaps\"", "intervals = \"supports\"");
    let path = dir.path().join("supports.toml");
    fs::write(&path, cfg).unwrap();
    let o = pklap(dir.path(), &["--config", path.to_str().unwrap(), "check"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("sign on 4 intervals: FAIL - worst f_1("), "{}", stdout(&o));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("check.json")).unwrap()).unwrap();
    let worst = &json["data"]["sign"]["worst"];
    assert_eq!(worst["k"], 1);
    let t = worst["t"]["log2_abs"].as_f64().unwrap().exp2();
    assert!((t - 0.15625).abs() < 1e-12, "{worst}");
    assert_eq!(json["data"]["pass"], false);
}

#[test]
fn gaps_pass_the_check() {
    let dir = tempfile::tempdir().unwrap();
    let o = pklap(dir.path(), &["--preset", "decay", "check"]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");

    fs::write(&bad, "").unwrap();
    let o = pklap(dir.path(), &["--config", bad.to_str().unwrap(), "norm"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing problem block"));

    fs::write(&bad, config::decay().replace("q = 2.0", "q = 1.4")).unwrap();
    let o = pklap(dir.path(), &["--config", bad.to_str().unwrap(), "check"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("line 12: family.q") && err.contains("(p+ + 1)/p- < q"), "{err}");

    let o = pklap(dir.path(), &["--preset", "nope", "norm"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn outputs_repeat_byte_for_byte() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = pklap(d.path(), &["--preset", "decay", "--full-vectors", "--emit-plot-data", "ladder"]);
        assert_eq!(o.status.code(), Some(0));
    }
    for f in ["ladder.json", "ladder.csv", "profile.csv", "norms.csv"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn energy_and_norm_of_the_preset_spike() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(pklap(dir.path(), &["--preset", "decay", "energy"]).status.code(), Some(0));
    let e: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("energy.json")).unwrap()).unwrap();
    assert_eq!(e["data"]["j"], -0.03125);
    let o = pklap(dir.path(), &["--preset", "growth", "--log-domain", "certify"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("-2^6561"), "{}", stdout(&o));
}

#[test]
fn out_dir_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_pklap"))
        .args(["--preset", "decay", "norm"])
        .env("PKLAP_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("norm.json").exists());
}

mod config {
    pub fn decay() -> String {
        include_str!("../presets/decay.toml").to_string()
    }
}
