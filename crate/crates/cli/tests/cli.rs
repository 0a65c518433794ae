use std::path::Path;
use std::process::{Command, Output};

fn thinphase(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thinphase"))
        .args(args)
        .current_dir(cwd)
        .env_remove("THINPHASE_OUT")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn missing_config_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = thinphase(&["solve", "--config", "missing.cfg"], tmp.path());
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.cfg"));
}

#[test]
fn unknown_subcommand_and_bad_configs_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&thinphase(&["explode"], tmp.path())), 2);
    std::fs::write(
        tmp.path().join("bad.cfg"),
        "n = 1\nthis line has no value\n",
    )
    .unwrap();
    assert_eq!(
        code(&thinphase(&["solve", "--config", "bad.cfg"], tmp.path())),
        2
    );
    std::fs::write(tmp.path().join("typo.cfg"), "hh = 1/32\n").unwrap();
    assert_eq!(
        code(&thinphase(&["solve", "--config", "typo.cfg"], tmp.path())),
        2
    );
    assert_eq!(code(&thinphase(&["solve", "--set", "n=5"], tmp.path())), 2);
    assert_eq!(
        code(&thinphase(
            &["diagnose", "--field", "nope.chk", "--mask", "nope.chk"],
            tmp.path()
        )),
        2
    );
    assert_eq!(code(&thinphase(&["--help"], tmp.path())), 0);
}

#[test]
fn verify_exact_default_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = thinphase(
        &["verify-exact", "--config", "default", "--out", "v"],
        tmp.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows: Vec<serde_json::Value> =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("v/verify.json")).unwrap())
            .unwrap();
    assert!(rows.len() > 20);
    for r in &rows {
        assert_eq!(r["pass"], true, "{r}");
        assert!(r["h"].is_number() && r.get("tolerance").is_some());
    }
}

#[test]
fn solve_then_weiss_emits_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let out = thinphase(&["solve", "--set", "h=1/32", "--out", "run"], tmp.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "field.chk",
        "mask.chk",
        "solve_history.csv",
        "solve_summary.json",
    ] {
        assert!(tmp.path().join("run").join(f).exists(), "{f}");
    }
    let args = [
        "weiss",
        "--field",
        "run/field.chk",
        "--mask",
        "run/mask.chk",
        "--center",
        "0,0",
        "--radii",
        "0.2:0.05:0.8",
        "--out",
        "run",
    ];
    let out = thinphase(&args, tmp.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(tmp.path().join("run/weiss.csv")).unwrap();
    assert_eq!(
        rdr.headers().unwrap(),
        vec!["r", "phi", "running_defect", "h", "tol"]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 13);
    assert_eq!(&rows[0][0], "0.2");
    for r in &rows {
        assert_eq!(r[3].parse::<f64>().unwrap(), 1.0 / 32.0);
        let phi: f64 = r[1].parse().unwrap();
        assert!((phi - 1.0).abs() < 0.03, "{phi}");
    }
}

#[test]
fn weiss_rejects_balls_leaving_the_box() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&thinphase(
            &["solve", "--set", "h=1/16", "--out", "run"],
            tmp.path()
        )),
        0
    );
    let args = [
        "weiss",
        "--field",
        "run/field.chk",
        "--mask",
        "run/mask.chk",
        "--center",
        "0.5",
        "--radii",
        "0.8",
        "--out",
        "run",
    ];
    assert_eq!(code(&thinphase(&args, tmp.path())), 2);
}

#[test]
fn unconverged_solve_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let out = thinphase(
        &[
            "solve",
            "--set",
            "h=1/32",
            "--set",
            "max_outer=1",
            "--out",
            "run",
        ],
        tmp.path(),
    );
    assert_eq!(code(&out), 1);
    assert!(tmp.path().join("run/solve_summary.json").exists());
}

#[test]
fn output_root_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |extra: &[&str], env: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_thinphase"));
        cmd.arg("verify-exact")
            .args(extra)
            .current_dir(tmp.path())
            .env_remove("THINPHASE_OUT");
        if let Some(e) = env {
            cmd.env("THINPHASE_OUT", e);
        }
        assert!(cmd.status().unwrap().success());
    };
    run(&[], None);
    assert!(tmp.path().join("thinphase-out/verify.json").exists());
    run(&[], Some("from_env"));
    assert!(tmp.path().join("from_env/verify.json").exists());
    run(&["--set", "out=from_config"], Some("from_env"));
    assert!(tmp.path().join("from_config/verify.json").exists());
    run(
        &["--set", "out=from_config", "--out", "from_flag"],
        Some("from_env"),
    );
    assert!(tmp.path().join("from_flag/verify.json").exists());
}
