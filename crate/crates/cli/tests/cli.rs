use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sphvortex(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sphvortex"))
        .current_dir(dir)
        .env_remove("SPHVORTEX_KERNEL_CACHE")
        .env_remove("SPHVORTEX_WORKERS")
        .args(args)
        .output()
        .expect("spawn sphvortex")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

/// Everything but the `# config=` line, which echoes the output path.
fn body(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with("# config="))
        .collect::<Vec<_>>()
        .join("\n")
}

fn trailer(path: &Path, key: &str) -> String {
    let text = fs::read_to_string(path).unwrap();
    let prefix = format!("# {key}=");
    text.lines()
        .rev()
        .find_map(|l| l.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("no {key}"))
        .to_string()
}

#[test]
fn malformed_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("bad.json"),
        r#"{"schema_version": 1, "solve": {"epsilon": "wide"}}"#,
    )
    .unwrap();
    assert_eq!(
        code(&sphvortex(dir.path(), &["--config", "bad.json", "solve"])),
        2
    );

    fs::write(dir.path().join("old.json"), r#"{"schema_version": 7}"#).unwrap();
    assert_eq!(
        code(&sphvortex(dir.path(), &["--config", "old.json", "pv"])),
        2
    );

    assert_eq!(
        code(&sphvortex(dir.path(), &["--config", "missing.json", "pv"])),
        2
    );
    assert_eq!(
        code(&sphvortex(dir.path(), &["sweep", "--eps", "0.1,0.2"])),
        2
    );
    assert_eq!(code(&sphvortex(dir.path(), &["solve", "--n-phi", "8"])), 2);
}

#[test]
fn grid_check_passes_on_default_and_coarse_grids() {
    let dir = tempfile::tempdir().unwrap();
    let o = sphvortex(dir.path(), &["grid-check"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let o = sphvortex(
        dir.path(),
        &["grid-check", "--n-phi", "8", "--n-theta", "4"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn odd_pair_run_writes_a_conserving_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let o = sphvortex(
        dir.path(),
        &["pv", "--t-end", "2", "--stride", "500", "--out", "pv.csv"],
    );
    assert_eq!(code(&o), 0);
    let path = dir.path().join("pv.csv");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# schema_version=1"));
    assert_eq!(lines.next(), Some("# kind=pv"));
    assert!(lines.next().unwrap().starts_with("# config={"));
    assert_eq!(lines.next(), Some("t,i,x1,x2,x3,kappa_i"));
    let rows = text.lines().filter(|l| !l.starts_with('#')).count() - 1;
    assert_eq!(rows, 2 * 5);
    assert!(trailer(&path, "hamiltonian_drift").parse::<f64>().unwrap() < 1e-12);
    assert_eq!(trailer(&path, "abort"), "none");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        vec![
            "pv", "--t-end", "1", "--stride", "50", "--omega", "-0.3", "--out", out,
        ]
    };
    assert_eq!(code(&sphvortex(dir.path(), &args("a.csv"))), 0);
    assert_eq!(code(&sphvortex(dir.path(), &args("b.csv"))), 0);
    assert_eq!(
        body(&dir.path().join("a.csv")),
        body(&dir.path().join("b.csv"))
    );

    let sweep = |out: &'static str, workers: &str| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_sphvortex"));
        c.current_dir(dir.path()).env("SPHVORTEX_WORKERS", workers);
        c.args([
            "sweep",
            "--eps",
            "0.4,0.3",
            "--cells-per-core",
            "60",
            "--out",
            out,
        ]);
        c.output().unwrap()
    };
    let a = sweep("s1.csv", "1");
    let b = sweep("s2.csv", "2");
    assert!(matches!(code(&a), 0 | 1) && code(&a) == code(&b));
    assert_eq!(
        body(&dir.path().join("s1.csv")),
        body(&dir.path().join("s2.csv"))
    );
}

#[test]
fn solve_then_evolve() {
    let dir = tempfile::tempdir().unwrap();
    let o = sphvortex(
        dir.path(),
        &[
            "solve",
            "--lambda",
            "0.159",
            "--eps",
            "0.3",
            "--cells-per-core",
            "60",
            "--out",
            "s",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("s/report.json")).unwrap())
            .unwrap();
    assert_eq!(report["schema_version"], 1);
    assert!(report["report"]["energy"].as_f64().unwrap() > 0.0);

    let o = sphvortex(
        dir.path(),
        &[
            "dynamics",
            "--field",
            "s/field.csv",
            "--lambda",
            "0.159",
            "--t-end",
            "0.4",
            "--dt",
            "0.04",
            "--out",
            "d.csv",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let path = dir.path().join("d.csv");
    assert_eq!(trailer(&path, "abort"), "none");
    assert!(trailer(&path, "energy_drift").parse::<f64>().unwrap() < 1e-6);
    assert!(trailer(&path, "particle_count").parse::<usize>().unwrap() > 10);

    // a field that does not exist is an input error
    let o = sphvortex(
        dir.path(),
        &["dynamics", "--field", "nope.csv", "--t-end", "0.1"],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn kernel_cache_is_reused() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &str| {
        Command::new(env!("CARGO_BIN_EXE_sphvortex"))
            .current_dir(dir.path())
            .env("SPHVORTEX_KERNEL_CACHE", "cache")
            .args([
                "solve",
                "--eps",
                "0.3",
                "--n-phi",
                "32",
                "--n-theta",
                "16",
                "--out",
                out,
            ])
            .output()
            .unwrap()
    };
    assert_eq!(code(&run("a")), 0);
    assert!(dir.path().join("cache/green_32x16.svgk").exists());
    assert_eq!(code(&run("b")), 0);
    assert_eq!(
        body(&dir.path().join("a/field.csv")),
        body(&dir.path().join("b/field.csv"))
    );
}
