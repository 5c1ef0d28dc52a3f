use std::path::Path;
use std::process::Command;

fn lieham(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_lieham"))
        .args(args)
        .env_remove("SOURCE_DATE_EPOCH")
        .output()
        .expect("binary runs")
}

fn config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const TWO_PHOTON: &str = "[model]\nkind = \"cascade\"\nlevels = 3\natoms = 1\ng = [1.0, 1.0]\ndetunings = [0.0, 20.0, 0.0]\n";

#[test]
fn derive_writes_table_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "a.toml", TWO_PHOTON);
    let out_path = dir.path().join("derive.csv");
    let out = lieham(&[
        "derive",
        "--config",
        &cfg,
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report = String::from_utf8(out.stdout).unwrap();
    assert!(
        report.contains("psi_1^(2) = -1.000000000000e-1"),
        "{report}"
    );
    let table = lieham::cli::read_table(&out_path).unwrap();
    assert_eq!(table.columns, ["order", "i", "j", "re", "im"]);
    assert!(table
        .metadata
        .iter()
        .any(|(k, v)| k == "command" && v == "derive"));
}

#[test]
fn flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "a.toml", TWO_PHOTON);
    let out_path = dir.path().join("v.csv");
    let out = lieham(&[
        "verify",
        "--config",
        &cfg,
        "--out",
        out_path.to_str().unwrap(),
        "--seed",
        "17",
        "--order",
        "2",
        "--max-steps",
        "30",
        "--resonance-tol",
        "1e-8",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(&out_path).unwrap();
    for line in [
        "# seed: 17\n",
        "# order: 2\n",
        "# max_steps: 30\n",
        "# resonance_tol: 0.00000001\n",
    ] {
        assert!(text.contains(line), "{line} missing from\n{text}");
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "a.toml",
        &format!("{TWO_PHOTON}[evolve]\npoints = 60\n"),
    );
    let mut files = Vec::new();
    for k in 0..2 {
        let p = dir.path().join(format!("e{k}.csv"));
        let out = lieham(&["evolve", "--config", &cfg, "--out", p.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
        files.push(std::fs::read(p).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn errors_exit_with_two_and_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let bad = config(
        dir.path(),
        "bad.toml",
        &TWO_PHOTON.replace("g = [1.0, 1.0]\n", ""),
    );
    let out = lieham(&["spectrum", "--config", &bad]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("g: required"), "{err}");

    let unknown = config(
        dir.path(),
        "u.toml",
        &format!("{TWO_PHOTON}[run]\nstep = 3\n"),
    );
    let err = String::from_utf8(lieham(&["verify", "--config", &unknown]).stderr).unwrap();
    assert!(err.contains("line 8") && err.contains("step"), "{err}");

    let out = lieham(&[
        "verify",
        "--config",
        dir.path().join("missing.toml").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = lieham(&["verify", "--config", &bad, "--max-steps", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invariant_violation_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "a.toml", TWO_PHOTON);
    assert_eq!(lieham(&["verify", "--config", &cfg]).status.code(), Some(0));
    // one rotation cannot reach the residual target
    let out = lieham(&["verify", "--config", &cfg, "--max-steps", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .contains("pipeline runs short of target"));
}

#[test]
fn deformed_verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "d.toml",
        "[model]\nkind = \"deformed\"\nphi = \"spin\"\nj = 1.0\ndelta = 1.0\ncoupling = 0.1\n",
    );
    assert_eq!(lieham(&["verify", "--config", &cfg]).status.code(), Some(0));
}
