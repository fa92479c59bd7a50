//! End-to-end checks of the command surface: exit codes, file formats, the
//! config echo, and bitwise reproducibility.

use std::path::PathBuf;
use std::process::Command;

use ellinc_cli::commands::{self, Common};
use ellinc_cli::config::{build_all, Config};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ellinc"))
}

fn write_cfg(dir: &std::path::Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const TINY_TORSION: &str = "\
[nfunction M]
family = power
dimension = 2
p = 2
coeff = 0.5

[graph A]
kind = identity
dimension = 2
c_A = 1
m = 0
nfunction = M
strictly_monotone = true

[problem torsion]
domain = disk 1
h = 0.2
graph = A
f = 1
eps = 1, 0.5
trunc_levels = 0.1, 0.2, 0.3
";

const SIGN_GRAPH: &str = "\
[graph S]
kind = curve
dimension = 1
breakpoints = 0 -1 1
left_slope = 0
right_slope = 0
";

#[test]
fn missing_config_exits_66() {
    let st = bin()
        .args(["solve", "--config", "/nonexistent/path.cfg"])
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(66));
}

#[test]
fn parse_error_exits_64_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "bad.cfg", "[problem p]\ndomain disk 1\n");
    let out = bin().args(["solve", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(64));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "stderr: {err}");
}

#[test]
fn expression_error_carries_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let text = TINY_TORSION.replace("f = 1", "f = 1 +* x1");
    let cfg = write_cfg(dir.path(), "expr.cfg", &text);
    let out = bin().args(["solve", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(64));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("19:"), "stderr: {err}");
}

#[test]
fn non_monotone_graph_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = "\
[graph bad]
kind = curve
dimension = 1
breakpoints = -1 1 1; 0 0 0

[nfunction M]
family = power
p = 2

[problem p]
domain = interval 0 1
h = 0.25
graph = bad
nfunction = M
f = 1
eps = 1
";
    let cfg = write_cfg(dir.path(), "bad_graph.cfg", text);
    let out = bin().args(["solve", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn minty_table_golden_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "sign.cfg", SIGN_GRAPH);
    let out_dir = dir.path().join("out");
    let common = Common {
        config: cfg,
        out: Some(out_dir.clone()),
        set: vec![],
        seed: None,
        force: false,
        quiet: true,
    };
    assert_eq!(commands::cmd_minty(&common, &[-3.0, -0.5, 0.0, 0.5, 3.0]), 0);
    let got = std::fs::read_to_string(out_dir.join("minty.csv")).unwrap();
    let expect = "nu,xi,eta,mu\n\
-3.0000000000000000e0,-2.0000000000000000e0,-1.0000000000000000e0,1.0000000000000000e0\n\
-5.0000000000000000e-1,0.0000000000000000e0,-5.0000000000000000e-1,-5.0000000000000000e-1\n\
0.0000000000000000e0,0.0000000000000000e0,0.0000000000000000e0,0.0000000000000000e0\n\
5.0000000000000000e-1,0.0000000000000000e0,5.0000000000000000e-1,5.0000000000000000e-1\n\
3.0000000000000000e0,2.0000000000000000e0,1.0000000000000000e0,-1.0000000000000000e0\n";
    assert_eq!(got, expect);
}

#[test]
fn minty_with_empty_list_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "sign.cfg", SIGN_GRAPH);
    let out_dir = dir.path().join("out");
    let common = Common {
        config: cfg,
        out: Some(out_dir.clone()),
        set: vec![],
        seed: None,
        force: false,
        quiet: true,
    };
    assert_eq!(commands::cmd_minty(&common, &[]), 0);
    let got = std::fs::read_to_string(out_dir.join("minty.csv")).unwrap();
    assert_eq!(got, "nu,xi,eta,mu\n");
}

#[test]
fn conjugate_table_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "p3.cfg",
        "[nfunction M3]\nfamily = power\ndimension = 1\np = 3\ncoeff = 0.333333333333333333\n",
    );
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["conjugate", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(&out_dir)
        .args(["--eta-min", "0.5", "--eta-max", "8", "--count", "16"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let table = std::fs::read_to_string(out_dir.join("conjugate.csv")).unwrap();
    for line in table.lines().skip(1) {
        let mut cells = line.split(',');
        let eta: f64 = cells.next().unwrap().parse().unwrap();
        let val: f64 = cells.next().unwrap().parse().unwrap();
        let expect = eta.powf(1.5) / 1.5;
        assert!((val - expect).abs() <= 1e-6 * (1.0 + expect), "eta={eta}");
    }
}

#[test]
fn bound_refuses_one_dimensional_problems() {
    let dir = tempfile::tempdir().unwrap();
    let text = "\
[nfunction M]
family = power
p = 2
coeff = 0.5

[graph A]
kind = identity
c_A = 1
nfunction = M

[problem p1d]
domain = interval 0 1
h = 0.1
graph = A
f = 1
eps = 1
";
    let cfg = write_cfg(dir.path(), "p1d.cfg", text);
    let out = bin().args(["bound", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(64));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("d >= 2"), "stderr: {err}");
}

#[test]
fn solve_run_directory_contents_and_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "torsion.cfg", TINY_TORSION);
    let run = |out: &std::path::Path| {
        let common = Common {
            config: cfg.clone(),
            out: Some(out.to_path_buf()),
            set: vec!["torsion.h=0.25".into()],
            seed: Some(42),
            force: false,
            quiet: true,
        };
        commands::cmd_solve(&common)
    };
    let out1 = dir.path().join("run1");
    let out2 = dir.path().join("run2");
    assert_eq!(run(&out1), 0);
    assert_eq!(run(&out2), 0);
    for name in [
        "config_echo.cfg",
        "mesh.txt",
        "solution_000.csv",
        "solution_001.csv",
        "energy.csv",
        "radiation.csv",
        "cauchy.csv",
        "bound.csv",
        "summary.txt",
        "DONE",
    ] {
        assert!(out1.join(name).exists(), "missing {name}");
        let a = std::fs::read(out1.join(name)).unwrap();
        let b = std::fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    let summary = std::fs::read_to_string(out1.join("summary.txt")).unwrap();
    assert!(summary.contains("overall: PASS"), "{summary}");
    // the echo reproduces the effective configuration
    let echo = std::fs::read_to_string(out1.join("config_echo.cfg")).unwrap();
    let cfg2 = Config::parse(&echo).unwrap();
    let built = build_all(&cfg2).unwrap();
    assert_eq!(built.problems[0].1.h, 0.25);
    // a completed run refuses overwrite without force
    assert_eq!(run(&out1), 64);
}

#[test]
fn echo_reproduces_the_run_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "torsion.cfg", TINY_TORSION);
    let out1 = dir.path().join("orig");
    let st = bin()
        .args(["solve", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(&out1)
        .args(["--seed", "42", "--quiet"])
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    // feed the echo back in: outputs must match byte for byte
    let echo_path = out1.join("config_echo.cfg");
    let out2 = dir.path().join("from_echo");
    let st = bin()
        .args(["solve", "--config"])
        .arg(&echo_path)
        .args(["--out"])
        .arg(&out2)
        .args(["--seed", "42", "--quiet"])
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    for name in ["solution_001.csv", "energy.csv", "radiation.csv", "summary.txt"] {
        let a = std::fs::read(out1.join(name)).unwrap();
        let b = std::fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs when run from the echo");
    }
}

#[test]
fn failing_diagnostics_exit_2_under_force() {
    // identity graph cannot pair against |xi|^2 with a unit constant:
    // the coercivity check fails, force lets the run proceed, and the
    // summary reports the failure through exit code 2
    let dir = tempfile::tempdir().unwrap();
    let text = TINY_TORSION.replace("coeff = 0.5", "coeff = 1.0");
    let cfg = write_cfg(dir.path(), "badwitness.cfg", &text);
    let out_dir = dir.path().join("forced");
    let out = bin()
        .args(["solve", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(&out_dir)
        .args(["--force", "--quiet"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(out_dir.join("summary.txt")).unwrap();
    assert!(summary.contains("[FAIL] coercivity"), "{summary}");
    assert!(summary.contains("overall: FAIL"), "{summary}");
    // without force the same config is rejected up front
    let out = bin()
        .args(["solve", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(dir.path().join("rejected"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn solver_stagnation_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let text = "\
[nfunction M3]
family = power
dimension = 1
p = 3
coeff = 0.333333333333333333

[graph A3]
kind = power_law
dimension = 1
p = 3
coeff = 0.333333333333333333
c_A = 1
nfunction = M3

[problem hard]
domain = interval -1 1
h = 0.03125
graph = A3
f = 1
eps = 0.001
max_outer = 1
picard_sweeps = 1
";
    let cfg = write_cfg(dir.path(), "hard.cfg", text);
    let out = bin()
        .args(["solve", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(dir.path().join("hard_run"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("eps=0.001"), "failing step identified: {err}");
}

#[test]
fn rearrange_emits_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "torsion.cfg", TINY_TORSION);
    let out_dir = dir.path().join("tables");
    let out = bin()
        .args(["rearrange", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(&out_dir)
        .args(["--quiet"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["distribution.csv", "rearrangement.csv", "symmetral.csv"] {
        assert!(out_dir.join(name).exists(), "missing {name}");
    }
    let table = std::fs::read_to_string(out_dir.join("rearrangement.csv")).unwrap();
    // unit datum: f* = f** = 1 on the whole domain
    let line = table.lines().nth(1).unwrap();
    let cells: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
    assert!((cells[1] - 1.0).abs() < 1e-12 && (cells[2] - 1.0).abs() < 1e-12);
}

#[test]
fn sweep_fans_out_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "torsion.cfg", TINY_TORSION);
    let out_dir = dir.path().join("sweep");
    let common = Common {
        config: cfg,
        out: Some(out_dir.clone()),
        set: vec![],
        seed: Some(42),
        force: false,
        quiet: true,
    };
    assert_eq!(commands::cmd_sweep(&common, "torsion.h=0.25,0.2"), 0);
    assert!(out_dir.join("case_00").join("DONE").exists());
    assert!(out_dir.join("case_01").join("DONE").exists());
}
