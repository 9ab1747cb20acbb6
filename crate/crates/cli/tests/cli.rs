use std::path::Path;
use std::process::{Command, Output};

fn movefem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_movefem")).args(args).output().expect("binary runs")
}

fn out_dir(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

fn field(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(' ')))
        .unwrap_or_else(|| panic!("no '{key}' in\n{text}"))
        .trim()
        .parse()
        .unwrap()
}

#[test]
fn generated_mesh_is_valid() {
    let dir = tempfile::tempdir().unwrap();
    let o = movefem(&["mesh", "--h0", "0.25", "--out-dir", &out_dir(dir.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = std::fs::read_to_string(dir.path().join("study_level0_mesh_report.txt")).unwrap();
    assert_eq!(field(&report, "violations"), 0.0);
    assert!(dir.path().join("study_level0_mesh.txt").exists());

    // The native dump validates as well, also after moving it.
    let dump = dir.path().join("study_level0_mesh.txt");
    let o = movefem(&["validate", dump.to_str().unwrap(), "--time", "1.0"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn vertex_count_grows_like_inverse_h_squared() {
    let dir = tempfile::tempdir().unwrap();
    let o = movefem(&["mesh", "--levels", "2", "--level", "0", "--order", "1", "--out-dir", &out_dir(dir.path())]);
    assert!(o.status.success());
    let o2 = movefem(&["mesh", "--levels", "2", "--level", "1", "--order", "1", "--out-dir", &out_dir(dir.path())]);
    assert!(o2.status.success());
    let (a, b) = (String::from_utf8(o.stdout).unwrap(), String::from_utf8(o2.stdout).unwrap());
    let ratio = field(&b, "vertices") / field(&a, "vertices");
    let hr = field(&a, "h") / field(&b, "h");
    assert!((ratio / (hr * hr) - 1.0).abs() < 0.35, "vertex ratio {ratio}, h ratio {hr}");
}

#[test]
fn missing_physical_tag_is_a_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.msh");
    let text = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n4\n1 0 0 0\n2 0.5 0 0\n3 0 0.5 0\n4 0.5 0.5 0\n$EndNodes\n\
                $Elements\n2\n1 2 0 1 2 3\n2 2 2 2 2 2 4 3\n$EndElements\n";
    std::fs::write(&path, text).unwrap();
    let o = movefem(&["validate", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("physical tag"), "{err}");
}

#[test]
fn bad_flag_value_is_rejected() {
    let o = movefem(&["run", "--flow-mode", "sideways"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("flow-mode"));
}

#[test]
fn zero_data_gives_zero_solution() {
    let dir = tempfile::tempdir().unwrap();
    let o = movefem(&["run", "--zero-data", "--order", "2", "--out-dir", &out_dir(dir.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sol = std::fs::read_to_string(dir.path().join("study_level0_solution.txt")).unwrap();
    let values: Vec<f64> = sol.lines().filter(|l| !l.starts_with('#')).map(|l| l.parse().unwrap()).collect();
    assert!(!values.is_empty());
    assert!(values.iter().all(|&v| v == 0.0));
}

#[test]
fn coarse_run_reports_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = movefem(&["run", "--order", "2", "--out-dir", &out_dir(dir.path())]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let l2 = field(&text, "l2_error");
    // Coarsest reference row for quadratics at h = 0.44 is 5.19e-2.
    assert!(l2 > 5.19e-3 && l2 < 5.19e-1, "{l2}");
}

#[test]
fn reproducible_study_csv_is_bitwise_identical() {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let o = movefem(&["study", "--order", "1", "--levels", "3", "--parallel-levels", "--out-dir", &out_dir(dir.path())]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        for f in ["study.csv", "study_h1_full.csv", "study_l2.dat", "study_h1.dat", "study_h1_full.dat"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        assert!(!dir.path().join("study.partial.csv").exists());
        std::fs::read(dir.path().join("study.csv")).unwrap()
    };
    let a = run();
    assert_eq!(a, run());
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("h,tau,l2_error,h1_error,eoc_l2,eoc_h1\n"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn study_needs_two_levels() {
    let o = movefem(&["study", "--levels", "1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sample_config_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/quadratic.toml");
    let o = movefem(&["run", "--config", cfg, "--out-dir", &out_dir(dir.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("quadratic_level0_run.txt").exists());
}
