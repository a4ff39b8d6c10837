use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lipsquash"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("lipsquash-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn run(cmd: &mut Command) -> String {
    let out = cmd.output().expect("binary runs");
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn squash_line_writes_a_verified_report() {
    let measure = scratch("line.csv");
    let rows: String = (0..200).map(|i| format!("{},{}\n", -1.0 + i as f64 / 100.0, 1.0 / 200.0)).collect();
    std::fs::write(&measure, rows).unwrap();
    let out = scratch("line.json");
    run(bin().args(["squash-line", "--eta", "0.1", "--r", "0.05", "--eps", "0.01"]).arg("--measure").arg(&measure).arg("--out").arg(&out));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["N"], 10);
    assert!(report["E_mass"].as_f64().unwrap() >= 0.9);
}

#[test]
fn squash_plane_csv_has_one_row_per_eps() {
    let csv = scratch("plane.csv");
    let svg = scratch("plane.svg");
    run(bin()
        .args(["squash-plane", "--fixture", "four_corner", "--gen", "4", "--eps", "0.5,0.25,0.125"])
        .arg("--csv")
        .arg(&csv)
        .arg("--svg")
        .arg(&svg));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("eps,image_count,sup_dev,h1_content_upper"));
    assert_eq!(lines.count(), 3);
    assert!(std::fs::read_to_string(&svg).unwrap().contains("<svg"));
}

#[test]
fn stability_sweep_prints_csv() {
    let text = run(bin().args(["stability", "--curve", "circle", "--perturb", "radial", "--delta", "0.1", "--sweep", "8"]));
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "param,sup_dev,deviation_fraction,bound_holds");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 8);
    assert!(rows.last().unwrap().ends_with("true"));
}

#[test]
fn sawtooth_demo_never_settles() {
    let text = run(bin().args(["stability", "--demo", "sawtooth", "--teeth", "4,16,64"]));
    for row in text.lines().skip(1) {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[2], "1");
    }
}

#[test]
fn compose_reports_contracts() {
    let text = run(bin().args(["compose", "--fixture", "four_corner", "--gen", "4", "--eta", "0.1", "--eps", "0.05", "--mode", "product", "--grid", "20"]));
    assert!(text.contains("lipschitz_ok"));
    assert!(!text.contains("false"), "{text}");
}

#[test]
fn bad_parameters_exit_nonzero() {
    let out = bin()
        .args(["compose", "--fixture", "four_corner", "--gen", "3", "--eta", "1.5"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());
}
