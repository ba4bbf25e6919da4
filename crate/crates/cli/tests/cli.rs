use std::path::Path;
use std::process::{Command, Output};

fn landing(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_landing"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const PCA: &str = r#"
problem = "pca"
algorithm = "landing_gd"
max_iter = 50
log_every = 10
init_distance = 0.1
[problem_params]
n = 8
p = 2
samples = 40
seed = 3
"#;

#[test]
fn run_writes_trace_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("pca.toml"), PCA).unwrap();
    let out = landing(&["run", "pca.toml"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let csv = std::fs::read_to_string(dir.path().join("pca.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("iter,epoch,wall_time_s,f_value,grad_norm_sq,distance,n_of_x,merit,step_used,clamped")
    );
    let iters: Vec<usize> = lines.map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(iters, [0, 10, 20, 30, 40, 50]);

    let summary = json(&dir.path().join("pca.json"));
    assert_eq!(summary["status"], "ok");
    assert_eq!(summary["iterations"], 50);
    assert_eq!(summary["resolved"]["constants_source"], "analytic");
}

#[test]
fn output_flag_overrides_config_path() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("pca.toml"), PCA).unwrap();
    let out = landing(&["run", "pca.toml", "-o", "elsewhere.csv"], dir.path());
    assert!(out.status.success());
    assert!(dir.path().join("elsewhere.csv").exists());
    assert!(dir.path().join("elsewhere.json").exists());
    assert!(!dir.path().join("pca.csv").exists());
}

#[test]
fn invalid_config_names_the_field_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), PCA.replace("max_iter = 50", "max_iter = 50\nepsilon = 0.8")).unwrap();
    let out = landing(&["run", "bad.toml"], dir.path());
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("epsilon"), "{err}");
}

#[test]
fn grid_reports_failures_without_stopping() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.toml"), PCA).unwrap();
    std::fs::write(dir.path().join("b.toml"), PCA.replace("seed = 3", "seed = 4")).unwrap();
    std::fs::write(dir.path().join("c.toml"), "problem = \"nope\"\n").unwrap();
    let out = landing(&["grid", ".", "-j", "2"], dir.path());
    assert!(!out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("3 runs, 1 failed"), "{stdout}");
    assert!(dir.path().join("a.csv").exists() && dir.path().join("b.csv").exists());

    let index = json(&dir.path().join("index.json"));
    assert_eq!(index["failed"], 1);
    assert_eq!(index["runs"].as_array().unwrap().len(), 3);
}

#[test]
fn verify_passes_and_negative_control_fails() {
    let dir = tempfile::tempdir().unwrap();
    let ok = landing(&["verify", "oracle", "--seed", "3", "--json", "report.json"], dir.path());
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stdout));
    let report = json(&dir.path().join("report.json"));
    assert_eq!(report["suite"], "oracle");
    assert_eq!(report["passed"], true);

    let bad = landing(&["verify", "geometry", "--eta-scale", "1.5"], dir.path());
    assert!(!bad.status.success());
    let stdout = String::from_utf8_lossy(&bad.stdout);
    assert!(stdout.contains("FAIL safeguard_containment"), "{stdout}");
    assert!(stdout.contains("suite geometry: FAIL"), "{stdout}");
}

#[test]
fn gen_data_feeds_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = landing(&["gen-data", "ica:n=4,samples=200,seed=2", "-o", "ica.bin"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let config = r#"
problem = "ica"
algorithm = "landing_saga"
max_epochs = 2
[schedule]
eta0 = 0.01
[problem_params]
n = 4
data_path = "ica.bin"
"#;
    std::fs::write(dir.path().join("ica.toml"), config).unwrap();
    let out = landing(&["run", "ica.toml"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = json(&dir.path().join("ica.json"));
    assert!(summary["amari_distance"].as_f64().unwrap() >= 0.0);
    // epoch budget includes the initial pass over the 200 samples
    assert_eq!(summary["iterations"], 200);
}
