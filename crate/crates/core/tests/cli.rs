use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn hadsgd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hadsgd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, file: &str, body: &str) -> String {
    let path = dir.join(file);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn base_config(out: &Path, name: &str, algorithm: &str) -> String {
    format!(
        "name = {name}\nout = {}\nalgorithm = {algorithm}\ntopology = random\nn = 8\nkeep_fraction = 0.5\n\
         objective = random\nd = 4\nnoise_var = 0.01\nsteps = 60\nlr_relative = 0.1\nperiod = 20\n\
         sketch_dim = 8\nreps = 2\nseed = 3\n",
        out.display()
    )
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_writes_one_csv_per_repetition() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("results");
    let cfg = write_config(dir.path(), "a.cfg", &base_config(&out, "quad", "hadsgd"));
    let o = hadsgd(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for rep in 0..2 {
        let csv = std::fs::read_to_string(out.join(format!("quad_rep{rep}.csv"))).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), hadsgd::simulator::MetricsLog::CSV_HEADER);
        assert_eq!(lines.count(), 60);
    }
    let text = stdout(&o);
    assert!(text.contains("rep 0") && text.contains("rep 1") && text.contains("dist_to_opt="), "{text}");
}

#[test]
fn runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.cfg", &base_config(dir.path(), "r", "dsgd"));
    assert_eq!(hadsgd(&["run", &cfg]).status.code(), Some(0));
    let first = std::fs::read_to_string(dir.path().join("r_rep1.csv")).unwrap();
    assert_eq!(hadsgd(&["run", &cfg]).status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(dir.path().join("r_rep1.csv")).unwrap(), first);
}

#[test]
fn missing_learning_rate_is_a_config_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let body = base_config(dir.path(), "x", "dsgd").replace("lr_relative = 0.1\n", "");
    let cfg = write_config(dir.path(), "a.cfg", &body);
    let o = hadsgd(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`lr`"), "{}", stderr(&o));
}

#[test]
fn unknown_key_and_bad_values_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write_config(dir.path(), "u.cfg", &format!("{}colour = red\n", base_config(dir.path(), "x", "dsgd")));
    let o = hadsgd(&["run", &unknown]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`colour`"));

    let bad = base_config(dir.path(), "x", "dsgd").replace("steps = 60", "steps = many");
    let o = hadsgd(&["run", &write_config(dir.path(), "b.cfg", &bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`steps`"));

    assert_eq!(hadsgd(&["run", "/nonexistent/config.cfg"]).status.code(), Some(2));
}

#[test]
fn divergence_exits_with_numeric_failure_naming_the_step() {
    let dir = tempfile::tempdir().unwrap();
    let body = base_config(dir.path(), "boom", "dsgd").replace("lr_relative = 0.1", "lr_relative = 1e6");
    let o = hadsgd(&["run", &write_config(dir.path(), "a.cfg", &body)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("at step"), "{}", stderr(&o));
}

#[test]
fn edge_file_topology_and_decoupled_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let t = hadsgd::topology::build_ring(6).unwrap();
    let edges = dir.path().join("ring.edges");
    std::fs::write(&edges, t.to_edge_list()).unwrap();
    let body = format!(
        "name = ef\nout = {}\nalgorithm = decoupled\ntopology = edge_file\nedge_file = {}\n\
         objective = replicated\nd = 3\nreplicate_period = 3\nsteps = 30\nlr = 0.001\ngrad_mixing = pairs\n",
        dir.path().display(),
        edges.display()
    );
    let o = hadsgd(&["run", &write_config(dir.path(), "a.cfg", &body)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("ef_rep0.csv").exists());
}

#[test]
fn compare_prints_tail_means_with_signs() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_config(dir.path(), "a.cfg", &base_config(dir.path(), "ha", "hadsgd"));
    let b = write_config(dir.path(), "b.cfg", &base_config(dir.path(), "mh", "dsgd"));
    let o = hadsgd(&["compare", &a, &b]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    for metric in ["dist_to_opt", "consensus", "gme"] {
        let line = text.lines().find(|l| l.starts_with(metric)).unwrap_or_else(|| panic!("{text}"));
        let sign = line.split_whitespace().last().unwrap();
        assert!(["+", "-", "0"].contains(&sign), "{line}");
    }
}

#[test]
fn compare_rejects_configs_with_different_shared_keys() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_config(dir.path(), "a.cfg", &base_config(dir.path(), "ha", "hadsgd"));
    let other = base_config(dir.path(), "mh", "dsgd").replace("seed = 3", "seed = 4");
    let b = write_config(dir.path(), "b.cfg", &other);
    let o = hadsgd(&["compare", &a, &b]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`seed`"));
}

#[test]
fn fast_check_passes_in_time_and_detects_injected_fault() {
    let start = Instant::now();
    let o = hadsgd(&["check", "fast"]);
    assert!(start.elapsed() < Duration::from_secs(60), "took {:?}", start.elapsed());
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).lines().all(|l| l.starts_with("[PASS]")));

    let o = hadsgd(&["check", "fast", "--inject-fault"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("update_identity"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_with_config_code() {
    assert_eq!(hadsgd(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(hadsgd(&["--help"]).status.code(), Some(0));
}

#[test]
fn shipped_configs_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "cfg") {
            hadsgd::cli::load_experiment(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 4);
}
