use memprobe::experiment::{run_e2e, run_recover, ExperimentConfig};

fn small_config(out: &std::path::Path) -> ExperimentConfig {
    let text = format!(
        "output = {}\n\
         data.count = 4\n\
         data.height = 6\n\
         data.width = 6\n\
         model.latent = 16\n\
         model.depth = 4\n\
         train.checkpoints = 1e-3,1e-4\n\
         recover.max_outer = 20\n\
         proxcheck.probes = 2\n",
        out.display()
    );
    ExperimentConfig::parse(&text).unwrap()
}

#[test]
fn e2e_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    run_e2e(&cfg).unwrap();
    let text = std::fs::read_to_string(dir.path().join("summary.json")).unwrap();
    let summary: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(summary["n"], 4);
    for mode in ["unknown-h", "known-h", "baseline"] {
        assert_eq!(summary["modes"][mode]["n"], 4, "{mode}");
    }
    for f in [
        "model.bin",
        "degraded.mprb",
        "proxcheck.json",
        "config.resolved",
    ] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let resolved = ExperimentConfig::from_file(&dir.path().join("config.resolved")).unwrap();
    assert_eq!(resolved.to_text(), cfg.to_text());
}

#[test]
fn recover_without_model_fails() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_recover(&small_config(dir.path())).is_err());
}
