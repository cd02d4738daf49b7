mod common;

use std::path::{Path, PathBuf};
use std::process::Output;

use common::{memfault, small_config};

use memfault_snn::config::ExperimentConfig;
use memfault_snn::pipeline;
use memfault_snn::snn::SnnModel;

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    o
}

fn read(p: PathBuf) -> String {
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn trained_model_reloads_bit_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = small_config(tmp.path());
    ok(memfault(&cfg_path, tmp.path(), &["train"]));
    let cfg = ExperimentConfig::load(&cfg_path).unwrap();
    let train = pipeline::load_train(&cfg.data).unwrap();
    let direct = pipeline::train_baseline(&cfg, &train).unwrap();
    assert_eq!(SnnModel::load(&tmp.path().join("model.snn")).unwrap(), direct.quantized());
}

#[test]
fn eval_from_files_matches_first_fault_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(memfault(&cfg, &a, &["train"]));
    ok(memfault(&cfg, &a, &["genfaults"]));
    ok(memfault(&cfg, &a, &["map"]));
    let model = a.join("model.snn");
    let model = model.to_str().unwrap();
    ok(memfault(&cfg, &b, &["eval", "--model", model, "--from-files", a.to_str().unwrap()]));
    ok(memfault(&cfg, &a, &["eval"]));
    let acc = |s: String, run: &str| -> String {
        s.lines()
            .skip(1)
            .map(|l| l.split(',').collect::<Vec<_>>())
            .find(|f| f[3] == run)
            .map(|f| f[4].to_string())
            .unwrap()
    };
    assert_eq!(acc(read(b.join("eval.csv")), "files"), acc(read(a.join("eval.csv")), "0"));
}

#[test]
fn zero_rate_fault_files_have_no_entries() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    ok(memfault(&cfg, tmp.path(), &["--set", "dram.fault_rate=0", "--set", "sram.fault_rate=0", "genfaults"]));
    for name in ["faults.dram.txt", "faults.sram.txt"] {
        let text = read(tmp.path().join(name));
        let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()).collect();
        assert!(body.len() <= 1, "{name}: {body:?}");
    }
}

#[test]
fn missing_dataset_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let o = memfault(&cfg, tmp.path(), &["--set", "data.train_images=/nonexistent/x", "train"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("data.train_images"));
}

#[test]
fn bad_override_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    for set in ["dram.fault_rate=2", "no.such_key=1", "sweep.dram_rates=[0.1, 0.01]"] {
        let o = memfault(&cfg, tmp.path(), &["--set", set, "genfaults"]);
        assert_eq!(o.status.code(), Some(2), "{set}");
    }
}

#[test]
fn over_budget_map_exits_with_placement_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    ok(memfault(&cfg, tmp.path(), &["train"]));
    ok(memfault(&cfg, tmp.path(), &["--set", "dram.fault_rate=0.5", "genfaults"]));
    let o = memfault(&cfg, tmp.path(), &["map"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unplaceable words"));
}

fn full_run(cfg: &Path, out: &Path) {
    ok(memfault(cfg, out, &["train"]));
    ok(memfault(cfg, out, &["genfaults"]));
    ok(memfault(cfg, out, &["map"]));
    ok(memfault(cfg, out, &["eval"]));
    ok(memfault(cfg, out, &["sweep"]));
    ok(memfault(cfg, out, &["fatm"]));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    full_run(&cfg, &a);
    full_run(&cfg, &b);
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 11, "{names:?}");
    for n in names {
        assert_eq!(std::fs::read(a.join(&n)).unwrap(), std::fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
}
