use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cxlsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cxlsim")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL: &str = r#"
profile = "cxl-asic-1500"
seed = 5

[workload]
latency_trials = 20
bandwidth_trials = 2
dma_sizes = [64, 4096]
dma_stream = 16
rao_ops = 2000
patterns = ["CENTRAL", "RAND"]
rpc_messages = 20
benches = [1, 5]
"#;

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("sim.toml");
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn list_profiles_names_every_profile() {
    let o = cxlsim(&["list-profiles"]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    for name in ["cxl-fpga-400", "pcie-fpga-400", "cxl-asic-1500", "pcie-asic-1500"] {
        assert!(out.lines().any(|l| l.starts_with(name)), "{out}");
    }
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&cxlsim(&[])), 1);
    assert_eq!(code(&cxlsim(&["frobnicate"])), 1);
    assert_eq!(code(&cxlsim(&["calibrate-check", "--profile", "nope"])), 1);
    assert_eq!(code(&cxlsim(&["run", "rao", "--config", "/no/such/file.toml"])), 1);
    assert_eq!(code(&cxlsim(&["--help"])), 0);
}

#[test]
fn misspelled_key_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "profile = \"cxl-fpga-400\"\n[latency]\nt_darm = 100\n");
    let o = cxlsim(&["run", "tier-latency", "--config", &cfg]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("t_darm"));
}

#[test]
fn calibrate_check_passes_then_fails_when_detuned() {
    let o = cxlsim(&["calibrate-check", "--profile", "cxl-fpga-400"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("MAPE"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "profile = \"cxl-fpga-400\"\n[latency]\nt_dram = 400\n");
    let o = cxlsim(&["calibrate-check", "--profile", "cxl-fpga-400", "--config", &cfg]);
    assert_eq!(code(&o), 2, "{}", stdout(&o));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn event_ceiling_is_a_fault() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{SMALL}\n[engine]\nmax_events = 10\n"));
    let out = dir.path().join("out");
    let o = cxlsim(&["run", "rao", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn run_writes_reports_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let mut runs = Vec::new();
    for _ in 0..2 {
        let o = cxlsim(&["run", "all", "--config", &cfg, "--out", out.to_str().unwrap(), "--trace-nic"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let mut files = std::collections::BTreeMap::new();
        for suite in ["numa-latency", "tier-latency", "tier-bandwidth", "dma-sweep", "rao", "rpc"] {
            for suffix in ["csv", "csv.raw", "csv.config.toml", "nic.tsv"] {
                let name = format!("{suite}.{suffix}");
                let bytes = fs::read(out.join(&name)).unwrap_or_else(|e| panic!("{name}: {e}"));
                files.insert(name, bytes);
            }
        }
        runs.push(files);
    }
    for (name, bytes) in &runs[0] {
        assert!(&runs[1][name] == bytes, "{name} differs between runs");
    }
    let rao = fs::read_to_string(out.join("rao.csv")).unwrap();
    assert!(rao.starts_with("experiment,metric,unit,n,median,p25,p75,mean,stddev\n"));
    assert!(rao.contains("rao,CENTRAL.speedup,ratio,1,"));
}

#[test]
fn json_format_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("j");
    let o = cxlsim(&[
        "run",
        "dma-sweep",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--format",
        "json",
        "--seed",
        "9",
    ]);
    assert_eq!(code(&o), 0);
    let json = fs::read_to_string(out.join("dma-sweep.json")).unwrap();
    assert!(json.contains("\"latency.4KB\""));
    let echoed = fs::read_to_string(out.join("dma-sweep.json.config.toml")).unwrap();
    assert!(echoed.contains("seed = 9"), "{echoed}");
}

#[test]
fn tier_suites_refuse_a_pcie_device() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "profile = \"pcie-fpga-400\"\n");
    let o = cxlsim(&["run", "tier-latency", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}
