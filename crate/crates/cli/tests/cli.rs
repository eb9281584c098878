//! End-to-end runs of the `genie` binary on a tiny configuration.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;

const TINY: &str = r#"
[dataset]
n_classes = 4
class_separation = 6.0
noise_sigma = 0.5
context_strength = 2.0

[train]
steps = 800

[oracle]
steps = 400

[benchmark]
n_way = 3
episodes = 10

[generate]
per_class_count = 5

[longtail]
profile = [200, 60, 15, 5]

[sweep]
rs = [0.5, 0.6, 0.7, 0.8, 0.9]

[boundary]
per_method = 60
"#;

fn genie(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_genie"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// A trained tiny workspace shared by the tests in this file.
fn workspace() -> &'static (tempfile::TempDir, PathBuf) {
    static WS: OnceLock<(tempfile::TempDir, PathBuf)> = OnceLock::new();
    WS.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("tiny.toml");
        std::fs::write(&config, TINY).unwrap();
        let out = dir.path().join("out");
        ok(&genie(&[
            "train-diffusion",
            "--config",
            s(&config),
            "--out",
            s(&out),
        ]));
        (dir, config)
    })
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn out_dir() -> PathBuf {
    workspace().0.path().join("out")
}

fn base_args<'a>(cmd: &'a str, config: &'a Path, out: &'a Path) -> Vec<&'a str> {
    vec![cmd, "--config", s(config), "--out", s(out)]
}

/// TOML has no null; an absent key means the default.
fn drop_nulls(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.retain(|_, x| !x.is_null());
            map.values_mut().for_each(drop_nulls);
        }
        Value::Array(items) => items.iter_mut().for_each(drop_nulls),
        _ => {}
    }
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn training_writes_checkpoint_metadata_and_a_falling_loss_curve() {
    let out = out_dir();
    for f in [
        "denoiser.ckpt",
        "denoiser.ckpt.meta.json",
        "loss.csv",
        "dataset.jsonl",
        "config.toml",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let meta = read_json(&out.join("denoiser.ckpt.meta.json"));
    assert_eq!(meta["code_version"], genie_core::CODE_VERSION);
    assert_eq!(meta["seed"], 0);
    assert_eq!(meta["config"]["train"]["steps"], 800);
    let csv = std::fs::read_to_string(out.join("loss.csv")).unwrap();
    let smoothed: Vec<f64> = csv
        .lines()
        .skip(2)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(smoothed.len(), 800);
    let first = smoothed[39];
    assert!(
        *smoothed.last().unwrap() < 0.5 * first,
        "{first} -> {}",
        smoothed.last().unwrap()
    );
}

#[test]
fn generated_samples_rescore_to_the_in_process_consistency() {
    let (_, config) = workspace();
    let out = out_dir();
    let gen_out = workspace().0.path().join("gen");
    std::fs::create_dir_all(&gen_out).unwrap();
    std::fs::copy(out.join("denoiser.ckpt"), gen_out.join("denoiser.ckpt")).unwrap();
    std::fs::copy(
        out.join("denoiser.ckpt.meta.json"),
        gen_out.join("denoiser.ckpt.meta.json"),
    )
    .unwrap();
    let mut args = base_args("generate", config, &gen_out);
    args.extend(["--classes", "1,3", "--count", "7", "--r", "0.8"]);
    ok(&genie(&args));
    let text = std::fs::read_to_string(gen_out.join("samples.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 14);
    let first: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["provenance"], "genie");
    assert_eq!(first["r_used"], 0.8);
    assert!(first["source_class"].as_u64().unwrap() != first["y"].as_u64().unwrap());

    ok(&genie(&base_args("consistency", config, &gen_out)));
    let in_process =
        read_json(&gen_out.join("samples.meta.json"))["result"]["label_consistency"].clone();
    let rescored =
        read_json(&gen_out.join("consistency.json"))["result"]["label_consistency"].clone();
    assert_eq!(in_process, rescored);
}

#[test]
fn genie_with_matching_source_and_target_is_rejected() {
    let (_, config) = workspace();
    let out = out_dir();
    let mut args = base_args("generate", config, &out);
    args.extend(["--classes", "2", "--source-class", "2"]);
    let res = genie(&args);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("source class"));
}

#[test]
fn configuration_errors_exit_with_code_two() {
    let (dir, config) = workspace();
    let missing = dir.path().join("nowhere");
    assert_eq!(
        genie(&base_args("benchmark", config, &missing))
            .status
            .code(),
        Some(2)
    );

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[dataset]\nsigma = 1.0\n").unwrap();
    assert_eq!(
        genie(&base_args("benchmark", &bad, &missing)).status.code(),
        Some(2)
    );

    let mut args = base_args("benchmark", config, Path::new(""));
    let out = out_dir();
    args[4] = s(&out);
    args.extend(["--seed", "3"]);
    let res = genie(&args);
    assert_eq!(
        res.status.code(),
        Some(2),
        "checkpoint trained under another seed"
    );
}

#[test]
fn benchmark_prints_summaries_and_paired_uplift() {
    let (dir, config) = workspace();
    let out = dir.path().join("bench");
    std::fs::create_dir_all(&out).unwrap();
    let mut args = base_args("benchmark", config, &out);
    let ckpt = out_dir().join("denoiser.ckpt");
    args.extend(["--checkpoint", s(&ckpt)]);
    let stdout = ok(&genie(&args));
    assert!(
        stdout
            .lines()
            .any(|l| l.starts_with("none: ") && l.contains(" ± ")),
        "{stdout}"
    );
    assert!(
        stdout
            .lines()
            .any(|l| l.starts_with("genie_r0.8 vs none: ")),
        "{stdout}"
    );
    let report = read_json(&out.join("benchmark.json"));
    assert_eq!(report["result"]["reports"].as_array().unwrap().len(), 3);
    assert!(report["result"]["reports"][0].get("buckets").is_none());
    let csv = std::fs::read_to_string(out.join("benchmark.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + 3 * 10);
    assert!(out.join("benchmark.timing.json").exists());
}

#[test]
fn sweep_longtail_and_boundary_emit_their_reports() {
    let (dir, config) = workspace();
    let out = dir.path().join("reports");
    std::fs::create_dir_all(&out).unwrap();
    let ckpt = out_dir().join("denoiser.ckpt");
    for cmd in ["sweep", "longtail", "boundary"] {
        let mut args = base_args(cmd, config, &out);
        args.extend(["--checkpoint", s(&ckpt)]);
        ok(&genie(&args));
    }
    let sweep = read_json(&out.join("sweep.json"));
    assert_eq!(sweep["result"]["rows"].as_array().unwrap().len(), 5);
    assert_eq!(
        std::fs::read_to_string(out.join("sweep.csv"))
            .unwrap()
            .lines()
            .count(),
        2 + 5
    );

    let lt = read_json(&out.join("longtail.json"));
    assert_eq!(lt["result"]["reports"].as_array().unwrap().len(), 2);
    assert!(lt["result"]["reports"][0]["buckets"]["overall"].is_number());

    let svg = std::fs::read_to_string(out.join("boundary.svg")).unwrap();
    for method in ["real", "genie", "condsample"] {
        assert_eq!(svg.matches(&format!("data-method=\"{method}\"")).count(), 1);
    }
    assert!(svg.contains("<metadata>"));
    let boundary = read_json(&out.join("boundary.json"));
    assert_eq!(boundary["result"]["stats"].as_array().unwrap().len(), 3);
}

#[test]
fn artifacts_reproduce_from_their_embedded_config() {
    let (dir, config) = workspace();
    let a = dir.path().join("repro_a");
    std::fs::create_dir_all(&a).unwrap();
    let ckpt = out_dir().join("denoiser.ckpt");
    let mut args = base_args("boundary", config, &a);
    args.extend(["--checkpoint", s(&ckpt)]);
    ok(&genie(&args));

    // Rebuild a config file from the echo embedded in the artifact.
    let mut echo = read_json(&a.join("boundary.json"))["config"].clone();
    drop_nulls(&mut echo);
    let toml_text = toml::to_string(&echo).unwrap();
    let replay = dir.path().join("replay.toml");
    std::fs::write(&replay, toml_text).unwrap();
    let b = dir.path().join("repro_b");
    std::fs::create_dir_all(&b).unwrap();
    let mut args = base_args("boundary", &replay, &b);
    args.extend(["--checkpoint", s(&ckpt)]);
    ok(&genie(&args));
    for f in ["boundary.json", "boundary.csv", "boundary.svg"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}
