use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use genie_core::augment::{
    condsample_batch, genie_batch, img2img_batch, label_consistency, Method,
};
use genie_core::data::io::{load_samples, save_dataset, save_samples, SampleRecord};
use genie_core::data::{build_longtail, build_synthetic, Bucket, Dataset, SyntheticTaskConfig};
use genie_core::diffusion::{checkpoint, train_denoiser, Denoiser};
use genie_core::eval::boundary::{boundary_analysis, boundary_groups, Projector};
use genie_core::eval::svg::render_boundary_svg;
use genie_core::eval::{
    check_fairness, noise_sweep, run_benchmark, run_longtail, train_oracle_for, EvalResources,
    OracleModel,
};
use genie_core::{LabeledSample, RngStream, CODE_VERSION};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ConfigError, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] genie_core::Error),
    #[error("{0}")]
    Missing(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use genie_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Missing(_) => 2,
            CliError::Core(
                E::InvalidArgument(_) | E::DimensionMismatch { .. } | E::MissingClass(_),
            ) => 2,
            CliError::Core(E::InsufficientSamples(_) | E::Empty(_) | E::Format(_)) => 2,
            CliError::Core(E::NonFinite(_) | E::Divergence { .. }) => 3,
            CliError::Core(E::OracleBelowThreshold { .. } | E::Invariant(_)) => 4,
            CliError::Core(E::Io(_) | E::Json(_)) | CliError::Io { .. } => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Writes `{code_version, seed, config, result}` as pretty JSON.
fn write_artifact(path: &Path, cfg: &RunConfig, result: impl Serialize) -> Result<()> {
    let doc = json!({
        "code_version": CODE_VERSION,
        "seed": cfg.seed,
        "config": cfg.echo(),
        "result": serde_json::to_value(result).map_err(genie_core::Error::from)?,
    });
    let mut text = serde_json::to_string_pretty(&doc).map_err(genie_core::Error::from)?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_err(path))
}

/// Wall-clock times live apart from the reports so those stay byte-reproducible.
fn write_timing(cfg: &RunConfig, command: &str, timings: Value) -> Result<()> {
    let path = cfg.out.join(format!("{command}.timing.json"));
    write_text(
        &path,
        &format!(
            "{}\n",
            serde_json::to_string_pretty(&timings).map_err(genie_core::Error::from)?
        ),
    )
}

fn csv_header(cfg: &RunConfig) -> String {
    format!("# {CODE_VERSION}, seed {}\n", cfg.seed)
}

fn dataset(cfg: &RunConfig) -> Result<Dataset> {
    Ok(build_synthetic(&cfg.dataset)?)
}

fn oracle(cfg: &RunConfig) -> Result<OracleModel> {
    Ok(train_oracle_for(&cfg.dataset, &cfg.oracle)?)
}

/// Loads the checkpoint and checks that its sidecar was written for the same
/// dataset and schedule as the current config.
fn load_denoiser(cfg: &RunConfig) -> Result<Denoiser> {
    let path = cfg.checkpoint_path();
    if !path.exists() {
        return Err(CliError::Missing(format!(
            "checkpoint {} not found; run train-diffusion first",
            path.display()
        )));
    }
    let model = checkpoint::load(&path)?;
    let meta_path = checkpoint::metadata_path(&path);
    if let Ok(text) = fs::read_to_string(&meta_path) {
        let meta: Value = serde_json::from_str(&text).map_err(genie_core::Error::from)?;
        let trained_on: SyntheticTaskConfig =
            serde_json::from_value(meta["config"]["dataset"].clone())
                .map_err(|e| ConfigError::Invalid(format!("{}: {e}", meta_path.display())))?;
        if trained_on != cfg.dataset {
            return Err(ConfigError::Invalid(format!(
                "checkpoint {} was trained on a different dataset config (master seed {})",
                path.display(),
                meta["seed"]
            ))
            .into());
        }
    }
    if model.schedule().config() != cfg.schedule {
        return Err(ConfigError::Invalid(
            "checkpoint schedule differs from the config schedule".into(),
        )
        .into());
    }
    Ok(model)
}

pub fn train_diffusion(cfg: &RunConfig) -> Result<()> {
    let started = Instant::now();
    let ds = dataset(cfg)?;
    let schedule = cfg.schedule.build()?;
    let (model, report) = train_denoiser(
        &ds.samples,
        ds.n_classes(),
        &schedule,
        &cfg.arch,
        &cfg.train,
    )?;
    let path = cfg.checkpoint_path();
    checkpoint::save(&model, &path)?;

    let window = (report.losses.len() / 20).clamp(1, 200);
    let smoothed = report.smoothed(window);
    let mut csv = csv_header(cfg);
    csv.push_str("step,loss,smoothed\n");
    for (i, (l, s)) in report.losses.iter().zip(&smoothed).enumerate() {
        let _ = writeln!(csv, "{},{l},{s}", i + 1);
    }
    write_text(&cfg.out.join("loss.csv"), &csv)?;
    let first = smoothed
        .get(window - 1)
        .or(smoothed.last())
        .copied()
        .unwrap_or(f64::NAN);
    let last = smoothed.last().copied().unwrap_or(f64::NAN);
    write_artifact(
        &checkpoint::metadata_path(&path),
        cfg,
        json!({
            "steps": report.losses.len(),
            "smoothing_window": window,
            "first_smoothed_loss": first,
            "final_smoothed_loss": last,
        }),
    )?;
    save_dataset(&cfg.out.join("dataset.jsonl"), &ds)?;
    write_timing(
        cfg,
        "train-diffusion",
        json!({ "seconds": started.elapsed().as_secs_f64() }),
    )?;
    println!(
        "trained {} steps: smoothed loss {first:.4} -> {last:.4}; checkpoint {}",
        report.losses.len(),
        path.display()
    );
    Ok(())
}

const CHUNK: usize = 50;

/// Generation plan for `generate`: one job per (target class, index).
struct GenJob<'a> {
    target: usize,
    source: Option<&'a LabeledSample>,
}

pub fn generate(cfg: &RunConfig) -> Result<PathBuf> {
    let started = Instant::now();
    let g = &cfg.generate;
    if !g.method.needs_denoiser() {
        return Err(ConfigError::Invalid(format!(
            "generate supports genie, img2img and condsample, not {:?}",
            g.method
        ))
        .into());
    }
    let ds = dataset(cfg)?;
    let n_classes = ds.n_classes();
    let targets: Vec<usize> = if g.classes.is_empty() {
        (0..n_classes).collect()
    } else {
        g.classes.clone()
    };
    if let (Method::Genie, Some(s)) = (g.method, g.source_class) {
        if targets.contains(&s) {
            return Err(ConfigError::Invalid(format!(
                "genie target equals the source class {s}; use img2img for same-class edits"
            ))
            .into());
        }
    }
    if g.method == Method::Genie && n_classes < 2 {
        return Err(ConfigError::Invalid("genie needs at least two classes".into()).into());
    }
    let model = load_denoiser(cfg)?;
    let by_class = ds.class_indices();
    let root = RngStream::new(cfg.seed, 0).substream("generate", 0);
    let mut plan = root.substream("plan", 0);
    let pick = |class: usize, plan: &mut RngStream| {
        let pool = &by_class[class];
        &ds.samples[pool[plan.below(pool.len())]]
    };
    let mut jobs = Vec::with_capacity(targets.len() * g.per_class_count);
    for &target in &targets {
        for _ in 0..g.per_class_count {
            let source = match g.method {
                Method::Genie => {
                    let class = match g.source_class {
                        Some(s) => s,
                        None => {
                            let c = plan.below(n_classes - 1);
                            if c >= target {
                                c + 1
                            } else {
                                c
                            }
                        }
                    };
                    Some(pick(class, &mut plan))
                }
                Method::Img2img => Some(pick(target, &mut plan)),
                _ => None,
            };
            jobs.push(GenJob { target, source });
        }
    }
    let schedule = model.schedule();
    let chunks: Vec<&[GenJob]> = jobs.chunks(CHUNK).collect();
    let samples: Vec<LabeledSample> = chunks
        .par_iter()
        .enumerate()
        .map(|(c, chunk)| -> genie_core::Result<Vec<LabeledSample>> {
            let mut rngs: Vec<RngStream> = (0..chunk.len())
                .map(|i| root.substream("sample", (c * CHUNK + i) as u64))
                .collect();
            let targets: Vec<usize> = chunk.iter().map(|j| j.target).collect();
            let sources: Vec<&LabeledSample> = chunk.iter().filter_map(|j| j.source).collect();
            match g.method {
                Method::Genie => {
                    genie_batch(&sources, &targets, g.r, &model, schedule, &mut rngs, g.w)
                }
                Method::Img2img => img2img_batch(&sources, g.r, &model, schedule, &mut rngs, g.w),
                _ => condsample_batch(&targets, &model, schedule, &mut rngs, g.w),
            }
        })
        .collect::<genie_core::Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let oracle = oracle(cfg)?;
    let consistency = label_consistency(&samples, &oracle)?;
    let records: Vec<SampleRecord> = samples
        .into_iter()
        .map(|sample| SampleRecord {
            sample,
            seed: cfg.seed,
        })
        .collect();
    let path = cfg.out.join("samples.jsonl");
    save_samples(&path, &records)?;
    write_artifact(
        &cfg.out.join("samples.meta.json"),
        cfg,
        json!({
            "count": records.len(),
            "label_consistency": consistency,
            "oracle_heldout_accuracy": oracle.heldout_accuracy,
        }),
    )?;
    write_timing(
        cfg,
        "generate",
        json!({ "seconds": started.elapsed().as_secs_f64() }),
    )?;
    println!(
        "generated {} {:?} samples (r={}, w={}); oracle label consistency {consistency:.4}",
        records.len(),
        g.method,
        g.r,
        g.w
    );
    Ok(path)
}

pub fn consistency(cfg: &RunConfig, samples: &Path) -> Result<f64> {
    if !samples.exists() {
        return Err(CliError::Missing(format!(
            "sample file {} not found",
            samples.display()
        )));
    }
    let records = load_samples(samples)?;
    let samples_x: Vec<LabeledSample> = records.into_iter().map(|r| r.sample).collect();
    if let Some(s) = samples_x
        .iter()
        .find(|s| s.x.len() != cfg.dataset.data_dim())
    {
        return Err(genie_core::Error::DimensionMismatch {
            expected: cfg.dataset.data_dim(),
            got: s.x.len(),
        }
        .into());
    }
    let oracle = oracle(cfg)?;
    let fraction = label_consistency(&samples_x, &oracle)?;
    let mut per_class = vec![(0usize, 0usize); cfg.dataset.n_classes];
    for (s, p) in samples_x.iter().zip(
        samples_x
            .iter()
            .map(|s| genie_core::eval::Classifier::predict(&oracle, &s.x)),
    ) {
        if s.y < per_class.len() {
            per_class[s.y].1 += 1;
            if p == s.y {
                per_class[s.y].0 += 1;
            }
        }
    }
    write_artifact(
        &cfg.out.join("consistency.json"),
        cfg,
        json!({
            "samples": samples.display().to_string(),
            "count": samples_x.len(),
            "label_consistency": fraction,
            "per_class": per_class
                .iter()
                .map(|&(agree, total)| json!({ "consistent": agree, "total": total }))
                .collect::<Vec<_>>(),
            "oracle_heldout_accuracy": oracle.heldout_accuracy,
        }),
    )?;
    println!(
        "label consistency {fraction:.4} over {} samples",
        samples_x.len()
    );
    Ok(fraction)
}

fn needs_denoiser<'a>(mut methods: impl Iterator<Item = &'a Method>) -> bool {
    methods.any(|m| m.needs_denoiser())
}

pub fn benchmark(cfg: &RunConfig) -> Result<()> {
    let started = Instant::now();
    let ds = dataset(cfg)?;
    let model = if needs_denoiser(cfg.specs.iter().map(|s| &s.method)) {
        Some(load_denoiser(cfg)?)
    } else {
        None
    };
    let oracle = oracle(cfg)?;
    let result = run_benchmark(
        &ds,
        &cfg.specs,
        &cfg.benchmark,
        EvalResources {
            denoiser: model.as_ref(),
            oracle: Some(&oracle),
        },
    )?;
    check_fairness(&result)?;

    write_artifact(&cfg.out.join("benchmark.json"), cfg, &result)?;
    let mut csv = csv_header(cfg);
    csv.push_str("spec,episode,accuracy,support_size\n");
    for r in &result.reports {
        for (e, (a, n)) in r
            .episode_accuracies
            .iter()
            .zip(&r.support_sizes)
            .enumerate()
        {
            let _ = writeln!(csv, "{},{e},{a},{n}", r.spec);
        }
    }
    write_text(&cfg.out.join("benchmark.csv"), &csv)?;
    write_timing(
        cfg,
        "benchmark",
        json!({
            "seconds": started.elapsed().as_secs_f64(),
            "spec_seconds": result.reports.iter().map(|r| json!({ "spec": r.spec, "seconds": r.runtime_secs })).collect::<Vec<_>>(),
        }),
    )?;
    for r in &result.reports {
        print!("{}: {:.2} ± {:.2}", r.spec, 100.0 * r.mean, 100.0 * r.ci95);
        if let Some(c) = r.label_consistency {
            print!(" (label consistency {:.3})", c);
        }
        println!();
    }
    for p in &result.paired {
        println!(
            "{} vs {}: {:+.2} ± {:.2}",
            p.spec,
            p.baseline,
            100.0 * p.mean_difference,
            100.0 * p.ci95
        );
    }
    Ok(())
}

pub fn longtail(cfg: &RunConfig) -> Result<()> {
    let started = Instant::now();
    let lt_cfg = &cfg.longtail;
    let root = RngStream::new(cfg.seed, 0);
    let train_cfg = SyntheticTaskConfig {
        seed: root.substream("longtail-train", 0).next_u64(),
        ..cfg.dataset.clone()
    };
    let lt = build_longtail(&lt_cfg.profile, &train_cfg, lt_cfg.thresholds)?;
    let test = build_synthetic(&SyntheticTaskConfig {
        seed: root.substream("longtail-test", 0).next_u64(),
        samples_per_class: lt_cfg.test_per_class,
        ..cfg.dataset.clone()
    })?
    .samples;
    let model = if lt_cfg.spec.method.needs_denoiser() {
        Some(load_denoiser(cfg)?)
    } else {
        None
    };
    let oracle = oracle(cfg)?;
    let mut base_args = lt_cfg.args();
    base_args.cap = 0;
    let baseline = run_longtail(
        &lt,
        &test,
        &genie_core::augment::AugmentationSpec::none(),
        model.as_ref(),
        Some(&oracle),
        &base_args,
    )?;
    let augmented = run_longtail(
        &lt,
        &test,
        &lt_cfg.spec,
        model.as_ref(),
        Some(&oracle),
        &lt_cfg.args(),
    )?;
    let reports = [&baseline.report, &augmented.report];
    for r in reports {
        let buckets = r.buckets.as_ref().expect("long-tail reports carry buckets");
        if (buckets.weighted_mean() - buckets.overall).abs() > 1e-9 {
            return Err(genie_core::Error::Invariant(format!(
                "{}: bucket-weighted mean {} differs from overall {}",
                r.spec,
                buckets.weighted_mean(),
                buckets.overall
            ))
            .into());
        }
    }
    write_artifact(
        &cfg.out.join("longtail.json"),
        cfg,
        json!({
            "counts": lt.counts,
            "buckets": lt.buckets,
            "reports": reports,
            "confusion": augmented.confusion.counts(),
        }),
    )?;
    let mut csv = csv_header(cfg);
    csv.push_str("spec,bucket,accuracy,test_count\n");
    for r in reports {
        let b = r.buckets.as_ref().expect("buckets");
        for acc in &b.buckets {
            let _ = writeln!(
                csv,
                "{},{:?},{},{}",
                r.spec, acc.bucket, acc.accuracy, acc.test_count
            );
        }
        let _ = writeln!(csv, "{},Overall,{},{}", r.spec, b.overall, test.len());
    }
    write_text(&cfg.out.join("longtail.csv"), &csv)?;
    write_timing(
        cfg,
        "longtail",
        json!({ "seconds": started.elapsed().as_secs_f64() }),
    )?;
    for r in reports {
        let b = r.buckets.as_ref().expect("buckets");
        let get = |bucket| {
            b.accuracy(bucket)
                .map_or("-".to_string(), |a| format!("{:.2}", 100.0 * a))
        };
        println!(
            "{}: many {} med {} few {} overall {:.2}",
            r.spec,
            get(Bucket::Many),
            get(Bucket::Med),
            get(Bucket::Few),
            100.0 * b.overall
        );
    }
    Ok(())
}

pub fn sweep(cfg: &RunConfig) -> Result<()> {
    let started = Instant::now();
    let ds = dataset(cfg)?;
    let model = load_denoiser(cfg)?;
    let oracle = oracle(cfg)?;
    let result = noise_sweep(
        &ds,
        &cfg.sweep.rs,
        &cfg.sweep.template,
        &cfg.benchmark,
        EvalResources {
            denoiser: Some(&model),
            oracle: Some(&oracle),
        },
    )?;
    write_artifact(&cfg.out.join("sweep.json"), cfg, &result)?;
    let mut csv = csv_header(cfg);
    csv.push_str("r,mean,ci95,consistency\n");
    for row in &result.rows {
        let c = row.consistency.map_or(String::new(), |c| c.to_string());
        let _ = writeln!(csv, "{},{},{},{c}", row.r, row.mean, row.ci95);
    }
    write_text(&cfg.out.join("sweep.csv"), &csv)?;
    write_timing(
        cfg,
        "sweep",
        json!({ "seconds": started.elapsed().as_secs_f64() }),
    )?;
    let base = &result.benchmark.reports[0];
    println!(
        "{}: {:.2} ± {:.2}",
        base.spec,
        100.0 * base.mean,
        100.0 * base.ci95
    );
    for row in &result.rows {
        println!(
            "r={}: {:.2} ± {:.2} (label consistency {})",
            row.r,
            100.0 * row.mean,
            100.0 * row.ci95,
            row.consistency.map_or("-".into(), |c| format!("{c:.3}"))
        );
    }
    Ok(())
}

pub fn boundary(cfg: &RunConfig) -> Result<()> {
    let started = Instant::now();
    let ds = dataset(cfg)?;
    let model = load_denoiser(cfg)?;
    let oracle = oracle(cfg)?;
    let groups = boundary_groups(&ds, &model, &cfg.boundary)?;
    let report = boundary_analysis(
        &groups,
        &ds.samples,
        cfg.dataset.kind,
        &oracle,
        Projector::for_kind(cfg.dataset.kind),
    )?;
    write_artifact(
        &cfg.out.join("boundary.json"),
        cfg,
        json!({ "stats": report.stats, "projection": report.projection }),
    )?;
    write_text(
        &cfg.out.join("boundary.csv"),
        &format!("{}{}", csv_header(cfg), report.to_csv()),
    )?;
    let metadata = serde_json::to_string(&json!({
        "code_version": CODE_VERSION,
        "seed": cfg.seed,
        "config": cfg.echo(),
    }))
    .map_err(genie_core::Error::from)?;
    let title = format!("oracle margins, r={} (seed {})", cfg.boundary.r, cfg.seed);
    write_text(
        &cfg.out.join("boundary.svg"),
        &render_boundary_svg(&report, &title, &metadata),
    )?;
    write_timing(
        cfg,
        "boundary",
        json!({ "seconds": started.elapsed().as_secs_f64() }),
    )?;
    if report.projection.fallback {
        println!("projection fell back to the first two coordinates (degenerate covariance)");
    }
    for s in &report.stats {
        print!(
            "{}: mean margin {:.4}, median {:.4}",
            s.method, s.mean_margin, s.median_margin
        );
        if let Some(d) = s.context_distance {
            print!(", context distance {d:.3}");
        }
        println!();
    }
    Ok(())
}
