use serde::{Deserialize, Serialize};

use crate::augment::AugmentationSpec;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::benchmark::{run_benchmark, BenchmarkArgs, BenchmarkResult, EvalResources};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub r: f64,
    pub mean: f64,
    pub ci95: f64,
    pub consistency: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// The underlying benchmark: the unaugmented baseline first, then one GeNIe
    /// spec per ratio, all on one episode stream.
    pub benchmark: BenchmarkResult,
}

/// Name of the sweep spec for ratio `r`.
pub fn sweep_spec_name(r: f64) -> String {
    format!("genie_r{r}")
}

/// Runs GeNIe at every ratio in `rs` (built from `template`) next to an
/// unaugmented baseline, with shared episodes and shared generation noise.
pub fn noise_sweep(
    dataset: &Dataset,
    rs: &[f64],
    template: &AugmentationSpec,
    args: &BenchmarkArgs,
    resources: EvalResources,
) -> Result<SweepResult> {
    if rs.is_empty() {
        return Err(Error::Empty("noise sweep ratios"));
    }
    if let Some(bad) = rs.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
        return Err(Error::invalid(format!("sweep ratio {bad} outside (0, 1)")));
    }
    let mut specs = vec![AugmentationSpec::none()];
    specs.extend(rs.iter().map(|&r| AugmentationSpec {
        name: sweep_spec_name(r),
        r,
        ..template.clone()
    }));
    let benchmark = run_benchmark(dataset, &specs, args, resources)?;
    let rows = rs
        .iter()
        .zip(&benchmark.reports[1..])
        .map(|(&r, rep)| SweepRow {
            r,
            mean: rep.mean,
            ci95: rep.ci95,
            consistency: rep.label_consistency,
        })
        .collect();
    Ok(SweepResult { rows, benchmark })
}
