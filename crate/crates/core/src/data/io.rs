//! Line-delimited JSON for samples and datasets.
//!
//! Sample files hold one [`SampleRecord`] per line. Dataset files start with a
//! `{"header": {...}}` line carrying the generating config, followed by sample
//! records.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::synthetic::{Dataset, SyntheticTaskConfig};
use crate::error::{Error, Result};
use crate::sample::LabeledSample;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    #[serde(flatten)]
    pub sample: LabeledSample,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: SyntheticTaskConfig,
}

pub fn write_samples<W: Write>(out: W, records: &[SampleRecord]) -> Result<()> {
    let mut out = BufWriter::new(out);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_samples<R: BufRead>(input: R) -> Result<Vec<SampleRecord>> {
    input
        .lines()
        .filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()))
        .map(|line| Ok(serde_json::from_str(&line?)?))
        .collect()
}

pub fn save_samples(path: &Path, records: &[SampleRecord]) -> Result<()> {
    write_samples(fs::File::create(path)?, records)
}

pub fn load_samples(path: &Path) -> Result<Vec<SampleRecord>> {
    read_samples(BufReader::new(fs::File::open(path)?))
}

pub fn save_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer(
        &mut out,
        &HeaderLine {
            header: dataset.config.clone(),
        },
    )?;
    out.write_all(b"\n")?;
    let records: Vec<SampleRecord> = dataset
        .samples
        .iter()
        .map(|s| SampleRecord {
            sample: s.clone(),
            seed: dataset.config.seed,
        })
        .collect();
    write_samples(out, &records)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let mut lines = BufReader::new(fs::File::open(path)?).lines();
    let first = lines.next().ok_or(Error::Empty("dataset file"))??;
    let header: HeaderLine = serde_json::from_str(&first)?;
    let mut samples = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SampleRecord = serde_json::from_str(&line)?;
        samples.push(record.sample);
    }
    Ok(Dataset {
        config: header.header,
        samples,
    })
}
