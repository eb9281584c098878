//! Synthetic class-manifold datasets with a class-independent context channel.
//!
//! * `blobs2d`: 4-D vectors. Coordinates 0..2 carry the class (a Gaussian blob on
//!   a circle); coordinates 2..4 carry context drawn from modes shared by every
//!   class.
//! * `glyphs8x8`: 64-D images. The class is an ink template, the context an
//!   additive background level shared by every class.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::sample::LabeledSample;

/// Within-mode spread of blob context, relative to `context_strength`.
pub const CONTEXT_JITTER: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Blobs2d,
    Glyphs8x8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticTaskConfig {
    pub kind: DatasetKind,
    pub n_classes: usize,
    pub samples_per_class: usize,
    /// Blob circle radius, or glyph ink intensity.
    pub class_separation: f64,
    pub context_modes: usize,
    pub context_strength: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticTaskConfig {
    fn default() -> Self {
        Self {
            kind: DatasetKind::Blobs2d,
            n_classes: 10,
            samples_per_class: 200,
            class_separation: 60.0,
            context_modes: 4,
            context_strength: 40.0,
            noise_sigma: 6.0,
            seed: 0,
        }
    }
}

impl SyntheticTaskConfig {
    /// Glyph defaults: unit ink, background levels up to 0.5, pixel noise 0.1.
    pub fn glyphs() -> Self {
        Self {
            kind: DatasetKind::Glyphs8x8,
            class_separation: 1.0,
            context_strength: 0.5,
            noise_sigma: 0.1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::invalid("n_classes must be at least 2"));
        }
        if self.noise_sigma.is_nan() || self.noise_sigma <= 0.0 {
            return Err(Error::invalid("noise_sigma must be positive"));
        }
        if self.context_strength.is_nan() || self.context_strength < 0.0 {
            return Err(Error::invalid("context_strength must be non-negative"));
        }
        if self.context_modes == 0 {
            return Err(Error::invalid("context_modes must be at least 1"));
        }
        if self.kind == DatasetKind::Glyphs8x8 && self.n_classes > GLYPHS.len() {
            return Err(Error::invalid(format!(
                "{} glyph classes requested but only {} templates exist",
                self.n_classes,
                GLYPHS.len()
            )));
        }
        Ok(())
    }

    pub fn data_dim(&self) -> usize {
        match self.kind {
            DatasetKind::Blobs2d => 4,
            DatasetKind::Glyphs8x8 => 64,
        }
    }
}

/// Glyph bitmaps, one per class, `#` = ink.
pub const GLYPHS: [[&str; 8]; 12] = [
    // 0: horizontal bar
    [
        "........", "........", "........", "########", "########", "........", "........",
        "........",
    ],
    // 1: vertical bar
    [
        "...##...", "...##...", "...##...", "...##...", "...##...", "...##...", "...##...",
        "...##...",
    ],
    // 2: plus
    [
        "...##...", "...##...", "...##...", "########", "########", "...##...", "...##...",
        "...##...",
    ],
    // 3: square outline
    [
        "########", "#......#", "#......#", "#......#", "#......#", "#......#", "#......#",
        "########",
    ],
    // 4: diagonal
    [
        "#.......", ".#......", "..#.....", "...#....", "....#...", ".....#..", "......#.",
        ".......#",
    ],
    // 5: anti-diagonal
    [
        ".......#", "......#.", ".....#..", "....#...", "...#....", "..#.....", ".#......",
        "#.......",
    ],
    // 6: X
    [
        "#......#", ".#....#.", "..#..#..", "...##...", "...##...", "..#..#..", ".#....#.",
        "#......#",
    ],
    // 7: L
    [
        "#.......", "#.......", "#.......", "#.......", "#.......", "#.......", "#.......",
        "########",
    ],
    // 8: T
    [
        "########", "...##...", "...##...", "...##...", "...##...", "...##...", "...##...",
        "...##...",
    ],
    // 9: filled centre block
    [
        "........", "........", "..####..", "..####..", "..####..", "..####..", "........",
        "........",
    ],
    // 10: two vertical stripes
    [
        ".#....#.", ".#....#.", ".#....#.", ".#....#.", ".#....#.", ".#....#.", ".#....#.",
        ".#....#.",
    ],
    // 11: corners
    [
        "##....##", "##....##", "........", "........", "........", "........", "##....##",
        "##....##",
    ],
];

pub fn glyph_template(class: usize) -> Vec<f64> {
    GLYPHS[class]
        .iter()
        .flat_map(|row| row.bytes().map(|b| if b == b'#' { 1.0 } else { 0.0 }))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub config: SyntheticTaskConfig,
    pub samples: Vec<LabeledSample>,
}

impl Dataset {
    pub fn n_classes(&self) -> usize {
        self.config.n_classes
    }

    pub fn data_dim(&self) -> usize {
        self.config.data_dim()
    }

    /// Sample indices grouped by class.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_classes()];
        for (i, s) in self.samples.iter().enumerate() {
            out[s.y].push(i);
        }
        out
    }
}

/// Class-independent context features of a data vector.
pub fn context_features(kind: DatasetKind, x: &[f64]) -> Vec<f64> {
    match kind {
        DatasetKind::Blobs2d => x[2..4].to_vec(),
        DatasetKind::Glyphs8x8 => {
            // Most pixels are background, so the median tracks the background level.
            let mut v = x.to_vec();
            v.sort_by(f64::total_cmp);
            vec![v[v.len() / 2]]
        }
    }
}

pub fn class_mean(cfg: &SyntheticTaskConfig, class: usize) -> Vec<f64> {
    match cfg.kind {
        DatasetKind::Blobs2d => {
            let angle = 2.0 * PI * class as f64 / cfg.n_classes as f64;
            vec![
                cfg.class_separation * angle.cos(),
                cfg.class_separation * angle.sin(),
            ]
        }
        DatasetKind::Glyphs8x8 => glyph_template(class)
            .into_iter()
            .map(|v| v * cfg.class_separation)
            .collect(),
    }
}

fn context_center(cfg: &SyntheticTaskConfig, mode: usize) -> Vec<f64> {
    match cfg.kind {
        DatasetKind::Blobs2d => {
            let angle = 2.0 * PI * mode as f64 / cfg.context_modes as f64 + PI / 4.0;
            vec![angle.cos(), angle.sin()]
        }
        DatasetKind::Glyphs8x8 => {
            vec![mode as f64 / (cfg.context_modes.max(2) - 1) as f64]
        }
    }
}

fn draw(cfg: &SyntheticTaskConfig, mean: &[f64], rng: &mut RngStream) -> Vec<f64> {
    let mode = rng.below(cfg.context_modes);
    let center = context_center(cfg, mode);
    match cfg.kind {
        DatasetKind::Blobs2d => {
            let mut x: Vec<f64> = mean
                .iter()
                .map(|&m| m + cfg.noise_sigma * rng.normal())
                .collect();
            for c in center {
                x.push(cfg.context_strength * (c + CONTEXT_JITTER * rng.normal()));
            }
            x
        }
        DatasetKind::Glyphs8x8 => {
            let level = cfg.context_strength * center[0];
            mean.iter()
                .map(|&m| m + level + cfg.noise_sigma * rng.normal())
                .collect()
        }
    }
}

/// Builds `samples_per_class` samples for every class, ordered by class. Each
/// class draws from its own substream, so a larger `samples_per_class` extends
/// rather than reshuffles the per-class sequences.
pub fn build_synthetic(cfg: &SyntheticTaskConfig) -> Result<Dataset> {
    cfg.validate()?;
    let root = RngStream::new(cfg.seed, 0);
    let mut samples = Vec::with_capacity(cfg.n_classes * cfg.samples_per_class);
    for class in 0..cfg.n_classes {
        let mean = class_mean(cfg, class);
        let mut rng = root.substream("synthetic-class", class as u64);
        for _ in 0..cfg.samples_per_class {
            samples.push(LabeledSample::real(draw(cfg, &mean, &mut rng), class));
        }
    }
    Ok(Dataset {
        config: cfg.clone(),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_context_strength_has_no_context_variance() {
        let cfg = SyntheticTaskConfig {
            context_strength: 0.0,
            ..Default::default()
        };
        let ds = build_synthetic(&cfg).unwrap();
        assert!(ds.samples.iter().all(|s| s.x[2] == 0.0 && s.x[3] == 0.0));
    }

    #[test]
    fn deterministic_bytes() {
        let cfg = SyntheticTaskConfig::default();
        let a = serde_json::to_vec(&build_synthetic(&cfg).unwrap()).unwrap();
        let b = serde_json::to_vec(&build_synthetic(&cfg).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_many_glyph_classes() {
        let cfg = SyntheticTaskConfig {
            kind: DatasetKind::Glyphs8x8,
            n_classes: 13,
            ..Default::default()
        };
        assert!(build_synthetic(&cfg).is_err());
    }

    #[test]
    fn glyph_templates_are_distinct() {
        for a in 0..GLYPHS.len() {
            assert_eq!(glyph_template(a).len(), 64);
            for b in a + 1..GLYPHS.len() {
                assert_ne!(glyph_template(a), glyph_template(b), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn counts_and_labels() {
        let cfg = SyntheticTaskConfig {
            n_classes: 3,
            samples_per_class: 7,
            ..Default::default()
        };
        let ds = build_synthetic(&cfg).unwrap();
        assert_eq!(ds.samples.len(), 21);
        assert!(ds.class_indices().iter().all(|c| c.len() == 7));
    }

    #[test]
    fn prefix_stable_under_more_samples() {
        let small = SyntheticTaskConfig {
            samples_per_class: 5,
            ..Default::default()
        };
        let large = SyntheticTaskConfig {
            samples_per_class: 9,
            ..Default::default()
        };
        let a = build_synthetic(&small).unwrap();
        let b = build_synthetic(&large).unwrap();
        for c in 0..small.n_classes {
            assert_eq!(a.samples[c * 5..c * 5 + 5], b.samples[c * 9..c * 9 + 5]);
        }
    }
}
