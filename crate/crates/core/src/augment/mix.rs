//! Non-generative baselines: MixUp, CutMix and traditional jitter/reflection.

use serde::{Deserialize, Serialize};

use crate::data::DatasetKind;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::sample::{LabeledSample, Provenance};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixMode {
    Cutmix,
    Mixup,
}

/// Mixes `b` into `a`. The result is labeled `a.y` with soft weight `mix_weight`
/// on `a.y` and the remainder on `b.y` (stored as `source_class`).
///
/// MixUp interpolates `lambda a + (1 - lambda) b`. CutMix pastes a contiguous block
/// of `b` covering a `1 - lambda` fraction of the coordinates into `a`; with
/// `grid = Some((h, w))` the block is a square patch of the image. The weight is
/// the realized fraction of coordinates kept from `a`.
pub fn mix_baselines(
    a: &LabeledSample,
    b: &LabeledSample,
    lambda: f64,
    mode: MixMode,
    grid: Option<(usize, usize)>,
    rng: &mut RngStream,
) -> Result<LabeledSample> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!("lambda {lambda} outside [0, 1]")));
    }
    if a.x.len() != b.x.len() {
        return Err(Error::DimensionMismatch {
            expected: a.x.len(),
            got: b.x.len(),
        });
    }
    let dim = a.x.len();
    let (x, weight) = match mode {
        MixMode::Mixup => (
            a.x.iter()
                .zip(&b.x)
                .map(|(&u, &v)| lambda * u + (1.0 - lambda) * v)
                .collect(),
            lambda,
        ),
        MixMode::Cutmix => {
            let mut x = a.x.clone();
            let pasted = match grid {
                Some((h, w)) if h * w == dim => {
                    let side_h = ((1.0 - lambda).sqrt() * h as f64).round() as usize;
                    let side_w = ((1.0 - lambda).sqrt() * w as f64).round() as usize;
                    let top = rng.below(h - side_h + 1);
                    let left = rng.below(w - side_w + 1);
                    for i in top..top + side_h {
                        for j in left..left + side_w {
                            x[i * w + j] = b.x[i * w + j];
                        }
                    }
                    side_h * side_w
                }
                Some(_) => return Err(Error::invalid("cutmix grid does not match data_dim")),
                None => {
                    let len = ((1.0 - lambda) * dim as f64).round() as usize;
                    let start = rng.below(dim - len + 1);
                    x[start..start + len].copy_from_slice(&b.x[start..start + len]);
                    len
                }
            };
            (x, 1.0 - pasted as f64 / dim as f64)
        }
    };
    Ok(LabeledSample {
        x,
        y: a.y,
        provenance: match mode {
            MixMode::Cutmix => Provenance::Cutmix,
            MixMode::Mixup => Provenance::Mixup,
        },
        source_class: Some(b.y),
        r_used: None,
        mix_weight: Some(weight),
    })
}

/// Weak traditional augmentation: Gaussian jitter with `0.1 * noise_sigma`, plus a
/// reflection with probability 1/2. Blobs reflect the class coordinates through
/// `class_centroid` (class-preserving); glyphs flip horizontally.
pub fn traditional_weak(
    sample: &LabeledSample,
    kind: DatasetKind,
    noise_sigma: f64,
    class_centroid: &[f64],
    rng: &mut RngStream,
) -> LabeledSample {
    let mut x = sample.x.clone();
    if rng.uniform() < 0.5 {
        match kind {
            DatasetKind::Blobs2d => {
                for k in 0..2 {
                    x[k] = 2.0 * class_centroid[k] - x[k];
                }
            }
            DatasetKind::Glyphs8x8 => {
                for row in x.chunks_mut(8) {
                    row.reverse();
                }
            }
        }
    }
    for v in x.iter_mut() {
        *v += 0.1 * noise_sigma * rng.normal();
    }
    traditional(sample, x)
}

/// Strong traditional augmentation: jitter with `0.5 * noise_sigma` and each
/// coordinate zeroed with probability 0.1.
pub fn traditional_strong(
    sample: &LabeledSample,
    noise_sigma: f64,
    rng: &mut RngStream,
) -> LabeledSample {
    let x = sample
        .x
        .iter()
        .map(|&v| {
            let jittered = v + 0.5 * noise_sigma * rng.normal();
            if rng.uniform() < 0.1 {
                0.0
            } else {
                jittered
            }
        })
        .collect();
    traditional(sample, x)
}

fn traditional(sample: &LabeledSample, x: Vec<f64>) -> LabeledSample {
    LabeledSample {
        x,
        y: sample.y,
        provenance: Provenance::Traditional,
        source_class: None,
        r_used: None,
        mix_weight: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(x: Vec<f64>, y: usize) -> LabeledSample {
        LabeledSample::real(x, y)
    }

    #[test]
    fn lambda_one_keeps_a() {
        let a = s(vec![1.0, 2.0, 3.0], 0);
        let b = s(vec![7.0, 8.0, 9.0], 1);
        let mut rng = RngStream::new(0, 0);
        for mode in [MixMode::Mixup, MixMode::Cutmix] {
            let m = mix_baselines(&a, &b, 1.0, mode, None, &mut rng).unwrap();
            assert_eq!(m.x, a.x);
            assert_eq!(m.mix_weight, Some(1.0));
            assert_eq!(m.y, 0);
        }
    }

    #[test]
    fn mixup_midpoint() {
        let a = s(vec![0.0, 0.0], 0);
        let b = s(vec![2.0, 4.0], 1);
        let m =
            mix_baselines(&a, &b, 0.5, MixMode::Mixup, None, &mut RngStream::new(0, 0)).unwrap();
        assert_eq!(m.x, vec![1.0, 2.0]);
        assert_eq!(m.source_class, Some(1));
    }

    #[test]
    fn cutmix_weight_is_block_fraction() {
        let a = s(vec![0.0; 10], 0);
        let b = s(vec![1.0; 10], 1);
        let mut rng = RngStream::new(4, 0);
        for lambda in [0.0, 0.25, 0.5, 0.73, 1.0] {
            let m = mix_baselines(&a, &b, lambda, MixMode::Cutmix, None, &mut rng).unwrap();
            let pasted: Vec<usize> = (0..10).filter(|&i| m.x[i] == 1.0).collect();
            assert_eq!(m.mix_weight.unwrap(), 1.0 - pasted.len() as f64 / 10.0);
            if let (Some(&lo), Some(&hi)) = (pasted.first(), pasted.last()) {
                assert_eq!(hi - lo + 1, pasted.len(), "block must be contiguous");
            }
        }
    }

    #[test]
    fn cutmix_square_patch_on_glyphs() {
        let a = s(vec![0.0; 64], 0);
        let b = s(vec![1.0; 64], 1);
        let m = mix_baselines(
            &a,
            &b,
            0.75,
            MixMode::Cutmix,
            Some((8, 8)),
            &mut RngStream::new(2, 0),
        )
        .unwrap();
        let pasted = m.x.iter().filter(|&&v| v == 1.0).count();
        assert_eq!(pasted, 16);
        assert_eq!(m.mix_weight, Some(0.75));
    }

    #[test]
    fn bad_lambda() {
        let a = s(vec![0.0], 0);
        assert!(
            mix_baselines(&a, &a, 1.5, MixMode::Mixup, None, &mut RngStream::new(0, 0)).is_err()
        );
    }

    #[test]
    fn weak_reflection_preserves_centroid_side() {
        let sample = s(vec![3.0, 1.0, 5.0, 5.0], 2);
        let centroid = [3.0, 1.0];
        let mut rng = RngStream::new(8, 0);
        for _ in 0..20 {
            let t = traditional_weak(&sample, DatasetKind::Blobs2d, 0.3, &centroid, &mut rng);
            assert!((t.x[0] - 3.0).abs() < 0.2 && (t.x[1] - 1.0).abs() < 0.2);
            assert_eq!(t.y, 2);
        }
    }
}
