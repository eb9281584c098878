use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sample::Provenance;

/// Default classifier-free guidance weight. The class embedding is fully
/// informative at this scale, so unguided conditional sampling already matches
/// the class-conditionals; positive weights sharpen them past the data.
pub const DEFAULT_GUIDANCE: f64 = 0.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// No generated samples; the support set is used as-is.
    None,
    Genie,
    Img2img,
    Condsample,
    /// Weak traditional augmentation: small jitter plus class-preserving reflection.
    Traditional,
    /// Strong traditional augmentation: larger jitter plus coordinate dropout.
    TraditionalStrong,
    Cutmix,
    Mixup,
}

impl Method {
    pub fn provenance(self) -> Provenance {
        match self {
            Method::None => Provenance::Real,
            Method::Genie => Provenance::Genie,
            Method::Img2img => Provenance::Img2img,
            Method::Condsample => Provenance::Condsample,
            Method::Traditional | Method::TraditionalStrong => Provenance::Traditional,
            Method::Cutmix => Provenance::Cutmix,
            Method::Mixup => Provenance::Mixup,
        }
    }

    pub fn needs_denoiser(self) -> bool {
        matches!(self, Method::Genie | Method::Img2img | Method::Condsample)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourcePolicy {
    RandomOtherClass,
    ConfusionTopk(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationSpec {
    pub name: String,
    pub method: Method,
    pub r: f64,
    /// Classifier-free guidance weight.
    pub w: f64,
    pub per_class_count: usize,
    pub source_policy: SourcePolicy,
    pub seed: u64,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        Self {
            name: "none".into(),
            method: Method::None,
            r: 0.8,
            w: DEFAULT_GUIDANCE,
            per_class_count: 0,
            source_policy: SourcePolicy::RandomOtherClass,
            seed: 0,
        }
    }
}

impl AugmentationSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn genie(r: f64, per_class_count: usize) -> Self {
        Self {
            name: format!("genie_r{r}"),
            method: Method::Genie,
            r,
            per_class_count,
            ..Self::default()
        }
    }

    pub fn img2img(r: f64, per_class_count: usize) -> Self {
        Self {
            name: format!("img2img_r{r}"),
            method: Method::Img2img,
            r,
            per_class_count,
            ..Self::default()
        }
    }

    pub fn condsample(per_class_count: usize) -> Self {
        Self {
            name: "condsample".into(),
            method: Method::Condsample,
            r: 1.0,
            per_class_count,
            ..Self::default()
        }
    }

    pub fn with_method(method: Method, per_class_count: usize) -> Self {
        Self {
            name: format!("{method:?}").to_lowercase(),
            method,
            per_class_count,
            ..Self::default()
        }
    }

    /// Noise ratio actually applied: conditional sampling always runs the full chain.
    pub fn effective_r(&self) -> f64 {
        match self.method {
            Method::Condsample => 1.0,
            _ => self.r,
        }
    }

    /// Generated samples per class; `None` contributes nothing whatever the count.
    pub fn generated_per_class(&self) -> usize {
        match self.method {
            Method::None => 0,
            _ => self.per_class_count,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.method {
            Method::Genie if !(self.r > 0.0 && self.r < 1.0) => Err(Error::invalid(format!(
                "genie needs r in (0, 1), got {}",
                self.r
            ))),
            Method::Img2img if !(0.0..=1.0).contains(&self.r) => Err(Error::invalid(format!(
                "img2img needs r in [0, 1], got {}",
                self.r
            ))),
            _ if !self.w.is_finite() => Err(Error::invalid("guidance weight must be finite")),
            _ => match self.source_policy {
                SourcePolicy::ConfusionTopk(0) => {
                    Err(Error::invalid("confusion_topk needs k >= 1"))
                }
                _ => Ok(()),
            },
        }
    }
}
