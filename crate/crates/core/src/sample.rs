//! Labeled data vectors with generation provenance.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Real,
    Genie,
    Img2img,
    Condsample,
    Traditional,
    Cutmix,
    Mixup,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Real => "real",
            Provenance::Genie => "genie",
            Provenance::Img2img => "img2img",
            Provenance::Condsample => "condsample",
            Provenance::Traditional => "traditional",
            Provenance::Cutmix => "cutmix",
            Provenance::Mixup => "mixup",
        }
    }

    pub fn is_generative(self) -> bool {
        matches!(
            self,
            Provenance::Genie | Provenance::Img2img | Provenance::Condsample
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub x: Vec<f64>,
    pub y: usize,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_class: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_used: Option<f64>,
    /// Soft-label weight on `y` for mixing baselines; the remainder goes to
    /// `source_class`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mix_weight: Option<f64>,
}

impl LabeledSample {
    pub fn real(x: Vec<f64>, y: usize) -> Self {
        Self {
            x,
            y,
            provenance: Provenance::Real,
            source_class: None,
            r_used: None,
            mix_weight: None,
        }
    }

    /// Checks the provenance invariants: GeNIe samples name a different source
    /// class, and any recorded noise ratio lies in `[0, 1]`.
    pub fn provenance_is_consistent(&self) -> bool {
        let genie_ok = self.provenance != Provenance::Genie
            || matches!(self.source_class, Some(s) if s != self.y) && self.r_used.is_some();
        let r_ok = self.r_used.is_none_or(|r| (0.0..=1.0).contains(&r));
        genie_ok && r_ok
    }
}
