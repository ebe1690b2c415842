use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchKind {
    /// Stack of fully connected layers.
    Fc,
    /// 3×3 convolution stack with global average pooling and a linear head.
    Conv,
}

/// Declarative network description.
///
/// `widths` lists hidden layer widths (fc) or channel counts (conv). Depth counts
/// weight layers, so `widths = []` is a single linear classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpec {
    pub kind: ArchKind,
    #[serde(default)]
    pub widths: Vec<usize>,
    #[serde(default)]
    pub residual: bool,
    #[serde(default = "default_multiplier")]
    pub width_multiplier: f64,
    pub num_classes: usize,
    pub input_shape: Vec<usize>,
}

fn default_multiplier() -> f64 {
    1.0
}

/// Which parameters a count covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamScope {
    All,
    /// Weights only; biases are never pruned.
    Prunable,
}

impl ArchSpec {
    pub fn fc(input: usize, widths: &[usize], num_classes: usize) -> Self {
        ArchSpec {
            kind: ArchKind::Fc,
            widths: widths.to_vec(),
            residual: false,
            width_multiplier: 1.0,
            num_classes,
            input_shape: vec![input],
        }
    }

    pub fn conv(input_shape: [usize; 3], channels: &[usize], num_classes: usize) -> Self {
        ArchSpec {
            kind: ArchKind::Conv,
            widths: channels.to_vec(),
            residual: false,
            width_multiplier: 1.0,
            num_classes,
            input_shape: input_shape.to_vec(),
        }
    }

    pub fn with_residual(mut self, residual: bool) -> Self {
        self.residual = residual;
        self
    }

    pub fn with_width_multiplier(mut self, m: f64) -> Self {
        self.width_multiplier = m;
        self
    }

    /// Number of weight layers, including the classifier head.
    pub fn depth(&self) -> usize {
        self.widths.len() + 1
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    /// Hidden widths after applying the width multiplier.
    pub fn effective_widths(&self) -> Vec<usize> {
        self.widths
            .iter()
            .map(|&w| ((w as f64 * self.width_multiplier).round() as usize).max(1))
            .collect()
    }

    /// Indices of hidden layers that receive an identity skip connection.
    pub(crate) fn skip_layers(&self) -> Vec<usize> {
        if !self.residual {
            return Vec::new();
        }
        (1..self.widths.len()).collect()
    }

    /// Conv layers preceded by a 2×2 average pool (stage transitions).
    pub(crate) fn downsample_before(&self) -> Vec<bool> {
        let w = self.effective_widths();
        (0..w.len()).map(|i| i > 0 && w[i] != w[i - 1]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width_multiplier.is_finite() && self.width_multiplier > 0.0) {
            return Err(Error::config(format!(
                "width_multiplier must be positive, got {}",
                self.width_multiplier
            )));
        }
        if self.num_classes == 0 {
            return Err(Error::config("num_classes must be at least 1"));
        }
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(Error::config(format!(
                "bad input_shape {:?}",
                self.input_shape
            )));
        }
        if self.widths.contains(&0) {
            return Err(Error::config("layer widths must be positive"));
        }
        let eff = self.effective_widths();
        if self.residual {
            if let Some(i) = (1..eff.len()).find(|&i| eff[i] != eff[i - 1]) {
                return Err(Error::config(format!(
                    "residual block {i} maps width {} to {}; identity shortcuts need equal widths",
                    eff[i - 1],
                    eff[i]
                )));
            }
        }
        if self.kind == ArchKind::Conv {
            if self.input_shape.len() != 3 {
                return Err(Error::config("conv nets need input_shape [C, H, W]"));
            }
            if self.widths.is_empty() {
                return Err(Error::config("conv nets need at least one conv layer"));
            }
            let (mut h, mut w) = (self.input_shape[1], self.input_shape[2]);
            for (i, down) in self.downsample_before().into_iter().enumerate() {
                if down {
                    if h % 2 != 0 || w % 2 != 0 {
                        return Err(Error::config(format!(
                            "conv layer {i} downsamples an odd {h}x{w} map"
                        )));
                    }
                    h /= 2;
                    w /= 2;
                }
            }
            if h != w {
                return Err(Error::config(format!(
                    "global pooling needs a square final map, got {h}x{w}"
                )));
            }
        }
        Ok(())
    }

    /// Stable digest of the canonical JSON serialization.
    pub fn arch_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("ArchSpec serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        hex::encode(&digest[..16])
    }
}

/// Exact parameter count of a spec.
pub fn count_params(spec: &ArchSpec, scope: ParamScope) -> usize {
    let widths = spec.effective_widths();
    let mut total = 0;
    let mut add = |fan_in: usize, out: usize| {
        total += fan_in * out;
        if scope == ParamScope::All {
            total += out;
        }
    };
    match spec.kind {
        ArchKind::Fc => {
            let mut prev = spec.input_len();
            for &w in &widths {
                add(prev, w);
                prev = w;
            }
            add(prev, spec.num_classes);
        }
        ArchKind::Conv => {
            let mut prev = spec.input_shape[0];
            for &c in &widths {
                add(prev * 9, c);
                prev = c;
            }
            add(prev, spec.num_classes);
        }
    }
    total
}
