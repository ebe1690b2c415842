use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::WeightSnapshot;
use crate::scalar::Scalar;

/// How a mask was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MaskMethod {
    Omp,
    /// IMP after `k` pruning rounds; `Imp(0)` is the dense starting mask.
    Imp(u32),
}

impl fmt::Display for MaskMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaskMethod::Omp => f.write_str("omp"),
            MaskMethod::Imp(k) => write!(f, "imp-{k}"),
        }
    }
}

impl FromStr for MaskMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "omp" {
            return Ok(MaskMethod::Omp);
        }
        s.strip_prefix("imp-")
            .and_then(|k| k.parse().ok())
            .map(MaskMethod::Imp)
            .ok_or_else(|| Error::arg(format!("unknown mask method tag {s:?}")))
    }
}

impl TryFrom<String> for MaskMethod {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MaskMethod> for String {
    fn from(m: MaskMethod) -> String {
        m.to_string()
    }
}

/// Keep flags for one prunable tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskLayer {
    pub name: String,
    pub shape: Vec<usize>,
    pub keep: Vec<bool>,
}

impl MaskLayer {
    pub fn kept(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskMeta {
    pub sparsity: f64,
    pub method: MaskMethod,
    pub arch_hash: String,
}

/// Binary keep/prune indicator over every prunable tensor of a snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    pub layers: Vec<MaskLayer>,
    pub meta: MaskMeta,
}

impl Mask {
    /// Assembles a mask and records its achieved sparsity.
    pub fn from_layers(layers: Vec<MaskLayer>, method: MaskMethod, arch_hash: &str) -> Self {
        let mut m = Mask {
            layers,
            meta: MaskMeta {
                sparsity: 0.0,
                method,
                arch_hash: arch_hash.to_string(),
            },
        };
        m.meta.sparsity = m.sparsity();
        m
    }

    /// All-ones mask aligned to the prunable tensors of `snapshot`.
    pub fn dense<T: Scalar>(snapshot: &WeightSnapshot<T>) -> Self {
        let layers = snapshot
            .prunable()
            .map(|e| MaskLayer {
                name: e.name.clone(),
                shape: e.shape.clone(),
                keep: vec![true; e.values.len()],
            })
            .collect();
        Mask::from_layers(layers, MaskMethod::Imp(0), &snapshot.meta.arch_hash)
    }

    pub fn total(&self) -> usize {
        self.layers.iter().map(|l| l.keep.len()).sum()
    }

    pub fn kept(&self) -> usize {
        self.layers.iter().map(MaskLayer::kept).sum()
    }

    pub fn pruned(&self) -> usize {
        self.total() - self.kept()
    }

    /// Fraction of prunable weights removed, computed from the flags.
    pub fn sparsity(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            self.pruned() as f64 / self.total() as f64
        }
    }

    /// True when every weight kept by `self` is also kept by `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.keep.len() == b.keep.len() && a.keep.iter().zip(&b.keep).all(|(&x, &y)| !x || y)
            })
    }

    /// Checks arch hash and prunable-tensor layout against a snapshot.
    pub fn check_aligned<T: Scalar>(&self, snapshot: &WeightSnapshot<T>) -> Result<()> {
        if self.meta.arch_hash != snapshot.meta.arch_hash {
            return Err(Error::config(format!(
                "mask arch hash {} does not match snapshot arch hash {}",
                self.meta.arch_hash, snapshot.meta.arch_hash
            )));
        }
        let prunable: Vec<_> = snapshot.prunable().collect();
        if prunable.len() != self.layers.len()
            || prunable.iter().zip(&self.layers).any(|(e, l)| {
                e.name != l.name || e.shape != l.shape || e.values.len() != l.keep.len()
            })
        {
            return Err(Error::config(
                "mask layers do not line up with snapshot tensors",
            ));
        }
        Ok(())
    }

    /// True when every masked-out weight of `snapshot` is exactly zero.
    pub fn satisfied_by<T: Scalar>(&self, snapshot: &WeightSnapshot<T>) -> bool {
        snapshot.prunable().zip(&self.layers).all(|(e, l)| {
            e.values
                .iter()
                .zip(&l.keep)
                .all(|(v, &k)| k || *v == T::zero())
        })
    }
}

/// `θ ⊙ m`: pruned weights become `+0.0`, everything else is left bit-identical.
pub fn apply_mask<T: Scalar>(
    snapshot: &WeightSnapshot<T>,
    mask: &Mask,
) -> Result<WeightSnapshot<T>> {
    mask.check_aligned(snapshot)?;
    let mut out = snapshot.clone();
    for (e, l) in out.prunable_mut().zip(&mask.layers) {
        for (v, &k) in e.values.iter_mut().zip(&l.keep) {
            if !k {
                *v = T::zero();
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_tags_round_trip() {
        for m in [MaskMethod::Omp, MaskMethod::Imp(0), MaskMethod::Imp(11)] {
            assert_eq!(m.to_string().parse::<MaskMethod>().unwrap(), m);
        }
        assert!("imp".parse::<MaskMethod>().is_err());
        assert_eq!(
            serde_json::to_string(&MaskMethod::Imp(3)).unwrap(),
            "\"imp-3\""
        );
    }
}
