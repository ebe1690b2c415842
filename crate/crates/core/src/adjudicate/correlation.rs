use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::WeightSnapshot;
use crate::prune::Mask;
use crate::scalar::Scalar;

/// Default half-width of the band around `p` inside which overlap counts as weak.
pub const WEAK_BAND: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Correlation {
    Positive,
    Weak,
    Negative,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerOverlap {
    pub name: String,
    /// Weights ranked in this layer (those kept by the mask, if any).
    pub ranked: usize,
    pub top: usize,
    pub shared: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub p: f64,
    pub r_p: f64,
    pub class: Correlation,
    pub layers: Vec<LayerOverlap>,
}

/// Indices of the `k` largest magnitudes; ties keep the lower index.
fn top_k<T: Scalar>(values: &[T], candidates: &[usize], k: usize) -> Vec<usize> {
    let mut idx = candidates.to_vec();
    idx.sort_by(|&a, &b| {
        values[b]
            .abs()
            .widen()
            .total_cmp(&values[a].abs().widen())
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// Overlap of the per-layer top-`p` magnitude sets of two snapshots.
///
/// Each prunable layer contributes its `⌈p·N_l⌉` largest weights, `N_l` counting only
/// weights kept by `mask` when one is given. `R_p` is the shared count over the
/// total top-set size, so it lies in `[0, 1]` and equals 1 for identical inputs.
pub fn correlation_indicator<T: Scalar>(
    theta: &WeightSnapshot<T>,
    theta_prime: &WeightSnapshot<T>,
    p: f64,
    mask: Option<&Mask>,
    band: f64,
) -> Result<CorrelationReport> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::arg(format!("p must lie in (0, 1], got {p}")));
    }
    if !(band >= 0.0) {
        return Err(Error::arg(format!("band must be >= 0, got {band}")));
    }
    if !theta.same_layout(theta_prime) {
        return Err(Error::config("snapshots have different layouts"));
    }
    if let Some(m) = mask {
        m.check_aligned(theta)?;
        if !m.satisfied_by(theta) || !m.satisfied_by(theta_prime) {
            return Err(Error::arg(
                "a snapshot has nonzero weights where the mask prunes",
            ));
        }
    }
    let mut layers = Vec::new();
    for (i, (a, b)) in theta.prunable().zip(theta_prime.prunable()).enumerate() {
        let cand: Vec<usize> = match mask {
            Some(m) => m.layers[i]
                .keep
                .iter()
                .enumerate()
                .filter(|(_, &k)| k)
                .map(|(j, _)| j)
                .collect(),
            None => (0..a.values.len()).collect(),
        };
        let n = cand.len();
        let k = ((p * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n);
        let ta = top_k(&a.values, &cand, k);
        let tb = top_k(&b.values, &cand, k);
        let (mut x, mut y, mut shared) = (0, 0, 0);
        while x < ta.len() && y < tb.len() {
            match ta[x].cmp(&tb[y]) {
                std::cmp::Ordering::Less => x += 1,
                std::cmp::Ordering::Greater => y += 1,
                std::cmp::Ordering::Equal => {
                    shared += 1;
                    x += 1;
                    y += 1;
                }
            }
        }
        layers.push(LayerOverlap {
            name: a.name.clone(),
            ranked: n,
            top: k,
            shared,
        });
    }
    let top: usize = layers.iter().map(|l| l.top).sum();
    if top == 0 {
        return Err(Error::Degenerate("no weights to rank".into()));
    }
    let r_p = layers.iter().map(|l| l.shared).sum::<usize>() as f64 / top as f64;
    let class = if (r_p - p).abs() <= band {
        Correlation::Weak
    } else if r_p > p {
        Correlation::Positive
    } else {
        Correlation::Negative
    };
    Ok(CorrelationReport {
        p,
        r_p,
        class,
        layers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerEntry, SnapshotMeta};

    fn snap(v: Vec<f32>) -> WeightSnapshot<f32> {
        let n = v.len();
        WeightSnapshot::new(
            vec![LayerEntry {
                name: "w".into(),
                shape: vec![1, n],
                values: v,
            }],
            SnapshotMeta {
                epoch: 0,
                seed: 0,
                arch_hash: "h".into(),
            },
        )
        .unwrap()
    }

    #[test]
    fn identical_snapshots_give_one() {
        let s = snap(vec![0.3, -0.1, 0.2, 0.9, -0.5]);
        for p in [0.1, 0.4, 0.5, 1.0] {
            assert_eq!(
                correlation_indicator(&s, &s, p, None, WEAK_BAND)
                    .unwrap()
                    .r_p,
                1.0
            );
        }
    }

    #[test]
    fn reversed_magnitudes_are_negative() {
        let a = snap((1..=10).map(|x| x as f32).collect());
        let b = snap((1..=10).rev().map(|x| x as f32).collect());
        let r = correlation_indicator(&a, &b, 0.5, None, WEAK_BAND).unwrap();
        assert_eq!(r.r_p, 0.0);
        assert_eq!(r.class, Correlation::Negative);
    }

    #[test]
    fn rejects_bad_p() {
        let s = snap(vec![1.0]);
        assert!(correlation_indicator(&s, &s, 0.0, None, WEAK_BAND).is_err());
        assert!(correlation_indicator(&s, &s, 1.5, None, WEAK_BAND).is_err());
    }
}
