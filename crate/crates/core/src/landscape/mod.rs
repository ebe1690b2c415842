//! Two-dimensional loss surfaces around trained weights, on the plane spanned by
//! the top principal directions of the training trajectory.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{Dataset, LabeledBatch};
use crate::error::{Error, Result};
use crate::nn::WeightSnapshot;
use crate::scalar::Scalar;

/// Two orthonormal directions in flattened parameter space.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaDirections {
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    /// Share of trajectory variance along each direction.
    pub explained: [f64; 2],
}

fn flat<T: Scalar>(s: &WeightSnapshot<T>) -> Vec<f64> {
    s.flatten().into_iter().map(Scalar::widen).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Top two principal directions of the displacements `θ_i − θ_final` over a
/// trajectory whose last element is the final point.
///
/// Computed through the eigen-decomposition of the small Gram matrix of the
/// displacements.
pub fn pca_directions<T: Scalar>(trajectory: &[WeightSnapshot<T>]) -> Result<PcaDirections> {
    if trajectory.len() < 3 {
        return Err(Error::Degenerate(format!(
            "need at least 3 checkpoints, got {}",
            trajectory.len()
        )));
    }
    let last = trajectory.last().expect("non-empty");
    if trajectory.iter().any(|s| !s.same_layout(last)) {
        return Err(Error::config("checkpoints have different layouts"));
    }
    let end = flat(last);
    let rows: Vec<Vec<f64>> = trajectory[..trajectory.len() - 1]
        .iter()
        .map(|s| flat(s).iter().zip(&end).map(|(a, b)| a - b).collect())
        .collect();
    let n = rows.len();
    let gram = DMatrix::from_fn(n, n, |i, j| dot(&rows[i], &rows[j]));
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let total: f64 = eig.eigenvalues.iter().map(|l| l.max(0.0)).sum();
    let (l1, l2) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
    if !(total > 0.0) || l2 <= 1e-12 * l1 {
        return Err(Error::Degenerate(format!(
            "trajectory spans fewer than 2 dimensions (eigenvalues {l1:e}, {l2:e})"
        )));
    }
    let dir = |k: usize| -> Vec<f64> {
        let u = eig.eigenvectors.column(order[k]);
        let mut d = vec![0.0; end.len()];
        for (i, r) in rows.iter().enumerate() {
            for (x, v) in d.iter_mut().zip(r) {
                *x += u[i] * v;
            }
        }
        d
    };
    let mut d1 = dir(0);
    normalize(&mut d1);
    let mut d2 = dir(1);
    let c = dot(&d1, &d2);
    d2.iter_mut().zip(&d1).for_each(|(x, y)| *x -= c * y);
    if normalize(&mut d2) == 0.0 {
        return Err(Error::Degenerate("second direction vanished".into()));
    }
    Ok(PcaDirections {
        d1,
        d2,
        explained: [l1 / total, l2 / total],
    })
}

/// Coordinates of one checkpoint in the plane through `center`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProjectedPoint {
    pub alpha: f64,
    pub beta: f64,
    pub epoch: u32,
    /// Distance from the checkpoint to its projection.
    pub residual: f64,
}

pub fn project_trajectory<T: Scalar>(
    trajectory: &[WeightSnapshot<T>],
    center: &WeightSnapshot<T>,
    dirs: &PcaDirections,
) -> Result<Vec<ProjectedPoint>> {
    let c = flat(center);
    if c.len() != dirs.d1.len() {
        return Err(Error::config("directions do not match the parameter count"));
    }
    trajectory
        .iter()
        .map(|s| {
            if !s.same_layout(center) {
                return Err(Error::config("checkpoint layout differs from the center"));
            }
            let d: Vec<f64> = flat(s).iter().zip(&c).map(|(a, b)| a - b).collect();
            let alpha = dot(&d, &dirs.d1);
            let beta = dot(&d, &dirs.d2);
            let residual = d
                .iter()
                .zip(dirs.d1.iter().zip(&dirs.d2))
                .map(|(x, (u, v))| (x - alpha * u - beta * v).powi(2))
                .sum::<f64>()
                .sqrt();
            Ok(ProjectedPoint {
                alpha,
                beta,
                epoch: s.meta.epoch,
                residual,
            })
        })
        .collect()
}

/// Loss values on an `n × n` grid spanning `±span` along each direction.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LossGrid {
    pub n: usize,
    pub span: f64,
    pub coords: Vec<f64>,
    /// Row-major by alpha, then beta. Non-finite cells are kept and flagged.
    pub values: Vec<f64>,
    pub non_finite: Vec<bool>,
}

impl LossGrid {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn center(&self) -> f64 {
        let m = self.n / 2;
        self.at(m, m)
    }
}

/// Grid coordinate `i` of `n` over `[−span, span]`; the middle one is exactly 0.
fn coord(i: usize, n: usize, span: f64) -> f64 {
    let m = (n / 2) as f64;
    span * (i as f64 - m) / m
}

/// Evaluates `loss` at `center + α·d1 + β·d2` over the grid. The center cell is
/// evaluated on the unperturbed weights.
pub fn loss_grid<T: Scalar, F>(
    loss: F,
    center: &WeightSnapshot<T>,
    dirs: &PcaDirections,
    span: f64,
    n: usize,
) -> Result<LossGrid>
where
    F: Fn(&WeightSnapshot<T>) -> Result<f64> + Sync,
{
    if n < 3 || n.is_multiple_of(2) {
        return Err(Error::arg(format!(
            "grid size must be odd and at least 3, got {n}"
        )));
    }
    if !(span >= 0.0 && span.is_finite()) {
        return Err(Error::arg(format!(
            "span must be finite and >= 0, got {span}"
        )));
    }
    let c = center.flatten();
    if c.len() != dirs.d1.len() {
        return Err(Error::config("directions do not match the parameter count"));
    }
    let coords: Vec<f64> = (0..n).map(|i| coord(i, n, span)).collect();
    let values = (0..n * n)
        .into_par_iter()
        .map(|cell| {
            let (a, b) = (coords[cell / n], coords[cell % n]);
            if a == 0.0 && b == 0.0 {
                return loss(center);
            }
            let moved: Vec<T> = c
                .iter()
                .zip(dirs.d1.iter().zip(&dirs.d2))
                .map(|(w, (u, v))| T::narrow(w.widen() + a * u + b * v))
                .collect();
            match loss(&center.with_flat(&moved)?) {
                Err(Error::Numeric { .. }) => Ok(f64::NAN),
                other => other,
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let non_finite = values.iter().map(|v| !v.is_finite()).collect();
    Ok(LossGrid {
        n,
        span,
        coords,
        values,
        non_finite,
    })
}

/// A fixed evaluation subsample: the first `n` of a seeded permutation.
pub fn eval_subsample(data: &Dataset, n: usize, seed: u64) -> LabeledBatch {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
    idx.truncate(n.min(data.len()));
    idx.sort_unstable();
    data.gather(&idx)
}

pub fn write_grid_csv(path: &Path, grid: &LossGrid) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    w.write_record(["alpha", "beta", "loss", "non_finite"])
        .map_err(|e| Error::io(path, e.into()))?;
    for i in 0..grid.n {
        for j in 0..grid.n {
            let k = i * grid.n + j;
            w.write_record([
                grid.coords[i].to_string(),
                grid.coords[j].to_string(),
                grid.values[k].to_string(),
                grid.non_finite[k].to_string(),
            ])
            .map_err(|e| Error::io(path, e.into()))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_trajectory_csv(path: &Path, points: &[ProjectedPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    for p in points {
        w.serialize(p).map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes the two directions as plain text, one value per line per file.
pub fn write_directions(dir: &Path, dirs: &PcaDirections) -> Result<()> {
    for (name, d) in [("d1.txt", &dirs.d1), ("d2.txt", &dirs.d2)] {
        let path = dir.join(name);
        let mut f =
            std::io::BufWriter::new(std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?);
        for v in d {
            writeln!(f, "{v:e}").map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}
