use super::snapshot::WeightSnapshot;
use super::spec::{ArchKind, ArchSpec};
use crate::data::LabeledBatch;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{central_difference, Graph, Tensor, Var};

/// Shape and role of one parameter tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub prunable: bool,
    pub fan_in: usize,
}

#[derive(Clone, Debug)]
enum Layer {
    Linear {
        name: String,
        w: usize,
        b: usize,
        skip: bool,
    },
    Conv {
        name: String,
        w: usize,
        b: usize,
        skip: bool,
        pool_before: bool,
    },
    GlobalPool,
}

/// A forward-evaluable network built from an [`ArchSpec`].
#[derive(Clone, Debug)]
pub struct Model {
    spec: ArchSpec,
    params: Vec<ParamInfo>,
    layers: Vec<Layer>,
    arch_hash: String,
}

/// Loss, correct-prediction count and per-parameter gradients for one batch.
#[derive(Clone, Debug)]
pub struct BatchGrad<T> {
    pub loss: f64,
    pub correct: usize,
    pub grads: Vec<Vec<T>>,
}

impl Model {
    pub fn build(spec: &ArchSpec) -> Result<Self> {
        spec.validate()?;
        let widths = spec.effective_widths();
        let skips = spec.skip_layers();
        let mut params = Vec::new();
        let mut layers = Vec::new();
        let mut push = |name: String, shape: Vec<usize>, fan_in: usize| {
            let out = shape[0];
            let bias_len = if shape.len() == 2 { shape[1] } else { out };
            params.push(ParamInfo {
                name: format!("{name}.weight"),
                shape,
                prunable: true,
                fan_in,
            });
            params.push(ParamInfo {
                name: format!("{name}.bias"),
                shape: vec![bias_len],
                prunable: false,
                fan_in,
            });
            (params.len() - 2, params.len() - 1)
        };
        match spec.kind {
            ArchKind::Fc => {
                let mut prev = spec.input_len();
                for (i, &w) in widths.iter().enumerate() {
                    let name = format!("fc{i}");
                    let (wi, bi) = push(name.clone(), vec![prev, w], prev);
                    layers.push(Layer::Linear {
                        name,
                        w: wi,
                        b: bi,
                        skip: skips.contains(&i),
                    });
                    prev = w;
                }
                let (wi, bi) = push("head".into(), vec![prev, spec.num_classes], prev);
                layers.push(Layer::Linear {
                    name: "head".into(),
                    w: wi,
                    b: bi,
                    skip: false,
                });
            }
            ArchKind::Conv => {
                let down = spec.downsample_before();
                let mut prev = spec.input_shape[0];
                for (i, &c) in widths.iter().enumerate() {
                    let name = format!("conv{i}");
                    let (wi, bi) = push(name.clone(), vec![c, prev, 3, 3], prev * 9);
                    layers.push(Layer::Conv {
                        name,
                        w: wi,
                        b: bi,
                        skip: skips.contains(&i),
                        pool_before: down[i],
                    });
                    prev = c;
                }
                layers.push(Layer::GlobalPool);
                let (wi, bi) = push("head".into(), vec![prev, spec.num_classes], prev);
                layers.push(Layer::Linear {
                    name: "head".into(),
                    w: wi,
                    b: bi,
                    skip: false,
                });
            }
        }
        Ok(Model {
            spec: spec.clone(),
            params,
            layers,
            arch_hash: spec.arch_hash(),
        })
    }

    pub fn spec(&self) -> &ArchSpec {
        &self.spec
    }

    pub fn params(&self) -> &[ParamInfo] {
        &self.params
    }

    pub fn arch_hash(&self) -> &str {
        &self.arch_hash
    }

    /// Number of identity skip additions in one forward pass.
    pub fn skip_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| {
                matches!(
                    l,
                    Layer::Linear { skip: true, .. } | Layer::Conv { skip: true, .. }
                )
            })
            .count()
    }

    /// Checks that a snapshot's names and shapes match this model.
    pub fn check_snapshot<T: Scalar>(&self, weights: &WeightSnapshot<T>) -> Result<()> {
        if weights.entries.len() != self.params.len() {
            return Err(Error::config(format!(
                "snapshot has {} tensors, model expects {}",
                weights.entries.len(),
                self.params.len()
            )));
        }
        for (e, p) in weights.entries.iter().zip(&self.params) {
            if e.name != p.name || e.shape != p.shape {
                return Err(Error::config(format!(
                    "snapshot tensor {} {:?} does not match model tensor {} {:?}",
                    e.name, e.shape, p.name, p.shape
                )));
            }
        }
        Ok(())
    }

    /// Records the forward pass and returns the logits node.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, params: &[Var], input: Var) -> Result<Var> {
        let batch = g.value(input).shape()[0];
        let mut shape = vec![batch];
        match self.spec.kind {
            ArchKind::Fc => shape.push(self.spec.input_len()),
            ArchKind::Conv => shape.extend_from_slice(&self.spec.input_shape),
        }
        let mut h = g.reshape(input, shape).map_err(|e| e.at("input"))?;
        for layer in &self.layers {
            h = match layer {
                Layer::Linear { name, w, b, skip } => {
                    let step = |g: &mut Graph<T>| -> Result<Var> {
                        let z = g.matmul(h, params[*w])?;
                        let mut z = g.add_bias(z, params[*b])?;
                        if name == "head" {
                            return Ok(z);
                        }
                        if *skip {
                            z = g.add(z, h)?;
                        }
                        g.relu(z)
                    };
                    step(g).map_err(|e| e.at(name))?
                }
                Layer::Conv {
                    name,
                    w,
                    b,
                    skip,
                    pool_before,
                } => {
                    let step = |g: &mut Graph<T>| -> Result<Var> {
                        let x = if *pool_before { g.avg_pool(h, 2)? } else { h };
                        let z = g.conv2d(x, params[*w], 1, 1)?;
                        let mut z = g.add_bias(z, params[*b])?;
                        if *skip {
                            z = g.add(z, x)?;
                        }
                        g.relu(z)
                    };
                    step(g).map_err(|e| e.at(name))?
                }
                Layer::GlobalPool => {
                    let side = g.value(h).shape()[2];
                    let p = g.avg_pool(h, side).map_err(|e| e.at("pool"))?;
                    g.flatten(p)?
                }
            };
        }
        Ok(h)
    }

    fn record<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        weights: &WeightSnapshot<T>,
        batch: &LabeledBatch,
        trainable: bool,
    ) -> Result<(Vec<Var>, Var, usize)> {
        self.check_snapshot(weights)?;
        if batch.is_empty() {
            return Err(Error::arg("empty batch"));
        }
        if batch.sample_len() != self.spec.input_len() {
            return Err(Error::config(format!(
                "batch samples have {} features, model expects {}",
                batch.sample_len(),
                self.spec.input_len()
            )));
        }
        let params: Vec<Var> = weights
            .entries
            .iter()
            .map(|e| {
                let t = Tensor::new(e.shape.clone(), e.values.clone()).expect("validated shape");
                if trainable {
                    g.param(t)
                } else {
                    g.leaf(t)
                }
            })
            .collect();
        let feats: Vec<T> = batch
            .features()
            .iter()
            .map(|&v| T::narrow(v as f64))
            .collect();
        let input = g.leaf(Tensor::new(vec![batch.len(), batch.sample_len()], feats)?);
        let logits = self.forward(g, &params, input)?;
        let correct = count_correct(g.value(logits), batch.labels());
        let loss = g
            .softmax_cross_entropy(logits, batch.labels())
            .map_err(|e| e.at("loss"))?;
        Ok((params, loss, correct))
    }

    /// Mean loss, correct count and gradients for every parameter tensor.
    pub fn loss_and_grad<T: Scalar>(
        &self,
        weights: &WeightSnapshot<T>,
        batch: &LabeledBatch,
    ) -> Result<BatchGrad<T>> {
        let mut g = Graph::new();
        let (params, loss, correct) = self.record(&mut g, weights, batch, true)?;
        let loss_val = g.value(loss).data()[0].widen();
        let mut gs = g.backward(loss)?;
        let grads = params
            .iter()
            .map(|&p| gs.take(p).expect("parameter gradient").into_data())
            .collect();
        Ok(BatchGrad {
            loss: loss_val,
            correct,
            grads,
        })
    }
}

fn count_correct<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> usize {
    let c = logits.shape()[1];
    logits
        .data()
        .chunks(c)
        .zip(labels)
        .filter(|(row, &l)| argmax(row) == l)
        .count()
}

/// First index of the maximum; ties resolve to the lower class index.
fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Mean cross-entropy and accuracy of `weights` on `batch`. Never mutates weights.
pub fn evaluate<T: Scalar>(
    model: &Model,
    weights: &WeightSnapshot<T>,
    batch: &LabeledBatch,
) -> Result<(f64, f64)> {
    let mut g = Graph::new();
    let (_, loss, correct) = model.record(&mut g, weights, batch, false)?;
    Ok((
        g.value(loss).data()[0].widen(),
        correct as f64 / batch.len() as f64,
    ))
}

/// Central-difference gradient estimate for every parameter; a test oracle for
/// [`Model::loss_and_grad`].
pub fn finite_diff_grad<T: Scalar>(
    model: &Model,
    weights: &WeightSnapshot<T>,
    batch: &LabeledBatch,
    step: f64,
) -> Result<Vec<Vec<f64>>> {
    model.check_snapshot(weights)?;
    let flat = weights.flatten();
    let all = central_difference(
        |x: &[T]| {
            let w = weights.with_flat(x)?;
            Ok(evaluate(model, &w, batch)?.0)
        },
        &flat,
        step,
    )?;
    let mut out = Vec::with_capacity(weights.entries.len());
    let mut off = 0;
    for e in &weights.entries {
        out.push(all[off..off + e.len()].to_vec());
        off += e.len();
    }
    Ok(out)
}
