use super::kernels::{col2im_t_acc, gemm_nt_acc, im2col_t, narrow_all, transpose, ConvGeom};
use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
    },
    AddBias {
        x: Var,
        b: Var,
    },
    Conv2d {
        x: Var,
        w: Var,
        geom: ConvGeom,
    },
    Relu {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Sum {
        x: Var,
    },
    AvgPool {
        x: Var,
        k: usize,
    },
    Reshape {
        x: Var,
    },
    SoftmaxCe {
        logits: Var,
        probs: Vec<f64>,
        labels: Vec<usize>,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op,
    needs_grad: bool,
}

/// Append-only tape of tensor operations.
///
/// Nodes are only ever appended, so node order is a valid topological order and
/// backward simply walks the tape in reverse.
#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    backward_at: Option<usize>,
}

/// Gradients for every `requires_grad` leaf of a graph.
#[derive(Clone, Debug)]
pub struct GradientSet<T> {
    grads: Vec<(Var, Tensor<T>)>,
}

impl<T: Scalar> GradientSet<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.iter().find(|(k, _)| *k == v).map(|(_, t)| t)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        let pos = self.grads.iter().position(|(k, _)| *k == v)?;
        Some(self.grads.swap_remove(pos).1)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            backward_at: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        let needs_grad = t.requires_grad();
        self.push(t, Op::Leaf, needs_grad)
    }

    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.leaf(t.with_grad(true))
    }

    fn push(&mut self, value: Tensor<T>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, name: &str, value: Tensor<T>, op: Op, parents: &[Var]) -> Result<Var> {
        if let Some(i) = value.first_non_finite() {
            return Err(Error::Numeric {
                location: name.to_string(),
                detail: format!("non-finite output at flat index {i}"),
            });
        }
        let needs_grad = parents.iter().any(|p| self.nodes[p.0].needs_grad);
        Ok(self.push(value, op, needs_grad))
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// `a [m,k] · b [k,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::config(format!(
                "matmul shape mismatch {sa:?} x {sb:?}"
            )));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let bt = transpose(self.value(b).data(), k, n);
        let out = crate::tensor::kernels::gemm_nt(self.value(a).data(), &bt, m, k, n);
        let t = Tensor::new(vec![m, n], out)?;
        self.record("matmul", t, Op::MatMul { a, b }, &[a, b])
    }

    /// Adds a vector along dimension 1 (features for rank 2, channels for rank 4).
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let sb = self.shape(b).to_vec();
        if sx.len() < 2 || sb.len() != 1 || sb[0] != sx[1] {
            return Err(Error::config(format!(
                "bias shape {sb:?} does not fit {sx:?}"
            )));
        }
        let inner: usize = sx[2..].iter().product();
        let c = sx[1];
        let bias = self.value(b).data().to_vec();
        let mut out = self.value(x).data().to_vec();
        for (i, v) in out.iter_mut().enumerate() {
            *v = *v + bias[(i / inner) % c];
        }
        let t = Tensor::new(sx, out)?;
        self.record("add_bias", t, Op::AddBias { x, b }, &[x, b])
    }

    /// `x [N,Cin,H,W]` convolved with `w [Cout,Cin,kh,kw]`.
    pub fn conv2d(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        if sx.len() != 4 || sw.len() != 4 || sx[1] != sw[1] || stride == 0 {
            return Err(Error::config(format!(
                "conv2d shape mismatch {sx:?} * {sw:?}"
            )));
        }
        let (n, c_in, h, wd) = (sx[0], sx[1], sx[2], sx[3]);
        let (c_out, kh, kw) = (sw[0], sw[2], sw[3]);
        if h + 2 * pad < kh || wd + 2 * pad < kw {
            return Err(Error::config("conv2d kernel larger than padded input"));
        }
        let geom = ConvGeom {
            c_in,
            h,
            w: wd,
            kh,
            kw,
            stride,
            pad,
            oh: (h + 2 * pad - kh) / stride + 1,
            ow: (wd + 2 * pad - kw) / stride + 1,
        };
        let in_sz = c_in * h * wd;
        let pos = geom.positions();
        let k = geom.patch();
        let wdata = self.value(w).data();
        let xdata = self.value(x).data();
        let mut out = Vec::with_capacity(n * c_out * pos);
        for s in 0..n {
            let col_t = im2col_t(&xdata[s * in_sz..(s + 1) * in_sz], &geom);
            let mut acc = vec![0.0f64; c_out * pos];
            gemm_nt_acc(wdata, &col_t, c_out, k, pos, &mut acc);
            out.extend(narrow_all::<T>(&acc));
        }
        let t = Tensor::new(vec![n, c_out, geom.oh, geom.ow], out)?;
        self.record("conv2d", t, Op::Conv2d { x, w, geom }, &[x, w])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let out: Vec<T> = v
            .data()
            .iter()
            .map(|&e| if e > T::zero() { e } else { T::zero() })
            .collect();
        let t = Tensor::new(v.shape().to_vec(), out)?;
        self.record("relu", t, Op::Relu { x }, &[x])
    }

    /// Elementwise sum of equal-shaped tensors.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::config(format!(
                "add shape mismatch {:?} + {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let out: Vec<T> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&p, &q)| p + q)
            .collect();
        let t = Tensor::new(self.shape(a).to_vec(), out)?;
        self.record("add", t, Op::Add { a, b }, &[a, b])
    }

    /// Elementwise product of equal-shaped tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::config("mul shape mismatch"));
        }
        let out: Vec<T> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&p, &q)| p * q)
            .collect();
        let t = Tensor::new(self.shape(a).to_vec(), out)?;
        self.record("mul", t, Op::Mul { a, b }, &[a, b])
    }

    /// Sum of all elements into a scalar.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s: f64 = self.value(x).data().iter().map(|v| v.widen()).sum();
        self.record("sum", Tensor::scalar(T::narrow(s)), Op::Sum { x }, &[x])
    }

    /// Non-overlapping `k×k` average pooling on `[N,C,H,W]`.
    pub fn avg_pool(&mut self, x: Var, k: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 || k == 0 || !s[2].is_multiple_of(k) || !s[3].is_multiple_of(k) {
            return Err(Error::config(format!("avg_pool({k}) does not tile {s:?}")));
        }
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        let (oh, ow) = (h / k, w / k);
        let inv = 1.0 / (k * k) as f64;
        let d = self.value(x).data();
        let mut out = Vec::with_capacity(n * c * oh * ow);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0f64;
                    for dy in 0..k {
                        for dx in 0..k {
                            acc += d[base + (oy * k + dy) * w + ox * k + dx].widen();
                        }
                    }
                    out.push(T::narrow(acc * inv));
                }
            }
        }
        let t = Tensor::new(vec![n, c, oh, ow], out)?;
        self.record("avg_pool", t, Op::AvgPool { x, k }, &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?.with_grad(false);
        self.record("reshape", t, Op::Reshape { x }, &[x])
    }

    /// Flatten everything after the leading batch dimension.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let n = s.first().copied().unwrap_or(1);
        let rest = s.iter().skip(1).product();
        self.reshape(x, vec![n, rest])
    }

    /// Mean softmax cross-entropy of `logits [B,C]` against class indices.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let s = self.shape(logits).to_vec();
        if s.len() != 2 || s[0] != labels.len() || s[0] == 0 {
            return Err(Error::config(format!(
                "cross-entropy needs [B,C] logits with B = {} labels, got {s:?}",
                labels.len()
            )));
        }
        let (b, c) = (s[0], s[1]);
        if let Some(bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::config(format!(
                "label {bad} out of range for {c} classes"
            )));
        }
        let d = self.value(logits).data();
        let mut probs = vec![0.0f64; b * c];
        let mut total = 0.0f64;
        for i in 0..b {
            let row = &d[i * c..(i + 1) * c];
            let max = row
                .iter()
                .map(|v| v.widen())
                .fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0f64;
            for (j, v) in row.iter().enumerate() {
                let e = (v.widen() - max).exp();
                probs[i * c + j] = e;
                z += e;
            }
            for p in &mut probs[i * c..(i + 1) * c] {
                *p /= z;
            }
            total += z.ln() + max - row[labels[i]].widen();
        }
        let loss = total / b as f64;
        let op = Op::SoftmaxCe {
            logits,
            probs,
            labels: labels.to_vec(),
        };
        self.record(
            "cross_entropy",
            Tensor::scalar(T::narrow(loss)),
            op,
            &[logits],
        )
    }

    /// Reverse-mode sweep from a scalar node.
    pub fn backward(&mut self, loss: Var) -> Result<GradientSet<T>> {
        if self.backward_at == Some(self.nodes.len()) {
            return Err(Error::State(
                "backward already ran on this tape; record a new forward pass first".into(),
            ));
        }
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::arg(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {
                    grads[id] = Some(g);
                }
                Op::MatMul { a, b } => {
                    let sa = self.shape(*a);
                    let sb = self.shape(*b);
                    let (m, k, n) = (sa[0], sa[1], sb[1]);
                    if self.nodes[a.0].needs_grad {
                        // dA = dC · Bᵀ
                        let bw = widen(self.value(*b).data());
                        let mut da = vec![0.0; m * k];
                        gemm_nt_acc(&g, &bw, m, n, k, &mut da);
                        accumulate(&mut grads, *a, da);
                    }
                    if self.nodes[b.0].needs_grad {
                        // dB = Aᵀ · dC
                        let at = transpose(&widen(self.value(*a).data()), m, k);
                        let gt = transpose(&g, m, n);
                        let mut db = vec![0.0; k * n];
                        gemm_nt_acc(&at, &gt, k, m, n, &mut db);
                        accumulate(&mut grads, *b, db);
                    }
                }
                Op::AddBias { x, b } => {
                    let sx = self.shape(*x);
                    let c = sx[1];
                    let inner: usize = sx[2..].iter().product();
                    if self.nodes[b.0].needs_grad {
                        let mut db = vec![0.0; c];
                        for (i, v) in g.iter().enumerate() {
                            db[(i / inner) % c] += v;
                        }
                        accumulate(&mut grads, *b, db);
                    }
                    if self.nodes[x.0].needs_grad {
                        accumulate(&mut grads, *x, g);
                    }
                }
                Op::Conv2d { x, w, geom } => {
                    let n = self.shape(*x)[0];
                    let c_out = self.shape(*w)[0];
                    let pos = geom.positions();
                    let k = geom.patch();
                    let in_sz = geom.c_in * geom.h * geom.w;
                    let xd = self.value(*x).data();
                    let wd = widen(self.value(*w).data());
                    let wt = transpose(&wd, c_out, k);
                    let want_w = self.nodes[w.0].needs_grad;
                    let want_x = self.nodes[x.0].needs_grad;
                    let mut dw = vec![0.0; c_out * k];
                    let mut dx = vec![0.0; n * in_sz];
                    for s in 0..n {
                        let gs = &g[s * c_out * pos..(s + 1) * c_out * pos];
                        if want_w {
                            let col_t = widen(&im2col_t(&xd[s * in_sz..(s + 1) * in_sz], geom));
                            let col = transpose(&col_t, pos, k);
                            gemm_nt_acc(gs, &col, c_out, pos, k, &mut dw);
                        }
                        if want_x {
                            let gst = transpose(gs, c_out, pos);
                            let mut dcol_t = vec![0.0; pos * k];
                            gemm_nt_acc(&gst, &wt, pos, c_out, k, &mut dcol_t);
                            col2im_t_acc(&dcol_t, geom, &mut dx[s * in_sz..(s + 1) * in_sz]);
                        }
                    }
                    if want_w {
                        accumulate(&mut grads, *w, dw);
                    }
                    if want_x {
                        accumulate(&mut grads, *x, dx);
                    }
                }
                Op::Relu { x } => {
                    let xv = self.value(*x).data();
                    let dx = g
                        .iter()
                        .zip(xv)
                        .map(|(&gi, &xi)| if xi > T::zero() { gi } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *x, dx);
                }
                Op::Add { a, b } => {
                    if self.nodes[a.0].needs_grad {
                        accumulate(&mut grads, *a, g.clone());
                    }
                    if self.nodes[b.0].needs_grad {
                        accumulate(&mut grads, *b, g);
                    }
                }
                Op::Mul { a, b } => {
                    if self.nodes[a.0].needs_grad {
                        let bv = self.value(*b).data();
                        let da = g.iter().zip(bv).map(|(&gi, &q)| gi * q.widen()).collect();
                        accumulate(&mut grads, *a, da);
                    }
                    if self.nodes[b.0].needs_grad {
                        let av = self.value(*a).data();
                        let db = g.iter().zip(av).map(|(&gi, &p)| gi * p.widen()).collect();
                        accumulate(&mut grads, *b, db);
                    }
                }
                Op::Sum { x } => {
                    let n = self.value(*x).len();
                    accumulate(&mut grads, *x, vec![g[0]; n]);
                }
                Op::AvgPool { x, k } => {
                    let s = self.shape(*x);
                    let (h, w) = (s[2], s[3]);
                    let (oh, ow) = (h / k, w / k);
                    let inv = 1.0 / (k * k) as f64;
                    let mut dx = vec![0.0; self.value(*x).len()];
                    for plane in 0..s[0] * s[1] {
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let gv = g[(plane * oh + oy) * ow + ox] * inv;
                                for dy in 0..*k {
                                    for dxx in 0..*k {
                                        dx[plane * h * w + (oy * k + dy) * w + ox * k + dxx] += gv;
                                    }
                                }
                            }
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Reshape { x } => accumulate(&mut grads, *x, g),
                Op::SoftmaxCe {
                    logits,
                    probs,
                    labels,
                } => {
                    let b = labels.len();
                    let c = probs.len() / b;
                    let scale = g[0] / b as f64;
                    let mut dl = probs.clone();
                    for (i, &l) in labels.iter().enumerate() {
                        dl[i * c + l] -= 1.0;
                    }
                    for v in &mut dl {
                        *v *= scale;
                    }
                    accumulate(&mut grads, *logits, dl);
                }
            }
        }

        let mut out = Vec::new();
        for (id, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) && node.value.requires_grad() {
                let shape = node.value.shape().to_vec();
                let t = match grads.get_mut(id).and_then(Option::take) {
                    Some(g) => Tensor::new(shape, narrow_all(&g))?,
                    None => Tensor::zeros(shape),
                };
                out.push((Var(id), t));
            }
        }
        self.backward_at = Some(self.nodes.len());
        Ok(GradientSet { grads: out })
    }
}

fn widen<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.widen()).collect()
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
    match &mut grads[v.0] {
        Some(acc) => {
            for (a, b) in acc.iter_mut().zip(g) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

/// Central-difference gradient of `f` at `x`.
///
/// The divisor is the realised perturbation `(x+h) - (x-h)` in storage precision,
/// which keeps the estimate honest when `x ± h` is not exactly representable.
pub fn central_difference<T, F>(mut f: F, x: &[T], step: f64) -> Result<Vec<f64>>
where
    T: Scalar,
    F: FnMut(&[T]) -> Result<f64>,
{
    if !(step > 0.0) {
        return Err(Error::arg(format!(
            "finite-difference step must be > 0, got {step}"
        )));
    }
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        let up = T::narrow(orig.widen() + step);
        let down = T::narrow(orig.widen() - step);
        probe[i] = up;
        let fp = f(&probe)?;
        probe[i] = down;
        let fm = f(&probe)?;
        probe[i] = orig;
        out.push((fp - fm) / (up.widen() - down.widen()));
    }
    Ok(out)
}
