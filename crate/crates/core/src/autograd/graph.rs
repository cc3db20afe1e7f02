use super::conv::{col2im, im2col, ConvGeometry};
use super::tensor::{matmul, Scalar, Tensor};

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Abs(Var),
    Square(Var),
    Softplus(Var),
    Mean(Var),
    Sum(Var),
    LeakyRelu(Var, T),
    Sigmoid(Var),
    SoftmaxChannels(Var),
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeometry,
        out_channels: usize,
    },
    InstanceNorm {
        x: Var,
        inv_std: Vec<T>,
    },
    Upsample2x(Var),
    MaxPool2 {
        x: Var,
        argmax: Vec<usize>,
    },
    Concat(Vec<Var>),
    DiffW(Var),
    DiffH(Var),
    Crop(Var),
    Gram(Var),
    NllProbs {
        probs: Var,
        labels: Vec<usize>,
        eps: T,
    },
    SpectralNorm {
        w: Var,
        u: Vec<T>,
        v: Vec<T>,
        sigma: T,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the loss with respect to `v`, if it is reachable.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

/// Tape of tensor operations supporting reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so a reverse sweep over the tape is
/// a valid topological order for backpropagation.
pub struct Graph<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Constant input; no gradient is accumulated for it.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Differentiable leaf (a parameter or a probed input).
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Copy of `v`'s value as a new constant, cutting the gradient path.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.constant(t)
    }

    fn unary(&mut self, x: Var, value: Tensor<T>, op: Op<T>) -> Var {
        let rg = self.rg(x);
        self.push(value, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        self.push(v, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        self.push(v, Op::Sub(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        self.push(v, Op::Mul(a, b), rg)
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let v = self.value(x).map(|a| a * c);
        self.unary(x, v, Op::Scale(x, c))
    }

    pub fn add_scalar(&mut self, x: Var, c: T) -> Var {
        let v = self.value(x).map(|a| a + c);
        self.unary(x, v, Op::AddScalar(x))
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|a| a.abs());
        self.unary(x, v, Op::Abs(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|a| a * a);
        self.unary(x, v, Op::Square(x))
    }

    /// `ln(1 + e^x)`, computed stably.
    pub fn softplus(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|a| a.max(T::zero()) + (-a.abs()).exp().ln_1p());
        self.unary(x, v, Op::Softplus(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let n = T::from_usize(t.len()).unwrap();
        let s: T = t.data().iter().copied().sum();
        self.unary(x, Tensor::scalar(s / n), Op::Mean(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: T = self.value(x).data().iter().copied().sum();
        self.unary(x, Tensor::scalar(s), Op::Sum(x))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: T) -> Var {
        let v = self
            .value(x)
            .map(|a| if a > T::zero() { a } else { a * slope });
        self.unary(x, v, Op::LeakyRelu(x, slope))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.leaky_relu(x, T::zero())
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|a| T::one() / (T::one() + (-a).exp()));
        self.unary(x, v, Op::Sigmoid(x))
    }

    /// Softmax across the channel axis of an NCHW tensor.
    pub fn softmax_channels(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (n, c, h, w) = t.dims4();
        let hw = h * w;
        let src = t.data();
        let mut out = vec![T::zero(); src.len()];
        for b in 0..n {
            let base = b * c * hw;
            for p in 0..hw {
                let mut mx = T::neg_infinity();
                for ch in 0..c {
                    mx = mx.max(src[base + ch * hw + p]);
                }
                let mut z = T::zero();
                for ch in 0..c {
                    let e = (src[base + ch * hw + p] - mx).exp();
                    out[base + ch * hw + p] = e;
                    z += e;
                }
                for ch in 0..c {
                    out[base + ch * hw + p] = out[base + ch * hw + p] / z;
                }
            }
        }
        let v = Tensor::new(t.shape().to_vec(), out);
        self.unary(x, v, Op::SoftmaxChannels(x))
    }

    /// 2-D convolution with zero padding; `w` is `[out, in, k, k]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, padding: usize) -> Var {
        let (n, c, h, wd) = self.value(x).dims4();
        let (oc, ic, kh, kw) = self.value(w).dims4();
        assert_eq!(ic, c, "conv2d: weight expects {ic} input channels, got {c}");
        assert_eq!(kh, kw, "conv2d: square kernels only");
        let geom = ConvGeometry {
            channels: c,
            height: h,
            width: wd,
            kernel: kh,
            stride,
            padding,
        };
        assert!(h + 2 * padding >= kh && wd + 2 * padding >= kw, "conv2d: input smaller than kernel");
        let (ho, wo) = (geom.out_height(), geom.out_width());
        let p = ho * wo;
        let rows = geom.rows();
        let mut out = vec![T::zero(); n * oc * p];
        let mut cols = if geom.is_pointwise() {
            Vec::new()
        } else {
            vec![T::zero(); rows * p]
        };
        {
            let xv = self.value(x);
            let wv = self.value(w).data();
            for s in 0..n {
                let sample = xv.sample(s);
                let col: &[T] = if geom.is_pointwise() {
                    sample
                } else {
                    im2col(sample, &geom, &mut cols);
                    &cols
                };
                matmul(oc, rows, p, wv, false, col, false, &mut out[s * oc * p..(s + 1) * oc * p], false);
            }
            if let Some(b) = b {
                let bv = self.value(b).data();
                assert_eq!(bv.len(), oc, "conv2d: bias length");
                for s in 0..n {
                    for o in 0..oc {
                        let bias = bv[o];
                        for y in &mut out[(s * oc + o) * p..(s * oc + o + 1) * p] {
                            *y += bias;
                        }
                    }
                }
            }
        }
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        self.push(
            Tensor::new([n, oc, ho, wo], out),
            Op::Conv2d {
                x,
                w,
                b,
                geom,
                out_channels: oc,
            },
            rg,
        )
    }

    /// Per-sample, per-channel normalization to zero mean and unit variance.
    pub fn instance_norm(&mut self, x: Var, eps: T) -> Var {
        let t = self.value(x);
        let (n, c, h, w) = t.dims4();
        let hw = h * w;
        let cnt = T::from_usize(hw).unwrap();
        let mut out = vec![T::zero(); t.len()];
        let mut inv_std = Vec::with_capacity(n * c);
        for (i, plane) in t.data().chunks(hw).enumerate() {
            let mean = plane.iter().copied().sum::<T>() / cnt;
            let var = plane.iter().map(|&a| (a - mean) * (a - mean)).sum::<T>() / cnt;
            let is = T::one() / (var + eps).sqrt();
            inv_std.push(is);
            for (o, &a) in out[i * hw..(i + 1) * hw].iter_mut().zip(plane) {
                *o = (a - mean) * is;
            }
        }
        let v = Tensor::new([n, c, h, w], out);
        self.unary(x, v, Op::InstanceNorm { x, inv_std })
    }

    /// Nearest-neighbour upsampling by a factor of two.
    pub fn upsample2x(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (n, c, h, w) = t.dims4();
        let (h2, w2) = (2 * h, 2 * w);
        let mut out = vec![T::zero(); n * c * h2 * w2];
        for (plane, dst) in t.data().chunks(h * w).zip(out.chunks_mut(h2 * w2)) {
            for i in 0..h2 {
                let src = &plane[(i / 2) * w..(i / 2 + 1) * w];
                for j in 0..w2 {
                    dst[i * w2 + j] = src[j / 2];
                }
            }
        }
        let v = Tensor::new([n, c, h2, w2], out);
        self.unary(x, v, Op::Upsample2x(x))
    }

    /// 2×2 max pooling with stride two.
    pub fn max_pool2(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (n, c, h, w) = t.dims4();
        let (ho, wo) = (h / 2, w / 2);
        let mut out = vec![T::zero(); n * c * ho * wo];
        let mut argmax = vec![0usize; out.len()];
        for (pi, plane) in t.data().chunks(h * w).enumerate() {
            for i in 0..ho {
                for j in 0..wo {
                    let mut best = (2 * i) * w + 2 * j;
                    for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = (2 * i + di) * w + 2 * j + dj;
                        if plane[idx] > plane[best] {
                            best = idx;
                        }
                    }
                    let o = pi * ho * wo + i * wo + j;
                    out[o] = plane[best];
                    argmax[o] = pi * h * w + best;
                }
            }
        }
        let v = Tensor::new([n, c, ho, wo], out);
        self.unary(x, v, Op::MaxPool2 { x, argmax })
    }

    /// Concatenate along the channel axis.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let tensors: Vec<&Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let v = Tensor::cat_channels(&tensors);
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(v, Op::Concat(parts.to_vec()), rg)
    }

    /// Horizontal forward difference `x[.., w+1] - x[.., w]`.
    pub fn diff_w(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (n, c, h, w) = t.dims4();
        let mut out = Vec::with_capacity(n * c * h * (w - 1));
        for row in t.data().chunks(w) {
            for j in 0..w - 1 {
                out.push(row[j + 1] - row[j]);
            }
        }
        let v = Tensor::new([n, c, h, w - 1], out);
        self.unary(x, v, Op::DiffW(x))
    }

    /// Vertical forward difference `x[.., h+1, :] - x[.., h, :]`.
    pub fn diff_h(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (n, c, h, w) = t.dims4();
        let mut out = Vec::with_capacity(n * c * (h - 1) * w);
        for plane in t.data().chunks(h * w) {
            for i in 0..h - 1 {
                for j in 0..w {
                    out.push(plane[(i + 1) * w + j] - plane[i * w + j]);
                }
            }
        }
        let v = Tensor::new([n, c, h - 1, w], out);
        self.unary(x, v, Op::DiffH(x))
    }

    /// Keep the top-left `h × w` window of every plane.
    pub fn crop(&mut self, x: Var, h: usize, w: usize) -> Var {
        let t = self.value(x);
        let (n, c, th, tw) = t.dims4();
        assert!(h <= th && w <= tw, "crop larger than input");
        let mut out = Vec::with_capacity(n * c * h * w);
        for plane in t.data().chunks(th * tw) {
            for i in 0..h {
                out.extend_from_slice(&plane[i * tw..i * tw + w]);
            }
        }
        let v = Tensor::new([n, c, h, w], out);
        self.unary(x, v, Op::Crop(x))
    }

    /// Per-sample Gram matrix `F·Fᵀ / (C·H·W)` of `C × (H·W)` flattened features.
    pub fn gram(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (n, c, h, w) = t.dims4();
        let hw = h * w;
        let norm = T::from_usize(c * hw).unwrap();
        let mut out = vec![T::zero(); n * c * c];
        for s in 0..n {
            let f = t.sample(s);
            let g = &mut out[s * c * c..(s + 1) * c * c];
            matmul(c, hw, c, f, false, f, true, g, false);
            for e in g.iter_mut() {
                *e = *e / norm;
            }
        }
        let v = Tensor::new([n, c, c], out);
        self.unary(x, v, Op::Gram(x))
    }

    /// Mean negative log-likelihood of class `labels` under per-pixel
    /// probabilities `probs` (NCHW), with probabilities floored at `eps`.
    pub fn nll_probs(&mut self, probs: Var, labels: &[usize], eps: T) -> Var {
        let t = self.value(probs);
        let (n, c, h, w) = t.dims4();
        let hw = h * w;
        assert_eq!(labels.len(), n * hw, "nll_probs: label count");
        let mut total = T::zero();
        for s in 0..n {
            for p in 0..hw {
                let l = labels[s * hw + p];
                assert!(l < c, "nll_probs: label {l} out of range for {c} classes");
                let q = t.data()[(s * c + l) * hw + p].max(eps);
                total -= q.ln();
            }
        }
        let m = T::from_usize(n * hw).unwrap();
        self.unary(
            probs,
            Tensor::scalar(total / m),
            Op::NllProbs {
                probs,
                labels: labels.to_vec(),
                eps,
            },
        )
    }

    /// Divide a weight by its spectral norm, estimated with one power-iteration
    /// step from `u`. Returns the normalized weight and the refreshed `u`.
    ///
    /// The weight is viewed as a `rows × (numel / rows)` matrix, where `rows`
    /// is its leading dimension. `u` and `v` are treated as constants.
    pub fn spectral_normalize(&mut self, w: Var, u: &[T]) -> (Var, Vec<T>) {
        let t = self.value(w);
        let rows = t.shape()[0];
        let cols = t.len() / rows;
        assert_eq!(u.len(), rows, "spectral_normalize: u length");
        let wm = t.data();
        let mut v = vec![T::zero(); cols];
        matmul(cols, rows, 1, wm, true, u, false, &mut v, false);
        normalize(&mut v);
        let mut wv = vec![T::zero(); rows];
        matmul(rows, cols, 1, wm, false, &v, false, &mut wv, false);
        let sigma = wv.iter().map(|&a| a * a).sum::<T>().sqrt();
        let mut u_new = wv;
        normalize(&mut u_new);
        let sigma = sigma.max(T::lit(1e-12));
        let value = t.map(|a| a / sigma);
        let out = self.unary(
            w,
            value,
            Op::SpectralNorm {
                w,
                u: u_new.clone(),
                v,
                sigma,
            },
        );
        (out, u_new)
    }

    /// Reverse sweep from scalar `loss`.
    pub fn backward(&self, loss: Var) -> Gradients<T> {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar loss");
        let mut grads: Vec<Option<Tensor<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::new(self.value(loss).shape().to_vec(), vec![T::one()]));
        for i in (0..=loss.0).rev() {
            let Some(dy) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.backprop_node(i, &dy, &mut grads);
            if matches!(self.nodes[i].op, Op::Leaf) {
                grads[i] = Some(dy);
            }
        }
        Gradients { grads }
    }

    /// Smallest distance from any non-differentiable point (|·| at 0, ReLU
    /// hinge, max-pool ties, probability floor) over the recorded tape.
    pub fn min_kink_distance(&self) -> T {
        let mut best = T::infinity();
        for node in &self.nodes {
            match &node.op {
                Op::Abs(x) | Op::LeakyRelu(x, _) => {
                    for &a in self.value(*x).data() {
                        best = best.min(a.abs());
                    }
                }
                Op::NllProbs { probs, eps, .. } => {
                    for &a in self.value(*probs).data() {
                        best = best.min((a - *eps).abs());
                    }
                }
                Op::MaxPool2 { x, argmax } => {
                    let xv = self.value(*x).data();
                    let (_, _, h, w) = self.value(*x).dims4();
                    for &idx in argmax {
                        let plane = idx / (h * w);
                        let local = idx % (h * w);
                        let (i, j) = ((local / w) / 2 * 2, (local % w) / 2 * 2);
                        for (di, dj) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                            let k = plane * h * w + (i + di) * w + j + dj;
                            if k != idx {
                                best = best.min(xv[idx] - xv[k]);
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        best
    }

    fn acc<'a>(&self, grads: &'a mut [Option<Tensor<T>>], v: Var) -> Option<&'a mut Tensor<T>> {
        if !self.rg(v) {
            return None;
        }
        let slot = &mut grads[v.0];
        if slot.is_none() {
            *slot = Some(Tensor::zeros(self.value(v).shape().to_vec()));
        }
        slot.as_mut()
    }

    fn backprop_node(&self, i: usize, dy: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let node = &self.nodes[i];
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if let Some(g) = self.acc(grads, *a) {
                    g.add_assign(dy);
                }
                if let Some(g) = self.acc(grads, *b) {
                    g.add_assign(dy);
                }
            }
            Op::Sub(a, b) => {
                if let Some(g) = self.acc(grads, *a) {
                    g.add_assign(dy);
                }
                if let Some(g) = self.acc(grads, *b) {
                    for (o, &d) in g.data_mut().iter_mut().zip(dy.data()) {
                        *o -= d;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                if let Some(g) = self.acc(grads, *a) {
                    for ((o, &d), &bb) in g.data_mut().iter_mut().zip(dy.data()).zip(bv) {
                        *o += d * bb;
                    }
                }
                if let Some(g) = self.acc(grads, *b) {
                    for ((o, &d), &aa) in g.data_mut().iter_mut().zip(dy.data()).zip(av) {
                        *o += d * aa;
                    }
                }
            }
            Op::Scale(x, c) => {
                if let Some(g) = self.acc(grads, *x) {
                    for (o, &d) in g.data_mut().iter_mut().zip(dy.data()) {
                        *o += d * *c;
                    }
                }
            }
            Op::AddScalar(x) => {
                if let Some(g) = self.acc(grads, *x) {
                    g.add_assign(dy);
                }
            }
            Op::Abs(x) => self.elementwise(grads, *x, dy, |a, _| sign(a)),
            Op::Square(x) => self.elementwise(grads, *x, dy, |a, _| a + a),
            Op::Softplus(x) => self.elementwise(grads, *x, dy, |a, _| T::one() / (T::one() + (-a).exp())),
            Op::LeakyRelu(x, slope) => {
                let s = *slope;
                self.elementwise(grads, *x, dy, move |a, _| if a > T::zero() { T::one() } else { s })
            }
            Op::Sigmoid(x) => {
                if let Some(g) = self.acc(grads, *x) {
                    for ((o, &d), &s) in g.data_mut().iter_mut().zip(dy.data()).zip(y.data()) {
                        *o += d * s * (T::one() - s);
                    }
                }
            }
            Op::Mean(x) => {
                let n = T::from_usize(self.value(*x).len()).unwrap();
                let d = dy.item() / n;
                if let Some(g) = self.acc(grads, *x) {
                    for o in g.data_mut() {
                        *o += d;
                    }
                }
            }
            Op::Sum(x) => {
                let d = dy.item();
                if let Some(g) = self.acc(grads, *x) {
                    for o in g.data_mut() {
                        *o += d;
                    }
                }
            }
            Op::SoftmaxChannels(x) => {
                let (n, c, h, w) = y.dims4();
                let hw = h * w;
                let (yv, dv) = (y.data(), dy.data());
                if let Some(g) = self.acc(grads, *x) {
                    let gd = g.data_mut();
                    for b in 0..n {
                        let base = b * c * hw;
                        for p in 0..hw {
                            let mut dot = T::zero();
                            for ch in 0..c {
                                let k = base + ch * hw + p;
                                dot += dv[k] * yv[k];
                            }
                            for ch in 0..c {
                                let k = base + ch * hw + p;
                                gd[k] += yv[k] * (dv[k] - dot);
                            }
                        }
                    }
                }
            }
            Op::Conv2d {
                x,
                w,
                b,
                geom,
                out_channels,
            } => self.conv_backward(*x, *w, *b, geom, *out_channels, dy, grads),
            Op::InstanceNorm { x, inv_std } => {
                let (_, _, h, w) = y.dims4();
                let hw = h * w;
                let cnt = T::from_usize(hw).unwrap();
                if let Some(g) = self.acc(grads, *x) {
                    let gd = g.data_mut();
                    for (pi, &is) in inv_std.iter().enumerate() {
                        let r = pi * hw..(pi + 1) * hw;
                        let xh = &y.data()[r.clone()];
                        let d = &dy.data()[r.clone()];
                        let sum_d: T = d.iter().copied().sum();
                        let sum_dx: T = d.iter().zip(xh).map(|(&a, &b)| a * b).sum();
                        for ((o, &dd), &xx) in gd[r].iter_mut().zip(d).zip(xh) {
                            *o += is / cnt * (cnt * dd - sum_d - xx * sum_dx);
                        }
                    }
                }
            }
            Op::Upsample2x(x) => {
                let (_, _, h2, w2) = y.dims4();
                let (h, w) = (h2 / 2, w2 / 2);
                if let Some(g) = self.acc(grads, *x) {
                    for (dst, src) in g.data_mut().chunks_mut(h * w).zip(dy.data().chunks(h2 * w2)) {
                        for i in 0..h2 {
                            for j in 0..w2 {
                                dst[(i / 2) * w + j / 2] += src[i * w2 + j];
                            }
                        }
                    }
                }
            }
            Op::MaxPool2 { x, argmax } => {
                if let Some(g) = self.acc(grads, *x) {
                    let gd = g.data_mut();
                    for (&idx, &d) in argmax.iter().zip(dy.data()) {
                        gd[idx] += d;
                    }
                }
            }
            Op::Concat(parts) => {
                let (n, _, h, w) = y.dims4();
                let hw = h * w;
                let total: usize = parts.iter().map(|&p| self.value(p).dims4().1).sum();
                let mut offset = 0;
                for &p in parts {
                    let c = self.value(p).dims4().1;
                    if let Some(g) = self.acc(grads, p) {
                        let gd = g.data_mut();
                        for s in 0..n {
                            let src = &dy.data()[(s * total + offset) * hw..(s * total + offset + c) * hw];
                            for (o, &d) in gd[s * c * hw..(s + 1) * c * hw].iter_mut().zip(src) {
                                *o += d;
                            }
                        }
                    }
                    offset += c;
                }
            }
            Op::DiffW(x) => {
                let (_, _, _, w1) = y.dims4();
                let w = w1 + 1;
                if let Some(g) = self.acc(grads, *x) {
                    for (row, d) in g.data_mut().chunks_mut(w).zip(dy.data().chunks(w1)) {
                        for j in 0..w1 {
                            row[j + 1] += d[j];
                            row[j] -= d[j];
                        }
                    }
                }
            }
            Op::DiffH(x) => {
                let (_, _, h1, w) = y.dims4();
                let h = h1 + 1;
                if let Some(g) = self.acc(grads, *x) {
                    for (plane, d) in g.data_mut().chunks_mut(h * w).zip(dy.data().chunks(h1 * w)) {
                        for i in 0..h1 {
                            for j in 0..w {
                                plane[(i + 1) * w + j] += d[i * w + j];
                                plane[i * w + j] -= d[i * w + j];
                            }
                        }
                    }
                }
            }
            Op::Crop(x) => {
                let (_, _, h, w) = y.dims4();
                let (_, _, th, tw) = self.value(*x).dims4();
                if let Some(g) = self.acc(grads, *x) {
                    for (plane, d) in g.data_mut().chunks_mut(th * tw).zip(dy.data().chunks(h * w)) {
                        for i in 0..h {
                            for j in 0..w {
                                plane[i * tw + j] += d[i * w + j];
                            }
                        }
                    }
                }
            }
            Op::Gram(x) => {
                let xt = self.value(*x);
                let (n, c, h, w) = xt.dims4();
                let hw = h * w;
                let norm = T::from_usize(c * hw).unwrap();
                if let Some(g) = self.acc(grads, *x) {
                    let mut sym = vec![T::zero(); c * c];
                    for s in 0..n {
                        let dg = &dy.data()[s * c * c..(s + 1) * c * c];
                        for a in 0..c {
                            for b in 0..c {
                                sym[a * c + b] = (dg[a * c + b] + dg[b * c + a]) / norm;
                            }
                        }
                        let f = xt.sample(s);
                        let dst = &mut g.data_mut()[s * c * hw..(s + 1) * c * hw];
                        matmul(c, c, hw, &sym, false, f, false, dst, true);
                    }
                }
            }
            Op::NllProbs { probs, labels, eps } => {
                let pt = self.value(*probs);
                let (n, c, h, w) = pt.dims4();
                let hw = h * w;
                let scale = dy.item() / T::from_usize(n * hw).unwrap();
                if let Some(g) = self.acc(grads, *probs) {
                    let gd = g.data_mut();
                    for s in 0..n {
                        for p in 0..hw {
                            let k = (s * c + labels[s * hw + p]) * hw + p;
                            let q = pt.data()[k];
                            if q > *eps {
                                gd[k] -= scale / q;
                            }
                        }
                    }
                }
            }
            Op::SpectralNorm { w, u, v, sigma } => {
                // d(W/σ)/dW with σ = uᵀWv:  (g - <g, W/σ> u vᵀ) / σ
                let inner: T = dy.data().iter().zip(y.data()).map(|(&a, &b)| a * b).sum();
                let cols = v.len();
                if let Some(g) = self.acc(grads, *w) {
                    let gd = g.data_mut();
                    for (r, &ur) in u.iter().enumerate() {
                        for (cidx, &vc) in v.iter().enumerate() {
                            let k = r * cols + cidx;
                            gd[k] += (dy.data()[k] - inner * ur * vc) / *sigma;
                        }
                    }
                }
            }
        }
    }

    fn elementwise(
        &self,
        grads: &mut [Option<Tensor<T>>],
        x: Var,
        dy: &Tensor<T>,
        deriv: impl Fn(T, T) -> T,
    ) {
        let xv = self.value(x).data();
        if let Some(g) = self.acc(grads, x) {
            for ((o, &d), &a) in g.data_mut().iter_mut().zip(dy.data()).zip(xv) {
                *o += d * deriv(a, d);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn conv_backward(
        &self,
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: &ConvGeometry,
        oc: usize,
        dy: &Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
    ) {
        let (n, _, ho, wo) = dy.dims4();
        let p = ho * wo;
        let rows = geom.rows();
        if let Some(b) = b {
            if let Some(g) = self.acc(grads, b) {
                let gd = g.data_mut();
                for s in 0..n {
                    for (o, gb) in gd.iter_mut().enumerate() {
                        *gb += dy.data()[(s * oc + o) * p..(s * oc + o + 1) * p]
                            .iter()
                            .copied()
                            .sum::<T>();
                    }
                }
            }
        }
        let need_w = self.rg(w);
        let need_x = self.rg(x);
        if !need_w && !need_x {
            return;
        }
        let xv = self.value(x);
        let wv = self.value(w).data();
        let pointwise = geom.is_pointwise();
        let mut cols = if pointwise { Vec::new() } else { vec![T::zero(); rows * p] };
        let mut dw = if need_w { vec![T::zero(); oc * rows] } else { Vec::new() };
        let mut dx = if need_x { vec![T::zero(); xv.len()] } else { Vec::new() };
        let mut dcols = if need_x && !pointwise { vec![T::zero(); rows * p] } else { Vec::new() };
        let sample_len = geom.channels * geom.height * geom.width;
        for s in 0..n {
            let dys = &dy.data()[s * oc * p..(s + 1) * oc * p];
            if need_w {
                let col: &[T] = if pointwise {
                    xv.sample(s)
                } else {
                    im2col(xv.sample(s), geom, &mut cols);
                    &cols
                };
                matmul(oc, p, rows, dys, false, col, true, &mut dw, true);
            }
            if need_x {
                let dxs = &mut dx[s * sample_len..(s + 1) * sample_len];
                if pointwise {
                    matmul(rows, oc, p, wv, true, dys, false, dxs, true);
                } else {
                    matmul(rows, oc, p, wv, true, dys, false, &mut dcols, false);
                    col2im(&dcols, geom, dxs);
                }
            }
        }
        if need_w {
            if let Some(g) = self.acc(grads, w) {
                for (o, &d) in g.data_mut().iter_mut().zip(&dw) {
                    *o += d;
                }
            }
        }
        if need_x {
            if let Some(g) = self.acc(grads, x) {
                for (o, &d) in g.data_mut().iter_mut().zip(&dx) {
                    *o += d;
                }
            }
        }
    }
}

fn sign<T: Scalar>(a: T) -> T {
    if a > T::zero() {
        T::one()
    } else if a < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

fn normalize<T: Scalar>(v: &mut [T]) {
    let n = v.iter().map(|&a| a * a).sum::<T>().sqrt().max(T::lit(1e-12));
    for a in v.iter_mut() {
        *a = *a / n;
    }
}
