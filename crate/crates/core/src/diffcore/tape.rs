//! Computation tape: batched f64 tensors plus reverse-mode gradients.

use crate::error::{Error, Result};

/// Dense row-major matrix of 64-bit reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "tensor shape/data mismatch");
        Tensor { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub usize);

#[derive(Debug)]
enum Op {
    Leaf,
    /// y = x W^T + b. x: [B, in], w: [out, in], b: [1, out].
    Linear { x: NodeId, w: NodeId, b: NodeId },
    /// Hyperspherical layer: y[r,j] = s_j * (w_j/||w_j|| . x_r/||x_r||).
    /// Rows with ||x_r|| below the guard produce zero output and zero gradient.
    HnLinear { x: NodeId, w: NodeId, s: NodeId },
    Relu { x: NodeId },
    Tanh { x: NodeId },
    /// Per-row feature normalization with affine parameters.
    LayerNorm { x: NodeId, gamma: NodeId, beta: NodeId, eps: f64 },
    Concat { a: NodeId, b: NodeId },
    SliceCols { x: NodeId, start: usize },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Scale { x: NodeId, c: f64 },
    AddScalar { x: NodeId },
    /// x + constant array (same shape).
    AddData { x: NodeId },
    Exp { x: NodeId },
    Clamp { x: NodeId, lo: f64, hi: f64 },
    /// [B, C] -> [B, 1] sum over features.
    RowSum { x: NodeId },
    /// -> scalar mean over all elements.
    MeanAll { x: NodeId },
    /// Elementwise min; gradient routed to the smaller operand (ties to `a`).
    MinPair { a: NodeId, b: NodeId },
    /// log(1 - y^2 + 1e-6) for tanh outputs (squashed log-prob correction).
    SquashCorr { y: NodeId },
    /// Expectation of a categorical distribution given logits: [B, N] -> [B, 1].
    CategoricalExpect { logits: NodeId, atoms: Vec<f64> },
    /// Scalar mean over all elements of (pred - target)^2.
    MseLoss { pred: NodeId, target: Vec<f64> },
    /// Scalar mean over rows of -(sum_i m_i log softmax(logits)_i).
    CrossEntropyLogits { logits: NodeId, target_probs: Vec<f64> },
    /// Quantile Huber regression of pred [B, N] against constant targets
    /// [B, M]; scalar mean over batch of the (1/NM) pairwise sum.
    QuantileHuber { pred: NodeId, targets: Vec<f64>, tcols: usize, taus: Vec<f64>, kappa: f64 },
}

struct Node {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    needs_grad: bool,
    op: Op,
}

/// Gradients per node, populated by [`Tape::backward`].
pub struct Grads {
    g: Vec<Option<Vec<f64>>>,
}

impl Grads {
    pub fn get(&self, id: NodeId) -> Option<&[f64]> {
        self.g[id.0].as_deref()
    }
}

/// Acyclic computation graph. Nodes are appended during the forward pass, so
/// parents always precede children; backward is a single reverse sweep.
pub struct Tape {
    nodes: Vec<Node>,
}

const HN_ZERO_GUARD: f64 = 1e-12;
pub const SQUASH_EPS: f64 = 1e-6;

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, rows: usize, cols: usize, values: Vec<f64>, needs_grad: bool, op: Op) -> NodeId {
        debug_assert_eq!(rows * cols, values.len());
        self.nodes.push(Node { rows, cols, values, needs_grad, op });
        NodeId(self.nodes.len() - 1)
    }

    fn ng(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    pub fn values(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].values
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        let n = &self.nodes[id.0];
        (n.rows, n.cols)
    }

    // ---- leaves ----

    pub fn leaf(&mut self, rows: usize, cols: usize, data: Vec<f64>, requires_grad: bool) -> NodeId {
        self.push(rows, cols, data, requires_grad, Op::Leaf)
    }

    pub fn leaf_tensor(&mut self, t: &Tensor, requires_grad: bool) -> NodeId {
        self.leaf(t.rows, t.cols, t.data.clone(), requires_grad)
    }

    // ---- ops ----

    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let (bs, xin) = self.shape(x);
        let (out, win) = self.shape(w);
        let (brows, bcols) = self.shape(b);
        if xin != win || brows != 1 || bcols != out {
            return Err(Error::Config(format!(
                "linear shape mismatch: x [{},{}], w [{},{}], b [{},{}]",
                bs, xin, out, win, brows, bcols
            )));
        }
        let xv = &self.nodes[x.0].values;
        let wv = &self.nodes[w.0].values;
        let bv = &self.nodes[b.0].values;
        let mut y = vec![0.0; bs * out];
        for r in 0..bs {
            let xr = &xv[r * xin..(r + 1) * xin];
            let yr = &mut y[r * out..(r + 1) * out];
            for o in 0..out {
                let wrow = &wv[o * win..(o + 1) * win];
                let mut acc = bv[o];
                for i in 0..win {
                    acc += xr[i] * wrow[i];
                }
                yr[o] = acc;
            }
        }
        let ng = self.ng(x) || self.ng(w) || self.ng(b);
        Ok(self.push(bs, out, y, ng, Op::Linear { x, w, b }))
    }

    pub fn hn_linear(&mut self, x: NodeId, w: NodeId, s: NodeId) -> Result<NodeId> {
        let (bs, xin) = self.shape(x);
        let (out, win) = self.shape(w);
        let (srows, scols) = self.shape(s);
        if xin != win || srows != 1 || scols != out {
            return Err(Error::Config(format!(
                "hyperspherical shape mismatch: x [{},{}], w [{},{}], s [{},{}]",
                bs, xin, out, win, srows, scols
            )));
        }
        let xv = &self.nodes[x.0].values;
        let wv = &self.nodes[w.0].values;
        let sv = &self.nodes[s.0].values;
        let mut y = vec![0.0; bs * out];
        for r in 0..bs {
            let xr = &xv[r * xin..(r + 1) * xin];
            let xn = norm(xr);
            if xn < HN_ZERO_GUARD {
                continue; // zero output for zero-norm inputs
            }
            for o in 0..out {
                let wrow = &wv[o * win..(o + 1) * win];
                let wn = norm(wrow);
                let mut dot = 0.0;
                for i in 0..win {
                    dot += xr[i] * wrow[i];
                }
                y[r * out + o] = sv[o] * dot / (xn * wn);
            }
        }
        let ng = self.ng(x) || self.ng(w) || self.ng(s);
        Ok(self.push(bs, out, y, ng, Op::HnLinear { x, w, s }))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let (r, c) = self.shape(x);
        let y: Vec<f64> = self.nodes[x.0].values.iter().map(|&v| v.max(0.0)).collect();
        let ng = self.ng(x);
        self.push(r, c, y, ng, Op::Relu { x })
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let (r, c) = self.shape(x);
        let y: Vec<f64> = self.nodes[x.0].values.iter().map(|&v| v.tanh()).collect();
        let ng = self.ng(x);
        self.push(r, c, y, ng, Op::Tanh { x })
    }

    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId, eps: f64) -> Result<NodeId> {
        let (bs, f) = self.shape(x);
        let (gr, gc) = self.shape(gamma);
        let (br, bc) = self.shape(beta);
        if gr != 1 || br != 1 || gc != f || bc != f {
            return Err(Error::Config(format!(
                "layer_norm shape mismatch: x [{},{}], gamma [{},{}], beta [{},{}]",
                bs, f, gr, gc, br, bc
            )));
        }
        if eps <= 0.0 {
            return Err(Error::Config("layer_norm eps must be positive".into()));
        }
        let xv = &self.nodes[x.0].values;
        let gv = &self.nodes[gamma.0].values;
        let bv = &self.nodes[beta.0].values;
        let mut y = vec![0.0; bs * f];
        for r in 0..bs {
            let xr = &xv[r * f..(r + 1) * f];
            let mu = xr.iter().sum::<f64>() / f as f64;
            let var = xr.iter().map(|&v| (v - mu) * (v - mu)).sum::<f64>() / f as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for i in 0..f {
                y[r * f + i] = gv[i] * (xr[i] - mu) * inv + bv[i];
            }
        }
        let ng = self.ng(x) || self.ng(gamma) || self.ng(beta);
        Ok(self.push(bs, f, y, ng, Op::LayerNorm { x, gamma, beta, eps }))
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        if ra != rb {
            return Err(Error::Usage("concat row mismatch".into()));
        }
        let av = &self.nodes[a.0].values;
        let bv = &self.nodes[b.0].values;
        let mut y = vec![0.0; ra * (ca + cb)];
        for r in 0..ra {
            y[r * (ca + cb)..r * (ca + cb) + ca].copy_from_slice(&av[r * ca..(r + 1) * ca]);
            y[r * (ca + cb) + ca..(r + 1) * (ca + cb)].copy_from_slice(&bv[r * cb..(r + 1) * cb]);
        }
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(ra, ca + cb, y, ng, Op::Concat { a, b }))
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let (r, c) = self.shape(x);
        assert!(start + len <= c, "slice out of bounds");
        let xv = &self.nodes[x.0].values;
        let mut y = vec![0.0; r * len];
        for row in 0..r {
            y[row * len..(row + 1) * len].copy_from_slice(&xv[row * c + start..row * c + start + len]);
        }
        let ng = self.ng(x);
        self.push(r, len, y, ng, Op::SliceCols { x, start })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binop(a, b, |x, y| x + y, |a, b| Op::Add { a, b })
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binop(a, b, |x, y| x - y, |a, b| Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binop(a, b, |x, y| x * y, |a, b| Op::Mul { a, b })
    }

    pub fn min_pair(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.binop(a, b, |x, y| x.min(y), |a, b| Op::MinPair { a, b })
    }

    fn binop(
        &mut self,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: impl Fn(NodeId, NodeId) -> Op,
    ) -> NodeId {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        assert_eq!((ra, ca), (rb, cb), "elementwise shape mismatch");
        let y: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .zip(self.nodes[b.0].values.iter())
            .map(|(&x, &z)| f(x, z))
            .collect();
        let ng = self.ng(a) || self.ng(b);
        self.push(ra, ca, y, ng, op(a, b))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let (r, cc) = self.shape(x);
        let y: Vec<f64> = self.nodes[x.0].values.iter().map(|&v| v * c).collect();
        let ng = self.ng(x);
        self.push(r, cc, y, ng, Op::Scale { x, c })
    }

    pub fn add_scalar(&mut self, x: NodeId, c: f64) -> NodeId {
        let (r, cc) = self.shape(x);
        let y: Vec<f64> = self.nodes[x.0].values.iter().map(|&v| v + c).collect();
        let ng = self.ng(x);
        self.push(r, cc, y, ng, Op::AddScalar { x })
    }

    pub fn add_data(&mut self, x: NodeId, data: Vec<f64>) -> NodeId {
        let (r, cc) = self.shape(x);
        assert_eq!(data.len(), r * cc, "add_data shape mismatch");
        let y: Vec<f64> = self.nodes[x.0]
            .values
            .iter()
            .zip(data.iter())
            .map(|(&v, &d)| v + d)
            .collect();
        let ng = self.ng(x);
        self.push(r, cc, y, ng, Op::AddData { x })
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        let (r, c) = self.shape(x);
        let y: Vec<f64> = self.nodes[x.0].values.iter().map(|&v| v.exp()).collect();
        let ng = self.ng(x);
        self.push(r, c, y, ng, Op::Exp { x })
    }

    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> NodeId {
        let (r, c) = self.shape(x);
        let y: Vec<f64> = self.nodes[x.0].values.iter().map(|&v| v.clamp(lo, hi)).collect();
        let ng = self.ng(x);
        self.push(r, c, y, ng, Op::Clamp { x, lo, hi })
    }

    pub fn row_sum(&mut self, x: NodeId) -> NodeId {
        let (r, c) = self.shape(x);
        let xv = &self.nodes[x.0].values;
        let y: Vec<f64> = (0..r).map(|row| xv[row * c..(row + 1) * c].iter().sum()).collect();
        let ng = self.ng(x);
        self.push(r, 1, y, ng, Op::RowSum { x })
    }

    pub fn mean_all(&mut self, x: NodeId) -> NodeId {
        let xv = &self.nodes[x.0].values;
        let m = xv.iter().sum::<f64>() / xv.len() as f64;
        let ng = self.ng(x);
        self.push(1, 1, vec![m], ng, Op::MeanAll { x })
    }

    pub fn squash_correction(&mut self, tanh_out: NodeId) -> NodeId {
        let (r, c) = self.shape(tanh_out);
        let y: Vec<f64> = self.nodes[tanh_out.0]
            .values
            .iter()
            .map(|&v| (1.0 - v * v + SQUASH_EPS).ln())
            .collect();
        let ng = self.ng(tanh_out);
        self.push(r, c, y, ng, Op::SquashCorr { y: tanh_out })
    }

    pub fn categorical_expect(&mut self, logits: NodeId, atoms: Vec<f64>) -> Result<NodeId> {
        let (r, c) = self.shape(logits);
        if atoms.len() != c {
            return Err(Error::Config("categorical_expect atom count mismatch".into()));
        }
        let lv = &self.nodes[logits.0].values;
        let mut y = vec![0.0; r];
        for row in 0..r {
            let p = softmax(&lv[row * c..(row + 1) * c]);
            y[row] = p.iter().zip(atoms.iter()).map(|(&pi, &zi)| pi * zi).sum();
        }
        let ng = self.ng(logits);
        Ok(self.push(r, 1, y, ng, Op::CategoricalExpect { logits, atoms }))
    }

    pub fn mse_loss(&mut self, pred: NodeId, target: Vec<f64>) -> Result<NodeId> {
        let (r, c) = self.shape(pred);
        if target.len() != r * c {
            return Err(Error::Usage("mse_loss target shape mismatch".into()));
        }
        let pv = &self.nodes[pred.0].values;
        let loss = pv
            .iter()
            .zip(target.iter())
            .map(|(&p, &t)| (p - t) * (p - t))
            .sum::<f64>()
            / (r * c) as f64;
        let ng = self.ng(pred);
        Ok(self.push(1, 1, vec![loss], ng, Op::MseLoss { pred, target }))
    }

    pub fn cross_entropy_logits(&mut self, logits: NodeId, target_probs: Vec<f64>) -> Result<NodeId> {
        let (r, c) = self.shape(logits);
        if target_probs.len() != r * c {
            return Err(Error::Usage("cross_entropy target shape mismatch".into()));
        }
        let lv = &self.nodes[logits.0].values;
        let mut loss = 0.0;
        for row in 0..r {
            let p = softmax(&lv[row * c..(row + 1) * c]);
            for i in 0..c {
                let m = target_probs[row * c + i];
                if m > 0.0 {
                    loss -= m * p[i].max(1e-300).ln();
                }
            }
        }
        loss /= r as f64;
        let ng = self.ng(logits);
        Ok(self.push(1, 1, vec![loss], ng, Op::CrossEntropyLogits { logits, target_probs }))
    }

    pub fn quantile_huber(
        &mut self,
        pred: NodeId,
        targets: Vec<f64>,
        tcols: usize,
        taus: Vec<f64>,
        kappa: f64,
    ) -> Result<NodeId> {
        let (r, n) = self.shape(pred);
        if taus.len() != n {
            return Err(Error::Usage("quantile_huber tau count mismatch".into()));
        }
        if targets.len() != r * tcols {
            return Err(Error::Usage("quantile_huber target shape mismatch".into()));
        }
        let pv = &self.nodes[pred.0].values;
        let mut loss = 0.0;
        for row in 0..r {
            for i in 0..n {
                let theta = pv[row * n + i];
                for j in 0..tcols {
                    let u = targets[row * tcols + j] - theta;
                    let w = if u < 0.0 { 1.0 - taus[i] } else { taus[i] };
                    let h = if u.abs() <= kappa {
                        0.5 * u * u
                    } else {
                        kappa * (u.abs() - 0.5 * kappa)
                    };
                    loss += w * h;
                }
            }
        }
        loss /= (r * n * tcols) as f64;
        let ng = self.ng(pred);
        Ok(self.push(1, 1, vec![loss], ng, Op::QuantileHuber { pred, targets, tcols, taus, kappa }))
    }

    // ---- backward ----

    pub fn backward(&self, output: NodeId) -> Result<Grads> {
        let out = &self.nodes[output.0];
        if out.rows * out.cols != 1 {
            return Err(Error::Usage("backward requires a scalar output node".into()));
        }
        let mut g: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        g[output.0] = Some(vec![1.0]);
        for idx in (0..=output.0).rev() {
            if g[idx].is_none() || !self.nodes[idx].needs_grad {
                continue;
            }
            let dy = g[idx].take().unwrap();
            self.accumulate(idx, &dy, &mut g);
            g[idx] = Some(dy);
        }
        Ok(Grads { g })
    }

    fn accumulate(&self, idx: usize, dy: &[f64], g: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let ensure = |g: &mut [Option<Vec<f64>>], id: NodeId, len: usize| {
            if g[id.0].is_none() {
                g[id.0] = Some(vec![0.0; len]);
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let (bs, xin) = self.shape(*x);
                let out = node.cols;
                let xv = &self.nodes[x.0].values;
                let wv = &self.nodes[w.0].values;
                if self.ng(*x) {
                    ensure(g, *x, bs * xin);
                    let gx = g[x.0].as_mut().unwrap();
                    for r in 0..bs {
                        for o in 0..out {
                            let d = dy[r * out + o];
                            if d == 0.0 {
                                continue;
                            }
                            let wrow = &wv[o * xin..(o + 1) * xin];
                            let gxr = &mut gx[r * xin..(r + 1) * xin];
                            for i in 0..xin {
                                gxr[i] += d * wrow[i];
                            }
                        }
                    }
                }
                if self.ng(*w) {
                    ensure(g, *w, out * xin);
                    let gw = g[w.0].as_mut().unwrap();
                    for r in 0..bs {
                        let xr = &xv[r * xin..(r + 1) * xin];
                        for o in 0..out {
                            let d = dy[r * out + o];
                            if d == 0.0 {
                                continue;
                            }
                            let gwr = &mut gw[o * xin..(o + 1) * xin];
                            for i in 0..xin {
                                gwr[i] += d * xr[i];
                            }
                        }
                    }
                }
                if self.ng(*b) {
                    ensure(g, *b, out);
                    let gb = g[b.0].as_mut().unwrap();
                    for r in 0..bs {
                        for o in 0..out {
                            gb[o] += dy[r * out + o];
                        }
                    }
                }
            }
            Op::HnLinear { x, w, s } => {
                let (bs, xin) = self.shape(*x);
                let out = node.cols;
                let xv = &self.nodes[x.0].values;
                let wv = &self.nodes[w.0].values;
                let sv = &self.nodes[s.0].values;
                for r in 0..bs {
                    let xr = &xv[r * xin..(r + 1) * xin];
                    let xn = norm(xr);
                    if xn < HN_ZERO_GUARD {
                        continue;
                    }
                    let xhat: Vec<f64> = xr.iter().map(|&v| v / xn).collect();
                    for o in 0..out {
                        let d = dy[r * out + o];
                        if d == 0.0 {
                            continue;
                        }
                        let wrow = &wv[o * xin..(o + 1) * xin];
                        let wn = norm(wrow);
                        let what: Vec<f64> = wrow.iter().map(|&v| v / wn).collect();
                        let cos: f64 = what.iter().zip(xhat.iter()).map(|(&a, &b)| a * b).sum();
                        if self.ng(*s) {
                            ensure(g, *s, out);
                            g[s.0].as_mut().unwrap()[o] += d * cos;
                        }
                        if self.ng(*x) {
                            ensure(g, *x, bs * xin);
                            let gx = g[x.0].as_mut().unwrap();
                            let gxr = &mut gx[r * xin..(r + 1) * xin];
                            for i in 0..xin {
                                gxr[i] += d * sv[o] * (what[i] - cos * xhat[i]) / xn;
                            }
                        }
                        if self.ng(*w) {
                            ensure(g, *w, out * xin);
                            let gw = g[w.0].as_mut().unwrap();
                            let gwr = &mut gw[o * xin..(o + 1) * xin];
                            for i in 0..xin {
                                gwr[i] += d * sv[o] * (xhat[i] - cos * what[i]) / wn;
                            }
                        }
                    }
                }
            }
            Op::Relu { x } => {
                if self.ng(*x) {
                    ensure(g, *x, dy.len());
                    let xv = &self.nodes[x.0].values;
                    let gx = g[x.0].as_mut().unwrap();
                    for i in 0..dy.len() {
                        if xv[i] > 0.0 {
                            gx[i] += dy[i];
                        }
                    }
                }
            }
            Op::Tanh { x } => {
                if self.ng(*x) {
                    ensure(g, *x, dy.len());
                    let yv = &node.values;
                    let gx = g[x.0].as_mut().unwrap();
                    for i in 0..dy.len() {
                        gx[i] += dy[i] * (1.0 - yv[i] * yv[i]);
                    }
                }
            }
            Op::LayerNorm { x, gamma, beta, eps } => {
                let (bs, f) = self.shape(*x);
                let xv = &self.nodes[x.0].values;
                let gv = &self.nodes[gamma.0].values;
                for r in 0..bs {
                    let xr = &xv[r * f..(r + 1) * f];
                    let dyr = &dy[r * f..(r + 1) * f];
                    let mu = xr.iter().sum::<f64>() / f as f64;
                    let var = xr.iter().map(|&v| (v - mu) * (v - mu)).sum::<f64>() / f as f64;
                    let inv = 1.0 / (var + eps).sqrt();
                    let xhat: Vec<f64> = xr.iter().map(|&v| (v - mu) * inv).collect();
                    if self.ng(*gamma) {
                        ensure(g, *gamma, f);
                        let gg = g[gamma.0].as_mut().unwrap();
                        for i in 0..f {
                            gg[i] += dyr[i] * xhat[i];
                        }
                    }
                    if self.ng(*beta) {
                        ensure(g, *beta, f);
                        let gb = g[beta.0].as_mut().unwrap();
                        for i in 0..f {
                            gb[i] += dyr[i];
                        }
                    }
                    if self.ng(*x) {
                        ensure(g, *x, bs * f);
                        // d/dx of gamma*(x-mu)/sigma: project out mean and xhat components
                        let h: Vec<f64> = (0..f).map(|i| dyr[i] * gv[i]).collect();
                        let mean_h = h.iter().sum::<f64>() / f as f64;
                        let mean_hx = h.iter().zip(xhat.iter()).map(|(&a, &b)| a * b).sum::<f64>() / f as f64;
                        let gx = g[x.0].as_mut().unwrap();
                        let gxr = &mut gx[r * f..(r + 1) * f];
                        for i in 0..f {
                            gxr[i] += inv * (h[i] - mean_h - xhat[i] * mean_hx);
                        }
                    }
                }
            }
            Op::Concat { a, b } => {
                let (r, ca) = self.shape(*a);
                let (_, cb) = self.shape(*b);
                if self.ng(*a) {
                    ensure(g, *a, r * ca);
                    let ga = g[a.0].as_mut().unwrap();
                    for row in 0..r {
                        for i in 0..ca {
                            ga[row * ca + i] += dy[row * (ca + cb) + i];
                        }
                    }
                }
                if self.ng(*b) {
                    ensure(g, *b, r * cb);
                    let gb = g[b.0].as_mut().unwrap();
                    for row in 0..r {
                        for i in 0..cb {
                            gb[row * cb + i] += dy[row * (ca + cb) + ca + i];
                        }
                    }
                }
            }
            Op::SliceCols { x, start } => {
                if self.ng(*x) {
                    let (r, c) = self.shape(*x);
                    let len = node.cols;
                    ensure(g, *x, r * c);
                    let gx = g[x.0].as_mut().unwrap();
                    for row in 0..r {
                        for i in 0..len {
                            gx[row * c + start + i] += dy[row * len + i];
                        }
                    }
                }
            }
            Op::Add { a, b } => {
                for side in [a, b] {
                    if self.ng(*side) {
                        ensure(g, *side, dy.len());
                        let gs = g[side.0].as_mut().unwrap();
                        for i in 0..dy.len() {
                            gs[i] += dy[i];
                        }
                    }
                }
            }
            Op::Sub { a, b } => {
                if self.ng(*a) {
                    ensure(g, *a, dy.len());
                    let ga = g[a.0].as_mut().unwrap();
                    for i in 0..dy.len() {
                        ga[i] += dy[i];
                    }
                }
                if self.ng(*b) {
                    ensure(g, *b, dy.len());
                    let gb = g[b.0].as_mut().unwrap();
                    for i in 0..dy.len() {
                        gb[i] -= dy[i];
                    }
                }
            }
            Op::Mul { a, b } => {
                let av = &self.nodes[a.0].values;
                let bv = &self.nodes[b.0].values;
                if self.ng(*a) {
                    ensure(g, *a, dy.len());
                    let ga = g[a.0].as_mut().unwrap();
                    for i in 0..dy.len() {
                        ga[i] += dy[i] * bv[i];
                    }
                }
                if self.ng(*b) {
                    ensure(g, *b, dy.len());
                    let gb = g[b.0].as_mut().unwrap();
                    for i in 0..dy.len() {
                        gb[i] += dy[i] * av[i];
                    }
                }
            }
            Op::MinPair { a, b } => {
                let av = &self.nodes[a.0].values;
                let bv = &self.nodes[b.0].values;
                if self.ng(*a) {
                    ensure(g, *a, dy.len());
                    let ga = g[a.0].as_mut().unwrap();
                    for i in 0..dy.len() {
                        if av[i] <= bv[i] {
                            ga[i] += dy[i];
                        }
                    }
                }
                if self.ng(*b) {
                    ensure(g, *b, dy.len());
                    let gb = g[b.0].as_mut().unwrap();
                    for i in 0..dy.len() {
                        if av[i] > bv[i] {
                            gb[i] += dy[i];
                        }
                    }
                }
            }
            Op::Scale { x, c } => {
                if self.ng(*x) {
                    ensure(g, *x, dy.len());
                    let gx = g[x.0].as_mut().unwrap();
                    for i in 0..dy.len() {
                        gx[i] += dy[i] * c;
                    }
                }
            }
            Op::AddScalar { x } | Op::AddData { x } => {
                if self.ng(*x) {
                    ensure(g, *x, dy.len());
                    let gx = g[x.0].as_mut().unwrap();
                    for i in 0..dy.len() {
                        gx[i] += dy[i];
                    }
                }
            }
            Op::Exp { x } => {
                if self.ng(*x) {
                    ensure(g, *x, dy.len());
                    let yv = &node.values;
                    let gx = g[x.0].as_mut().unwrap();
                    for i in 0..dy.len() {
                        gx[i] += dy[i] * yv[i];
                    }
                }
            }
            Op::Clamp { x, lo, hi } => {
                if self.ng(*x) {
                    ensure(g, *x, dy.len());
                    let xv = &self.nodes[x.0].values;
                    let gx = g[x.0].as_mut().unwrap();
                    for i in 0..dy.len() {
                        if xv[i] > *lo && xv[i] < *hi {
                            gx[i] += dy[i];
                        }
                    }
                }
            }
            Op::RowSum { x } => {
                if self.ng(*x) {
                    let (r, c) = self.shape(*x);
                    ensure(g, *x, r * c);
                    let gx = g[x.0].as_mut().unwrap();
                    for row in 0..r {
                        for i in 0..c {
                            gx[row * c + i] += dy[row];
                        }
                    }
                }
            }
            Op::MeanAll { x } => {
                if self.ng(*x) {
                    let n = self.nodes[x.0].values.len();
                    ensure(g, *x, n);
                    let gx = g[x.0].as_mut().unwrap();
                    let d = dy[0] / n as f64;
                    for v in gx.iter_mut() {
                        *v += d;
                    }
                }
            }
            Op::SquashCorr { y } => {
                if self.ng(*y) {
                    ensure(g, *y, dy.len());
                    let yv = &self.nodes[y.0].values;
                    let gy = g[y.0].as_mut().unwrap();
                    for i in 0..dy.len() {
                        gy[i] += dy[i] * (-2.0 * yv[i]) / (1.0 - yv[i] * yv[i] + SQUASH_EPS);
                    }
                }
            }
            Op::CategoricalExpect { logits, atoms } => {
                if self.ng(*logits) {
                    let (r, c) = self.shape(*logits);
                    ensure(g, *logits, r * c);
                    let lv = &self.nodes[logits.0].values;
                    let gl = g[logits.0].as_mut().unwrap();
                    for row in 0..r {
                        let p = softmax(&lv[row * c..(row + 1) * c]);
                        let e: f64 = p.iter().zip(atoms.iter()).map(|(&pi, &zi)| pi * zi).sum();
                        for i in 0..c {
                            gl[row * c + i] += dy[row] * p[i] * (atoms[i] - e);
                        }
                    }
                }
            }
            Op::MseLoss { pred, target } => {
                if self.ng(*pred) {
                    let pv = &self.nodes[pred.0].values;
                    ensure(g, *pred, pv.len());
                    let gp = g[pred.0].as_mut().unwrap();
                    let scale = 2.0 * dy[0] / pv.len() as f64;
                    for i in 0..pv.len() {
                        gp[i] += scale * (pv[i] - target[i]);
                    }
                }
            }
            Op::CrossEntropyLogits { logits, target_probs } => {
                if self.ng(*logits) {
                    let (r, c) = self.shape(*logits);
                    ensure(g, *logits, r * c);
                    let lv = &self.nodes[logits.0].values;
                    let gl = g[logits.0].as_mut().unwrap();
                    for row in 0..r {
                        let p = softmax(&lv[row * c..(row + 1) * c]);
                        for i in 0..c {
                            gl[row * c + i] += dy[0] * (p[i] - target_probs[row * c + i]) / r as f64;
                        }
                    }
                }
            }
            Op::QuantileHuber { pred, targets, tcols, taus, kappa } => {
                if self.ng(*pred) {
                    let (r, n) = self.shape(*pred);
                    ensure(g, *pred, r * n);
                    let pv = &self.nodes[pred.0].values;
                    let gp = g[pred.0].as_mut().unwrap();
                    let scale = dy[0] / (r * n * tcols) as f64;
                    for row in 0..r {
                        for i in 0..n {
                            let theta = pv[row * n + i];
                            let mut acc = 0.0;
                            for j in 0..*tcols {
                                let u = targets[row * tcols + j] - theta;
                                let w = if u < 0.0 { 1.0 - taus[i] } else { taus[i] };
                                let hp = if u.abs() <= *kappa { u } else { kappa * u.signum() };
                                acc -= w * hp; // d u / d theta = -1
                            }
                            gp[row * n + i] += scale * acc;
                        }
                    }
                }
            }
        }
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|&x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ex: Vec<f64> = logits.iter().map(|&l| (l - mx).exp()).collect();
    let s: f64 = ex.iter().sum();
    ex.into_iter().map(|e| e / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], eps: f64) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        let mut xp = x.to_vec();
        for i in 0..x.len() {
            xp[i] = x[i] + eps;
            let fp = f(&xp);
            xp[i] = x[i] - eps;
            let fm = f(&xp);
            xp[i] = x[i];
            g[i] = (fp - fm) / (2.0 * eps);
        }
        g
    }

    fn assert_close(analytic: &[f64], numeric: &[f64], rel: f64, abs_floor: f64) {
        assert_eq!(analytic.len(), numeric.len());
        for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
            let tol = abs_floor + rel * n.abs().max(a.abs());
            assert!(
                (a - n).abs() <= tol,
                "grad[{i}] analytic {a} vs numeric {n} (tol {tol})"
            );
        }
    }

    fn pseudo(seed: u64, n: usize) -> Vec<f64> {
        // deterministic filler values in roughly [-1, 1]
        let mut z = seed;
        (0..n)
            .map(|_| {
                z = z.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((z >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn linear_relu_mse_gradient_matches_finite_difference() {
        let x = pseudo(1, 3 * 4);
        let w0 = pseudo(2, 5 * 4);
        let b0 = pseudo(3, 5);
        let target = pseudo(4, 3 * 5);
        let loss_of = |w: &[f64], b: &[f64]| -> f64 {
            let mut t = Tape::new();
            let xi = t.leaf(3, 4, x.clone(), false);
            let wi = t.leaf(5, 4, w.to_vec(), true);
            let bi = t.leaf(1, 5, b.to_vec(), true);
            let z = t.linear(xi, wi, bi).unwrap();
            let h = t.relu(z);
            let l = t.mse_loss(h, target.clone()).unwrap();
            t.values(l)[0]
        };

        let mut t = Tape::new();
        let xi = t.leaf(3, 4, x.clone(), true);
        let wi = t.leaf(5, 4, w0.clone(), true);
        let bi = t.leaf(1, 5, b0.clone(), true);
        let z = t.linear(xi, wi, bi).unwrap();
        let h = t.relu(z);
        let l = t.mse_loss(h, target.clone()).unwrap();
        let g = t.backward(l).unwrap();

        let gw_num = fd(|w| loss_of(w, &b0), &w0, 1e-6);
        let gb_num = fd(|b| loss_of(&w0, b), &b0, 1e-6);
        assert_close(g.get(wi).unwrap(), &gw_num, 1e-6, 1e-9);
        assert_close(g.get(bi).unwrap(), &gb_num, 1e-6, 1e-9);

        // input gradient too (needed for action-sensitivity probes)
        let gx_num = fd(
            |xv| {
                let mut t = Tape::new();
                let xi = t.leaf(3, 4, xv.to_vec(), false);
                let wi = t.leaf(5, 4, w0.clone(), false);
                let bi = t.leaf(1, 5, b0.clone(), false);
                let z = t.linear(xi, wi, bi).unwrap();
                let h = t.relu(z);
                let l = t.mse_loss(h, target.clone()).unwrap();
                t.values(l)[0]
            },
            &x,
            1e-6,
        );
        assert_close(g.get(xi).unwrap(), &gx_num, 1e-6, 1e-9);
    }

    #[test]
    fn layer_norm_forward_hand_computed() {
        // row [1, 2, 3, 6]: mu = 3, var = 3.5
        let mut t = Tape::new();
        let x = t.leaf(1, 4, vec![1.0, 2.0, 3.0, 6.0], false);
        let gamma = t.leaf(1, 4, vec![2.0, 1.0, 1.0, 0.5], false);
        let beta = t.leaf(1, 4, vec![0.1, 0.0, -0.1, 0.0], false);
        let y = t.layer_norm(x, gamma, beta, 1e-5).unwrap();
        let inv = 1.0 / (3.5f64 + 1e-5).sqrt();
        let expect = [
            2.0 * (1.0 - 3.0) * inv + 0.1,
            1.0 * (2.0 - 3.0) * inv,
            1.0 * (3.0 - 3.0) * inv - 0.1,
            0.5 * (6.0 - 3.0) * inv,
        ];
        for (a, e) in t.values(y).iter().zip(expect) {
            assert!((a - e).abs() < 1e-12, "{a} vs {e}");
        }
    }

    #[test]
    fn layer_norm_gradient_matches_finite_difference() {
        let x0 = pseudo(10, 2 * 6);
        let g0 = pseudo(11, 6).iter().map(|v| v + 1.5).collect::<Vec<_>>();
        let b0 = pseudo(12, 6);
        let target = pseudo(13, 2 * 6);
        let loss_of = |x: &[f64], ga: &[f64], be: &[f64]| -> f64 {
            let mut t = Tape::new();
            let xi = t.leaf(2, 6, x.to_vec(), false);
            let gi = t.leaf(1, 6, ga.to_vec(), false);
            let bi = t.leaf(1, 6, be.to_vec(), false);
            let y = t.layer_norm(xi, gi, bi, 1e-5).unwrap();
            let l = t.mse_loss(y, target.clone()).unwrap();
            t.values(l)[0]
        };
        let mut t = Tape::new();
        let xi = t.leaf(2, 6, x0.clone(), true);
        let gi = t.leaf(1, 6, g0.clone(), true);
        let bi = t.leaf(1, 6, b0.clone(), true);
        let y = t.layer_norm(xi, gi, bi, 1e-5).unwrap();
        let l = t.mse_loss(y, target.clone()).unwrap();
        let g = t.backward(l).unwrap();
        assert_close(g.get(xi).unwrap(), &fd(|v| loss_of(v, &g0, &b0), &x0, 1e-6), 1e-6, 1e-9);
        assert_close(g.get(gi).unwrap(), &fd(|v| loss_of(&x0, v, &b0), &g0, 1e-6), 1e-6, 1e-9);
        assert_close(g.get(bi).unwrap(), &fd(|v| loss_of(&x0, &g0, v), &b0, 1e-6), 1e-6, 1e-9);
    }

    #[test]
    fn hyperspherical_output_is_scale_invariant_and_bounded() {
        let x = pseudo(20, 3);
        let w = pseudo(21, 4 * 3);
        let s = vec![1.0, 2.0, 0.5, 1.5];
        let run = |xv: &[f64]| -> Vec<f64> {
            let mut t = Tape::new();
            let xi = t.leaf(1, 3, xv.to_vec(), false);
            let wi = t.leaf(4, 3, w.clone(), false);
            let si = t.leaf(1, 4, s.clone(), false);
            let y = t.hn_linear(xi, wi, si).unwrap();
            t.values(y).to_vec()
        };
        let base = run(&x);
        let scaled = run(&x.iter().map(|v| v * 1000.0).collect::<Vec<_>>());
        for (a, b) in base.iter().zip(&scaled) {
            assert!((a - b).abs() <= 1e-12, "scale invariance violated: {a} vs {b}");
        }
        // |y_j| <= |s_j| since it is s_j * cos(theta)
        for (y, sj) in base.iter().zip(&s) {
            assert!(y.abs() <= sj.abs() + 1e-12);
        }
        // zero-norm input maps to exactly zero
        let zero = run(&[0.0, 0.0, 0.0]);
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hyperspherical_gradient_matches_finite_difference() {
        let x0 = pseudo(30, 2 * 3);
        let w0 = pseudo(31, 4 * 3);
        let s0 = vec![1.0, -0.5, 2.0, 0.7];
        let target = pseudo(32, 2 * 4);
        let loss_of = |x: &[f64], w: &[f64], s: &[f64]| -> f64 {
            let mut t = Tape::new();
            let xi = t.leaf(2, 3, x.to_vec(), false);
            let wi = t.leaf(4, 3, w.to_vec(), false);
            let si = t.leaf(1, 4, s.to_vec(), false);
            let y = t.hn_linear(xi, wi, si).unwrap();
            let l = t.mse_loss(y, target.clone()).unwrap();
            t.values(l)[0]
        };
        let mut t = Tape::new();
        let xi = t.leaf(2, 3, x0.clone(), true);
        let wi = t.leaf(4, 3, w0.clone(), true);
        let si = t.leaf(1, 4, s0.clone(), true);
        let y = t.hn_linear(xi, wi, si).unwrap();
        let l = t.mse_loss(y, target.clone()).unwrap();
        let g = t.backward(l).unwrap();
        assert_close(g.get(xi).unwrap(), &fd(|v| loss_of(v, &w0, &s0), &x0, 1e-6), 1e-5, 1e-9);
        assert_close(g.get(wi).unwrap(), &fd(|v| loss_of(&x0, v, &s0), &w0, 1e-6), 1e-5, 1e-9);
        assert_close(g.get(si).unwrap(), &fd(|v| loss_of(&x0, &w0, v), &s0, 1e-6), 1e-5, 1e-9);
    }

    #[test]
    fn pointwise_op_chain_gradient_matches_finite_difference() {
        // exp, tanh, clamp, mul, sub, squash correction, row_sum, mean_all
        let x0: Vec<f64> = pseudo(40, 2 * 3).iter().map(|v| v * 0.8).collect();
        let other = pseudo(41, 2 * 3);
        let loss_of = |x: &[f64]| -> f64 {
            let mut t = Tape::new();
            let xi = t.leaf(2, 3, x.to_vec(), true);
            let oi = t.leaf(2, 3, other.clone(), false);
            let e = t.exp(xi);
            let th = t.tanh(e);
            let sq = t.squash_correction(th);
            let cl = t.clamp(sq, -0.9, 0.5);
            let m = t.mul(cl, oi);
            let d = t.sub(m, xi);
            let rs = t.row_sum(d);
            let l = t.mean_all(rs);
            t.values(l)[0]
        };
        let mut t = Tape::new();
        let xi = t.leaf(2, 3, x0.clone(), true);
        let oi = t.leaf(2, 3, other.clone(), false);
        let e = t.exp(xi);
        let th = t.tanh(e);
        let sq = t.squash_correction(th);
        let cl = t.clamp(sq, -0.9, 0.5);
        let m = t.mul(cl, oi);
        let d = t.sub(m, xi);
        let rs = t.row_sum(d);
        let l = t.mean_all(rs);
        let g = t.backward(l).unwrap();
        assert_close(g.get(xi).unwrap(), &fd(loss_of, &x0, 1e-7), 1e-5, 1e-9);
    }

    #[test]
    fn min_pair_routes_gradient_to_smaller_operand_and_ties_to_first() {
        let mut t = Tape::new();
        let a = t.leaf(1, 3, vec![1.0, 5.0, 2.0], true);
        let b = t.leaf(1, 3, vec![3.0, 4.0, 2.0], true);
        let m = t.min_pair(a, b);
        assert_eq!(t.values(m), &[1.0, 4.0, 2.0]);
        let s = t.mean_all(m);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(a).unwrap(), &[1.0 / 3.0, 0.0, 1.0 / 3.0]);
        assert_eq!(g.get(b).unwrap(), &[0.0, 1.0 / 3.0, 0.0]);
    }

    #[test]
    fn categorical_expect_matches_manual_softmax_and_finite_difference() {
        let logits0 = pseudo(50, 2 * 4);
        let atoms = vec![-3.0, -2.0, -1.0, 0.0];
        let mut t = Tape::new();
        let li = t.leaf(2, 4, logits0.clone(), true);
        let e = t.categorical_expect(li, atoms.clone()).unwrap();
        for row in 0..2 {
            let p = softmax(&logits0[row * 4..(row + 1) * 4]);
            let manual: f64 = p.iter().zip(&atoms).map(|(&pi, &z)| pi * z).sum();
            assert!((t.values(e)[row] - manual).abs() < 1e-12);
        }
        let l = t.mean_all(e);
        let g = t.backward(l).unwrap();
        let num = fd(
            |lv| {
                let mut t = Tape::new();
                let li = t.leaf(2, 4, lv.to_vec(), false);
                let e = t.categorical_expect(li, atoms.clone()).unwrap();
                let l = t.mean_all(e);
                t.values(l)[0]
            },
            &logits0,
            1e-6,
        );
        assert_close(g.get(li).unwrap(), &num, 1e-6, 1e-9);
    }

    #[test]
    fn cross_entropy_matches_manual_and_finite_difference() {
        let logits0 = pseudo(60, 2 * 3);
        let target = vec![0.2, 0.5, 0.3, 0.0, 1.0, 0.0];
        let mut t = Tape::new();
        let li = t.leaf(2, 3, logits0.clone(), true);
        let l = t.cross_entropy_logits(li, target.clone()).unwrap();
        let mut manual = 0.0;
        for row in 0..2 {
            let p = softmax(&logits0[row * 3..(row + 1) * 3]);
            for i in 0..3 {
                if target[row * 3 + i] > 0.0 {
                    manual -= target[row * 3 + i] * p[i].ln();
                }
            }
        }
        manual /= 2.0;
        assert!((t.values(l)[0] - manual).abs() < 1e-12);
        let g = t.backward(l).unwrap();
        let num = fd(
            |lv| {
                let mut t = Tape::new();
                let li = t.leaf(2, 3, lv.to_vec(), false);
                let l = t.cross_entropy_logits(li, target.clone()).unwrap();
                t.values(l)[0]
            },
            &logits0,
            1e-6,
        );
        assert_close(g.get(li).unwrap(), &num, 1e-6, 1e-9);
    }

    #[test]
    fn quantile_huber_matches_double_loop_oracle_and_finite_difference() {
        let pred0 = pseudo(70, 2 * 3);
        let targets: Vec<f64> = pseudo(71, 2 * 4).iter().map(|v| v * 2.0).collect();
        let taus = vec![1.0 / 6.0, 0.5, 5.0 / 6.0];
        let kappa = 1.0;
        // independent oracle: literal double loop
        let mut oracle = 0.0;
        for row in 0..2 {
            for i in 0..3 {
                let theta = pred0[row * 3 + i];
                for j in 0..4 {
                    let u = targets[row * 4 + j] - theta;
                    let w = if u < 0.0 { 1.0 - taus[i] } else { taus[i] };
                    let h = if u.abs() <= kappa { 0.5 * u * u } else { kappa * (u.abs() - 0.5 * kappa) };
                    oracle += w * h;
                }
            }
        }
        oracle /= (2 * 3 * 4) as f64;
        let mut t = Tape::new();
        let pi = t.leaf(2, 3, pred0.clone(), true);
        let l = t.quantile_huber(pi, targets.clone(), 4, taus.clone(), kappa).unwrap();
        assert!((t.values(l)[0] - oracle).abs() < 1e-12);
        let g = t.backward(l).unwrap();
        let num = fd(
            |pv| {
                let mut t = Tape::new();
                let pi = t.leaf(2, 3, pv.to_vec(), false);
                let l = t
                    .quantile_huber(pi, targets.clone(), 4, taus.clone(), kappa)
                    .unwrap();
                t.values(l)[0]
            },
            &pred0,
            1e-6,
        );
        assert_close(g.get(pi).unwrap(), &num, 1e-6, 1e-9);
    }

    #[test]
    fn concat_slice_add_data_gradients_flow() {
        let a0 = pseudo(80, 2 * 2);
        let b0 = pseudo(81, 2 * 3);
        let loss_of = |av: &[f64], bv: &[f64]| -> f64 {
            let mut t = Tape::new();
            let ai = t.leaf(2, 2, av.to_vec(), false);
            let bi = t.leaf(2, 3, bv.to_vec(), false);
            let c = t.concat(ai, bi).unwrap();
            let sl = t.slice_cols(c, 1, 3);
            let ad = t.add_data(sl, vec![0.5; 6]);
            let sc = t.add_scalar(ad, -0.25);
            let l = t.mean_all(sc);
            t.values(l)[0]
        };
        let mut t = Tape::new();
        let ai = t.leaf(2, 2, a0.clone(), true);
        let bi = t.leaf(2, 3, b0.clone(), true);
        let c = t.concat(ai, bi).unwrap();
        let sl = t.slice_cols(c, 1, 3);
        let ad = t.add_data(sl, vec![0.5; 6]);
        let sc = t.add_scalar(ad, -0.25);
        let l = t.mean_all(sc);
        let g = t.backward(l).unwrap();
        assert_close(g.get(ai).unwrap(), &fd(|v| loss_of(v, &b0), &a0, 1e-6), 1e-6, 1e-9);
        assert_close(g.get(bi).unwrap(), &fd(|v| loss_of(&a0, v), &b0, 1e-6), 1e-6, 1e-9);
    }

    #[test]
    fn backward_rejects_non_scalar_output() {
        let mut t = Tape::new();
        let x = t.leaf(2, 2, vec![1.0; 4], true);
        let y = t.relu(x);
        assert!(t.backward(y).is_err());
    }

    #[test]
    fn no_grad_leaves_receive_no_gradient() {
        let mut t = Tape::new();
        let a = t.leaf(1, 2, vec![1.0, 2.0], false);
        let b = t.leaf(1, 2, vec![3.0, 4.0], true);
        let s = t.add(a, b);
        let l = t.mean_all(s);
        let g = t.backward(l).unwrap();
        assert!(g.get(a).is_none());
        assert!(g.get(b).is_some());
    }
}
