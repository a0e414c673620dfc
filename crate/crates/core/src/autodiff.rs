//! Reverse-mode differentiation over a tape of tensor operations.
//!
//! Each op appends a node holding its output and the handles of its inputs.
//! Because inputs always precede outputs, walking the tape backwards is a
//! valid reverse topological order and every node is visited once.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::tensor::{self, axpy, dot, expect_shape, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv { x: Var, w: Var, b: Var },
    Relu(Var),
    Sigmoid(Var),
    MeanTime(Var),
    Dense { x: Var, w: Var, b: Var },
    ScaleChannels { x: Var, s: Var },
    Mul(Var, Var),
    Add(Var, Var),
    Softmax(Var),
    Combine { w: Var, f: Tensor },
    WeightedSqError { pred: Var, target: Tensor, rows: Vec<f64> },
    Bce { p: Var, target: Tensor, rows: Vec<f64> },
    MatMulBt(Var, Var),
    SumSquares(Var),
    Sum(Var),
    Scale(Var, f64),
    Column { x: Var, col: usize },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    param: bool,
    needs_grad: bool,
}

/// Lower probability clip used by [`Tape::bce`].
pub const PROB_CLIP: f64 = 1e-7;

#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Sign pattern of every ReLU input on the tape, in recording order.
    /// Two parameter settings with equal patterns lie on the same linear
    /// piece of every ReLU.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(x) => Some(x),
                _ => None,
            })
            .flat_map(|x| self.nodes[x.0].value.data().iter().map(|&v| v > 0.0))
            .collect()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        debug_assert!(value.is_finite(), "non-finite output from {op:?}");
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            param: false,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Constant input; no gradient flows into it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            param: false,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            param: true,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn conv1d_same(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let out = tensor::conv1d_same(self.value(x), self.value(w), self.value(b))?;
        Ok(self.push(out, Op::Conv { x, w, b }, &[x, w, b]))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(0.0));
        self.push(out, Op::Relu(x), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(math::sigmoid);
        self.push(out, Op::Sigmoid(x), &[x])
    }

    /// `[B,L,C] → [B,C]`.
    pub fn mean_time(&mut self, x: Var) -> Result<Var> {
        let out = tensor::global_avg_pool(self.value(x))?;
        Ok(self.push(out, Op::MeanTime(x), &[x]))
    }

    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let out = tensor::dense(self.value(x), self.value(w), self.value(b))?;
        Ok(self.push(out, Op::Dense { x, w, b }, &[x, w, b]))
    }

    pub fn scale_channels(&mut self, x: Var, s: Var) -> Result<Var> {
        let out = tensor::scale_channels(self.value(x), self.value(s))?;
        Ok(self.push(out, Op::ScaleChannels { x, s }, &[x, s]))
    }

    /// Squeeze-and-excite block built from primitive ops.
    pub fn squeeze_excite(&mut self, x: Var, w1: Var, b1: Var, w2: Var, b2: Var) -> Result<Var> {
        let squeezed = self.mean_time(x)?;
        let hidden = self.dense(squeezed, w1, b1)?;
        let hidden = self.relu(hidden);
        let gate = self.dense(hidden, w2, b2)?;
        let gate = self.sigmoid(gate);
        self.scale_channels(x, gate)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        expect_shape(self.value(b), self.value(a).shape(), what)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let out = Tensor::new(self.value(a).shape(), data)?;
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let out = Tensor::new(self.value(a).shape(), data)?;
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    /// Row-wise softmax of `[B,M]`.
    pub fn softmax(&mut self, z: Var) -> Result<Var> {
        let out = tensor::softmax_rows(self.value(z))?;
        Ok(self.push(out, Op::Softmax(z), &[z]))
    }

    /// Per-row convex combination: `out[b,h] = Σ_m f[b,h,m]·w[b,m]`.
    pub fn combine(&mut self, w: Var, f: Tensor) -> Result<Var> {
        let (batch, m) = self.value(w).dims2("combination weights")?;
        let (fb, h, fm) = f.dims3("forecast stack")?;
        if (fb, fm) != (batch, m) {
            return Err(Error::ShapeMismatch(format!(
                "forecasts {:?} do not match weights [{batch}, {m}]",
                f.shape()
            )));
        }
        let wv = self.value(w).data();
        let mut out = vec![0.0; batch * h];
        for b in 0..batch {
            for hh in 0..h {
                out[b * h + hh] = dot(&f.data()[(b * h + hh) * m..(b * h + hh + 1) * m], &wv[b * m..(b + 1) * m]);
            }
        }
        let out = Tensor::new(&[batch, h], out)?;
        Ok(self.push(out, Op::Combine { w, f }, &[w]))
    }

    /// `Σ_b rows[b]·‖pred_b − target_b‖²` as a scalar.
    pub fn weighted_sq_error(&mut self, pred: Var, target: Tensor, rows: Vec<f64>) -> Result<Var> {
        let (batch, h) = self.value(pred).dims2("prediction")?;
        expect_shape(&target, &[batch, h], "target")?;
        crate::error::check_len(batch, rows.len())?;
        let p = self.value(pred).data();
        let total: f64 = (0..batch)
            .filter(|&b| rows[b] != 0.0)
            .map(|b| {
                let se: f64 = (0..h).map(|k| math::powi(p[b * h + k] - target.data()[b * h + k], 2)).sum();
                rows[b] * se
            })
            .sum();
        Ok(self.push(Tensor::scalar(total), Op::WeightedSqError { pred, target, rows }, &[pred]))
    }

    /// Binary cross-entropy with probabilities clipped to
    /// `[PROB_CLIP, 1 − PROB_CLIP]`, each row weighted by `rows[b]` and
    /// summed over columns.
    pub fn bce(&mut self, p: Var, target: Tensor, rows: Vec<f64>) -> Result<Var> {
        let (batch, m) = self.value(p).dims2("probabilities")?;
        expect_shape(&target, &[batch, m], "labels")?;
        crate::error::check_len(batch, rows.len())?;
        let pv = self.value(p).data();
        let mut total = 0.0;
        for b in 0..batch {
            let mut row = 0.0;
            for j in 0..m {
                let pc = pv[b * m + j].clamp(PROB_CLIP, 1.0 - PROB_CLIP);
                let t = target.data()[b * m + j];
                row -= t * math::ln(pc) + (1.0 - t) * math::ln(1.0 - pc);
            }
            total += rows[b] * row;
        }
        Ok(self.push(Tensor::scalar(total), Op::Bce { p, target, rows }, &[p]))
    }

    /// `A·Cᵀ` for `A: [B,D]`, `C: [N,D]`.
    pub fn matmul_bt(&mut self, a: Var, c: Var) -> Result<Var> {
        let (ra, d) = self.value(a).dims2("left operand")?;
        let (rc, dc) = self.value(c).dims2("right operand")?;
        if d != dc {
            return Err(Error::ShapeMismatch(format!("inner dims {d} vs {dc}")));
        }
        let (av, cv) = (self.value(a).data(), self.value(c).data());
        let mut out = vec![0.0; ra * rc];
        for i in 0..ra {
            for j in 0..rc {
                out[i * rc + j] = dot(&av[i * d..(i + 1) * d], &cv[j * d..(j + 1) * d]);
            }
        }
        let out = Tensor::new(&[ra, rc], out)?;
        Ok(self.push(out, Op::MatMulBt(a, c), &[a, c]))
    }

    pub fn sum_squares(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data().iter().map(|v| v * v).sum();
        self.push(Tensor::scalar(s), Op::SumSquares(x), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let out = self.value(x).map(|v| v * k);
        self.push(out, Op::Scale(x, k), &[x])
    }

    /// Column `col` of a `[B,M]` tensor as a `[B]` vector.
    pub fn column(&mut self, x: Var, col: usize) -> Result<Var> {
        let (batch, m) = self.value(x).dims2("column source")?;
        if col >= m {
            return Err(Error::ShapeMismatch(format!("column {col} out of {m}")));
        }
        let data = (0..batch).map(|b| self.value(x).data()[b * m + col]).collect();
        let out = Tensor::new(&[batch], data)?;
        Ok(self.push(out, Op::Column { x, col }, &[x]))
    }

    /// Gradients of the scalar `loss` with respect to every node that
    /// depends on a parameter.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "loss must be scalar, got {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        let disconnected: Vec<usize> = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(i, n)| n.param && grads[*i].is_none())
            .map(|(i, _)| i)
            .collect();
        for &i in &disconnected {
            log::warn!("parameter node {i} does not reach the loss; gradient is zero");
        }
        Ok(Gradients { grads, disconnected })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| Tensor::zeros(self.value(v).shape()));
        f(slot.data_mut());
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let out = &self.nodes[i].value;
        let gd = g.data();
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Conv { x, w, b } => {
                let xt = self.value(*x);
                let wt = self.value(*w);
                let (batch, len, cin) = xt.dims3("conv input")?;
                let (k, _, cout) = wt.dims3("conv kernel")?;
                let pad = tensor::same_pad_left(k);
                self.accumulate(grads, *b, |db| {
                    for row in gd.chunks(cout) {
                        axpy(1.0, row, db);
                    }
                });
                let taps = |t: usize| {
                    (0..k).filter_map(move |kk| {
                        (t + kk).checked_sub(pad).filter(|&s| s < len).map(|s| (kk, s))
                    })
                };
                self.accumulate(grads, *w, |dw| {
                    for bi in 0..batch {
                        for t in 0..len {
                            let go = &gd[(bi * len + t) * cout..(bi * len + t + 1) * cout];
                            for (kk, src) in taps(t) {
                                let xs = &xt.data()[(bi * len + src) * cin..(bi * len + src + 1) * cin];
                                for (c, &xv) in xs.iter().enumerate() {
                                    if xv != 0.0 {
                                        axpy(xv, go, &mut dw[(kk * cin + c) * cout..(kk * cin + c + 1) * cout]);
                                    }
                                }
                            }
                        }
                    }
                });
                self.accumulate(grads, *x, |dx| {
                    for bi in 0..batch {
                        for t in 0..len {
                            let go = &gd[(bi * len + t) * cout..(bi * len + t + 1) * cout];
                            for (kk, src) in taps(t) {
                                let dxs = &mut dx[(bi * len + src) * cin..(bi * len + src + 1) * cin];
                                for (c, d) in dxs.iter_mut().enumerate() {
                                    *d += dot(go, &wt.data()[(kk * cin + c) * cout..(kk * cin + c + 1) * cout]);
                                }
                            }
                        }
                    }
                });
            }
            Op::Relu(x) => self.accumulate(grads, *x, |dx| {
                for ((d, &y), &gv) in dx.iter_mut().zip(out.data()).zip(gd) {
                    if y > 0.0 {
                        *d += gv;
                    }
                }
            }),
            Op::Sigmoid(x) => self.accumulate(grads, *x, |dx| {
                for ((d, &y), &gv) in dx.iter_mut().zip(out.data()).zip(gd) {
                    *d += gv * y * (1.0 - y);
                }
            }),
            Op::MeanTime(x) => {
                let (batch, len, c) = self.value(*x).dims3("pool input")?;
                self.accumulate(grads, *x, |dx| {
                    for bi in 0..batch {
                        let go = &gd[bi * c..(bi + 1) * c];
                        for t in 0..len {
                            axpy(1.0 / len as f64, go, &mut dx[(bi * len + t) * c..(bi * len + t + 1) * c]);
                        }
                    }
                });
            }
            Op::Dense { x, w, b } => {
                let xt = self.value(*x);
                let wt = self.value(*w);
                let (batch, din) = xt.dims2("dense input")?;
                let (_, dout) = wt.dims2("dense weights")?;
                self.accumulate(grads, *b, |db| {
                    for row in gd.chunks(dout) {
                        axpy(1.0, row, db);
                    }
                });
                self.accumulate(grads, *w, |dw| {
                    for bi in 0..batch {
                        let go = &gd[bi * dout..(bi + 1) * dout];
                        for (i, &xv) in xt.data()[bi * din..(bi + 1) * din].iter().enumerate() {
                            axpy(xv, go, &mut dw[i * dout..(i + 1) * dout]);
                        }
                    }
                });
                self.accumulate(grads, *x, |dx| {
                    for bi in 0..batch {
                        let go = &gd[bi * dout..(bi + 1) * dout];
                        for i in 0..din {
                            dx[bi * din + i] += dot(go, &wt.data()[i * dout..(i + 1) * dout]);
                        }
                    }
                });
            }
            Op::ScaleChannels { x, s } => {
                let xt = self.value(*x);
                let st = self.value(*s);
                let (batch, len, c) = xt.dims3("scale input")?;
                self.accumulate(grads, *x, |dx| {
                    for bi in 0..batch {
                        let sc = &st.data()[bi * c..(bi + 1) * c];
                        for t in 0..len {
                            let off = (bi * len + t) * c;
                            for ch in 0..c {
                                dx[off + ch] += gd[off + ch] * sc[ch];
                            }
                        }
                    }
                });
                self.accumulate(grads, *s, |ds| {
                    for bi in 0..batch {
                        for t in 0..len {
                            let off = (bi * len + t) * c;
                            for ch in 0..c {
                                ds[bi * c + ch] += gd[off + ch] * xt.data()[off + ch];
                            }
                        }
                    }
                });
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate(grads, *a, |da| {
                    for ((d, &gv), &y) in da.iter_mut().zip(gd).zip(bv) {
                        *d += gv * y;
                    }
                });
                self.accumulate(grads, *b, |db| {
                    for ((d, &gv), &y) in db.iter_mut().zip(gd).zip(av) {
                        *d += gv * y;
                    }
                });
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |da| axpy(1.0, gd, da));
                self.accumulate(grads, *b, |db| axpy(1.0, gd, db));
            }
            Op::Softmax(z) => {
                let (_, m) = out.dims2("softmax")?;
                self.accumulate(grads, *z, |dz| {
                    for ((d, y), go) in dz.chunks_mut(m).zip(out.data().chunks(m)).zip(gd.chunks(m)) {
                        let inner = dot(go, y);
                        for j in 0..m {
                            d[j] += y[j] * (go[j] - inner);
                        }
                    }
                });
            }
            Op::Combine { w, f } => {
                let (batch, h, m) = f.dims3("forecast stack")?;
                self.accumulate(grads, *w, |dw| {
                    for b in 0..batch {
                        for hh in 0..h {
                            axpy(
                                gd[b * h + hh],
                                &f.data()[(b * h + hh) * m..(b * h + hh + 1) * m],
                                &mut dw[b * m..(b + 1) * m],
                            );
                        }
                    }
                });
            }
            Op::WeightedSqError { pred, target, rows } => {
                let p = self.value(*pred).data();
                let h = p.len() / rows.len().max(1);
                let gs = gd[0];
                self.accumulate(grads, *pred, |dp| {
                    for (k, d) in dp.iter_mut().enumerate() {
                        *d += gs * 2.0 * rows[k / h] * (p[k] - target.data()[k]);
                    }
                });
            }
            Op::Bce { p, target, rows } => {
                let pv = self.value(*p).data();
                let m = pv.len() / rows.len().max(1);
                let gs = gd[0];
                self.accumulate(grads, *p, |dp| {
                    for (k, d) in dp.iter_mut().enumerate() {
                        let x = pv[k];
                        if x > PROB_CLIP && x < 1.0 - PROB_CLIP {
                            let t = target.data()[k];
                            *d += gs * rows[k / m] * (-t / x + (1.0 - t) / (1.0 - x));
                        }
                    }
                });
            }
            Op::MatMulBt(a, c) => {
                let (av, cv) = (self.value(*a).data(), self.value(*c).data());
                let (ra, d) = self.value(*a).dims2("left operand")?;
                let (rc, _) = self.value(*c).dims2("right operand")?;
                self.accumulate(grads, *a, |da| {
                    for i in 0..ra {
                        for j in 0..rc {
                            axpy(gd[i * rc + j], &cv[j * d..(j + 1) * d], &mut da[i * d..(i + 1) * d]);
                        }
                    }
                });
                self.accumulate(grads, *c, |dc| {
                    for i in 0..ra {
                        for j in 0..rc {
                            axpy(gd[i * rc + j], &av[i * d..(i + 1) * d], &mut dc[j * d..(j + 1) * d]);
                        }
                    }
                });
            }
            Op::SumSquares(x) => {
                let xv = self.value(*x).data();
                self.accumulate(grads, *x, |dx| axpy(2.0 * gd[0], xv, dx));
            }
            Op::Sum(x) => self.accumulate(grads, *x, |dx| {
                for d in dx.iter_mut() {
                    *d += gd[0];
                }
            }),
            Op::Scale(x, k) => self.accumulate(grads, *x, |dx| axpy(*k, gd, dx)),
            Op::Column { x, col } => {
                let (_, m) = self.value(*x).dims2("column source")?;
                self.accumulate(grads, *x, |dx| {
                    for (b, &gv) in gd.iter().enumerate() {
                        dx[b * m + col] += gv;
                    }
                });
            }
        }
        Ok(())
    }
}

/// Result of [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    disconnected: Vec<usize>,
}

impl Gradients {
    /// Gradient for `v`, `None` if it does not influence the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, failing with [`Error::DisconnectedGraph`] when the
    /// node does not reach the loss.
    pub fn wrt(&self, v: Var) -> Result<&Tensor> {
        self.get(v).ok_or(Error::DisconnectedGraph(v.0))
    }

    /// Gradient for a parameter, zeros if disconnected.
    pub fn or_zeros(&self, tape: &Tape, v: Var) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(tape.value(v).shape()))
    }

    /// Parameter nodes that received no gradient.
    pub fn disconnected(&self) -> &[usize] {
        &self.disconnected
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn relu_pattern_tracks_signs() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(&[4], vec![-1.0, 0.0, 2.0, 3.0]).unwrap());
        tape.relu(x);
        let y = tape.constant(Tensor::new(&[1], vec![0.5]).unwrap());
        tape.relu(y);
        assert_eq!(tape.relu_pattern(), [false, false, true, true, true]);
    }

    /// Central-difference check of `build` w.r.t. every coordinate of every
    /// parameter it registers.
    fn check_gradients(params: Vec<Tensor>, build: impl Fn(&mut Tape, &[Var]) -> Var) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
        let loss = build(&mut tape, &vars);
        let grads = tape.backward(loss).unwrap();
        let eval = |ps: &[Tensor]| {
            let mut t = Tape::new();
            let vs: Vec<Var> = ps.iter().map(|p| t.param(p.clone())).collect();
            let l = build(&mut t, &vs);
            t.value(l).item()
        };
        let step = 1e-6;
        for (pi, p) in params.iter().enumerate() {
            let analytic = grads.or_zeros(&tape, vars[pi]);
            for k in 0..p.len() {
                let mut plus = params.clone();
                plus[pi].data_mut()[k] += step;
                let mut minus = params.clone();
                minus[pi].data_mut()[k] -= step;
                let numeric = (eval(&plus) - eval(&minus)) / (2.0 * step);
                let a = analytic.data()[k];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                assert!(rel < 1e-5, "param {pi}[{k}]: analytic {a} numeric {numeric}");
            }
        }
    }

    #[test]
    fn sum_of_params_has_unit_gradient() {
        let mut tape = Tape::new();
        let p = tape.param(Tensor::new(&[3], vec![1.0, -2.0, 0.5]).unwrap());
        let s = tape.sum(p);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(p).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn duplicated_input_sums_paths() {
        let mut tape = Tape::new();
        let p = tape.param(Tensor::new(&[2], vec![3.0, -1.0]).unwrap());
        let sq = tape.mul(p, p).unwrap();
        let twice = tape.add(p, p).unwrap();
        let both = tape.add(sq, twice).unwrap();
        let s = tape.sum(both);
        let g = tape.backward(s).unwrap();
        // d/dp (p² + 2p) = 2p + 2
        assert_eq!(g.wrt(p).unwrap().data(), &[8.0, 0.0]);
    }

    #[test]
    fn disconnected_parameter_reported() {
        let mut tape = Tape::new();
        let a = tape.param(Tensor::scalar(2.0));
        let b = tape.param(Tensor::scalar(5.0));
        let s = tape.sum(a);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(b), Err(Error::DisconnectedGraph(b.index())));
        assert_eq!(g.or_zeros(&tape, b).data(), &[0.0]);
        assert_eq!(g.disconnected(), &[b.index()]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let a = tape.param(Tensor::zeros(&[2]));
        assert!(tape.backward(a).is_err());
    }

    #[test]
    fn backward_leaves_values_untouched() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x0 = random(&mut rng, &[2, 6, 3]);
        let w0 = random(&mut rng, &[4, 3, 2]);
        let mut tape = Tape::new();
        let x = tape.constant(x0.clone());
        let w = tape.param(w0.clone());
        let b = tape.param(Tensor::zeros(&[2]));
        let y = tape.conv1d_same(x, w, b).unwrap();
        let l = tape.sum_squares(y);
        tape.backward(l).unwrap();
        assert_eq!(tape.value(x), &x0);
        assert_eq!(tape.value(w), &w0);
        assert!(tape.backward(l).unwrap().get(x).is_none());
    }

    #[test]
    fn conv_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for k in [2, 4, 8] {
            let ps = vec![random(&mut rng, &[2, 9, 3]), random(&mut rng, &[k, 3, 2]), random(&mut rng, &[2])];
            check_gradients(ps, |t, v| {
                let y = t.conv1d_same(v[0], v[1], v[2]).unwrap();
                t.sum_squares(y)
            });
        }
    }

    #[test]
    fn se_block_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ps = vec![
            random(&mut rng, &[2, 5, 4]),
            random(&mut rng, &[4, 2]),
            random(&mut rng, &[2]).map(|v| v + 2.0),
            random(&mut rng, &[2, 4]),
            random(&mut rng, &[4]),
        ];
        check_gradients(ps, |t, v| {
            let y = t.squeeze_excite(v[0], v[1], v[2], v[3], v[4]).unwrap();
            t.sum_squares(y)
        });
    }

    #[test]
    fn softmax_jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let z = random(&mut rng, &[1, 4]);
        let step = 1e-6;
        for t in 0..4 {
            for j in 0..4 {
                let mut tape = Tape::new();
                let zv = tape.param(z.clone());
                let y = tape.softmax(zv).unwrap();
                let c = tape.column(y, t).unwrap();
                let s = tape.sum(c);
                let analytic = tape.backward(s).unwrap().wrt(zv).unwrap().data()[j];
                let w = tensor::softmax_rows(&z).unwrap();
                let kron = if j == t { 1.0 } else { 0.0 };
                assert!((analytic - w.data()[t] * (kron - w.data()[j])).abs() < 1e-15);
                let mut zp = z.clone();
                zp.data_mut()[j] += step;
                let mut zm = z.clone();
                zm.data_mut()[j] -= step;
                let fd = (tensor::softmax_rows(&zp).unwrap().data()[t]
                    - tensor::softmax_rows(&zm).unwrap().data()[t])
                    / (2.0 * step);
                assert!((analytic - fd).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn loss_op_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f = random(&mut rng, &[2, 3, 4]);
        let y = random(&mut rng, &[2, 3]);
        let labels = Tensor::new(&[2, 4], vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
        let ps = vec![random(&mut rng, &[2, 4]), random(&mut rng, &[2, 4]), random(&mut rng, &[2, 3]), random(&mut rng, &[2, 3])];
        check_gradients(ps, move |t, v| {
            let prod = t.mul(v[0], v[1]).unwrap();
            let w = t.softmax(prod).unwrap();
            let pred = t.combine(w, f.clone()).unwrap();
            let comb = t.weighted_sq_error(pred, y.clone(), vec![0.7, 0.3]).unwrap();
            let p = t.sigmoid(v[1]);
            let cls = t.bce(p, labels.clone(), vec![0.5, 0.5]).unwrap();
            let g = t.matmul_bt(v[2], v[3]).unwrap();
            let ort = t.sum_squares(g);
            let ort = t.scale(ort, 0.1);
            let a = t.add(comb, cls).unwrap();
            t.add(a, ort).unwrap()
        });
    }

    #[test]
    fn dense_relu_pool_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ps = vec![random(&mut rng, &[3, 4, 2]), random(&mut rng, &[2, 3]), random(&mut rng, &[3])];
        check_gradients(ps, |t, v| {
            let r = t.relu(v[0]);
            let m = t.mean_time(r).unwrap();
            let d = t.dense(m, v[1], v[2]).unwrap();
            t.sum_squares(d)
        });
    }

    #[test]
    fn bce_perfect_prediction_is_near_zero() {
        let mut tape = Tape::new();
        let p = tape.param(Tensor::new(&[1, 3], vec![1.0, 0.0, 1.0]).unwrap());
        let target = Tensor::new(&[1, 3], vec![1.0, 0.0, 1.0]).unwrap();
        let l = tape.bce(p, target, vec![1.0]).unwrap();
        assert!(tape.value(l).item() < 1e-6);
    }
}
