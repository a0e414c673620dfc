//! Dense row-major tensors and the forward kernels used by the network.
//!
//! Sequence tensors are laid out `[batch, time, channel]`; vectors per
//! sample are `[batch, features]`. Convolution kernels are `[K, C_in, C_out]`
//! and dense weights `[D_in, D_out]`, so the innermost loops run over the
//! output channel.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub(crate) fn dims3(&self, what: &str) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [a, b, c] => Ok((a, b, c)),
            _ => Err(Error::ShapeMismatch(format!(
                "{what}: expected rank 3, got {:?}",
                self.shape
            ))),
        }
    }

    pub(crate) fn dims2(&self, what: &str) -> Result<(usize, usize)> {
        match self.shape[..] {
            [a, b] => Ok((a, b)),
            _ => Err(Error::ShapeMismatch(format!(
                "{what}: expected rank 2, got {:?}",
                self.shape
            ))),
        }
    }
}

pub(crate) fn expect_shape(t: &Tensor, shape: &[usize], what: &str) -> Result<()> {
    if t.shape() == shape {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(format!(
            "{what}: expected {shape:?}, got {:?}",
            t.shape()
        )))
    }
}

/// Left zero-padding for a length-preserving convolution with kernel `k`.
/// The remaining `k - 1 - k/2` positions are padded on the right.
pub const fn same_pad_left(k: usize) -> usize {
    k / 2
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Stride-1 convolution with zero "same" padding: `[B,L,Cin] → [B,L,Cout]`.
pub fn conv1d_same(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (batch, len, cin) = x.dims3("conv input")?;
    let (k, wcin, cout) = w.dims3("conv kernel")?;
    if wcin != cin {
        return Err(Error::ShapeMismatch(format!(
            "conv kernel expects {wcin} input channels, input has {cin}"
        )));
    }
    expect_shape(b, &[cout], "conv bias")?;
    if k > len {
        return Err(Error::ShapeMismatch(format!("kernel {k} longer than input {len}")));
    }
    let pad = same_pad_left(k);
    let mut out = vec![0.0; batch * len * cout];
    for bi in 0..batch {
        for t in 0..len {
            let o = &mut out[(bi * len + t) * cout..(bi * len + t + 1) * cout];
            o.copy_from_slice(b.data());
            for kk in 0..k {
                let Some(src) = (t + kk).checked_sub(pad).filter(|&s| s < len) else {
                    continue;
                };
                let xs = &x.data[(bi * len + src) * cin..(bi * len + src + 1) * cin];
                for (i, &xv) in xs.iter().enumerate() {
                    if xv != 0.0 {
                        axpy(xv, &w.data[(kk * cin + i) * cout..(kk * cin + i + 1) * cout], o);
                    }
                }
            }
        }
    }
    Tensor::new(&[batch, len, cout], out)
}

/// Mean over the time axis: `[B,L,C] → [B,C]`.
pub fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    let (batch, len, c) = x.dims3("pool input")?;
    if len == 0 {
        return Err(Error::ShapeMismatch("pooling over empty time axis".into()));
    }
    let mut out = vec![0.0; batch * c];
    for bi in 0..batch {
        let o = &mut out[bi * c..(bi + 1) * c];
        for t in 0..len {
            axpy(1.0, &x.data[(bi * len + t) * c..(bi * len + t + 1) * c], o);
        }
        for v in o.iter_mut() {
            *v /= len as f64;
        }
    }
    Tensor::new(&[batch, c], out)
}

/// Affine map `x·W + b`: `[B,Din] → [B,Dout]`.
pub fn dense(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (batch, din) = x.dims2("dense input")?;
    let (wdin, dout) = w.dims2("dense weights")?;
    if wdin != din {
        return Err(Error::ShapeMismatch(format!(
            "dense weights expect {wdin} inputs, got {din}"
        )));
    }
    expect_shape(b, &[dout], "dense bias")?;
    let mut out = vec![0.0; batch * dout];
    for bi in 0..batch {
        let o = &mut out[bi * dout..(bi + 1) * dout];
        o.copy_from_slice(b.data());
        for (i, &xv) in x.data[bi * din..(bi + 1) * din].iter().enumerate() {
            axpy(xv, &w.data[i * dout..(i + 1) * dout], o);
        }
    }
    Tensor::new(&[batch, dout], out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Linear => v,
            Activation::Relu => v.max(0.0),
            Activation::Sigmoid => math::sigmoid(v),
        }
    }
}

/// Dense layer followed by an activation.
pub fn dense_act(x: &Tensor, w: &Tensor, b: &Tensor, act: Activation) -> Result<Tensor> {
    Ok(dense(x, w, b)?.map(|v| act.apply(v)))
}

/// Row-wise max-subtracted softmax of a `[B,M]` tensor.
pub fn softmax_rows(z: &Tensor) -> Result<Tensor> {
    let (batch, m) = z.dims2("softmax input")?;
    let mut out = z.data.clone();
    for row in out.chunks_mut(m.max(1)).take(batch) {
        softmax_in_place(row);
    }
    Tensor::new(&[batch, m], out)
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = math::exp(*v - max);
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// Multiplies every time step of channel `c` by `s[b, c]`.
pub fn scale_channels(x: &Tensor, s: &Tensor) -> Result<Tensor> {
    let (batch, len, c) = x.dims3("scale input")?;
    expect_shape(s, &[batch, c], "channel scales")?;
    let mut out = x.data.clone();
    for bi in 0..batch {
        let scales = &s.data[bi * c..(bi + 1) * c];
        for t in 0..len {
            let row = &mut out[(bi * len + t) * c..(bi * len + t + 1) * c];
            for (v, sc) in row.iter_mut().zip(scales) {
                *v *= sc;
            }
        }
    }
    Tensor::new(&[batch, len, c], out)
}

/// Squeeze-and-excite gate: time mean, dense+ReLU to the bottleneck,
/// dense+sigmoid back to `C`, then channel-wise rescale of `x`.
pub fn squeeze_excite(
    x: &Tensor,
    w1: &Tensor,
    b1: &Tensor,
    w2: &Tensor,
    b2: &Tensor,
) -> Result<Tensor> {
    let squeezed = global_avg_pool(x)?;
    let hidden = dense_act(&squeezed, w1, b1, Activation::Relu)?;
    let gate = dense_act(&hidden, w2, b2, Activation::Sigmoid)?;
    scale_channels(x, &gate)
}

/// Bottleneck width `⌈C/r⌉`, at least 1.
pub fn se_width(channels: usize, ratio: usize) -> usize {
    channels.div_ceil(ratio.max(1)).max(1)
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

    fn naive_conv(x: &Tensor, w: &Tensor, b: &Tensor) -> Vec<f64> {
        let (bn, l, cin) = x.dims3("x").unwrap();
        let (k, _, cout) = w.dims3("w").unwrap();
        let pad = k as isize / 2;
        let mut out = vec![0.0; bn * l * cout];
        for bi in 0..bn {
            for t in 0..l {
                for o in 0..cout {
                    let mut acc = b.data()[o];
                    for kk in 0..k {
                        let src = t as isize + kk as isize - pad;
                        if src < 0 || src >= l as isize {
                            continue;
                        }
                        for i in 0..cin {
                            acc += x.data()[(bi * l + src as usize) * cin + i]
                                * w.data()[(kk * cin + i) * cout + o];
                        }
                    }
                    out[(bi * l + t) * cout + o] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_identity_kernel() {
        let x = Tensor::new(&[1, 4, 1], vec![1.0, -2.0, 3.0, 0.5]).unwrap();
        let y = conv1d_same(&x, &Tensor::full(&[1, 1, 1], 1.0), &Tensor::zeros(&[1])).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn conv_left_padding_example() {
        let x = Tensor::full(&[1, 8, 1], 1.0);
        let y = conv1d_same(&x, &Tensor::full(&[2, 1, 1], 1.0), &Tensor::zeros(&[1])).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn conv_matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for k in [2, 4, 8] {
            let x = random(&mut rng, &[2, 16, 3]);
            let w = random(&mut rng, &[k, 3, 5]);
            let b = random(&mut rng, &[5]);
            let y = conv1d_same(&x, &w, &b).unwrap();
            assert_eq!(y.shape(), &[2, 16, 5]);
            for (a, e) in y.data().iter().zip(naive_conv(&x, &w, &b)) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_shape_errors() {
        let x = Tensor::zeros(&[1, 4, 2]);
        assert!(conv1d_same(&x, &Tensor::zeros(&[2, 3, 1]), &Tensor::zeros(&[1])).is_err());
        assert!(conv1d_same(&x, &Tensor::zeros(&[8, 2, 1]), &Tensor::zeros(&[1])).is_err());
    }

    #[test]
    fn pool_examples() {
        let x = Tensor::new(&[1, 2, 1], vec![1.0, 3.0]).unwrap();
        assert_eq!(global_avg_pool(&x).unwrap().data(), &[2.0]);
        let c = Tensor::full(&[2, 5, 3], 4.5);
        assert!(global_avg_pool(&c).unwrap().data().iter().all(|&v| v == 4.5));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = random(&mut rng, &[1, 7, 2]);
        let p = global_avg_pool(&r).unwrap();
        for ch in 0..2 {
            let m: f64 = (0..7).map(|t| r.data()[t * 2 + ch]).sum::<f64>() / 7.0;
            assert!((p.data()[ch] - m).abs() < 1e-15);
        }
    }

    #[test]
    fn dense_examples() {
        let x = Tensor::new(&[1, 2], vec![3.0, -1.0]).unwrap();
        let b = Tensor::new(&[3], vec![0.1, 0.2, 0.3]).unwrap();
        let y = dense_act(&x, &Tensor::zeros(&[2, 3]), &b, Activation::Linear).unwrap();
        assert_eq!(y.data(), b.data());
        let s = dense_act(&x, &Tensor::zeros(&[2, 1]), &Tensor::zeros(&[1]), Activation::Sigmoid)
            .unwrap();
        assert_eq!(s.data(), &[0.5]);

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random(&mut rng, &[3, 4]);
        let w = random(&mut rng, &[4, 2]);
        let b = random(&mut rng, &[2]);
        let y = dense(&x, &w, &b).unwrap();
        for r in 0..3 {
            for c in 0..2 {
                let e: f64 = b.data()[c] + (0..4).map(|i| x.data()[r * 4 + i] * w.data()[i * 2 + c]).sum::<f64>();
                assert!((y.data()[r * 2 + c] - e).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn softmax_examples() {
        let z = Tensor::new(&[1, 2], vec![0.0, 0.0]).unwrap();
        assert_eq!(softmax_rows(&z).unwrap().data(), &[0.5, 0.5]);
        let a = Tensor::new(&[1, 3], vec![0.3, -1.2, 2.0]).unwrap();
        let shifted = a.map(|v| v + 123.0);
        let (p, q) = (softmax_rows(&a).unwrap(), softmax_rows(&shifted).unwrap());
        for (x, y) in p.data().iter().zip(q.data()) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!((p.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn se_identity_when_gate_saturates() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = random(&mut rng, &[2, 6, 8]);
        let h = se_width(8, 4);
        // zero weights and a huge second bias push the gate to exactly 1.0
        let y = squeeze_excite(
            &x,
            &Tensor::zeros(&[8, h]),
            &Tensor::zeros(&[h]),
            &Tensor::zeros(&[h, 8]),
            &Tensor::full(&[8], 50.0),
        )
        .unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn se_matches_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = random(&mut rng, &[1, 5, 4]);
        let (w1, b1) = (random(&mut rng, &[4, 1]), random(&mut rng, &[1]));
        let (w2, b2) = (random(&mut rng, &[1, 4]), random(&mut rng, &[4]));
        let y = squeeze_excite(&x, &w1, &b1, &w2, &b2).unwrap();
        let means: Vec<f64> = (0..4).map(|c| (0..5).map(|t| x.data()[t * 4 + c]).sum::<f64>() / 5.0).collect();
        let hidden = (b1.data()[0] + (0..4).map(|c| means[c] * w1.data()[c]).sum::<f64>()).max(0.0);
        for c in 0..4 {
            let gate = 1.0 / (1.0 + (-(b2.data()[c] + hidden * w2.data()[c])).exp());
            assert!(gate > 0.0 && gate < 1.0);
            for t in 0..5 {
                assert!((y.data()[t * 4 + c] - x.data()[t * 4 + c] * gate).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn se_width_rounds_up() {
        assert_eq!(se_width(64, 4), 16);
        assert_eq!(se_width(1, 4), 1);
        assert_eq!(se_width(6, 4), 2);
    }
}
