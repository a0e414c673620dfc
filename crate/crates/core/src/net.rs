//! Two-branch multi-task meta-network.
//!
//! Each branch runs three conv blocks (conv, ReLU, squeeze-and-excite)
//! followed by global average pooling. The regression head is linear, the
//! classification head sigmoid, and the combination weights are
//! `softmax(o_reg ⊙ o_cls)`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::math;
use crate::matrix::Matrix;
use crate::optim::Adam;
use crate::tensor::{se_width, Tensor};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetConfig {
    pub input_len: usize,
    pub methods: usize,
    pub filters: [usize; 3],
    pub kernels: [usize; 3],
    pub se_ratio: usize,
}

impl NetConfig {
    pub fn new(input_len: usize, methods: usize) -> Self {
        Self {
            input_len,
            methods,
            filters: [64, 128, 64],
            kernels: [2, 4, 8],
            se_ratio: 4,
        }
    }

    /// Width of the pooled feature vectors `h_reg` and `h_cls`.
    pub fn feature_dim(&self) -> usize {
        self.filters[2]
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods < 2 {
            return Err(Error::InvalidArgument("the pool needs at least two methods".into()));
        }
        if self.filters.contains(&0) || self.se_ratio == 0 {
            return Err(Error::InvalidArgument("filters and SE ratio must be positive".into()));
        }
        if let Some(&k) = self.kernels.iter().find(|&&k| k == 0 || k > self.input_len) {
            return Err(Error::InvalidArgument(format!(
                "kernel {k} does not fit input length {}",
                self.input_len
            )));
        }
        Ok(())
    }

    /// Name and shape of every parameter tensor, in storage order.
    pub fn param_specs(&self) -> Vec<(String, Vec<usize>)> {
        let mut specs = Vec::new();
        for branch in ["reg", "cls"] {
            let mut cin = 1;
            for (i, (&c, &k)) in self.filters.iter().zip(&self.kernels).enumerate() {
                let r = se_width(c, self.se_ratio);
                let p = format!("{branch}.block{i}");
                specs.push((format!("{p}.conv.w"), vec![k, cin, c]));
                specs.push((format!("{p}.conv.b"), vec![c]));
                specs.push((format!("{p}.se.w1"), vec![c, r]));
                specs.push((format!("{p}.se.b1"), vec![r]));
                specs.push((format!("{p}.se.w2"), vec![r, c]));
                specs.push((format!("{p}.se.b2"), vec![c]));
                cin = c;
            }
            specs.push((format!("{branch}.head.w"), vec![self.feature_dim(), self.methods]));
            specs.push((format!("{branch}.head.b"), vec![self.methods]));
        }
        specs
    }
}

const PER_BLOCK: usize = 6;
const PER_BRANCH: usize = 3 * PER_BLOCK + 2;

/// How the two heads are fused into weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fusion {
    #[default]
    MultiTask,
    /// Classification output replaced by ones: `softmax(o_reg)`.
    RegressionOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaNet {
    config: NetConfig,
    params: Vec<Tensor>,
}

/// Per-sample network outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub o_reg: Vec<f64>,
    pub o_cls: Vec<f64>,
    pub h_reg: Vec<f64>,
    pub h_cls: Vec<f64>,
    pub w_hat: Vec<f64>,
}

/// Tape handles produced by [`MetaNet::forward_tape`].
#[derive(Debug, Clone)]
pub struct Graph {
    pub params: Vec<Var>,
    pub h_reg: Var,
    pub h_cls: Var,
    pub o_reg: Var,
    pub cls_logits: Var,
    pub o_cls: Var,
    pub w_hat: Var,
    /// Classification branch, block-3 output after the SE rescale.
    pub cls_maps: Var,
}

impl MetaNet {
    /// Fan-in scaled uniform weights, zero biases.
    pub fn init(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = config
            .param_specs()
            .into_iter()
            .map(|(name, shape)| {
                if name.ends_with(".b") || name.ends_with(".b1") || name.ends_with(".b2") {
                    return Tensor::zeros(&shape);
                }
                let fan_in: usize = shape[..shape.len() - 1].iter().product();
                // He bound ahead of a ReLU, LeCun bound for gates and heads
                let gain = if name.ends_with("conv.w") || name.ends_with("se.w1") { 6.0 } else { 3.0 };
                let bound = math::sqrt(gain / fan_in as f64);
                let n = shape.iter().product();
                let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
                Tensor::new(&shape, data).expect("spec shape")
            })
            .collect();
        Ok(Self { config, params })
    }

    /// Rebuilds a network from stored tensors, checking names and shapes.
    pub fn from_named(config: NetConfig, named: Vec<(String, Tensor)>) -> Result<Self> {
        config.validate()?;
        let specs = config.param_specs();
        if specs.len() != named.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} tensors, got {}",
                specs.len(),
                named.len()
            )));
        }
        let mut params = Vec::with_capacity(specs.len());
        for ((name, shape), (got_name, t)) in specs.into_iter().zip(named) {
            if name != got_name || t.shape() != shape.as_slice() {
                return Err(Error::ShapeMismatch(format!(
                    "expected {name} {shape:?}, got {got_name} {:?}",
                    t.shape()
                )));
            }
            if !t.is_finite() {
                return Err(Error::UntrainedModel);
            }
            params.push(t);
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        self.config
            .param_specs()
            .into_iter()
            .map(|(n, _)| n)
            .zip(&self.params)
            .collect()
    }

    /// Builds the forward graph for a batch of prepared inputs.
    pub fn forward_tape(&self, tape: &mut Tape, inputs: &[&[f64]], fusion: Fusion) -> Result<Graph> {
        let len = self.config.input_len;
        if inputs.is_empty() {
            return Err(Error::ShapeMismatch("empty batch".into()));
        }
        let mut flat = Vec::with_capacity(inputs.len() * len);
        for x in inputs {
            if x.len() != len {
                return Err(Error::ShapeMismatch(format!(
                    "input length {} but network expects {len}",
                    x.len()
                )));
            }
            flat.extend_from_slice(x);
        }
        let x = tape.constant(Tensor::new(&[inputs.len(), len, 1], flat)?);
        let params: Vec<Var> = self.params.iter().map(|p| tape.param(p.clone())).collect();

        let branch = |tape: &mut Tape, p: &[Var]| -> Result<(Var, Var, Var)> {
            let mut a = x;
            for block in p[..3 * PER_BLOCK].chunks(PER_BLOCK) {
                let c = tape.conv1d_same(a, block[0], block[1])?;
                let c = tape.relu(c);
                a = tape.squeeze_excite(c, block[2], block[3], block[4], block[5])?;
            }
            let h = tape.mean_time(a)?;
            let o = tape.dense(h, p[3 * PER_BLOCK], p[3 * PER_BLOCK + 1])?;
            Ok((a, h, o))
        };
        let (_, h_reg, o_reg) = branch(tape, &params[..PER_BRANCH])?;
        let (cls_maps, h_cls, cls_logits) = branch(tape, &params[PER_BRANCH..])?;
        let o_cls = tape.sigmoid(cls_logits);
        let gate = match fusion {
            Fusion::MultiTask => o_cls,
            Fusion::RegressionOnly => {
                tape.constant(Tensor::full(&[inputs.len(), self.config.methods], 1.0))
            }
        };
        let z = tape.mul(o_reg, gate)?;
        let w_hat = tape.softmax(z)?;
        Ok(Graph {
            params,
            h_reg,
            h_cls,
            o_reg,
            cls_logits,
            o_cls,
            w_hat,
            cls_maps,
        })
    }

    pub fn forward(&self, inputs: &[&[f64]], fusion: Fusion) -> Result<Vec<ForwardOutput>> {
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(64) {
            let mut tape = Tape::new();
            let g = self.forward_tape(&mut tape, chunk, fusion)?;
            let rows = |v: Var| -> Vec<Vec<f64>> {
                let t = tape.value(v);
                let w = t.len() / chunk.len();
                t.data().chunks(w).map(<[f64]>::to_vec).collect()
            };
            let (o_reg, o_cls, h_reg, h_cls, w_hat) =
                (rows(g.o_reg), rows(g.o_cls), rows(g.h_reg), rows(g.h_cls), rows(g.w_hat));
            for i in 0..chunk.len() {
                out.push(ForwardOutput {
                    o_reg: o_reg[i].clone(),
                    o_cls: o_cls[i].clone(),
                    h_reg: h_reg[i].clone(),
                    h_cls: h_cls[i].clone(),
                    w_hat: w_hat[i].clone(),
                });
            }
        }
        Ok(out)
    }

    /// Combination weights for one prepared input.
    pub fn predict_weights(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(&[input], Fusion::MultiTask)?.remove(0).w_hat)
    }

    /// Combination weights for many inputs, batched internally.
    pub fn predict_weights_batch(&self, inputs: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .forward(inputs, Fusion::MultiTask)?
            .into_iter()
            .map(|o| o.w_hat)
            .collect())
    }
}

/// Convex combination `F̂·w`.
pub fn combine(forecasts: &Matrix, weights: &[f64]) -> Result<Vec<f64>> {
    if forecasts.cols() != weights.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} forecast columns, {} weights",
            forecasts.cols(),
            weights.len()
        )));
    }
    forecasts.matvec(weights)
}

/// One series' training record.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub input: Vec<f64>,
    /// `H × M` pool forecasts for the held-out window.
    pub forecasts: Matrix,
    pub actual: Vec<f64>,
    pub labels: Vec<u8>,
}

/// Scalar loss terms of one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub comb: f64,
    pub cls: f64,
    pub ort: f64,
    /// Series left out of the combination term (zero denominator).
    pub skipped: usize,
}

/// Tape handles for the loss terms.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub total: Var,
    pub comb: Var,
    pub cls: Var,
    pub ort: Var,
    pub skipped: usize,
}

/// `‖F̂·1/M − y‖²`, the squared error of the simple average.
pub fn average_combination_sse(forecasts: &Matrix, actual: &[f64]) -> f64 {
    let m = forecasts.cols() as f64;
    (0..forecasts.rows())
        .map(|h| {
            let avg = forecasts.row(h).iter().sum::<f64>() / m;
            math::powi(avg - actual[h], 2)
        })
        .sum()
}

fn check_sample(s: &TrainingSample, config: &NetConfig, horizon: usize) -> Result<()> {
    let m = config.methods;
    if s.input.len() != config.input_len
        || s.forecasts.cols() != m
        || s.forecasts.rows() != horizon
        || s.actual.len() != horizon
        || s.labels.len() != m
    {
        return Err(Error::ShapeMismatch(format!(
            "sample with input {}, forecasts {}x{}, actual {}, labels {} does not match L={}, H={horizon}, M={m}",
            s.input.len(),
            s.forecasts.rows(),
            s.forecasts.cols(),
            s.actual.len(),
            s.labels.len(),
            config.input_len
        )));
    }
    Ok(())
}

/// Appends `L_comb + L_cls + λ·L_ort` for `batch` to the tape.
pub fn loss_on_tape(
    tape: &mut Tape,
    graph: &Graph,
    batch: &[&TrainingSample],
    lambda: f64,
) -> Result<LossVars> {
    let b = batch.len();
    let m = tape.value(graph.w_hat).shape()[1];
    let h = batch[0].actual.len();
    let mut stack = Vec::with_capacity(b * h * m);
    let mut target = Vec::with_capacity(b * h);
    let mut labels = Vec::with_capacity(b * m);
    let mut denoms = Vec::with_capacity(b);
    for s in batch {
        if s.actual.len() != h || s.forecasts.rows() != h || s.forecasts.cols() != m || s.labels.len() != m {
            return Err(Error::ShapeMismatch("inconsistent batch shapes".into()));
        }
        stack.extend_from_slice(s.forecasts.as_slice());
        target.extend_from_slice(&s.actual);
        labels.extend(s.labels.iter().map(|&l| f64::from(l)));
        denoms.push(average_combination_sse(&s.forecasts, &s.actual));
    }
    let skipped = denoms.iter().filter(|&&d| d == 0.0).count();
    if skipped > 0 {
        log::info!("{skipped} series with zero average-combination error left out of the batch");
    }
    let valid = (b - skipped) as f64;
    let rows: Vec<f64> = denoms
        .iter()
        .map(|&d| if d == 0.0 { 0.0 } else { 1.0 / (d * valid) })
        .collect();
    let pred = tape.combine(graph.w_hat, Tensor::new(&[b, h, m], stack)?)?;
    let comb = tape.weighted_sq_error(pred, Tensor::new(&[b, h], target)?, rows)?;
    let cls = tape.bce(graph.o_cls, Tensor::new(&[b, m], labels)?, vec![1.0 / b as f64; b])?;
    let gram = tape.matmul_bt(graph.h_reg, graph.h_cls)?;
    let ort = tape.sum_squares(gram);
    let weighted = tape.scale(ort, lambda);
    let total = tape.add(comb, cls)?;
    let total = tape.add(total, weighted)?;
    Ok(LossVars {
        total,
        comb,
        cls,
        ort,
        skipped,
    })
}

impl LossVars {
    pub fn read(&self, tape: &Tape) -> LossBreakdown {
        LossBreakdown {
            total: tape.value(self.total).item(),
            comb: tape.value(self.comb).item(),
            cls: tape.value(self.cls).item(),
            ort: tape.value(self.ort).item(),
            skipped: self.skipped,
        }
    }
}

/// Forward pass plus loss for one batch, no gradients.
pub fn loss_total(net: &MetaNet, batch: &[&TrainingSample], lambda: f64) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    let inputs: Vec<&[f64]> = batch.iter().map(|s| s.input.as_slice()).collect();
    let graph = net.forward_tape(&mut tape, &inputs, Fusion::MultiTask)?;
    Ok(loss_on_tape(&mut tape, &graph, batch, lambda)?.read(&tape))
}

/// Loss value and gradients for every parameter tensor.
pub fn loss_and_gradients(
    net: &MetaNet,
    batch: &[&TrainingSample],
    lambda: f64,
) -> Result<(LossBreakdown, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let inputs: Vec<&[f64]> = batch.iter().map(|s| s.input.as_slice()).collect();
    let graph = net.forward_tape(&mut tape, &inputs, Fusion::MultiTask)?;
    let loss = loss_on_tape(&mut tape, &graph, batch, lambda)?;
    let grads = tape.backward(loss.total)?;
    let g = graph.params.iter().map(|&v| grads.or_zeros(&tape, v)).collect();
    Ok((loss.read(&tape), g))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub lambda: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 32,
            lambda: 1e-1,
            max_epochs: 200,
            patience: 10,
            seed: 0,
            validation_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean batch loss over the epoch, weighted by batch size.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_loss: f64,
    pub stopped_early: bool,
    pub train_size: usize,
    pub val_size: usize,
}

fn evaluate(net: &MetaNet, data: &[&TrainingSample], batch: usize, lambda: f64) -> Result<f64> {
    let mut total = 0.0;
    for chunk in data.chunks(batch) {
        total += loss_total(net, chunk, lambda)?.total * chunk.len() as f64;
    }
    Ok(total / data.len() as f64)
}

/// Mini-batch Adam with early stopping on the validation loss. The
/// parameters of the best epoch are restored before returning.
pub fn train(net: &mut MetaNet, data: &[TrainingSample], config: &TrainConfig) -> Result<TrainReport> {
    let first = data
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty training set".into()))?;
    let horizon = first.actual.len();
    for s in data {
        check_sample(s, net.config(), horizon)?;
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let n_val = if data.len() < 2 {
        0
    } else {
        ((data.len() as f64 * config.validation_fraction).round() as usize).min(data.len() - 1)
    };
    let val: Vec<&TrainingSample> = order[..n_val].iter().map(|&i| &data[i]).collect();
    let mut train_idx: Vec<usize> = order[n_val..].to_vec();

    let mut adam = Adam::new(config.lr);
    let mut history = Vec::new();
    let mut best = (f64::INFINITY, 0usize, net.params.clone());
    let mut stale = 0;
    let mut stopped_early = false;
    for epoch in 1..=config.max_epochs {
        train_idx.shuffle(&mut rng);
        let mut sum = 0.0;
        for chunk in train_idx.chunks(config.batch_size) {
            let batch: Vec<&TrainingSample> = chunk.iter().map(|&i| &data[i]).collect();
            let (loss, grads) = loss_and_gradients(net, &batch, config.lambda)?;
            if !loss.total.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    detail: format!(
                        "comb {} cls {} ort {} on a batch of {}",
                        loss.comb,
                        loss.cls,
                        loss.ort,
                        batch.len()
                    ),
                });
            }
            sum += loss.total * batch.len() as f64;
            adam.step(&mut net.params, &grads)?;
        }
        let train_loss = sum / train_idx.len() as f64;
        let val_loss = if val.is_empty() {
            None
        } else {
            Some(evaluate(net, &val, config.batch_size, config.lambda)?)
        };
        let monitored = val_loss.unwrap_or(train_loss);
        if !monitored.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                detail: String::from("validation loss"),
            });
        }
        log::debug!("epoch {epoch}: train {train_loss:.6} val {val_loss:?}");
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if monitored < best.0 {
            best = (monitored, epoch, net.params.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                stopped_early = true;
                break;
            }
        }
    }
    let (best_loss, best_epoch, params) = best;
    net.params = params;
    Ok(TrainReport {
        history,
        best_epoch,
        best_loss,
        stopped_early,
        train_size: train_idx.len(),
        val_size: val.len(),
    })
}
