use rand::Rng;

use super::config::{ConvGeom, DenseGeom, Layout};
use super::{argmax, AdamState, Backbone, CnnConfig, Evaluation, Mode, ModelParams, PredictionScores};
use crate::augment::mix_weights;
use crate::batch::{FrameBatch, MixedBatch};
use crate::data::ClassId;
use crate::rng::RngStream;
use crate::sampling::FrameSet;
use crate::{Error, Result};

pub const GROUP_NORM_EPSILON: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct Cnn {
    config: CnnConfig,
    layout: Layout,
}

struct ConvTrace {
    /// Channel-major layer input.
    input: Vec<f64>,
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    /// Post-norm, pre-ReLU.
    y: Vec<f64>,
    /// Flat index into `y` of each pooled maximum.
    argmax: Vec<usize>,
}

struct Trace {
    convs: Vec<ConvTrace>,
    /// Input vector of every dense layer (after dropout for the output layer).
    dense_in: Vec<Vec<f64>>,
    /// Post-ReLU output of the last hidden layer, before dropout.
    last_hidden: Vec<f64>,
    dropout_mask: Option<Vec<f64>>,
    logits: Vec<f64>,
}

/// Per-group standardization of a channel-major `maps x len` block:
/// population mean and variance, `(z - mean) / sqrt(var + eps)`.
/// Returns the standardized values and the per-group `1 / sqrt(var + eps)`.
pub fn group_normalize(z: &[f64], maps: usize, len: usize, groups: usize) -> (Vec<f64>, Vec<f64>) {
    let per = maps / groups * len;
    let mut xhat = vec![0.0; z.len()];
    let mut inv = Vec::with_capacity(groups);
    for g in 0..groups {
        let block = &z[g * per..(g + 1) * per];
        let mean = block.iter().sum::<f64>() / per as f64;
        let var = block.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / per as f64;
        let s = 1.0 / (var + GROUP_NORM_EPSILON).sqrt();
        for (o, v) in xhat[g * per..(g + 1) * per].iter_mut().zip(block) {
            *o = (v - mean) * s;
        }
        inv.push(s);
    }
    (xhat, inv)
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

impl Cnn {
    pub fn new(config: CnnConfig) -> Result<Self> {
        let layout = config.layout()?;
        Ok(Self { config, layout })
    }

    pub fn config(&self) -> &CnnConfig {
        &self.config
    }

    fn frame_len(&self) -> usize {
        self.config.input_length * self.config.input_channels
    }

    fn check_params(&self, params: &ModelParams) -> Result<()> {
        if params.config() != &self.config {
            return Err(Error::Mismatch("parameters belong to a different cnn config".into()));
        }
        Ok(())
    }

    fn check_frames(&self, values: &[f64], length: usize, channels: usize) -> Result<usize> {
        if length != self.config.input_length || channels != self.config.input_channels {
            return Err(Error::Shape(format!(
                "frames are {length} x {channels}, network expects {} x {}",
                self.config.input_length, self.config.input_channels
            )));
        }
        if values.len() % self.frame_len() != 0 {
            return Err(Error::Shape(format!(
                "{} values is not a whole number of {length} x {channels} frames",
                values.len()
            )));
        }
        Ok(values.len() / self.frame_len())
    }

    fn conv_forward(g: &ConvGeom, p: &[f64], a: &[f64]) -> ConvTrace {
        let out = g.out_len;
        let mut z = vec![0.0; g.maps * out];
        for m in 0..g.maps {
            let zm = &mut z[m * out..(m + 1) * out];
            zm.fill(p[g.b + m]);
            for c in 0..g.in_channels {
                let ac = &a[c * g.in_len..(c + 1) * g.in_len];
                for j in 0..g.kernel {
                    let w = p[g.w + (m * g.in_channels + c) * g.kernel + j];
                    for (zt, x) in zm.iter_mut().zip(&ac[j..j + out]) {
                        *zt += w * x;
                    }
                }
            }
        }
        let (xhat, inv_std) = group_normalize(&z, g.maps, out, g.groups);
        let mut y = xhat.clone();
        for m in 0..g.maps {
            let (gamma, beta) = (p[g.gamma + m], p[g.beta + m]);
            for v in &mut y[m * out..(m + 1) * out] {
                *v = gamma * *v + beta;
            }
        }
        let mut argmax = Vec::with_capacity(g.maps * g.pooled_len);
        for m in 0..g.maps {
            for u in 0..g.pooled_len {
                let start = m * out + u * g.pool;
                let mut best = start;
                for t in start + 1..start + g.pool {
                    if y[t] > y[best] {
                        best = t;
                    }
                }
                argmax.push(best);
            }
        }
        ConvTrace {
            input: a.to_vec(),
            xhat,
            inv_std,
            y,
            argmax,
        }
    }

    fn dense_forward(d: &DenseGeom, p: &[f64], x: &[f64]) -> Vec<f64> {
        (0..d.output)
            .map(|o| {
                let row = &p[d.w + o * d.input..d.w + (o + 1) * d.input];
                let v = p[d.b + o] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
                if d.relu {
                    v.max(0.0)
                } else {
                    v
                }
            })
            .collect()
    }

    fn forward_frame(&self, p: &[f64], frame: &[f64], dropout: Option<&mut RngStream>) -> Trace {
        let (len, ch) = (self.config.input_length, self.config.input_channels);
        let mut a = vec![0.0; len * ch];
        for t in 0..len {
            for c in 0..ch {
                a[c * len + t] = frame[t * ch + c];
            }
        }
        let mut convs = Vec::with_capacity(self.layout.convs.len());
        for g in &self.layout.convs {
            let trace = Self::conv_forward(g, p, &a);
            a = trace.argmax.iter().map(|&i| trace.y[i].max(0.0)).collect();
            convs.push(trace);
        }

        let hidden = self.layout.dense.len() - 1;
        let mut dense_in = Vec::with_capacity(hidden + 1);
        let mut x = a;
        for d in &self.layout.dense[..hidden] {
            let next = Self::dense_forward(d, p, &x);
            dense_in.push(x);
            x = next;
        }
        let last_hidden = x.clone();
        let rate = self.config.architecture.dropout_rate;
        let dropout_mask = match dropout {
            Some(rng) if rate > 0.0 => {
                let keep = 1.0 / (1.0 - rate);
                let mask: Vec<f64> = (0..x.len())
                    .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
                    .collect();
                x.iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                Some(mask)
            }
            _ => None,
        };
        let logits = Self::dense_forward(&self.layout.dense[hidden], p, &x);
        dense_in.push(x);
        Trace {
            convs,
            dense_in,
            last_hidden,
            dropout_mask,
            logits,
        }
    }

    fn backward_frame(&self, p: &[f64], trace: &Trace, dlogits: &[f64], grad: &mut [f64]) {
        let hidden = self.layout.dense.len() - 1;
        let mut dout = dlogits.to_vec();
        for l in (0..=hidden).rev() {
            let d = &self.layout.dense[l];
            let x = &trace.dense_in[l];
            let mut din = vec![0.0; d.input];
            for (o, &g) in dout.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                grad[d.b + o] += g;
                let row = d.w + o * d.input;
                for i in 0..d.input {
                    grad[row + i] += g * x[i];
                    din[i] += p[row + i] * g;
                }
            }
            if l == hidden {
                if let Some(mask) = &trace.dropout_mask {
                    din.iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
                }
            }
            if l > 0 {
                // input of layer l is the ReLU output of layer l - 1
                let act = if l == hidden { &trace.last_hidden } else { x };
                din.iter_mut().zip(act).for_each(|(v, a)| {
                    if *a <= 0.0 {
                        *v = 0.0
                    }
                });
            }
            dout = din;
        }

        let mut dpooled = dout;
        for (li, (g, tr)) in self.layout.convs.iter().zip(&trace.convs).enumerate().rev() {
            let out = g.out_len;
            let mut dy = vec![0.0; g.maps * out];
            for (k, &t) in tr.argmax.iter().enumerate() {
                if tr.y[t] > 0.0 {
                    dy[t] += dpooled[k];
                }
            }
            let mut dxhat = dy;
            for m in 0..g.maps {
                let gamma = p[g.gamma + m];
                let (mut dg, mut db) = (0.0, 0.0);
                for t in m * out..(m + 1) * out {
                    dg += dxhat[t] * tr.xhat[t];
                    db += dxhat[t];
                    dxhat[t] *= gamma;
                }
                grad[g.gamma + m] += dg;
                grad[g.beta + m] += db;
            }
            let per = g.maps / g.groups * out;
            let mut dz = dxhat;
            for grp in 0..g.groups {
                let range = grp * per..(grp + 1) * per;
                let (mut s1, mut s2) = (0.0, 0.0);
                for t in range.clone() {
                    s1 += dz[t];
                    s2 += dz[t] * tr.xhat[t];
                }
                let (s1, s2, inv) = (s1 / per as f64, s2 / per as f64, tr.inv_std[grp]);
                for t in range {
                    dz[t] = inv * (dz[t] - s1 - tr.xhat[t] * s2);
                }
            }
            let need_input_grad = li > 0;
            let mut da = vec![0.0; if need_input_grad { g.in_channels * g.in_len } else { 0 }];
            for m in 0..g.maps {
                let dzm = &dz[m * out..(m + 1) * out];
                grad[g.b + m] += dzm.iter().sum::<f64>();
                for c in 0..g.in_channels {
                    let ac = &tr.input[c * g.in_len..(c + 1) * g.in_len];
                    for j in 0..g.kernel {
                        let wi = g.w + (m * g.in_channels + c) * g.kernel + j;
                        grad[wi] += dzm.iter().zip(&ac[j..j + out]).map(|(d, x)| d * x).sum::<f64>();
                        if need_input_grad {
                            let w = p[wi];
                            let dac = &mut da[c * g.in_len + j..c * g.in_len + j + out];
                            for (v, d) in dac.iter_mut().zip(dzm) {
                                *v += w * d;
                            }
                        }
                    }
                }
            }
            dpooled = da;
        }
    }

    /// Pre-softmax outputs for a stack of time-major frames.
    pub fn forward_logits(
        &self,
        params: &ModelParams,
        frames: &[f64],
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<Vec<Vec<f64>>> {
        self.check_params(params)?;
        let n = self.check_frames(frames, self.config.input_length, self.config.input_channels)?;
        let p = params.flat_view();
        let fl = self.frame_len();
        Ok((0..n)
            .map(|i| {
                let frame = &frames[i * fl..(i + 1) * fl];
                let rng = (mode == Mode::Train).then_some(&mut *rng);
                self.forward_frame(p, frame, rng).logits
            })
            .collect())
    }

    /// Piecewise-linear routing of every frame in eval mode: for each conv
    /// layer the pooled argmax positions and ReLU gates, then the hidden-layer
    /// ReLU gates. Equal routing means the network is smooth between the two
    /// parameter points.
    pub fn routing(&self, params: &ModelParams, frames: &[f64]) -> Result<Vec<usize>> {
        self.check_params(params)?;
        let n = self.check_frames(frames, self.config.input_length, self.config.input_channels)?;
        let p = params.flat_view();
        let fl = self.frame_len();
        let mut out = Vec::new();
        for i in 0..n {
            let trace = self.forward_frame(p, &frames[i * fl..(i + 1) * fl], None);
            for c in &trace.convs {
                out.extend(c.argmax.iter().map(|&t| 2 * t + usize::from(c.y[t] > 0.0)));
            }
            for x in &trace.dense_in[1..] {
                out.extend(x.iter().map(|&v| usize::from(v > 0.0)));
            }
        }
        Ok(out)
    }

    /// Mean mix-up loss over every frame of `batches` and its gradient with
    /// respect to the flat parameter view. Dropout masks come from `rng`.
    pub fn loss_and_gradient(
        &self,
        params: &ModelParams,
        batches: &[MixedBatch],
        rng: &mut RngStream,
    ) -> Result<(f64, Vec<f64>)> {
        let items: Vec<(&[f64], ClassId, ClassId, f64, f64)> = batches
            .iter()
            .map(|b| {
                self.check_frames(&b.values, b.length, b.channels)?;
                let (wa, wb) = mix_weights(b.lambda);
                Ok((0..b.len()).map(move |i| (b.frame(i), b.label_a[i], b.label_b[i], wa, wb)))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        self.weighted_loss(params, &items, rng)
    }

    /// Plain cross-entropy route, independent of the mix-up weights.
    pub fn cross_entropy_gradient(
        &self,
        params: &ModelParams,
        batch: &FrameBatch,
        rng: &mut RngStream,
    ) -> Result<(f64, Vec<f64>)> {
        self.check_params(params)?;
        self.check_frames(&batch.values, batch.length, batch.channels)?;
        let n = batch.len();
        if n == 0 {
            return Err(Error::Empty("empty training batch".into()));
        }
        let p = params.flat_view();
        let mut grad = vec![0.0; p.len()];
        let mut loss = 0.0;
        for i in 0..n {
            let trace = self.forward_frame(p, batch.frame(i), Some(&mut *rng));
            let y = batch.labels[i];
            self.check_label(y)?;
            loss -= log_softmax(&trace.logits)[y];
            let mut d = softmax(&trace.logits);
            d[y] -= 1.0;
            d.iter_mut().for_each(|v| *v /= n as f64);
            self.backward_frame(p, &trace, &d, &mut grad);
        }
        Ok((loss / n as f64, grad))
    }

    fn check_label(&self, y: ClassId) -> Result<()> {
        if y >= self.config.num_classes {
            return Err(Error::OutOfRange(format!(
                "label {y} for {} classes",
                self.config.num_classes
            )));
        }
        Ok(())
    }

    fn weighted_loss(
        &self,
        params: &ModelParams,
        items: &[(&[f64], ClassId, ClassId, f64, f64)],
        rng: &mut RngStream,
    ) -> Result<(f64, Vec<f64>)> {
        self.check_params(params)?;
        if items.is_empty() {
            return Err(Error::Empty("empty training batch".into()));
        }
        let n = items.len() as f64;
        let p = params.flat_view();
        let mut grad = vec![0.0; p.len()];
        let mut loss = 0.0;
        for &(frame, a, b, wa, wb) in items {
            self.check_label(a)?;
            self.check_label(b)?;
            let trace = self.forward_frame(p, frame, Some(&mut *rng));
            let logp = log_softmax(&trace.logits);
            if wa != 0.0 {
                loss -= wa * logp[a];
            }
            if wb != 0.0 {
                loss -= wb * logp[b];
            }
            let mut d: Vec<f64> = softmax(&trace.logits).into_iter().map(|q| (wa + wb) * q).collect();
            d[a] -= wa;
            d[b] -= wb;
            d.iter_mut().for_each(|v| *v /= n);
            self.backward_frame(p, &trace, &d, &mut grad);
        }
        Ok((loss / n, grad))
    }
}

impl Backbone for Cnn {
    fn init_params(&self, rng: &mut RngStream) -> Result<ModelParams> {
        ModelParams::init(&self.config, rng)
    }

    fn forward(
        &self,
        params: &ModelParams,
        frames: &[f64],
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<Vec<PredictionScores>> {
        Ok(self
            .forward_logits(params, frames, mode, rng)?
            .iter()
            .map(|z| PredictionScores(softmax(z)))
            .collect())
    }

    /// A non-finite loss is reported as [`Error::Divergence`] with epoch and
    /// batch 0; the training loop fills in its own position.
    fn train_step(
        &self,
        params: &mut ModelParams,
        adam: &mut AdamState,
        batches: &[MixedBatch],
        rng: &mut RngStream,
    ) -> Result<f64> {
        let (loss, grad) = self.loss_and_gradient(params, batches, rng)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence {
                epoch: 0,
                batch: 0,
                loss,
            });
        }
        adam.update(params.flat_view_mut(), &grad)?;
        Ok(loss)
    }

    fn evaluate(&self, params: &ModelParams, frames: &FrameSet) -> Result<Evaluation> {
        self.check_params(params)?;
        if frames.is_empty() {
            return Err(Error::Empty("nothing to evaluate".into()));
        }
        self.check_frames(&[], frames.length, frames.channels)?;
        let p = params.flat_view();
        let scores: Vec<PredictionScores> = frames
            .frames
            .iter()
            .map(|f| PredictionScores(softmax(&self.forward_frame(p, &f.values, None).logits)))
            .collect();
        Ok(Evaluation {
            predictions: scores.iter().map(|s| argmax(&s.0)).collect(),
            scores,
        })
    }
}
