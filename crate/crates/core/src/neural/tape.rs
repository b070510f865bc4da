use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore};

use super::{kernels, Mode, Scalar, Tensor, BATCH_NORM_EPSILON, BATCH_NORM_MOMENTUM};
use crate::util::{axpy, centered_sum_sq, dot, sum};
use crate::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<S> {
    Leaf,
    DepthwiseConv {
        input: Var,
        kernel: Var,
        batch: usize,
        channels: usize,
        len_in: usize,
        klen: usize,
    },
    MaxPool {
        input: Var,
        argmax: Vec<u32>,
    },
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<S>,
        inv_std: Vec<S>,
        dims: [usize; 3],
        train: bool,
    },
    MatMul {
        a: Var,
        b: Var,
        dims: [usize; 3],
    },
    AddBias {
        input: Var,
        bias: Var,
    },
    Relu {
        input: Var,
    },
    Dropout {
        input: Var,
        mask: Vec<S>,
    },
    NodeMix {
        input: Var,
        operators: Vec<S>,
        batch: usize,
        nodes: usize,
        features: usize,
    },
    Reshape {
        input: Var,
    },
    Sum {
        input: Var,
    },
    Square {
        input: Var,
    },
    WeightedSum {
        input: Var,
        weights: Vec<S>,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        probs: Vec<S>,
        labels: Vec<usize>,
        classes: usize,
    },
}

struct Node<S> {
    value: Tensor<S>,
    requires_grad: bool,
    op: Op<S>,
}

/// Records a forward computation for reverse-mode differentiation.
pub struct Tape<S> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar loss, indexed by [`Var`].
pub struct Gradients<S> {
    grads: Vec<Option<Vec<S>>>,
}

impl<S: Scalar> Gradients<S> {
    /// Gradient with respect to `var`, if it was recorded with
    /// `requires_grad` and the loss depends on it.
    pub fn get(&self, var: Var) -> Option<&[S]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, var: Var) -> Option<Vec<S>> {
        self.grads.get_mut(var.0).and_then(|g| g.take())
    }
}

fn shape_err<T>(msg: alloc::string::String) -> Result<T> {
    Err(Error::Shape(msg))
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<S>, requires_grad: bool, op: Op<S>) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records an input tensor.
    pub fn leaf(&mut self, value: Tensor<S>, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Per-channel "valid" correlation along the last axis.
    ///
    /// `x` is `[N, T]` or `[B, N, T]`, `kernel` is `[N, K]`; the output has
    /// `T - K + 1` samples.
    pub fn depthwise_conv_time(&mut self, x: Var, kernel: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ks = self.shape(kernel).to_vec();
        let (batch, channels, len_in) = match xs.as_slice() {
            [n, t] => (1, *n, *t),
            [b, n, t] => (*b, *n, *t),
            _ => return shape_err(format!("depthwise conv expects [N,T] or [B,N,T], got {xs:?}")),
        };
        if ks.len() != 2 || ks[0] != channels {
            return shape_err(format!("kernel {ks:?} does not match {channels} channels"));
        }
        let klen = ks[1];
        if len_in < klen {
            return shape_err(format!("{len_in} samples are shorter than the kernel ({klen})"));
        }
        let len_out = len_in - klen + 1;
        let xv = self.value(x).data();
        let kv = self.value(kernel).data();
        let mut out = vec![S::zero(); batch * channels * len_out];
        for b in 0..batch {
            for n in 0..channels {
                let row = &xv[(b * channels + n) * len_in..][..len_in];
                let o = &mut out[(b * channels + n) * len_out..][..len_out];
                kernels::correlate_acc(row, &kv[n * klen..][..klen], o);
            }
        }
        let mut shape = xs.clone();
        *shape.last_mut().unwrap() = len_out;
        let rg = self.needs(x) || self.needs(kernel);
        Ok(self.push(
            Tensor::new(&shape, out)?,
            rg,
            Op::DepthwiseConv {
                input: x,
                kernel,
                batch,
                channels,
                len_in,
                klen,
            },
        ))
    }

    /// Sliding maximum along the last axis, stride 1. Ties resolve to the
    /// lowest index.
    pub fn max_pool_time(&mut self, x: Var, window: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let len_in = *xs.last().unwrap();
        if window == 0 || len_in < window {
            return shape_err(format!("pool window {window} does not fit {len_in} samples"));
        }
        let rows = self.value(x).len() / len_in;
        let len_out = len_in - window + 1;
        let xv = self.value(x).data();
        let mut out = vec![S::zero(); rows * len_out];
        let mut argmax = vec![0u32; rows * len_out];
        for r in 0..rows {
            let o = &mut out[r * len_out..][..len_out];
            let a = &mut argmax[r * len_out..][..len_out];
            kernels::sliding_max(&xv[r * len_in..][..len_in], window, o, a);
            for idx in a.iter_mut() {
                *idx += (r * len_in) as u32;
            }
        }
        let mut shape = xs;
        *shape.last_mut().unwrap() = len_out;
        let rg = self.needs(x);
        Ok(self.push(Tensor::new(&shape, out)?, rg, Op::MaxPool { input: x, argmax }))
    }

    /// Batch normalization over axis 1 of `[B, C]` or `[B, C, L]`.
    ///
    /// Train mode normalizes with batch statistics (biased variance) and
    /// folds them into `running_mean`/`running_var` with momentum 0.99; eval
    /// mode uses the running statistics.
    #[allow(clippy::too_many_arguments)]
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &mut [S],
        running_var: &mut [S],
        mode: Mode,
    ) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let (batch, channels, inner) = match xs.as_slice() {
            [b, c] => (*b, *c, 1),
            [b, c, l] => (*b, *c, *l),
            _ => return shape_err(format!("batch norm expects [B,C] or [B,C,L], got {xs:?}")),
        };
        for (name, v) in [("gamma", gamma), ("beta", beta)] {
            if self.value(v).len() != channels {
                return shape_err(format!("{name} has {} entries for {channels} features", self.value(v).len()));
            }
        }
        if running_mean.len() != channels || running_var.len() != channels {
            return shape_err(format!("running statistics do not cover {channels} features"));
        }
        let train = mode == Mode::Train;
        if train && batch < 2 {
            return Err(Error::Statistics(format!(
                "batch statistics need at least 2 samples, got {batch}"
            )));
        }
        let eps = S::lit(BATCH_NORM_EPSILON);
        let xv = self.value(x).data();
        let g = self.value(gamma).data();
        let bt = self.value(beta).data();
        let count = S::lit((batch * inner) as f64);
        let mut mean = vec![S::zero(); channels];
        let mut var = vec![S::zero(); channels];
        if train {
            for b in 0..batch {
                for c in 0..channels {
                    mean[c] = mean[c] + sum(&xv[(b * channels + c) * inner..][..inner]);
                }
            }
            for m in mean.iter_mut() {
                *m = *m / count;
            }
            for b in 0..batch {
                for c in 0..channels {
                    let seg = &xv[(b * channels + c) * inner..][..inner];
                    var[c] = var[c] + centered_sum_sq(seg, mean[c]);
                }
            }
            for v in var.iter_mut() {
                *v = *v / count;
            }
            let mom = S::lit(BATCH_NORM_MOMENTUM);
            let one_minus = S::lit(1.0 - BATCH_NORM_MOMENTUM);
            for c in 0..channels {
                running_mean[c] = mom * running_mean[c] + one_minus * mean[c];
                running_var[c] = mom * running_var[c] + one_minus * var[c];
            }
        } else {
            mean.copy_from_slice(running_mean);
            var.copy_from_slice(running_var);
        }
        let inv_std: Vec<S> = var.iter().map(|&v| S::one() / (v + eps).sqrt()).collect();
        let mut xhat = vec![S::zero(); xv.len()];
        let mut out = vec![S::zero(); xv.len()];
        for (i, seg) in xv.chunks(inner).enumerate() {
            let c = i % channels;
            let (mu, is, gc, bc) = (mean[c], inv_std[c], g[c], bt[c]);
            let hs = &mut xhat[i * inner..][..inner];
            let os = &mut out[i * inner..][..inner];
            for ((h, o), &v) in hs.iter_mut().zip(os.iter_mut()).zip(seg) {
                *h = (v - mu) * is;
                *o = gc * *h + bc;
            }
        }
        let rg = self.needs(x) || self.needs(gamma) || self.needs(beta);
        Ok(self.push(
            Tensor::new(&xs, out)?,
            rg,
            Op::BatchNorm {
                input: x,
                gamma,
                beta,
                xhat,
                inv_std,
                dims: [batch, channels, inner],
                train,
            },
        ))
    }

    /// `[M, K] x [K, P] -> [M, P]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return shape_err(format!("cannot multiply {sa:?} by {sb:?}"));
        }
        let (m, k, p) = (sa[0], sa[1], sb[1]);
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let mut out = vec![S::zero(); m * p];
        kernels::gemm_acc(av, bv, &mut out, m, k, p);
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(&[m, p], out)?, rg, Op::MatMul { a, b, dims: [m, k, p] }))
    }

    /// Adds `bias` (`[P]`) to every row of `x` (`[M, P]`).
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let p = *xs.last().unwrap();
        if self.value(bias).len() != p {
            return shape_err(format!("bias of {} for rows of {p}", self.value(bias).len()));
        }
        let bv = self.value(bias).data().to_vec();
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_mut(p) {
            for (o, &b) in row.iter_mut().zip(&bv) {
                *o = *o + b;
            }
        }
        let rg = self.needs(x) || self.needs(bias);
        Ok(self.push(Tensor::new(&xs, out)?, rg, Op::AddBias { input: x, bias }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x);
        let out = value.data().iter().map(|&v| if v > S::zero() { v } else { S::zero() }).collect();
        let t = Tensor::new(value.shape(), out).expect("same shape");
        let rg = self.needs(x);
        self.push(t, rg, Op::Relu { input: x })
    }

    /// Inverted dropout: zeroes each element with probability `rate` and
    /// scales survivors by `1 / (1 - rate)`. Identity in eval mode.
    pub fn dropout<R: RngCore + ?Sized>(
        &mut self,
        x: Var,
        rate: f64,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidParameter(format!("dropout rate {rate} outside [0, 1)")));
        }
        if mode == Mode::Eval || rate == 0.0 {
            return Ok(x);
        }
        let keep = S::lit(1.0 / (1.0 - rate));
        let n = self.value(x).len();
        // an element is dropped when a uniform 32-bit draw falls below
        // rate * 2^32
        let threshold = (rate * 4_294_967_296.0) as u64;
        let mut draws = vec![0u32; n];
        rng.fill(&mut draws[..]);
        let mask: Vec<S> = draws
            .iter()
            .map(|&d| if (d as u64) < threshold { S::zero() } else { keep })
            .collect();
        let value = self.value(x);
        let out = value.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let t = Tensor::new(value.shape(), out)?;
        let rg = self.needs(x);
        Ok(self.push(t, rg, Op::Dropout { input: x, mask }))
    }

    /// Left-multiplies each graph's node features by its own constant
    /// `N x N` operator: `x` is `[N, F]` or `[B, N, F]`, `operators` holds
    /// `B` row-major matrices.
    pub fn node_mix(&mut self, x: Var, operators: &[S]) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let (batch, nodes, features) = match xs.as_slice() {
            [n, f] => (1, *n, *f),
            [b, n, f] => (*b, *n, *f),
            _ => return shape_err(format!("node mix expects [N,F] or [B,N,F], got {xs:?}")),
        };
        if operators.len() != batch * nodes * nodes {
            return shape_err(format!(
                "{} operator entries for {batch} graphs of {nodes} nodes",
                operators.len()
            ));
        }
        let xv = self.value(x).data();
        let mut out = vec![S::zero(); xv.len()];
        for b in 0..batch {
            let op = &operators[b * nodes * nodes..][..nodes * nodes];
            let xb = &xv[b * nodes * features..][..nodes * features];
            let ob = &mut out[b * nodes * features..][..nodes * features];
            for i in 0..nodes {
                let orow = &mut ob[i * features..][..features];
                for j in 0..nodes {
                    let w = op[i * nodes + j];
                    if w != S::zero() {
                        axpy(orow, w, &xb[j * features..][..features]);
                    }
                }
            }
        }
        let rg = self.needs(x);
        Ok(self.push(
            Tensor::new(&xs, out)?,
            rg,
            Op::NodeMix {
                input: x,
                operators: operators.to_vec(),
                batch,
                nodes,
                features,
            },
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        let rg = self.needs(x);
        Ok(self.push(t, rg, Op::Reshape { input: x }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum::<S>();
        let rg = self.needs(x);
        self.push(Tensor::scalar(s), rg, Op::Sum { input: x })
    }

    pub fn square(&mut self, x: Var) -> Var {
        let value = self.value(x);
        let out = value.data().iter().map(|&v| v * v).collect();
        let t = Tensor::new(value.shape(), out).expect("same shape");
        let rg = self.needs(x);
        self.push(t, rg, Op::Square { input: x })
    }

    /// `sum(x * weights)` for a constant weight tensor of the same size.
    pub fn weighted_sum(&mut self, x: Var, weights: &[S]) -> Result<Var> {
        if weights.len() != self.value(x).len() {
            return shape_err(format!(
                "{} weights for {} values",
                weights.len(),
                self.value(x).len()
            ));
        }
        let s = dot(self.value(x).data(), weights);
        let rg = self.needs(x);
        Ok(self.push(
            Tensor::scalar(s),
            rg,
            Op::WeightedSum {
                input: x,
                weights: weights.to_vec(),
            },
        ))
    }

    /// Mean categorical cross-entropy of softmax(`logits`) against integer
    /// labels, via log-sum-exp.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let ls = self.shape(logits).to_vec();
        if ls.len() != 2 || ls[0] != labels.len() {
            return shape_err(format!("logits {ls:?} for {} labels", labels.len()));
        }
        let (batch, classes) = (ls[0], ls[1]);
        if classes < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 classes, got {classes}")));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::InvalidParameter(format!("label {bad} outside [0, {classes})")));
        }
        let lv = self.value(logits).data();
        let mut probs = Vec::with_capacity(lv.len());
        let mut total = S::zero();
        for (row, &label) in lv.chunks(classes).zip(labels) {
            let (max, lse) = log_sum_exp(row);
            total = total + (max + lse - row[label]);
            probs.extend(row.iter().map(|&v| (v - max - lse).exp()));
        }
        let loss = total / S::lit(batch as f64);
        let rg = self.needs(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            rg,
            Op::SoftmaxCrossEntropy {
                logits,
                probs,
                labels: labels.to_vec(),
                classes,
            },
        ))
    }

    /// Reverse pass from a scalar `loss`. Consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients<S>> {
        let mut nodes = self.nodes;
        if loss.0 >= nodes.len() {
            return Err(Error::Usage("loss variable is not on this tape".into()));
        }
        if nodes[loss.0].value.len() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                nodes[loss.0].value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<S>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![S::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &mut nodes[i];
            if !node.requires_grad {
                continue;
            }
            let op = core::mem::replace(&mut node.op, Op::Leaf);
            if let Op::Leaf = op {
                grads[i] = Some(g);
                continue;
            }
            // free the forward value of interior nodes once consumed
            node.value = Tensor::scalar(S::zero());
            backprop(&nodes, &mut grads, op, &g);
        }
        // only leaves keep gradients
        for (i, n) in nodes.iter().enumerate() {
            if !n.requires_grad {
                grads[i] = None;
            }
        }
        Ok(Gradients { grads })
    }
}

fn log_sum_exp<S: Scalar>(row: &[S]) -> (S, S) {
    let max = row.iter().copied().fold(S::neg_infinity(), S::max);
    let sum: S = row.iter().map(|&v| (v - max).exp()).sum();
    (max, sum.ln())
}

/// Softmax of each row of a `[B, M]` logit buffer.
pub fn softmax_rows<S: Scalar>(logits: &[S], classes: usize) -> Vec<S> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks(classes) {
        let (max, lse) = log_sum_exp(row);
        out.extend(row.iter().map(|&v| (v - max - lse).exp()));
    }
    out
}

fn accumulate<'a, S: Scalar>(
    nodes: &[Node<S>],
    grads: &'a mut [Option<Vec<S>>],
    v: Var,
) -> Option<&'a mut Vec<S>> {
    let node = &nodes[v.0];
    if !node.requires_grad {
        return None;
    }
    let len = node.value.len();
    Some(grads[v.0].get_or_insert_with(|| vec![S::zero(); len]))
}

fn backprop<S: Scalar>(nodes: &[Node<S>], grads: &mut [Option<Vec<S>>], op: Op<S>, g: &[S]) {
    match op {
        Op::Leaf => {}
        Op::DepthwiseConv {
            input,
            kernel,
            batch,
            channels,
            len_in,
            klen,
        } => {
            let len_out = len_in - klen + 1;
            let xv = nodes[input.0].value.data();
            let kv = nodes[kernel.0].value.data();
            if let Some(dk) = accumulate(nodes, grads, kernel) {
                for b in 0..batch {
                    for n in 0..channels {
                        let row = &xv[(b * channels + n) * len_in..][..len_in];
                        let go = &g[(b * channels + n) * len_out..][..len_out];
                        kernels::correlate_kernel_grad(row, go, &mut dk[n * klen..][..klen]);
                    }
                }
            }
            if let Some(dx) = accumulate(nodes, grads, input) {
                for b in 0..batch {
                    for n in 0..channels {
                        let go = &g[(b * channels + n) * len_out..][..len_out];
                        let drow = &mut dx[(b * channels + n) * len_in..][..len_in];
                        kernels::correlate_input_grad(go, &kv[n * klen..][..klen], drow);
                    }
                }
            }
        }
        Op::MaxPool { input, argmax } => {
            if let Some(dx) = accumulate(nodes, grads, input) {
                for (&idx, &gv) in argmax.iter().zip(g) {
                    dx[idx as usize] = dx[idx as usize] + gv;
                }
            }
        }
        Op::BatchNorm {
            input,
            gamma,
            beta,
            xhat,
            inv_std,
            dims: [batch, channels, inner],
            train,
        } => {
            let mut sum_g = vec![S::zero(); channels];
            let mut sum_gx = vec![S::zero(); channels];
            for b in 0..batch {
                for c in 0..channels {
                    let off = (b * channels + c) * inner;
                    let gs = &g[off..][..inner];
                    sum_g[c] = sum_g[c] + sum(gs);
                    sum_gx[c] = sum_gx[c] + dot(gs, &xhat[off..][..inner]);
                }
            }
            if let Some(dg) = accumulate(nodes, grads, gamma) {
                for c in 0..channels {
                    dg[c] = dg[c] + sum_gx[c];
                }
            }
            if let Some(db) = accumulate(nodes, grads, beta) {
                for c in 0..channels {
                    db[c] = db[c] + sum_g[c];
                }
            }
            let gam = nodes[gamma.0].value.data().to_vec();
            if let Some(dx) = accumulate(nodes, grads, input) {
                let m = S::lit((batch * inner) as f64);
                for b in 0..batch {
                    for c in 0..channels {
                        let off = (b * channels + c) * inner;
                        let scale = gam[c] * inv_std[c];
                        for t in 0..inner {
                            let gi = g[off + t];
                            let d = if train {
                                scale * (gi - sum_g[c] / m - xhat[off + t] * sum_gx[c] / m)
                            } else {
                                scale * gi
                            };
                            dx[off + t] = dx[off + t] + d;
                        }
                    }
                }
            }
        }
        Op::MatMul { a, b, dims: [m, k, p] } => {
            let av = nodes[a.0].value.data();
            let bv = nodes[b.0].value.data();
            if let Some(da) = accumulate(nodes, grads, a) {
                let bt = kernels::transpose(bv, k, p);
                kernels::gemm_acc(g, &bt, da, m, p, k);
            }
            if let Some(db) = accumulate(nodes, grads, b) {
                let at = kernels::transpose(av, m, k);
                kernels::gemm_acc(&at, g, db, k, m, p);
            }
        }
        Op::AddBias { input, bias } => {
            let p = nodes[bias.0].value.len();
            if let Some(db) = accumulate(nodes, grads, bias) {
                for row in g.chunks(p) {
                    for (d, &v) in db.iter_mut().zip(row) {
                        *d = *d + v;
                    }
                }
            }
            if let Some(dx) = accumulate(nodes, grads, input) {
                for (d, &v) in dx.iter_mut().zip(g) {
                    *d = *d + v;
                }
            }
        }
        Op::Relu { input } => {
            let xv = nodes[input.0].value.data();
            if let Some(dx) = accumulate(nodes, grads, input) {
                for ((d, &v), &gi) in dx.iter_mut().zip(xv).zip(g) {
                    if v > S::zero() {
                        *d = *d + gi;
                    }
                }
            }
        }
        Op::Dropout { input, mask } => {
            if let Some(dx) = accumulate(nodes, grads, input) {
                for ((d, &m), &gi) in dx.iter_mut().zip(&mask).zip(g) {
                    *d = *d + m * gi;
                }
            }
        }
        Op::NodeMix {
            input,
            operators,
            batch,
            nodes: n,
            features,
        } => {
            if let Some(dx) = accumulate(nodes, grads, input) {
                for b in 0..batch {
                    let op = &operators[b * n * n..][..n * n];
                    let gb = &g[b * n * features..][..n * features];
                    let db = &mut dx[b * n * features..][..n * features];
                    // dx_j += sum_i op[i][j] * g_i
                    for i in 0..n {
                        let gi = &gb[i * features..][..features];
                        for j in 0..n {
                            let w = op[i * n + j];
                            if w != S::zero() {
                                axpy(&mut db[j * features..][..features], w, gi);
                            }
                        }
                    }
                }
            }
        }
        Op::Reshape { input } => {
            if let Some(dx) = accumulate(nodes, grads, input) {
                for (d, &v) in dx.iter_mut().zip(g) {
                    *d = *d + v;
                }
            }
        }
        Op::Sum { input } => {
            if let Some(dx) = accumulate(nodes, grads, input) {
                for d in dx.iter_mut() {
                    *d = *d + g[0];
                }
            }
        }
        Op::Square { input } => {
            let xv = nodes[input.0].value.data();
            if let Some(dx) = accumulate(nodes, grads, input) {
                let two = S::lit(2.0);
                for ((d, &v), &gi) in dx.iter_mut().zip(xv).zip(g) {
                    *d = *d + two * v * gi;
                }
            }
        }
        Op::WeightedSum { input, weights } => {
            if let Some(dx) = accumulate(nodes, grads, input) {
                axpy(dx, g[0], &weights);
            }
        }
        Op::SoftmaxCrossEntropy {
            logits,
            probs,
            labels,
            classes,
        } => {
            if let Some(dx) = accumulate(nodes, grads, logits) {
                let scale = g[0] / S::lit(labels.len() as f64);
                for (b, &label) in labels.iter().enumerate() {
                    for c in 0..classes {
                        let y = if c == label { S::one() } else { S::zero() };
                        let i = b * classes + c;
                        dx[i] = dx[i] + scale * (probs[i] - y);
                    }
                }
            }
        }
    }
}
