//! The hybrid convolutional/graph-convolutional identification network,
//! its GCN-only variant and the training loop.

mod train;

pub use train::{fit, fit_with_init, EarlyStopping, EpochRecord, StopDecision, TrainedModel};

use alloc::format;
use alloc::vec::Vec;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::connectivity::Measure;
use crate::graph::{gcn_layer, DegreeConvention, NormalizedOperator};
use crate::neural::{
    glorot_uniform, BatchNorm, Dense, DepthwiseConv, Mode, ParamEntry, ParamId, ParamStore,
    Scalar, Tape, Tensor, Var,
};
use crate::signal::Trial;
use crate::util::mix_seed;
use crate::{Error, Result};

/// Which front end feeds the graph layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    /// Two depthwise-conv / batch-norm / max-pool stages before the graph.
    #[default]
    EegBbnet,
    /// Raw preprocessed samples are the node features.
    GcnOnly,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::EegBbnet => "eeg-bbnet",
            Variant::GcnOnly => "gcn-only",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "eeg-bbnet" | "eegbbnet" | "full" => Some(Variant::EegBbnet),
            "gcn-only" | "gcn" => Some(Variant::GcnOnly),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub n_channels: usize,
    pub input_len: usize,
    pub n_classes: usize,
    pub measure: Measure,
    pub variant: Variant,
    pub degree: DegreeConvention,
    pub conv_kernel: usize,
    pub pool_window: usize,
    pub gconv_dims: [usize; 2],
    pub dense_dims: [usize; 2],
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Table-default hyperparameters for the given input shape.
    pub fn new(n_channels: usize, input_len: usize, n_classes: usize, measure: Measure) -> Self {
        Self {
            n_channels,
            input_len,
            n_classes,
            measure,
            variant: Variant::EegBbnet,
            degree: DegreeConvention::Absolute,
            conv_kernel: 64,
            pool_window: 32,
            gconv_dims: [64, 32],
            dense_dims: [256, 128],
            dropout: 0.2,
            learning_rate: 1e-3,
            batch_size: 32,
            patience: 20,
            max_epochs: 500,
            seed: 0,
        }
    }

    /// Node-feature length after the front end: `T - 2(K-1) - 2(P-1)` for
    /// the full network, `T` for the GCN-only variant.
    pub fn feature_len(&self) -> Result<usize> {
        match self.variant {
            Variant::GcnOnly => Ok(self.input_len),
            Variant::EegBbnet => {
                let mut len = self.input_len;
                for window in [self.conv_kernel, self.pool_window, self.conv_kernel, self.pool_window] {
                    if len < window {
                        return Err(Error::Shape(format!(
                            "input length {} is too short for the conv/pool stack",
                            self.input_len
                        )));
                    }
                    len = len - window + 1;
                }
                Ok(len)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("n_channels", self.n_channels),
            ("input_len", self.input_len),
            ("conv_kernel", self.conv_kernel),
            ("pool_window", self.pool_window),
            ("gconv_dims[0]", self.gconv_dims[0]),
            ("gconv_dims[1]", self.gconv_dims[1]),
            ("dense_dims[0]", self.dense_dims[0]),
            ("dense_dims[1]", self.dense_dims[1]),
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidParameter(format!("{name} must be positive")));
        }
        if self.n_classes < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 classes, got {}",
                self.n_classes
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidParameter(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        self.feature_len().map(|_| ())
    }
}

/// One trial ready for the network: samples and propagation operator in
/// training precision plus the class label.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<S> {
    signal: Vec<S>,
    operator: Vec<S>,
    n_channels: usize,
    n_samples: usize,
    pub label: usize,
}

impl<S: Scalar> Sample<S> {
    pub fn new(trial: &Trial, operator: &NormalizedOperator, label: usize) -> Result<Self> {
        if operator.n() != trial.n_channels() {
            return Err(Error::Shape(format!(
                "operator is {0}x{0} for {1} channels",
                operator.n(),
                trial.n_channels()
            )));
        }
        Ok(Self {
            signal: trial.data().iter().map(|&v| S::lit(v)).collect(),
            operator: operator.to_scalar(),
            n_channels: trial.n_channels(),
            n_samples: trial.n_samples(),
            label,
        })
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn signal(&self) -> &[S] {
        &self.signal
    }

    pub fn operator(&self) -> &[S] {
        &self.operator
    }
}

/// Batch-norm running statistics produced by a train-mode pass, applied
/// after the optimizer step.
pub type StatUpdate<S> = (ParamId, Tensor<S>);

#[derive(Debug, Clone)]
struct FrontEnd {
    conv1: DepthwiseConv,
    bn1: BatchNorm,
    conv2: DepthwiseConv,
    bn2: BatchNorm,
}

/// Network parameters and layer wiring.
#[derive(Debug, Clone)]
pub struct Network<S> {
    config: ModelConfig,
    store: ParamStore<S>,
    front: Option<FrontEnd>,
    gconv1: ParamId,
    gconv2: ParamId,
    dense1: Dense,
    dense2: Dense,
    output: Dense,
}

impl<S: Scalar> Network<S> {
    /// Builds a network with seeded Glorot-uniform weights.
    pub fn new(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, 0x1417));
        Ok(Self::build(config, &mut rng))
    }

    fn build<R: RngCore>(config: &ModelConfig, rng: &mut R) -> Self {
        let n = config.n_channels;
        let f = config.feature_len().expect("validated");
        let mut store = ParamStore::new();
        let front = match config.variant {
            Variant::GcnOnly => None,
            Variant::EegBbnet => {
                let k = config.conv_kernel;
                let conv1 = DepthwiseConv::new(&mut store, "conv1", n, k, rng);
                let bn1 = BatchNorm::new(&mut store, "bn1", n);
                let conv2 = DepthwiseConv::new(&mut store, "conv2", n, k, rng);
                let bn2 = BatchNorm::new(&mut store, "bn2", n);
                Some(FrontEnd {
                    conv1,
                    bn1,
                    conv2,
                    bn2,
                })
            }
        };
        let [g1, g2] = config.gconv_dims;
        let gconv1 = store.add("gconv1.weight", glorot_uniform(&[f, g1], f, g1, rng), true);
        let gconv2 = store.add("gconv2.weight", glorot_uniform(&[g1, g2], g1, g2, rng), true);
        let [d1, d2] = config.dense_dims;
        let dense1 = Dense::new(&mut store, "dense1", n * g2, d1, rng);
        let dense2 = Dense::new(&mut store, "dense2", d1, d2, rng);
        let output = Dense::new(&mut store, "output", d2, config.n_classes, rng);
        Self {
            config: config.clone(),
            store,
            front,
            gconv1,
            gconv2,
            dense1,
            dense2,
            output,
        }
    }

    /// Rebuilds a network from named tensors, e.g. a checkpoint.
    pub fn from_entries(config: &ModelConfig, entries: &[ParamEntry<S>]) -> Result<Self> {
        let mut net = Self::new(config)?;
        net.store.load_from(entries)?;
        Ok(net)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<S> {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<S> {
        &mut self.store
    }

    /// Trainable weight count.
    pub fn parameter_count(&self) -> usize {
        self.store.trainable_count()
    }

    /// Stacks samples into a `[B, N, T]` input and the matching operators.
    pub fn assemble(&self, batch: &[&Sample<S>]) -> Result<(Tensor<S>, Vec<S>)> {
        let (n, t) = (self.config.n_channels, self.config.input_len);
        if batch.is_empty() {
            return Err(Error::InvalidParameter("empty batch".into()));
        }
        let mut signal = Vec::with_capacity(batch.len() * n * t);
        let mut ops = Vec::with_capacity(batch.len() * n * n);
        for s in batch {
            if s.n_channels != n || s.n_samples != t {
                return Err(Error::Shape(format!(
                    "sample is {}x{}, model expects {n}x{t}",
                    s.n_channels, s.n_samples
                )));
            }
            signal.extend_from_slice(&s.signal);
            ops.extend_from_slice(&s.operator);
        }
        Ok((Tensor::new(&[batch.len(), n, t], signal)?, ops))
    }

    /// Records the forward pass and returns the logits `[B, M]` together with
    /// any batch-norm statistic updates (train mode only). `bound` comes from
    /// [`ParamStore::bind`] on [`Network::params`].
    pub fn forward<R: RngCore + ?Sized>(
        &self,
        tape: &mut Tape<S>,
        bound: &[Var],
        input: Tensor<S>,
        operators: &[S],
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Var, Vec<StatUpdate<S>>)> {
        let batch = input.shape()[0];
        let n = self.config.n_channels;
        let rate = self.config.dropout;
        let x = tape.leaf(input, false);
        let mut updates = Vec::new();
        let h0 = self.front_end(tape, bound, x, mode, &mut updates)?;
        let h0 = tape.dropout(h0, rate, mode, rng)?;
        let h1 = gcn_layer(tape, operators, h0, bound[self.gconv1.index()])?;
        let h1 = tape.dropout(h1, rate, mode, rng)?;
        let h2 = gcn_layer(tape, operators, h1, bound[self.gconv2.index()])?;
        let h2 = tape.dropout(h2, rate, mode, rng)?;
        let flat = tape.reshape(h2, &[batch, n * self.config.gconv_dims[1]])?;
        let d1 = self.dense1.forward(tape, bound, flat)?;
        let d1 = tape.relu(d1);
        let d1 = tape.dropout(d1, rate, mode, rng)?;
        let d2 = self.dense2.forward(tape, bound, d1)?;
        let d2 = tape.relu(d2);
        let logits = self.output.forward(tape, bound, d2)?;
        Ok((logits, updates))
    }

    fn front_end(
        &self,
        tape: &mut Tape<S>,
        bound: &[Var],
        x: Var,
        mode: Mode,
        updates: &mut Vec<StatUpdate<S>>,
    ) -> Result<Var> {
        let Some(fe) = &self.front else { return Ok(x) };
        let mut h = x;
        for (conv, bn) in [(fe.conv1, fe.bn1), (fe.conv2, fe.bn2)] {
            h = conv.forward(tape, bound, h)?;
            h = self.batch_norm(tape, bound, bn, h, mode, updates)?;
            h = tape.max_pool_time(h, self.config.pool_window)?;
        }
        Ok(h)
    }

    /// Eval-mode node features `[B, N, F]` from the convolutional front end
    /// (the raw samples for the GCN-only variant).
    pub fn node_features(&self, samples: &[&Sample<S>]) -> Result<Tensor<S>> {
        let (input, _) = self.assemble(samples)?;
        let mut tape = Tape::new();
        let bound = self.bind_frozen(&mut tape);
        let x = tape.leaf(input, false);
        let h = self.front_end(&mut tape, &bound, x, Mode::Eval, &mut Vec::new())?;
        Ok(tape.value(h).clone())
    }

    fn batch_norm(
        &self,
        tape: &mut Tape<S>,
        bound: &[Var],
        bn: BatchNorm,
        x: Var,
        mode: Mode,
        updates: &mut Vec<StatUpdate<S>>,
    ) -> Result<Var> {
        let mut mean = self.store.get(bn.running_mean).clone();
        let mut var = self.store.get(bn.running_var).clone();
        let y = tape.batch_norm(
            x,
            bound[bn.gamma.index()],
            bound[bn.beta.index()],
            mean.data_mut(),
            var.data_mut(),
            mode,
        )?;
        if mode == Mode::Train {
            updates.push((bn.running_mean, mean));
            updates.push((bn.running_var, var));
        }
        Ok(y)
    }

    pub fn apply_updates(&mut self, updates: Vec<StatUpdate<S>>) {
        for (id, t) in updates {
            *self.store.get_mut(id) = t;
        }
    }

    /// Eval-mode class probabilities, row-major `[B, M]`.
    pub fn predict_proba(&self, samples: &[&Sample<S>]) -> Result<Vec<S>> {
        let mut out = Vec::with_capacity(samples.len() * self.config.n_classes);
        for chunk in samples.chunks(self.config.batch_size.max(1)) {
            let (input, ops) = self.assemble(chunk)?;
            let mut tape = Tape::new();
            let bound = self.bind_frozen(&mut tape);
            // eval mode never draws dropout masks
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let (logits, _) = self.forward(&mut tape, &bound, input, &ops, Mode::Eval, &mut rng)?;
            out.extend(crate::neural::softmax_rows(
                tape.value(logits).data(),
                self.config.n_classes,
            ));
        }
        Ok(out)
    }

    /// Predicted class per sample.
    pub fn predict(&self, samples: &[&Sample<S>]) -> Result<Vec<usize>> {
        let probs = self.predict_proba(samples)?;
        Ok(probs.chunks(self.config.n_classes).map(argmax).collect())
    }

    /// Records parameters without gradient tracking.
    fn bind_frozen(&self, tape: &mut Tape<S>) -> Vec<Var> {
        self.store
            .entries()
            .iter()
            .map(|e| tape.leaf(e.tensor.clone(), false))
            .collect()
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<S: PartialOrd + Copy>(values: &[S]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
