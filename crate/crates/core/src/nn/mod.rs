//! Dense feed-forward networks with an exposed penultimate feature vector.
//!
//! A [`DenseNet`] is a chain of affine layers, each followed by an element-wise
//! activation. The last layer is always linear, so the activations entering it
//! are the network's features: `output == last_layer(features)` holds exactly.
//! Q-networks and critics use those features as state(-action) embeddings.
//!
//! Weights are stored row-major with shape `(out_dim, in_dim)`. All arithmetic
//! is `f64`.

mod adam;

pub use adam::{adam_step, AdamConfig, AdamState};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// One affine layer followed by an activation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Dense {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        let layer = Self {
            in_dim,
            out_dim,
            activation,
            weights,
            bias,
        };
        layer.validate()?;
        Ok(layer)
    }

    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Result<Self> {
        Self::new(
            in_dim,
            out_dim,
            activation,
            vec![0.0; in_dim * out_dim],
            vec![0.0; out_dim],
        )
    }

    /// Uniform initialization in `±1/sqrt(fan_in)` for weights and biases.
    pub fn uniform<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Architecture("layer dims must be > 0".into()));
        }
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        let bias = (0..out_dim).map(|_| rng.random_range(-bound..bound)).collect();
        Self::new(in_dim, out_dim, activation, weights, bias)
    }

    fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.out_dim == 0 {
            return Err(Error::Architecture("layer dims must be > 0".into()));
        }
        if self.weights.len() != self.in_dim * self.out_dim {
            return Err(Error::Architecture(format!(
                "weight matrix has {} entries, expected {}x{}",
                self.weights.len(),
                self.out_dim,
                self.in_dim
            )));
        }
        if self.bias.len() != self.out_dim {
            return Err(Error::Architecture(format!(
                "bias has {} entries, expected {}",
                self.bias.len(),
                self.out_dim
            )));
        }
        if !self.weights.iter().chain(&self.bias).all(|w| w.is_finite()) {
            return Err(Error::Architecture("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// Affine map plus activation, written into `out`.
    #[inline]
    fn forward_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weights
                .chunks_exact(self.in_dim)
                .zip(&self.bias)
                .map(|(row, b)| {
                    let z = row.iter().zip(x).fold(*b, |acc, (w, xi)| acc + w * xi);
                    self.activation.apply(z)
                }),
        );
    }
}

/// Activations recorded by a forward pass, kept for backpropagation.
///
/// `acts[0]` is the input and `acts[k + 1]` the output of layer `k`.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    acts: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("trace is never empty")
    }

    /// Activations entering the final (linear) layer.
    pub fn features(&self) -> &[f64] {
        &self.acts[self.acts.len() - 2]
    }

    pub fn input(&self) -> &[f64] {
        &self.acts[0]
    }
}

/// Parameter-shaped buffers: one `(weights, bias)` pair per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
                .collect(),
        }
    }

    pub fn layers(&self) -> &[(Vec<f64>, Vec<f64>)] {
        &self.layers
    }

    pub fn fill_zero(&mut self) {
        for (w, b) in &mut self.layers {
            w.fill(0.0);
            b.fill(0.0);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.values_mut() {
            *v *= factor;
        }
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|(w, b)| w.iter().chain(b))
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|(w, b)| w.iter_mut().chain(b.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    fn matches(&self, net: &DenseNet) -> bool {
        self.layers.len() == net.layers.len()
            && self
                .layers
                .iter()
                .zip(&net.layers)
                .all(|((w, b), l)| w.len() == l.weights.len() && b.len() == l.bias.len())
    }
}

/// A fully connected network whose final layer is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetDocument", into = "NetDocument")]
pub struct DenseNet {
    layers: Vec<Dense>,
}

impl DenseNet {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        let Some(last) = layers.last() else {
            return Err(Error::Architecture("network needs at least one layer".into()));
        };
        if last.activation != Activation::Identity {
            return Err(Error::Architecture("final layer must be linear".into()));
        }
        for layer in &layers {
            layer.validate()?;
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::Architecture(format!(
                    "layer {k} emits {} values but layer {} expects {}",
                    pair[0].out_dim,
                    k + 1,
                    pair[1].in_dim
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Builds `sizes[0] -> sizes[1] -> ... -> sizes[n]` with `hidden` activations
    /// and a linear output layer.
    pub fn random<R: Rng + ?Sized>(sizes: &[usize], hidden: Activation, rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Architecture("need at least input and output sizes".into()));
        }
        let n = sizes.len() - 1;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let act = if k + 1 == n { Activation::Identity } else { hidden };
                Dense::uniform(w[0], w[1], act, rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    /// Width of the vector fed into the final layer.
    pub fn feature_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].in_dim
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn final_layer(&self) -> &Dense {
        &self.layers[self.layers.len() - 1]
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn same_architecture(&self, other: &DenseNet) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.in_dim == b.in_dim && a.out_dim == b.out_dim && a.activation == b.activation
            })
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::shape(self.input_dim(), x.len()));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_with_features(x)?.0)
    }

    /// Returns `(output, features)` where `features` is the input of the final
    /// linear layer.
    pub fn forward_with_features(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_input(x)?;
        let mut features = x.to_vec();
        let mut next = Vec::new();
        let (last, hidden) = self.layers.split_last().expect("non-empty");
        for layer in hidden {
            layer.forward_into(&features, &mut next);
            std::mem::swap(&mut features, &mut next);
        }
        let mut output = Vec::with_capacity(last.out_dim);
        last.forward_into(&features, &mut output);
        Ok((output, features))
    }

    pub fn trace(&self, x: &[f64]) -> Result<Trace> {
        let mut trace = Trace::default();
        self.trace_into(x, &mut trace)?;
        Ok(trace)
    }

    /// Forward pass reusing the buffers of an existing trace.
    pub fn trace_into(&self, x: &[f64], trace: &mut Trace) -> Result<()> {
        self.check_input(x)?;
        trace.acts.resize_with(self.layers.len() + 1, Vec::new);
        trace.acts[0].clear();
        trace.acts[0].extend_from_slice(x);
        for (k, layer) in self.layers.iter().enumerate() {
            let (done, rest) = trace.acts.split_at_mut(k + 1);
            layer.forward_into(&done[k], &mut rest[0]);
        }
        Ok(())
    }

    /// Backpropagates `loss_grad` (dL/d output) through a recorded trace, adds
    /// the parameter gradients into `grads`, and returns dL/d input.
    pub fn backward_into(&self, trace: &Trace, loss_grad: &[f64], grads: &mut Gradients) -> Result<Vec<f64>> {
        if loss_grad.len() != self.output_dim() {
            return Err(Error::shape(self.output_dim(), loss_grad.len()));
        }
        if trace.acts.len() != self.layers.len() + 1 || trace.input().len() != self.input_dim() {
            return Err(Error::Architecture("trace was not recorded by this network".into()));
        }
        if !grads.matches(self) {
            return Err(Error::Architecture("gradient buffer shape mismatch".into()));
        }
        let mut upstream = loss_grad.to_vec();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.acts[k];
            let output = &trace.acts[k + 1];
            // dL/dz for this layer's pre-activations.
            for (g, y) in upstream.iter_mut().zip(output) {
                *g *= layer.activation.derivative_from_output(*y);
            }
            let (gw, gb) = &mut grads.layers[k];
            let mut downstream = vec![0.0; layer.in_dim];
            for (o, &delta) in upstream.iter().enumerate() {
                gb[o] += delta;
                if delta == 0.0 {
                    continue;
                }
                let row = o * layer.in_dim..(o + 1) * layer.in_dim;
                for ((gwi, wi), (xi, di)) in gw[row.clone()]
                    .iter_mut()
                    .zip(&layer.weights[row])
                    .zip(input.iter().zip(downstream.iter_mut()))
                {
                    *gwi += delta * xi;
                    *di += delta * wi;
                }
            }
            upstream = downstream;
        }
        Ok(upstream)
    }

    /// Parameter gradients of `<loss_grad, net(x)>` with respect to every weight and bias.
    pub fn gradients(&self, x: &[f64], loss_grad: &[f64]) -> Result<Gradients> {
        let trace = self.trace(x)?;
        let mut grads = Gradients::zeros_like(self);
        self.backward_into(&trace, loss_grad, &mut grads)?;
        Ok(grads)
    }

    /// Polyak update: `self <- tau * online + (1 - tau) * self`.
    pub fn sync_from(&mut self, online: &DenseNet, tau: f64) -> Result<()> {
        if !self.same_architecture(online) {
            return Err(Error::Architecture("target and online networks differ".into()));
        }
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::Contract(format!("tau must lie in [0, 1], got {tau}")));
        }
        if tau == 1.0 {
            self.clone_from(online);
            return Ok(());
        }
        if tau == 0.0 {
            return Ok(());
        }
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            for (tv, ov) in t
                .weights
                .iter_mut()
                .chain(t.bias.iter_mut())
                .zip(o.weights.iter().chain(&o.bias))
            {
                *tv = tau * ov + (1.0 - tau) * *tv;
            }
        }
        Ok(())
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Free-function form of [`DenseNet::sync_from`].
pub fn sync_target(online: &DenseNet, target: &mut DenseNet, tau: f64) -> Result<()> {
    target.sync_from(online, tau)
}

/// On-disk form of a network. Validated on load.
#[derive(Serialize, Deserialize)]
struct NetDocument {
    format: String,
    input_dim: usize,
    output_dim: usize,
    layers: Vec<Dense>,
}

const NET_FORMAT: &str = "dense-net/v1";

impl From<DenseNet> for NetDocument {
    fn from(net: DenseNet) -> Self {
        NetDocument {
            format: NET_FORMAT.into(),
            input_dim: net.input_dim(),
            output_dim: net.output_dim(),
            layers: net.layers,
        }
    }
}

impl TryFrom<NetDocument> for DenseNet {
    type Error = Error;

    fn try_from(doc: NetDocument) -> Result<Self> {
        if doc.format != NET_FORMAT {
            return Err(Error::Architecture(format!("unknown network format {:?}", doc.format)));
        }
        let net = DenseNet::new(doc.layers)?;
        if net.input_dim() != doc.input_dim || net.output_dim() != doc.output_dim {
            return Err(Error::Architecture("header dims disagree with layers".into()));
        }
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity3() -> DenseNet {
        let mut w = vec![0.0; 9];
        for i in 0..3 {
            w[i * 3 + i] = 1.0;
        }
        DenseNet::new(vec![Dense::new(3, 3, Activation::Identity, w, vec![0.0; 3]).unwrap()]).unwrap()
    }

    #[test]
    fn zero_weights_emit_final_bias() {
        let mut net = DenseNet::new(vec![
            Dense::zeros(3, 4, Activation::Relu).unwrap(),
            Dense::new(4, 2, Activation::Identity, vec![0.0; 8], vec![0.25, -1.5]).unwrap(),
        ])
        .unwrap();
        assert_eq!(net.forward(&[3.0, -2.0, 7.0]).unwrap(), vec![0.25, -1.5]);
        net.layers_mut()[0].bias_mut()[0] = 2.0;
        assert_eq!(net.forward(&[1.0, 1.0, 1.0]).unwrap(), vec![0.25, -1.5]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let (out, feats) = identity3().forward_with_features(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(out, vec![1.0, 2.0, 3.0]);
        assert_eq!(feats, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn wrong_input_length_is_rejected() {
        let err = identity3().forward(&[1.0, 2.0]).unwrap_err();
        assert!(matches!(err, Error::InputShape { expected: 3, got: 2 }));
        let err = identity3().gradients(&[1.0, 2.0, 3.0], &[1.0]).unwrap_err();
        assert!(matches!(err, Error::InputShape { expected: 3, got: 1 }));
    }

    #[test]
    fn construction_enforces_invariants() {
        let hidden_last = DenseNet::new(vec![Dense::zeros(2, 2, Activation::Relu).unwrap()]);
        assert!(matches!(hidden_last, Err(Error::Architecture(_))));
        let broken_chain = DenseNet::new(vec![
            Dense::zeros(2, 3, Activation::Relu).unwrap(),
            Dense::zeros(4, 1, Activation::Identity).unwrap(),
        ]);
        assert!(broken_chain.is_err());
        assert!(Dense::new(1, 1, Activation::Identity, vec![f64::NAN], vec![0.0]).is_err());
        assert!(DenseNet::new(vec![]).is_err());
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = DenseNet::random(&[3, 5, 4, 2], Activation::Tanh, &mut rng).unwrap();
        let g = net.gradients(&[0.1, -0.4, 0.9], &[0.0, 0.0]).unwrap();
        assert!(g.values().all(|v| *v == 0.0));
    }

    #[test]
    fn linear_layer_weight_gradient_is_outer_product() {
        let net = DenseNet::new(vec![
            Dense::new(3, 1, Activation::Identity, vec![0.3, -0.2, 0.5], vec![0.1]).unwrap(),
        ])
        .unwrap();
        let x = [1.5, -2.0, 0.25];
        let g = net.gradients(&x, &[-0.7]).unwrap();
        let (gw, gb) = &g.layers()[0];
        for (gi, xi) in gw.iter().zip(&x) {
            assert_eq!(*gi, -0.7 * xi);
        }
        assert_eq!(gb, &vec![-0.7]);
    }

    #[test]
    fn sync_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let online = DenseNet::random(&[2, 3, 1], Activation::Relu, &mut rng).unwrap();
        let original = DenseNet::random(&[2, 3, 1], Activation::Relu, &mut rng).unwrap();

        let mut target = original.clone();
        sync_target(&online, &mut target, 0.0).unwrap();
        assert_eq!(target, original);

        sync_target(&online, &mut target, 1.0).unwrap();
        assert_eq!(target, online);

        let mut other = DenseNet::random(&[2, 4, 1], Activation::Relu, &mut rng).unwrap();
        assert!(matches!(
            sync_target(&online, &mut other, 0.5),
            Err(Error::Architecture(_))
        ));
    }

    #[test]
    fn sync_half_is_elementwise_midpoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let online = DenseNet::random(&[3, 4, 2], Activation::Tanh, &mut rng).unwrap();
        let original = DenseNet::random(&[3, 4, 2], Activation::Tanh, &mut rng).unwrap();
        let mut target = original.clone();
        target.sync_from(&online, 0.5).unwrap();
        for ((t, o), p) in target.layers().iter().zip(online.layers()).zip(original.layers()) {
            for k in 0..t.weights().len() {
                let mid = (o.weights()[k] + p.weights()[k]) / 2.0;
                assert!((t.weights()[k] - mid).abs() <= 1e-15 * mid.abs().max(1.0));
            }
            for k in 0..t.bias().len() {
                let mid = (o.bias()[k] + p.bias()[k]) / 2.0;
                assert!((t.bias()[k] - mid).abs() <= 1e-15 * mid.abs().max(1.0));
            }
        }
    }

    #[test]
    fn json_round_trip_is_value_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = DenseNet::random(&[6, 64, 64, 3], Activation::Relu, &mut rng).unwrap();
        let back = DenseNet::from_json(&net.to_json().unwrap()).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn corrupted_document_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let net = DenseNet::random(&[2, 3, 1], Activation::Relu, &mut rng).unwrap();
        let text = net.to_json().unwrap().replace("\"output_dim\": 1", "\"output_dim\": 2");
        assert!(DenseNet::from_json(&text).is_err());
    }
}
