//! Small dense feed-forward networks with a sigmoid output head.
//!
//! Every network maps one scalar to one scalar in `(0, 1)`. Gradients are
//! computed by hand-written backpropagation; there is no general autodiff.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative expressed through the activation output `a`.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tanh" => Some(Activation::Tanh),
            "sigmoid" => Some(Activation::Sigmoid),
            _ => None,
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// One affine layer; `weights` is row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.inputs + col]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// Weights then biases.
    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }

    fn affine(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for r in 0..self.outputs {
            let row = &self.weights[r * self.inputs..(r + 1) * self.inputs];
            let z = row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + self.bias[r];
            out.push(z);
        }
    }
}

/// Scalar-in, scalar-out multilayer perceptron.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layers: Vec<Dense>,
    hidden: Activation,
}

/// Gradient of some scalar with respect to every parameter of a [`DenseNet`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    layers: Vec<Dense>,
}

/// Default layer sizes: one input, two hidden layers of 16, one output.
pub const DEFAULT_LAYER_SIZES: [usize; 4] = [1, 16, 16, 1];

/// Builds a network with tanh hidden layers.
///
/// Hidden weights are drawn uniformly with unit variance scaled by
/// `1/sqrt(fan_in)`. Biases and the output layer's weights start at zero, so
/// a fresh network outputs exactly 0.5 for every input.
pub fn init_net(layer_sizes: &[usize], seed: u64) -> Result<DenseNet> {
    DenseNet::new(layer_sizes, Activation::Tanh, seed)
}

impl DenseNet {
    pub fn new(layer_sizes: &[usize], hidden: Activation, seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidNetwork(format!(
                "need at least input and output sizes, got {layer_sizes:?}"
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::InvalidNetwork(format!(
                "zero-sized layer in {layer_sizes:?}"
            )));
        }
        if layer_sizes[0] != 1 || layer_sizes[layer_sizes.len() - 1] != 1 {
            return Err(Error::InvalidNetwork(format!(
                "networks map one scalar to one scalar, got {layer_sizes:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let depth = layer_sizes.len() - 1;
        let layers = layer_sizes
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let mut layer = Dense::zeros(w[0], w[1]);
                if k + 1 < depth {
                    let scale = (3.0 / w[0] as f64).sqrt();
                    for v in &mut layer.weights {
                        *v = rng.random_range(-scale..scale);
                    }
                }
                layer
            })
            .collect();
        Ok(Self { layers, hidden })
    }

    /// Assembles a network from explicit layers.
    pub fn from_layers(layers: Vec<Dense>, hidden: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidNetwork("no layers".into()));
        }
        if layers[0].inputs != 1 || layers[layers.len() - 1].outputs != 1 {
            return Err(Error::InvalidNetwork(
                "networks map one scalar to one scalar".into(),
            ));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::InvalidNetwork(format!(
                    "layer of width {} feeds a layer expecting {}",
                    pair[0].outputs, pair[1].inputs
                )));
            }
        }
        for layer in &layers {
            if layer.weights.len() != layer.inputs * layer.outputs
                || layer.bias.len() != layer.outputs
            {
                return Err(Error::InvalidNetwork("parameter buffer size mismatch".into()));
            }
            if layer.weights.iter().chain(&layer.bias).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("network parameter".into()));
            }
        }
        Ok(Self { layers, hidden })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].inputs];
        sizes.extend(self.layers.iter().map(|l| l.outputs));
        sizes
    }

    pub fn num_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Output of the network, which may be NaN if a parameter is non-finite.
    pub fn eval(&self, input: f64) -> f64 {
        let mut a = vec![input];
        let mut z = Vec::new();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            layer.affine(&a, &mut z);
            a.clear();
            if k == last {
                a.extend(z.iter().map(|&v| sigmoid(v)));
            } else {
                a.extend(z.iter().map(|&v| self.hidden.apply(v)));
            }
        }
        a[0]
    }

    pub fn forward(&self, input: f64) -> Result<f64> {
        if !input.is_finite() {
            return Err(Error::NonFinite(format!("network input {input}")));
        }
        let out = self.eval(input);
        if out.is_finite() {
            Ok(out)
        } else {
            Err(Error::NonFinite(format!("network output at input {input}")))
        }
    }

    /// Activations of every layer, input first.
    fn trace(&self, input: f64) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(vec![input]);
        let last = self.layers.len() - 1;
        let mut z = Vec::new();
        for (k, layer) in self.layers.iter().enumerate() {
            layer.affine(acts.last().expect("nonempty"), &mut z);
            let act = if k == last {
                z.iter().map(|&v| sigmoid(v)).collect()
            } else {
                z.iter().map(|&v| self.hidden.apply(v)).collect()
            };
            acts.push(act);
        }
        acts
    }

    pub fn zero_gradients(&self) -> GradientSet {
        GradientSet {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    /// `upstream * d(output)/d(parameter)` for every parameter.
    pub fn backward(&self, input: f64, upstream: f64) -> GradientSet {
        let mut grads = self.zero_gradients();
        self.accumulate_backward(input, upstream, &mut grads)
            .expect("fresh gradient set matches");
        grads
    }

    /// Adds `upstream * d(output)/d(parameter)` into `grads`.
    pub fn accumulate_backward(
        &self,
        input: f64,
        upstream: f64,
        grads: &mut GradientSet,
    ) -> Result<()> {
        self.check_shape(grads)?;
        if upstream == 0.0 {
            return Ok(());
        }
        let acts = self.trace(input);
        let last = self.layers.len() - 1;
        let out = acts[last + 1][0];
        // delta holds d(output)/d(pre-activation) of the current layer
        let mut delta = vec![upstream * out * (1.0 - out)];
        for k in (0..=last).rev() {
            let layer = &self.layers[k];
            let input_act = &acts[k];
            let g = &mut grads.layers[k];
            for r in 0..layer.outputs {
                g.bias[r] += delta[r];
                let row = &mut g.weights[r * layer.inputs..(r + 1) * layer.inputs];
                for (gw, a) in row.iter_mut().zip(input_act) {
                    *gw += delta[r] * a;
                }
            }
            if k == 0 {
                break;
            }
            let mut next = vec![0.0; layer.inputs];
            for (c, n) in next.iter_mut().enumerate() {
                let mut s = 0.0;
                for (r, d) in delta.iter().enumerate() {
                    s += layer.weights[r * layer.inputs + c] * d;
                }
                *n = s * self.hidden.derivative_from_output(input_act[c]);
            }
            delta = next;
        }
        Ok(())
    }

    fn check_shape(&self, grads: &GradientSet) -> Result<()> {
        let ok = grads.layers.len() == self.layers.len()
            && grads
                .layers
                .iter()
                .zip(&self.layers)
                .all(|(g, l)| g.inputs == l.inputs && g.outputs == l.outputs);
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "gradients {:?} for network {:?}",
                grads.layer_sizes(),
                self.layer_sizes()
            )))
        }
    }

    /// Plain gradient step: `parameter -= step * gradient`.
    pub fn apply_update(&mut self, grads: &GradientSet, step: f64) -> Result<()> {
        if !step.is_finite() {
            return Err(Error::NonFinite(format!("step size {step}")));
        }
        self.check_shape(grads)?;
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (p, d) in layer.weights.iter_mut().zip(&g.weights) {
                *p -= step * d;
            }
            for (p, d) in layer.bias.iter_mut().zip(&g.bias) {
                *p -= step * d;
            }
        }
        Ok(())
    }

    /// Parameters as CSV rows `layer,row,col,kind,value`. Biases use `col = 0`.
    pub fn to_snapshot_csv(&self) -> String {
        let mut out = String::from("layer,row,col,kind,value\n");
        for (k, layer) in self.layers.iter().enumerate() {
            for r in 0..layer.outputs {
                for c in 0..layer.inputs {
                    let _ = writeln!(out, "{k},{r},{c},weight,{}", layer.weight(r, c));
                }
            }
            for r in 0..layer.outputs {
                let _ = writeln!(out, "{k},{r},0,bias,{}", layer.bias[r]);
            }
        }
        out
    }

    pub fn write_snapshot(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_snapshot_csv()).map_err(|e| Error::io(path, e))
    }

    /// Rebuilds a network from a snapshot. Layer shapes are inferred from
    /// the largest indices present.
    pub fn from_snapshot_csv(text: &str, hidden: Activation) -> Result<Self> {
        let bad = |msg: String| Error::InvalidNetwork(format!("snapshot: {msg}"));
        let mut rows = Vec::new();
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| bad(e.to_string()))?
            .iter()
            .collect::<Vec<_>>()
            .join(",");
        if headers != "layer,row,col,kind,value" {
            return Err(bad(format!("unexpected header {headers}")));
        }
        for record in reader.records() {
            let record = record.map_err(|e| bad(e.to_string()))?;
            let field = |i: usize| record.get(i).unwrap_or("").trim().to_string();
            let layer: usize = field(0).parse().map_err(|_| bad(format!("layer {}", field(0))))?;
            let row: usize = field(1).parse().map_err(|_| bad(format!("row {}", field(1))))?;
            let col: usize = field(2).parse().map_err(|_| bad(format!("col {}", field(2))))?;
            let is_bias = match field(3).as_str() {
                "weight" => false,
                "bias" => true,
                other => return Err(bad(format!("kind {other}"))),
            };
            let value: f64 = field(4).parse().map_err(|_| bad(format!("value {}", field(4))))?;
            rows.push((layer, row, col, is_bias, value));
        }
        let depth = rows.iter().map(|r| r.0 + 1).max().ok_or_else(|| bad("empty".into()))?;
        let mut shapes = vec![(0usize, 0usize); depth];
        for &(k, r, c, is_bias, _) in &rows {
            shapes[k].1 = shapes[k].1.max(r + 1);
            if !is_bias {
                shapes[k].0 = shapes[k].0.max(c + 1);
            }
        }
        let mut layers: Vec<Dense> = shapes.iter().map(|&(i, o)| Dense::zeros(i, o)).collect();
        let mut seen: Vec<Vec<bool>> = layers
            .iter()
            .map(|l| vec![false; l.weights.len() + l.bias.len()])
            .collect();
        for &(k, r, c, is_bias, v) in &rows {
            let layer = &mut layers[k];
            let slot = if is_bias {
                if c != 0 {
                    return Err(bad(format!("bias with col {c}")));
                }
                layer.bias[r] = v;
                layer.weights.len() + r
            } else {
                layer.weights[r * layer.inputs + c] = v;
                r * layer.inputs + c
            };
            if std::mem::replace(&mut seen[k][slot], true) {
                return Err(bad(format!("duplicate entry layer {k} row {r} col {c}")));
            }
        }
        if seen.iter().flatten().any(|s| !s) {
            return Err(bad("missing parameters".into()));
        }
        Self::from_layers(layers, hidden)
    }

    pub fn read_snapshot(path: &Path, hidden: Activation) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_snapshot_csv(&text, hidden).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

impl GradientSet {
    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = self.layers.first().map(|l| vec![l.inputs]).unwrap_or_default();
        sizes.extend(self.layers.iter().map(|l| l.outputs));
        sizes
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn squared_norm(&self) -> f64 {
        self.values().map(|v| v * v).sum()
    }

    pub fn scale(&mut self, c: f64) {
        for v in self.values_mut() {
            *v *= c;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }
}
