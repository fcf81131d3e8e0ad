//! Dense networks with forward-mode input tangents and reverse-mode
//! parameter gradients.
//!
//! The surrogate splits its inputs: node features go through one sub-network,
//! material features through another, and a head maps the concatenation to
//! the three nodal outputs. Batches store unique node and material rows once
//! and list the `(node, material)` pairs to evaluate, so sub-network work is
//! shared by every pair that reuses a row.

use ndarray::{s, Array1, Array2, Axis, Zip};
use rand::distr::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SurrogateError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    /// `(f, f', f'')` at `z`.
    #[inline]
    fn eval(self, z: f64) -> (f64, f64, f64) {
        match self {
            Activation::Tanh => {
                let h = z.tanh();
                let d = 1.0 - h * h;
                (h, d, -2.0 * h * d)
            }
            Activation::Sigmoid => {
                let h = 1.0 / (1.0 + (-z).exp());
                let d = h * (1.0 - h);
                (h, d, d * (1.0 - 2.0 * h))
            }
            Activation::Identity => (z, 1.0, 0.0),
        }
    }
}

/// Affine map `z = a W + b` followed by an activation; `W` is `inputs x outputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            weights: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
            activation,
        }
    }

    /// Xavier-uniform weights, zero bias.
    pub fn xavier<R: Rng + ?Sized>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        let a = (6.0 / (inputs + outputs) as f64).sqrt();
        let dist = Uniform::new_inclusive(-a, a).expect("finite bound");
        let weights = Array2::from_shape_simple_fn((inputs, outputs), || dist.sample(rng));
        Self {
            weights,
            bias: Array1::zeros(outputs),
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weights.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

struct LayerTrace {
    input: Array2<f64>,
    input_tangents: Vec<Array2<f64>>,
    z_tangents: Vec<Array2<f64>>,
    d1: Array2<f64>,
    d2: Array2<f64>,
}

/// Cached intermediates of one pass through an [`Mlp`].
pub struct MlpTrace {
    layers: Vec<LayerTrace>,
    pub output: Array2<f64>,
    pub output_tangents: Vec<Array2<f64>>,
}

impl Mlp {
    /// `widths = [in, h1, ..., out]`; every layer but the last uses `hidden`.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Self {
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { output } else { hidden };
                Layer::xavier(widths[i], widths[i + 1], act, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.inputs(), l.outputs(), l.activation))
                .collect(),
        }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().expect("nonempty").outputs()
    }

    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_width())
            .chain(self.layers.iter().map(Layer::outputs))
            .collect()
    }

    /// Runs the layers on `input` (rows are samples), pushing each tangent
    /// direction in `tangents` forward alongside.
    pub fn forward(&self, input: Array2<f64>, tangents: Vec<Array2<f64>>) -> MlpTrace {
        let mut a = input;
        let mut at = tangents;
        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let mut z = a.dot(&layer.weights);
            z += &layer.bias;
            let z_tangents: Vec<Array2<f64>> = at.iter().map(|t| t.dot(&layer.weights)).collect();
            let mut d1 = Array2::zeros(z.raw_dim());
            let mut d2 = Array2::zeros(z.raw_dim());
            Zip::from(&mut z).and(&mut d1).and(&mut d2).for_each(|z, d1, d2| {
                let (h, a, b) = layer.activation.eval(*z);
                *z = h;
                *d1 = a;
                *d2 = b;
            });
            let h_tangents: Vec<Array2<f64>> = z_tangents.iter().map(|zt| zt * &d1).collect();
            layers.push(LayerTrace {
                input: a,
                input_tangents: at,
                z_tangents,
                d1,
                d2,
            });
            a = z;
            at = h_tangents;
        }
        MlpTrace {
            layers,
            output: a,
            output_tangents: at,
        }
    }

    /// Reverse sweep from the last layer down to layer `stop`, accumulating
    /// into `grads`. `g_tangents` may be empty (no loss on the tangents).
    /// Returns the gradients with respect to the input of layer `stop` and
    /// its tangents.
    pub fn backward(
        &self,
        trace: &MlpTrace,
        g_out: Array2<f64>,
        g_tangents: Vec<Array2<f64>>,
        stop: usize,
        grads: &mut Mlp,
    ) -> (Array2<f64>, Vec<Array2<f64>>) {
        let mut g = g_out;
        let mut gt = g_tangents;
        for (i, (layer, tr)) in self.layers.iter().zip(&trace.layers).enumerate().rev() {
            if i < stop {
                break;
            }
            let mut gz = &g * &tr.d1;
            for (gh, zt) in gt.iter().zip(&tr.z_tangents) {
                Zip::from(&mut gz)
                    .and(gh)
                    .and(zt)
                    .and(&tr.d2)
                    .for_each(|gz, &gh, &zt, &d2| *gz += gh * zt * d2);
            }
            let gzt: Vec<Array2<f64>> = gt.iter().map(|gh| gh * &tr.d1).collect();
            let target = &mut grads.layers[i];
            ndarray::linalg::general_mat_mul(1.0, &tr.input.t(), &gz, 1.0, &mut target.weights);
            for (a, gzt) in tr.input_tangents.iter().zip(&gzt) {
                ndarray::linalg::general_mat_mul(1.0, &a.t(), gzt, 1.0, &mut target.weights);
            }
            target.bias += &gz.sum_axis(Axis(0));
            g = gz.dot(&layer.weights.t());
            gt = gzt.iter().map(|x| x.dot(&layer.weights.t())).collect();
        }
        (g, gt)
    }

    fn visit<'a>(&'a self, out: &mut Vec<&'a [f64]>) {
        for l in &self.layers {
            out.push(l.weights.as_slice().expect("standard layout"));
            out.push(l.bias.as_slice().expect("standard layout"));
        }
    }

    fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        for l in &mut self.layers {
            out.push(l.weights.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("standard layout"));
        }
    }
}

/// Layer widths of the split network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    /// `[inputs, hidden..., outputs]` of the node sub-network.
    pub node: Vec<usize>,
    /// `[inputs, hidden..., outputs]` of the material sub-network.
    pub material: Vec<usize>,
    /// Hidden widths of the head.
    pub head_hidden: Vec<usize>,
    pub outputs: usize,
    /// Leading node features that are spatial coordinates.
    pub coordinate_dims: usize,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            node: vec![2, 64, 64, 32],
            material: vec![3, 32, 32, 16],
            head_hidden: vec![64, 64],
            outputs: 3,
            coordinate_dims: 2,
            hidden_activation: Activation::Tanh,
            output_activation: Activation::Identity,
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SurrogateError::Architecture(m.to_string()));
        if self.node.len() < 2 || self.material.len() < 2 {
            return bad("sub-networks need at least one layer");
        }
        if self
            .node
            .iter()
            .chain(&self.material)
            .chain(&self.head_hidden)
            .any(|&w| w == 0)
            || self.outputs == 0
        {
            return bad("layer widths must be positive");
        }
        if self.coordinate_dims == 0 || self.coordinate_dims > self.node[0] {
            return bad("coordinate dims must lie within the node features");
        }
        Ok(())
    }

    pub fn head_widths(&self) -> Vec<usize> {
        let concat = self.node.last().unwrap() + self.material.last().unwrap();
        std::iter::once(concat)
            .chain(self.head_hidden.iter().copied())
            .chain(std::iter::once(self.outputs))
            .collect()
    }
}

/// Weights of the three parts of the split network. Gradients use the same
/// type.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParameters {
    pub node: Mlp,
    pub material: Mlp,
    pub head: Mlp,
    pub coordinate_dims: usize,
}

/// Unique node rows, unique material rows and the pairs to evaluate.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub nodes: Array2<f64>,
    pub materials: Array2<f64>,
    /// `(node row, material row)` per evaluated row.
    pub pairs: Vec<(usize, usize)>,
}

impl Batch {
    pub fn single(node_features: &[f64], material_features: &[f64]) -> Self {
        Self {
            nodes: Array2::from_shape_vec((1, node_features.len()), node_features.to_vec()).expect("row"),
            materials: Array2::from_shape_vec((1, material_features.len()), material_features.to_vec()).expect("row"),
            pairs: vec![(0, 0)],
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Cached forward pass over a [`Batch`].
pub struct Forward {
    node: MlpTrace,
    material: MlpTrace,
    head: MlpTrace,
    pairs: Vec<(usize, usize)>,
    node_rows: usize,
    material_rows: usize,
}

impl Forward {
    /// Outputs, one row per pair.
    pub fn outputs(&self) -> &Array2<f64> {
        &self.head.output
    }

    /// Derivative of the outputs along each coordinate axis (empty unless the
    /// pass tracked tangents).
    pub fn output_tangents(&self) -> &[Array2<f64>] {
        &self.head.output_tangents
    }
}

impl NetworkParameters {
    pub fn new<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let h = arch.hidden_activation;
        Ok(Self {
            node: Mlp::new(&arch.node, h, h, rng),
            material: Mlp::new(&arch.material, h, h, rng),
            head: Mlp::new(&arch.head_widths(), h, arch.output_activation, rng),
            coordinate_dims: arch.coordinate_dims,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            node: self.node.zeros_like(),
            material: self.material.zeros_like(),
            head: self.head.zeros_like(),
            coordinate_dims: self.coordinate_dims,
        }
    }

    pub fn architecture(&self) -> Architecture {
        let head = self.head.widths();
        Architecture {
            node: self.node.widths(),
            material: self.material.widths(),
            head_hidden: head[1..head.len() - 1].to_vec(),
            outputs: self.head.output_width(),
            coordinate_dims: self.coordinate_dims,
            hidden_activation: self.head.layers[0].activation,
            output_activation: self.head.layers.last().unwrap().activation,
        }
    }

    pub fn check_widths(&self) -> Result<()> {
        let expected = self.node.output_width() + self.material.output_width();
        if self.head.input_width() != expected {
            return Err(SurrogateError::WidthMismatch {
                what: "head input",
                expected,
                got: self.head.input_width(),
            });
        }
        for mlp in [&self.node, &self.material, &self.head] {
            for pair in mlp.layers.windows(2) {
                if pair[0].outputs() != pair[1].inputs() {
                    return Err(SurrogateError::WidthMismatch {
                        what: "adjacent layers",
                        expected: pair[0].outputs(),
                        got: pair[1].inputs(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Forward pass; with `tangents` the derivatives with respect to every
    /// coordinate feature are carried along.
    pub fn forward(&self, batch: &Batch, tangents: bool) -> Result<Forward> {
        if batch.nodes.ncols() != self.node.input_width() {
            return Err(SurrogateError::WidthMismatch {
                what: "node features",
                expected: self.node.input_width(),
                got: batch.nodes.ncols(),
            });
        }
        if batch.materials.ncols() != self.material.input_width() {
            return Err(SurrogateError::WidthMismatch {
                what: "material features",
                expected: self.material.input_width(),
                got: batch.materials.ncols(),
            });
        }
        let nn = batch.nodes.nrows();
        let node_tangents = if tangents {
            (0..self.coordinate_dims)
                .map(|d| {
                    let mut t = Array2::zeros(batch.nodes.raw_dim());
                    t.column_mut(d).fill(1.0);
                    t
                })
                .collect()
        } else {
            Vec::new()
        };
        let node = self.node.forward(batch.nodes.clone(), node_tangents);
        let material = self.material.forward(batch.materials.clone(), Vec::new());

        let wn = self.node.output_width();
        let wm = self.material.output_width();
        let rows = batch.pairs.len();
        let mut input = Array2::zeros((rows, wn + wm));
        let mut input_tangents: Vec<Array2<f64>> = node
            .output_tangents
            .iter()
            .map(|_| Array2::zeros((rows, wn + wm)))
            .collect();
        for (r, &(ni, mi)) in batch.pairs.iter().enumerate() {
            input.slice_mut(s![r, ..wn]).assign(&node.output.row(ni));
            input.slice_mut(s![r, wn..]).assign(&material.output.row(mi));
            for (t, nt) in input_tangents.iter_mut().zip(&node.output_tangents) {
                t.slice_mut(s![r, ..wn]).assign(&nt.row(ni));
            }
        }
        let head = self.head.forward(input, input_tangents);
        Ok(Forward {
            node,
            material,
            head,
            pairs: batch.pairs.clone(),
            node_rows: nn,
            material_rows: batch.materials.nrows(),
        })
    }

    /// Gradient of a scalar loss given its gradient with respect to the
    /// outputs and (optionally) the output tangents.
    pub fn backward(&self, fwd: &Forward, g_out: &Array2<f64>, g_tangents: &[Array2<f64>]) -> Self {
        let mut grads = self.zeros_like();
        self.accumulate(fwd, g_out, g_tangents, &mut grads);
        grads
    }

    /// Adds the gradient of one loss term to `grads`.
    pub fn accumulate(&self, fwd: &Forward, g_out: &Array2<f64>, g_tangents: &[Array2<f64>], grads: &mut Self) {
        let (gx, gxt) = self
            .head
            .backward(&fwd.head, g_out.clone(), g_tangents.to_vec(), 0, &mut grads.head);
        let wn = self.node.output_width();
        let wm = self.material.output_width();
        let mut g_node = Array2::zeros((fwd.node_rows, wn));
        let mut g_node_t: Vec<Array2<f64>> = gxt.iter().map(|_| Array2::zeros((fwd.node_rows, wn))).collect();
        let mut g_mat = Array2::zeros((fwd.material_rows, wm));
        for (r, &(ni, mi)) in fwd.pairs.iter().enumerate() {
            let mut row = g_node.row_mut(ni);
            row += &gx.slice(s![r, ..wn]);
            let mut row = g_mat.row_mut(mi);
            row += &gx.slice(s![r, wn..]);
            for (dst, src) in g_node_t.iter_mut().zip(&gxt) {
                let mut row = dst.row_mut(ni);
                row += &src.slice(s![r, ..wn]);
            }
        }
        self.node.backward(&fwd.node, g_node, g_node_t, 0, &mut grads.node);
        self.material
            .backward(&fwd.material, g_mat, Vec::new(), 0, &mut grads.material);
    }

    /// Gradient of a loss with respect to the weight matrix of head layer
    /// `layer` only; stops the reverse sweep there.
    pub fn head_weight_gradient(
        &self,
        fwd: &Forward,
        g_out: &Array2<f64>,
        g_tangents: &[Array2<f64>],
        layer: usize,
    ) -> Array2<f64> {
        let mut grads = self.head.zeros_like();
        self.head
            .backward(&fwd.head, g_out.clone(), g_tangents.to_vec(), layer, &mut grads);
        grads.layers.swap_remove(layer).weights
    }

    /// Index of the head layer whose weights are the shared layer for
    /// gradient balancing: the last hidden layer, or the only layer.
    pub fn shared_layer(&self) -> usize {
        self.head.layers.len().saturating_sub(2)
    }

    /// All parameters in a fixed order: node, material, head; per layer the
    /// row-major weights then the bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut parts = Vec::new();
        self.node.visit(&mut parts);
        self.material.visit(&mut parts);
        self.head.visit(&mut parts);
        parts.concat()
    }

    pub fn assign_flat(&mut self, values: &[f64]) {
        let mut parts = Vec::new();
        self.node.visit_mut(&mut parts);
        self.material.visit_mut(&mut parts);
        self.head.visit_mut(&mut parts);
        let total: usize = parts.iter().map(|p| p.len()).sum();
        assert_eq!(total, values.len(), "flat parameter length");
        let mut offset = 0;
        for p in parts {
            p.copy_from_slice(&values[offset..offset + p.len()]);
            offset += p.len();
        }
    }

    pub fn param_count(&self) -> usize {
        let mut parts = Vec::new();
        self.node.visit(&mut parts);
        self.material.visit(&mut parts);
        self.head.visit(&mut parts);
        parts.iter().map(|p| p.len()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        let mut parts = Vec::new();
        self.node.visit(&mut parts);
        self.material.visit(&mut parts);
        self.head.visit(&mut parts);
        parts.iter().flat_map(|p| p.iter()).fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Output vector for one node/material input pair.
pub fn forward(params: &NetworkParameters, node_features: &[f64], material_features: &[f64]) -> Result<Vec<f64>> {
    let fwd = params.forward(&Batch::single(node_features, material_features), false)?;
    Ok(fwd.outputs().row(0).to_vec())
}

/// Jacobian of the outputs with respect to the coordinate features,
/// `outputs x coordinate_dims`.
pub fn input_gradient(
    params: &NetworkParameters,
    node_features: &[f64],
    material_features: &[f64],
) -> Result<Array2<f64>> {
    let fwd = params.forward(&Batch::single(node_features, material_features), true)?;
    let dims = params.coordinate_dims;
    let mut jac = Array2::zeros((params.head.output_width(), dims));
    for (d, t) in fwd.output_tangents().iter().enumerate() {
        jac.column_mut(d).assign(&t.row(0));
    }
    Ok(jac)
}

/// Gradient of `sum(upstream * outputs)` with respect to every parameter.
pub fn backward_params(params: &NetworkParameters, batch: &Batch, upstream: &Array2<f64>) -> Result<NetworkParameters> {
    let fwd = params.forward(batch, false)?;
    if upstream.dim() != fwd.outputs().dim() {
        return Err(SurrogateError::WidthMismatch {
            what: "upstream gradient",
            expected: fwd.outputs().ncols(),
            got: upstream.ncols(),
        });
    }
    Ok(params.backward(&fwd, upstream, &[]))
}
