//! Single-hidden-layer feedforward networks with random input weights.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::Mat;
use crate::rng::seeded;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }
}

/// Random input layer: `weights` is `n × Ñ` (one column per hidden node), `biases` has `Ñ` entries.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenLayer {
    weights: Mat,
    biases: Vec<f64>,
    activation: Activation,
}

impl HiddenLayer {
    pub fn from_parts(weights: Mat, biases: Vec<f64>, activation: Activation) -> Result<Self> {
        if weights.cols() != biases.len() {
            return Err(Error::DimensionMismatch {
                op: "hidden layer",
                left: weights.shape(),
                right: (biases.len(), 1),
            });
        }
        if weights.cols() == 0 || weights.rows() == 0 {
            return Err(invalid(
                "hidden layer",
                "needs at least one input and one node",
            ));
        }
        Ok(Self {
            weights,
            biases,
            activation,
        })
    }

    /// Draws weights then biases i.i.d. from U[-1, 1] with a seeded ChaCha8 stream.
    pub fn init_random(seed: u64, n_inputs: usize, n_nodes: usize) -> Result<Self> {
        if n_inputs == 0 || n_nodes == 0 {
            return Err(invalid(
                "dimensions",
                format!("n={n_inputs} and n_tilde={n_nodes} must both be >= 1"),
            ));
        }
        let (weights, biases) = draw_block(seed, n_inputs, n_nodes);
        Ok(Self {
            weights,
            biases,
            activation: Activation::Sigmoid,
        })
    }

    /// Returns a layer with `delta` extra nodes drawn from `seed`; existing nodes are kept verbatim.
    pub fn append_nodes(&self, seed: u64, delta: usize) -> Result<Self> {
        if delta == 0 {
            return Err(invalid("delta", "must add at least one node"));
        }
        let (new_w, new_b) = draw_block(seed, self.n_inputs(), delta);
        let mut biases = self.biases.clone();
        biases.extend(new_b);
        Ok(Self {
            weights: self.weights.hcat(&new_w)?,
            biases,
            activation: self.activation,
        })
    }

    /// Sub-layer holding nodes `[start, end)`.
    pub fn nodes(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n_nodes() {
            return Err(invalid(
                "node range",
                format!("{start}..{end} of {}", self.n_nodes()),
            ));
        }
        Ok(Self {
            weights: self.weights.column_block(start, end),
            biases: self.biases[start..end].to_vec(),
            activation: self.activation,
        })
    }

    pub fn n_inputs(&self) -> usize {
        self.weights.rows()
    }

    pub fn n_nodes(&self) -> usize {
        self.weights.cols()
    }

    pub fn weights(&self) -> &Mat {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Hidden-layer output `H`, shape `N × Ñ`, with `H[j, i] = h(a_i · x_j + ν_i)`.
    pub fn hidden_output(&self, x: &Mat) -> Result<Mat> {
        if x.cols() != self.n_inputs() {
            return Err(Error::DimensionMismatch {
                op: "hidden_output",
                left: x.shape(),
                right: self.weights.shape(),
            });
        }
        let mut h = x.matmul(&self.weights)?;
        for j in 0..h.rows() {
            for (v, b) in h.row_mut(j).iter_mut().zip(&self.biases) {
                *v = self.activation.apply(*v + b);
            }
        }
        Ok(h)
    }
}

fn draw_block(seed: u64, n_inputs: usize, n_nodes: usize) -> (Mat, Vec<f64>) {
    let mut rng = seeded(seed);
    let weights = Mat::from_fn(n_inputs, n_nodes, |_, _| rng.gen_range(-1.0..=1.0));
    let biases = (0..n_nodes).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    (weights, biases)
}

/// A hidden layer together with trained output weights (`Ñ × m`).
#[derive(Clone, Debug, PartialEq)]
pub struct SlfnModel {
    pub hidden: HiddenLayer,
    pub output_weights: Mat,
}

impl SlfnModel {
    pub fn new(hidden: HiddenLayer, output_weights: Mat) -> Result<Self> {
        if output_weights.rows() != hidden.n_nodes() {
            return Err(Error::DimensionMismatch {
                op: "model",
                left: (hidden.n_inputs(), hidden.n_nodes()),
                right: output_weights.shape(),
            });
        }
        Ok(Self {
            hidden,
            output_weights,
        })
    }

    pub fn predict(&self, x: &Mat) -> Result<Mat> {
        self.hidden.hidden_output(x)?.matmul(&self.output_weights)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ModelFile::from(self)).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        file.try_into()
    }
}

/// On-disk model layout. Matrices are row-major arrays.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    n: usize,
    n_tilde: usize,
    m: usize,
    activation: Activation,
    a: Vec<f64>,
    nu: Vec<f64>,
    b: Vec<f64>,
}

impl From<&SlfnModel> for ModelFile {
    fn from(model: &SlfnModel) -> Self {
        Self {
            n: model.hidden.n_inputs(),
            n_tilde: model.hidden.n_nodes(),
            m: model.output_weights.cols(),
            activation: model.hidden.activation,
            a: model.hidden.weights.as_slice().to_vec(),
            nu: model.hidden.biases.clone(),
            b: model.output_weights.as_slice().to_vec(),
        }
    }
}

impl TryFrom<ModelFile> for SlfnModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        let weights = Mat::new(f.n, f.n_tilde, f.a)?;
        let hidden = HiddenLayer::from_parts(weights, f.nu, f.activation)?;
        SlfnModel::new(hidden, Mat::new(f.n_tilde, f.m, f.b)?)
    }
}
