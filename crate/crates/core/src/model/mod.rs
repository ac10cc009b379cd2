//! The detector network: a cross-attention blend of content and degree
//! features feeding a two-layer GCN or Sage classifier with a logit head.
//!
//! Parameters live in a [`Params`] store (ordered named tensors). Every forward
//! pass binds them onto a fresh [`Tape`] as trainable leaves.

mod adjacency;
mod checkpoint;
mod fusion;
mod gnn;

use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adjacency::NormalizedAdjacency;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use fusion::fuse_modalities;
pub use gnn::gnn_forward;

use crate::tensor::{cast, Real, SparseOperator, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conv {
    Gcn,
    Sage,
}

/// Which parts of the fusion block are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Cross-attention gated blend of both modalities.
    Full,
    /// Content branch only; degree features are not used before message passing.
    NoGraph,
    /// Degree branch only.
    NoText,
    /// Plain concatenation of both projected modalities, no gating.
    NoCrossattn,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::Full,
        Ablation::NoGraph,
        Ablation::NoText,
        Ablation::NoCrossattn,
    ];

    pub fn uses_content(self) -> bool {
        self != Ablation::NoText
    }

    pub fn uses_context(self) -> bool {
        self != Ablation::NoGraph
    }

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoGraph => "no_graph",
            Ablation::NoText => "no_text",
            Ablation::NoCrossattn => "no_crossattn",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub conv: Conv,
    pub hidden: usize,
    pub dropout: f64,
    pub d_c: usize,
    pub d_g: usize,
    pub ablation: Ablation,
}

impl ModelConfig {
    pub fn new(d_c: usize, d_g: usize) -> Self {
        ModelConfig {
            conv: Conv::Gcn,
            hidden: 128,
            dropout: 0.2,
            d_c,
            d_g,
            ablation: Ablation::Full,
        }
    }
}

/// Content-only MLP baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub layers: usize,
    pub hidden: usize,
    pub dropout: f64,
    pub d_in: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    IoHunter(ModelConfig),
    ContentMlp(MlpConfig),
}

/// Ordered named parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub names: Vec<String>,
    pub tensors: Vec<Array2<T>>,
}

impl<T: Real> Params<T> {
    pub fn get(&self, name: &str) -> Option<&Array2<T>> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Array2<T>> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(move |i| &mut self.tensors[i])
    }

    pub fn cast<U: Real>(&self) -> Params<U> {
        Params {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(cast).collect(),
        }
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    /// Register every tensor on `tape` as a trainable leaf.
    pub fn bind(&self, tape: &mut Tape<T>) -> Bound<'_> {
        let vars = self.tensors.iter().map(|t| tape.param(t.clone())).collect();
        Bound {
            names: &self.names,
            vars,
        }
    }
}

/// Parameters bound to a tape.
pub struct Bound<'a> {
    names: &'a [String],
    pub vars: Vec<Var>,
}

impl Bound<'_> {
    pub fn var(&self, name: &str) -> Var {
        let idx = self
            .names
            .iter()
            .position(|n| n == name)
            .unwrap_or_else(|| panic!("no parameter named {name}"));
        self.vars[idx]
    }
}

/// `(name, shape, is_weight)` for each parameter, in storage order.
pub fn param_layout(arch: &Architecture) -> Vec<(String, (usize, usize), bool)> {
    let mut out: Vec<(String, (usize, usize), bool)> = Vec::new();
    let mut w = |name: &str, shape: (usize, usize)| out.push((name.to_string(), shape, true));
    match arch {
        Architecture::IoHunter(cfg) => {
            let d = cfg.hidden;
            let ab = cfg.ablation;
            if ab.uses_content() {
                w("fusion.w_c", (cfg.d_c, d));
                w("fusion.b_c", (1, d));
            }
            if ab.uses_context() {
                w("fusion.w_g", (cfg.d_g, d));
                w("fusion.b_g", (1, d));
            }
            if ab == Ablation::Full {
                w("fusion.wa_c", (cfg.d_g, d));
                w("fusion.ba_c", (1, d));
                w("fusion.wa_g", (cfg.d_c, d));
                w("fusion.ba_g", (1, d));
            }
            let z_in = if ab.uses_content() && ab.uses_context() { 2 * d } else { d };
            w("fusion.w_z1", (z_in, d));
            w("fusion.b_z1", (1, d));
            w("fusion.w_z2", (d, d));
            w("fusion.b_z2", (1, d));
            for layer in 0..2 {
                match cfg.conv {
                    Conv::Gcn => w(&format!("gnn.{layer}.w"), (d, d)),
                    Conv::Sage => {
                        w(&format!("gnn.{layer}.w_self"), (d, d));
                        w(&format!("gnn.{layer}.w_neigh"), (d, d));
                    }
                }
            }
            w("head.w", (d, 1));
            w("head.b", (1, 1));
        }
        Architecture::ContentMlp(cfg) => {
            let mut d_in = cfg.d_in;
            for layer in 0..cfg.layers {
                w(&format!("mlp.{layer}.w"), (d_in, cfg.hidden));
                w(&format!("mlp.{layer}.b"), (1, cfg.hidden));
                d_in = cfg.hidden;
            }
            w("head.w", (d_in, 1));
            w("head.b", (1, 1));
        }
    }
    for entry in &mut out {
        entry.2 = entry.1 .0 != 1;
    }
    out
}

/// Glorot-uniform weights, zero biases, drawn in layout order from `seed`.
pub fn init_params<T: Real>(arch: &Architecture, seed: u64) -> Params<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut names = Vec::new();
    let mut tensors = Vec::new();
    for (name, (rows, cols), is_weight) in param_layout(arch) {
        let t = if is_weight {
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_simple_fn((rows, cols), || T::from_f64(rng.random_range(-bound..bound)))
        } else {
            Array2::zeros((rows, cols))
        };
        names.push(name);
        tensors.push(t);
    }
    Params { names, tensors }
}

/// Everything a forward pass reads besides the parameters.
#[derive(Debug, Clone)]
pub struct GraphInputs<T: Real> {
    /// `n × d_c` content embeddings.
    pub content: Array2<T>,
    /// `n × d_g` degree one-hots.
    pub context: Array2<T>,
    pub gcn: Arc<SparseOperator<T>>,
    pub sage_mean: Arc<SparseOperator<T>>,
}

impl<T: Real> GraphInputs<T> {
    pub fn new(content: &Array2<f32>, context: &Array2<f32>, adjacency: &NormalizedAdjacency) -> Self {
        assert_eq!(content.nrows(), context.nrows(), "content/context row mismatch");
        assert_eq!(content.nrows(), adjacency.n(), "feature/adjacency node mismatch");
        GraphInputs {
            content: cast(content),
            context: cast(context),
            gcn: Arc::new(adjacency.gcn.cast()),
            sage_mean: Arc::new(adjacency.sage_mean.cast()),
        }
    }

    pub fn n(&self) -> usize {
        self.content.nrows()
    }
}

impl Architecture {
    pub fn init<T: Real>(&self, seed: u64) -> Params<T> {
        init_params(self, seed)
    }

    pub fn dropout(&self) -> f64 {
        match self {
            Architecture::IoHunter(c) => c.dropout,
            Architecture::ContentMlp(c) => c.dropout,
        }
    }

    /// Scores `s = sigmoid(logits)` as an `n × 1` column.
    pub fn forward<T: Real, R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<T>,
        params: &Bound<'_>,
        inputs: &GraphInputs<T>,
        train: bool,
        rng: &mut R,
    ) -> Var {
        let logits = match self {
            Architecture::IoHunter(cfg) => {
                let c = tape.constant(inputs.content.clone());
                let g = tape.constant(inputs.context.clone());
                let z = fuse_modalities(tape, params, c, g, cfg.ablation);
                gnn_forward(tape, params, inputs, z, cfg, train, rng)
            }
            Architecture::ContentMlp(cfg) => {
                let mut h = tape.constant(inputs.content.clone());
                for layer in 0..cfg.layers {
                    let w = params.var(&format!("mlp.{layer}.w"));
                    let b = params.var(&format!("mlp.{layer}.b"));
                    let lin = tape.matmul(h, w);
                    let lin = tape.add_bias(lin, b);
                    h = tape.relu(lin);
                    if train {
                        h = tape.dropout(h, cfg.dropout, rng);
                    }
                }
                let w = params.var("head.w");
                let b = params.var("head.b");
                let lin = tape.matmul(h, w);
                tape.add_bias(lin, b)
            }
        };
        tape.sigmoid(logits)
    }

    /// Eval-mode scores for all nodes.
    pub fn predict<T: Real>(&self, params: &Params<T>, inputs: &GraphInputs<T>) -> Vec<T> {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        // eval mode draws no randomness
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = self.forward(&mut tape, &bound, inputs, false, &mut rng);
        tape.value(s).column(0).to_vec()
    }
}
