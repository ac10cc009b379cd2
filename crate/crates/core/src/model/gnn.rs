use rand::Rng;

use super::{Bound, Conv, GraphInputs, ModelConfig};
use crate::tensor::{Real, Tape, Var};

/// Two message-passing layers and the logit head; returns `n × 1` logits.
///
/// GCN layer: `ReLU(Â · H · W)`. Sage layer: `ReLU(H · W_self + mean_N(H) · W_neigh)`,
/// where isolated nodes aggregate a zero vector. Dropout runs between layers in
/// training mode only.
pub fn gnn_forward<T: Real, R: Rng + ?Sized>(
    tape: &mut Tape<T>,
    params: &Bound<'_>,
    inputs: &GraphInputs<T>,
    z: Var,
    cfg: &ModelConfig,
    train: bool,
    rng: &mut R,
) -> Var {
    let mut h = z;
    for layer in 0..2 {
        let pre = match cfg.conv {
            Conv::Gcn => {
                let w = params.var(&format!("gnn.{layer}.w"));
                let hw = tape.matmul(h, w);
                tape.spmm(&inputs.gcn, hw)
            }
            Conv::Sage => {
                let w_self = params.var(&format!("gnn.{layer}.w_self"));
                let w_neigh = params.var(&format!("gnn.{layer}.w_neigh"));
                let own = tape.matmul(h, w_self);
                let hw = tape.matmul(h, w_neigh);
                let neigh = tape.spmm(&inputs.sage_mean, hw);
                tape.add(own, neigh)
            }
        };
        h = tape.relu(pre);
        if train {
            h = tape.dropout(h, cfg.dropout, rng);
        }
    }
    let w = params.var("head.w");
    let b = params.var("head.b");
    let lin = tape.matmul(h, w);
    tape.add_bias(lin, b)
}
