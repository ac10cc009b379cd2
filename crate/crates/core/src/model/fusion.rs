use super::{Ablation, Bound};
use crate::tensor::{Real, Tape, Var};

fn dense<T: Real>(tape: &mut Tape<T>, params: &Bound<'_>, x: Var, w: &str, b: &str) -> Var {
    let (w, b) = (params.var(w), params.var(b));
    let lin = tape.matmul(x, w);
    let lin = tape.add_bias(lin, b);
    tape.relu(lin)
}

/// Blend content rows `content` (`n × d_c`) and degree one-hots `context`
/// (`n × d_g`) into `n × d` node representations.
///
/// Full variant: each projected modality is gated element-wise by
/// coefficients computed from the *other* modality, the two gated halves are
/// concatenated, and two dense ReLU layers refine the result.
pub fn fuse_modalities<T: Real>(
    tape: &mut Tape<T>,
    params: &Bound<'_>,
    content: Var,
    context: Var,
    ablation: Ablation,
) -> Var {
    let z = match ablation {
        Ablation::Full => {
            let c_proj = dense(tape, params, content, "fusion.w_c", "fusion.b_c");
            let g_proj = dense(tape, params, context, "fusion.w_g", "fusion.b_g");
            let alpha_c = dense(tape, params, context, "fusion.wa_c", "fusion.ba_c");
            let alpha_g = dense(tape, params, content, "fusion.wa_g", "fusion.ba_g");
            let c_gated = tape.mul(alpha_c, c_proj);
            let g_gated = tape.mul(alpha_g, g_proj);
            tape.concat(c_gated, g_gated)
        }
        Ablation::NoCrossattn => {
            let c_proj = dense(tape, params, content, "fusion.w_c", "fusion.b_c");
            let g_proj = dense(tape, params, context, "fusion.w_g", "fusion.b_g");
            tape.concat(c_proj, g_proj)
        }
        Ablation::NoGraph => dense(tape, params, content, "fusion.w_c", "fusion.b_c"),
        Ablation::NoText => dense(tape, params, context, "fusion.w_g", "fusion.b_g"),
    };
    let z = dense(tape, params, z, "fusion.w_z1", "fusion.b_z1");
    dense(tape, params, z, "fusion.w_z2", "fusion.b_z2")
}
