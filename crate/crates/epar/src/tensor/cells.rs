//! GRU and LSTM cells as differentiable compositions of tape operations.
//!
//! Gate convention for the GRU: `h' = (1 - z) o h_prev + z o h_cand`, with
//! update gate `z`, reset gate `r`, and candidate `h_cand`.

use rand_chacha::ChaCha8Rng;

use super::params::ModelParams;
use super::tape::{Tape, VarId};
use super::TensorError;

/// Tape handles for one GRU cell's weights. Input-to-hidden matrices are
/// `[hidden x in]`, hidden-to-hidden are `[hidden x hidden]`.
#[derive(Debug, Clone, Copy)]
pub struct GruParams {
    pub wz: VarId,
    pub uz: VarId,
    pub bz: VarId,
    pub wr: VarId,
    pub ur: VarId,
    pub br: VarId,
    pub wh: VarId,
    pub uh: VarId,
    pub bh: VarId,
}

impl GruParams {
    pub fn register(params: &mut ModelParams, rng: &mut ChaCha8Rng, prefix: &str, in_dim: usize, hidden: usize) {
        for gate in ["z", "r", "h"] {
            params.add_xavier(rng, &format!("{prefix}.w{gate}"), hidden, in_dim);
            params.add_xavier(rng, &format!("{prefix}.u{gate}"), hidden, hidden);
            params.add_zeros(&format!("{prefix}.b{gate}"), vec![hidden]);
        }
    }

    pub fn bind(tape: &mut Tape, params: &ModelParams, prefix: &str) -> Result<Self, TensorError> {
        Ok(GruParams {
            wz: tape.param(&format!("{prefix}.wz"), params)?,
            uz: tape.param(&format!("{prefix}.uz"), params)?,
            bz: tape.param(&format!("{prefix}.bz"), params)?,
            wr: tape.param(&format!("{prefix}.wr"), params)?,
            ur: tape.param(&format!("{prefix}.ur"), params)?,
            br: tape.param(&format!("{prefix}.br"), params)?,
            wh: tape.param(&format!("{prefix}.wh"), params)?,
            uh: tape.param(&format!("{prefix}.uh"), params)?,
            bh: tape.param(&format!("{prefix}.bh"), params)?,
        })
    }
}

fn gate(
    tape: &mut Tape,
    w: VarId,
    x: VarId,
    u: VarId,
    h: VarId,
    b: VarId,
) -> Result<VarId, TensorError> {
    let wx = tape.matmul(w, x)?;
    let uh = tape.matmul(u, h)?;
    let s = tape.add(wx, uh)?;
    tape.add(s, b)
}

/// One GRU step on vectors: `x` is `[in]`, `h_prev` is `[hidden]`.
pub fn gru_cell(tape: &mut Tape, x: VarId, h_prev: VarId, p: &GruParams) -> Result<VarId, TensorError> {
    let z_pre = gate(tape, p.wz, x, p.uz, h_prev, p.bz)?;
    let z = tape.sigmoid(z_pre)?;
    let r_pre = gate(tape, p.wr, x, p.ur, h_prev, p.br)?;
    let r = tape.sigmoid(r_pre)?;
    let rh = tape.mul(r, h_prev)?;
    let c_pre = gate(tape, p.wh, x, p.uh, rh, p.bh)?;
    let h_cand = tape.tanh(c_pre)?;
    let one_minus_z = tape.affine(z, -1.0, 1.0)?;
    let keep = tape.mul(one_minus_z, h_prev)?;
    let update = tape.mul(z, h_cand)?;
    tape.add(keep, update)
}

/// Tape handles for one LSTM cell's weights (input, forget, output,
/// candidate gates).
#[derive(Debug, Clone, Copy)]
pub struct LstmParams {
    pub wi: VarId,
    pub ui: VarId,
    pub bi: VarId,
    pub wf: VarId,
    pub uf: VarId,
    pub bf: VarId,
    pub wo: VarId,
    pub uo: VarId,
    pub bo: VarId,
    pub wg: VarId,
    pub ug: VarId,
    pub bg: VarId,
}

impl LstmParams {
    pub fn register(params: &mut ModelParams, rng: &mut ChaCha8Rng, prefix: &str, in_dim: usize, hidden: usize) {
        for gate in ["i", "f", "o", "g"] {
            params.add_xavier(rng, &format!("{prefix}.w{gate}"), hidden, in_dim);
            params.add_xavier(rng, &format!("{prefix}.u{gate}"), hidden, hidden);
            params.add_zeros(&format!("{prefix}.b{gate}"), vec![hidden]);
        }
    }

    pub fn bind(tape: &mut Tape, params: &ModelParams, prefix: &str) -> Result<Self, TensorError> {
        Ok(LstmParams {
            wi: tape.param(&format!("{prefix}.wi"), params)?,
            ui: tape.param(&format!("{prefix}.ui"), params)?,
            bi: tape.param(&format!("{prefix}.bi"), params)?,
            wf: tape.param(&format!("{prefix}.wf"), params)?,
            uf: tape.param(&format!("{prefix}.uf"), params)?,
            bf: tape.param(&format!("{prefix}.bf"), params)?,
            wo: tape.param(&format!("{prefix}.wo"), params)?,
            uo: tape.param(&format!("{prefix}.uo"), params)?,
            bo: tape.param(&format!("{prefix}.bo"), params)?,
            wg: tape.param(&format!("{prefix}.wg"), params)?,
            ug: tape.param(&format!("{prefix}.ug"), params)?,
            bg: tape.param(&format!("{prefix}.bg"), params)?,
        })
    }
}

/// One LSTM step on vectors. Returns `(h_next, c_next)`.
pub fn lstm_cell(
    tape: &mut Tape,
    x: VarId,
    h_prev: VarId,
    c_prev: VarId,
    p: &LstmParams,
) -> Result<(VarId, VarId), TensorError> {
    let i_pre = gate(tape, p.wi, x, p.ui, h_prev, p.bi)?;
    let i = tape.sigmoid(i_pre)?;
    let f_pre = gate(tape, p.wf, x, p.uf, h_prev, p.bf)?;
    let f = tape.sigmoid(f_pre)?;
    let o_pre = gate(tape, p.wo, x, p.uo, h_prev, p.bo)?;
    let o = tape.sigmoid(o_pre)?;
    let g_pre = gate(tape, p.wg, x, p.ug, h_prev, p.bg)?;
    let g = tape.tanh(g_pre)?;
    let fc = tape.mul(f, c_prev)?;
    let ig = tape.mul(i, g)?;
    let c_next = tape.add(fc, ig)?;
    let tc = tape.tanh(c_next)?;
    let h_next = tape.mul(o, tc)?;
    Ok((h_next, c_next))
}
