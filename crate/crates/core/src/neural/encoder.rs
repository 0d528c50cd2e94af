//! Sequence encoders for the token branch.

use rand::Rng;

use super::codec::PAD_ID;
use super::params::{glorot, ParamId, ParamStore};
use super::tape::{Tape, Var};
use crate::error::Result;
use ndarray::Array2;

/// Maps embedded token rows to one fixed-width vector per sequence.
///
/// `embedded` holds the embeddings of `tokens` flattened row-major, i.e. row
/// `b * max_len + t` is token `t` of sequence `b`.
pub trait SequenceEncoder: Send + Sync {
    fn name(&self) -> &str;
    fn output_dim(&self) -> usize;
    fn encode(&self, tape: &mut Tape, store: &ParamStore, embedded: Var, tokens: &[Vec<usize>]) -> Result<Var>;
}

/// Average of the non-PAD embeddings; all-PAD sequences map to zero.
pub struct MeanPoolEncoder {
    pub dim: usize,
}

impl SequenceEncoder for MeanPoolEncoder {
    fn name(&self) -> &str {
        "mean_pool"
    }

    fn output_dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, tape: &mut Tape, _store: &ParamStore, embedded: Var, tokens: &[Vec<usize>]) -> Result<Var> {
        let groups = tokens
            .iter()
            .enumerate()
            .map(|(b, row)| {
                let base = b * row.len();
                row.iter()
                    .enumerate()
                    .filter(|(_, &id)| id != PAD_ID)
                    .map(|(t, _)| base + t)
                    .collect()
            })
            .collect();
        Ok(tape.mean_rows(embedded, groups))
    }
}

/// Weights of one LSTM direction; gate order is input, forget, cell, output.
#[derive(Clone, Copy, Debug)]
pub struct LstmParams {
    /// `input × 4H`
    pub w_ih: ParamId,
    /// `H × 4H`
    pub w_hh: ParamId,
    /// `1 × 4H`
    pub bias: ParamId,
    pub hidden: usize,
}

impl LstmParams {
    pub fn register(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut bias = Array2::zeros((1, 4 * hidden));
        bias.slice_mut(ndarray::s![.., hidden..2 * hidden]).fill(1.0);
        Self {
            w_ih: store.add(&format!("{name}.w_ih"), glorot(input, 4 * hidden, rng), true),
            w_hh: store.add(&format!("{name}.w_hh"), glorot(hidden, 4 * hidden, rng), true),
            bias: store.add(&format!("{name}.bias"), bias, true),
            hidden,
        }
    }
}

/// One LSTM step: returns `(h', c')`.
pub fn lstm_cell(tape: &mut Tape, store: &ParamStore, p: &LstmParams, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
    let w_ih = tape.param(store, p.w_ih);
    let w_hh = tape.param(store, p.w_hh);
    let b = tape.param(store, p.bias);
    let xi = tape.matmul(x, w_ih)?;
    let hh = tape.matmul(h, w_hh)?;
    let z = tape.add(xi, hh)?;
    let z = tape.add_row(z, b)?;
    let n = p.hidden;
    let i = tape.slice_cols(z, 0, n);
    let f = tape.slice_cols(z, n, 2 * n);
    let g = tape.slice_cols(z, 2 * n, 3 * n);
    let o = tape.slice_cols(z, 3 * n, 4 * n);
    let i = tape.sigmoid(i);
    let f = tape.sigmoid(f);
    let g = tape.tanh(g);
    let o = tape.sigmoid(o);
    let fc = tape.mul(f, c)?;
    let ig = tape.mul(i, g)?;
    let c_new = tape.add(fc, ig)?;
    let tc = tape.tanh(c_new);
    let h_new = tape.mul(o, tc)?;
    Ok((h_new, c_new))
}

/// Stacked bidirectional LSTM. The encoding is the last layer's final forward
/// state concatenated with its final backward state. PAD positions leave the
/// state unchanged, so right-padded rows end at their last real token.
pub struct BiLstmEncoder {
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: Vec<[LstmParams; 2]>,
}

impl BiLstmEncoder {
    pub fn register(store: &mut ParamStore, input_dim: usize, hidden: usize, n_layers: usize, rng: &mut impl Rng) -> Self {
        let layers = (0..n_layers)
            .map(|l| {
                let inp = if l == 0 { input_dim } else { 2 * hidden };
                [
                    LstmParams::register(store, &format!("lstm.{l}.fwd"), inp, hidden, rng),
                    LstmParams::register(store, &format!("lstm.{l}.bwd"), inp, hidden, rng),
                ]
            })
            .collect();
        Self {
            input_dim,
            hidden,
            layers,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn run_direction(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        p: &LstmParams,
        inputs: &[Var],
        masks: &[Vec<f64>],
        batch: usize,
        reverse: bool,
    ) -> Result<Vec<Var>> {
        let zero = tape.input(Array2::zeros((batch, self.hidden)));
        let (mut h, mut c) = (zero, zero);
        let mut outs = vec![zero; inputs.len()];
        let order: Vec<usize> = if reverse {
            (0..inputs.len()).rev().collect()
        } else {
            (0..inputs.len()).collect()
        };
        for t in order {
            let (h_new, c_new) = lstm_cell(tape, store, p, inputs[t], h, c)?;
            h = tape.blend(h_new, h, masks[t].clone())?;
            c = tape.blend(c_new, c, masks[t].clone())?;
            outs[t] = h;
        }
        Ok(outs)
    }
}

impl SequenceEncoder for BiLstmEncoder {
    fn name(&self) -> &str {
        "bilstm"
    }

    fn output_dim(&self) -> usize {
        2 * self.hidden
    }

    fn encode(&self, tape: &mut Tape, store: &ParamStore, embedded: Var, tokens: &[Vec<usize>]) -> Result<Var> {
        let batch = tokens.len();
        let max_len = tokens.first().map_or(0, Vec::len);
        // Trailing steps where every row is PAD cannot change any state.
        let steps = (0..max_len)
            .rev()
            .find(|&t| tokens.iter().any(|row| row[t] != PAD_ID))
            .map_or(0, |t| t + 1);
        if steps == 0 {
            return Ok(tape.input(Array2::zeros((batch, self.output_dim()))));
        }
        let masks: Vec<Vec<f64>> = (0..steps)
            .map(|t| {
                tokens
                    .iter()
                    .map(|row| if row[t] != PAD_ID { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        let mut inputs = Vec::with_capacity(steps);
        for t in 0..steps {
            let rows = (0..batch).map(|b| b * max_len + t).collect();
            inputs.push(tape.gather(embedded, rows)?);
        }
        let mut finals = (inputs[0], inputs[0]);
        for (l, [fwd, bwd]) in self.layers.iter().enumerate() {
            tape.set_scope(&format!("lstm.{l}"));
            let f = self.run_direction(tape, store, fwd, &inputs, &masks, batch, false)?;
            let b = self.run_direction(tape, store, bwd, &inputs, &masks, batch, true)?;
            finals = (f[steps - 1], b[0]);
            if l + 1 < self.layers.len() {
                inputs = f
                    .iter()
                    .zip(&b)
                    .map(|(x, y)| tape.concat_cols(&[*x, *y]))
                    .collect::<Result<_>>()?;
            }
        }
        tape.concat_cols(&[finals.0, finals.1])
    }
}
