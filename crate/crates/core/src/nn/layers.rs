use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Bindings, ParamId, ParamStore, Tape, Var};
use crate::error::Result;
use crate::matrix::DenseMatrix;

/// Seeded parameter initializer.
pub struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn uniform(&mut self, rows: usize, cols: usize, bound: f64) -> DenseMatrix {
        let data = (0..rows * cols)
            .map(|_| self.rng.random_range(-bound..=bound))
            .collect();
        DenseMatrix::from_vec(rows, cols, data).expect("shape")
    }

    /// Glorot-uniform `fan_in x fan_out` block.
    pub fn glorot(&mut self, fan_in: usize, fan_out: usize) -> DenseMatrix {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        self.uniform(fan_in, fan_out, bound)
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// Affine map `x W + b` with `W` stored `in x out`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        input: usize,
        output: usize,
        bias: bool,
    ) -> Self {
        let weight = store.add(format!("{name}.weight"), init.glorot(input, output), true);
        let bias = bias.then(|| store.add(format!("{name}.bias"), DenseMatrix::zeros(1, output), true));
        Self {
            weight,
            bias,
            input,
            output,
        }
    }

    pub fn param_count(input: usize, output: usize, bias: bool) -> usize {
        input * output + if bias { output } else { 0 }
    }

    pub fn forward(&self, tape: &mut Tape, b: &Bindings, x: Var) -> Result<Var> {
        let y = tape.matmul(x, b.var(self.weight))?;
        match self.bias {
            Some(bias) => tape.add_row(y, b.var(bias)),
            None => Ok(y),
        }
    }
}

/// Linear layers with ReLU between them (none after the last).
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    /// `widths = [in, hidden..., out]`.
    pub fn new(store: &mut ParamStore, init: &mut Init, name: &str, widths: &[usize]) -> Self {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, init, &format!("{name}.{i}"), w[0], w[1], true))
            .collect();
        Self { layers }
    }

    pub fn param_count(widths: &[usize]) -> usize {
        widths.windows(2).map(|w| Linear::param_count(w[0], w[1], true)).sum()
    }

    pub fn forward(&self, tape: &mut Tape, b: &Bindings, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, b, h)?;
            if i + 1 < self.layers.len() {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }
}

/// Single-head self-attention with a residual connection and a ReLU
/// feed-forward sublayer, applied independently within blocks of rows.
#[derive(Debug, Clone)]
pub struct AttentionBlock {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub out: Linear,
    pub feed_forward: Option<Mlp>,
}

impl AttentionBlock {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        width: usize,
        ff_width: Option<usize>,
    ) -> Self {
        Self {
            query: Linear::new(store, init, &format!("{name}.query"), width, width, true),
            key: Linear::new(store, init, &format!("{name}.key"), width, width, true),
            value: Linear::new(store, init, &format!("{name}.value"), width, width, true),
            out: Linear::new(store, init, &format!("{name}.out"), width, width, true),
            feed_forward: ff_width
                .map(|f| Mlp::new(store, init, &format!("{name}.ff"), &[width, f, width])),
        }
    }

    pub fn param_count(width: usize, ff_width: Option<usize>) -> usize {
        4 * Linear::param_count(width, width, true)
            + ff_width.map_or(0, |f| Mlp::param_count(&[width, f, width]))
    }

    /// `offsets` delimit the blocks of rows that attend to each other.
    pub fn forward(
        &self,
        tape: &mut Tape,
        b: &Bindings,
        x: Var,
        offsets: std::rc::Rc<[usize]>,
    ) -> Result<Var> {
        let q = self.query.forward(tape, b, x)?;
        let k = self.key.forward(tape, b, x)?;
        let v = self.value.forward(tape, b, x)?;
        let attended = tape.segment_attention(q, k, v, offsets)?;
        let projected = self.out.forward(tape, b, attended)?;
        let h = tape.add(x, projected)?;
        match &self.feed_forward {
            Some(ff) => {
                let f = ff.forward(tape, b, h)?;
                tape.add(h, f)
            }
            None => Ok(h),
        }
    }
}
