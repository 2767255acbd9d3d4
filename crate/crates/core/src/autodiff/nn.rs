//! Parameterized building blocks: dense layers, GRU cells, multi-head attention.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore};
use super::AutodiffError;

type Res = Result<Var, AutodiffError>;

fn finite(g: &Graph, v: Var, op: &'static str) -> Res {
    if g.value(v).is_finite() {
        Ok(v)
    } else {
        Err(AutodiffError::NonFinite { op })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Tanh,
    Sigmoid,
    Relu,
}

impl Activation {
    fn apply(self, g: &mut Graph, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Tanh => g.tanh(x),
            Activation::Sigmoid => g.sigmoid(x),
            Activation::Relu => g.relu(x),
        }
    }
}

/// Affine map followed by an elementwise nonlinearity.
#[derive(Clone, Debug)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let weight = store.add_uniform(format!("{name}.w"), in_dim, out_dim, in_dim, rng);
        let bias = store.add_uniform(format!("{name}.b"), 1, out_dim, in_dim, rng);
        Self { weight, bias, in_dim, out_dim, activation }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Res {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let y = g.matmul(x, w)?;
        let y = g.add_row(y, b)?;
        let y = self.activation.apply(g, y);
        finite(g, y, "dense")
    }
}

/// Gated recurrent unit over a batch of rows.
///
/// `h' = (1 − z) ⊙ h + z ⊙ n`, so a closed update gate keeps the state.
#[derive(Clone, Debug)]
pub struct GruCell {
    pub wx: ParamId,
    pub wh: ParamId,
    pub bx: ParamId,
    pub bh: ParamId,
    pub in_dim: usize,
    pub hidden: usize,
}

impl GruCell {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, in_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let wx = store.add_uniform(format!("{name}.wx"), in_dim, 3 * hidden, hidden, rng);
        let wh = store.add_uniform(format!("{name}.wh"), hidden, 3 * hidden, hidden, rng);
        let bx = store.add_uniform(format!("{name}.bx"), 1, 3 * hidden, hidden, rng);
        let bh = store.add_uniform(format!("{name}.bh"), 1, 3 * hidden, hidden, rng);
        Self { wx, wh, bx, bh, in_dim, hidden }
    }

    pub fn forward(&self, g: &mut Graph, x: Var, h: Var) -> Res {
        let hd = self.hidden;
        let (wx, wh, bx, bh) = (g.param(self.wx), g.param(self.wh), g.param(self.bx), g.param(self.bh));
        let gx = g.matmul(x, wx)?;
        let gx = g.add_row(gx, bx)?;
        let gh = g.matmul(h, wh)?;
        let gh = g.add_row(gh, bh)?;

        let xr = g.slice_cols(gx, 0, hd)?;
        let hr = g.slice_cols(gh, 0, hd)?;
        let r = g.add(xr, hr)?;
        let r = g.sigmoid(r);

        let xz = g.slice_cols(gx, hd, hd)?;
        let hz = g.slice_cols(gh, hd, hd)?;
        let z = g.add(xz, hz)?;
        let z = g.sigmoid(z);

        let xn = g.slice_cols(gx, 2 * hd, hd)?;
        let hn = g.slice_cols(gh, 2 * hd, hd)?;
        let rn = g.mul(r, hn)?;
        let n = g.add(xn, rn)?;
        let n = g.tanh(n);

        let diff = g.sub(n, h)?;
        let step = g.mul(z, diff)?;
        let out = g.add(h, step)?;
        finite(g, out, "gru_cell")
    }
}

/// Scaled dot-product multi-head self-attention over a token matrix.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
    pub bo: ParamId,
    pub dim: usize,
    pub heads: usize,
}

impl MultiHeadAttention {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, dim: usize, heads: usize, rng: &mut R) -> Self {
        assert!(heads > 0 && dim % heads == 0, "dim {dim} not divisible by {heads} heads");
        Self {
            wq: store.add_uniform(format!("{name}.wq"), dim, dim, dim, rng),
            wk: store.add_uniform(format!("{name}.wk"), dim, dim, dim, rng),
            wv: store.add_uniform(format!("{name}.wv"), dim, dim, dim, rng),
            wo: store.add_uniform(format!("{name}.wo"), dim, dim, dim, rng),
            bo: store.add_uniform(format!("{name}.bo"), 1, dim, dim, rng),
            dim,
            heads,
        }
    }

    pub fn forward(&self, g: &mut Graph, tokens: Var) -> Res {
        let cols = g.value(tokens).cols();
        if cols != self.dim {
            return Err(AutodiffError::ShapeMismatch { op: "mha", left: g.value(tokens).shape(), right: [self.dim, self.dim] });
        }
        let (wq, wk, wv, wo, bo) = (g.param(self.wq), g.param(self.wk), g.param(self.wv), g.param(self.wo), g.param(self.bo));
        let q = g.matmul(tokens, wq)?;
        let k = g.matmul(tokens, wk)?;
        let v = g.matmul(tokens, wv)?;
        let dh = self.dim / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = g.slice_cols(q, h * dh, dh)?;
            let kh = g.slice_cols(k, h * dh, dh)?;
            let vh = g.slice_cols(v, h * dh, dh)?;
            let scores = g.matmul_bt(qh, kh)?;
            let scores = g.scale(scores, scale);
            let attn = g.softmax_rows(scores);
            outs.push(g.matmul(attn, vh)?);
        }
        let cat = g.concat_cols(&outs)?;
        let o = g.matmul(cat, wo)?;
        let o = g.add_row(o, bo)?;
        finite(g, o, "mha")
    }
}

/// Residual attention block followed by a residual two-layer feedforward.
#[derive(Clone, Debug)]
pub struct EncoderBlock {
    pub attn: MultiHeadAttention,
    pub ff_in: Dense,
    pub ff_out: Dense,
}

impl EncoderBlock {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, dim: usize, heads: usize, ff: usize, rng: &mut R) -> Self {
        Self {
            attn: MultiHeadAttention::new(store, &format!("{name}.attn"), dim, heads, rng),
            ff_in: Dense::new(store, &format!("{name}.ff_in"), dim, ff, Activation::Tanh, rng),
            ff_out: Dense::new(store, &format!("{name}.ff_out"), ff, dim, Activation::Identity, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Res {
        let a = self.attn.forward(g, x)?;
        let x = g.add(x, a)?;
        let f = self.ff_in.forward(g, x)?;
        let f = self.ff_out.forward(g, f)?;
        g.add(x, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dense_with_zero_parameters_outputs_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::default();
        let d = Dense::new(&mut store, "d", 3, 2, Activation::Identity, &mut rng);
        store.value_mut(d.weight).scale_assign(0.0);
        store.value_mut(d.bias).scale_assign(0.0);
        let mut g = Graph::new(&store);
        let x = g.constant(Tensor::row(&[1.0, -2.0, 3.0]));
        let y = d.forward(&mut g, x).unwrap();
        assert_eq!(g.value(y).data(), &[0.0, 0.0]);
    }

    #[test]
    fn closed_update_gate_keeps_hidden_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::default();
        let cell = GruCell::new(&mut store, "gru", 2, 3, &mut rng);
        // Drive the z-gate pre-activation to −∞ so sigmoid(z) is exactly 0.
        for c in 3..6 {
            store.value_mut(cell.bx).set(0, c, -1e4);
        }
        let mut g = Graph::new(&store);
        let x = g.constant(Tensor::row(&[0.3, -0.7]));
        let h = g.constant(Tensor::row(&[0.1, 0.2, -0.4]));
        let h2 = cell.forward(&mut g, x, h).unwrap();
        assert_eq!(g.value(h2).data(), g.value(h).data());
    }

    #[test]
    fn attention_over_single_token_is_value_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::default();
        let mha = MultiHeadAttention::new(&mut store, "mha", 4, 2, &mut rng);
        let x = Tensor::row(&[0.5, -1.0, 0.25, 2.0]);
        let mut g = Graph::new(&store);
        let xv = g.constant(x.clone());
        let y = mha.forward(&mut g, xv).unwrap();
        let v = x.matmul(store.value(mha.wv));
        let mut expect = v.matmul(store.value(mha.wo));
        expect.add_assign(store.value(mha.bo));
        for (a, b) in g.value(y).data().iter().zip(expect.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mha_rejects_wrong_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::default();
        let mha = MultiHeadAttention::new(&mut store, "mha", 4, 2, &mut rng);
        let mut g = Graph::new(&store);
        let x = g.constant(Tensor::zeros(2, 3));
        assert!(mha.forward(&mut g, x).is_err());
    }
}
