//! State reconstruction: a conditional VAE for noisy fatigue and stacked
//! GRUs for stale robot and task fields.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{Activation, AutodiffError, Dense, Graph, GruCell, ParamStore, Tensor, Var};

use super::PolicyError;

type Res = Result<Var, AutodiffError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LatentMode {
    /// `z = μ + σ·ε` with the supplied noise.
    Sample,
    /// `z = μ`.
    Mean,
}

/// Conditional VAE over the per-human fatigue observation. The condition is
/// an embedding of working time and of the cognitive weight.
#[derive(Clone, Debug)]
pub struct CvaeReconstructor {
    pub work_emb: Dense,
    pub cog_emb: Dense,
    pub enc_hidden: Dense,
    pub enc_out: Dense,
    pub dec_hidden: Dense,
    pub dec_out: Dense,
    pub input_dim: usize,
    pub latent: usize,
}

pub struct CvaeOutput {
    pub recon: Var,
    pub mu: Var,
    pub logvar: Var,
}

impl CvaeReconstructor {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, cond: usize, hidden: usize, latent: usize, rng: &mut R) -> Self {
        let input_dim = 1;
        Self {
            work_emb: Dense::new(store, &format!("{name}.work_emb"), 1, cond, Activation::Tanh, rng),
            cog_emb: Dense::new(store, &format!("{name}.cog_emb"), 1, cond, Activation::Tanh, rng),
            enc_hidden: Dense::new(store, &format!("{name}.enc1"), input_dim + 2 * cond, hidden, Activation::Tanh, rng),
            enc_out: Dense::new(store, &format!("{name}.enc2"), hidden, 2 * latent, Activation::Identity, rng),
            dec_hidden: Dense::new(store, &format!("{name}.dec1"), latent + 2 * cond, hidden, Activation::Tanh, rng),
            dec_out: Dense::new(store, &format!("{name}.dec2"), hidden, input_dim, Activation::Identity, rng),
            input_dim,
            latent,
        }
    }

    /// Draws reparameterization noise for `rows` humans.
    pub fn draw_noise<R: Rng + ?Sized>(&self, rows: usize, rng: &mut R) -> Tensor {
        let data = (0..rows * self.latent).map(|_| StandardNormal.sample(rng)).collect();
        Tensor::from_vec(rows, self.latent, data).expect("sized")
    }

    /// `fatigue`, `working` and `cognitive` are `rows × 1`. `noise` is only
    /// read in sample mode.
    pub fn forward(
        &self,
        g: &mut Graph,
        fatigue: Var,
        working: Var,
        cognitive: Var,
        mode: LatentMode,
        noise: Option<&Tensor>,
    ) -> Result<CvaeOutput, AutodiffError> {
        let cw = self.work_emb.forward(g, working)?;
        let cc = self.cog_emb.forward(g, cognitive)?;
        let cond = g.concat_cols(&[cw, cc])?;
        let enc_in = g.concat_cols(&[fatigue, cond])?;
        let h = self.enc_hidden.forward(g, enc_in)?;
        let stats = self.enc_out.forward(g, h)?;
        let mu = g.slice_cols(stats, 0, self.latent)?;
        let logvar = g.slice_cols(stats, self.latent, self.latent)?;
        let z = match (mode, noise) {
            (LatentMode::Sample, Some(eps)) => {
                let half = g.scale(logvar, 0.5);
                let sd = g.exp(half);
                let e = g.constant(eps.clone());
                let se = g.mul(sd, e)?;
                g.add(mu, se)?
            }
            _ => mu,
        };
        let dec_in = g.concat_cols(&[z, cond])?;
        let h = self.dec_hidden.forward(g, dec_in)?;
        let recon = self.dec_out.forward(g, h)?;
        Ok(CvaeOutput { recon, mu, logvar })
    }
}

/// `½ Σ (μ² + σ² − 1 − log σ²)`, summed over all entries.
pub fn kl_standard_normal(g: &mut Graph, mu: Var, logvar: Var) -> Res {
    let m2 = g.square(mu);
    let s2 = g.exp(logvar);
    let t = g.add(m2, s2)?;
    let t = g.sub(t, logvar)?;
    let t = g.add_scalar(t, -1.0);
    let s = g.sum_all(t);
    Ok(g.scale(s, 0.5))
}

/// Squared reconstruction error plus `kl_weight` times the KL term, summed.
pub fn cvae_loss_graph(g: &mut Graph, x: Var, recon: Var, mu: Var, logvar: Var, kl_weight: f64) -> Res {
    let d = g.sub(x, recon)?;
    let d2 = g.square(d);
    let rec = g.sum_all(d2);
    let kl = kl_standard_normal(g, mu, logvar)?;
    let kl = g.scale(kl, kl_weight);
    g.add(rec, kl)
}

/// Three stacked GRUs over a window of past observations. A linear read-out
/// of the last hidden state corrects the latest observation.
#[derive(Clone, Debug)]
pub struct GruReconstructor {
    pub layers: [GruCell; 3],
    pub readout: Dense,
    pub dim: usize,
    pub hidden: usize,
    pub window: usize,
}

impl GruReconstructor {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, dim: usize, hidden: usize, window: usize, rng: &mut R) -> Self {
        let net = Self {
            layers: [
                GruCell::new(store, &format!("{name}.gru1"), dim, hidden, rng),
                GruCell::new(store, &format!("{name}.gru2"), hidden, hidden, rng),
                GruCell::new(store, &format!("{name}.gru3"), hidden, hidden, rng),
            ],
            readout: Dense::new(store, &format!("{name}.out"), hidden, dim, Activation::Identity, rng),
            dim,
            hidden,
            window,
        };
        // Start as the identity on the latest observation.
        for id in [net.readout.weight, net.readout.bias] {
            store.value_mut(id).scale_assign(0.0);
        }
        net
    }

    /// `steps[t]` is an `entities × dim` table; oldest first.
    pub fn forward(&self, g: &mut Graph, steps: &[Tensor]) -> Result<Var, PolicyError> {
        if steps.is_empty() {
            return Err(PolicyError::EmptyWindow);
        }
        let rows = steps[0].rows();
        let mut h: Vec<Var> = (0..3).map(|_| g.constant(Tensor::zeros(rows, self.hidden))).collect();
        for x in steps {
            if x.shape() != [rows, self.dim] {
                return Err(AutodiffError::ShapeMismatch { op: "gru_reconstruct", left: x.shape(), right: [rows, self.dim] }.into());
            }
            let mut input = g.constant(x.clone());
            for (l, cell) in self.layers.iter().enumerate() {
                h[l] = cell.forward(g, input, h[l])?;
                input = h[l];
            }
        }
        let correction = self.readout.forward(g, h[2])?;
        let last = g.constant(steps[steps.len() - 1].clone());
        Ok(g.add(last, correction)?)
    }

    /// Value-only convenience wrapper.
    pub fn reconstruct(&self, store: &ParamStore, steps: &[Tensor]) -> Result<Tensor, PolicyError> {
        let mut g = Graph::new(store);
        let out = self.forward(&mut g, steps)?;
        Ok(g.value(out).clone())
    }
}

/// The last `window` entries of `history`, left-padded with the oldest one.
pub fn padded_window(history: &[Tensor], window: usize) -> Result<Vec<Tensor>, PolicyError> {
    let first = history.first().ok_or(PolicyError::EmptyWindow)?;
    let tail = &history[history.len().saturating_sub(window)..];
    let pad = window.saturating_sub(tail.len());
    let mut out = vec![first.clone(); pad];
    out.extend(tail.iter().cloned());
    Ok(out)
}

/// Elementwise mean of the reconstruction and the raw representation.
pub fn fuse(recon: &Tensor, raw: &Tensor) -> Result<Tensor, PolicyError> {
    if recon.shape() != raw.shape() {
        return Err(AutodiffError::ShapeMismatch { op: "fuse", left: recon.shape(), right: raw.shape() }.into());
    }
    Ok(recon.zip_map(raw, |a, b| 0.5 * (a + b)))
}

/// Graph form of [`fuse`].
pub fn fuse_graph(g: &mut Graph, recon: Var, raw: Var) -> Res {
    let s = g.add(recon, raw)?;
    Ok(g.scale(s, 0.5))
}
