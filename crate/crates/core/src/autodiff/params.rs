use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use super::AutodiffError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamStore {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    /// Uniform(−1/√fan_in, 1/√fan_in) initialization.
    pub fn add_uniform<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        fan_in: usize,
        rng: &mut R,
    ) -> ParamId {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
        self.add(name, Tensor::from_vec(rows, cols, data).expect("shape"))
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(Tensor::is_finite)
    }

    pub fn flat(&self) -> Vec<f64> {
        self.values.iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn named_tensors(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(self.values.iter())
    }
}

/// Gradient buffers aligned with a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Grads(Vec<Tensor>);

impl Grads {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self(store.values.iter().map(|t| Tensor::zeros(t.rows(), t.cols())).collect())
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.0[id.0]
    }

    pub(crate) fn add(&mut self, id: ParamId, g: &Tensor) {
        self.0[id.0].add_assign(g);
    }

    pub fn accumulate(&mut self, other: &Grads) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in &mut self.0 {
            t.scale_assign(s);
        }
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(Tensor::sq_norm).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.0.iter().all(Tensor::is_finite)
    }

    /// Rescales so the global norm is at most `max_norm`; returns the norm before clipping.
    pub fn clip_norm(&mut self, max_norm: f64) -> f64 {
        let n = self.norm();
        if n > max_norm && n > 0.0 {
            self.scale(max_norm / n);
        }
        n
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros = || store.values.iter().map(|t| Tensor::zeros(t.rows(), t.cols())).collect();
        Self { config, m: zeros(), v: zeros(), step: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn apply(&mut self, store: &mut ParamStore, grads: &Grads, lr: f64) {
        self.step += 1;
        let AdamConfig { beta1, beta2, eps, .. } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in store.values.iter_mut().zip(&grads.0).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let (pd, gd) = (p.data_mut(), g.data());
            let (md, vd) = (m.data_mut(), v.data_mut());
            for i in 0..pd.len() {
                md[i] = beta1 * md[i] + (1.0 - beta1) * gd[i];
                vd[i] = beta2 * vd[i] + (1.0 - beta2) * gd[i] * gd[i];
                let mh = md[i] / bc1;
                let vh = vd[i] / bc2;
                pd[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
    pub offset: usize,
}

/// JSON half of a checkpoint: tensor directory plus free-form metadata.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub schema_version: u32,
    pub dtype: String,
    pub tensors: Vec<TensorEntry>,
    pub metadata: serde_json::Value,
}

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

/// Named tensors written as `<stem>.bin` (little-endian f64) and `<stem>.json`.
#[derive(Clone, Debug, Default)]
pub struct Checkpoint {
    pub tensors: BTreeMap<String, Tensor>,
    pub metadata: serde_json::Value,
}

impl Checkpoint {
    pub fn insert_store(&mut self, prefix: &str, store: &ParamStore) {
        for (name, t) in store.named_tensors() {
            self.tensors.insert(format!("{prefix}{name}"), t.clone());
        }
    }

    pub fn insert_adam(&mut self, prefix: &str, store: &ParamStore, adam: &Adam) {
        for (i, name) in store.names.iter().enumerate() {
            self.tensors.insert(format!("{prefix}m/{name}"), adam.m[i].clone());
            self.tensors.insert(format!("{prefix}v/{name}"), adam.v[i].clone());
        }
        self.tensors.insert(format!("{prefix}step"), Tensor::scalar(adam.step as f64));
    }

    /// Overwrites every parameter of `store` from `prefix`-named tensors.
    pub fn load_store(&self, prefix: &str, store: &mut ParamStore) -> Result<(), AutodiffError> {
        for i in 0..store.values.len() {
            let key = format!("{prefix}{}", store.names[i]);
            let t = self.tensors.get(&key).ok_or_else(|| AutodiffError::Checkpoint(format!("missing tensor {key}")))?;
            if t.shape() != store.values[i].shape() {
                return Err(AutodiffError::Checkpoint(format!(
                    "tensor {key} has shape {:?}, expected {:?}",
                    t.shape(),
                    store.values[i].shape()
                )));
            }
            store.values[i] = t.clone();
        }
        Ok(())
    }

    pub fn load_adam(&self, prefix: &str, store: &ParamStore, adam: &mut Adam) -> Result<(), AutodiffError> {
        let get = |k: String| {
            self.tensors.get(&k).cloned().ok_or_else(|| AutodiffError::Checkpoint(format!("missing tensor {k}")))
        };
        for (i, name) in store.names.iter().enumerate() {
            adam.m[i] = get(format!("{prefix}m/{name}"))?;
            adam.v[i] = get(format!("{prefix}v/{name}"))?;
        }
        adam.step = get(format!("{prefix}step"))?.item() as u64;
        Ok(())
    }

    pub fn save(&self, dir: &Path, stem: &str) -> Result<(), AutodiffError> {
        let mut bytes = Vec::new();
        let mut entries = Vec::new();
        let mut offset = 0;
        for (name, t) in &self.tensors {
            entries.push(TensorEntry { name: name.clone(), shape: t.shape(), offset });
            for v in t.data() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            offset += t.len();
        }
        let manifest = CheckpointManifest {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            dtype: "f64-le".into(),
            tensors: entries,
            metadata: self.metadata.clone(),
        };
        fs::create_dir_all(dir)?;
        fs::write(dir.join(format!("{stem}.bin")), bytes)?;
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| AutodiffError::Checkpoint(e.to_string()))?;
        fs::write(dir.join(format!("{stem}.json")), json)?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self, AutodiffError> {
        let json = fs::read_to_string(dir.join(format!("{stem}.json")))?;
        let manifest: CheckpointManifest =
            serde_json::from_str(&json).map_err(|e| AutodiffError::Checkpoint(e.to_string()))?;
        if manifest.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(AutodiffError::Checkpoint(format!(
                "checkpoint schema_version {} unsupported (expected {CHECKPOINT_SCHEMA_VERSION})",
                manifest.schema_version
            )));
        }
        let bytes = fs::read(dir.join(format!("{stem}.bin")))?;
        let mut tensors = BTreeMap::new();
        for e in manifest.tensors {
            let n = e.shape[0] * e.shape[1];
            let start = e.offset * 8;
            let end = start + n * 8;
            if end > bytes.len() {
                return Err(AutodiffError::Checkpoint(format!("tensor {} runs past end of data", e.name)));
            }
            let data = bytes[start..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.insert(e.name, Tensor::from_vec(e.shape[0], e.shape[1], data)?);
        }
        Ok(Self { tensors, metadata: manifest.metadata })
    }
}
