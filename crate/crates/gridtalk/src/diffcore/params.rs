//! Named parameter tensors with per-parameter Adam state.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig { lr, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, Copy)]
pub enum Init {
    /// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
    Xavier,
    Zeros,
    Const(f64),
}

/// Named parameters plus their optimizer state.
///
/// Parameter order is registration order and is part of a model's identity:
/// initialization draws from the rng in that order, and the checkpoint
/// format serializes in that order.
#[derive(Debug, Clone)]
pub struct ParamStore {
    pub(crate) cfg: AdamConfig,
    pub(crate) names: Vec<String>,
    lookup: HashMap<String, ParamId>,
    pub(crate) shapes: Vec<(usize, usize)>,
    pub(crate) values: Vec<Vec<f64>>,
    pub(crate) m: Vec<Vec<f64>>,
    pub(crate) v: Vec<Vec<f64>>,
    pub(crate) t: Vec<u64>,
    /// Count of optimizer steps applied to the store as a whole.
    pub step: u64,
}

impl ParamStore {
    pub fn new(cfg: AdamConfig) -> Self {
        ParamStore {
            cfg,
            names: Vec::new(),
            lookup: HashMap::new(),
            shapes: Vec::new(),
            values: Vec::new(),
            m: Vec::new(),
            v: Vec::new(),
            t: Vec::new(),
            step: 0,
        }
    }

    pub fn adam_config(&self) -> AdamConfig {
        self.cfg
    }

    pub fn add_param(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        init: Init,
        rng: &mut ChaCha8Rng,
    ) -> ParamId {
        assert!(!self.lookup.contains_key(name), "duplicate parameter `{name}`");
        let n = rows * cols;
        let data = match init {
            Init::Xavier => {
                let a = (6.0 / (rows + cols) as f64).sqrt();
                (0..n).map(|_| rng.random_range(-a..a)).collect()
            }
            Init::Zeros => vec![0.0; n],
            Init::Const(c) => vec![c; n],
        };
        let id = ParamId(self.names.len());
        self.names.push(name.to_string());
        self.lookup.insert(name.to_string(), id);
        self.shapes.push((rows, cols));
        self.values.push(data);
        self.m.push(vec![0.0; n]);
        self.v.push(vec![0.0; n]);
        self.t.push(0);
        id
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.lookup.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.names.len()).map(ParamId)
    }

    pub fn value(&self, id: ParamId) -> &[f64] {
        &self.values[id.0]
    }

    pub fn shape(&self, id: ParamId) -> (usize, usize) {
        self.shapes[id.0]
    }

    pub fn set_value(&mut self, id: ParamId, data: Vec<f64>) {
        assert_eq!(data.len(), self.values[id.0].len());
        self.values[id.0] = data;
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Adam update from accumulated gradients; parameters without an entry
    /// in `grads` are left untouched.
    pub fn apply_grads(&mut self, grads: &GradAccum) {
        let AdamConfig { lr, beta1, beta2, eps } = self.cfg;
        for (idx, slot) in grads.slots.iter().enumerate() {
            let Some(g) = slot else { continue };
            if idx >= self.values.len() {
                continue;
            }
            self.t[idx] += 1;
            let t = self.t[idx];
            let bc1 = 1.0 - beta1.powi(t as i32);
            let bc2 = 1.0 - beta2.powi(t as i32);
            let (m, v) = (&mut self.m[idx], &mut self.v[idx]);
            let p = &mut self.values[idx];
            for j in 0..p.len() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                p[j] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        self.step += 1;
    }

    /// FNV-1a over the raw value bytes; used to assert that an update path
    /// did not touch a store it must not touch.
    pub fn values_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for vals in &self.values {
            for &x in vals {
                for byte in x.to_bits().to_le_bytes() {
                    h ^= byte as u64;
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        h
    }
}

/// Gradient accumulator keyed by [`ParamId`].
#[derive(Debug, Default)]
pub struct GradAccum {
    slots: Vec<Option<Vec<f64>>>,
}

impl GradAccum {
    pub fn new() -> Self {
        GradAccum { slots: Vec::new() }
    }

    pub fn add(&mut self, id: ParamId, grad: &[f64], scale: f64) {
        if id.0 >= self.slots.len() {
            self.slots.resize(id.0 + 1, None);
        }
        let slot = self.slots[id.0].get_or_insert_with(|| vec![0.0; grad.len()]);
        debug_assert_eq!(slot.len(), grad.len());
        for (s, &g) in slot.iter_mut().zip(grad) {
            *s += g * scale;
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.slots.get(id.0).and_then(|s| s.as_deref())
    }

    pub fn is_empty(&self) -> bool {
        self.slots.iter().all(|s| s.is_none())
    }

    /// Max absolute gradient entry, for diagnostics.
    pub fn max_abs(&self) -> f64 {
        self.slots
            .iter()
            .flatten()
            .flat_map(|v| v.iter())
            .fold(0.0f64, |acc, &g| acc.max(g.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn zero_gradient_with_fresh_state_leaves_params_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new(AdamConfig::default());
        let id = store.add_param("w", 2, 2, Init::Xavier, &mut rng);
        let before = store.value(id).to_vec();
        let mut grads = GradAccum::new();
        grads.add(id, &[0.0; 4], 1.0);
        store.apply_grads(&grads);
        for (a, b) in before.iter().zip(store.value(id)) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn adam_single_step_matches_hand_computation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new(AdamConfig { lr: 0.1, beta1: 0.9, beta2: 0.999, eps: 1e-8 });
        let id = store.add_param("w", 1, 1, Init::Const(1.0), &mut rng);
        let mut grads = GradAccum::new();
        grads.add(id, &[0.5], 1.0);
        store.apply_grads(&grads);
        // m = 0.05, v = 0.00025; mhat = 0.5, vhat = 0.25; step = 0.1 * 0.5 / (0.5 + 1e-8)
        let expect = 1.0 - 0.1 * 0.5 / (0.25f64.sqrt() + 1e-8);
        assert!((store.value(id)[0] - expect).abs() < 1e-12);
        assert_eq!(store.step, 1);
    }

    #[test]
    fn grad_accum_scales_and_merges() {
        let mut acc = GradAccum::new();
        let id = ParamId(0);
        acc.add(id, &[1.0, 2.0], 0.5);
        acc.add(id, &[1.0, 0.0], 0.5);
        assert_eq!(acc.get(id).unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn values_hash_tracks_changes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new(AdamConfig::default());
        let id = store.add_param("w", 2, 1, Init::Xavier, &mut rng);
        let h0 = store.values_hash();
        let mut grads = GradAccum::new();
        grads.add(id, &[1.0, -1.0], 1.0);
        store.apply_grads(&grads);
        assert_ne!(h0, store.values_hash());
    }
}
