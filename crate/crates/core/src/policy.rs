//! Tokenized stochastic policy.
//!
//! Each of the `num_slots` positions of an action chunk has its own linear
//! logit head over the observation features; slots are decoded in parallel
//! and independently, so the joint log-probability is a sum of per-slot
//! log-softmax terms and its gradient is available in closed form.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::envsim::{Observation, World};
use crate::seed;
use crate::{Error, Result};

/// Length of the feature vector produced by [`featurize`].
pub fn feature_dim(world: &World) -> usize {
    let g = world.config().grid_size as usize;
    let k = world.num_stages();
    g * g + (k + 1) + k + 1 + g * g * (k + 1)
}

/// One-hot agent cell, one-hot stage index, item flags, gripper bit, then a
/// one-hot of the (stage, cell) pair. Without the pair block a cell's action
/// preferences are shared across stages, which lets "toggle here" learned in
/// one stage trap the greedy policy on the same cell in the next.
pub fn featurize(world: &World, obs: &Observation) -> Vec<f64> {
    let g = world.config().grid_size as usize;
    let k = world.num_stages();
    let mut phi = vec![0.0; feature_dim(world)];
    phi[obs.agent_pos.row as usize * g + obs.agent_pos.col as usize] = 1.0;
    let stage_base = g * g;
    phi[stage_base + obs.stage_index.min(k)] = 1.0;
    let flag_base = stage_base + k + 1;
    for (i, &flag) in obs.item_flags.iter().enumerate() {
        if flag {
            phi[flag_base + i] = 1.0;
        }
    }
    if obs.gripper {
        phi[flag_base + k] = 1.0;
    }
    let cell = obs.agent_pos.row as usize * g + obs.agent_pos.col as usize;
    phi[flag_base + k + 1 + obs.stage_index.min(k) * g * g + cell] = 1.0;
    phi
}

/// A sampled chunk and its joint log-probability under the distribution it
/// was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionChunk {
    pub tokens: Vec<usize>,
    pub log_prob: f64,
}

/// Logit weights laid out as `[slot][token][feature]`. Also used as the
/// gradient type.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    num_slots: usize,
    vocab_size: usize,
    feature_dim: usize,
    weights: Vec<f64>,
}

const MAGIC: &[u8; 4] = b"TTTP";
const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;

impl PolicyParams {
    pub fn zeros(num_slots: usize, vocab_size: usize, feature_dim: usize) -> Result<Self> {
        if vocab_size < 2 {
            return Err(Error::Argument("vocab_size must be >= 2".into()));
        }
        if num_slots == 0 || feature_dim == 0 {
            return Err(Error::Argument(
                "num_slots and feature_dim must be positive".into(),
            ));
        }
        Ok(Self {
            num_slots,
            vocab_size,
            feature_dim,
            weights: vec![0.0; num_slots * vocab_size * feature_dim],
        })
    }

    pub fn from_weights(
        num_slots: usize,
        vocab_size: usize,
        feature_dim: usize,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let mut p = Self::zeros(num_slots, vocab_size, feature_dim)?;
        if weights.len() != p.weights.len() {
            return Err(Error::Argument(format!(
                "expected {} weights, got {}",
                p.weights.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Numerical("policy weights must be finite".into()));
        }
        p.weights = weights;
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weights: vec![0.0; self.weights.len()],
            ..*self
        }
    }

    pub fn num_slots(&self) -> usize {
        self.num_slots
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    fn same_shape(&self, other: &Self) -> bool {
        self.num_slots == other.num_slots
            && self.vocab_size == other.vocab_size
            && self.feature_dim == other.feature_dim
    }

    fn row(&self, slot: usize, token: usize) -> &[f64] {
        let start = (slot * self.vocab_size + token) * self.feature_dim;
        &self.weights[start..start + self.feature_dim]
    }

    fn check_features(&self, phi: &[f64]) -> Result<()> {
        if phi.len() != self.feature_dim {
            return Err(Error::Argument(format!(
                "feature vector has length {}, policy expects {}",
                phi.len(),
                self.feature_dim
            )));
        }
        Ok(())
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        if tokens.len() != self.num_slots {
            return Err(Error::Argument(format!(
                "chunk has {} tokens, policy has {} slots",
                tokens.len(),
                self.num_slots
            )));
        }
        if let Some(t) = tokens.iter().find(|&&t| t >= self.vocab_size) {
            return Err(Error::Argument(format!(
                "token {} out of range for vocab_size {}",
                t, self.vocab_size
            )));
        }
        Ok(())
    }

    /// Raw logits `W_j · phi` for every slot, flattened `[slot][token]`.
    pub fn logits(&self, phi: &[f64]) -> Result<Vec<f64>> {
        self.check_features(phi)?;
        let nz: Vec<(usize, f64)> = phi
            .iter()
            .enumerate()
            .filter(|(_, &x)| x != 0.0)
            .map(|(i, &x)| (i, x))
            .collect();
        let mut out = Vec::with_capacity(self.num_slots * self.vocab_size);
        for slot in 0..self.num_slots {
            for token in 0..self.vocab_size {
                let row = self.row(slot, token);
                out.push(nz.iter().map(|&(i, x)| row[i] * x).sum::<f64>());
            }
        }
        if out.iter().any(|z| !z.is_finite()) {
            return Err(Error::Numerical("non-finite logits".into()));
        }
        Ok(out)
    }

    /// Per-slot log-probabilities of `softmax(z / temperature)`, flattened
    /// `[slot][token]`.
    pub fn log_probs(&self, phi: &[f64], temperature: f64) -> Result<Vec<f64>> {
        check_temperature(temperature)?;
        let mut z = self.logits(phi)?;
        for slot in z.chunks_mut(self.vocab_size) {
            log_softmax_in_place(slot, temperature);
        }
        Ok(z)
    }

    pub fn sample_chunk(
        &self,
        phi: &[f64],
        temperature: f64,
        rng_seed: u64,
    ) -> Result<ActionChunk> {
        let lp = self.log_probs(phi, temperature)?;
        let mut rng = seed::rng(rng_seed);
        let mut tokens = Vec::with_capacity(self.num_slots);
        let mut log_prob = 0.0;
        for slot in lp.chunks(self.vocab_size) {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut chosen = self.vocab_size - 1;
            for (a, l) in slot.iter().enumerate() {
                acc += libm::exp(*l);
                if u < acc {
                    chosen = a;
                    break;
                }
            }
            tokens.push(chosen);
            log_prob += slot[chosen];
        }
        Ok(ActionChunk { tokens, log_prob })
    }

    /// Argmax decoding; ties go to the lowest token index.
    pub fn greedy_chunk(&self, phi: &[f64]) -> Result<Vec<usize>> {
        let z = self.logits(phi)?;
        Ok(z.chunks(self.vocab_size)
            .map(|slot| {
                let mut best = 0;
                for (a, v) in slot.iter().enumerate() {
                    if *v > slot[best] {
                        best = a;
                    }
                }
                best
            })
            .collect())
    }

    pub fn log_prob(&self, phi: &[f64], tokens: &[usize], temperature: f64) -> Result<f64> {
        self.check_tokens(tokens)?;
        let lp = self.log_probs(phi, temperature)?;
        let mut total = 0.0;
        for (slot, &t) in lp.chunks(self.vocab_size).zip(tokens) {
            total += slot[t];
        }
        Ok(total)
    }

    /// Exact gradient of [`PolicyParams::log_prob`] with respect to the
    /// weights.
    pub fn grad_log_prob(&self, phi: &[f64], tokens: &[usize], temperature: f64) -> Result<Self> {
        let mut g = self.zeros_like();
        self.accumulate_grad_log_prob(phi, tokens, temperature, 1.0, &mut g)?;
        Ok(g)
    }

    /// `out += scale * grad log_prob`. Only the nonzero features are
    /// touched. Returns the log-probability at the current weights.
    pub fn accumulate_grad_log_prob(
        &self,
        phi: &[f64],
        tokens: &[usize],
        temperature: f64,
        scale: f64,
        out: &mut Self,
    ) -> Result<f64> {
        if !self.same_shape(out) {
            return Err(Error::Argument("gradient buffer shape mismatch".into()));
        }
        self.check_tokens(tokens)?;
        let lp = self.log_probs(phi, temperature)?;
        let mut total = 0.0;
        for (slot, (slot_lp, &t)) in lp.chunks(self.vocab_size).zip(tokens).enumerate() {
            total += slot_lp[t];
            for (a, l) in slot_lp.iter().enumerate() {
                let indicator = if a == t { 1.0 } else { 0.0 };
                let coef = scale * (indicator - libm::exp(*l)) / temperature;
                let start = (slot * self.vocab_size + a) * self.feature_dim;
                let row = &mut out.weights[start..start + self.feature_dim];
                for (w, &x) in row.iter_mut().zip(phi) {
                    if x != 0.0 {
                        *w += coef * x;
                    }
                }
            }
        }
        Ok(total)
    }

    /// `W + step_size * gradient`, leaving `self` untouched.
    pub fn apply_update(&self, gradient: &Self, step_size: f64) -> Result<Self> {
        let mut next = self.clone();
        next.add_scaled(gradient, step_size)?;
        Ok(next)
    }

    pub fn add_scaled(&mut self, other: &Self, scale: f64) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::Argument(format!(
                "shape mismatch: ({}, {}, {}) vs ({}, {}, {})",
                self.num_slots,
                self.vocab_size,
                self.feature_dim,
                other.num_slots,
                other.vocab_size,
                other.feature_dim
            )));
        }
        for (w, g) in self.weights.iter_mut().zip(&other.weights) {
            *w += scale * g;
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Numerical(
                "update produced non-finite weights".into(),
            ));
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.weights {
            *w *= factor;
        }
    }

    pub fn l2_norm(&self) -> f64 {
        libm::sqrt(self.weights.iter().map(|w| w * w).sum())
    }

    /// Little-endian binary encoding: a 16-byte header (`TTTP`, u16
    /// version, u16 num_slots, u32 vocab_size, u32 feature_dim) followed by
    /// the weights as f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.weights.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.num_slots as u16).to_le_bytes());
        out.extend_from_slice(&(self.vocab_size as u32).to_le_bytes());
        out.extend_from_slice(&(self.feature_dim as u32).to_le_bytes());
        for w in &self.weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(Error::Argument("not a TTTP params file".into()));
        }
        let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
        let u32_at =
            |i: usize| u32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]);
        let version = u16_at(4);
        if version != FORMAT_VERSION {
            return Err(Error::Argument(format!(
                "unsupported params format version {}",
                version
            )));
        }
        let num_slots = usize::from(u16_at(6));
        let vocab_size = u32_at(8) as usize;
        let feature_dim = u32_at(12) as usize;
        let body = &bytes[HEADER_LEN..];
        let expected = num_slots * vocab_size * feature_dim;
        if body.len() != 8 * expected {
            return Err(Error::Argument(format!(
                "params body has {} bytes, header implies {}",
                body.len(),
                8 * expected
            )));
        }
        let weights = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Self::from_weights(num_slots, vocab_size, feature_dim, weights)
    }
}

fn check_temperature(temperature: f64) -> Result<()> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::Argument(format!(
            "temperature must be positive, got {}",
            temperature
        )));
    }
    Ok(())
}

fn log_softmax_in_place(z: &mut [f64], temperature: f64) {
    let max = z.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v)) / temperature;
    let sum: f64 = z.iter().map(|&v| libm::exp(v / temperature - max)).sum();
    let lse = max + libm::log(sum);
    for v in z.iter_mut() {
        *v = *v / temperature - lse;
    }
}
