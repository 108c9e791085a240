use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
struct Slot {
    value: Tensor,
    m: Tensor,
    v: Tensor,
}

/// Named parameters in insertion order, with Adam moment buffers.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    slots: IndexMap<String, Slot>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if !value.is_finite() {
            return Err(Error::InvalidValue(format!("parameter `{name}` is not finite")));
        }
        let [r, c] = value.shape();
        self.slots.insert(
            name,
            Slot {
                value,
                m: Tensor::zeros(r, c),
                v: Tensor::zeros(r, c),
            },
        );
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.slots.get_index_of(name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.slots.get(name).map(|s| &s.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.slots.get_mut(name).map(|s| &mut s.value)
    }

    pub(crate) fn value_at(&self, idx: usize) -> &Tensor {
        &self.slots[idx].value
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.slots.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.slots.iter().map(|(k, s)| (k.as_str(), &s.value))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.slots.iter_mut().map(|(k, s)| (k.as_str(), &mut s.value))
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.slots.values().map(|s| s.value.len()).sum()
    }

    /// Moment buffers `(m, v)` for a parameter.
    pub fn moments(&self, name: &str) -> Option<(&Tensor, &Tensor)> {
        self.slots.get(name).map(|s| (&s.m, &s.v))
    }
}

/// Gradients aligned with a [`ParamStore`]'s order.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    names: Vec<String>,
    grads: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Gradients {
            names: store.slots.keys().cloned().collect(),
            grads: store
                .slots
                .values()
                .map(|s| Tensor::zeros(s.value.rows(), s.value.cols()))
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.grads[i])
    }

    pub(crate) fn get_mut(&mut self, idx: usize) -> &mut Tensor {
        &mut self.grads[idx]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.grads)
    }

    pub fn add_assign(&mut self, other: &Gradients) -> Result<()> {
        if self.names != other.names {
            return Err(Error::dims(
                "Gradients::add_assign",
                self.names.len(),
                other.names.len(),
            ));
        }
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_assign(b);
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.grads {
            g.scale_assign(factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(Tensor::is_finite)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update over every parameter.
pub fn adam_step(store: &mut ParamStore, grads: &Gradients, cfg: &AdamConfig) -> Result<()> {
    if grads.names.len() != store.slots.len() {
        return Err(Error::ShapeMismatch {
            name: "<parameter count>".into(),
            left: [store.slots.len(), 0],
            right: [grads.names.len(), 0],
        });
    }
    for ((name, slot), (gname, g)) in store.slots.iter().zip(grads.iter()) {
        if name != gname || slot.value.shape() != g.shape() {
            return Err(Error::ShapeMismatch {
                name: name.clone(),
                left: slot.value.shape(),
                right: g.shape(),
            });
        }
        if !g.is_finite() {
            return Err(Error::InvalidValue(format!("non-finite gradient for `{name}`")));
        }
    }

    store.step += 1;
    let t = store.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (slot, g) in store.slots.values_mut().zip(&grads.grads) {
        let Slot { value, m, v } = slot;
        for (((p, mi), vi), &gi) in value
            .data_mut()
            .iter_mut()
            .zip(m.data_mut())
            .zip(v.data_mut())
            .zip(g.data())
        {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
