//! Named trainable parameters and the Adam optimizer.

use std::collections::BTreeMap;

use crate::tensor::{Tape, Tensor, TensorError};
use crate::Real;

/// Named collection of trainable tensors. Iteration order is deterministic
/// (sorted by name).
#[derive(Default)]
pub struct Params {
    items: BTreeMap<String, Tensor>,
}

impl Params {
    pub fn new() -> Self {
        Params::default()
    }

    /// Insert a parameter. The tensor is given a gradient sink if it does
    /// not have one; duplicate names panic.
    pub fn insert(&mut self, name: &str, tensor: Tensor) {
        assert!(
            !self.items.contains_key(name),
            "duplicate parameter name '{name}'"
        );
        self.items.insert(name.to_string(), tensor.with_grad());
    }

    pub fn get(&self, name: &str) -> &Tensor {
        self.items
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter '{name}'"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        self.items
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter '{name}'"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.items.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.items.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.items.keys().map(|k| k.as_str())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Total number of scalar entries across all parameters.
    pub fn num_scalars(&self) -> usize {
        self.items.values().map(|t| t.data().len()).sum()
    }

    /// A view of every parameter, watched on `tape` when one is given, or as
    /// plain constants for gradient-free evaluation.
    pub fn view(&self, tape: Option<&Tape>) -> BTreeMap<String, Tensor> {
        self.items
            .iter()
            .map(|(name, t)| {
                let v = match tape {
                    Some(tape) => t.watch(tape),
                    None => t.clone(),
                };
                (name.clone(), v)
            })
            .collect()
    }

    /// Snapshot of all gradients; unpopulated sinks come back as `None`.
    pub fn grads(&self) -> BTreeMap<String, Option<Vec<Real>>> {
        self.items
            .iter()
            .map(|(name, t)| (name.clone(), t.grad()))
            .collect()
    }

    pub fn clear_grads(&self) {
        for t in self.items.values() {
            t.clear_grad();
        }
    }

    /// Replace a parameter's values in place (shape-checked).
    pub fn set_values(&mut self, name: &str, values: &[Real]) {
        let t = self.get_mut(name);
        assert_eq!(t.data().len(), values.len(), "shape mismatch for '{name}'");
        t.values_mut().copy_from_slice(values);
    }
}

impl Clone for Params {
    /// Deep copy: values are duplicated and fresh gradient sinks attached.
    fn clone(&self) -> Self {
        let mut out = Params::new();
        for (name, t) in self.iter() {
            let copy = Tensor::from_vec(t.rows(), t.cols(), t.data().to_vec());
            out.insert(name, copy);
        }
        out
    }
}

struct Moments {
    m: Vec<Real>,
    v: Vec<Real>,
}

/// Adam with bias correction and decoupled weight decay. The decay is
/// applied directly to the weights (`w <- w - lr * wd * w`) before the
/// moment-based update, not folded into the gradient.
pub struct AdamState {
    pub lr: Real,
    pub weight_decay: Real,
    pub beta1: Real,
    pub beta2: Real,
    pub epsilon: Real,
    step: u64,
    moments: BTreeMap<String, Moments>,
}

impl AdamState {
    pub fn new(lr: Real, weight_decay: Real) -> Self {
        AdamState {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one optimizer step. Every parameter must have a populated
    /// gradient (a backward pass must have reached it); gradients are
    /// cleared after the update.
    pub fn step(&mut self, params: &mut Params) -> Result<(), TensorError> {
        for (name, t) in params.iter() {
            if t.grad().is_none() {
                return Err(TensorError::MissingGradient {
                    name: name.to_string(),
                });
            }
        }
        self.step += 1;
        let t = self.step;
        let bc1 = 1.0 - self.beta1.powi(t as i32);
        let bc2 = 1.0 - self.beta2.powi(t as i32);

        let names: Vec<String> = params.names().map(|s| s.to_string()).collect();
        for name in names {
            let tensor = params.get_mut(&name);
            let grad = tensor.take_grad().expect("gradient checked above");
            let size = grad.len();
            let mom = self.moments.entry(name.clone()).or_insert_with(|| Moments {
                m: vec![0.0; size],
                v: vec![0.0; size],
            });
            debug_assert_eq!(mom.m.len(), size, "moment shape mismatch for '{name}'");
            let values = tensor.values_mut();
            for i in 0..size {
                if self.weight_decay != 0.0 {
                    values[i] -= self.lr * self.weight_decay * values[i];
                }
                let g = grad[i];
                mom.m[i] = self.beta1 * mom.m[i] + (1.0 - self.beta1) * g;
                mom.v[i] = self.beta2 * mom.v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = mom.m[i] / bc1;
                let v_hat = mom.v[i] / bc2;
                values[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}
