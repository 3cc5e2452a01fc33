//! Named parameter storage with gradient and Adam moment buffers.

use super::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct ParamId(pub(crate) usize);

pub struct ParamEntry<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    /// Non-learnable entries (batchnorm running stats) are checkpointed but
    /// never touched by the optimizer or the tape.
    pub learnable: bool,
    m: Tensor<T>,
    v: Tensor<T>,
    step: u64,
}

/// Arena of parameters owned by one model instance.
pub struct ParamSet<T> {
    entries: Vec<ParamEntry<T>>,
}

impl<T: Scalar> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet { entries: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>, learnable: bool) -> ParamId {
        let shape = value.shape().to_vec();
        self.entries.push(ParamEntry {
            name: name.into(),
            grad: Tensor::zeros(&shape),
            m: Tensor::zeros(&shape),
            v: Tensor::zeros(&shape),
            step: 0,
            value,
            learnable,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].value
    }

    pub fn set_value(&mut self, id: ParamId, value: Tensor<T>) {
        assert!(
            value.is_same_shape(&self.entries[id.0].value),
            "set_value shape mismatch for {}",
            self.entries[id.0].name
        );
        self.entries[id.0].value = value;
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].grad
    }

    pub fn accumulate_grad(&mut self, id: ParamId, delta: &Tensor<T>) {
        self.entries[id.0].grad.add_assign(delta);
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad.fill(T::zero());
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = &ParamEntry<T>> {
        self.entries.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn learnable_ids(&self) -> Vec<ParamId> {
        (0..self.entries.len())
            .filter(|&i| self.entries[i].learnable)
            .map(ParamId)
            .collect()
    }

    /// Total number of learnable scalar parameters.
    pub fn learnable_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.learnable)
            .map(|e| e.value.numel())
            .sum()
    }

    pub fn grads_all_finite(&self) -> bool {
        self.entries.iter().all(|e| e.grad.all_finite())
    }
}

/// Adam with bias correction. Per-parameter step counters keep the
/// correction exact when parameter subsets update at different cadences.
#[derive(Clone, Copy, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Adam {
    pub fn with_lr(lr: f64) -> Self {
        Adam {
            lr,
            ..Adam::default()
        }
    }

    /// Apply one update to the given parameters, consuming their gradients.
    pub fn step<T: Scalar>(&self, params: &mut ParamSet<T>, ids: &[ParamId]) {
        let b1 = T::from_f64(self.beta1);
        let b2 = T::from_f64(self.beta2);
        let eps = T::from_f64(self.eps);
        for &id in ids {
            let e = &mut params.entries[id.0];
            if !e.learnable {
                continue;
            }
            e.step += 1;
            let bc1 = T::from_f64(1.0 - self.beta1.powi(e.step as i32));
            let bc2 = T::from_f64(1.0 - self.beta2.powi(e.step as i32));
            let lr = T::from_f64(self.lr);
            let g = e.grad.data().to_vec();
            let m = e.m.data_mut();
            let v = e.v.data_mut();
            for (i, val) in e.value.data_mut().iter_mut().enumerate() {
                let gi = g[i];
                m[i] = b1 * m[i] + (T::one() - b1) * gi;
                v[i] = b2 * v[i] + (T::one() - b2) * gi * gi;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                *val = *val - lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }

    /// Update every learnable parameter.
    pub fn step_all<T: Scalar>(&self, params: &mut ParamSet<T>) {
        let ids = params.learnable_ids();
        self.step(params, &ids);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Hand Adam step on f(w) = w^2 at w=1: g=2, m_hat=g, v_hat=g^2,
    // update = lr * g / (|g| + eps) ~= lr, so w -> 1 - 0.001.
    #[test]
    fn adam_single_step_matches_hand_trace() {
        let mut ps: ParamSet<f64> = ParamSet::new();
        let w = ps.add("w", Tensor::scalar(1.0), true);
        ps.accumulate_grad(w, &Tensor::scalar(2.0));
        Adam::with_lr(1e-3).step_all(&mut ps);
        let got = ps.value(w).item();
        assert!((got - 0.999).abs() < 1e-9, "got {got}");
    }

    #[test]
    fn zero_grads_leave_fresh_params_unchanged() {
        let mut ps: ParamSet<f32> = ParamSet::new();
        let w = ps.add("w", Tensor::full(&[3], 2.5), true);
        Adam::default().step_all(&mut ps);
        assert!(ps.value(w).data().iter().all(|&x| x == 2.5));
    }

    #[test]
    fn identical_grads_update_identically() {
        let mut ps: ParamSet<f64> = ParamSet::new();
        let a = ps.add("a", Tensor::scalar(0.7), true);
        let b = ps.add("b", Tensor::scalar(0.7), true);
        for _ in 0..3 {
            ps.accumulate_grad(a, &Tensor::scalar(0.3));
            ps.accumulate_grad(b, &Tensor::scalar(0.3));
            Adam::default().step_all(&mut ps);
            ps.zero_grads();
        }
        assert_eq!(ps.value(a).item(), ps.value(b).item());
    }

    #[test]
    fn non_learnable_entries_are_skipped() {
        let mut ps: ParamSet<f64> = ParamSet::new();
        let stat = ps.add("running_mean", Tensor::scalar(4.0), false);
        ps.accumulate_grad(stat, &Tensor::scalar(1.0));
        Adam::default().step_all(&mut ps);
        assert_eq!(ps.value(stat).item(), 4.0);
    }
}
