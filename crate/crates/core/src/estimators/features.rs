use crate::problem::{ActionId, ContextVector};

/// Known transfer function `φ(x, a)` of a parametric model.
pub trait FeatureMap: Send + Sync {
    fn dim(&self) -> usize;

    /// Writes `φ(x, a)` into `out`, which has length `dim()`.
    fn write(&self, x: &ContextVector, a: ActionId, out: &mut [f64]);

    fn features(&self, x: &ContextVector, a: ActionId) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.write(x, a, &mut out);
        out
    }
}

/// One-hot indicator of the pair `(support index, action)`. Linear models on
/// these features are tabular estimates for finite context sets.
#[derive(Debug, Clone)]
pub struct TabularFeatures {
    num_contexts: usize,
    num_actions: usize,
}

impl TabularFeatures {
    pub fn new(num_contexts: usize, num_actions: usize) -> Self {
        Self {
            num_contexts,
            num_actions,
        }
    }
}

impl FeatureMap for TabularFeatures {
    fn dim(&self) -> usize {
        self.num_contexts * self.num_actions
    }

    fn write(&self, x: &ContextVector, a: ActionId, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let i = x
            .support_index
            .expect("tabular features need contexts from a finite support");
        out[i * self.num_actions + a.0] = 1.0;
    }
}

/// Block features: the context coordinates plus an intercept, copied into the
/// block of the chosen action.
#[derive(Debug, Clone)]
pub struct PerActionLinearFeatures {
    context_dim: usize,
    num_actions: usize,
}

impl PerActionLinearFeatures {
    pub fn new(context_dim: usize, num_actions: usize) -> Self {
        Self {
            context_dim,
            num_actions,
        }
    }
}

impl FeatureMap for PerActionLinearFeatures {
    fn dim(&self) -> usize {
        (self.context_dim + 1) * self.num_actions
    }

    fn write(&self, x: &ContextVector, a: ActionId, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let block = self.context_dim + 1;
        let base = a.0 * block;
        out[base] = 1.0;
        out[base + 1..base + block].copy_from_slice(&x.coords[..self.context_dim]);
    }
}
