use crate::error::{Error, Result};

/// Named learnable array with a gradient accumulator of the same length.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    name: String,
    values: Vec<f64>,
    grad: Vec<f64>,
}

impl Parameter {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        let grad = vec![0.0; values.len()];
        Parameter { name: name.into(), values, grad }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access to the values; the length cannot change.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn set_values(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.values.len() {
            return Err(Error::ShapeMismatch(format!(
                "parameter {} has {} values, got {}",
                self.name,
                self.values.len(),
                values.len()
            )));
        }
        self.values.copy_from_slice(values);
        Ok(())
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    pub(crate) fn accumulate_grad(&mut self, g: &[f64]) {
        debug_assert_eq!(g.len(), self.grad.len());
        self.grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }

    /// Splits into values and gradient for optimizer updates.
    pub(crate) fn values_and_grad(&mut self) -> (&mut [f64], &[f64]) {
        (&mut self.values, &self.grad)
    }
}
