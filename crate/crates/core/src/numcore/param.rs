use super::{Matrix, Scalar};

/// A trainable tensor and its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter<T> {
    pub value: Matrix<T>,
    pub grad: Matrix<T>,
}

impl<T: Scalar> Parameter<T> {
    pub fn new(value: Matrix<T>) -> Self {
        let grad = Matrix::zeros(value.rows(), value.cols());
        Parameter { value, grad }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(Matrix::zeros(rows, cols))
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self::new(Matrix::filled(rows, cols, T::one()))
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.shape()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }
}

/// Anything that owns named parameters in a fixed order.
///
/// The visiting order is the checkpoint manifest order and must not depend
/// on parameter values.
pub trait ParameterSet<T: Scalar> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Parameter<T>));

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Parameter<T>));

    fn zero_grads(&mut self) {
        self.visit_mut(&mut |_, p| p.zero_grad());
    }

    fn parameter_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, p| n += p.value.len());
        n
    }

    /// Names and shapes in visiting order.
    fn manifest(&self) -> Vec<(String, (usize, usize))> {
        let mut out = Vec::new();
        self.visit(&mut |name, p| out.push((name.to_string(), p.shape())));
        out
    }
}
