//! 4-D activation/parameter grid with a paired gradient buffer.

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape4 {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape4 {
    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape4 { n, c, h, w }
    }

    pub fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }
}

#[derive(Debug, Clone)]
pub struct Tensor<S> {
    shape: Shape4,
    data: Vec<S>,
    grad: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn zeros(shape: Shape4) -> Self {
        Tensor {
            shape,
            data: vec![S::zero(); shape.len()],
            grad: vec![S::zero(); shape.len()],
        }
    }

    pub fn from_data(shape: Shape4, data: Vec<S>) -> Self {
        assert_eq!(data.len(), shape.len(), "tensor data length mismatch");
        let grad = vec![S::zero(); data.len()];
        Tensor { shape, data, grad }
    }

    pub fn shape(&self) -> Shape4 {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn grad(&self) -> &[S] {
        &self.grad
    }

    pub fn grad_mut(&mut self) -> &mut [S] {
        &mut self.grad
    }

    /// Simultaneous read access to values and write access to the gradient.
    pub fn data_and_grad_mut(&mut self) -> (&[S], &mut [S]) {
        (&self.data, &mut self.grad)
    }

    /// Simultaneous read access to the gradient and write access to values.
    pub fn grad_and_data_mut(&mut self) -> (&[S], &mut [S]) {
        (&self.grad, &mut self.data)
    }

    pub fn zero_grad(&mut self) {
        for g in self.grad.iter_mut() {
            *g = S::zero();
        }
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.shape.c + c) * self.shape.h + y) * self.shape.w + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> S {
        self.data[self.index(n, c, y, x)]
    }

    /// Debug-mode invariant: no NaN/Inf in values or gradients.
    pub fn debug_assert_finite(&self) {
        debug_assert!(
            self.data.iter().all(|v| v.is_finite()),
            "non-finite tensor value"
        );
        debug_assert!(
            self.grad.iter().all(|v| v.is_finite()),
            "non-finite tensor gradient"
        );
    }
}
