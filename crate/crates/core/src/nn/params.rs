use super::{NnError, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

/// Named trainable tensors with matching gradient buffers.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamVector {
    segments: Vec<Segment>,
}

impl ParamVector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a segment and returns its index.
    pub fn push(&mut self, name: impl Into<String>, value: Tensor) -> usize {
        let grad = Tensor::zeros(value.shape());
        self.segments.push(Segment {
            name: name.into(),
            value,
            grad,
        });
        self.segments.len() - 1
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segments_mut(&mut self) -> &mut [Segment] {
        &mut self.segments
    }

    pub fn value(&self, i: usize) -> &[f64] {
        self.segments[i].value.data()
    }

    pub fn value_mut(&mut self, i: usize) -> &mut [f64] {
        self.segments[i].value.data_mut()
    }

    pub fn grad(&self, i: usize) -> &[f64] {
        self.segments[i].grad.data()
    }

    pub fn grad_mut(&mut self, i: usize) -> &mut [f64] {
        self.segments[i].grad.data_mut()
    }

    /// Total number of scalars.
    pub fn len(&self) -> usize {
        self.segments.iter().map(|s| s.value.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn zero_grad(&mut self) {
        for s in &mut self.segments {
            s.grad.fill(0.0);
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.segments
            .iter()
            .flat_map(|s| s.value.data().iter().copied())
            .collect()
    }

    pub fn flatten_grad(&self) -> Vec<f64> {
        self.segments
            .iter()
            .flat_map(|s| s.grad.data().iter().copied())
            .collect()
    }

    pub fn unflatten(&mut self, flat: &[f64]) -> Result<(), NnError> {
        super::check_len(self.len(), flat.len())?;
        let mut off = 0;
        for s in &mut self.segments {
            let n = s.value.len();
            s.value.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn set_grad(&mut self, flat: &[f64]) -> Result<(), NnError> {
        super::check_len(self.len(), flat.len())?;
        let mut off = 0;
        for s in &mut self.segments {
            let n = s.grad.len();
            s.grad.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Multiplies every gradient by `k`.
    pub fn scale_grad(&mut self, k: f64) {
        for s in &mut self.segments {
            s.grad.data_mut().iter_mut().for_each(|g| *g *= k);
        }
    }

    /// Copies values from `other`, which must have the same layout.
    pub fn copy_values_from(&mut self, other: &ParamVector) -> Result<(), NnError> {
        if self.segments.len() != other.segments.len() {
            return Err(NnError::ShapeMismatch {
                expected: vec![self.segments.len()],
                got: vec![other.segments.len()],
            });
        }
        for (a, b) in self.segments.iter_mut().zip(&other.segments) {
            if a.value.shape() != b.value.shape() {
                return Err(NnError::ShapeMismatch {
                    expected: a.value.shape().to_vec(),
                    got: b.value.shape().to_vec(),
                });
            }
            a.value.data_mut().copy_from_slice(b.value.data());
        }
        Ok(())
    }

    pub fn grads_finite(&self) -> bool {
        self.segments.iter().all(|s| s.grad.is_finite())
    }
}
