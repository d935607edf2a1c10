/// Anything that owns trainable `f64` tensors.
///
/// Tensor order is fixed per type; optimizers, gradient checks, and
/// gradient buffers all rely on `tensors` and `tensors_mut` agreeing.
pub trait ParamTensors {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    /// Overwrites every parameter from a flat vector laid out as in [`flatten`](Self::flatten).
    fn assign(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        }
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }

    fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

impl<T: ParamTensors> ParamTensors for Option<T> {
    fn tensors(&self) -> Vec<&[f64]> {
        self.as_ref().map(T::tensors).unwrap_or_default()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.as_mut().map(T::tensors_mut).unwrap_or_default()
    }
}
