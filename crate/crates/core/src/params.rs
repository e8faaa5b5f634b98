//! Named tensor storage shared by model parameters, gradients and optimizer state.

use indexmap::IndexMap;
use ndarray::{ArrayD, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Ix1, Ix2};

use crate::real::Real;

/// Ordered map of named tensors. Iteration order is insertion order, which makes
/// serialization, optimizer updates and finite-difference sweeps reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    tensors: IndexMap<String, ArrayD<T>>,
}

impl<T> Default for ParamSet<T> {
    fn default() -> Self {
        Self {
            tensors: IndexMap::new(),
        }
    }
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: ArrayD<T>) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Option<&ArrayD<T>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ArrayD<T>> {
        self.tensors.get_mut(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<ArrayD<T>> {
        self.tensors.shift_remove(name)
    }

    fn expect(&self, name: &str) -> &ArrayD<T> {
        self.tensors
            .get(name)
            .unwrap_or_else(|| panic!("missing tensor `{name}`"))
    }

    fn expect_mut(&mut self, name: &str) -> &mut ArrayD<T> {
        self.tensors
            .get_mut(name)
            .unwrap_or_else(|| panic!("missing tensor `{name}`"))
    }

    pub fn mat(&self, name: &str) -> ArrayView2<'_, T> {
        self.expect(name)
            .view()
            .into_dimensionality::<Ix2>()
            .unwrap_or_else(|_| panic!("tensor `{name}` is not a matrix"))
    }

    pub fn vector(&self, name: &str) -> ArrayView1<'_, T> {
        self.expect(name)
            .view()
            .into_dimensionality::<Ix1>()
            .unwrap_or_else(|_| panic!("tensor `{name}` is not a vector"))
    }

    pub fn mat_mut(&mut self, name: &str) -> ArrayViewMut2<'_, T> {
        self.expect_mut(name)
            .view_mut()
            .into_dimensionality::<Ix2>()
            .unwrap_or_else(|_| panic!("tensor `{name}` is not a matrix"))
    }

    pub fn vector_mut(&mut self, name: &str) -> ArrayViewMut1<'_, T> {
        self.expect_mut(name)
            .view_mut()
            .into_dimensionality::<Ix1>()
            .unwrap_or_else(|_| panic!("tensor `{name}` is not a vector"))
    }

    /// Mutable matrix and vector views of two distinct tensors, typically a
    /// weight and its bias.
    pub fn weight_bias_mut(
        &mut self,
        weight: &str,
        bias: &str,
    ) -> (ArrayViewMut2<'_, T>, ArrayViewMut1<'_, T>) {
        let [w, b] = self.tensors.get_disjoint_mut([weight, bias]);
        let w = w
            .unwrap_or_else(|| panic!("missing tensor `{weight}`"))
            .view_mut()
            .into_dimensionality::<Ix2>()
            .expect("weight is a matrix");
        let b = b
            .unwrap_or_else(|| panic!("missing tensor `{bias}`"))
            .view_mut()
            .into_dimensionality::<Ix1>()
            .expect("bias is a vector");
        (w, b)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ArrayD<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut ArrayD<T>)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar elements.
    pub fn element_count(&self) -> usize {
        self.tensors.values().map(ArrayD::len).sum()
    }

    /// Same names and shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), ArrayD::zeros(v.raw_dim())))
                .collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        for t in self.tensors.values_mut() {
            t.fill(T::zero());
        }
    }

    /// `self += other`, tensor by tensor. Panics when layouts differ.
    pub fn add_assign(&mut self, other: &Self) {
        for ((ka, a), (kb, b)) in self.tensors.iter_mut().zip(other.tensors.iter()) {
            assert_eq!(ka, kb, "parameter layouts differ");
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: T) {
        for t in self.tensors.values_mut() {
            t.mapv_inplace(|v| v * factor);
        }
    }

    pub fn sum_of_squares(&self) -> T {
        self.tensors
            .values()
            .flat_map(|t| t.iter())
            .fold(T::zero(), |acc, &v| acc + v * v)
    }

    pub fn all_finite(&self) -> bool {
        self.tensors
            .values()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Reads the element at flat position `index` across all tensors.
    pub fn flat_get(&self, mut index: usize) -> T {
        for t in self.tensors.values() {
            if index < t.len() {
                return *t.iter().nth(index).unwrap();
            }
            index -= t.len();
        }
        panic!("flat index out of range");
    }

    /// Mutable reference to the element at flat position `index`.
    pub fn flat_get_mut(&mut self, mut index: usize) -> &mut T {
        for t in self.tensors.values_mut() {
            if index < t.len() {
                let slice = t
                    .as_slice_mut()
                    .expect("parameter tensors are stored contiguously");
                return &mut slice[index];
            }
            index -= t.len();
        }
        panic!("flat index out of range");
    }

    /// Element-type conversion, preserving names and shapes.
    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), v.mapv(|x| U::of(x.as_f64()))))
                .collect(),
        }
    }

    /// Same set of names with identical shapes.
    pub fn same_layout(&self, other: &Self) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(other.tensors.iter())
                .all(|((ka, a), (kb, b))| ka == kb && a.shape() == b.shape())
    }
}

#[cfg(test)]
pub(crate) fn zeros<T: Real>(shape: &[usize]) -> ArrayD<T> {
    ArrayD::zeros(ndarray::IxDyn(shape))
}
