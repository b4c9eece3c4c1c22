use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::DenseArray;
use crate::error::{contract, shape, Result};

/// Named parameter arrays kept in insertion order.
///
/// Insertion order is the iteration order, so a store built by the same code
/// path always iterates identically. Gradients, Fisher diagonals and optimizer
/// moments reuse this type with the same names and shapes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterStore {
    names: Vec<String>,
    arrays: Vec<DenseArray>,
    index: BTreeMap<String, usize>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, array: DenseArray) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(contract(format!("duplicate parameter name `{name}`")));
        }
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.arrays.push(array);
        Ok(())
    }

    /// Number of named arrays.
    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    /// Total scalar parameter count.
    pub fn num_params(&self) -> usize {
        self.arrays.iter().map(DenseArray::len).sum()
    }

    pub fn get(&self, name: &str) -> Option<&DenseArray> {
        self.index.get(name).map(|&i| &self.arrays[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut DenseArray> {
        self.index.get(name).map(|&i| &mut self.arrays[i])
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn arrays(&self) -> &[DenseArray] {
        &self.arrays
    }

    pub fn arrays_mut(&mut self) -> &mut [DenseArray] {
        &mut self.arrays
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &DenseArray)> {
        self.names.iter().map(String::as_str).zip(self.arrays.iter())
    }

    /// Same names and shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        let mut out = Self::new();
        for (name, a) in self.iter() {
            out.insert(name.to_string(), DenseArray::zeros(a.shape())).expect("names unique");
        }
        out
    }

    /// Checks that `other` has the same names, in the same order, with the same shapes.
    pub fn check_aligned(&self, other: &ParameterStore, what: &str) -> Result<()> {
        if self.names != other.names {
            return Err(shape(format!("{what}: parameter names differ")));
        }
        for (i, (a, b)) in self.arrays.iter().zip(&other.arrays).enumerate() {
            if a.shape() != b.shape() {
                return Err(shape(format!(
                    "{what}: `{}` has shape {:?} vs {:?}",
                    self.names[i],
                    a.shape(),
                    b.shape()
                )));
            }
        }
        Ok(())
    }

    /// Looks up `name` in `other` and checks the shape matches this store's array.
    pub fn matching<'a>(&self, other: &'a ParameterStore, name: &str, what: &str) -> Result<&'a DenseArray> {
        let mine = self.get(name).ok_or_else(|| shape(format!("{what}: unknown parameter `{name}`")))?;
        let theirs = other.get(name).ok_or_else(|| shape(format!("{what}: `{name}` missing")))?;
        if mine.shape() != theirs.shape() {
            return Err(shape(format!("{what}: `{name}` has shape {:?} vs {:?}", mine.shape(), theirs.shape())));
        }
        Ok(theirs)
    }

    /// Iterates every scalar in store order.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.arrays.iter().flat_map(|a| a.data().iter().copied())
    }

    /// Euclidean distance between two aligned stores.
    pub fn l2_distance(&self, other: &ParameterStore) -> Result<f64> {
        self.check_aligned(other, "l2_distance")?;
        let sq: f64 = self.values().zip(other.values()).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok(libm::sqrt(sq))
    }

    /// Largest absolute element-wise difference between two aligned stores.
    pub fn max_abs_diff(&self, other: &ParameterStore) -> Result<f64> {
        self.check_aligned(other, "max_abs_diff")?;
        Ok(self.values().zip(other.values()).fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Maps a flat coordinate to (array index, offset within array).
    pub fn locate(&self, mut flat: usize) -> Option<(usize, usize)> {
        for (i, a) in self.arrays.iter().enumerate() {
            if flat < a.len() {
                return Some((i, flat));
            }
            flat -= a.len();
        }
        None
    }
}
