use std::collections::BTreeMap;

use crate::Scalar;

use super::{Array, NdiffError};

/// Named parameter arrays in a fixed (lexicographic) order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet<T> {
    groups: BTreeMap<String, Array<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self {
            groups: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Array<T>) {
        self.groups.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Result<&Array<T>, NdiffError> {
        self.groups
            .get(name)
            .ok_or_else(|| NdiffError::MissingParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Array<T>, NdiffError> {
        self.groups
            .get_mut(name)
            .ok_or_else(|| NdiffError::MissingParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.groups.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Array<T>)> {
        self.groups.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Array<T>)> {
        self.groups.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.groups.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn size(&self) -> usize {
        self.groups.values().map(Array::len).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            groups: self
                .groups
                .iter()
                .map(|(k, v)| (k.clone(), Array::zeros(v.shape())))
                .collect(),
        }
    }

    pub fn global_norm(&self) -> T {
        self.groups.values().map(Array::squared_norm).sum::<T>().sqrt()
    }

    pub fn scale(&mut self, c: T) {
        for a in self.groups.values_mut() {
            a.data_mut().iter_mut().for_each(|v| *v = *v * c);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.groups.values().all(Array::all_finite)
    }

    /// Checks that `other` has exactly the same names and shapes.
    pub fn check_congruent<U: Scalar>(&self, other: &ParamSet<U>) -> Result<(), NdiffError> {
        if self.len() != other.len() {
            return Err(NdiffError::Contract(format!(
                "parameter sets differ in size: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        for ((na, a), (nb, b)) in self.iter().zip(other.iter()) {
            if na != nb {
                return Err(NdiffError::MissingParam(na.clone()));
            }
            if a.shape() != b.shape() {
                return Err(NdiffError::Shape {
                    op: "parameter set",
                    left: a.shape().to_vec(),
                    right: b.shape().to_vec(),
                });
            }
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            groups: self.groups.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }
}

impl<T: Scalar> FromIterator<(String, Array<T>)> for ParamSet<T> {
    fn from_iter<I: IntoIterator<Item = (String, Array<T>)>>(iter: I) -> Self {
        Self {
            groups: iter.into_iter().collect(),
        }
    }
}
