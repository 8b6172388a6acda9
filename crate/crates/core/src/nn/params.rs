use crate::error::{Error, Result};
use crate::tensor::{Dims, Scalar, Tensor4};

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor4<T>,
}

/// Ordered, named parameter arrays. Order is part of the on-disk contract.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamStore<T = f32> {
    params: Vec<Param<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor4<T>) -> usize {
        self.params.push(Param {
            name: name.into(),
            value,
        });
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn total_count(&self) -> usize {
        self.params.iter().map(|p| p.value.dims().len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn get(&self, i: usize) -> &Tensor4<T> {
        &self.params[i].value
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Tensor4<T> {
        &mut self.params[i].value
    }

    pub fn zeros_like(&self) -> Self {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: Tensor4::zeros(p.value.dims()),
                })
                .collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.cast(),
                })
                .collect(),
        }
    }

    pub fn dims(&self) -> Vec<(String, Dims)> {
        self.params
            .iter()
            .map(|p| (p.name.clone(), p.value.dims()))
            .collect()
    }

    /// Errors unless `other` has the same names and dims in the same order.
    pub fn expect_congruent<U: Scalar>(&self, other: &ParamStore<U>, what: &str) -> Result<()> {
        if self.params.len() != other.params.len() {
            return Err(Error::Shape(format!(
                "{what}: {} parameter arrays vs {}",
                self.params.len(),
                other.params.len()
            )));
        }
        for (a, b) in self.params.iter().zip(&other.params) {
            if a.value.dims() != b.value.dims() {
                return Err(Error::Shape(format!(
                    "{what}: parameter {} is {} vs {} {}",
                    a.name,
                    a.value.dims(),
                    b.name,
                    b.value.dims()
                )));
            }
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.expect_congruent(other, "add_assign")?;
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            a.value.add_assign(&b.value)?;
        }
        Ok(())
    }

    /// Flat view across all arrays, in store order.
    pub fn flat_get(&self, mut i: usize) -> T {
        for p in &self.params {
            let len = p.value.dims().len();
            if i < len {
                return p.value.data()[i];
            }
            i -= len;
        }
        panic!("flat index out of range");
    }

    pub fn flat_set(&mut self, mut i: usize, v: T) {
        for p in &mut self.params {
            let len = p.value.dims().len();
            if i < len {
                p.value.data_mut()[i] = v;
                return;
            }
            i -= len;
        }
        panic!("flat index out of range");
    }

    pub fn flat_values(&self) -> impl Iterator<Item = T> + '_ {
        self.params.iter().flat_map(|p| p.value.data().iter().copied())
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.is_finite())
    }
}
