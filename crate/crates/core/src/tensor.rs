use crate::error::{Error, Result};

pub const MAX_NDIM: usize = 4;

/// Dense row-major `f32` tensor of rank at most four.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if dims.len() > MAX_NDIM {
            return Err(Error::shape(format!(
                "tensor rank {} exceeds {MAX_NDIM}",
                dims.len()
            )));
        }
        let count: usize = dims.iter().product();
        if count != data.len() {
            return Err(Error::shape(format!(
                "dims {dims:?} hold {count} values, payload has {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }
}
