use crate::error::{Error, Result};

/// What a tensor is used for. Only `Weight` tensors are counted in the
/// parameter total and considered for clustering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Weight,
    Bias,
    BatchnormParam,
    Other,
}

impl Role {
    pub fn to_u8(self) -> u8 {
        match self {
            Role::Weight => 0,
            Role::Bias => 1,
            Role::BatchnormParam => 2,
            Role::Other => 3,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            0 => Role::Weight,
            1 => Role::Bias,
            2 => Role::BatchnormParam,
            3 => Role::Other,
            _ => return None,
        })
    }
}

/// Element type tag. Only 32-bit floats exist in format version 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum DType {
    #[default]
    F32,
}

impl DType {
    pub fn wordlength(self) -> u32 {
        match self {
            DType::F32 => 32,
        }
    }

    pub fn to_u8(self) -> u8 {
        0
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        (v == 0).then_some(DType::F32)
    }
}

/// Named n-dimensional row-major array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    name: String,
    shape: Vec<usize>,
    dtype: DType,
    role: Role,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, role: Role, shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let name = name.into();
        if shape.is_empty() {
            return Err(Error::InvalidTensor { name, reason: "empty shape".into() });
        }
        if shape.contains(&0) {
            return Err(Error::InvalidTensor { name, reason: format!("zero dimension in {shape:?}") });
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::InvalidTensor {
                name,
                reason: format!("shape {shape:?} holds {n} elements but data has {}", data.len()),
            });
        }
        Ok(Tensor { name, shape, dtype: DType::F32, role, data })
    }

    pub fn zeros(name: impl Into<String>, role: Role, shape: Vec<usize>) -> Result<Self> {
        let n = shape.iter().product();
        Self::new(name, role, shape, vec![0.0; n])
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Same metadata, new values.
    pub fn with_data(&self, data: Vec<f32>) -> Result<Self> {
        Self::new(self.name.clone(), self.role, self.shape.clone(), data)
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }
}
