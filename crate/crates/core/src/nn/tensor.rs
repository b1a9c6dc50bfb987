use crate::error::{Error, Result};

/// Extent of a feature map: channels x frequency x time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub c: usize,
    pub f: usize,
    pub t: usize,
}

impl Shape {
    pub const fn new(c: usize, f: usize, t: usize) -> Self {
        Self { c, f, t }
    }

    pub const fn len(&self) -> usize {
        self.c * self.f * self.t
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Elements in one channel plane.
    pub const fn plane(&self) -> usize {
        self.f * self.t
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {})", self.c, self.f, self.t)
    }
}

/// Dense feature map, row-major by `(c, f, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: Shape) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        Self {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for shape {shape}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn index(&self, c: usize, f: usize, t: usize) -> usize {
        (c * self.shape.f + f) * self.shape.t + t
    }

    pub fn at(&self, c: usize, f: usize, t: usize) -> f64 {
        self.data[self.index(c, f, t)]
    }

    pub fn set(&mut self, c: usize, f: usize, t: usize, v: f64) {
        let i = self.index(c, f, t);
        self.data[i] = v;
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let p = self.shape.plane();
        &self.data[c * p..(c + 1) * p]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let p = self.shape.plane();
        &mut self.data[c * p..(c + 1) * p]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Sum of elementwise products, used for gradient checks.
    pub fn dot(&self, other: &Tensor) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }
}
