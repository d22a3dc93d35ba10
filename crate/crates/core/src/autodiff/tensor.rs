use crate::error::{Error, Result};

/// Dense row-major `f64` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape("Tensor::new", &shape, data.len()));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![],
            data: vec![value],
        }
    }

    /// 2-D tensor from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Data("ragged rows".into()));
        }
        Ok(Self {
            shape: vec![rows.len(), cols],
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[1..].iter().product(),
        }
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::shape("reshape", &self.shape, &shape));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn same_shape(&self, other: &Tensor, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(op, &self.shape, &other.shape));
        }
        Ok(())
    }
}

/// `y = x · Wᵀ + b` with `x: [batch, in]`, `W: [out, in]`, `b: [out]`.
pub fn linear_forward(w: &Tensor, b: &Tensor, x: &Tensor) -> Result<Tensor> {
    check_linear(w, b, x)?;
    let (batch, inp, out) = (x.shape[0], x.shape[1], w.shape[0]);
    let mut y = Vec::with_capacity(batch * out);
    for _ in 0..batch {
        y.extend_from_slice(&b.data);
    }
    // y += x · Wᵀ
    unsafe {
        matrixmultiply::dgemm(
            batch,
            inp,
            out,
            1.0,
            x.data.as_ptr(),
            inp as isize,
            1,
            w.data.as_ptr(),
            1,
            inp as isize,
            1.0,
            y.as_mut_ptr(),
            out as isize,
            1,
        );
    }
    Ok(Tensor {
        shape: vec![batch, out],
        data: y,
    })
}

pub(crate) fn check_linear(w: &Tensor, b: &Tensor, x: &Tensor) -> Result<()> {
    if w.shape.len() != 2 || x.shape.len() != 2 || w.shape[1] != x.shape[1] {
        return Err(Error::shape("linear (W vs x)", &w.shape, &x.shape));
    }
    if b.shape.len() != 1 || b.shape[0] != w.shape[0] {
        return Err(Error::shape("linear (W vs b)", &w.shape, &b.shape));
    }
    Ok(())
}

/// `dx = dy · W`, shapes `[batch, out] · [out, in]`.
pub(crate) fn matmul_nn(dy: &Tensor, w: &Tensor) -> Tensor {
    let (batch, out, inp) = (dy.shape[0], dy.shape[1], w.shape[1]);
    let mut dx = vec![0.0; batch * inp];
    unsafe {
        matrixmultiply::dgemm(
            batch,
            out,
            inp,
            1.0,
            dy.data.as_ptr(),
            out as isize,
            1,
            w.data.as_ptr(),
            inp as isize,
            1,
            0.0,
            dx.as_mut_ptr(),
            inp as isize,
            1,
        );
    }
    Tensor {
        shape: vec![batch, inp],
        data: dx,
    }
}

/// `dW = dyᵀ · x`, shapes `[out, batch] · [batch, in]`.
pub(crate) fn matmul_tn(dy: &Tensor, x: &Tensor) -> Tensor {
    let (batch, out, inp) = (dy.shape[0], dy.shape[1], x.shape[1]);
    let mut dw = vec![0.0; out * inp];
    unsafe {
        matrixmultiply::dgemm(
            out,
            batch,
            inp,
            1.0,
            dy.data.as_ptr(),
            1,
            out as isize,
            x.data.as_ptr(),
            inp as isize,
            1,
            0.0,
            dw.as_mut_ptr(),
            inp as isize,
            1,
        );
    }
    Tensor {
        shape: vec![out, inp],
        data: dw,
    }
}

pub(crate) fn column_sums(dy: &Tensor) -> Tensor {
    let cols = dy.shape[1];
    let mut sums = vec![0.0; cols];
    for row in dy.data.chunks_exact(cols) {
        for (s, v) in sums.iter_mut().zip(row) {
            *s += v;
        }
    }
    Tensor {
        shape: vec![cols],
        data: sums,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_inconsistent_length() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn linear_identity_and_bias() {
        let w = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let b = Tensor::new(vec![2], vec![0.0, 0.0]).unwrap();
        let x = Tensor::from_rows(&[vec![3.0, 4.0]]).unwrap();
        assert_eq!(linear_forward(&w, &b, &x).unwrap().data(), &[3.0, 4.0]);

        let w = Tensor::from_rows(&[vec![2.0]]).unwrap();
        let b = Tensor::new(vec![1], vec![1.0]).unwrap();
        let x = Tensor::from_rows(&[vec![0.0]]).unwrap();
        assert_eq!(linear_forward(&w, &b, &x).unwrap().data(), &[1.0]);
    }

    #[test]
    fn linear_shape_errors_name_operands() {
        let w = Tensor::zeros(&[3, 2]);
        let b = Tensor::zeros(&[3]);
        let x = Tensor::zeros(&[4, 5]);
        let err = linear_forward(&w, &b, &x).unwrap_err().to_string();
        assert!(err.contains("W vs x"), "{err}");
        let err = linear_forward(&w, &Tensor::zeros(&[2]), &Tensor::zeros(&[4, 2]))
            .unwrap_err()
            .to_string();
        assert!(err.contains("W vs b"), "{err}");
    }
}
