//! Dense row-major tensors and the differentiable operations the models
//! are assembled from. Each forward op has a matching backward that maps
//! the upstream gradient to input gradients.

use rand::Rng;

use super::linalg::{gemm_nn, gemm_nt, gemm_tn, sigmoid as sigmoid_scalar};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    pub data: Vec<f64>,
    pub grad: Option<Vec<f64>>,
}

fn shape_err(op: &'static str, left: &[usize], right: &[usize]) -> Error {
    Error::Shape {
        op,
        left: left.to_vec(),
        right: right.to_vec(),
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) || shape.iter().product::<usize>() != data.len() {
            return Err(shape_err("tensor", &shape, &[data.len()]));
        }
        Ok(Tensor { shape, data, grad: None })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
            grad: None,
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
            grad: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Allocates (or clears) the gradient buffer.
    pub fn zero_grad(&mut self) {
        self.grad = Some(vec![0.0; self.data.len()]);
    }

    fn with_data(&self, data: Vec<f64>) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data,
            grad: None,
        }
    }

    fn matrix_dims(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(shape_err(op, &self.shape, &[0, 0])),
        }
    }
}

/// `[m,k]·[k,n] → [m,n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.matrix_dims("matmul")?;
    let (k2, n) = b.matrix_dims("matmul")?;
    if k != k2 {
        return Err(shape_err("matmul", &a.shape, &b.shape));
    }
    let mut c = vec![0.0; m * n];
    gemm_nn(m, n, k, &a.data, &b.data, &mut c, 0.0);
    Tensor::new(vec![m, n], c)
}

/// Returns `(∂a, ∂b)` for `c = a·b`.
pub fn matmul_backward(a: &Tensor, b: &Tensor, dc: &Tensor) -> Result<(Tensor, Tensor)> {
    let (m, k) = a.matrix_dims("matmul_backward")?;
    let (_, n) = b.matrix_dims("matmul_backward")?;
    if dc.shape != [m, n] {
        return Err(shape_err("matmul_backward", &dc.shape, &[m, n]));
    }
    let mut da = vec![0.0; m * k];
    gemm_nt(m, k, n, &dc.data, &b.data, &mut da, 0.0);
    let mut db = vec![0.0; k * n];
    gemm_tn(k, n, m, &a.data, &dc.data, &mut db, 0.0);
    Ok((a.with_data(da), b.with_data(db)))
}

/// Elementwise sum of equal shapes, or a matrix plus a row vector
/// broadcast over rows.
pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape == b.shape {
        return Ok(a.with_data(a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect()));
    }
    if let ([_, c], [c2]) = (&a.shape[..], &b.shape[..]) {
        if c == c2 {
            let data = a.data.iter().enumerate().map(|(i, x)| x + b.data[i % c]).collect();
            return Ok(a.with_data(data));
        }
    }
    Err(shape_err("add", &a.shape, &b.shape))
}

pub fn add_backward(a: &Tensor, b: &Tensor, dc: &Tensor) -> Result<(Tensor, Tensor)> {
    if dc.shape != a.shape {
        return Err(shape_err("add_backward", &dc.shape, &a.shape));
    }
    if a.shape == b.shape {
        return Ok((dc.clone(), dc.clone()));
    }
    let c = b.len();
    let mut db = vec![0.0; c];
    for (i, g) in dc.data.iter().enumerate() {
        db[i % c] += g;
    }
    Ok((dc.clone(), b.with_data(db)))
}

fn map(x: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    x.with_data(x.data.iter().map(|&v| f(v)).collect())
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape != b.shape {
        return Err(shape_err(op, &a.shape, &b.shape));
    }
    Ok(())
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    map(x, sigmoid_scalar)
}

/// Takes the forward output `y`.
pub fn sigmoid_backward(y: &Tensor, dy: &Tensor) -> Result<Tensor> {
    same_shape("sigmoid_backward", y, dy)?;
    Ok(y.with_data(y.data.iter().zip(&dy.data).map(|(y, g)| g * y * (1.0 - y)).collect()))
}

pub fn tanh(x: &Tensor) -> Tensor {
    map(x, f64::tanh)
}

/// Takes the forward output `y`.
pub fn tanh_backward(y: &Tensor, dy: &Tensor) -> Result<Tensor> {
    same_shape("tanh_backward", y, dy)?;
    Ok(y.with_data(y.data.iter().zip(&dy.data).map(|(y, g)| g * (1.0 - y * y)).collect()))
}

pub fn relu(x: &Tensor) -> Tensor {
    map(x, |v| v.max(0.0))
}

/// Takes the forward input `x`.
pub fn relu_backward(x: &Tensor, dy: &Tensor) -> Result<Tensor> {
    same_shape("relu_backward", x, dy)?;
    Ok(x.with_data(x.data.iter().zip(&dy.data).map(|(x, g)| if *x > 0.0 { *g } else { 0.0 }).collect()))
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        z += *x;
    }
    for x in v.iter_mut() {
        *x /= z;
    }
}

/// Softmax over the last axis.
pub fn softmax(x: &Tensor) -> Tensor {
    let c = *x.shape.last().expect("non-empty shape");
    let mut data = x.data.clone();
    for row in data.chunks_mut(c) {
        softmax_in_place(row);
    }
    x.with_data(data)
}

/// Takes the forward output `y`.
pub fn softmax_backward(y: &Tensor, dy: &Tensor) -> Result<Tensor> {
    same_shape("softmax_backward", y, dy)?;
    let c = *y.shape.last().expect("non-empty shape");
    let mut dx = vec![0.0; y.len()];
    for ((out, yr), gr) in dx.chunks_mut(c).zip(y.data.chunks(c)).zip(dy.data.chunks(c)) {
        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
        for j in 0..c {
            out[j] = yr[j] * (gr[j] - dot);
        }
    }
    Ok(y.with_data(dx))
}

/// Joins 1-D tensors end to end.
pub fn concat(parts: &[&Tensor]) -> Result<Tensor> {
    let mut data = Vec::new();
    for p in parts {
        if p.shape.len() != 1 {
            return Err(shape_err("concat", &p.shape, &[p.len()]));
        }
        data.extend_from_slice(&p.data);
    }
    if data.is_empty() {
        return Err(shape_err("concat", &[], &[]));
    }
    Ok(Tensor::vector(data))
}

/// Splits the upstream gradient back into the part sizes.
pub fn concat_backward(sizes: &[usize], dy: &Tensor) -> Result<Vec<Tensor>> {
    if sizes.iter().sum::<usize>() != dy.len() {
        return Err(shape_err("concat_backward", sizes, &dy.shape));
    }
    let mut out = Vec::with_capacity(sizes.len());
    let mut at = 0;
    for &s in sizes {
        out.push(Tensor::vector(dy.data[at..at + s].to_vec()));
        at += s;
    }
    Ok(out)
}

/// Inverted-dropout mask: each entry is 0 with probability `p`,
/// otherwise `1/(1-p)`.
pub fn dropout_mask(shape: &[usize], p: f64, rng: &mut impl Rng) -> Result<Tensor> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::config("dropout rate must be in [0, 1)"));
    }
    let keep = 1.0 / (1.0 - p);
    let n = shape.iter().product();
    let data = (0..n).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect();
    Tensor::new(shape.to_vec(), data)
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("mul", a, b)?;
    Ok(a.with_data(a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect()))
}

pub fn mul_backward(a: &Tensor, b: &Tensor, dc: &Tensor) -> Result<(Tensor, Tensor)> {
    same_shape("mul_backward", a, dc)?;
    Ok((mul(dc, b)?, mul(dc, a)?))
}

/// Column-wise max of a time-major `[T, C]` matrix; also returns the
/// winning row per column (first on ties).
pub fn max_over_time(x: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let (t, c) = x.matrix_dims("max_over_time")?;
    let mut best = vec![0usize; c];
    let mut out = x.data[..c].to_vec();
    for r in 1..t {
        for j in 0..c {
            let v = x.data[r * c + j];
            if v > out[j] {
                out[j] = v;
                best[j] = r;
            }
        }
    }
    Ok((Tensor::vector(out), best))
}

pub fn max_over_time_backward(shape: &[usize], argmax: &[usize], dy: &Tensor) -> Result<Tensor> {
    let [t, c] = shape[..] else {
        return Err(shape_err("max_over_time_backward", shape, &dy.shape));
    };
    if dy.shape != [c] || argmax.len() != c {
        return Err(shape_err("max_over_time_backward", shape, &dy.shape));
    }
    let mut dx = vec![0.0; t * c];
    for j in 0..c {
        dx[argmax[j] * c + j] = dy.data[j];
    }
    Tensor::new(shape.to_vec(), dx)
}
