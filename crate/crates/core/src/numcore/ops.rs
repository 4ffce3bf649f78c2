//! Elementwise and row-wise kernels with their backward passes.

use super::{Matrix, Scalar};
use crate::error::{Error, Result};

/// Layer norm epsilon used throughout the encoder.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// In-place max-subtracted softmax. `-inf` entries receive probability 0;
/// at least one entry must be finite.
pub fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| if b > a { b } else { a });
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub fn softmax_rows<T: Scalar>(m: &Matrix<T>) -> Matrix<T> {
    let mut out = m.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r));
    }
    out
}

/// Backward of a row softmax: given probabilities `p` and `dL/dp`, returns
/// `dL/dz = p ⊙ (dp − ⟨dp, p⟩)`.
pub fn softmax_backward_row<T: Scalar>(p: &[T], dp: &[T], dz: &mut [T]) {
    let mut dot = T::zero();
    for (&pi, &di) in p.iter().zip(dp) {
        dot += pi * di;
    }
    for ((z, &pi), &di) in dz.iter_mut().zip(p).zip(dp) {
        *z = pi * (di - dot);
    }
}

/// Cached statistics of one normalized row.
#[derive(Clone, Debug)]
pub struct LayerNormCache<T> {
    pub normalized: Vec<T>,
    pub inv_std: T,
}

pub fn layer_norm<T: Scalar>(
    x: &[T],
    gain: &[T],
    bias: &[T],
    eps: T,
) -> Result<(Vec<T>, LayerNormCache<T>)> {
    if x.len() != gain.len() || x.len() != bias.len() {
        return Err(Error::shape(format!(
            "layer_norm row {} vs gain {} / bias {}",
            x.len(),
            gain.len(),
            bias.len()
        )));
    }
    let n = T::lit(x.len() as f64);
    let mean = x.iter().copied().sum::<T>() / n;
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    let inv_std = T::one() / (var + eps).sqrt();
    let normalized: Vec<T> = x.iter().map(|&v| (v - mean) * inv_std).collect();
    let out = normalized
        .iter()
        .zip(gain)
        .zip(bias)
        .map(|((&h, &g), &b)| h * g + b)
        .collect();
    Ok((out, LayerNormCache { normalized, inv_std }))
}

/// Returns `dL/dx`; adds into `dgain` and `dbias`.
pub fn layer_norm_backward<T: Scalar>(
    dy: &[T],
    gain: &[T],
    cache: &LayerNormCache<T>,
    dgain: &mut [T],
    dbias: &mut [T],
) -> Vec<T> {
    let n = T::lit(dy.len() as f64);
    let mut dxhat = Vec::with_capacity(dy.len());
    for i in 0..dy.len() {
        dgain[i] += dy[i] * cache.normalized[i];
        dbias[i] += dy[i];
        dxhat.push(dy[i] * gain[i]);
    }
    let mean_d = dxhat.iter().copied().sum::<T>() / n;
    let mean_dx = dxhat
        .iter()
        .zip(&cache.normalized)
        .map(|(&d, &h)| d * h)
        .sum::<T>()
        / n;
    dxhat
        .iter()
        .zip(&cache.normalized)
        .map(|(&d, &h)| cache.inv_std * (d - mean_d - h * mean_dx))
        .collect()
}

/// Row-wise layer norm of a matrix.
pub fn layer_norm_rows<T: Scalar>(
    x: &Matrix<T>,
    gain: &[T],
    bias: &[T],
) -> Result<(Matrix<T>, Vec<LayerNormCache<T>>)> {
    let eps = T::lit(LAYER_NORM_EPS);
    let mut out = Matrix::zeros(x.rows(), x.cols());
    let mut caches = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let (y, c) = layer_norm(x.row(r), gain, bias, eps)?;
        out.row_mut(r).copy_from_slice(&y);
        caches.push(c);
    }
    Ok((out, caches))
}

pub fn layer_norm_rows_backward<T: Scalar>(
    dy: &Matrix<T>,
    gain: &[T],
    caches: &[LayerNormCache<T>],
    dgain: &mut [T],
    dbias: &mut [T],
) -> Matrix<T> {
    let mut dx = Matrix::zeros(dy.rows(), dy.cols());
    for (r, cache) in caches.iter().enumerate() {
        let d = layer_norm_backward(dy.row(r), gain, cache, dgain, dbias);
        dx.row_mut(r).copy_from_slice(&d);
    }
    dx
}

const GELU_C: f64 = 0.044_715;

/// Tanh approximation of GELU.
pub fn gelu<T: Scalar>(x: T) -> T {
    let k = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let half = T::lit(0.5);
    let inner = k * (x + T::lit(GELU_C) * x * x * x);
    half * x * (T::one() + inner.tanh())
}

pub fn gelu_grad<T: Scalar>(x: T) -> T {
    let k = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let half = T::lit(0.5);
    let c = T::lit(GELU_C);
    let inner = k * (x + c * x * x * x);
    let t = inner.tanh();
    let dinner = k * (T::one() + T::lit(3.0) * c * x * x);
    half * (T::one() + t) + half * x * (T::one() - t * t) * dinner
}

/// Mean negative log-likelihood over the rows selected by `mask`, and the
/// gradient with respect to the logits (zero on unselected rows).
pub fn cross_entropy<T: Scalar>(
    logits: &Matrix<T>,
    targets: &[usize],
    mask: &[bool],
) -> Result<(T, Matrix<T>)> {
    if targets.len() != logits.rows() || mask.len() != logits.rows() {
        return Err(Error::shape(format!(
            "cross_entropy over {} rows with {} targets and {} mask bits",
            logits.rows(),
            targets.len(),
            mask.len()
        )));
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::input("cross_entropy mask selects no rows"));
    }
    let inv = T::one() / T::lit(count as f64);
    let mut loss = T::zero();
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    for r in 0..logits.rows() {
        if !mask[r] {
            continue;
        }
        let t = targets[r];
        if t >= logits.cols() {
            return Err(Error::input(format!(
                "target {t} out of range for {} classes",
                logits.cols()
            )));
        }
        let mut p = logits.row(r).to_vec();
        softmax_in_place(&mut p);
        loss += -p[t].max(T::min_positive_value()).ln();
        let g = grad.row_mut(r);
        for (c, pc) in p.iter().enumerate() {
            g[c] = (*pc - if c == t { T::one() } else { T::zero() }) * inv;
        }
    }
    let loss = loss * inv;
    if !loss.is_finite() {
        return Err(Error::numeric("cross_entropy loss is not finite"));
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;

    fn central<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], i: usize, eps: f64) -> f64 {
        let mut p = x.to_vec();
        p[i] += eps;
        let mut m = x.to_vec();
        m[i] -= eps;
        (f(&p) - f(&m)) / (2.0 * eps)
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    #[test]
    fn softmax_uniform_and_stable() {
        let m = Matrix::from_rows(&[vec![0.0f32, 0.0, 0.0], vec![1000.0, 0.0, -1000.0]]).unwrap();
        let s = softmax_rows(&m);
        for &v in s.row(0) {
            assert!((v - 1.0 / 3.0).abs() < 1e-7);
        }
        assert!((s.get(1, 0) - 1.0).abs() < 1e-6);
        assert!(s.get(1, 1).abs() < 1e-6);
    }

    #[test]
    fn softmax_random_rows_sum_to_one() {
        let mut rng = Rng::new(3);
        for _ in 0..20 {
            let mut row: Vec<f32> = (0..7).map(|_| (rng.normal() * 5.0) as f32).collect();
            softmax_in_place(&mut row);
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn softmax_masks_neg_infinity() {
        let mut row = [1.0f64, f64::NEG_INFINITY, 2.0];
        softmax_in_place(&mut row);
        assert_eq!(row[1], 0.0);
    }

    #[test]
    fn layer_norm_constant_row_is_zero() {
        let (y, _) = layer_norm(&[3.0f32; 4], &[1.0; 4], &[0.0; 4], 1e-5).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn layer_norm_already_normalized() {
        let (y, _) = layer_norm(&[1.0f64, -1.0], &[1.0; 2], &[0.0; 2], 1e-12).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-9 && (y[1] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn layer_norm_length_mismatch() {
        assert!(layer_norm(&[1.0f32, 2.0], &[1.0], &[0.0], 1e-5).is_err());
    }

    #[test]
    fn layer_norm_backward_matches_finite_differences() {
        let mut rng = Rng::new(11);
        let n = 6;
        let x: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let gain: Vec<f64> = (0..n).map(|_| 1.0 + 0.3 * rng.normal()).collect();
        let bias: Vec<f64> = (0..n).map(|_| 0.1 * rng.normal()).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let loss = |x: &[f64]| {
            let (y, _) = layer_norm(x, &gain, &bias, 1e-5).unwrap();
            y.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
        };
        let (_, cache) = layer_norm(&x, &gain, &bias, 1e-5).unwrap();
        let mut dg = vec![0.0; n];
        let mut db = vec![0.0; n];
        let dx = layer_norm_backward(&w, &gain, &cache, &mut dg, &mut db);
        for i in 0..n {
            assert!(rel(dx[i], central(loss, &x, i, 1e-3)) < 1e-4);
        }
        for i in 0..n {
            let lg = |g: &[f64]| {
                let (y, _) = layer_norm(&x, g, &bias, 1e-5).unwrap();
                y.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
            };
            assert!(rel(dg[i], central(lg, &gain, i, 1e-3)) < 1e-4);
        }
        assert_eq!(db, w);
    }

    #[test]
    fn gelu_grad_matches_finite_differences() {
        for &x in &[-3.0f64, -0.7, 0.0, 0.4, 2.5] {
            let num = (gelu(x + 1e-4) - gelu(x - 1e-4)) / 2e-4;
            assert!((gelu_grad(x) - num).abs() < 1e-7, "x={x}");
        }
    }

    #[test]
    fn cross_entropy_uniform_is_ln3() {
        let logits = Matrix::<f64>::zeros(2, 3);
        let (l, _) = cross_entropy(&logits, &[2, 0], &[true, true]).unwrap();
        assert!((l - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_masks_rows() {
        let logits = Matrix::from_rows(&[vec![2.0f64, 0.5, -1.0], vec![0.3, 0.1, 4.0]]).unwrap();
        let (single, _) = cross_entropy(&logits.slice_rows(1, 2), &[0], &[true]).unwrap();
        let (masked, g) = cross_entropy(&logits, &[2, 0], &[false, true]).unwrap();
        assert_eq!(single, masked);
        assert!(g.row(0).iter().all(|&v| v == 0.0));
        assert!(cross_entropy(&logits, &[0, 0], &[false, false]).is_err());
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let mut rng = Rng::new(5);
        let data: Vec<f64> = (0..12).map(|_| rng.normal()).collect();
        let targets = [1, 0, 2, 1];
        let mask = [true, false, true, true];
        let logits = Matrix::from_vec(4, 3, data.clone()).unwrap();
        let (_, g) = cross_entropy(&logits, &targets, &mask).unwrap();
        let f = |d: &[f64]| {
            let m = Matrix::from_vec(4, 3, d.to_vec()).unwrap();
            cross_entropy(&m, &targets, &mask).unwrap().0
        };
        for i in 0..12 {
            let num = central(f, &data, i, 1e-3);
            assert!((g.data()[i] - num).abs() < 1e-6 || rel(g.data()[i], num) < 1e-4);
        }
    }
}
