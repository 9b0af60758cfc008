//! Symmetric eigendecomposition via cyclic Jacobi rotations.
//!
//! The matrices here are tiny (distance matrices over a handful of
//! languages), so a dependency-free Jacobi sweep is plenty. Computation
//! runs in f64 internally; the tensor-facing wrapper rounds back to f32.

use super::tensor::Tensor;
use crate::{Error, Result};

/// Eigendecomposition of a symmetric n×n matrix in f64.
///
/// Returns eigenvalues in descending order and the eigenvectors as a
/// row-major n×n matrix whose column j pairs with eigenvalue j.
pub fn jacobi_eigh(n: usize, a: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.len() != n * n {
        return Err(Error::shape(format!(
            "jacobi_eigh: {} values for a {n}×{n} matrix",
            a.len()
        )));
    }
    let mut m = a.to_vec();
    // v starts as identity and accumulates rotations.
    let mut v = vec![0.0f64; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let max_sweeps = 100;
    for _ in 0..max_sweeps {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[p * n + q] * m[p * n + q];
            }
        }
        if off.sqrt() < 1e-14 * frobenius(&m).max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for i in 0..n {
                    let mip = m[i * n + p];
                    let miq = m[i * n + q];
                    m[i * n + p] = c * mip - s * miq;
                    m[i * n + q] = s * mip + c * miq;
                }
                for j in 0..n {
                    let mpj = m[p * n + j];
                    let mqj = m[q * n + j];
                    m[p * n + j] = c * mpj - s * mqj;
                    m[q * n + j] = s * mpj + c * mqj;
                }
                for i in 0..n {
                    let vip = v[i * n + p];
                    let viq = v[i * n + q];
                    v[i * n + p] = c * vip - s * viq;
                    v[i * n + q] = s * vip + c * viq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    order.sort_by(|&a, &b| diag[b].partial_cmp(&diag[a]).unwrap_or(std::cmp::Ordering::Equal));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = vec![0.0f64; n * n];
    for (new_col, &old_col) in order.iter().enumerate() {
        for row in 0..n {
            vectors[row * n + new_col] = v[row * n + old_col];
        }
    }
    Ok((eigenvalues, vectors))
}

fn frobenius(m: &[f64]) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Eigendecomposition of a symmetric float32 tensor.
///
/// The input must be symmetric within 1e-6. Eigenvalues come back in
/// descending order; the eigenvector tensor is n×n with column j pairing
/// eigenvalue j, satisfying A·v ≈ λ·v.
pub fn sym_eig(matrix: &Tensor) -> Result<(Vec<f32>, Tensor)> {
    let (n, n2) = matrix.dims2()?;
    if n != n2 {
        return Err(Error::shape(format!("sym_eig: matrix is {n}×{n2}")));
    }
    let data = matrix.data();
    let mut max_asym = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (data[i * n + j] - data[j * n + i]).abs() as f64;
            max_asym = max_asym.max(d);
        }
    }
    if max_asym > 1e-6 {
        return Err(Error::NotSymmetric(max_asym));
    }
    // Symmetrize exactly before decomposing.
    let mut a = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = 0.5 * (data[i * n + j] as f64 + data[j * n + i] as f64);
        }
    }
    let (values, vectors) = jacobi_eigh(n, &a)?;
    let values_f32: Vec<f32> = values.iter().map(|&x| x as f32).collect();
    let vectors_f32 = Tensor::from_vec(&[n, n], vectors.iter().map(|&x| x as f32).collect())?;
    Ok((values_f32, vectors_f32))
}
