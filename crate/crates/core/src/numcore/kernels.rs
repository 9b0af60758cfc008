//! Low-level matrix kernels shared by the autodiff graph.
//!
//! All kernels are deterministic: every output element is produced by one
//! thread with a fixed-order inner sum, so results are bit-identical
//! regardless of thread count.

use rayon::prelude::*;

/// Parallelize only when the work is worth the fork overhead.
const PAR_FLOPS_THRESHOLD: usize = 1 << 18;

/// out[m×n] += a[m×k] · b[k×n]
pub fn matmul_acc(out: &mut [f32], a: &[f32], b: &[f32], m: usize, k: usize, n: usize) {
    debug_assert_eq!(out.len(), m * n);
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let row = |out_row: &mut [f32], i: usize| {
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &a_ip) in a_row.iter().enumerate() {
            if a_ip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &b_pj) in out_row.iter_mut().zip(b_row) {
                *o += a_ip * b_pj;
            }
        }
    };
    if m * k * n >= PAR_FLOPS_THRESHOLD && m > 1 {
        out.par_chunks_mut(n).enumerate().for_each(|(i, o)| row(o, i));
    } else {
        for (i, o) in out.chunks_mut(n).enumerate() {
            row(o, i);
        }
    }
}

/// out[m×v] += a[m×k] · b[v×k]ᵀ
pub fn matmul_bt_acc(out: &mut [f32], a: &[f32], b: &[f32], m: usize, k: usize, v: usize) {
    debug_assert_eq!(out.len(), m * v);
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), v * k);
    let row = |out_row: &mut [f32], i: usize| {
        let a_row = &a[i * k..(i + 1) * k];
        for (j, o) in out_row.iter_mut().enumerate() {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = 0.0f32;
            for (&x, &y) in a_row.iter().zip(b_row) {
                acc += x * y;
            }
            *o += acc;
        }
    };
    if m * k * v >= PAR_FLOPS_THRESHOLD && m > 1 {
        out.par_chunks_mut(v).enumerate().for_each(|(i, o)| row(o, i));
    } else {
        for (i, o) in out.chunks_mut(v).enumerate() {
            row(o, i);
        }
    }
}

/// out[k×n] += a[m×k]ᵀ · b[m×n]
pub fn matmul_at_acc(out: &mut [f32], a: &[f32], b: &[f32], m: usize, k: usize, n: usize) {
    debug_assert_eq!(out.len(), k * n);
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    let row = |out_row: &mut [f32], p: usize| {
        for i in 0..m {
            let a_ip = a[i * k + p];
            if a_ip == 0.0 {
                continue;
            }
            let b_row = &b[i * n..(i + 1) * n];
            for (o, &b_ij) in out_row.iter_mut().zip(b_row) {
                *o += a_ip * b_ij;
            }
        }
    };
    if m * k * n >= PAR_FLOPS_THRESHOLD && k > 1 {
        out.par_chunks_mut(n).enumerate().for_each(|(p, o)| row(o, p));
    } else {
        for (p, o) in out.chunks_mut(n).enumerate() {
            row(o, p);
        }
    }
}

/// Numerically stable in-place softmax over one row.
pub fn softmax_row(row: &mut [f32]) {
    let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0f32;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    let inv = 1.0 / sum;
    for x in row.iter_mut() {
        *x *= inv;
    }
}
