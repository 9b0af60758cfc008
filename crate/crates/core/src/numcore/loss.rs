//! Cross-entropy over logits with an ignore label.

use super::tensor::Tensor;
use crate::{Error, Result};

/// Mean negative log-softmax over the non-ignored rows of `logits`.
///
/// `logits` is [N×C]; `labels[i]` is the class of row i, or `ignore_label`
/// to exclude the row. Ignored rows contribute nothing to loss or count.
pub fn cross_entropy(logits: &Tensor, labels: &[i64], ignore_label: i64) -> Result<f32> {
    let (n, c) = logits.dims2()?;
    let (loss, _) = cross_entropy_kernel(logits.data(), n, c, labels, ignore_label, false)?;
    Ok(loss as f32)
}

/// Shared kernel: loss in f64 and, when requested, dLoss/dlogits.
///
/// The gradient of the mean loss is (softmax - onehot)/count on counted
/// rows and zero on ignored rows.
pub(crate) fn cross_entropy_kernel(
    logits: &[f32],
    n: usize,
    c: usize,
    labels: &[i64],
    ignore_label: i64,
    want_grad: bool,
) -> Result<(f64, Option<Vec<f32>>)> {
    if n == 0 {
        return Err(Error::EmptyInput("cross_entropy over zero rows".into()));
    }
    if labels.len() != n {
        return Err(Error::shape(format!(
            "{} labels for {} logit rows",
            labels.len(),
            n
        )));
    }
    let mut counted = 0usize;
    for (&label, _) in labels.iter().zip(0..n) {
        if label == ignore_label {
            continue;
        }
        if label < 0 || label as usize >= c {
            return Err(Error::invalid(format!(
                "label {label} out of range for {c} classes"
            )));
        }
        counted += 1;
    }
    if counted == 0 {
        return Err(Error::EmptyInput(
            "cross_entropy: every position carries the ignore label".into(),
        ));
    }

    let mut grad = if want_grad { Some(vec![0.0f32; n * c]) } else { None };
    let mut total = 0.0f64;
    let inv_count = 1.0 / counted as f64;
    for (i, &label) in labels.iter().enumerate() {
        if label == ignore_label {
            continue;
        }
        let row = &logits[i * c..(i + 1) * c];
        let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
        let mut sum_exp = 0.0f64;
        for &x in row {
            sum_exp += ((x as f64) - max).exp();
        }
        let log_z = max + sum_exp.ln();
        total += log_z - row[label as usize] as f64;
        if let Some(g) = grad.as_mut() {
            let g_row = &mut g[i * c..(i + 1) * c];
            for (j, (&x, gj)) in row.iter().zip(g_row.iter_mut()).enumerate() {
                let p = (((x as f64) - log_z).exp()) * inv_count;
                *gj = if j == label as usize {
                    (p - inv_count) as f32
                } else {
                    p as f32
                };
            }
        }
    }
    Ok((total * inv_count, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Hand softmax oracle in f64: loss of one row.
    fn row_loss_oracle(row: &[f64], label: usize) -> f64 {
        let z: f64 = row.iter().map(|x| x.exp()).sum();
        -(row[label].exp() / z).ln()
    }

    #[test]
    fn uniform_logits_give_ln_c() {
        let logits = Tensor::zeros(&[3, 16]);
        let loss = cross_entropy(&logits, &[0, 7, 15], -1).unwrap();
        assert!((loss - (16.0f32).ln()).abs() < 1e-5, "loss {loss}");
        assert!((loss - 2.7726).abs() < 1e-3);
    }

    #[test]
    fn saturated_margin_has_negligible_loss() {
        // Logit gap of 100 in favor of the true class.
        let logits = Tensor::from_vec(&[1, 2], vec![100.0, 0.0]).unwrap();
        let loss = cross_entropy(&logits, &[0], -1).unwrap();
        assert!(loss >= 0.0);
        assert!((loss as f64) < 1e-20, "loss {loss}");
    }

    #[test]
    fn two_row_case_matches_hand_oracle() {
        let logits = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 0.0]).unwrap();
        let expected =
            (row_loss_oracle(&[1.0, 2.0], 1) + row_loss_oracle(&[3.0, 0.0], 0)) / 2.0;
        // Oracle evaluates to 0.180924...; frozen here.
        assert!((expected - 0.180924).abs() < 1e-5);
        let loss = cross_entropy(&logits, &[1, 0], -1).unwrap() as f64;
        assert!((loss - expected).abs() < 1e-4, "loss {loss} vs {expected}");
    }

    #[test]
    fn ignore_label_excludes_rows() {
        let logits = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 0.0]).unwrap();
        let only_first = cross_entropy(&logits, &[1, -1], -1).unwrap() as f64;
        assert!((only_first - row_loss_oracle(&[1.0, 2.0], 1)).abs() < 1e-5);
    }

    #[test]
    fn all_ignored_is_an_error() {
        let logits = Tensor::zeros(&[2, 4]);
        assert!(cross_entropy(&logits, &[-1, -1], -1).is_err());
    }

    #[test]
    fn out_of_range_label_is_an_error() {
        let logits = Tensor::zeros(&[1, 4]);
        assert!(cross_entropy(&logits, &[4], -1).is_err());
        assert!(cross_entropy(&logits, &[-2], -1).is_err());
    }

    #[test]
    fn gradient_sums_to_zero_per_counted_row() {
        let logits = Tensor::from_vec(&[2, 3], vec![0.2, -1.0, 0.5, 2.0, 0.0, -0.3]).unwrap();
        let (_, grad) =
            cross_entropy_kernel(logits.data(), 2, 3, &[2, -1], -1, true).unwrap();
        let g = grad.unwrap();
        let row0: f32 = g[0..3].iter().sum();
        assert!(row0.abs() < 1e-6);
        assert!(g[3..6].iter().all(|&x| x == 0.0));
    }
}
