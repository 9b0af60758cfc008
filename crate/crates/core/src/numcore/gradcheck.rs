//! Finite-difference validation of analytic gradients.

use super::store::ParamStore;
use crate::{Error, Result};

/// Where the worst finite-difference disagreement was found.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_param: Option<String>,
    pub worst_index: usize,
    pub coords_checked: usize,
}

/// Compare analytic gradients against central finite differences.
///
/// `loss_fn` must be deterministic, return the loss in f64, and leave the
/// analytic gradient of every trainable entry it touches in the entry's
/// grad buffer. Per trainable tensor, up to `coords_per_tensor`
/// coordinates with the largest analytic magnitude are probed (plus the
/// first coordinate), each at the realized step `(p+eps) - (p-eps)` after
/// f32 rounding. Entries the loss never touches finite-difference to zero
/// and report zero error.
///
/// The relative error per coordinate is `|fd - g| / max(|fd|, |g|, floor)`
/// with a floor of `1e-6 + 1e-3 * max|g|` over the tensor, so coordinates
/// with negligible gradient cannot dominate the report through float
/// noise. Returns the maximum over all probed coordinates.
pub fn grad_check<F>(
    mut loss_fn: F,
    store: &mut ParamStore,
    eps: f32,
    coords_per_tensor: usize,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut ParamStore) -> Result<f64>,
{
    if eps <= 0.0 {
        return Err(Error::invalid("eps must be positive"));
    }
    store.clear_grads();
    let base_loss = loss_fn(store)?;
    if !base_loss.is_finite() {
        return Err(Error::NonFiniteLoss);
    }

    let names: Vec<String> = store
        .iter()
        .filter(|(_, e)| e.trainable)
        .map(|(n, _)| n.to_string())
        .collect();
    let mut analytic: Vec<(String, Vec<f32>)> = Vec::new();
    for name in &names {
        let t = store.get(name).expect("listed above");
        let g = t.grad().map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; t.len()]);
        analytic.push((name.clone(), g));
    }

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_param: None,
        worst_index: 0,
        coords_checked: 0,
    };

    for (name, grads) in &analytic {
        let len = grads.len();
        let mut order: Vec<usize> = (0..len).collect();
        order.sort_by(|&a, &b| {
            grads[b]
                .abs()
                .partial_cmp(&grads[a].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let mut coords: Vec<usize> = order.into_iter().take(coords_per_tensor).collect();
        if !coords.contains(&0) && len > 0 {
            coords.push(0);
        }
        let max_abs = grads.iter().fold(0.0f32, |m, g| m.max(g.abs())) as f64;
        let floor = 1e-6 + 1e-3 * max_abs;

        for i in coords {
            let orig = store.get(name).expect("exists").data()[i];
            store.get_mut(name).unwrap().data_mut()[i] = orig + eps;
            let hi_at = store.get(name).unwrap().data()[i] as f64;
            let hi = loss_fn(store)?;
            store.get_mut(name).unwrap().data_mut()[i] = orig - eps;
            let lo_at = store.get(name).unwrap().data()[i] as f64;
            let lo = loss_fn(store)?;
            store.get_mut(name).unwrap().data_mut()[i] = orig;
            if !hi.is_finite() || !lo.is_finite() {
                return Err(Error::NonFiniteLoss);
            }

            let step = hi_at - lo_at;
            if step == 0.0 {
                continue; // parameter magnitude swallowed eps entirely
            }
            let fd = (hi - lo) / step;
            let an = grads[i] as f64;
            let diff = (fd - an).abs();
            let rel = if diff == 0.0 {
                0.0
            } else {
                diff / fd.abs().max(an.abs()).max(floor)
            };
            report.coords_checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst_param = Some(name.clone());
                report.worst_index = i;
            }
        }
    }
    Ok(report)
}
