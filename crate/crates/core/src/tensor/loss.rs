use crate::error::{Error, Result};

fn check(pred: &[f32], target: &[f32]) -> Result<()> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Shape(format!(
            "smooth-L1 needs equal non-empty inputs, got {} and {}",
            pred.len(),
            target.len()
        )));
    }
    Ok(())
}

/// Mean Huber loss with unit threshold.
pub fn smooth_l1(pred: &[f32], target: &[f32]) -> Result<f32> {
    check(pred, target)?;
    let sum: f64 = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let e = (p - t) as f64;
            if e.abs() < 1.0 {
                0.5 * e * e
            } else {
                e.abs() - 0.5
            }
        })
        .sum();
    Ok((sum / pred.len() as f64) as f32)
}

/// Loss and its gradient with respect to `pred`.
pub fn smooth_l1_with_grad(pred: &[f32], target: &[f32]) -> Result<(f32, Vec<f32>)> {
    let loss = smooth_l1(pred, target)?;
    let n = pred.len() as f32;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| (p - t).clamp(-1.0, 1.0) / n)
        .collect();
    Ok((loss, grad))
}
