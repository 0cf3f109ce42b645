use super::ImageGrid;
use crate::error::{Error, Result};

/// Central-difference estimate of the gradient of `f` at `x`, one pixel at a
/// time: `(f(x + h e_j) - f(x - h e_j)) / 2h`.
pub fn finite_diff_gradient<F>(f: F, x: &ImageGrid, h: f64) -> Result<ImageGrid>
where
    F: Fn(&ImageGrid) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::invalid("h", "step must be positive"));
    }
    let mut probe = x.clone();
    let mut grad = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        let orig = x.values()[j];
        probe.values_mut()[j] = orig + h;
        let up = f(&probe)?;
        probe.values_mut()[j] = orig - h;
        let down = f(&probe)?;
        probe.values_mut()[j] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite { pixel: j });
        }
        grad.push((up - down) / (2.0 * h));
    }
    let mut out = x.with_values(grad)?;
    out.set_domain((f64::NEG_INFINITY, f64::INFINITY));
    Ok(out)
}

/// `||a - b||_2 / max(||a||_2, ||b||_2)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}
