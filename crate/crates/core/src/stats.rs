//! Elementary statistics: Pearson correlation, Fisher-Z, z-scoring and
//! group averaging of FC matrices.
//!
//! Z-scoring uses the population standard deviation (divide by N).

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::types::{FcMatrix, SpatialMap};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population standard deviation.
pub fn population_sd(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt()
}

/// Sample standard deviation (divide by n - 1).
pub fn sample_sd(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

/// Sample Pearson correlation.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "pearson: series lengths differ ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::InvalidInput("pearson: need at least 2 samples".into()));
    }
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    // The mean of a constant series can be off by rounding, so test
    // constancy directly.
    let constant = |x: &[f64]| x.iter().all(|v| *v == x[0]);
    let (ca, cb) = (saa == 0.0 || constant(a), sbb == 0.0 || constant(b));
    if ca || cb {
        return Err(Error::Degenerate(format!(
            "pearson: zero-variance series ({})",
            if ca { "first" } else { "second" }
        )));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// [`pearson`] over ndarray views.
pub fn pearson_view(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<f64> {
    match (a.as_slice(), b.as_slice()) {
        (Some(a), Some(b)) => pearson(a, b),
        _ => pearson(&a.to_vec(), &b.to_vec()),
    }
}

pub fn fisher_z(r: f64) -> Result<f64> {
    if r.is_nan() || r.abs() >= 1.0 {
        return Err(Error::Domain(format!("fisher_z requires |r| < 1, got {r}")));
    }
    Ok(r.atanh())
}

pub fn fisher_z_inv(z: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::Domain(format!("fisher_z_inv requires finite z, got {z}")));
    }
    // tanh saturates to exactly ±1 in f64 for |z| > ~19; keep the result
    // inside the open interval so it stays a valid correlation.
    let below_one = 1.0 - f64::EPSILON / 2.0;
    Ok(z.tanh().clamp(-below_one, below_one))
}

/// Standardizes a vector in place to mean 0 and population sd 1.
pub fn zscore_in_place(w: &mut [f64]) -> Result<()> {
    if w.is_empty() {
        return Err(Error::InvalidInput("cannot z-score an empty vector".into()));
    }
    let m = mean(w);
    let sd = population_sd(w);
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::Degenerate("z-score of a constant vector".into()));
    }
    w.iter_mut().for_each(|v| *v = (*v - m) / sd);
    Ok(())
}

/// Returns `(w - mean) / sd` as an unlabeled [`SpatialMap`].
pub fn zscore_map(w: &[f64]) -> Result<SpatialMap> {
    let mut v = w.to_vec();
    zscore_in_place(&mut v)?;
    Ok(SpatialMap {
        weights: Array1::from(v),
        label: None,
        mask: None,
    })
}

/// Group-average FC: mean of Fisher-Z transformed off-diagonal entries,
/// transformed back; diagonal forced to 1.
pub fn group_average_fc(mats: &[FcMatrix]) -> Result<FcMatrix> {
    let first = mats
        .first()
        .ok_or_else(|| Error::InvalidInput("group_average_fc: empty list".into()))?;
    let k = first.size();
    for (i, m) in mats.iter().enumerate().skip(1) {
        if m.labels != first.labels {
            return Err(Error::InvalidInput(format!(
                "group_average_fc: labels of matrix {i} differ from matrix 0"
            )));
        }
    }
    let mut out = Array2::<f64>::eye(k);
    for i in 0..k {
        for j in (i + 1)..k {
            let mut acc = 0.0;
            for m in mats {
                acc += fisher_z(m.values[(i, j)])?;
            }
            let r = fisher_z_inv(acc / mats.len() as f64)?;
            out[(i, j)] = r;
            out[(j, i)] = r;
        }
    }
    FcMatrix::new(first.labels.clone(), out)
}
