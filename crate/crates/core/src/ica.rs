//! Spatial FastICA: the data matrix `X` (T×N) is modelled as `X = A·S` with
//! C statistically independent spatial maps in the rows of `S`.
//!
//! Pixels are the samples and frames the variables, so centring removes
//! each frame's mean across pixels and whitening acts on the frame axis.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{inverse_sqrt_spd, lstsq, symmetric_eigen, thin_svd};
use crate::synth::stream_rng;
use crate::types::{DataMatrix, LatentEmbedding, SpatialMap};

pub const DEFAULT_COMPONENTS: usize = 16;
pub const DEFAULT_TOL: f64 = 1e-4;
pub const DEFAULT_MAX_ITER: usize = 200;
/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOL: f64 = 1e-10;

/// Centring and whitening learned from one data matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct WhitenModel {
    /// Per-frame mean across pixels (length T).
    pub mean: Array1<f64>,
    /// C×T matrix `K`; `K·Xc` has identity covariance over pixels.
    pub projection: Array2<f64>,
    /// Variance (over pixels) captured by each retained direction.
    pub explained_variance: Array1<f64>,
}

impl WhitenModel {
    pub fn components(&self) -> usize {
        self.projection.nrows()
    }

    pub fn center(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        &x - &self.mean.view().insert_axis(Axis(1))
    }
}

fn row_center(x: ArrayView2<'_, f64>) -> (Array1<f64>, Array2<f64>) {
    let mean = x.mean_axis(Axis(1)).expect("non-empty");
    let xc = &x - &mean.view().insert_axis(Axis(1));
    (mean, xc)
}

/// Centres frames and whitens onto the top-`c` singular subspace.
pub fn whiten(m: &DataMatrix, c: usize) -> Result<(WhitenModel, Array2<f64>)> {
    let (t, n) = (m.frames(), m.pixels());
    if c == 0 || c > t.min(n) {
        return Err(Error::InvalidInput(format!(
            "component count {c} must be in 1..={} for a {t}x{n} matrix",
            t.min(n)
        )));
    }
    let (mean, xc) = row_center(m.values());
    // Top-c subspace from the smaller Gram matrix, then an SVD of the
    // projected data for accurate singular values.
    let (left, sigma) = if t <= n {
        let (_, u) = symmetric_eigen(xc.dot(&xc.t()).view())?;
        let uc = u.slice(ndarray::s![.., ..c]).to_owned();
        let p = uc.t().dot(&xc);
        let (u2, s, _) = thin_svd(p.view())?;
        (uc.dot(&u2), s)
    } else {
        let (_, v) = symmetric_eigen(xc.t().dot(&xc).view())?;
        let vc = v.slice(ndarray::s![.., ..c]).to_owned();
        let q = xc.dot(&vc);
        let (u2, s, _) = thin_svd(q.view())?;
        (u2, s)
    };
    // fix each basis vector's sign: largest-magnitude entry positive
    let mut left = left;
    for mut col in left.axis_iter_mut(Axis(1)) {
        let pivot = col.iter().copied().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
        if pivot < 0.0 {
            col.mapv_inplace(|v| -v);
        }
    }
    let smax = sigma[0];
    if !(smax > 0.0) {
        return Err(Error::RankDeficient("data matrix is zero after centring".into()));
    }
    if let Some(k) = sigma.iter().position(|&s| s < RANK_TOL * smax) {
        return Err(Error::RankDeficient(format!(
            "requested {c} components but the centred data has numerical rank {k}"
        )));
    }
    let scale = (n as f64).sqrt();
    let projection = Array2::from_shape_fn((c, t), |(i, j)| scale * left[(j, i)] / sigma[i]);
    let z = projection.dot(&xc);
    let explained_variance = sigma.mapv(|s| s * s / n as f64);
    Ok((
        WhitenModel {
            mean,
            projection,
            explained_variance,
        },
        z,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IcaConfig {
    pub components: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for IcaConfig {
    fn default() -> Self {
        IcaConfig {
            components: DEFAULT_COMPONENTS,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct IcaResult {
    /// z-scored spatial maps, one per component.
    pub sources: Vec<SpatialMap>,
    /// Time courses `A = Xc·pinv(S)`.
    pub mixing: LatentEmbedding,
    /// Orthonormal C×C unmixing matrix in whitened space.
    pub unmixing: Array2<f64>,
    pub whitening: WhitenModel,
    pub iterations: usize,
    pub converged: bool,
}

impl IcaResult {
    /// Unmixing expressed on centred frames: `W·K` (C×T).
    pub fn full_unmixing(&self) -> Array2<f64> {
        self.unmixing.dot(&self.whitening.projection)
    }

    pub fn source_matrix(&self) -> Array2<f64> {
        crate::types::maps_to_matrix(&self.sources).expect("uniform map lengths")
    }
}

/// `(W·Wᵀ)^(-1/2)·W`.
pub fn symmetric_decorrelate(w: &Array2<f64>) -> Result<Array2<f64>> {
    Ok(inverse_sqrt_spd(w.dot(&w.t()).view())?.dot(w))
}

/// Symmetric FastICA with the tanh contrast.
pub fn fastica(m: &DataMatrix, cfg: &IcaConfig) -> Result<IcaResult> {
    let c = cfg.components;
    if !(cfg.tol > 0.0) || cfg.max_iter == 0 {
        return Err(Error::InvalidInput("fastica: tol must be > 0 and max_iter >= 1".into()));
    }
    let (whitening, z) = whiten(m, c)?;
    let n = z.ncols() as f64;

    let mut rng = stream_rng(cfg.seed, &[0x1ca]);
    let w0 = Array2::from_shape_fn((c, c), |_| StandardNormal.sample(&mut rng));
    let mut w = symmetric_decorrelate(&w0)?;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let mut g = w.dot(&z);
        g.mapv_inplace(f64::tanh);
        let gprime_mean = g.map_axis(Axis(1), |row| row.iter().map(|v| 1.0 - v * v).sum::<f64>() / n);
        let mut w_new = g.dot(&z.t()) / n;
        w_new -= &(&w * &gprime_mean.view().insert_axis(Axis(1)));
        let w_new = symmetric_decorrelate(&w_new)?;
        let delta = w_new
            .axis_iter(Axis(0))
            .zip(w.axis_iter(Axis(0)))
            .map(|(a, b)| (1.0 - a.dot(&b).abs()).abs())
            .fold(0.0f64, f64::max);
        w = w_new;
        if delta < cfg.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("fastica did not converge in {} iterations", cfg.max_iter);
    }

    let mut s = w.dot(&z);
    let mut sources = Vec::with_capacity(c);
    for (k, mut row) in s.axis_iter_mut(Axis(0)).enumerate() {
        let mean = row.mean().unwrap_or(0.0);
        let sd = row.std(0.0);
        if !(sd > 0.0) {
            return Err(Error::Degenerate(format!("component {k} is constant")));
        }
        row.mapv_inplace(|v| (v - mean) / sd);
        // orient each map so that its heavier tail is positive
        let skew: f64 = row.iter().map(|v| v * v * v).sum();
        if skew < 0.0 {
            row.mapv_inplace(|v| -v);
            w.row_mut(k).mapv_inplace(|v| -v);
        }
        sources.push(SpatialMap {
            weights: row.to_owned(),
            label: Some(format!("ic{k:02}")),
            mask: None,
        });
    }
    let xc = whitening.center(m.values());
    let mixing = timecourses(xc.view(), s.view())?;
    Ok(IcaResult {
        sources,
        mixing,
        unmixing: w,
        whitening,
        iterations,
        converged,
    })
}

/// Least-squares time courses for fixed maps: `A = Xc·pinv(S)`.
pub fn timecourses(xc: ArrayView2<'_, f64>, s: ArrayView2<'_, f64>) -> Result<LatentEmbedding> {
    if xc.ncols() != s.ncols() {
        return Err(Error::Shape(format!(
            "data has {} pixels, maps have {}",
            xc.ncols(),
            s.ncols()
        )));
    }
    let at = lstsq(s.t(), xc.t())?;
    LatentEmbedding::new(at.t().to_owned())
}

/// Time courses of an ICA result on the data it was fitted to.
pub fn ica_timecourses(result: &IcaResult) -> LatentEmbedding {
    result.mixing.clone()
}
