use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::LabelledMap;
use crate::error::{Error, Result};
use crate::stats::{self, pearson_view};
use crate::synth::stream_rng;

/// Entropy tolerance (bits) of the per-point bandwidth search.
const ENTROPY_TOL: f64 = 1e-5;
const SEARCH_MAX_ITER: usize = 200;
const MIN_GAIN: f64 = 0.01;
const P_FLOOR: f64 = 1e-12;
/// Scale of the jitter that separates duplicate points.
const DUPLICATE_JITTER: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    /// Iterations with exaggerated P and the initial momentum.
    pub exaggeration_iters: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            seed: 0,
        }
    }
}

fn squared_distances(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let m = x.nrows();
    let sq: Array1<f64> = x.axis_iter(Axis(0)).map(|r| r.dot(&r)).collect();
    let g = x.dot(&x.t());
    Array2::from_shape_fn((m, m), |(i, j)| if i == j { 0.0 } else { (sq[i] + sq[j] - 2.0 * g[(i, j)]).max(0.0) })
}

/// Row `i` of the conditional affinities for precision `beta`, and its
/// entropy in bits.
fn row_affinities(d: &[f64], i: usize, beta: f64, out: &mut [f64]) -> f64 {
    let dmin = d
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for (j, (&dj, o)) in d.iter().zip(out.iter_mut()).enumerate() {
        *o = if j == i { 0.0 } else { (-beta * (dj - dmin)).exp() };
        sum += *o;
    }
    let mut h = 0.0;
    for o in out.iter_mut() {
        *o /= sum;
        if *o > 0.0 {
            h -= *o * o.log2();
        }
    }
    h
}

/// Conditional affinities `p(j|i)`: each row is a Gaussian kernel over
/// squared distances whose bandwidth gives the requested perplexity.
pub fn conditional_probabilities(x: ArrayView2<'_, f64>, perplexity: f64) -> Result<Array2<f64>> {
    let m = x.nrows();
    if !(perplexity >= 1.0) || perplexity >= m as f64 {
        return Err(Error::InvalidInput(format!(
            "perplexity must be in [1, M) with M = {m} points, got {perplexity}"
        )));
    }
    let d = squared_distances(x);
    let target = perplexity.log2();
    let mut p = Array2::zeros((m, m));
    for i in 0..m {
        let di = d.row(i).to_vec();
        let mut row = vec![0.0; m];
        let (mut lo, mut hi, mut beta) = (0.0, f64::INFINITY, 1.0);
        let mean_d = di.iter().sum::<f64>() / (m - 1) as f64;
        if mean_d > 0.0 {
            beta = 1.0 / mean_d;
        }
        let mut h = row_affinities(&di, i, beta, &mut row);
        let mut iter = 0;
        while (h - target).abs() > ENTROPY_TOL && iter < SEARCH_MAX_ITER {
            if h > target {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
            h = row_affinities(&di, i, beta, &mut row);
            iter += 1;
        }
        if (h - target).abs() > ENTROPY_TOL {
            log::warn!("t-SNE: point {i} reached entropy {h:.6} bits, target {target:.6}");
        }
        p.row_mut(i).assign(&Array1::from(row));
    }
    Ok(p)
}

/// Separates exactly duplicated rows with a tiny seeded perturbation.
fn separate_duplicates(x: &mut Array2<f64>, seed: u64) {
    let d = squared_distances(x.view());
    let m = x.nrows();
    let scale = x.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0) * DUPLICATE_JITTER;
    let mut rng = stream_rng(seed, &[0x75e, 1]);
    let mut moved = 0;
    for i in 1..m {
        if (0..i).any(|j| d[(i, j)] == 0.0) {
            for v in x.row_mut(i) {
                *v += scale * rng.random_range(-1.0..1.0);
            }
            moved += 1;
        }
    }
    if moved > 0 {
        log::info!("t-SNE: jittered {moved} duplicate points by {scale:e}");
    }
}

/// Exact t-SNE of the rows of `x` into two dimensions.
pub fn tsne(x: ArrayView2<'_, f64>, cfg: &TsneConfig) -> Result<Array2<f64>> {
    let m = x.nrows();
    if m < 4 {
        return Err(Error::InvalidInput(format!("t-SNE needs at least 4 points, got {m}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("t-SNE input is not finite".into()));
    }
    let mut x = x.to_owned();
    separate_duplicates(&mut x, cfg.seed);
    let cond = conditional_probabilities(x.view(), cfg.perplexity)?;
    let mut p = (&cond + &cond.t()) / (2.0 * m as f64);
    p.mapv_inplace(|v| v.max(P_FLOOR));
    p *= cfg.early_exaggeration;

    let mut rng = stream_rng(cfg.seed, &[0x75e, 0]);
    let mut y = Array2::from_shape_fn((m, 2), |_| {
        let z: f64 = StandardNormal.sample(&mut rng);
        1e-4 * z
    });
    let mut velocity = Array2::<f64>::zeros((m, 2));
    let mut gains = Array2::<f64>::ones((m, 2));
    let mut num = Array2::<f64>::zeros((m, m));
    let mut grad = Array2::<f64>::zeros((m, 2));
    for iter in 0..cfg.iterations {
        if iter == cfg.exaggeration_iters {
            p /= cfg.early_exaggeration;
        }
        let mut total = 0.0;
        for i in 0..m {
            for j in (i + 1)..m {
                let dx = y[(i, 0)] - y[(j, 0)];
                let dy = y[(i, 1)] - y[(j, 1)];
                let v = 1.0 / (1.0 + dx * dx + dy * dy);
                num[(i, j)] = v;
                num[(j, i)] = v;
                total += 2.0 * v;
            }
        }
        grad.fill(0.0);
        for i in 0..m {
            let (mut gx, mut gy) = (0.0, 0.0);
            for j in 0..m {
                if i == j {
                    continue;
                }
                let q = (num[(i, j)] / total).max(P_FLOOR);
                let w = (p[(i, j)] - q) * num[(i, j)];
                gx += w * (y[(i, 0)] - y[(j, 0)]);
                gy += w * (y[(i, 1)] - y[(j, 1)]);
            }
            grad[(i, 0)] = 4.0 * gx;
            grad[(i, 1)] = 4.0 * gy;
        }
        let momentum = if iter < cfg.exaggeration_iters {
            cfg.initial_momentum
        } else {
            cfg.final_momentum
        };
        ndarray::Zip::from(&mut gains)
            .and(&mut velocity)
            .and(&grad)
            .and(&mut y)
            .for_each(|g, v, &dg, yv| {
                *g = if (dg > 0.0) != (*v > 0.0) { *g + 0.2 } else { *g * 0.8 };
                *g = g.max(MIN_GAIN);
                *v = momentum * *v - cfg.learning_rate * *g * dg;
                *yv += *v;
            });
        let mean = y.mean_axis(Axis(0)).expect("non-empty");
        y -= &mean;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("t-SNE diverged at iteration {iter}")));
        }
    }
    Ok(y)
}

/// Pairwise correlation distance `1 − r` between the rows of `x`.
pub fn correlation_distances(x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let m = x.nrows();
    let mut d = Array2::zeros((m, m));
    for i in 0..m {
        for j in (i + 1)..m {
            let v = 1.0 - pearson_view(x.row(i), x.row(j))?;
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    Ok(d)
}

fn euclidean_distances(x: ArrayView2<'_, f64>) -> Array2<f64> {
    squared_distances(x).mapv(f64::sqrt)
}

/// Silhouette values for a precomputed distance matrix. Points alone in
/// their cluster score 0, as do points with `a = b = 0`.
pub fn silhouette_from_distances<S: AsRef<str>>(d: ArrayView2<'_, f64>, labels: &[S]) -> Result<(f64, Vec<f64>)> {
    let m = labels.len();
    if d.dim() != (m, m) {
        return Err(Error::Shape(format!(
            "silhouette: {m} labels for a {:?} distance matrix",
            d.dim()
        )));
    }
    let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        let next = ids.len();
        ids.entry(l.as_ref()).or_insert(next);
    }
    let k = ids.len();
    if k < 2 {
        return Err(Error::InvalidInput("silhouette needs at least 2 distinct labels".into()));
    }
    let cluster: Vec<usize> = labels.iter().map(|l| ids[l.as_ref()]).collect();
    let mut sizes = vec![0usize; k];
    for &c in &cluster {
        sizes[c] += 1;
    }
    let mut s = Vec::with_capacity(m);
    for i in 0..m {
        if sizes[cluster[i]] == 1 {
            s.push(0.0);
            continue;
        }
        let mut sums = vec![0.0; k];
        for j in 0..m {
            if j != i {
                sums[cluster[j]] += d[(i, j)];
            }
        }
        let a = sums[cluster[i]] / (sizes[cluster[i]] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != cluster[i])
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let den = a.max(b);
        s.push(if den > 0.0 { (b - a) / den } else { 0.0 });
    }
    Ok((stats::mean(&s), s))
}

/// Euclidean silhouette of labelled points (rows of `x`).
pub fn silhouette<S: AsRef<str>>(x: ArrayView2<'_, f64>, labels: &[S]) -> Result<(f64, Vec<f64>)> {
    if x.nrows() != labels.len() {
        return Err(Error::Shape(format!(
            "silhouette: {} points, {} labels",
            x.nrows(),
            labels.len()
        )));
    }
    silhouette_from_distances(euclidean_distances(x).view(), labels)
}

/// Points in an embedding with their subject and network labels.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddedPoints {
    pub coords: Array2<f64>,
    pub subjects: Vec<String>,
    pub networks: Vec<String>,
}

/// Space in which subject clustering is measured.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariationSpace {
    /// Euclidean distance between t-SNE coordinates.
    #[default]
    Tsne,
    /// Correlation distance `1 − r` between the maps themselves.
    Correlation,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VariationConfig {
    pub tsne: TsneConfig,
    pub space: VariationSpace,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VariationReport {
    pub points: EmbeddedPoints,
    /// Silhouette of every point among the points of its own network,
    /// clustered by subject.
    pub per_point: Vec<f64>,
    /// Mean silhouette per network label, sorted by label.
    pub per_network: Vec<(String, f64)>,
    pub mean: f64,
    pub sd: f64,
}

/// Subject clustering of per-session network maps: all maps are embedded
/// together with t-SNE, then each network's points are scored with the
/// silhouette over subject labels.
pub fn subject_variation(maps: &[LabelledMap], cfg: &VariationConfig) -> Result<VariationReport> {
    if maps.is_empty() {
        return Err(Error::InvalidInput("subject_variation: no maps".into()));
    }
    let n = maps[0].map.len();
    let mut x = Array2::zeros((maps.len(), n));
    for (i, m) in maps.iter().enumerate() {
        if m.map.len() != n {
            return Err(Error::Shape(format!("map {i} has {} pixels, expected {n}", m.map.len())));
        }
        x.row_mut(i).assign(&m.map.weights);
    }
    let coords = match cfg.space {
        VariationSpace::Tsne => tsne(x.view(), &cfg.tsne)?,
        VariationSpace::Correlation => Array2::zeros((maps.len(), 0)),
    };
    let mut by_network: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, m) in maps.iter().enumerate() {
        by_network.entry(m.label.as_str()).or_default().push(i);
    }
    let mut per_point = vec![f64::NAN; maps.len()];
    let mut per_network = Vec::new();
    for (label, idx) in &by_network {
        let subjects: Vec<&str> = idx.iter().map(|&i| maps[i].subject.as_str()).collect();
        let scored = match cfg.space {
            VariationSpace::Tsne => silhouette(coords.select(Axis(0), idx).view(), &subjects),
            VariationSpace::Correlation => {
                let d = correlation_distances(x.select(Axis(0), idx).view())?;
                silhouette_from_distances(d.view(), &subjects)
            }
        };
        match scored {
            Ok((mean, s)) => {
                for (&i, v) in idx.iter().zip(s) {
                    per_point[i] = v;
                }
                per_network.push((label.to_string(), mean));
            }
            Err(Error::InvalidInput(msg)) => log::warn!("network {label:?} skipped: {msg}"),
            Err(e) => return Err(e),
        }
    }
    let scored: Vec<f64> = per_point.iter().copied().filter(|v| !v.is_nan()).collect();
    if scored.is_empty() {
        return Err(Error::InvalidInput(
            "subject_variation: no network has maps from two subjects".into(),
        ));
    }
    let sd = if scored.len() > 1 { stats::sample_sd(&scored) } else { 0.0 };
    Ok(VariationReport {
        points: EmbeddedPoints {
            coords,
            subjects: maps.iter().map(|m| m.subject.clone()).collect(),
            networks: maps.iter().map(|m| m.label.clone()).collect(),
        },
        mean: stats::mean(&scored),
        sd,
        per_point,
        per_network,
    })
}
