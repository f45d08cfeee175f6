//! Evaluation battery: overlap with reference maps, subject variation in an
//! embedded space, reproducibility, paired t-tests, epoch-length stability
//! and standard-deviation maps.

mod stability;
mod tsne;
mod ttest;

pub use stability::{epoch_stability_curve, reference_similarity, Method, StabilityPoint};
pub use tsne::{
    conditional_probabilities, correlation_distances, silhouette, silhouette_from_distances, subject_variation, tsne,
    EmbeddedPoints, TsneConfig, VariationConfig, VariationReport, VariationSpace,
};
pub use ttest::{ln_gamma, paired_ttest, regularized_incomplete_beta, student_t_two_sided, TTest};

use std::collections::BTreeMap;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sbc::MAX_ABS_R;
use crate::stats::{self, pearson_view};
use crate::types::SpatialMap;

/// Binarized map over brain pixels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMap {
    pub bits: Vec<bool>,
}

impl BinaryMap {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Reference maps are kept where intensity reaches half the maximum.
pub const REFERENCE_FRACTION: f64 = 0.5;

/// Pixels with intensity `≥ 0.5·max`.
pub fn threshold_reference(intensity: &[f64]) -> Result<BinaryMap> {
    if let Some(v) = intensity.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Domain(format!(
            "reference intensities must be finite and nonnegative, found {v}"
        )));
    }
    let max = intensity.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(Error::Degenerate("reference map is all zero".into()));
    }
    let cut = REFERENCE_FRACTION * max;
    Ok(BinaryMap {
        bits: intensity.iter().map(|&v| v >= cut).collect(),
    })
}

/// Which order statistic is the median of an even number of values.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvenMedian {
    #[default]
    Lower,
    Upper,
}

/// Median of the positive entries, the threshold used by [`threshold_fbn`].
pub fn positive_median(z: &[f64], rule: EvenMedian) -> Result<f64> {
    let mut pos: Vec<f64> = z.iter().copied().filter(|v| *v > 0.0).collect();
    if pos.is_empty() {
        return Err(Error::Degenerate("map has no positive values".into()));
    }
    pos.sort_by(f64::total_cmp);
    let k = pos.len();
    Ok(if k % 2 == 1 {
        pos[k / 2]
    } else {
        match rule {
            EvenMedian::Lower => pos[k / 2 - 1],
            EvenMedian::Upper => pos[k / 2],
        }
    })
}

/// Pixels with `z ≥` the median of the positive z values.
pub fn threshold_fbn(map: &SpatialMap, rule: EvenMedian) -> Result<BinaryMap> {
    let w = map.weights.as_slice().expect("contiguous map");
    let cut = positive_median(w, rule)?;
    Ok(BinaryMap {
        bits: w.iter().map(|&v| v >= cut).collect(),
    })
}

/// `2|a∩b| / (|a| + |b|)`.
pub fn dice(a: &BinaryMap, b: &BinaryMap) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("dice: maps have {} and {} pixels", a.len(), b.len())));
    }
    let both = a.bits.iter().zip(&b.bits).filter(|(x, y)| **x && **y).count();
    let total = a.count() + b.count();
    if total == 0 {
        return Err(Error::Degenerate("dice of two empty maps".into()));
    }
    Ok(2.0 * both as f64 / total as f64)
}

/// One labelled map of one session.
#[derive(Clone, Debug)]
pub struct LabelledMap {
    pub subject: String,
    pub session: String,
    pub label: String,
    pub map: SpatialMap,
}

/// Fisher-Z average of correlations; |r| is clamped below 1 first.
pub fn fisher_mean(rs: &[f64]) -> Result<f64> {
    if rs.is_empty() {
        return Err(Error::InvalidInput("fisher_mean of no correlations".into()));
    }
    let mut acc = 0.0;
    for &r in rs {
        acc += stats::fisher_z(r.clamp(-MAX_ABS_R, MAX_ABS_R))?;
    }
    stats::fisher_z_inv(acc / rs.len() as f64)
}

fn pairwise_r(maps: &[&Array1<f64>]) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..maps.len() {
        for j in (i + 1)..maps.len() {
            out.push(pearson_view(maps[i].view(), maps[j].view())?);
        }
    }
    Ok(out)
}

/// label -> subject -> session maps, all ordered.
type Grouped<'a> = BTreeMap<&'a str, BTreeMap<&'a str, Vec<&'a Array1<f64>>>>;

fn group(maps: &[LabelledMap]) -> Result<Grouped<'_>> {
    let n = maps.first().map_or(0, |m| m.map.len());
    let mut out: Grouped<'_> = BTreeMap::new();
    for m in maps {
        if m.map.len() != n {
            return Err(Error::Shape(format!(
                "map {}/{}/{} has {} pixels, expected {n}",
                m.subject,
                m.session,
                m.label,
                m.map.len()
            )));
        }
        out.entry(m.label.as_str())
            .or_default()
            .entry(m.subject.as_str())
            .or_default()
            .push(&m.map.weights);
    }
    Ok(out)
}

fn subject_mean(maps: &[&Array1<f64>]) -> Array1<f64> {
    let mut acc = maps[0].clone();
    for m in &maps[1..] {
        acc += *m;
    }
    acc / maps.len() as f64
}

/// Per-label intra- and inter-subject spatial correlation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Reproducibility {
    pub labels: Vec<String>,
    /// Mean over subjects of the mean pairwise r between that subject's
    /// session maps; `None` when no subject has two sessions.
    pub intra: Vec<Option<f64>>,
    /// Mean pairwise r between subject-averaged maps; `None` with fewer
    /// than two subjects.
    pub inter: Vec<Option<f64>>,
}

/// Intra- and inter-subject reproducibility, Fisher-Z averaged.
pub fn reproducibility(maps: &[LabelledMap]) -> Result<Reproducibility> {
    let grouped = group(maps)?;
    let mut out = Reproducibility {
        labels: Vec::new(),
        intra: Vec::new(),
        inter: Vec::new(),
    };
    for (label, subjects) in &grouped {
        let mut per_subject = Vec::new();
        for sessions in subjects.values() {
            if sessions.len() >= 2 {
                per_subject.push(fisher_mean(&pairwise_r(sessions)?)?);
            }
        }
        let intra = if per_subject.is_empty() {
            None
        } else {
            Some(fisher_mean(&per_subject)?)
        };
        let means: Vec<Array1<f64>> = subjects.values().map(|s| subject_mean(s)).collect();
        let inter = if means.len() >= 2 {
            Some(fisher_mean(&pairwise_r(&means.iter().collect::<Vec<_>>())?)?)
        } else {
            None
        };
        out.labels.push(label.to_string());
        out.intra.push(intra);
        out.inter.push(inter);
    }
    if out.labels.is_empty() {
        return Err(Error::InvalidInput("reproducibility: no maps".into()));
    }
    if out.intra.iter().all(Option::is_none) && out.inter.iter().all(Option::is_none) {
        return Err(Error::InvalidInput(
            "reproducibility needs two sessions of one subject or two subjects".into(),
        ));
    }
    Ok(out)
}

/// Per-pixel variability of one network's maps.
#[derive(Clone, Debug, PartialEq)]
pub struct StdMaps {
    /// Sample sd across subject-mean maps.
    pub inter: Array1<f64>,
    /// Sample sd across sessions within each subject, averaged over the
    /// subjects with at least two sessions.
    pub intra: Array1<f64>,
}

fn pixel_sd(maps: &[&Array1<f64>]) -> Array1<f64> {
    let n = maps[0].len();
    let k = maps.len() as f64;
    Array1::from_shape_fn(n, |p| {
        let mean = maps.iter().map(|m| m[p]).sum::<f64>() / k;
        (maps.iter().map(|m| (m[p] - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
    })
}

/// Inter- and intra-subject standard deviation maps of the maps carrying
/// `label`.
pub fn std_maps(maps: &[LabelledMap], label: &str) -> Result<StdMaps> {
    let grouped = group(maps)?;
    let subjects = grouped
        .get(label)
        .ok_or_else(|| Error::InvalidInput(format!("std_maps: no maps labelled {label:?}")))?;
    if subjects.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "std_maps: {label:?} needs at least 2 subjects, got {}",
            subjects.len()
        )));
    }
    let means: Vec<Array1<f64>> = subjects.values().map(|s| subject_mean(s)).collect();
    let inter = pixel_sd(&means.iter().collect::<Vec<_>>());
    let within: Vec<Array1<f64>> = subjects.values().filter(|s| s.len() >= 2).map(|s| pixel_sd(s)).collect();
    if within.is_empty() {
        return Err(Error::InvalidInput(format!(
            "std_maps: {label:?} needs a subject with at least 2 sessions"
        )));
    }
    let intra = subject_mean(&within.iter().collect::<Vec<_>>());
    Ok(StdMaps { inter, intra })
}
