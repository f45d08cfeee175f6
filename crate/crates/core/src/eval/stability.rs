use serde::Serialize;

use crate::decompose::{ols_regress, MatchConfig, OlsConfig};
use crate::error::{Error, Result};
use crate::ica::{fastica, IcaConfig};
use crate::lstm::LstmAe;
use crate::preprocess::segment_epochs;
use crate::sbc::{seed_maps, SeedSpec, TemplateSet};
use crate::stats::{self, pearson_view};
use crate::types::{AtlasFrame, BrainMask, DataMatrix, SpatialMap};

/// A network identification method applied to one data matrix.
#[derive(Clone, Copy, Debug)]
pub enum Method<'a> {
    Sbc {
        mask: &'a BrainMask,
        frame: &'a AtlasFrame,
        seeds: &'a [SeedSpec],
    },
    Ica {
        config: IcaConfig,
    },
    LstmAer {
        model: &'a LstmAe,
        ols: OlsConfig,
    },
}

impl Method<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Sbc { .. } => "sbc",
            Method::Ica { .. } => "ica",
            Method::LstmAer { .. } => "lstm_aer",
        }
    }

    /// Spatial maps of `m`. Seed maps carry their seed names as labels.
    pub fn maps(&self, m: &DataMatrix) -> Result<Vec<SpatialMap>> {
        match self {
            Method::Sbc { mask, frame, seeds } => {
                Ok(seed_maps(m, mask, frame, seeds)?.into_iter().map(|s| s.map).collect())
            }
            Method::Ica { config } => Ok(fastica(m, config)?.sources),
            Method::LstmAer { model, ols } => ols_regress(m, &model.encode(m)?, ols),
        }
    }
}

/// Similarity of one set of maps to the reference: per reference label, the
/// map carrying that label if there is one, otherwise the best-scoring map;
/// averaged over labels.
pub fn reference_similarity(maps: &[SpatialMap], reference: &TemplateSet, matching: &MatchConfig) -> Result<f64> {
    if maps.is_empty() {
        return Err(Error::InvalidInput("no maps to compare with the reference".into()));
    }
    let mut scores = Vec::with_capacity(reference.maps.len());
    for t in &reference.maps {
        let label = t.label.as_deref();
        let score = |m: &SpatialMap| -> Result<f64> {
            if m.len() != t.len() {
                return Err(Error::Shape(format!(
                    "map has {} pixels, reference {label:?} has {}",
                    m.len(),
                    t.len()
                )));
            }
            let r = pearson_view(m.weights.view(), t.weights.view())?;
            Ok(if matching.abs { r.abs() } else { r })
        };
        let s = match maps.iter().find(|m| label.is_some() && m.label.as_deref() == label) {
            Some(m) => score(m)?,
            None => {
                let mut best = f64::NEG_INFINITY;
                for m in maps {
                    best = best.max(score(m)?);
                }
                best
            }
        };
        scores.push(s);
    }
    if scores.is_empty() {
        return Err(Error::InvalidInput("empty reference set".into()));
    }
    Ok(stats::mean(&scores))
}

/// Similarity to the reference at one epoch length.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityPoint {
    pub length_s: f64,
    pub frames: usize,
    pub epochs: usize,
    /// Mean over epochs; `None` when the length failed.
    pub mean_r: Option<f64>,
    /// Sample sd over epochs (0 with a single epoch).
    pub sd_r: Option<f64>,
    pub epoch_r: Vec<f64>,
    pub error: Option<String>,
}

fn evaluate_length(
    session: &DataMatrix,
    method: &Method<'_>,
    length_s: f64,
    reference: &TemplateSet,
    matching: &MatchConfig,
) -> Result<(usize, Vec<f64>)> {
    let epochs = segment_epochs(session, length_s)?;
    let frames = epochs[0].frames();
    let rs = epochs
        .iter()
        .map(|e| reference_similarity(&method.maps(e)?, reference, matching))
        .collect::<Result<Vec<_>>>()?;
    Ok((frames, rs))
}

/// Similarity of the method's maps to the reference maps for each epoch
/// length. Failures are recorded per length.
pub fn epoch_stability_curve(
    session: &DataMatrix,
    method: &Method<'_>,
    lengths_s: &[f64],
    reference: &TemplateSet,
    matching: &MatchConfig,
) -> Vec<StabilityPoint> {
    lengths_s
        .iter()
        .map(|&len| match evaluate_length(session, method, len, reference, matching) {
            Ok((frames, rs)) => StabilityPoint {
                length_s: len,
                frames,
                epochs: rs.len(),
                mean_r: Some(stats::mean(&rs)),
                sd_r: Some(if rs.len() > 1 { stats::sample_sd(&rs) } else { 0.0 }),
                epoch_r: rs,
                error: None,
            },
            Err(e) => {
                log::warn!("{} at {len} s: {e}", method.name());
                StabilityPoint {
                    length_s: len,
                    frames: 0,
                    epochs: 0,
                    mean_r: None,
                    sd_r: None,
                    epoch_r: Vec::new(),
                    error: Some(e.to_string()),
                }
            }
        })
        .collect()
}
