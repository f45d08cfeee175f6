//! Spatial maps from latent time courses, template matching and network
//! connectivity.
//!
//! Given a T×N session `X` and T×C latent time courses `Y`, the spatial maps
//! are the rows of `W = argmin ‖X − Y·W‖²`, solved through Householder QR
//! and z-scored per row. Each map is then named after the template it
//! correlates with most (signed Pearson by default).

use ndarray::{concatenate, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Qr;
use crate::lstm::LstmAe;
use crate::sbc::{TemplateSet, MAX_ABS_R};
use crate::stats::{self, pearson_view};
use crate::types::{BrainMask, DataMatrix, FcMatrix, LatentEmbedding, SpatialMap};

/// Column pairs correlated above this are reported as collinear.
pub const COLLINEAR_R: f64 = 1.0 - 1e-10;
/// Relative size of an R diagonal entry below which Y is rank deficient.
pub const RANK_TOL: f64 = 1e-10;
/// Ridge strength relative to `trace(YᵀY)`.
pub const RIDGE_SCALE: f64 = 1e-8;
/// Maps whose best template correlation is below this stay unmatched.
pub const DEFAULT_MATCH_FLOOR: f64 = 0.1;
/// Correlations within this of the best count as ties.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OlsConfig {
    /// Fall back to ridge regression when Y is rank deficient.
    pub ridge_fallback: bool,
}

fn pearson_or_none(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<Option<f64>> {
    match pearson_view(a, b) {
        Ok(r) => Ok(Some(r)),
        Err(Error::Degenerate(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// First column pair (in index order) whose |Pearson r| exceeds
/// [`COLLINEAR_R`].
fn collinear_pair(y: ArrayView2<'_, f64>) -> Result<Option<(usize, usize, f64)>> {
    let c = y.ncols();
    for i in 0..c {
        for j in (i + 1)..c {
            if let Some(r) = pearson_or_none(y.column(i), y.column(j))? {
                if r.abs() > COLLINEAR_R {
                    return Ok(Some((i, j, r)));
                }
            }
        }
    }
    Ok(None)
}

fn rank_error(y: ArrayView2<'_, f64>, qr: &Qr) -> Result<Error> {
    if let Some((i, j, r)) = collinear_pair(y)? {
        return Ok(Error::RankDeficient(format!(
            "latent columns {i} and {j} are collinear (r = {r:.12})"
        )));
    }
    let cols = qr.deficient_columns(RANK_TOL);
    Ok(Error::RankDeficient(format!(
        "latent columns {cols:?} are linear combinations of earlier columns"
    )))
}

/// Unstandardized least-squares weights, C×N.
pub fn ols_weights(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, cfg: &OlsConfig) -> Result<Array2<f64>> {
    let (t, c) = y.dim();
    if x.nrows() != t {
        return Err(Error::Shape(format!(
            "data has {} frames, latent time courses have {t}",
            x.nrows()
        )));
    }
    if t < c {
        return Err(Error::Shape(format!("regression needs T >= C, got T = {t}, C = {c}")));
    }
    if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Domain("regression inputs must be finite".into()));
    }
    let qr = Qr::new(y)?;
    let deficient = !qr.deficient_columns(RANK_TOL).is_empty() || collinear_pair(y)?.is_some();
    if !deficient {
        return qr.solve(x);
    }
    if !cfg.ridge_fallback {
        return Err(rank_error(y, &qr)?);
    }
    let trace: f64 = y.iter().map(|v| v * v).sum();
    let lambda = RIDGE_SCALE * trace.max(f64::MIN_POSITIVE);
    log::warn!("latent time courses are rank deficient; using ridge regression with lambda = {lambda:e}");
    let aug_y = concatenate![Axis(0), y, Array2::eye(c) * lambda.sqrt()];
    let aug_x = concatenate![Axis(0), x, Array2::zeros((c, x.ncols()))];
    Qr::new(aug_y.view())?.solve(aug_x.view())
}

/// Spatial maps of `x` for the latent time courses `y`: the z-scored rows of
/// the least-squares weights, labelled `latent{k}`.
pub fn ols_regress(x: &DataMatrix, y: &LatentEmbedding, cfg: &OlsConfig) -> Result<Vec<SpatialMap>> {
    let w = ols_weights(x.values(), y.values(), cfg)?;
    w.axis_iter(Axis(0))
        .enumerate()
        .map(|(k, row)| {
            stats::zscore_map(&row.to_vec())
                .map(|m| m.with_label(format!("latent{k}")))
                .map_err(|_| Error::Degenerate(format!("spatial map of latent column {k} is constant")))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatchConfig {
    /// Rank templates by |r| instead of signed r.
    pub abs: bool,
    /// Maps scoring below this are marked unmatched.
    pub floor: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            abs: false,
            floor: DEFAULT_MATCH_FLOOR,
        }
    }
}

/// Best template for one estimated map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapAssignment {
    pub map: usize,
    /// Best-scoring template label, even when unmatched.
    pub label: String,
    /// Signed Pearson r against that template.
    pub r: f64,
    pub matched: bool,
    /// Other labels within [`TIE_TOL`] of the best score.
    pub ties: Vec<String>,
}

/// Per-map template labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkAssignment {
    pub entries: Vec<MapAssignment>,
    pub config: MatchConfig,
}

impl NetworkAssignment {
    pub fn matched(&self) -> impl Iterator<Item = &MapAssignment> {
        self.entries.iter().filter(|e| e.matched)
    }

    /// Distinct matched labels, sorted.
    pub fn matched_labels(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.matched().map(|e| e.label.as_str()).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// For each matched label, the map with the highest score (lowest index
    /// on ties), in map order.
    pub fn representatives(&self) -> Vec<&MapAssignment> {
        let score = |e: &MapAssignment| if self.config.abs { e.r.abs() } else { e.r };
        let mut best: Vec<&MapAssignment> = Vec::new();
        for e in self.matched() {
            match best.iter_mut().find(|b| b.label == e.label) {
                Some(b) if score(e) > score(b) => *b = e,
                Some(_) => {}
                None => best.push(e),
            }
        }
        best.sort_by_key(|e| e.map);
        best
    }
}

/// Names every map after the template it correlates with most.
pub fn template_match(maps: &[SpatialMap], templates: &TemplateSet, cfg: &MatchConfig) -> Result<NetworkAssignment> {
    if templates.maps.is_empty() {
        return Err(Error::InvalidInput("template_match: empty template set".into()));
    }
    let mut order: Vec<(&str, &SpatialMap)> = templates
        .maps
        .iter()
        .map(|t| {
            t.label
                .as_deref()
                .map(|l| (l, t))
                .ok_or_else(|| Error::InvalidInput("template without a label".into()))
        })
        .collect::<Result<_>>()?;
    order.sort_by(|a, b| a.0.cmp(b.0));

    let mut entries = Vec::with_capacity(maps.len());
    for (i, m) in maps.iter().enumerate() {
        let mut scored = Vec::with_capacity(order.len());
        for &(label, t) in &order {
            if let (Some(a), Some(b)) = (m.mask, t.mask) {
                if a != b {
                    return Err(Error::Shape(format!(
                        "map {i} and template {label:?} are defined over different masks"
                    )));
                }
            }
            if m.len() != t.len() {
                return Err(Error::Shape(format!(
                    "map {i} has {} pixels, template {label:?} has {}",
                    m.len(),
                    t.len()
                )));
            }
            let r = pearson_or_none(m.weights.view(), t.weights.view())?.unwrap_or(0.0);
            scored.push((label, r, if cfg.abs { r.abs() } else { r }));
        }
        let (mut best, mut best_score) = (0, scored[0].2);
        for (k, s) in scored.iter().enumerate().skip(1) {
            if s.2 > best_score + TIE_TOL {
                best = k;
                best_score = s.2;
            }
        }
        let ties: Vec<String> = scored
            .iter()
            .enumerate()
            .filter(|&(k, s)| k != best && (s.2 - best_score).abs() <= TIE_TOL)
            .map(|(_, s)| s.0.to_string())
            .collect();
        if !ties.is_empty() {
            log::info!("map {i}: tie between {:?} and {ties:?}, kept {:?}", scored[best].0, scored[best].0);
        }
        entries.push(MapAssignment {
            map: i,
            label: scored[best].0.to_string(),
            r: scored[best].1,
            matched: best_score >= cfg.floor,
            ties,
        });
    }
    Ok(NetworkAssignment {
        entries,
        config: *cfg,
    })
}

/// Pearson correlation between the time courses of the matched networks.
/// When several maps share a label the best-scoring one is used; rows follow
/// map order.
pub fn fnc_matrix(y: &LatentEmbedding, assignment: &NetworkAssignment) -> Result<FcMatrix> {
    let reps = assignment.representatives();
    if reps.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "network connectivity needs at least 2 matched networks, got {}",
            reps.len()
        )));
    }
    let yv = y.values();
    if let Some(e) = reps.iter().find(|e| e.map >= yv.ncols()) {
        return Err(Error::Shape(format!(
            "assignment refers to map {} but there are {} time courses",
            e.map,
            yv.ncols()
        )));
    }
    let k = reps.len();
    let mut out = Array2::<f64>::eye(k);
    for i in 0..k {
        for j in (i + 1)..k {
            let r = pearson_view(yv.column(reps[i].map), yv.column(reps[j].map)).map_err(|e| match e {
                Error::Degenerate(_) => Error::Degenerate(format!(
                    "time course of network {:?} (map {}) is constant",
                    reps[i].label, reps[i].map
                )),
                other => other,
            })?;
            out[(i, j)] = r;
            out[(j, i)] = r;
        }
    }
    FcMatrix::new(reps.iter().map(|e| e.label.clone()).collect(), out)
}

/// Fisher-Z group average of per-session connectivity matrices over the
/// labels every matrix shares, in sorted label order.
pub fn group_fnc(mats: &[FcMatrix]) -> Result<FcMatrix> {
    let first = mats
        .first()
        .ok_or_else(|| Error::InvalidInput("group_fnc: no matrices".into()))?;
    let mut labels: Vec<String> = first
        .labels
        .iter()
        .filter(|l| mats.iter().all(|m| m.labels.contains(l)))
        .cloned()
        .collect();
    labels.sort();
    if labels.len() < 2 {
        return Err(Error::InvalidInput("group_fnc: fewer than 2 shared networks".into()));
    }
    let aligned = mats
        .iter()
        .map(|m| {
            let vals = Array2::from_shape_fn((labels.len(), labels.len()), |(i, j)| {
                let v = m.get(&labels[i], &labels[j]).expect("shared label");
                if i == j {
                    v
                } else {
                    v.clamp(-MAX_ABS_R, MAX_ABS_R)
                }
            });
            FcMatrix::new(labels.clone(), vals)
        })
        .collect::<Result<Vec<_>>>()?;
    stats::group_average_fc(&aligned)
}

/// Output of [`lstm_aer_pipeline`].
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOutput {
    pub embedding: LatentEmbedding,
    pub maps: Vec<SpatialMap>,
    pub assignment: NetworkAssignment,
    pub fnc: FcMatrix,
}

/// Encode, regress, match and correlate one session.
pub fn lstm_aer_pipeline(
    session: &DataMatrix,
    mask: &BrainMask,
    model: &LstmAe,
    templates: &TemplateSet,
    ols: &OlsConfig,
    matching: &MatchConfig,
) -> Result<PipelineOutput> {
    if session.pixels() != mask.count() {
        return Err(Error::Shape(format!(
            "session has {} pixels, mask has {}",
            session.pixels(),
            mask.count()
        )));
    }
    let embedding = model.encode(session)?;
    let maps: Vec<SpatialMap> = ols_regress(session, &embedding, ols)?
        .into_iter()
        .map(|m| m.with_mask(mask.id()))
        .collect();
    let assignment = template_match(&maps, templates, matching)?;
    let fnc = fnc_matrix(&embedding, &assignment)?;
    Ok(PipelineOutput {
        embedding,
        maps,
        assignment,
        fnc,
    })
}
