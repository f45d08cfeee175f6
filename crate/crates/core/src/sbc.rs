//! Seed-based correlation: seed traces, seed maps, FC matrices between
//! seeds, and group-average templates.

use std::collections::BTreeMap;

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{fisher_z, pearson};
use crate::synth::SynthSpec;
use crate::types::{AtlasFrame, BrainMask, DataMatrix, FcMatrix, SpatialMap};

pub const DEFAULT_SEED_DIAMETER_MM: f64 = 0.5;

/// Correlations are clamped to this magnitude before the Fisher transform,
/// so a pixel identical to the seed trace gets a large finite z.
pub const MAX_ABS_R: f64 = 1.0 - 1e-12;

fn default_diameter() -> f64 {
    DEFAULT_SEED_DIAMETER_MM
}

/// A circular seed region in atlas millimetres relative to bregma
/// (`x` lateral, positive towards larger columns; `y` anterior).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSpec {
    pub name: String,
    pub center_mm: [f64; 2],
    #[serde(default = "default_diameter")]
    pub diameter_mm: f64,
}

impl SeedSpec {
    pub fn new(name: impl Into<String>, x_mm: f64, y_mm: f64) -> Self {
        SeedSpec {
            name: name.into(),
            center_mm: [x_mm, y_mm],
            diameter_mm: DEFAULT_SEED_DIAMETER_MM,
        }
    }

    /// Brain-pixel columns whose centres lie inside the seed disc.
    pub fn pixels(&self, mask: &BrainMask, frame: &AtlasFrame) -> Result<Vec<usize>> {
        if !(self.diameter_mm > 0.0) {
            return Err(Error::InvalidInput(format!(
                "seed {}: diameter must be > 0, got {}",
                self.name, self.diameter_mm
            )));
        }
        let c = frame.mm_to_px(self.center_mm[0], self.center_mm[1]);
        let radius = self.diameter_mm / 2.0 / frame.pixel_pitch_mm;
        let r2 = radius * radius * (1.0 + 1e-12);
        let px: Vec<usize> = (0..mask.count())
            .filter(|&p| {
                let (row, col) = mask.coords(p);
                let (dx, dy) = (col as f64 - c.x, row as f64 - c.y);
                dx * dx + dy * dy <= r2
            })
            .collect();
        if px.is_empty() {
            return Err(Error::InvalidInput(format!(
                "seed {} at ({}, {}) mm covers no brain pixels",
                self.name, self.center_mm[0], self.center_mm[1]
            )));
        }
        Ok(px)
    }
}

/// Checks that seed names are unique and diameters positive.
pub fn validate_seeds(seeds: &[SeedSpec]) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for s in seeds {
        if !seen.insert(s.name.as_str()) {
            return Err(Error::InvalidInput(format!("duplicate seed name {}", s.name)));
        }
        if !(s.diameter_mm > 0.0) {
            return Err(Error::InvalidInput(format!("seed {}: diameter must be > 0", s.name)));
        }
    }
    Ok(())
}

/// Placeholder bilateral seed table (five cortical areas, both
/// hemispheres). Coordinates are rough and meant to be overridden.
pub fn default_seeds() -> Vec<SeedSpec> {
    let areas = [
        ("motor", 1.5, 1.0),
        ("somatosensory", 3.0, -1.0),
        ("retrosplenial", 0.5, -2.5),
        ("visual", 2.5, -3.5),
        ("auditory", 4.0, -2.5),
    ];
    areas
        .iter()
        .flat_map(|&(name, x, y)| {
            [
                SeedSpec::new(format!("{name}_L"), -x, y),
                SeedSpec::new(format!("{name}_R"), x, y),
            ]
        })
        .collect()
}

/// One seed per synthetic source, at the canonical left blob centre and
/// named after the source label.
pub fn synth_seeds(spec: &SynthSpec) -> Result<Vec<SeedSpec>> {
    let frame = spec.atlas_frame()?;
    Ok(spec
        .left_centers()
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let x_mm = (c.x - frame.bregma_px.x) * frame.pixel_pitch_mm;
            let y_mm = (frame.bregma_px.y - c.y) * frame.pixel_pitch_mm;
            SeedSpec::new(SynthSpec::source_label(k), x_mm, y_mm)
        })
        .collect())
}

/// Mean trace over the seed's pixels.
pub fn seed_trace(m: &DataMatrix, mask: &BrainMask, frame: &AtlasFrame, seed: &SeedSpec) -> Result<Array1<f64>> {
    if m.pixels() != mask.count() {
        return Err(Error::Shape(format!(
            "matrix has {} pixels, mask has {}",
            m.pixels(),
            mask.count()
        )));
    }
    let px = seed.pixels(mask, frame)?;
    let x = m.values();
    let mut acc = Array1::zeros(m.frames());
    for &p in &px {
        acc += &x.column(p);
    }
    Ok(acc / px.len() as f64)
}

/// Pearson r of every column with `trace`; `None` for zero-variance columns.
pub fn pixel_correlations(x: ArrayView2<'_, f64>, trace: ArrayView1<'_, f64>) -> Result<Vec<Option<f64>>> {
    let t = x.nrows();
    if trace.len() != t {
        return Err(Error::Shape(format!("trace has {} frames, matrix has {t}", trace.len())));
    }
    let tm = trace.mean().unwrap_or(0.0);
    let tc = trace.mapv(|v| v - tm);
    let tss = tc.dot(&tc);
    if !(tss > 1e-24 * trace.dot(&trace)) || tss == 0.0 {
        return Err(Error::Degenerate("seed trace has zero variance".into()));
    }
    let means = x.mean_axis(Axis(0)).expect("non-empty");
    let cross = tc.dot(&x);
    Ok(x.axis_iter(Axis(1))
        .enumerate()
        .map(|(p, col)| {
            let mu = means[p];
            let (ss, raw) = col.iter().fold((0.0, 0.0), |(ss, raw), v| {
                ((ss + (v - mu) * (v - mu)), raw + v * v)
            });
            if ss <= 1e-24 * raw || ss == 0.0 {
                None
            } else {
                Some((cross[p] / (ss.sqrt() * tss.sqrt())).clamp(-1.0, 1.0))
            }
        })
        .collect())
}

/// A seed map plus the indices of pixels with zero temporal variance.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedMap {
    pub map: SpatialMap,
    pub zero_variance: Vec<usize>,
}

/// Per-pixel r with the trace, Fisher-Z transformed, then z-scored across
/// pixels. Zero-variance pixels are left out of the z-scoring statistics
/// and set to 0.
pub fn seed_map(m: &DataMatrix, trace: ArrayView1<'_, f64>) -> Result<SeedMap> {
    let rs = pixel_correlations(m.values(), trace)?;
    let zero_variance: Vec<usize> = rs.iter().enumerate().filter(|(_, r)| r.is_none()).map(|(p, _)| p).collect();
    let z: Vec<Option<f64>> = rs
        .iter()
        .map(|r| r.map(|r| fisher_z(r.clamp(-MAX_ABS_R, MAX_ABS_R))).transpose())
        .collect::<Result<_>>()?;
    let weights = zscore_partial(&z)?;
    Ok(SeedMap {
        map: SpatialMap {
            weights,
            label: None,
            mask: None,
        },
        zero_variance,
    })
}

/// Z-scores the present entries; absent entries become 0.
fn zscore_partial(v: &[Option<f64>]) -> Result<Array1<f64>> {
    let present: Vec<f64> = v.iter().flatten().copied().collect();
    if present.is_empty() {
        return Err(Error::Degenerate("every pixel has zero variance".into()));
    }
    let n = present.len() as f64;
    let mean = present.iter().sum::<f64>() / n;
    let sd = (present.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
    let scale = present.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if !(sd > 1e-12 * scale) || sd == 0.0 {
        return Err(Error::Degenerate("seed map is constant across pixels".into()));
    }
    Ok(v.iter().map(|x| x.map_or(0.0, |x| (x - mean) / sd)).collect())
}

/// Seed maps for every seed, labelled with the seed names.
pub fn seed_maps(m: &DataMatrix, mask: &BrainMask, frame: &AtlasFrame, seeds: &[SeedSpec]) -> Result<Vec<SeedMap>> {
    validate_seeds(seeds)?;
    seeds
        .iter()
        .map(|s| {
            let tr = seed_trace(m, mask, frame, s)?;
            let mut sm = seed_map(m, tr.view())?;
            sm.map = sm.map.with_label(s.name.clone()).with_mask(mask.id());
            Ok(sm)
        })
        .collect()
}

/// Pairwise Pearson correlation of seed traces.
pub fn fc_matrix(m: &DataMatrix, seeds: &[SeedSpec], mask: &BrainMask, frame: &AtlasFrame) -> Result<FcMatrix> {
    if seeds.len() < 2 {
        return Err(Error::InvalidInput(format!("fc_matrix needs at least 2 seeds, got {}", seeds.len())));
    }
    let traces = seeds
        .iter()
        .map(|s| seed_trace(m, mask, frame, s))
        .collect::<Result<Vec<_>>>()?;
    let k = seeds.len();
    let mut out = ndarray::Array2::<f64>::eye(k);
    for i in 0..k {
        for j in (i + 1)..k {
            let r = pearson(
                traces[i].as_slice().expect("contiguous"),
                traces[j].as_slice().expect("contiguous"),
            )
            .map_err(|e| Error::Degenerate(format!("seeds {} / {}: {e}", seeds[i].name, seeds[j].name)))?;
            out[(i, j)] = r;
            out[(j, i)] = r;
        }
    }
    FcMatrix::new(seeds.iter().map(|s| s.name.clone()).collect(), out)
}

/// Group-average seed maps with the (subject, session) pairs they came from.
#[derive(Clone, Debug, PartialEq)]
pub struct TemplateSet {
    pub maps: Vec<SpatialMap>,
    pub provenance: Vec<(String, String)>,
}

impl TemplateSet {
    pub fn labels(&self) -> Vec<&str> {
        self.maps.iter().map(|m| m.label.as_deref().unwrap_or("")).collect()
    }

    pub fn get(&self, label: &str) -> Option<&SpatialMap> {
        self.maps.iter().find(|m| m.label.as_deref() == Some(label))
    }
}

/// A session's per-label maps, tagged with subject and session ids.
#[derive(Clone, Debug)]
pub struct SessionMaps {
    pub subject_id: String,
    pub session_id: String,
    pub maps: Vec<SpatialMap>,
}

/// Averages maps within each subject, then across subjects, and z-scores
/// the result, per label. Every subject must provide every label.
pub fn build_templates(sessions: &[SessionMaps]) -> Result<TemplateSet> {
    let first = sessions
        .first()
        .ok_or_else(|| Error::InvalidInput("build_templates: no sessions".into()))?;
    let labels: Vec<String> = first
        .maps
        .iter()
        .map(|m| m.label.clone().ok_or_else(|| Error::InvalidInput("unlabelled seed map".into())))
        .collect::<Result<_>>()?;
    let n = first.maps[0].len();

    // subject -> label -> (sum, count)
    let mut by_subject: BTreeMap<&str, BTreeMap<&str, (Array1<f64>, usize)>> = BTreeMap::new();
    for s in sessions {
        let entry = by_subject.entry(s.subject_id.as_str()).or_default();
        for m in &s.maps {
            let label = m.label.as_deref().ok_or_else(|| Error::InvalidInput("unlabelled seed map".into()))?;
            if m.len() != n {
                return Err(Error::Shape(format!(
                    "map {label} of {}/{} has {} pixels, expected {n}",
                    s.subject_id,
                    s.session_id,
                    m.len()
                )));
            }
            let slot = entry.entry(label).or_insert_with(|| (Array1::zeros(n), 0));
            slot.0 += &m.weights;
            slot.1 += 1;
        }
    }
    let mut maps = Vec::with_capacity(labels.len());
    for label in &labels {
        let mut acc = Array1::<f64>::zeros(n);
        for (subject, per_label) in &by_subject {
            let (sum, count) = per_label.get(label.as_str()).ok_or_else(|| {
                Error::InvalidInput(format!("subject {subject} has no map for label {label}"))
            })?;
            acc += &(sum / *count as f64);
        }
        acc /= by_subject.len() as f64;
        let z: Vec<Option<f64>> = acc.iter().map(|&v| Some(v)).collect();
        let mut map = SpatialMap {
            weights: zscore_partial(&z)?,
            label: Some(label.clone()),
            mask: first.maps[0].mask,
        };
        if map.weights.iter().any(|v| !v.is_finite()) {
            map.weights.mapv_inplace(|v| if v.is_finite() { v } else { 0.0 });
        }
        maps.push(map);
    }
    let mut provenance: Vec<(String, String)> = sessions
        .iter()
        .map(|s| (s.subject_id.clone(), s.session_id.clone()))
        .collect();
    provenance.sort();
    Ok(TemplateSet { maps, provenance })
}

/// Seed maps for each session, then [`build_templates`].
pub fn templates_from_sessions<'a>(
    sessions: impl IntoIterator<Item = (&'a str, &'a str, &'a DataMatrix)>,
    mask: &BrainMask,
    frame: &AtlasFrame,
    seeds: &[SeedSpec],
) -> Result<TemplateSet> {
    let maps = sessions
        .into_iter()
        .map(|(subject, session, m)| {
            Ok(SessionMaps {
                subject_id: subject.to_string(),
                session_id: session.to_string(),
                maps: seed_maps(m, mask, frame, seeds)?.into_iter().map(|s| s.map).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    build_templates(&maps)
}
