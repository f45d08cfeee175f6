//! Seeded generator of synthetic multi-subject cohorts with known sources.
//!
//! Each session matrix is
//!
//! ```text
//! X = traces · blobsᵀ + global_amp · (global ⊗ 1) + noise
//! ```
//!
//! where every source is a pair of Gaussian blobs mirrored across the
//! vertical midline, traces are unit-variance AR(1) processes (coefficient
//! 0.9, Laplace innovations) and noise is i.i.d. Gaussian with standard
//! deviation `noise_sd` relative to the unit blob peak and unit trace
//! variance. Each subject displaces every blob by a fixed random offset
//! (`subject_jitter` pixels standard deviation per axis).

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::Role;
use crate::stats::{self, pearson_view};
use crate::types::{AtlasFrame, BrainMask, DataMatrix, Point, SpatialMap, DEFAULT_FPS, DEFAULT_PIXEL_PITCH_MM};

/// AR(1) coefficient of source and global time courses.
pub const AR_COEFFICIENT: f64 = 0.9;
const BURN_IN: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskShape {
    /// Ellipse inscribed in the frame, symmetric about the midline column.
    Ellipse,
    /// Every pixel of the frame.
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub height: usize,
    pub width: usize,
    pub sources: usize,
    pub subjects: usize,
    pub sessions_per_subject: usize,
    pub frames: usize,
    pub fps: f64,
    pub noise_sd: f64,
    pub global_amp: f64,
    pub subject_jitter: f64,
    /// Blob standard deviation in pixels; `None` means `height / 20`.
    pub blob_sigma: Option<f64>,
    pub mask_shape: MaskShape,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            height: 64,
            width: 64,
            sources: 8,
            subjects: 6,
            sessions_per_subject: 3,
            frames: 1024,
            fps: DEFAULT_FPS,
            noise_sd: 0.2,
            global_amp: 0.5,
            subject_jitter: 1.5,
            blob_sigma: None,
            mask_shape: MaskShape::Ellipse,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn sigma(&self) -> f64 {
        self.blob_sigma.unwrap_or(self.height as f64 / 20.0)
    }

    fn validate(&self) -> Result<()> {
        let counts = [
            ("height", self.height),
            ("width", self.width),
            ("sources", self.sources),
            ("subjects", self.subjects),
            ("sessions_per_subject", self.sessions_per_subject),
        ];
        for (name, v) in counts {
            if v < 1 {
                return Err(Error::InvalidInput(format!("synth: {name} must be >= 1")));
            }
        }
        if self.frames < 2 {
            return Err(Error::InvalidInput("synth: frames must be >= 2".into()));
        }
        if !(self.noise_sd >= 0.0) || !(self.global_amp >= 0.0) || !(self.subject_jitter >= 0.0) {
            return Err(Error::InvalidInput(
                "synth: noise_sd, global_amp and subject_jitter must be >= 0".into(),
            ));
        }
        if !(self.fps > 0.0) || !(self.sigma() > 0.0) {
            return Err(Error::InvalidInput("synth: fps and blob sigma must be > 0".into()));
        }
        Ok(())
    }

    /// Midline column (the mask is mirror-symmetric about it).
    pub fn midline(&self) -> f64 {
        (self.width / 2) as f64
    }

    pub fn mask(&self) -> Result<BrainMask> {
        match self.mask_shape {
            MaskShape::Full => BrainMask::full(self.height, self.width),
            MaskShape::Ellipse => {
                let cx = self.midline();
                let cy = (self.height / 2) as f64;
                let rx = cx - 1.0;
                let ry = cy - 1.0;
                if rx <= 0.0 || ry <= 0.0 {
                    return Err(Error::InvalidInput("synth: frame too small for an elliptic mask".into()));
                }
                BrainMask::from_fn(self.height, self.width, |r, c| {
                    let dx = (c as f64 - cx) / rx;
                    let dy = (r as f64 - cy) / ry;
                    dx * dx + dy * dy <= 1.0
                })
            }
        }
    }

    /// Canonical left-hemisphere blob centers, one per source.
    pub fn left_centers(&self) -> Vec<Point> {
        let g = self.sources;
        let n_cols = ((g as f64 / 2.0).sqrt().round() as usize).max(1);
        let n_rows = g.div_ceil(n_cols);
        let cx = self.midline();
        let cy = (self.height / 2) as f64;
        let rx = cx - 1.0;
        let ry = cy - 1.0;
        (0..g)
            .map(|k| {
                let (row, col) = (k / n_cols, k % n_cols);
                let fx = 0.25 + 0.5 * (col as f64 + 0.5) / n_cols as f64;
                let fy = -0.7 + 1.4 * (row as f64 + 0.5) / n_rows as f64;
                Point::new(cx - rx * fx, cy + ry * fy)
            })
            .collect()
    }

    /// Atlas geometry of the synthetic frame: bregma on the midline a
    /// quarter of the way down, lambda three quarters down.
    pub fn atlas_frame(&self) -> Result<AtlasFrame> {
        let cx = self.midline();
        AtlasFrame::new(
            DEFAULT_PIXEL_PITCH_MM,
            Point::new(cx, self.height as f64 * 0.25),
            Point::new(cx, self.height as f64 * 0.75),
        )
    }

    pub fn source_label(k: usize) -> String {
        format!("net{k:02}")
    }
}

/// Known sources and time courses of a generated cohort.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    /// Canonical (unjittered) z-scored source maps.
    pub sources: Vec<SpatialMap>,
    /// Per-subject z-scored source maps (jittered blobs).
    pub subject_sources: Vec<Vec<SpatialMap>>,
    /// Per-session T×G source time courses, in session order.
    pub traces: Vec<Array2<f64>>,
    /// Per-session global time course.
    pub global_traces: Vec<Array1<f64>>,
    /// Canonical left-hemisphere blob centers.
    pub centers: Vec<Point>,
}

#[derive(Clone, Debug)]
pub struct SynthSession {
    pub subject: usize,
    pub session: usize,
    pub subject_id: String,
    pub session_id: String,
    pub role: Role,
    pub matrix: DataMatrix,
}

#[derive(Clone, Debug)]
pub struct Cohort {
    pub spec: SynthSpec,
    pub mask: BrainMask,
    pub sessions: Vec<SynthSession>,
    pub truth: GroundTruth,
}

impl Cohort {
    /// Ground-truth maps for the subject of session `i`.
    pub fn session_truth(&self, i: usize) -> &[SpatialMap] {
        &self.truth.subject_sources[self.sessions[i].subject]
    }

    pub fn sessions_with_role(&self, role: Role) -> impl Iterator<Item = &SynthSession> {
        self.sessions.iter().filter(move |s| s.role == role)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent RNG stream keyed by the cohort seed and a tag path.
pub fn stream_rng(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let key = tags.iter().fold(splitmix(seed), |acc, &t| splitmix(acc ^ splitmix(t)));
    ChaCha8Rng::seed_from_u64(key)
}

fn laplace(rng: &mut impl Rng) -> f64 {
    // inverse CDF, unit scale
    let u: f64 = rng.random_range(-0.5..0.5);
    -u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Unit-variance, zero-mean AR(1) series.
fn ar1_series(frames: usize, rng: &mut impl Rng, laplace_innovations: bool) -> Array1<f64> {
    let mut x = 0.0;
    let mut out = Vec::with_capacity(frames);
    for t in 0..frames + BURN_IN {
        let e = if laplace_innovations {
            laplace(rng)
        } else {
            StandardNormal.sample(rng)
        };
        x = AR_COEFFICIENT * x + e;
        if t >= BURN_IN {
            out.push(x);
        }
    }
    let m = stats::mean(&out);
    let sd = stats::population_sd(&out);
    let sd = if sd > 0.0 { sd } else { 1.0 };
    out.iter().map(|v| (v - m) / sd).collect()
}

fn blob_pair(mask: &BrainMask, left: Point, right: Point, sigma: f64) -> Array1<f64> {
    let two_s2 = 2.0 * sigma * sigma;
    (0..mask.count())
        .map(|p| {
            let (r, c) = mask.coords(p);
            let (x, y) = (c as f64, r as f64);
            let d = |q: Point| ((x - q.x).powi(2) + (y - q.y).powi(2)) / two_s2;
            (-d(left)).exp() + (-d(right)).exp()
        })
        .collect()
}

fn check_bounds(spec: &SynthSpec, p: Point) -> Result<()> {
    let radius = 3.0 * spec.sigma();
    let (w, h) = ((spec.width - 1) as f64, (spec.height - 1) as f64);
    if p.x - radius < 0.0 || p.x + radius > w || p.y - radius < 0.0 || p.y + radius > h {
        return Err(Error::InvalidInput(format!(
            "synth: blob at ({:.2}, {:.2}) with radius {radius:.2} px exceeds the {}x{} frame",
            p.x, p.y, spec.height, spec.width
        )));
    }
    Ok(())
}

fn role_for(session: usize, sessions: usize) -> Role {
    match sessions - session {
        1 if sessions >= 2 => Role::Test,
        2 if sessions >= 3 => Role::Val,
        _ => Role::Train,
    }
}

fn zscored(raw: &Array1<f64>, label: String, mask: &BrainMask) -> Result<SpatialMap> {
    Ok(stats::zscore_map(raw.as_slice().expect("contiguous"))?
        .with_label(label)
        .with_mask(mask.id()))
}

/// Generates a cohort. A pure function of `spec`.
pub fn generate(spec: &SynthSpec) -> Result<Cohort> {
    spec.validate()?;
    let mask = spec.mask()?;
    let sigma = spec.sigma();
    let centers = spec.left_centers();
    let mirror = |p: Point| Point::new(2.0 * spec.midline() - p.x, p.y);
    for &c in &centers {
        check_bounds(spec, c)?;
        check_bounds(spec, mirror(c))?;
    }

    let canonical: Vec<Array1<f64>> = centers
        .iter()
        .map(|&c| blob_pair(&mask, c, mirror(c), sigma))
        .collect();
    let sources = canonical
        .iter()
        .enumerate()
        .map(|(k, b)| zscored(b, SynthSpec::source_label(k), &mask))
        .collect::<Result<Vec<_>>>()?;

    let n = mask.count();
    let g = spec.sources;
    let mut subject_blobs = Vec::with_capacity(spec.subjects);
    let mut subject_sources = Vec::with_capacity(spec.subjects);
    for s in 0..spec.subjects {
        let mut rng = stream_rng(spec.seed, &[1, s as u64]);
        let mut blobs = Array2::zeros((g, n));
        let mut maps = Vec::with_capacity(g);
        for (k, &c) in centers.iter().enumerate() {
            let mut jitter = || -> f64 {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * spec.subject_jitter
            };
            let left = Point::new(c.x + jitter(), c.y + jitter());
            let m = mirror(c);
            let right = Point::new(m.x + jitter(), m.y + jitter());
            let b = blob_pair(&mask, left, right, sigma);
            maps.push(zscored(&b, SynthSpec::source_label(k), &mask)?);
            blobs.row_mut(k).assign(&b);
        }
        subject_blobs.push(blobs);
        subject_sources.push(maps);
    }

    let t = spec.frames;
    let mut sessions = Vec::new();
    let mut traces = Vec::new();
    let mut global_traces = Vec::new();
    for s in 0..spec.subjects {
        for r in 0..spec.sessions_per_subject {
            let mut rng = stream_rng(spec.seed, &[2, s as u64, r as u64]);
            let mut tr = Array2::zeros((t, g));
            for k in 0..g {
                tr.column_mut(k).assign(&ar1_series(t, &mut rng, true));
            }
            let global = ar1_series(t, &mut rng, false);
            let mut x = tr.dot(&subject_blobs[s]);
            if spec.global_amp > 0.0 {
                x += &(global.view().insert_axis(Axis(1)).to_owned() * spec.global_amp);
            }
            if spec.noise_sd > 0.0 {
                x.mapv_inplace(|v| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    v + spec.noise_sd * z
                });
            }
            sessions.push(SynthSession {
                subject: s,
                session: r,
                subject_id: format!("sub{s:02}"),
                session_id: format!("ses{r:02}"),
                role: role_for(r, spec.sessions_per_subject),
                matrix: DataMatrix::new(x, spec.fps)?,
            });
            traces.push(tr);
            global_traces.push(global);
        }
    }

    Ok(Cohort {
        spec: spec.clone(),
        mask,
        sessions,
        truth: GroundTruth {
            sources,
            subject_sources,
            traces,
            global_traces,
            centers,
        },
    })
}

/// `X = A·S + noise_sd·E` with `sources` i.i.d. unit Laplace spatial maps
/// over `pixels`, standard normal time courses over `frames` and Gaussian
/// noise. Returns the data and the z-scored true maps.
pub fn laplace_mixture(
    sources: usize,
    pixels: usize,
    frames: usize,
    noise_sd: f64,
    seed: u64,
) -> Result<(DataMatrix, Vec<SpatialMap>)> {
    if sources == 0 || pixels < 2 || frames < 2 {
        return Err(Error::InvalidInput("laplace_mixture: empty dimensions".into()));
    }
    let mut rng = stream_rng(seed, &[3]);
    let s = Array2::from_shape_fn((sources, pixels), |_| laplace(&mut rng));
    let a = Array2::from_shape_fn((frames, sources), |_| StandardNormal.sample(&mut rng));
    let mut x = a.dot(&s);
    if noise_sd > 0.0 {
        x.mapv_inplace(|v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            v + noise_sd * z
        });
    }
    let truth = s
        .axis_iter(Axis(0))
        .enumerate()
        .map(|(k, row)| Ok(stats::zscore_map(&row.to_vec())?.with_label(SynthSpec::source_label(k))))
        .collect::<Result<Vec<_>>>()?;
    Ok((DataMatrix::new(x, DEFAULT_FPS)?, truth))
}

/// Result of matching estimated maps to ground-truth sources.
#[derive(Clone, Debug, PartialEq)]
pub struct TruthMatch {
    /// (estimated index, truth index, signed r), in assignment order.
    pub pairs: Vec<(usize, usize, f64)>,
    pub mean_abs_r: f64,
}

impl TruthMatch {
    /// Number of distinct ground-truth sources with an assigned map.
    pub fn matched_sources(&self) -> usize {
        self.pairs.len()
    }
}

/// Greedy one-to-one assignment of estimated maps to truth maps by
/// decreasing |r| (sign-agnostic).
pub fn ground_truth_match(estimated: &[SpatialMap], truth: &[SpatialMap]) -> Result<TruthMatch> {
    if estimated.is_empty() {
        return Err(Error::InvalidInput("ground_truth_match: no estimated maps".into()));
    }
    if truth.is_empty() {
        return Err(Error::InvalidInput("ground_truth_match: no truth maps".into()));
    }
    let mut cands = Vec::with_capacity(estimated.len() * truth.len());
    for (i, e) in estimated.iter().enumerate() {
        for (j, t) in truth.iter().enumerate() {
            let r = pearson_view(e.weights.view(), t.weights.view())?;
            cands.push((i, j, r));
        }
    }
    cands.sort_by(|a, b| b.2.abs().total_cmp(&a.2.abs()).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let mut used_e = vec![false; estimated.len()];
    let mut used_t = vec![false; truth.len()];
    let mut pairs = Vec::new();
    for (i, j, r) in cands {
        if !used_e[i] && !used_t[j] {
            used_e[i] = true;
            used_t[j] = true;
            pairs.push((i, j, r));
        }
    }
    let mean_abs_r = pairs.iter().map(|p| p.2.abs()).sum::<f64>() / pairs.len() as f64;
    Ok(TruthMatch { pairs, mean_abs_r })
}
