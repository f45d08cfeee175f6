//! Domain types shared by every pipeline stage.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default acquisition frame rate (frames per second, per channel).
pub const DEFAULT_FPS: f64 = 16.8;

/// Default pixel pitch in millimetres.
pub const DEFAULT_PIXEL_PITCH_MM: f64 = 0.078;

/// A T×N matrix of frames × brain pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct DataMatrix {
    values: Array2<f64>,
    fps: f64,
}

impl DataMatrix {
    pub fn new(values: Array2<f64>, fps: f64) -> Result<Self> {
        let (t, n) = values.dim();
        if t < 2 {
            return Err(Error::InvalidInput(format!(
                "data matrix needs at least 2 frames, got {t}"
            )));
        }
        if n < 1 {
            return Err(Error::InvalidInput("data matrix has no pixels".into()));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::InvalidInput(format!("fps must be positive, got {fps}")));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value at frame {}, pixel {}",
                pos / n,
                pos % n
            )));
        }
        Ok(DataMatrix { values, fps })
    }

    pub fn frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn pixels(&self) -> usize {
        self.values.ncols()
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    /// Duration in seconds.
    pub fn duration(&self) -> f64 {
        self.frames() as f64 / self.fps
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    /// Time course of one pixel.
    pub fn pixel(&self, p: usize) -> ArrayView1<'_, f64> {
        self.values.column(p)
    }

    /// Returns a matrix with the same frame rate and new values.
    pub fn with_values(&self, values: Array2<f64>) -> Result<Self> {
        DataMatrix::new(values, self.fps)
    }
}

/// Opaque fingerprint of a [`BrainMask`], used to check that maps index
/// the same pixel set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MaskId(pub u64);

/// Binary brain mask. True pixels, enumerated in raster order, define the
/// columns of every [`DataMatrix`] built from it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BrainMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
    pixel_order: Vec<usize>,
}

impl BrainMask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidInput(format!(
                "mask must be at least 1x1, got {height}x{width}"
            )));
        }
        if bits.len() != height * width {
            return Err(Error::Shape(format!(
                "mask of {height}x{width} needs {} bits, got {}",
                height * width,
                bits.len()
            )));
        }
        let pixel_order = bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect();
        Ok(BrainMask {
            height,
            width,
            bits,
            pixel_order,
        })
    }

    pub fn full(height: usize, width: usize) -> Result<Self> {
        BrainMask::new(height, width, vec![true; height * width])
    }

    /// Builds a mask from a predicate over (row, col).
    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Result<Self> {
        let bits = (0..height * width).map(|i| f(i / width, i % width)).collect();
        BrainMask::new(height, width, bits)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Number of brain pixels N.
    pub fn count(&self) -> usize {
        self.pixel_order.len()
    }

    /// Flat raster indices of brain pixels, in column order of data matrices.
    pub fn pixel_order(&self) -> &[usize] {
        &self.pixel_order
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        row < self.height && col < self.width && self.bits[row * self.width + col]
    }

    /// (row, col) of the p-th brain pixel.
    pub fn coords(&self, p: usize) -> (usize, usize) {
        let flat = self.pixel_order[p];
        (flat / self.width, flat % self.width)
    }

    /// Map from flat raster index to brain-pixel index.
    pub fn column_lookup(&self) -> Vec<Option<usize>> {
        let mut lookup = vec![None; self.bits.len()];
        for (p, &flat) in self.pixel_order.iter().enumerate() {
            lookup[flat] = Some(p);
        }
        lookup
    }

    pub fn id(&self) -> MaskId {
        let mut h = DefaultHasher::new();
        self.height.hash(&mut h);
        self.width.hash(&mut h);
        self.bits.hash(&mut h);
        MaskId(h.finish())
    }

    /// Scatters an N-vector into a dense H×W image, filling non-brain pixels.
    pub fn to_image(&self, values: ArrayView1<'_, f64>, fill: f64) -> Array2<f64> {
        let mut img = Array2::from_elem((self.height, self.width), fill);
        for (p, &flat) in self.pixel_order.iter().enumerate() {
            img[(flat / self.width, flat % self.width)] = values[p];
        }
        img
    }
}

/// A 2-D point in pixel coordinates: `x` is the column, `y` the row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

/// 2×3 affine map `p ↦ A·p + t`, stored row-major as `[[a, b, tx], [c, d, ty]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform {
    pub m: [[f64; 3]; 2],
}

impl AffineTransform {
    pub const IDENTITY: AffineTransform = AffineTransform {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
    };

    pub fn translation(dx: f64, dy: f64) -> Self {
        AffineTransform {
            m: [[1.0, 0.0, dx], [0.0, 1.0, dy]],
        }
    }

    pub fn determinant(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn apply(&self, p: Point) -> Point {
        Point {
            x: self.m[0][0] * p.x + self.m[0][1] * p.y + self.m[0][2],
            y: self.m[1][0] * p.x + self.m[1][1] * p.y + self.m[1][2],
        }
    }

    pub fn inverse(&self) -> Result<Self> {
        let det = self.determinant();
        let scale = self.m[0][0].abs() + self.m[0][1].abs() + self.m[1][0].abs() + self.m[1][1].abs();
        if !det.is_finite() || det.abs() <= 1e-12 * scale * scale {
            return Err(Error::Domain(format!(
                "affine transform is not invertible (det = {det})"
            )));
        }
        let [[a, b, tx], [c, d, ty]] = self.m;
        let (ia, ib, ic, id) = (d / det, -b / det, -c / det, a / det);
        Ok(AffineTransform {
            m: [
                [ia, ib, -(ia * tx + ib * ty)],
                [ic, id, -(ic * tx + id * ty)],
            ],
        })
    }
}

/// Geometry of the atlas frame: pixel pitch, skull landmarks and the
/// session-to-atlas transform.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtlasFrame {
    pub pixel_pitch_mm: f64,
    pub bregma_px: Point,
    pub lambda_px: Point,
    #[serde(default = "identity_affine")]
    pub affine: AffineTransform,
}

fn identity_affine() -> AffineTransform {
    AffineTransform::IDENTITY
}

impl AtlasFrame {
    pub fn new(pixel_pitch_mm: f64, bregma_px: Point, lambda_px: Point) -> Result<Self> {
        let frame = AtlasFrame {
            pixel_pitch_mm,
            bregma_px,
            lambda_px,
            affine: AffineTransform::IDENTITY,
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pixel_pitch_mm.is_finite() && self.pixel_pitch_mm > 0.0) {
            return Err(Error::InvalidInput(format!(
                "pixel pitch must be positive, got {}",
                self.pixel_pitch_mm
            )));
        }
        if self.bregma_px == self.lambda_px {
            return Err(Error::InvalidInput("bregma and lambda coincide".into()));
        }
        if self.affine.determinant() == 0.0 {
            return Err(Error::InvalidInput("atlas affine is singular".into()));
        }
        Ok(())
    }

    /// Pixel position of a point given in mm relative to bregma
    /// (`x` lateral, positive to the right; `y` anterior, positive up).
    pub fn mm_to_px(&self, x_mm: f64, y_mm: f64) -> Point {
        Point {
            x: self.bregma_px.x + x_mm / self.pixel_pitch_mm,
            y: self.bregma_px.y - y_mm / self.pixel_pitch_mm,
        }
    }
}

/// A z-scored N-vector over brain pixels: one functional network map.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialMap {
    pub weights: Array1<f64>,
    pub label: Option<String>,
    pub mask: Option<MaskId>,
}

impl SpatialMap {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn with_mask(mut self, mask: MaskId) -> Self {
        self.mask = Some(mask);
        self
    }
}

/// Stacks maps as the rows of a matrix.
pub fn maps_to_matrix(maps: &[SpatialMap]) -> Result<Array2<f64>> {
    let n = maps.first().map_or(0, SpatialMap::len);
    let mut out = Array2::zeros((maps.len(), n));
    for (i, m) in maps.iter().enumerate() {
        if m.len() != n {
            return Err(Error::Shape(format!(
                "map {i} has {} pixels, expected {n}",
                m.len()
            )));
        }
        out.row_mut(i).assign(&m.weights);
    }
    Ok(out)
}

/// T×C latent time courses (encoder bottleneck output or ICA mixing matrix).
#[derive(Clone, Debug, PartialEq)]
pub struct LatentEmbedding {
    values: Array2<f64>,
}

impl LatentEmbedding {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.ncols() < 1 {
            return Err(Error::InvalidInput("latent embedding needs C >= 1".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("latent embedding is not finite".into()));
        }
        Ok(LatentEmbedding { values })
    }

    pub fn frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn order(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }
}

/// Symmetric k×k correlation matrix between labeled regions or networks.
#[derive(Clone, Debug, PartialEq)]
pub struct FcMatrix {
    pub labels: Vec<String>,
    pub values: Array2<f64>,
}

impl FcMatrix {
    pub fn new(labels: Vec<String>, values: Array2<f64>) -> Result<Self> {
        let k = labels.len();
        if values.dim() != (k, k) {
            return Err(Error::Shape(format!(
                "FC matrix with {k} labels must be {k}x{k}, got {:?}",
                values.dim()
            )));
        }
        Ok(FcMatrix { labels, values })
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.labels.iter().position(|l| l == a)?;
        let j = self.labels.iter().position(|l| l == b)?;
        Some(self.values[(i, j)])
    }
}
