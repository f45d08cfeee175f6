//! Imaging chain from channel frame stacks to analysis-ready T×N matrices:
//! ratiometric correction, temporal detrending, masked Gaussian smoothing,
//! global signal regression, landmark registration, optional band-pass
//! filtering, hemisphere restriction and epoch segmentation.

mod affine;
mod filter;

use ndarray::{s, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{AtlasFrame, BrainMask, DataMatrix};

pub use affine::{apply_affine, estimate_affine, warp_mask, Landmarks, Resampled};
pub use filter::{bandpass, Biquad};

/// Default Gaussian σ (pixels) of the 5×5 smoothing kernel.
pub const DEFAULT_SMOOTH_SIGMA: f64 = 1.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Emission,
    Reference,
}

/// T frames of H×W intensities, stored as a T×(H·W) raster matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameStack {
    pub height: usize,
    pub width: usize,
    pub values: Array2<f64>,
    pub channel: Channel,
}

impl FrameStack {
    pub fn new(height: usize, width: usize, values: Array2<f64>, channel: Channel) -> Result<Self> {
        if values.ncols() != height * width {
            return Err(Error::Shape(format!(
                "frame stack of {height}x{width} needs {} columns, got {}",
                height * width,
                values.ncols()
            )));
        }
        Ok(FrameStack {
            height,
            width,
            values,
            channel,
        })
    }

    pub fn frames(&self) -> usize {
        self.values.nrows()
    }
}

/// Per-pixel temporal mean intensities of both channels.
#[derive(Clone, Debug, PartialEq)]
pub struct Baseline {
    pub emission: Array1<f64>,
    pub reference: Array1<f64>,
}

/// Ratiometric correction `y(t) = em(t)/ref(t) · ref₀/em₀` for every brain
/// pixel, with baselines taken as the temporal mean of each channel.
pub fn ratiometric_correct(
    em: &FrameStack,
    reference: &FrameStack,
    mask: &BrainMask,
    fps: f64,
) -> Result<(DataMatrix, Baseline)> {
    if em.values.dim() != reference.values.dim()
        || (em.height, em.width) != (reference.height, reference.width)
    {
        return Err(Error::Shape(format!(
            "emission stack {:?} and reference stack {:?} differ",
            em.values.dim(),
            reference.values.dim()
        )));
    }
    if (em.height, em.width) != (mask.height(), mask.width()) {
        return Err(Error::Shape(format!(
            "frames are {}x{}, mask is {}x{}",
            em.height,
            em.width,
            mask.height(),
            mask.width()
        )));
    }
    let t = em.frames();
    let n = mask.count();
    let mut out = Array2::zeros((t, n));
    let mut em0 = Array1::zeros(n);
    let mut ref0 = Array1::zeros(n);
    for (p, &flat) in mask.pixel_order().iter().enumerate() {
        let e = em.values.column(flat);
        let r = reference.values.column(flat);
        for (i, (&ev, &rv)) in e.iter().zip(r.iter()).enumerate() {
            if !(ev > 0.0 && rv > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "non-positive intensity at frame {i}, pixel {flat} (em {ev}, ref {rv})"
                )));
            }
        }
        let (me, mr) = (e.mean().unwrap_or(0.0), r.mean().unwrap_or(0.0));
        em0[p] = me;
        ref0[p] = mr;
        let gain = mr / me;
        for i in 0..t {
            out[(i, p)] = e[i] / r[i] * gain;
        }
    }
    Ok((
        DataMatrix::new(out, fps)?,
        Baseline {
            emission: em0,
            reference: ref0,
        },
    ))
}

/// Removes the least-squares linear trend over time from every pixel.
pub fn detrend(m: &DataMatrix) -> Result<DataMatrix> {
    let t = m.frames();
    if t < 3 {
        return Err(Error::InvalidInput(format!("detrend needs at least 3 frames, got {t}")));
    }
    let tc: Vec<f64> = (0..t).map(|i| i as f64 - (t - 1) as f64 / 2.0).collect();
    let stt: f64 = tc.iter().map(|v| v * v).sum();
    let mut out = m.values().to_owned();
    for mut col in out.axis_iter_mut(Axis(1)) {
        let mean = col.mean().unwrap_or(0.0);
        let slope = col.iter().zip(&tc).map(|(y, x)| (y - mean) * x).sum::<f64>() / stt;
        col.iter_mut().zip(&tc).for_each(|(y, x)| *y -= mean + slope * x);
    }
    m.with_values(out)
}

/// Normalized 5×5 Gaussian kernel with standard deviation `sigma` pixels.
pub fn gaussian_kernel(sigma: f64) -> [[f64; 5]; 5] {
    let mut k = [[0.0; 5]; 5];
    let mut total = 0.0;
    for (i, row) in k.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (dy, dx) = (i as f64 - 2.0, j as f64 - 2.0);
            *v = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
            total += *v;
        }
    }
    k.iter_mut().flatten().for_each(|v| *v /= total);
    k
}

/// Sparse smoothing operator over brain pixels: for every pixel, the list
/// of (source column, weight).
#[derive(Clone, Debug)]
pub struct MaskedSmoother {
    taps: Vec<Vec<(usize, f64)>>,
}

impl MaskedSmoother {
    /// Builds the masked 5×5 operator. Kernel weight that would fall outside
    /// the mask is returned to the centre tap, so every row and every column
    /// of the operator sums to one.
    pub fn new(mask: &BrainMask, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidInput(format!("smoothing sigma must be > 0, got {sigma}")));
        }
        let k = gaussian_kernel(sigma);
        let lookup = mask.column_lookup();
        let (h, w) = (mask.height() as isize, mask.width() as isize);
        let taps = (0..mask.count())
            .map(|p| {
                let (r, c) = mask.coords(p);
                let mut row = Vec::with_capacity(25);
                let mut centre = k[2][2];
                for (di, krow) in k.iter().enumerate() {
                    for (dj, &kv) in krow.iter().enumerate() {
                        if di == 2 && dj == 2 {
                            continue;
                        }
                        let (rr, cc) = (r as isize + di as isize - 2, c as isize + dj as isize - 2);
                        let q = (rr >= 0 && rr < h && cc >= 0 && cc < w)
                            .then(|| lookup[(rr * w + cc) as usize])
                            .flatten();
                        match q {
                            Some(q) => row.push((q, kv)),
                            None => centre += kv,
                        }
                    }
                }
                row.push((p, centre));
                row
            })
            .collect();
        Ok(MaskedSmoother { taps })
    }

    /// Weights contributing to output pixel `p`.
    pub fn taps(&self, p: usize) -> &[(usize, f64)] {
        &self.taps[p]
    }

    pub fn apply(&self, m: &DataMatrix) -> Result<DataMatrix> {
        if m.pixels() != self.taps.len() {
            return Err(Error::Shape(format!(
                "matrix has {} pixels, mask has {}",
                m.pixels(),
                self.taps.len()
            )));
        }
        let x = m.values();
        let mut out = Array2::zeros(x.dim());
        for (src, mut dst) in x.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
            for (p, taps) in self.taps.iter().enumerate() {
                dst[p] = taps.iter().map(|&(q, wt)| wt * src[q]).sum();
            }
        }
        m.with_values(out)
    }
}

/// Per-frame masked 5×5 Gaussian smoothing.
pub fn gaussian_smooth(m: &DataMatrix, mask: &BrainMask, sigma: f64) -> Result<DataMatrix> {
    MaskedSmoother::new(mask, sigma)?.apply(m)
}

/// Regresses the global signal (mean over brain pixels per frame) and an
/// intercept out of every pixel's time course.
pub fn global_signal_regress(m: &DataMatrix) -> Result<DataMatrix> {
    let x = m.values();
    let g = x.mean_axis(Axis(1)).expect("non-empty");
    let gmean = g.mean().unwrap_or(0.0);
    let gc = g.mapv(|v| v - gmean);
    let sgg = gc.dot(&gc);
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
    let constant = sgg.sqrt() / (g.len() as f64).sqrt() <= 1e-12 * rms || sgg == 0.0;
    if constant && gmean.abs() > 1e-12 * rms.max(f64::MIN_POSITIVE) {
        return Err(Error::Degenerate(format!(
            "global signal is constant ({gmean}); cannot regress it out"
        )));
    }
    let mut out = x.to_owned();
    for mut col in out.axis_iter_mut(Axis(1)) {
        let mean = col.mean().unwrap_or(0.0);
        let beta = if constant { 0.0 } else { col.dot(&gc) / sgg };
        col.iter_mut().zip(gc.iter()).for_each(|(y, gv)| *y -= mean + beta * gv);
    }
    m.with_values(out)
}

/// Splits a session into consecutive non-overlapping chunks of
/// `floor(epoch_s · fps)` frames; the trailing remainder is dropped.
pub fn segment_epochs(m: &DataMatrix, epoch_s: f64) -> Result<Vec<DataMatrix>> {
    let len = epoch_frames(epoch_s, m.fps());
    if len < 2 {
        return Err(Error::InvalidInput(format!(
            "epoch of {epoch_s} s at {} fps has fewer than 2 frames",
            m.fps()
        )));
    }
    if len > m.frames() {
        return Err(Error::InvalidInput(format!(
            "epoch of {epoch_s} s ({len} frames) is longer than the session ({} frames)",
            m.frames()
        )));
    }
    let x = m.values();
    (0..m.frames() / len)
        .map(|k| m.with_values(x.slice(s![k * len..(k + 1) * len, ..]).to_owned()))
        .collect()
}

/// Frames per epoch, tolerant to rounding in `epoch_s · fps`.
pub fn epoch_frames(epoch_s: f64, fps: f64) -> usize {
    let f = epoch_s * fps;
    if !f.is_finite() || f <= 0.0 {
        return 0;
    }
    (f + 1e-9).floor() as usize
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hemisphere {
    /// Columns left of the midline in image coordinates.
    Left,
    Right,
}

/// Keeps only pixels strictly on one side of the vertical line through
/// bregma; pixels on the line belong to neither side.
pub fn restrict_hemisphere(
    m: &DataMatrix,
    mask: &BrainMask,
    frame: &AtlasFrame,
    side: Hemisphere,
) -> Result<(DataMatrix, BrainMask)> {
    if m.pixels() != mask.count() {
        return Err(Error::Shape(format!(
            "matrix has {} pixels, mask has {}",
            m.pixels(),
            mask.count()
        )));
    }
    let mid = frame.bregma_px.x;
    let keep = |c: usize| match side {
        Hemisphere::Left => (c as f64) < mid - 1e-9,
        Hemisphere::Right => (c as f64) > mid + 1e-9,
    };
    let cols: Vec<usize> = (0..mask.count()).filter(|&p| keep(mask.coords(p).1)).collect();
    if cols.is_empty() {
        return Err(Error::InvalidInput(format!("{side:?} hemisphere has no brain pixels")));
    }
    let sub = BrainMask::from_fn(mask.height(), mask.width(), |r, c| mask.contains(r, c) && keep(c))?;
    let x = m.values();
    let out = Array2::from_shape_fn((m.frames(), cols.len()), |(t, j)| x[(t, cols[j])]);
    Ok((m.with_values(out)?, sub))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageOrder {
    SmoothThenGsr,
    GsrThenSmooth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub detrend: bool,
    /// σ of the 5×5 Gaussian kernel; `None` disables smoothing.
    pub smooth_sigma: Option<f64>,
    pub gsr: bool,
    pub order: StageOrder,
    /// Optional zero-phase band-pass `[low_hz, high_hz]`.
    pub bandpass_hz: Option<[f64; 2]>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            detrend: true,
            smooth_sigma: Some(DEFAULT_SMOOTH_SIGMA),
            gsr: true,
            order: StageOrder::SmoothThenGsr,
            bandpass_hz: None,
        }
    }
}

/// Runs detrend → (smooth, GSR in configured order) → band-pass on a
/// masked matrix.
pub fn run_chain(m: &DataMatrix, mask: &BrainMask, cfg: &PreprocessConfig) -> Result<DataMatrix> {
    let mut x = if cfg.detrend { detrend(m)? } else { m.clone() };
    let smooth = |x: &DataMatrix| match cfg.smooth_sigma {
        Some(sigma) => gaussian_smooth(x, mask, sigma),
        None => Ok(x.clone()),
    };
    let gsr = |x: &DataMatrix| if cfg.gsr { global_signal_regress(x) } else { Ok(x.clone()) };
    x = match cfg.order {
        StageOrder::SmoothThenGsr => gsr(&smooth(&x)?)?,
        StageOrder::GsrThenSmooth => smooth(&gsr(&x)?)?,
    };
    if let Some([lo, hi]) = cfg.bandpass_hz {
        x = bandpass(&x, lo, hi)?;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::pearson_view;
    use crate::types::Point;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(t: usize, n: usize, seed: u64) -> DataMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DataMatrix::new(Array2::from_shape_fn((t, n), |_| rng.random_range(-1.0..1.0)), 10.0).unwrap()
    }

    fn stack(values: Array2<f64>, channel: Channel) -> FrameStack {
        FrameStack::new(2, 2, values, channel).unwrap()
    }

    #[test]
    fn ratiometric_constant_channels_give_one() {
        let mask = BrainMask::full(2, 2).unwrap();
        let em = stack(Array2::from_elem((5, 4), 3.0), Channel::Emission);
        let rf = stack(Array2::from_elem((5, 4), 7.0), Channel::Reference);
        let (y, base) = ratiometric_correct(&em, &rf, &mask, 10.0).unwrap();
        assert!(y.values().iter().all(|v| (v - 1.0).abs() < 1e-15));
        assert!(base.emission.iter().all(|v| (*v - 3.0).abs() < 1e-15));
    }

    #[test]
    fn ratiometric_gain_invariance_and_closed_form() {
        let mask = BrainMask::new(2, 2, vec![true, true, false, true]).unwrap();
        let t = 50;
        let shape = |i: usize| 1.0 + 0.1 * (i as f64).sin();
        let em = Array2::from_shape_fn((t, 4), |(i, j)| (2.0 + j as f64) * shape(i));
        let rf = Array2::from_shape_fn((t, 4), |(_, j)| 5.0 + j as f64);
        let (y1, _) = ratiometric_correct(
            &stack(em.clone(), Channel::Emission),
            &stack(rf.clone(), Channel::Reference),
            &mask,
            10.0,
        )
        .unwrap();
        let (y2, _) = ratiometric_correct(
            &stack(&em * 2.0, Channel::Emission),
            &stack(&rf * 3.0, Channel::Reference),
            &mask,
            10.0,
        )
        .unwrap();
        assert!((&y1.values() - &y2.values()).iter().all(|v| v.abs() < 1e-12));
        let mean_shape = (0..t).map(shape).sum::<f64>() / t as f64;
        for i in 0..t {
            for p in 0..3 {
                assert!((y1.values()[(i, p)] - shape(i) / mean_shape).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ratiometric_errors() {
        let mask = BrainMask::full(2, 2).unwrap();
        let mut em = Array2::from_elem((3, 4), 1.0);
        em[(1, 2)] = 0.0;
        let rf = Array2::from_elem((3, 4), 1.0);
        assert!(ratiometric_correct(
            &stack(em, Channel::Emission),
            &stack(rf.clone(), Channel::Reference),
            &mask,
            10.0
        )
        .is_err());
        let short = Array2::from_elem((2, 4), 1.0);
        assert!(matches!(
            ratiometric_correct(
                &stack(short, Channel::Emission),
                &stack(rf, Channel::Reference),
                &mask,
                10.0
            ),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn detrend_examples() {
        let t = 40;
        let ramp = DataMatrix::new(
            Array2::from_shape_fn((t, 3), |(i, j)| 0.5 * i as f64 * (j as f64 + 1.0) - 3.0),
            10.0,
        )
        .unwrap();
        assert!(detrend(&ramp).unwrap().values().iter().all(|v| v.abs() < 1e-9));

        let x = random_matrix(t, 4, 1);
        let once = detrend(&x).unwrap();
        let twice = detrend(&once).unwrap();
        assert!((&once.values() - &twice.values()).iter().all(|v| v.abs() < 1e-9));

        // y = 2t + sin t: compare with a direct normal-equation fit of sin t
        let y = DataMatrix::new(
            Array2::from_shape_fn((t, 1), |(i, _)| 2.0 * i as f64 + (i as f64).sin()),
            10.0,
        )
        .unwrap();
        let d = detrend(&y).unwrap();
        let ts: Vec<f64> = (0..t).map(|i| i as f64).collect();
        let s: Vec<f64> = ts.iter().map(|v| v.sin()).collect();
        let n = t as f64;
        let (st, ss, stt, sts) = (
            ts.iter().sum::<f64>(),
            s.iter().sum::<f64>(),
            ts.iter().map(|v| v * v).sum::<f64>(),
            ts.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>(),
        );
        let slope = (n * sts - st * ss) / (n * stt - st * st);
        let icpt = (ss - slope * st) / n;
        for i in 0..t {
            let want = s[i] - (icpt + slope * ts[i]);
            assert!((d.values()[(i, 0)] - want).abs() < 1e-9);
        }
        assert!(detrend(&random_matrix(2, 2, 0)).is_err());
    }

    #[test]
    fn gaussian_kernel_values() {
        let k = gaussian_kernel(1.2);
        let total: f64 = k.iter().flatten().sum();
        assert!((total - 1.0).abs() < 1e-15);
        // direct evaluation of exp(-(dx²+dy²)/(2σ²)) normalized over 25 taps
        let raw = |dx: f64, dy: f64| (-(dx * dx + dy * dy) / 2.88f64).exp();
        let z: f64 = (-2..=2)
            .flat_map(|i| (-2..=2).map(move |j| raw(i as f64, j as f64)))
            .sum();
        assert!((k[2][2] - 1.0 / z).abs() < 1e-15);
        assert!((k[0][1] - raw(1.0, 2.0) / z).abs() < 1e-15);
    }

    #[test]
    fn smoothing_examples() {
        let mask = BrainMask::from_fn(12, 12, |r, c| r > 0 && c > 0 && r < 11 && c < 10).unwrap();
        let n = mask.count();
        let constant = DataMatrix::new(Array2::from_elem((2, n), 4.2), 10.0).unwrap();
        let out = gaussian_smooth(&constant, &mask, 1.2).unwrap();
        assert!(out.values().iter().all(|v| (v - 4.2).abs() < 1e-12));

        // interior impulse: the plain kernel around it
        let lookup = mask.column_lookup();
        let centre = lookup[6 * 12 + 5].unwrap();
        let mut imp = Array2::zeros((2, n));
        imp[(0, centre)] = 1.0;
        let out = gaussian_smooth(&DataMatrix::new(imp, 10.0).unwrap(), &mask, 1.2).unwrap();
        let k = gaussian_kernel(1.2);
        for di in 0..5 {
            for dj in 0..5 {
                let q = lookup[(4 + di) * 12 + (3 + dj)].unwrap();
                assert!((out.values()[(0, q)] - k[di][dj]).abs() < 1e-15);
            }
        }

        // impulse next to the edge: spread only over in-mask taps, total 1
        let edge = lookup[12 + 5].unwrap();
        let mut imp = Array2::zeros((2, n));
        imp[(0, edge)] = 1.0;
        let out = gaussian_smooth(&DataMatrix::new(imp, 10.0).unwrap(), &mask, 1.2).unwrap();
        let total: f64 = out.values().row(0).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let above = lookup[5].map(|_| ());
        assert!(above.is_none());
        let below = lookup[2 * 12 + 5].unwrap();
        assert!((out.values()[(0, below)] - k[3][2]).abs() < 1e-15);
    }

    #[test]
    fn smoothing_preserves_in_mask_mean() {
        let mask = BrainMask::from_fn(10, 9, |r, c| (r as f64 - 4.5).hypot(c as f64 - 4.0) < 4.2).unwrap();
        let x = random_matrix(3, mask.count(), 5);
        let out = gaussian_smooth(&x, &mask, 1.2).unwrap();
        for t in 0..3 {
            let a = x.values().row(t).mean().unwrap();
            let b = out.values().row(t).mean().unwrap();
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn gsr_examples() {
        let t = 30;
        let trace: Vec<f64> = (0..t).map(|i| (i as f64 * 0.3).sin() + 0.1 * i as f64).collect();
        let same = DataMatrix::new(Array2::from_shape_fn((t, 5), |(i, _)| trace[i]), 10.0).unwrap();
        assert!(global_signal_regress(&same).unwrap().values().iter().all(|v| v.abs() < 1e-9));

        let x = random_matrix(t, 6, 3);
        let out = global_signal_regress(&x).unwrap();
        let g = x.values().mean_axis(Axis(1)).unwrap();
        for p in 0..6 {
            let col = out.values().column(p).to_owned();
            assert!(col.mean().unwrap().abs() < 1e-12);
            let r = col.dot(&g.mapv(|v| v - g.mean().unwrap()));
            assert!(r.abs() < 1e-9);
        }
        let again = global_signal_regress(&out).unwrap();
        assert!((&again.values() - &out.values()).iter().all(|v| v.abs() < 1e-9));

        // a pixel orthogonal to g and zero-mean is unchanged
        let mut v = random_matrix(t, 4, 11).into_values();
        let g = v.mean_axis(Axis(1)).unwrap();
        let gc = g.mapv(|x| x - g.mean().unwrap());
        let mut extra: Array1<f64> = (0..t).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let m = extra.mean().unwrap();
        extra.mapv_inplace(|x| x - m);
        let proj = extra.dot(&gc) / gc.dot(&gc);
        extra = &extra - &(&gc * proj);
        // append the orthogonal pixel and its negative so g is unchanged
        let mut wide = Array2::zeros((t, 6));
        wide.slice_mut(s![.., ..4]).assign(&v);
        wide.column_mut(4).assign(&extra);
        wide.column_mut(5).assign(&(-&extra));
        v = wide;
        let out = global_signal_regress(&DataMatrix::new(v, 10.0).unwrap()).unwrap();
        for i in 0..t {
            assert!((out.values()[(i, 4)] - extra[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn gsr_leaves_residuals_uncorrelated_with_global() {
        for seed in 0..10 {
            let x = random_matrix(50, 8, seed);
            let g = x.values().mean_axis(Axis(1)).unwrap();
            let out = global_signal_regress(&x).unwrap();
            for p in 0..8 {
                let r = pearson_view(out.values().column(p), g.view()).unwrap();
                assert!(r.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn gsr_constant_global_is_an_error() {
        // two pixels whose sum is constant and non-zero
        let x = Array2::from_shape_fn((10, 2), |(i, j)| if j == 0 { 1.0 + i as f64 } else { 1.0 - i as f64 });
        assert!(matches!(
            global_signal_regress(&DataMatrix::new(x, 10.0).unwrap()),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn segmentation_examples() {
        let m = random_matrix(1000, 2, 0);
        let chunks = segment_epochs(&m, 10.0).unwrap();
        assert_eq!(chunks.len(), 10);
        assert!(chunks.iter().all(|c| c.frames() == 100));
        let one = segment_epochs(&m, 100.0).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0], m);
        let m2 = random_matrix(1050, 2, 0);
        let chunks = segment_epochs(&m2, 10.0).unwrap();
        assert_eq!(chunks.len(), 10);
        // chunks concatenate to a prefix
        for (k, c) in chunks.iter().enumerate() {
            assert_eq!(c.values(), m2.values().slice(s![k * 100..(k + 1) * 100, ..]));
        }
        assert!(segment_epochs(&m, 101.0).is_err());
        assert!(segment_epochs(&m, 0.1).is_err());
        // duration that is not exactly representable
        let m3 = DataMatrix::new(Array2::zeros((1024, 1)), 16.8).unwrap();
        assert_eq!(segment_epochs(&m3, 1024.0 / 16.8).unwrap().len(), 1);
    }

    #[test]
    fn hemisphere_partition() {
        let mask = BrainMask::from_fn(9, 9, |r, c| (r as f64 - 4.0).hypot(c as f64 - 4.0) <= 4.0).unwrap();
        let frame = AtlasFrame::new(0.078, Point::new(4.0, 2.0), Point::new(4.0, 7.0)).unwrap();
        let x = random_matrix(5, mask.count(), 2);
        let (l, lm) = restrict_hemisphere(&x, &mask, &frame, Hemisphere::Left).unwrap();
        let (r, rm) = restrict_hemisphere(&x, &mask, &frame, Hemisphere::Right).unwrap();
        assert_eq!(lm.count(), rm.count());
        let midline = (0..9).filter(|&row| mask.contains(row, 4)).count();
        assert_eq!(lm.count() + rm.count() + midline, mask.count());
        assert_eq!(l.pixels(), lm.count());
        assert_eq!(r.pixels(), rm.count());
        let far = AtlasFrame::new(0.078, Point::new(-1.0, 2.0), Point::new(-1.0, 7.0)).unwrap();
        assert!(restrict_hemisphere(&x, &mask, &far, Hemisphere::Left).is_err());
    }

    #[test]
    fn chain_runs_with_defaults() {
        let mask = BrainMask::full(6, 6).unwrap();
        let x = random_matrix(40, 36, 9);
        let out = run_chain(&x, &mask, &PreprocessConfig::default()).unwrap();
        assert_eq!(out.values().dim(), (40, 36));
        let cfg = PreprocessConfig {
            order: StageOrder::GsrThenSmooth,
            bandpass_hz: Some([0.4, 4.0]),
            ..PreprocessConfig::default()
        };
        assert!(run_chain(&x, &mask, &cfg).is_ok());
    }
}
