use std::f64::consts::{FRAC_1_SQRT_2, PI};

use ndarray::{Array1, Axis};

use crate::error::{Error, Result};
use crate::types::DataMatrix;

/// Second-order IIR section in transposed direct form II, normalized so
/// that `a[0] = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn butterworth(fc: f64, fs: f64, high: bool) -> Self {
        // bilinear transform with frequency prewarping, Q = 1/√2
        let w0 = 2.0 * PI * fc / fs;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / (2.0 * FRAC_1_SQRT_2);
        let a0 = 1.0 + alpha;
        let b = if high {
            [(1.0 + cos) / 2.0, -(1.0 + cos), (1.0 + cos) / 2.0]
        } else {
            [(1.0 - cos) / 2.0, 1.0 - cos, (1.0 - cos) / 2.0]
        };
        Biquad {
            b: b.map(|v| v / a0),
            a: [1.0, -2.0 * cos / a0, (1.0 - alpha) / a0],
        }
    }

    pub fn lowpass(fc: f64, fs: f64) -> Self {
        Self::butterworth(fc, fs, false)
    }

    pub fn highpass(fc: f64, fs: f64) -> Self {
        Self::butterworth(fc, fs, true)
    }

    /// Magnitude response at frequency `f`.
    pub fn gain(&self, f: f64, fs: f64) -> f64 {
        let w = 2.0 * PI * f / fs;
        let eval = |c: &[f64; 3]| {
            let re = c[0] + c[1] * w.cos() + c[2] * (2.0 * w).cos();
            let im = -c[1] * w.sin() - c[2] * (2.0 * w).sin();
            re.hypot(im)
        };
        eval(&self.b) / eval(&self.a)
    }

    /// Filters `x` in place starting from the steady state for a constant
    /// input equal to `x[0]`.
    fn run(&self, x: &mut [f64]) {
        let Some(&x0) = x.first() else { return };
        let [b0, b1, b2] = self.b;
        let [_, a1, a2] = self.a;
        let dc = (b0 + b1 + b2) / (1.0 + a1 + a2);
        let mut z2 = (b2 - a2 * dc) * x0;
        let mut z1 = (b1 - a1 * dc) * x0 + z2;
        for v in x.iter_mut() {
            let xin = *v;
            let y = b0 * xin + z1;
            z1 = b1 * xin - a1 * y + z2;
            z2 = b2 * xin - a2 * y;
            *v = y;
        }
    }
}

const PAD: usize = 18;

/// Forward-backward filtering through a cascade of sections with odd
/// reflection padding at both ends.
fn filtfilt(sections: &[Biquad], x: &mut [f64]) {
    let n = x.len();
    let pad = PAD.min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
    for s in sections {
        s.run(&mut ext);
    }
    ext.reverse();
    for s in sections {
        s.run(&mut ext);
    }
    ext.reverse();
    x.copy_from_slice(&ext[pad..pad + n]);
}

/// Zero-phase Butterworth band-pass (second-order high-pass at `low_hz`
/// cascaded with second-order low-pass at `high_hz`) applied to every pixel.
pub fn bandpass(m: &DataMatrix, low_hz: f64, high_hz: f64) -> Result<DataMatrix> {
    let nyq = m.fps() / 2.0;
    if !(low_hz > 0.0 && low_hz < high_hz && high_hz < nyq) {
        return Err(Error::InvalidInput(format!(
            "band [{low_hz}, {high_hz}] Hz must satisfy 0 < low < high < {nyq} Hz"
        )));
    }
    let sections = [Biquad::highpass(low_hz, m.fps()), Biquad::lowpass(high_hz, m.fps())];
    let mut out = m.values().to_owned();
    let mut buf = Array1::zeros(m.frames());
    for mut col in out.axis_iter_mut(Axis(1)) {
        buf.assign(&col);
        filtfilt(&sections, buf.as_slice_mut().expect("contiguous"));
        col.assign(&buf);
    }
    m.with_values(out)
}
