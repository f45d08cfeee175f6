use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{AffineTransform, BrainMask, DataMatrix, Point};

/// Bregma and lambda positions in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Landmarks {
    pub bregma: Point,
    pub lambda: Point,
}

/// The similarity transform (rotation, uniform scale, translation) that maps
/// both source landmarks exactly onto the destination landmarks.
///
/// Points are treated as complex numbers `z = x + iy`; the map is
/// `z ↦ a·z + b` with `a = (d₂ − d₁)/(s₂ − s₁)` and `b = d₁ − a·s₁`.
pub fn estimate_affine(
    bregma_src: Point,
    lambda_src: Point,
    bregma_dst: Point,
    lambda_dst: Point,
) -> Result<AffineTransform> {
    let (sx, sy) = (lambda_src.x - bregma_src.x, lambda_src.y - bregma_src.y);
    let (dx, dy) = (lambda_dst.x - bregma_dst.x, lambda_dst.y - bregma_dst.y);
    let den = sx * sx + sy * sy;
    if !(den > 0.0) {
        return Err(Error::InvalidInput("source landmarks coincide".into()));
    }
    if dx == 0.0 && dy == 0.0 {
        return Err(Error::InvalidInput("destination landmarks coincide".into()));
    }
    // (dx + i·dy) / (sx + i·sy)
    let ar = (dx * sx + dy * sy) / den;
    let ai = (dy * sx - dx * sy) / den;
    let br = bregma_dst.x - (ar * bregma_src.x - ai * bregma_src.y);
    let bi = bregma_dst.y - (ai * bregma_src.x + ar * bregma_src.y);
    Ok(AffineTransform {
        m: [[ar, -ai, br], [ai, ar, bi]],
    })
}

/// Resampled data plus, per target pixel, whether its source location fell
/// outside the source brain mask (those columns are zero).
#[derive(Clone, Debug, PartialEq)]
pub struct Resampled {
    pub matrix: DataMatrix,
    pub out_of_source: Vec<bool>,
}

impl Resampled {
    pub fn flagged(&self) -> usize {
        self.out_of_source.iter().filter(|f| **f).count()
    }
}

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r
    } else {
        v
    }
}

/// Bilinear taps `(source column, weight)` at a fractional location, using
/// only neighbours inside the source mask and renormalizing their weights.
fn bilinear_taps(src: &BrainMask, lookup: &[Option<usize>], p: Point) -> Option<Vec<(usize, f64)>> {
    let (x, y) = (snap(p.x), snap(p.y));
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let mut taps = Vec::with_capacity(4);
    let mut total = 0.0;
    for (oy, wy) in [(0.0, 1.0 - fy), (1.0, fy)] {
        for (ox, wx) in [(0.0, 1.0 - fx), (1.0, fx)] {
            let w = wx * wy;
            if w <= 0.0 {
                continue;
            }
            let (r, c) = (y0 + oy, x0 + ox);
            if r < 0.0 || c < 0.0 || r >= src.height() as f64 || c >= src.width() as f64 {
                continue;
            }
            if let Some(q) = lookup[r as usize * src.width() + c as usize] {
                taps.push((q, w));
                total += w;
            }
        }
    }
    if total <= 0.0 {
        return None;
    }
    taps.iter_mut().for_each(|t| t.1 /= total);
    Some(taps)
}

/// Resamples `m` (pixels of `src_mask`) onto `target_mask`, where `a` maps
/// source pixel coordinates to target pixel coordinates. Every target pixel
/// is pulled back through `a⁻¹` and sampled bilinearly.
pub fn apply_affine(
    m: &DataMatrix,
    src_mask: &BrainMask,
    a: &AffineTransform,
    target_mask: &BrainMask,
) -> Result<Resampled> {
    if m.pixels() != src_mask.count() {
        return Err(Error::Shape(format!(
            "matrix has {} pixels, source mask has {}",
            m.pixels(),
            src_mask.count()
        )));
    }
    let inv = a.inverse()?;
    let lookup = src_mask.column_lookup();
    let taps: Vec<Option<Vec<(usize, f64)>>> = (0..target_mask.count())
        .map(|p| {
            let (r, c) = target_mask.coords(p);
            bilinear_taps(src_mask, &lookup, inv.apply(Point::new(c as f64, r as f64)))
        })
        .collect();
    let x = m.values();
    let mut out = Array2::zeros((m.frames(), taps.len()));
    for (p, tp) in taps.iter().enumerate() {
        if let Some(tp) = tp {
            for &(q, w) in tp {
                out.column_mut(p).scaled_add(w, &x.column(q));
            }
        }
    }
    Ok(Resampled {
        matrix: m.with_values(out)?,
        out_of_source: taps.iter().map(Option::is_none).collect(),
    })
}

/// Warps a mask onto a `height`×`width` grid by nearest-neighbour lookup of
/// each target pixel's pre-image.
pub fn warp_mask(mask: &BrainMask, a: &AffineTransform, height: usize, width: usize) -> Result<BrainMask> {
    let inv = a.inverse()?;
    BrainMask::from_fn(height, width, |r, c| {
        let p = inv.apply(Point::new(c as f64, r as f64));
        let (rr, cc) = (p.y.round(), p.x.round());
        rr >= 0.0
            && cc >= 0.0
            && (rr as usize) < mask.height()
            && (cc as usize) < mask.width()
            && mask.contains(rr as usize, cc as usize)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Point, b: Point) -> bool {
        (a.x - b.x).abs() < 1e-12 && (a.y - b.y).abs() < 1e-12
    }

    #[test]
    fn estimate_examples() {
        let (b, l) = (Point::new(10.0, 5.0), Point::new(10.0, 30.0));
        let id = estimate_affine(b, l, b, l).unwrap();
        for (got, want) in id.m.iter().flatten().zip(AffineTransform::IDENTITY.m.iter().flatten()) {
            assert!((got - want).abs() < 1e-12);
        }
        let tr = estimate_affine(b, l, Point::new(15.0, 2.0), Point::new(15.0, 27.0)).unwrap();
        assert_eq!(tr.m, [[1.0, 0.0, 5.0], [0.0, 1.0, -3.0]]);

        // rotate both points 90° about their midpoint
        let mid = Point::new(10.0, 17.5);
        let rot = |p: Point| Point::new(mid.x - (p.y - mid.y), mid.y + (p.x - mid.x));
        let (b2, l2) = (rot(b), rot(l));
        let a = estimate_affine(b, l, b2, l2).unwrap();
        assert!((a.m[0][0]).abs() < 1e-12 && (a.m[0][1] + 1.0).abs() < 1e-12);
        assert!((a.m[1][0] - 1.0).abs() < 1e-12 && (a.m[1][1]).abs() < 1e-12);
        assert!((a.determinant() - 1.0).abs() < 1e-12);
        assert!(close(a.apply(b), b2) && close(a.apply(l), l2));

        assert!(estimate_affine(b, b, b, l).is_err());
    }

    #[test]
    fn similarity_maps_landmarks_exactly() {
        let (b, l) = (Point::new(3.2, 4.1), Point::new(7.5, -2.0));
        let (b2, l2) = (Point::new(-1.0, 8.0), Point::new(20.0, 11.5));
        let a = estimate_affine(b, l, b2, l2).unwrap();
        assert!(close(a.apply(b), b2) && close(a.apply(l), l2));
        // similarity: equal column norms, orthogonal columns
        let (c0, c1) = ((a.m[0][0], a.m[1][0]), (a.m[0][1], a.m[1][1]));
        assert!((c0.0 * c1.0 + c0.1 * c1.1).abs() < 1e-12);
        assert!((c0.0.hypot(c0.1) - c1.0.hypot(c1.1)).abs() < 1e-12);
    }

    fn image(h: usize, w: usize, f: impl Fn(f64, f64) -> f64) -> (BrainMask, DataMatrix) {
        let mask = BrainMask::full(h, w).unwrap();
        let vals = Array2::from_shape_fn((2, h * w), |(t, p)| {
            f((p % w) as f64, (p / w) as f64) + t as f64
        });
        (mask, DataMatrix::new(vals, 10.0).unwrap())
    }

    #[test]
    fn identity_and_integer_shift() {
        let (mask, m) = image(8, 9, |x, y| (0.3 * x).sin() + 0.1 * y * y);
        let out = apply_affine(&m, &mask, &AffineTransform::IDENTITY, &mask).unwrap();
        assert!((&out.matrix.values() - &m.values()).iter().all(|v| v.abs() < 1e-12));
        assert_eq!(out.flagged(), 0);

        let shift = AffineTransform::translation(2.0, -1.0);
        let out = apply_affine(&m, &mask, &shift, &mask).unwrap();
        for p in 0..mask.count() {
            let (r, c) = mask.coords(p);
            let src = (r as isize + 1, c as isize - 2);
            if src.0 < 8 && src.1 >= 0 {
                let q = src.0 as usize * 9 + src.1 as usize;
                assert_eq!(out.matrix.values()[(0, p)], m.values()[(0, q)]);
                assert!(!out.out_of_source[p]);
            } else {
                assert!(out.out_of_source[p]);
                assert_eq!(out.matrix.values()[(0, p)], 0.0);
            }
        }
    }

    #[test]
    fn half_pixel_roundtrip_within_bilinear_bound() {
        let f = |x: f64, y: f64| (0.4 * x).sin() * (0.3 * y).cos();
        let (h, w) = (16, 16);
        let (mask, m) = image(h, w, f);
        let there = apply_affine(&m, &mask, &AffineTransform::translation(0.5, 0.0), &mask).unwrap();
        let back =
            apply_affine(&there.matrix, &mask, &AffineTransform::translation(-0.5, 0.0), &mask).unwrap();
        let img = |x: usize, y: usize| f(x as f64, y as f64);
        let mut max_d2 = 0.0f64;
        for y in 0..h {
            for x in 1..w - 1 {
                max_d2 = max_d2.max((img(x - 1, y) - 2.0 * img(x, y) + img(x + 1, y)).abs());
            }
        }
        for y in 0..h {
            for x in 2..w - 2 {
                let p = y * w + x;
                let err = (back.matrix.values()[(0, p)] - m.values()[(0, p)]).abs();
                assert!(err <= max_d2 / 4.0 + 1e-12, "{err} > {}", max_d2 / 4.0);
            }
        }
    }

    #[test]
    fn singular_transform_rejected() {
        let (mask, m) = image(4, 4, |x, _| x);
        let a = AffineTransform {
            m: [[1.0, 2.0, 0.0], [2.0, 4.0, 0.0]],
        };
        assert!(apply_affine(&m, &mask, &a, &mask).is_err());
        assert!(warp_mask(&mask, &a, 4, 4).is_err());
    }

    #[test]
    fn mask_warp_by_translation() {
        let mask = BrainMask::from_fn(6, 6, |r, c| r < 3 && c < 3).unwrap();
        let moved = warp_mask(&mask, &AffineTransform::translation(2.0, 1.0), 6, 6).unwrap();
        let want = BrainMask::from_fn(6, 6, |r, c| (1..4).contains(&r) && (2..5).contains(&c)).unwrap();
        assert_eq!(moved, want);
    }
}
