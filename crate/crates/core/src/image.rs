//! Image grids, bilinear sampling, resizing, warping, and the handcrafted
//! matching-feature pyramid (locally normalized intensity plus gradients).

use nalgebra::Vector2;

use crate::epipolar::DepthMap;
use crate::error::{CoreError, Result};
use crate::real::Real;
use crate::se3::{project, CameraIntrinsics, Se3Pose};

/// Row-major multi-channel grid of scalar values.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageGrid<R: Real> {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<R>,
}

impl<R: Real> ImageGrid<R> {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<R>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(CoreError::ShapeMismatch(format!(
                "data length {} != {}x{}x{}",
                data.len(),
                width,
                height,
                channels
            )));
        }
        if data.iter().any(|v| !v.finite()) {
            return Err(CoreError::InvalidArgument("non-finite grid value".into()));
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self { width, height, channels, data: vec![R::zero(); width * height * channels] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> R) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, channels: 1, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn data(&self) -> &[R] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> R {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: R) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Luminance conversion; single-channel grids pass through.
    pub fn luminance(&self) -> Result<ImageGrid<R>> {
        match self.channels {
            1 => Ok(self.clone()),
            3 => {
                let (wr, wg, wb) = (R::c(0.299), R::c(0.587), R::c(0.114));
                let data = self
                    .data
                    .chunks_exact(3)
                    .map(|px| px[0] * wr + px[1] * wg + px[2] * wb)
                    .collect();
                Ok(ImageGrid { width: self.width, height: self.height, channels: 1, data })
            }
            n => Err(CoreError::InvalidArgument(format!("expected 1 or 3 channels, got {n}"))),
        }
    }

    /// Bilinear sample at clamped coordinates; returns false when the
    /// coordinate fell outside `[0, W-1] x [0, H-1]`.
    #[inline]
    pub fn sample_clamped(&self, x: R, y: R, out: &mut [R]) -> bool {
        let max_x = R::c((self.width - 1) as f64);
        let max_y = R::c((self.height - 1) as f64);
        let in_bounds = x >= R::zero() && x <= max_x && y >= R::zero() && y <= max_y;
        let xc = x.clamp(R::zero(), max_x);
        let yc = y.clamp(R::zero(), max_y);
        let x0 = xc.floor();
        let y0 = yc.floor();
        let wx = xc - x0;
        let wy = yc - y0;
        let x0 = x0.to_f64_lossy() as usize;
        let y0 = y0.to_f64_lossy() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let one = R::one();
        for c in 0..self.channels {
            let v00 = self.get(x0, y0, c);
            let v10 = self.get(x1, y0, c);
            let v01 = self.get(x0, y1, c);
            let v11 = self.get(x1, y1, c);
            out[c] = (v00 * (one - wx) + v10 * wx) * (one - wy)
                + (v01 * (one - wx) + v11 * wx) * wy;
        }
        in_bounds
    }

    /// Bilinear sample plus the exact in-cell spatial derivative of the
    /// interpolant. `grad` receives `channels * 2` values as `(d/dx, d/dy)`
    /// per channel.
    #[inline]
    pub fn sample_with_gradient(&self, x: R, y: R, out: &mut [R], grad: &mut [R]) -> bool {
        let max_x = R::c((self.width - 1) as f64);
        let max_y = R::c((self.height - 1) as f64);
        let in_bounds = x >= R::zero() && x <= max_x && y >= R::zero() && y <= max_y;
        let xc = x.clamp(R::zero(), max_x);
        let yc = y.clamp(R::zero(), max_y);
        let x0 = xc.floor();
        let y0 = yc.floor();
        let wx = xc - x0;
        let wy = yc - y0;
        let x0 = x0.to_f64_lossy() as usize;
        let y0 = y0.to_f64_lossy() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let one = R::one();
        for c in 0..self.channels {
            let v00 = self.get(x0, y0, c);
            let v10 = self.get(x1, y0, c);
            let v01 = self.get(x0, y1, c);
            let v11 = self.get(x1, y1, c);
            out[c] = (v00 * (one - wx) + v10 * wx) * (one - wy)
                + (v01 * (one - wx) + v11 * wx) * wy;
            grad[2 * c] = (v10 - v00) * (one - wy) + (v11 - v01) * wy;
            grad[2 * c + 1] = (v01 - v00) * (one - wx) + (v11 - v10) * wx;
        }
        in_bounds
    }
}

/// One bilinear sample: channel values plus an out-of-bounds flag.
#[derive(Clone, Debug)]
pub struct Sample<R: Real> {
    pub values: Vec<R>,
    pub in_bounds: bool,
}

/// Bilinear interpolation at a list of coordinates. Out-of-range coordinates
/// are clamped to the border and flagged.
pub fn bilinear_sample<R: Real>(
    grid: &ImageGrid<R>,
    coords: &[Vector2<R>],
) -> Result<Vec<Sample<R>>> {
    if grid.width == 0 || grid.height == 0 {
        return Err(CoreError::InvalidArgument("empty grid".into()));
    }
    let mut samples = Vec::with_capacity(coords.len());
    for c in coords {
        if !(c.x.finite() && c.y.finite()) {
            return Err(CoreError::InvalidArgument("non-finite sample coordinate".into()));
        }
        let mut values = vec![R::zero(); grid.channels];
        let in_bounds = grid.sample_clamped(c.x, c.y, &mut values);
        samples.push(Sample { values, in_bounds });
    }
    Ok(samples)
}

/// Integer-stride decimation: output pixel `(x, y)` copies input pixel
/// `(factor*x, factor*y)`. Keeps downsampled grids exactly aligned with
/// intrinsics scaled by `1/factor`.
pub fn decimate<R: Real>(grid: &ImageGrid<R>, factor: usize) -> ImageGrid<R> {
    let new_w = grid.width.div_ceil(factor);
    let new_h = grid.height.div_ceil(factor);
    let mut out = ImageGrid::zeros(new_w, new_h, grid.channels);
    for y in 0..new_h {
        for x in 0..new_w {
            for c in 0..grid.channels {
                out.set(x, y, c, grid.get(x * factor, y * factor, c));
            }
        }
    }
    out
}

/// Separable 5-tap binomial blur ([1, 4, 6, 4, 1] / 16) with clamped borders.
/// Used as an anti-aliasing prefilter ahead of `decimate`; the kernel is
/// symmetric about the kept pixel, so decimation stays aligned with scaled
/// intrinsics.
pub fn binomial_blur<R: Real>(grid: &ImageGrid<R>) -> ImageGrid<R> {
    let (w, h, ch) = (grid.width, grid.height, grid.channels);
    let weights = [R::c(1.0 / 16.0), R::c(4.0 / 16.0), R::c(6.0 / 16.0), R::c(4.0 / 16.0), R::c(1.0 / 16.0)];
    let mut horiz = ImageGrid::zeros(w, h, ch);
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = R::zero();
                for (k, wk) in weights.iter().enumerate() {
                    let xi = (x as isize + k as isize - 2).clamp(0, w as isize - 1) as usize;
                    acc += *wk * grid.get(xi, y, c);
                }
                horiz.set(x, y, c, acc);
            }
        }
    }
    let mut out = ImageGrid::zeros(w, h, ch);
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = R::zero();
                for (k, wk) in weights.iter().enumerate() {
                    let yi = (y as isize + k as isize - 2).clamp(0, h as isize - 1) as usize;
                    acc += *wk * horiz.get(x, yi, c);
                }
                out.set(x, y, c, acc);
            }
        }
    }
    out
}

/// Bilinear resize with align-corners coordinate mapping.
pub fn bilinear_resize<R: Real>(grid: &ImageGrid<R>, new_w: usize, new_h: usize) -> ImageGrid<R> {
    let sx = if new_w > 1 {
        R::c((grid.width - 1) as f64) / R::c((new_w - 1) as f64)
    } else {
        R::zero()
    };
    let sy = if new_h > 1 {
        R::c((grid.height - 1) as f64) / R::c((new_h - 1) as f64)
    } else {
        R::zero()
    };
    let mut out = ImageGrid::zeros(new_w, new_h, grid.channels);
    let mut buf = vec![R::zero(); grid.channels];
    for y in 0..new_h {
        for x in 0..new_w {
            grid.sample_clamped(R::c(x as f64) * sx, R::c(y as f64) * sy, &mut buf);
            for c in 0..grid.channels {
                out.set(x, y, c, buf[c]);
            }
        }
    }
    out
}

/// Warp the source image into the target frame using per-pixel depth and the
/// relative pose. The mask is false where the projection fell behind the
/// camera or outside the source image.
pub fn warp_image<R: Real>(
    source: &ImageGrid<R>,
    depth: &DepthMap<R>,
    pose: &Se3Pose<R>,
    k: &CameraIntrinsics<R>,
) -> Result<(ImageGrid<R>, Vec<bool>)> {
    if source.width != depth.width() || source.height != depth.height() {
        return Err(CoreError::ShapeMismatch(format!(
            "source {}x{} vs depth {}x{}",
            source.width,
            source.height,
            depth.width(),
            depth.height()
        )));
    }
    let mut out = ImageGrid::zeros(source.width, source.height, source.channels);
    let mut mask = vec![false; source.width * source.height];
    let mut buf = vec![R::zero(); source.channels];
    for y in 0..source.height {
        for x in 0..source.width {
            let u = Vector2::new(R::c(x as f64), R::c(y as f64));
            let d = depth.get(x, y);
            match project(&u, d, pose, k) {
                Ok(p) => {
                    let in_bounds = source.sample_clamped(p.pixel.x, p.pixel.y, &mut buf);
                    for c in 0..source.channels {
                        out.set(x, y, c, buf[c]);
                    }
                    mask[y * source.width + x] = in_bounds;
                }
                Err(CoreError::BehindCamera) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok((out, mask))
}

/// Matching features at working resolution: channel 0 is locally normalized
/// intensity, channels 1 and 2 are the horizontal and vertical intensity
/// gradients.
#[derive(Clone, Debug)]
pub struct FeatureMap<R: Real> {
    pub grid: ImageGrid<R>,
}

pub const FEAT_CHANNELS: usize = 3;
pub const CH_NORM: usize = 0;
pub const CH_GRAD_X: usize = 1;
pub const CH_GRAD_Y: usize = 2;

impl<R: Real> FeatureMap<R> {
    pub fn width(&self) -> usize {
        self.grid.width()
    }
    pub fn height(&self) -> usize {
        self.grid.height()
    }

    /// Gradient magnitude of the underlying intensity at a pixel.
    pub fn gradient_magnitude(&self, x: usize, y: usize) -> R {
        let gx = self.grid.get(x, y, CH_GRAD_X);
        let gy = self.grid.get(x, y, CH_GRAD_Y);
        (gx * gx + gy * gy).sqrt()
    }

    /// Pixels with enough intensity gradient to constrain matching.
    pub fn textured_mask(&self, threshold: R) -> Vec<bool> {
        let (w, h) = (self.width(), self.height());
        let mut mask = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                let g = self.grid.get(x, y, CH_GRAD_X).abs() + self.grid.get(x, y, CH_GRAD_Y).abs();
                mask[y * w + x] = g > threshold;
            }
        }
        mask
    }
}

/// Feature maps at working resolution and two half-resolution levels.
#[derive(Clone, Debug)]
pub struct FeaturePyramid<R: Real> {
    levels: Vec<FeatureMap<R>>,
}

impl<R: Real> FeaturePyramid<R> {
    /// Assemble a pyramid from explicit levels (finest first). Used by the
    /// synthetic harness to build pairs whose features warp exactly.
    pub fn from_levels(levels: Vec<FeatureMap<R>>) -> Result<Self> {
        if levels.is_empty() {
            return Err(CoreError::InvalidArgument("pyramid needs at least one level".into()));
        }
        Ok(Self { levels })
    }

    /// Level `n` in `1..=3`; level 1 is working (quarter) resolution.
    pub fn level(&self, n: usize) -> &FeatureMap<R> {
        &self.levels[n - 1]
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }
}

const NORM_WINDOW: i64 = 3; // 7x7 window half-size
const NORM_EPS: f64 = 2.0;

/// Extract the matching-feature pyramid from a single- or tri-channel image.
pub fn extract_features<R: Real>(image: &ImageGrid<R>) -> Result<FeaturePyramid<R>> {
    if image.width() < 8 || image.height() < 8 {
        return Err(CoreError::TooSmall(format!(
            "{}x{} image, need at least 8x8",
            image.width(),
            image.height()
        )));
    }
    let gray = image.luminance()?;
    let qw = image.width().div_ceil(4);
    let qh = image.height().div_ceil(4);
    // anti-alias, then stride decimation (not align-corners resize): working
    // pixel (x, y) must sit exactly at full-resolution (4x, 4y) to agree with
    // quarter-scaled intrinsics, and sharp content must land consistently in
    // both views of a pair
    let quarter = decimate(&binomial_blur(&binomial_blur(&binomial_blur(&gray))), 4);

    let mut feat = ImageGrid::zeros(qw, qh, FEAT_CHANNELS);
    for y in 0..qh {
        for x in 0..qw {
            // 7x7 local mean/std, window clamped at borders
            let x_lo = (x as i64 - NORM_WINDOW).max(0) as usize;
            let x_hi = (x as i64 + NORM_WINDOW).min(qw as i64 - 1) as usize;
            let y_lo = (y as i64 - NORM_WINDOW).max(0) as usize;
            let y_hi = (y as i64 + NORM_WINDOW).min(qh as i64 - 1) as usize;
            let mut sum = R::zero();
            let mut sum2 = R::zero();
            let mut count = 0usize;
            for yy in y_lo..=y_hi {
                for xx in x_lo..=x_hi {
                    let v = quarter.get(xx, yy, 0);
                    sum += v;
                    sum2 += v * v;
                    count += 1;
                }
            }
            let n = R::c(count as f64);
            let mean = sum / n;
            let var = (sum2 / n - mean * mean).max(R::zero());
            let std = var.sqrt();
            let v = quarter.get(x, y, 0);
            feat.set(x, y, CH_NORM, (v - mean) / (std + R::c(NORM_EPS)));

            // central differences with clamped indices
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(qw - 1);
            let ym = y.saturating_sub(1);
            let yp = (y + 1).min(qh - 1);
            let half = R::c(0.5);
            feat.set(x, y, CH_GRAD_X, (quarter.get(xp, y, 0) - quarter.get(xm, y, 0)) * half);
            feat.set(x, y, CH_GRAD_Y, (quarter.get(x, yp, 0) - quarter.get(x, ym, 0)) * half);
        }
    }

    let mut levels = vec![FeatureMap { grid: feat }];
    for _ in 1..3 {
        let prev = &levels.last().unwrap().grid;
        let w = prev.width().div_ceil(2);
        let h = prev.height().div_ceil(2);
        levels.push(FeatureMap { grid: bilinear_resize(prev, w, h) });
    }
    Ok(FeaturePyramid { levels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::Twist;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;
    use proptest::prelude::*;

    fn ramp(width: usize, height: usize, a: f64, b: f64, c: f64) -> ImageGrid<f64> {
        ImageGrid::from_fn(width, height, |x, y| a * x as f64 + b * y as f64 + c)
    }

    #[test]
    fn new_rejects_wrong_length_and_non_finite() {
        assert!(matches!(
            ImageGrid::new(2, 2, 1, vec![0.0f64; 3]),
            Err(CoreError::ShapeMismatch(_))
        ));
        assert!(matches!(
            ImageGrid::new(2, 1, 1, vec![0.0, f64::NAN]),
            Err(CoreError::InvalidArgument(_))
        ));
    }

    #[test]
    fn sample_at_lattice_is_exact() {
        let img = ImageGrid::from_fn(5, 4, |x, y| (y * 5 + x) as f64 * 0.37 - 1.0);
        let mut out = [0.0];
        for y in 0..4 {
            for x in 0..5 {
                assert!(img.sample_clamped(x as f64, y as f64, &mut out));
                assert_relative_eq!(out[0], img.get(x, y, 0), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn sample_at_midpoint_averages_neighbors() {
        let img = ImageGrid::new(2, 1, 1, vec![2.0, 6.0]).unwrap();
        let mut out = [0.0];
        assert!(img.sample_clamped(0.5, 0.0, &mut out));
        assert_relative_eq!(out[0], 4.0, epsilon = 1e-12);
    }

    #[test]
    fn out_of_range_clamps_and_flags() {
        let img = ImageGrid::from_fn(4, 3, |x, y| (x + 10 * y) as f64);
        let mut out = [0.0];
        assert!(!img.sample_clamped(-1.5, 0.0, &mut out));
        assert_relative_eq!(out[0], 0.0, epsilon = 1e-12);
        assert!(!img.sample_clamped(10.0, 2.0, &mut out));
        assert_relative_eq!(out[0], 23.0, epsilon = 1e-12);
    }

    #[test]
    fn bilinear_sample_rejects_non_finite_coordinate() {
        let img = ImageGrid::from_fn(4, 4, |_, _| 1.0);
        let r = bilinear_sample(&img, &[Vector2::new(f64::INFINITY, 0.0)]);
        assert!(matches!(r, Err(CoreError::InvalidArgument(_))));
    }

    #[test]
    fn gradient_of_linear_ramp_is_exact() {
        let img = ramp(8, 6, 0.7, -0.3, 2.0);
        let mut out = [0.0];
        let mut grad = [0.0; 2];
        for &(x, y) in &[(1.25, 2.75), (3.5, 0.5), (6.1, 4.9)] {
            assert!(img.sample_with_gradient(x, y, &mut out, &mut grad));
            assert_relative_eq!(out[0], 0.7 * x - 0.3 * y + 2.0, epsilon = 1e-12);
            assert_relative_eq!(grad[0], 0.7, epsilon = 1e-12);
            assert_relative_eq!(grad[1], -0.3, epsilon = 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences_inside_a_cell() {
        let img = ImageGrid::from_fn(6, 6, |x, y| ((x * 31 + y * 17) % 7) as f64 * 0.23);
        let (x, y) = (2.37, 3.62);
        let mut out = [0.0];
        let mut grad = [0.0; 2];
        img.sample_with_gradient(x, y, &mut out, &mut grad);
        let h = 1e-7;
        let mut a = [0.0];
        let mut b = [0.0];
        img.sample_clamped(x + h, y, &mut a);
        img.sample_clamped(x - h, y, &mut b);
        assert_relative_eq!(grad[0], (a[0] - b[0]) / (2.0 * h), epsilon = 1e-6);
        img.sample_clamped(x, y + h, &mut a);
        img.sample_clamped(x, y - h, &mut b);
        assert_relative_eq!(grad[1], (a[0] - b[0]) / (2.0 * h), epsilon = 1e-6);
    }

    #[test]
    fn resize_preserves_corners_and_constants() {
        let img = ImageGrid::from_fn(9, 7, |x, y| (x as f64).sin() + (y as f64).cos());
        let small = bilinear_resize(&img, 5, 4);
        assert_eq!((small.width(), small.height()), (5, 4));
        // align-corners: the four corners are preserved exactly
        assert_relative_eq!(small.get(0, 0, 0), img.get(0, 0, 0), epsilon = 1e-12);
        assert_relative_eq!(small.get(4, 0, 0), img.get(8, 0, 0), epsilon = 1e-12);
        assert_relative_eq!(small.get(0, 3, 0), img.get(0, 6, 0), epsilon = 1e-12);
        assert_relative_eq!(small.get(4, 3, 0), img.get(8, 6, 0), epsilon = 1e-12);

        let flat = ImageGrid::from_fn(10, 10, |_, _| 0.625f64);
        let r = bilinear_resize(&flat, 3, 17);
        assert!(r.data().iter().all(|v| (v - 0.625).abs() < 1e-12));
    }

    #[test]
    fn luminance_weights() {
        let img = ImageGrid::new(1, 1, 3, vec![1.0, 0.5, 0.25]).unwrap();
        let l = img.luminance().unwrap();
        assert_relative_eq!(l.get(0, 0, 0), 0.299 + 0.587 * 0.5 + 0.114 * 0.25, epsilon = 1e-12);
        let bad = ImageGrid::new(1, 1, 2, vec![0.0, 0.0]).unwrap();
        assert!(bad.luminance().is_err());
    }

    #[test]
    fn warp_identity_pose_reproduces_source() {
        let src = ImageGrid::from_fn(12, 9, |x, y| ((x * 3 + y * 5) % 11) as f64 / 11.0);
        let depth = DepthMap::constant(12, 9, 4.2);
        let k = CameraIntrinsics::new(10.0, 10.0, 6.0, 4.0, 12, 9).unwrap();
        let (warped, mask) = warp_image(&src, &depth, &Se3Pose::identity(), &k).unwrap();
        assert!(mask.iter().all(|&m| m));
        for (a, b) in warped.data().iter().zip(src.data()) {
            assert_relative_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn warp_translation_shifts_fronto_parallel_scene() {
        // camera moved right by 1m, plane at depth 10, fx=20 -> 2px left shift in samples
        let src = ramp(16, 8, 1.0, 0.0, 0.0);
        let depth = DepthMap::constant(16, 8, 10.0);
        let k = CameraIntrinsics::new(20.0, 20.0, 8.0, 4.0, 16, 8).unwrap();
        let pose =
            crate::se3::exp_map(&Twist::new(Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0)))
                .unwrap();
        let (warped, mask) = warp_image(&src, &depth, &pose, &k).unwrap();
        for y in 0..8 {
            for x in 0..14 {
                assert!(mask[y * 16 + x]);
                assert_relative_eq!(warped.get(x, y, 0), x as f64 + 2.0, epsilon = 1e-9);
            }
            assert!(!mask[y * 16 + 14] && !mask[y * 16 + 15]);
        }
    }

    #[test]
    fn warp_shape_mismatch_rejected() {
        let src = ImageGrid::from_fn(8, 8, |_, _| 0.0);
        let depth = DepthMap::constant(4, 4, 1.0);
        let k = CameraIntrinsics::new(5.0, 5.0, 4.0, 4.0, 8, 8).unwrap();
        assert!(matches!(
            warp_image(&src, &depth, &Se3Pose::identity(), &k),
            Err(CoreError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn features_reject_tiny_images() {
        let img = ImageGrid::from_fn(7, 8, |_, _| 0.5f64);
        assert!(matches!(extract_features(&img), Err(CoreError::TooSmall(_))));
    }

    #[test]
    fn feature_pyramid_dimensions() {
        let img = ImageGrid::from_fn(640, 192, |x, y| ((x + y) % 5) as f64 / 5.0);
        let pyr = extract_features(&img).unwrap();
        assert_eq!(pyr.num_levels(), 3);
        assert_eq!((pyr.level(1).width(), pyr.level(1).height()), (160, 48));
        assert_eq!((pyr.level(2).width(), pyr.level(2).height()), (80, 24));
        assert_eq!((pyr.level(3).width(), pyr.level(3).height()), (40, 12));
        // non-multiple-of-4 dimensions round up
        let odd = ImageGrid::from_fn(10, 9, |x, _| x as f64);
        let p2 = extract_features(&odd).unwrap();
        assert_eq!((p2.level(1).width(), p2.level(1).height()), (3, 3));
    }

    #[test]
    fn constant_image_has_zero_features() {
        let img = ImageGrid::from_fn(32, 32, |_, _| 0.7f64);
        let pyr = extract_features(&img).unwrap();
        let f = pyr.level(1);
        for &v in f.grid.data() {
            assert!(v.abs() < 1e-9);
        }
        assert!(f.textured_mask(0.05).iter().all(|&m| !m));
    }

    #[test]
    fn ramp_image_gradient_channel_matches_slope() {
        // stride-4 decimation of a ramp stays a ramp with 4x the slope
        let img = ImageGrid::from_fn(64, 32, |x, _| x as f64 * 0.01);
        let pyr = extract_features(&img).unwrap();
        let f = pyr.level(1);
        let slope = 0.04;
        // interior pixels: central difference of an exact ramp; skip a
        // three-pixel border where the blur's edge clamping bends the ramp
        for y in 3..f.height() - 3 {
            for x in 3..f.width() - 3 {
                assert_relative_eq!(f.grid.get(x, y, CH_GRAD_X), slope, epsilon = 1e-9);
                assert_relative_eq!(f.grid.get(x, y, CH_GRAD_Y), 0.0, epsilon = 1e-9);
            }
        }
    }

    proptest! {
        #[test]
        fn prop_bilinear_exact_on_affine_images(
            a in -2.0f64..2.0, b in -2.0f64..2.0, c in -5.0f64..5.0,
            x in 0.0f64..7.0, y in 0.0f64..5.0,
        ) {
            let img = ramp(8, 6, a, b, c);
            let mut out = [0.0];
            prop_assert!(img.sample_clamped(x, y, &mut out));
            prop_assert!((out[0] - (a * x + b * y + c)).abs() < 1e-9);
        }

        #[test]
        fn prop_sample_is_linear_in_image_values(
            seed in 0u64..1000, alpha in -3.0f64..3.0,
            x in 0.0f64..5.0, y in 0.0f64..5.0,
        ) {
            let f = |x: usize, y: usize| ((x * 7 + y * 13 + seed as usize) % 9) as f64;
            let g = |x: usize, y: usize| ((x * 5 + y * 3 + seed as usize) % 8) as f64;
            let img_f = ImageGrid::from_fn(6, 6, f);
            let img_g = ImageGrid::from_fn(6, 6, g);
            let img_mix = ImageGrid::from_fn(6, 6, |x, y| f(x, y) + alpha * g(x, y));
            let (mut sf, mut sg, mut sm) = ([0.0], [0.0], [0.0]);
            img_f.sample_clamped(x, y, &mut sf);
            img_g.sample_clamped(x, y, &mut sg);
            img_mix.sample_clamped(x, y, &mut sm);
            prop_assert!((sm[0] - (sf[0] + alpha * sg[0])).abs() < 1e-9);
        }
    }
}
