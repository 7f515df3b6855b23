//! Quality metrics and rate-distortion curve comparison.
//!
//! PSNR and a 5-scale structural similarity measure over 8-bit luma, plus
//! the average-bitrate-difference metric between two RD curves (cubic fit
//! of log-rate against quality, integrated over the common quality range,
//! natural-log bookkeeping throughout).

use crate::error::{Error, Result};
use crate::transform::Image;

/// PSNR reported for a zero-MSE pair, and the overall cap. Keeps CSVs free
/// of infinities.
pub const PSNR_CAP_DB: f64 = 99.0;

const MSSSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
const MSSSIM_WINDOW: usize = 11;
const MSSSIM_SIGMA: f64 = 1.5;
const C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

fn check_dims(a: &Image, b: &Image) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch(
            a.width(),
            a.height(),
            b.width(),
            b.height(),
        ));
    }
    Ok(())
}

/// Mean squared error in pixel units.
pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    check_dims(a, b)?;
    let sse: u64 = a
        .samples()
        .iter()
        .zip(b.samples())
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum();
    Ok(sse as f64 / a.samples().len() as f64)
}

/// Peak signal-to-noise ratio in dB, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let mse = mse(a, b)?;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (255.0f64 * 255.0 / mse).log10()).min(PSNR_CAP_DB))
}

struct PlaneF {
    w: usize,
    h: usize,
    v: Vec<f64>,
}

impl PlaneF {
    fn from_image(img: &Image) -> Self {
        Self {
            w: img.width(),
            h: img.height(),
            v: img.samples().iter().map(|&s| s as f64).collect(),
        }
    }

    fn downsample_2x(&self) -> Self {
        let (w, h) = (self.w / 2, self.h / 2);
        let mut v = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let i = 2 * y * self.w + 2 * x;
                v.push(
                    (self.v[i] + self.v[i + 1] + self.v[i + self.w] + self.v[i + self.w + 1]) / 4.0,
                );
            }
        }
        Self { w, h, v }
    }
}

fn gaussian_kernel() -> [f64; MSSSIM_WINDOW] {
    let mut k = [0.0; MSSSIM_WINDOW];
    let mid = (MSSSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, slot) in k.iter_mut().enumerate() {
        let d = i as f64 - mid;
        *slot = (-d * d / (2.0 * MSSSIM_SIGMA * MSSSIM_SIGMA)).exp();
        sum += *slot;
    }
    for slot in &mut k {
        *slot /= sum;
    }
    k
}

/// Separable Gaussian blur, valid region only: output is
/// `(w - 10) x (h - 10)`.
fn blur_valid(p: &PlaneF, kernel: &[f64; MSSSIM_WINDOW]) -> PlaneF {
    let (w, h) = (p.w, p.h);
    let ow = w - MSSSIM_WINDOW + 1;
    let oh = h - MSSSIM_WINDOW + 1;
    let mut horiz = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (t, &k) in kernel.iter().enumerate() {
                acc += k * p.v[y * w + x + t];
            }
            horiz[y * ow + x] = acc;
        }
    }
    let mut v = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (t, &k) in kernel.iter().enumerate() {
                acc += k * horiz[(y + t) * ow + x];
            }
            v[y * ow + x] = acc;
        }
    }
    PlaneF { w: ow, h: oh, v }
}

/// Mean luminance and contrast-structure terms of one scale.
fn ssim_scale(a: &PlaneF, b: &PlaneF, kernel: &[f64; MSSSIM_WINDOW]) -> (f64, f64) {
    let sq = |p: &PlaneF| PlaneF {
        w: p.w,
        h: p.h,
        v: p.v.iter().map(|&x| x * x).collect(),
    };
    let mul = |p: &PlaneF, q: &PlaneF| PlaneF {
        w: p.w,
        h: p.h,
        v: p.v.iter().zip(&q.v).map(|(&x, &y)| x * y).collect(),
    };

    let mu_a = blur_valid(a, kernel);
    let mu_b = blur_valid(b, kernel);
    let e_aa = blur_valid(&sq(a), kernel);
    let e_bb = blur_valid(&sq(b), kernel);
    let e_ab = blur_valid(&mul(a, b), kernel);

    let n = mu_a.v.len() as f64;
    let mut lum = 0.0;
    let mut cs = 0.0;
    for i in 0..mu_a.v.len() {
        let (ma, mb) = (mu_a.v[i], mu_b.v[i]);
        let va = e_aa.v[i] - ma * ma;
        let vb = e_bb.v[i] - mb * mb;
        let cov = e_ab.v[i] - ma * mb;
        lum += (2.0 * ma * mb + C1) / (ma * ma + mb * mb + C1);
        cs += (2.0 * cov + C2) / (va + vb + C2);
    }
    (lum / n, cs / n)
}

/// 5-scale structural similarity in `[0, 1]`. Requires the smaller image
/// dimension to be at least 176 so the coarsest scale still fits an 11x11
/// window.
pub fn ms_ssim(a: &Image, b: &Image) -> Result<f64> {
    check_dims(a, b)?;
    let min_dim = a.width().min(a.height());
    if min_dim < 176 {
        return Err(Error::TooSmallForMsSsim(min_dim));
    }
    let kernel = gaussian_kernel();
    let mut pa = PlaneF::from_image(a);
    let mut pb = PlaneF::from_image(b);
    let mut score = 1.0;
    for (scale, &weight) in MSSSIM_WEIGHTS.iter().enumerate() {
        let (lum, cs) = ssim_scale(&pa, &pb, &kernel);
        if scale == MSSSIM_WEIGHTS.len() - 1 {
            score *= lum.max(0.0).powf(weight) * cs.max(0.0).powf(weight);
        } else {
            score *= cs.max(0.0).powf(weight);
            pa = pa.downsample_2x();
            pb = pb.downsample_2x();
        }
    }
    Ok(score.clamp(0.0, 1.0))
}

/// An RD curve: `(bits-per-pixel, quality-dB)` points with strictly
/// increasing rate and quality. At least 4 points are required.
#[derive(Debug, Clone)]
pub struct RdCurve {
    points: Vec<(f64, f64)>,
}

impl RdCurve {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::CurveTooShort(points.len()));
        }
        if points
            .iter()
            .any(|&(r, q)| !(r.is_finite() && q.is_finite() && r > 0.0))
        {
            return Err(Error::CurveNotMonotone("rate"));
        }
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::CurveNotMonotone("rate"));
            }
            if w[1].1 <= w[0].1 {
                return Err(Error::CurveNotMonotone("quality"));
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    fn quality_range(&self) -> (f64, f64) {
        (
            self.points.first().unwrap().1,
            self.points.last().unwrap().1,
        )
    }
}

/// Everything the rate-difference computation produced, exposed so the
/// integration step can be cross-checked externally.
#[derive(Debug, Clone)]
pub struct BdRateDetail {
    /// Average bitrate difference of `test` against `anchor`, in percent.
    pub percent: f64,
    /// Cubic coefficients of ln(rate) in `t = quality - q_center`,
    /// lowest power first.
    pub anchor_poly: [f64; 4],
    pub test_poly: [f64; 4],
    /// Centering offset applied to quality before fitting.
    pub q_center: f64,
    /// Common quality interval the difference is integrated over.
    pub q_low: f64,
    pub q_high: f64,
}

/// Solves `m x = rhs` for a small dense system with partial pivoting.
fn solve_linear(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Result<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        let pivot = m[pivot_row][col];
        if pivot.abs() < 1e-10 {
            return Err(Error::IllConditionedFit(pivot.abs()));
        }
        m.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            let (upper, lower) = m.split_at_mut(row);
            for (k, v) in lower[0].iter_mut().enumerate().skip(col) {
                *v -= f * upper[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for k in row + 1..n {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    Ok(x)
}

/// Least-squares cubic fit of `ln(rate)` against centered quality.
fn fit_log_rate_cubic(curve: &RdCurve, q_center: f64) -> Result<[f64; 4]> {
    let xs: Vec<f64> = curve.points.iter().map(|&(_, q)| q - q_center).collect();
    let ys: Vec<f64> = curve.points.iter().map(|&(r, _)| r.ln()).collect();
    // normal equations for the degree-3 basis
    let mut m = vec![vec![0.0; 4]; 4];
    let mut rhs = vec![0.0; 4];
    for (&x, &y) in xs.iter().zip(&ys) {
        let powers = [1.0, x, x * x, x * x * x];
        for i in 0..4 {
            rhs[i] += powers[i] * y;
            for j in 0..4 {
                m[i][j] += powers[i] * powers[j];
            }
        }
    }
    let c = solve_linear(m, rhs)?;
    Ok([c[0], c[1], c[2], c[3]])
}

fn poly_integral(c: &[f64; 4], lo: f64, hi: f64) -> f64 {
    let anti = |x: f64| {
        c[0] * x + c[1] * x * x / 2.0 + c[2] * x * x * x / 3.0 + c[3] * x * x * x * x / 4.0
    };
    anti(hi) - anti(lo)
}

/// Average bitrate difference of `test` against `anchor` at equal quality,
/// in percent, with fit details.
pub fn bd_rate_detail(anchor: &RdCurve, test: &RdCurve) -> Result<BdRateDetail> {
    let (a_lo, a_hi) = anchor.quality_range();
    let (t_lo, t_hi) = test.quality_range();
    let q_low = a_lo.max(t_lo);
    let q_high = a_hi.min(t_hi);
    if q_high <= q_low {
        return Err(Error::NoQualityOverlap);
    }
    let q_center = 0.5 * (q_low + q_high);
    let anchor_poly = fit_log_rate_cubic(anchor, q_center)?;
    let test_poly = fit_log_rate_cubic(test, q_center)?;
    let span = q_high - q_low;
    let diff = poly_integral(&test_poly, q_low - q_center, q_high - q_center)
        - poly_integral(&anchor_poly, q_low - q_center, q_high - q_center);
    let mean_diff = diff / span;
    Ok(BdRateDetail {
        percent: (mean_diff.exp() - 1.0) * 100.0,
        anchor_poly,
        test_poly,
        q_center,
        q_low,
        q_high,
    })
}

/// Average bitrate difference of `test` against `anchor`, in percent.
pub fn bd_rate(anchor: &RdCurve, test: &RdCurve) -> Result<f64> {
    Ok(bd_rate_detail(anchor, test)?.percent)
}
