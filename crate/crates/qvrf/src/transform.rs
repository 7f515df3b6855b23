//! Blockwise orthonormal cosine transform and the per-band scale path.
//!
//! The analysis side turns an 8-bit luma image into `B*B` coefficient
//! planes ("bands"), one value per block, with the DC band stored as
//! left-neighbor DPCM residuals so every band is zero-mean and a single
//! Gaussian family per band is enough. The synthesis side undoes DPCM,
//! applies the inverse transform, rounds and clips.
//!
//! The transform is orthonormal, so squared error carries over exactly
//! between the coefficient domain and the pixel domain (before clipping).
//!
//! Per-band scales are estimated once from the unquantized coefficients and
//! quantized on a logarithmic codebook; their coded size never depends on
//! the regulator.

use crate::entropy::SIGMA_MIN;
use crate::error::{Error, Result};

/// Default transform block size.
pub const DEFAULT_BLOCK: usize = 8;
/// Log step of the scale codebook.
pub const SCALE_STEP: f64 = 0.25;
/// Number of codebook entries.
pub const SCALE_LEVELS: usize = 64;
/// Bits per coded scale index: ceil(log2(SCALE_LEVELS)).
pub const SCALE_BITS: u32 = 6;

/// 8-bit luma image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    samples: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, samples: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::BadImage("zero-sized image".into()));
        }
        if samples.len() != width * height {
            return Err(Error::BadImage(format!(
                "expected {} samples, got {}",
                width * height,
                samples.len()
            )));
        }
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    pub fn constant(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> u8) -> Result<Self> {
        let mut samples = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                samples.push(f(x, y));
            }
        }
        Self::new(width, height, samples)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.samples[y * self.width + x]
    }

    /// Sample with edge replication beyond the right/bottom border.
    fn get_clamped(&self, x: usize, y: usize) -> u8 {
        self.get(x.min(self.width - 1), y.min(self.height - 1))
    }
}

/// Precomputed orthonormal DCT-II basis for one block size.
struct CosineBasis {
    b: usize,
    /// `basis[u * b + i] = alpha_u * cos(pi * (2i + 1) * u / (2b))`
    basis: Vec<f64>,
}

impl CosineBasis {
    fn new(b: usize) -> Self {
        let mut basis = vec![0.0; b * b];
        for u in 0..b {
            let alpha = if u == 0 {
                (1.0 / b as f64).sqrt()
            } else {
                (2.0 / b as f64).sqrt()
            };
            for i in 0..b {
                basis[u * b + i] = alpha
                    * (std::f64::consts::PI * (2 * i + 1) as f64 * u as f64 / (2 * b) as f64).cos();
            }
        }
        Self { b, basis }
    }

    /// `out = C * x * C^T` (forward) on one `b*b` block.
    fn forward_block(&self, x: &[f64], out: &mut [f64]) {
        let b = self.b;
        let mut tmp = vec![0.0; b * b];
        // tmp = C * x
        for u in 0..b {
            for j in 0..b {
                let mut acc = 0.0;
                for i in 0..b {
                    acc += self.basis[u * b + i] * x[i * b + j];
                }
                tmp[u * b + j] = acc;
            }
        }
        // out = tmp * C^T
        for u in 0..b {
            for v in 0..b {
                let mut acc = 0.0;
                for j in 0..b {
                    acc += tmp[u * b + j] * self.basis[v * b + j];
                }
                out[u * b + v] = acc;
            }
        }
    }

    /// `out = C^T * y * C` (inverse) on one `b*b` block.
    fn inverse_block(&self, y: &[f64], out: &mut [f64]) {
        let b = self.b;
        let mut tmp = vec![0.0; b * b];
        // tmp = C^T * y
        for i in 0..b {
            for v in 0..b {
                let mut acc = 0.0;
                for u in 0..b {
                    acc += self.basis[u * b + i] * y[u * b + v];
                }
                tmp[i * b + v] = acc;
            }
        }
        // out = tmp * C
        for i in 0..b {
            for j in 0..b {
                let mut acc = 0.0;
                for v in 0..b {
                    acc += tmp[i * b + v] * self.basis[v * b + j];
                }
                out[i * b + j] = acc;
            }
        }
    }
}

/// Transform coefficients grouped into `B*B` band planes of one value per
/// block. Band `v * B + u` holds frequency `(u, v)`; band 0 (DC) is stored
/// as DPCM residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTensor {
    width: usize,
    height: usize,
    block: usize,
    brows: usize,
    bcols: usize,
    planes: Vec<Vec<f64>>,
}

impl LatentTensor {
    pub fn empty(width: usize, height: usize, block: usize) -> Result<Self> {
        validate_block(block)?;
        if width == 0 || height == 0 {
            return Err(Error::BadImage("zero-sized latent".into()));
        }
        let bcols = width.div_ceil(block);
        let brows = height.div_ceil(block);
        Ok(Self {
            width,
            height,
            block,
            brows,
            bcols,
            planes: vec![vec![0.0; brows * bcols]; block * block],
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn block(&self) -> usize {
        self.block
    }

    pub fn block_rows(&self) -> usize {
        self.brows
    }

    pub fn block_cols(&self) -> usize {
        self.bcols
    }

    pub fn num_bands(&self) -> usize {
        self.planes.len()
    }

    /// Coefficients per plane.
    pub fn plane_len(&self) -> usize {
        self.brows * self.bcols
    }

    /// Total coefficient count.
    pub fn len(&self) -> usize {
        self.num_bands() * self.plane_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane(&self, band: usize) -> &[f64] {
        &self.planes[band]
    }

    pub fn plane_mut(&mut self, band: usize) -> &mut [f64] {
        &mut self.planes[band]
    }

    /// DC prediction for the raster position `idx` given the (possibly
    /// reconstructed) DC values seen so far: left neighbor, above for the
    /// first column, mid-gray for the origin.
    pub fn dc_prediction(dc: &[f64], idx: usize, bcols: usize, block: usize) -> f64 {
        let (r, c) = (idx / bcols, idx % bcols);
        if c > 0 {
            dc[idx - 1]
        } else if r > 0 {
            dc[idx - bcols]
        } else {
            gray_dc(block)
        }
    }
}

/// DC coefficient of a flat mid-gray block: the origin predictor.
pub fn gray_dc(block: usize) -> f64 {
    128.0 * block as f64
}

fn validate_block(block: usize) -> Result<()> {
    match block {
        4 | 8 | 16 => Ok(()),
        other => Err(Error::BadBlockSize(other)),
    }
}

/// Forward transform: pads by edge replication to a multiple of `block`,
/// applies the blockwise orthonormal DCT, groups coefficients into band
/// planes and replaces the DC plane with DPCM residuals.
pub fn forward(img: &Image, block: usize) -> Result<LatentTensor> {
    validate_block(block)?;
    let mut lat = LatentTensor::empty(img.width(), img.height(), block)?;
    let basis = CosineBasis::new(block);
    let (brows, bcols) = (lat.brows, lat.bcols);

    let mut pixels = vec![0.0; block * block];
    let mut coeffs = vec![0.0; block * block];
    for br in 0..brows {
        for bc in 0..bcols {
            for i in 0..block {
                for j in 0..block {
                    pixels[i * block + j] = img.get_clamped(bc * block + j, br * block + i) as f64;
                }
            }
            basis.forward_block(&pixels, &mut coeffs);
            for v in 0..block {
                for u in 0..block {
                    lat.planes[v * block + u][br * bcols + bc] = coeffs[v * block + u];
                }
            }
        }
    }

    // DC plane -> DPCM residuals, raster order.
    let dc = lat.planes[0].clone();
    for idx in 0..dc.len() {
        let pred = LatentTensor::dc_prediction(&dc, idx, bcols, block);
        lat.planes[0][idx] = dc[idx] - pred;
    }
    Ok(lat)
}

/// Inverse transform: undoes the DC DPCM, applies the inverse DCT per
/// block, rounds half away from zero and clips to `[0, 255]`, then crops
/// any padding.
pub fn inverse(lat: &LatentTensor) -> Result<Image> {
    let block = lat.block;
    let basis = CosineBasis::new(block);
    let (brows, bcols) = (lat.brows, lat.bcols);

    let mut dc = vec![0.0; lat.plane_len()];
    for idx in 0..dc.len() {
        let pred = LatentTensor::dc_prediction(&dc, idx, bcols, block);
        dc[idx] = lat.planes[0][idx] + pred;
    }

    let mut samples = vec![0u8; lat.width * lat.height];
    let mut coeffs = vec![0.0; block * block];
    let mut pixels = vec![0.0; block * block];
    for br in 0..brows {
        for bc in 0..bcols {
            for v in 0..block {
                for u in 0..block {
                    coeffs[v * block + u] = if v == 0 && u == 0 {
                        dc[br * bcols + bc]
                    } else {
                        lat.planes[v * block + u][br * bcols + bc]
                    };
                }
            }
            basis.inverse_block(&coeffs, &mut pixels);
            for i in 0..block {
                let y = br * block + i;
                if y >= lat.height {
                    break;
                }
                for j in 0..block {
                    let x = bc * block + j;
                    if x >= lat.width {
                        break;
                    }
                    let v = pixels[i * block + j].round().clamp(0.0, 255.0) as u8;
                    samples[y * lat.width + x] = v;
                }
            }
        }
    }
    Image::new(lat.width, lat.height, samples)
}

/// Per-band conditional scales, floored at [`SIGMA_MIN`].
#[derive(Debug, Clone, PartialEq)]
pub struct BandScales {
    sigmas: Vec<f64>,
}

impl BandScales {
    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }
}

/// Quantized per-band scale indices; this is what travels in the side
/// segment of the container.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SideInfo {
    indices: Vec<u8>,
}

impl SideInfo {
    pub fn new(indices: Vec<u8>) -> Result<Self> {
        if indices.iter().any(|&i| i as usize >= SCALE_LEVELS) {
            return Err(Error::CorruptHeader("scale index out of codebook range"));
        }
        Ok(Self { indices })
    }

    pub fn indices(&self) -> &[u8] {
        &self.indices
    }
}

/// Estimates each band's scale from the unquantized coefficients: the
/// standard deviation about the model's fixed zero mean, floored at
/// [`SIGMA_MIN`]. The regulator never enters here, so the side information
/// is the same at every rate point.
pub fn estimate_scales(lat: &LatentTensor) -> BandScales {
    let n = lat.plane_len() as f64;
    let sigmas = lat
        .planes
        .iter()
        .map(|plane| {
            let energy: f64 = plane.iter().map(|&y| y * y).sum();
            (energy / n).sqrt().max(SIGMA_MIN)
        })
        .collect();
    BandScales { sigmas }
}

/// Quantizes scales onto the logarithmic codebook
/// `sigma' = SIGMA_MIN * exp(SCALE_STEP * index)`, clamping anything above
/// the top entry to the last index.
pub fn quantize_scales(scales: &BandScales) -> SideInfo {
    let indices = scales
        .sigmas
        .iter()
        .map(|&s| {
            let idx = ((s / SIGMA_MIN).ln() / SCALE_STEP).round();
            idx.clamp(0.0, (SCALE_LEVELS - 1) as f64) as u8
        })
        .collect();
    SideInfo { indices }
}

pub fn dequantize_scales(si: &SideInfo) -> BandScales {
    let sigmas = si
        .indices
        .iter()
        .map(|&i| SIGMA_MIN * (SCALE_STEP * i as f64).exp())
        .collect();
    BandScales { sigmas }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::new(w, h, (0..w * h).map(|_| rng.random()).collect()).unwrap()
    }

    #[test]
    fn flat_gray_is_all_zero_latent() {
        let img = Image::constant(32, 24, 128).unwrap();
        let lat = forward(&img, 8).unwrap();
        for band in 0..lat.num_bands() {
            assert!(lat.plane(band).iter().all(|&v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn forward_inverse_identity() {
        for (w, h) in [(64, 48), (250, 190), (8, 8), (1, 1), (13, 9)] {
            let img = random_image(w, h, w as u64 * 31 + h as u64);
            let lat = forward(&img, 8).unwrap();
            let back = inverse(&lat).unwrap();
            assert_eq!(img, back, "dims {w}x{h}");
        }
    }

    #[test]
    fn forward_inverse_identity_other_blocks() {
        for block in [4usize, 16] {
            let img = random_image(50, 34, block as u64);
            let back = inverse(&forward(&img, block).unwrap()).unwrap();
            assert_eq!(img, back);
        }
        assert!(forward(&random_image(8, 8, 0), 5).is_err());
    }

    #[test]
    fn parseval_energy_preserved() {
        // Quantize every coefficient to a grid and check the coefficient
        // domain squared error equals the pixel domain squared error before
        // rounding/clipping. DC is handled closed-loop like the codec does.
        let img = random_image(64, 64, 99);
        let block = 8;
        let lat = forward(&img, block).unwrap();
        let step = 0.5f64;
        let mut rec = lat.clone();
        let mut latent_sse = 0.0;

        // closed-loop DC
        let bcols = lat.block_cols();
        let mut dc_orig = vec![0.0; lat.plane_len()];
        for idx in 0..dc_orig.len() {
            let pred = LatentTensor::dc_prediction(&dc_orig, idx, bcols, block);
            dc_orig[idx] = lat.plane(0)[idx] + pred;
        }
        let mut dc_rec = vec![0.0; lat.plane_len()];
        for idx in 0..dc_orig.len() {
            let pred = LatentTensor::dc_prediction(&dc_rec, idx, bcols, block);
            let res = dc_orig[idx] - pred;
            let res_hat = (res / step).round() * step;
            latent_sse += (res - res_hat) * (res - res_hat);
            dc_rec[idx] = pred + res_hat;
            rec.plane_mut(0)[idx] = res_hat;
        }
        for band in 1..lat.num_bands() {
            for (i, &y) in lat.plane(band).iter().enumerate() {
                let y_hat = (y / step).round() * step;
                latent_sse += (y - y_hat) * (y - y_hat);
                rec.plane_mut(band)[i] = y_hat;
            }
        }

        // pixel-domain SSE before rounding: reconstruct in floats
        let basis = CosineBasis::new(block);
        let mut dc = vec![0.0; rec.plane_len()];
        for idx in 0..dc.len() {
            let pred = LatentTensor::dc_prediction(&dc, idx, bcols, block);
            dc[idx] = rec.plane(0)[idx] + pred;
        }
        let mut pixel_sse = 0.0;
        let mut coeffs = vec![0.0; block * block];
        let mut pixels = vec![0.0; block * block];
        for br in 0..lat.block_rows() {
            for bc in 0..bcols {
                for v in 0..block {
                    for u in 0..block {
                        coeffs[v * block + u] = if v == 0 && u == 0 {
                            dc[br * bcols + bc]
                        } else {
                            rec.plane(v * block + u)[br * bcols + bc]
                        };
                    }
                }
                basis.inverse_block(&coeffs, &mut pixels);
                for i in 0..block {
                    for j in 0..block {
                        let orig = img.get(bc * block + j, br * block + i) as f64;
                        let d = orig - pixels[i * block + j];
                        pixel_sse += d * d;
                    }
                }
            }
        }
        let rel = (latent_sse - pixel_sse).abs() / latent_sse.max(1e-30);
        assert!(rel < 1e-9, "relative energy mismatch {rel}");
    }

    #[test]
    fn scales_clamped_and_estimated() {
        let img = Image::constant(32, 32, 77).unwrap();
        let lat = forward(&img, 8).unwrap();
        let scales = estimate_scales(&lat);
        // Flat image: every band scale collapses to the floor. (DC residual
        // at the origin is nonzero because 77 != mid-gray, but one value in
        // 16 keeps rms below the floor? Not necessarily; check AC bands.)
        for &s in &scales.sigmas()[1..] {
            assert_eq!(s, SIGMA_MIN);
        }
    }

    #[test]
    fn scale_estimate_matches_sampling_oracle() {
        // 10^4 i.i.d. N(0, 4) samples -> sigma within 2 +/- 0.1.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut lat = LatentTensor::empty(800, 800, 8).unwrap();
        assert_eq!(lat.plane_len(), 10_000);
        for i in 0..10_000 {
            let (u1, u2): (f64, f64) = (rng.random(), rng.random());
            let z = (-2.0 * u1.max(1e-12).ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            lat.plane_mut(3)[i] = 2.0 * z;
        }
        let s = estimate_scales(&lat).sigmas()[3];
        assert!((s - 2.0).abs() < 0.1, "estimated {s}");
    }

    #[test]
    fn scale_quantization_examples() {
        let scales = BandScales {
            sigmas: vec![SIGMA_MIN, 1.0, 1e9],
        };
        let si = quantize_scales(&scales);
        assert_eq!(si.indices()[0], 0);
        assert_eq!(si.indices()[2], (SCALE_LEVELS - 1) as u8); // clamp at top
        let back = dequantize_scales(&si);
        assert!(back.sigmas().iter().all(|&s| s >= SIGMA_MIN));
    }

    proptest! {
        #[test]
        fn scale_quantization_idempotent(sigma in SIGMA_MIN..1e5f64) {
            let si = quantize_scales(&BandScales { sigmas: vec![sigma] });
            let si2 = quantize_scales(&dequantize_scales(&si));
            prop_assert_eq!(si, si2);
        }

        #[test]
        fn roundtrip_any_dims(w in 1usize..40, h in 1usize..40, seed in 0u64..100) {
            let img = random_image(w, h, seed);
            let back = inverse(&forward(&img, 8).unwrap()).unwrap();
            prop_assert_eq!(img, back);
        }
    }
}
