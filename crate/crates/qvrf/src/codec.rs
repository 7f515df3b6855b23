//! End-to-end encoder/decoder and the bitstream container.
//!
//! Container layout (all integers big-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "QVRF"
//! 4       1     version (1)
//! 5       1     block size B
//! 6       1     right padding in pixels
//! 7       1     bottom padding in pixels
//! 8       4     image width
//! 12      4     image height
//! 16      4     regulator a as an IEEE-754 binary32 bit pattern
//! 20      4     side segment length in bytes
//! 24      ...   side segment: per-band scale indices, 6 bits each, MSB first
//! ...     ...   latent segment: range-coded coefficients
//! ```
//!
//! The regulator travels as its exact binary32 bit pattern and the encoder
//! itself works with that rounded value, so both sides derive bit-identical
//! symbol tables. Coefficients are coded band-major, raster order within a
//! band, one table per band built from `(mu = 0, sigma_band, a)`. The DC
//! band is coded as closed-loop DPCM residuals: each residual is taken
//! against the reconstructed neighbor, which keeps every coefficient's
//! error within `1/(2a)` with no drift. Symbols outside a table window are
//! escape-coded followed by 32 raw bits.

use rayon::prelude::*;

use crate::entropy::{
    dequantize, quantize, GaussianParams, Regulator, SymbolDistribution, A_MAX, A_MIN,
};
use crate::error::{Error, Result};
use crate::metrics;
use crate::range_coder::{unzigzag, zigzag, Decoded, RangeDecoder, RangeEncoder};
use crate::rate_control::LinearFit;
use crate::transform::{
    dequantize_scales, estimate_scales, forward, inverse, quantize_scales, Image, LatentTensor,
    SideInfo, SCALE_BITS,
};

pub const MAGIC: [u8; 4] = *b"QVRF";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 24;

/// Format limits: each dimension fits 16 bits and the padded pixel count
/// stays allocatable, so a corrupted header can never trigger an
/// out-of-memory abort on decode.
pub const MAX_DIMENSION: u32 = 65_535;
pub const MAX_PIXELS: u64 = 1 << 28;

/// Fixed-size container header.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Header {
    pub width: u32,
    pub height: u32,
    pub block: u8,
    pub pad_right: u8,
    pub pad_bottom: u8,
    pub a_bits: u32,
    pub side_len: u32,
}

impl Header {
    pub fn a(&self) -> f64 {
        f32::from_bits(self.a_bits) as f64
    }

    pub fn write_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.block);
        out.push(self.pad_right);
        out.push(self.pad_bottom);
        out.extend_from_slice(&self.width.to_be_bytes());
        out.extend_from_slice(&self.height.to_be_bytes());
        out.extend_from_slice(&self.a_bits.to_be_bytes());
        out.extend_from_slice(&self.side_len.to_be_bytes());
    }

    pub fn parse(data: &[u8]) -> Result<Self> {
        if data.len() < HEADER_LEN {
            return Err(Error::CorruptHeader("container shorter than the header"));
        }
        if data[0..4] != MAGIC {
            return Err(Error::BadMagic);
        }
        if data[4] != VERSION {
            return Err(Error::BadVersion(data[4]));
        }
        let be32 = |o: usize| u32::from_be_bytes([data[o], data[o + 1], data[o + 2], data[o + 3]]);
        let header = Self {
            block: data[5],
            pad_right: data[6],
            pad_bottom: data[7],
            width: be32(8),
            height: be32(12),
            a_bits: be32(16),
            side_len: be32(20),
        };
        if !matches!(header.block, 4 | 8 | 16) {
            return Err(Error::CorruptHeader("bad block size"));
        }
        if header.width == 0 || header.height == 0 {
            return Err(Error::CorruptHeader("zero image dimensions"));
        }
        if header.width > MAX_DIMENSION
            || header.height > MAX_DIMENSION
            || header.width as u64 * header.height as u64 > MAX_PIXELS
        {
            return Err(Error::CorruptHeader("dimensions exceed the format limit"));
        }
        let b = header.block as u32;
        if !(header.width + header.pad_right as u32).is_multiple_of(b)
            || !(header.height + header.pad_bottom as u32).is_multiple_of(b)
        {
            return Err(Error::CorruptHeader("padding inconsistent with block size"));
        }
        let bands = header.block as u32 * header.block as u32;
        if header.side_len != (bands * SCALE_BITS).div_ceil(8) {
            return Err(Error::CorruptHeader("side segment length mismatch"));
        }
        let a = header.a();
        if !a.is_finite() || !(A_MIN..=A_MAX).contains(&a) {
            return Err(Error::CorruptHeader("regulator out of range"));
        }
        Ok(header)
    }
}

/// Per-segment bit accounting in bits per pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BitBreakdown {
    pub total_bpp: f64,
    pub latent_bpp: f64,
    pub side_bpp: f64,
}

impl BitBreakdown {
    /// The header's share: `total - latent - side`.
    pub fn header_bpp(&self) -> f64 {
        self.total_bpp - self.latent_bpp - self.side_bpp
    }
}

/// Encoder-side byproducts useful for rate control and reporting.
#[derive(Debug, Clone)]
pub struct EncodeStats {
    /// Ideal latent cost: sum of `-log2 p` over coded symbols plus raw bits.
    pub latent_bits_estimate: f64,
    pub latent_bytes: usize,
    pub side_bytes: usize,
    pub escape_count: usize,
}

/// Result of an encode: the container plus the encoder's own
/// reconstruction, which the decoder must reproduce bit-exactly.
#[derive(Debug, Clone)]
pub struct EncodeOutcome {
    pub bytes: Vec<u8>,
    pub reconstruction: Image,
    pub stats: EncodeStats,
}

struct BitWriter {
    out: Vec<u8>,
    acc: u32,
    nbits: u32,
}

impl BitWriter {
    fn new() -> Self {
        Self {
            out: Vec::new(),
            acc: 0,
            nbits: 0,
        }
    }

    fn write(&mut self, value: u32, n: u32) {
        self.acc = (self.acc << n) | value;
        self.nbits += n;
        while self.nbits >= 8 {
            self.out.push((self.acc >> (self.nbits - 8)) as u8);
            self.nbits -= 8;
        }
    }

    fn finish(mut self) -> Vec<u8> {
        if self.nbits > 0 {
            self.out.push((self.acc << (8 - self.nbits)) as u8);
        }
        self.out
    }
}

struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
    acc: u32,
    nbits: u32,
}

impl<'a> BitReader<'a> {
    fn new(data: &'a [u8]) -> Self {
        Self {
            data,
            pos: 0,
            acc: 0,
            nbits: 0,
        }
    }

    fn read(&mut self, n: u32) -> Result<u32> {
        while self.nbits < n {
            let b = *self.data.get(self.pos).ok_or(Error::StreamExhausted)?;
            self.pos += 1;
            self.acc = (self.acc << 8) | b as u32;
            self.nbits += 8;
        }
        let v = (self.acc >> (self.nbits - n)) & ((1 << n) - 1);
        self.nbits -= n;
        Ok(v)
    }
}

fn pack_side_info(si: &SideInfo) -> Vec<u8> {
    let mut w = BitWriter::new();
    for &idx in si.indices() {
        w.write(idx as u32, SCALE_BITS);
    }
    w.finish()
}

fn unpack_side_info(data: &[u8], bands: usize) -> Result<SideInfo> {
    let mut r = BitReader::new(data);
    let mut indices = Vec::with_capacity(bands);
    for _ in 0..bands {
        indices.push(r.read(SCALE_BITS)? as u8);
    }
    SideInfo::new(indices)
}

/// Snaps a regulator to the binary32 value that travels in the header, so
/// encoder-side math runs on exactly what the decoder will read back.
fn snap_regulator(a: &Regulator) -> (Regulator, u32) {
    let bits = (a.value() as f32).to_bits();
    let snapped = Regulator::new(f32::from_bits(bits) as f64)
        .expect("binary32 rounding keeps the regulator within bounds");
    (snapped, bits)
}

fn band_tables(sigmas: &[f64], a: &Regulator) -> Result<Vec<SymbolDistribution>> {
    sigmas
        .iter()
        .map(|&s| SymbolDistribution::build(&GaussianParams::new(0.0, s)?, a))
        .collect()
}

fn code_coefficient(
    enc: &mut RangeEncoder,
    table: &SymbolDistribution,
    k: i32,
    escapes: &mut usize,
) {
    if table.contains(k) {
        enc.encode_symbol(table, k);
    } else {
        enc.encode_escape(table);
        enc.encode_raw_bits(zigzag(k), 32);
        *escapes += 1;
    }
}

/// Encodes one image at regulator `a` with the given transform block size.
pub fn encode_image(img: &Image, a: &Regulator, block: usize) -> Result<EncodeOutcome> {
    if img.width() as u64 > MAX_DIMENSION as u64
        || img.height() as u64 > MAX_DIMENSION as u64
        || (img.width() * img.height()) as u64 > MAX_PIXELS
    {
        return Err(Error::BadImage(format!(
            "{}x{} exceeds the format limit",
            img.width(),
            img.height()
        )));
    }
    let (a, a_bits) = snap_regulator(a);
    let lat = forward(img, block)?;
    let scales = estimate_scales(&lat);
    let side_info = quantize_scales(&scales);
    let coded_scales = dequantize_scales(&side_info);
    let side = pack_side_info(&side_info);
    let tables = band_tables(coded_scales.sigmas(), &a)?;

    let mut recon = lat.clone();
    let mut enc = RangeEncoder::new();
    let mut escapes = 0usize;

    // DC band: closed-loop DPCM against reconstructed neighbors.
    let bcols = lat.block_cols();
    let n = lat.plane_len();
    let mut dc_raw = vec![0.0; n];
    for idx in 0..n {
        let pred = LatentTensor::dc_prediction(&dc_raw, idx, bcols, block);
        dc_raw[idx] = lat.plane(0)[idx] + pred;
    }
    let mut dc_rec = vec![0.0; n];
    for idx in 0..n {
        let pred = LatentTensor::dc_prediction(&dc_rec, idx, bcols, block);
        let residual = dc_raw[idx] - pred;
        let k = quantize(residual, &a)?;
        code_coefficient(&mut enc, &tables[0], k, &mut escapes);
        let res_hat = dequantize(k, &a);
        dc_rec[idx] = pred + res_hat;
        recon.plane_mut(0)[idx] = res_hat;
    }

    // AC bands.
    for (band, table) in tables.iter().enumerate().skip(1) {
        for idx in 0..n {
            let y = lat.plane(band)[idx];
            let k = quantize(y, &a)?;
            code_coefficient(&mut enc, table, k, &mut escapes);
            recon.plane_mut(band)[idx] = dequantize(k, &a);
        }
    }

    let latent_bits_estimate = enc.estimated_bits();
    let latent = enc.finish();

    let header = Header {
        width: img.width() as u32,
        height: img.height() as u32,
        block: block as u8,
        pad_right: ((block - img.width() % block) % block) as u8,
        pad_bottom: ((block - img.height() % block) % block) as u8,
        a_bits,
        side_len: side.len() as u32,
    };
    let mut bytes = Vec::with_capacity(HEADER_LEN + side.len() + latent.len());
    header.write_to(&mut bytes);
    bytes.extend_from_slice(&side);
    let latent_bytes = latent.len();
    bytes.extend_from_slice(&latent);

    let reconstruction = inverse(&recon)?;
    Ok(EncodeOutcome {
        bytes,
        reconstruction,
        stats: EncodeStats {
            latent_bits_estimate,
            latent_bytes,
            side_bytes: side.len(),
            escape_count: escapes,
        },
    })
}

/// Decodes a container back to an image. The result is bit-identical to
/// the encoder's own reconstruction.
pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    let header = Header::parse(bytes)?;
    let side_end = HEADER_LEN
        .checked_add(header.side_len as usize)
        .ok_or(Error::CorruptHeader("side segment length overflow"))?;
    if bytes.len() < side_end {
        return Err(Error::StreamExhausted);
    }
    let block = header.block as usize;
    let bands = block * block;
    let side_info = unpack_side_info(&bytes[HEADER_LEN..side_end], bands)?;
    let sigmas = dequantize_scales(&side_info);
    let a =
        Regulator::new(header.a()).map_err(|_| Error::CorruptHeader("regulator out of range"))?;
    let tables = band_tables(sigmas.sigmas(), &a)?;

    let mut lat = LatentTensor::empty(header.width as usize, header.height as usize, block)?;
    let n = lat.plane_len();
    let mut dec = RangeDecoder::new(&bytes[side_end..])?;
    for (band, table) in tables.iter().enumerate() {
        for idx in 0..n {
            let k = match dec.decode_symbol(table)? {
                Decoded::Symbol(k) => k,
                Decoded::Escape => unzigzag(dec.decode_raw_bits(32)?),
            };
            lat.plane_mut(band)[idx] = dequantize(k, &a);
        }
    }
    inverse(&lat)
}

/// Exact per-segment accounting for a container.
pub fn account_bits(bytes: &[u8]) -> Result<BitBreakdown> {
    let header = Header::parse(bytes)?;
    let side_end = HEADER_LEN + header.side_len as usize;
    if bytes.len() < side_end {
        return Err(Error::StreamExhausted);
    }
    let pixels = header.width as f64 * header.height as f64;
    let latent_len = bytes.len() - side_end;
    Ok(BitBreakdown {
        total_bpp: bytes.len() as f64 * 8.0 / pixels,
        latent_bpp: latent_len as f64 * 8.0 / pixels,
        side_bpp: header.side_len as f64 * 8.0 / pixels,
    })
}

/// One averaged operating point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdPoint {
    pub a: f64,
    pub bpp: f64,
    pub psnr_db: f64,
    pub ms_ssim: f64,
}

/// One `(image, a)` measurement of a sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub image: String,
    pub a: f64,
    pub lambda: Option<f64>,
    pub breakdown: BitBreakdown,
    pub psnr_db: f64,
    pub ms_ssim: f64,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub averages: Vec<RdPoint>,
}

/// Encodes and decodes every `(image, a)` pair, measuring actual bits and
/// quality. Rows come back in input order; per-`a` averages across images
/// are appended when more than one image is given. A fitted line, when
/// provided, back-fills the lambda implied by each `a`.
pub fn rd_sweep(
    images: &[(String, Image)],
    a_values: &[f64],
    block: usize,
    fit: Option<&LinearFit>,
) -> Result<SweepResult> {
    if images.is_empty() || a_values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let jobs: Vec<(usize, usize)> = a_values
        .iter()
        .enumerate()
        .flat_map(|(ai, _)| images.iter().enumerate().map(move |(ii, _)| (ai, ii)))
        .collect();
    let rows: Vec<SweepRow> = jobs
        .par_iter()
        .map(|&(ai, ii)| -> Result<SweepRow> {
            let (name, img) = &images[ii];
            let a_val = a_values[ai];
            let measure = || -> Result<SweepRow> {
                let a = Regulator::new(a_val)?;
                let outcome = encode_image(img, &a, block)?;
                let decoded = decode_image(&outcome.bytes)?;
                debug_assert_eq!(decoded, outcome.reconstruction);
                let breakdown = account_bits(&outcome.bytes)?;
                Ok(SweepRow {
                    image: name.clone(),
                    a: a_val,
                    lambda: fit.map(|f| f.lambda_for(a_val)),
                    breakdown,
                    psnr_db: metrics::psnr(img, &decoded)?,
                    ms_ssim: metrics::ms_ssim(img, &decoded)?,
                })
            };
            measure().map_err(|e| Error::SweepItem {
                image: name.clone(),
                a: a_val,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let averages = a_values
        .iter()
        .enumerate()
        .map(|(ai, &a)| {
            let group: Vec<&SweepRow> = rows
                .iter()
                .skip(ai * images.len())
                .take(images.len())
                .collect();
            let n = group.len() as f64;
            RdPoint {
                a,
                bpp: group.iter().map(|r| r.breakdown.total_bpp).sum::<f64>() / n,
                psnr_db: group.iter().map(|r| r.psnr_db).sum::<f64>() / n,
                ms_ssim: group.iter().map(|r| r.ms_ssim).sum::<f64>() / n,
            }
        })
        .collect();

    Ok(SweepResult { rows, averages })
}

/// Renders a sweep as CSV:
/// `image,a,lambda,bpp_total,bpp_latent,bpp_side,psnr_db,ms_ssim`.
/// With several input images an `average` row per `a` follows the
/// per-image rows.
pub fn sweep_csv(result: &SweepResult, images_per_a: usize) -> String {
    let mut out = String::from("image,a,lambda,bpp_total,bpp_latent,bpp_side,psnr_db,ms_ssim\n");
    let fmt_lambda = |l: Option<f64>| l.map(|v| format!("{v:.6}")).unwrap_or_default();
    for (i, row) in result.rows.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.4},{:.6}\n",
            row.image,
            row.a,
            fmt_lambda(row.lambda),
            row.breakdown.total_bpp,
            row.breakdown.latent_bpp,
            row.breakdown.side_bpp,
            row.psnr_db,
            row.ms_ssim,
        ));
        if images_per_a > 1 && (i + 1) % images_per_a == 0 {
            let avg = &result.averages[i / images_per_a];
            let group = &result.rows[i + 1 - images_per_a..=i];
            let n = group.len() as f64;
            let latent = group.iter().map(|r| r.breakdown.latent_bpp).sum::<f64>() / n;
            let side = group.iter().map(|r| r.breakdown.side_bpp).sum::<f64>() / n;
            out.push_str(&format!(
                "average,{},{},{:.6},{:.6},{:.6},{:.4},{:.6}\n",
                avg.a,
                fmt_lambda(result.rows[i].lambda),
                avg.bpp,
                latent,
                side,
                avg.psnr_db,
                avg.ms_ssim,
            ));
        }
    }
    out
}
