//! Gaussian conditional probability model under a univariate quantization
//! regulator `a`.
//!
//! The regulator rescales the effective quantization bin to width `1/a`:
//! a coefficient `y` is coded as `k = round(a * y)` and reconstructed as
//! `k / a`. The probability mass of symbol `k` under `N(mu, sigma)` can be
//! written two equivalent ways:
//!
//! * direct: the Gaussian mass over the bin `[k/a - 1/(2a), k/a + 1/(2a)]`,
//! * reparameterized: the mass of `N(a*mu, a*sigma)` over `[k - 1/2, k + 1/2]`.
//!
//! Both are provided; they agree to better than 1e-12 and the
//! reparameterized form is what the fixed-point symbol tables are built
//! from, because it works with a plain round quantizer.

use crate::error::{Error, Result};

/// Scale floor for the conditional Gaussian. Scales are clamped up to this
/// at construction so a symbol table can never collapse to a single slot.
pub const SIGMA_MIN: f64 = 0.11;

/// Smallest accepted regulator value.
pub const A_MIN: f64 = 0.25;
/// Largest accepted regulator value.
pub const A_MAX: f64 = 32.0;

/// Bit width of the fixed-point CDF tables consumed by the range coder.
pub const PRECISION: u32 = 16;
/// Total mass of every symbol table: `2^PRECISION`.
pub const CDF_TOTAL: u32 = 1 << PRECISION;

/// Half-width of the table window, in standard deviations of the scaled
/// Gaussian. Mass outside `mean ± TAIL_FACTOR * sigma` is left to the
/// escape slot.
pub const TAIL_FACTOR: f64 = 6.0;

/// Hard cap on the number of in-window symbols of one table.
pub const MAX_WINDOW: usize = 4096;

/// Quantized symbols must stay below this magnitude; larger products
/// `a * y` are rejected as non-encodable.
const SYMBOL_LIMIT: f64 = (1i64 << 30) as f64;

/// Per-element mean and scale of the conditional Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianParams {
    mu: f64,
    sigma: f64,
}

impl GaussianParams {
    /// Builds parameters, clamping `sigma` up to [`SIGMA_MIN`].
    /// Non-finite inputs are rejected.
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() || !sigma.is_finite() {
            return Err(Error::InvalidGaussian { mu, sigma });
        }
        Ok(Self {
            mu,
            sigma: sigma.max(SIGMA_MIN),
        })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// The univariate quantization regulator, validated to `[A_MIN, A_MAX]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regulator {
    a: f64,
}

impl Regulator {
    pub fn new(a: f64) -> Result<Self> {
        if !a.is_finite() || !(A_MIN..=A_MAX).contains(&a) {
            return Err(Error::InvalidRegulator(a));
        }
        Ok(Self { a })
    }

    pub fn value(&self) -> f64 {
        self.a
    }
}

/// Standard normal CDF.
///
/// Computed as `erfc(-x / sqrt(2)) / 2` on top of libm's double-precision
/// `erfc`, which is accurate to a few ULP; the absolute error of the result
/// is below 1e-15, well inside the 1e-12 budget the symbol tables assume.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Probability mass of symbol `k`: Gaussian `N(mu, sigma)` integrated over
/// the regulator-narrowed bin `[k/a - 1/(2a), k/a + 1/(2a)]`.
pub fn pmf_direct(k: i32, p: &GaussianParams, a: &Regulator) -> f64 {
    let a = a.value();
    let center = k as f64 / a;
    let half = 0.5 / a;
    let hi = std_normal_cdf((center + half - p.mu) / p.sigma);
    let lo = std_normal_cdf((center - half - p.mu) / p.sigma);
    (hi - lo).max(0.0)
}

/// Probability mass of symbol `k` in the reparameterized form: the scaled
/// Gaussian `N(a*mu, a*sigma)` integrated over `[k - 1/2, k + 1/2]`.
/// Identical to [`pmf_direct`] up to floating-point noise.
pub fn pmf_reparam(k: i32, p: &GaussianParams, a: &Regulator) -> f64 {
    let a = a.value();
    let mean = a * p.mu;
    let scale = a * p.sigma;
    let hi = std_normal_cdf((k as f64 + 0.5 - mean) / scale);
    let lo = std_normal_cdf((k as f64 - 0.5 - mean) / scale);
    (hi - lo).max(0.0)
}

/// Quantizes a coefficient: `k = round(a * y)`, ties away from zero.
///
/// Rejects coefficients whose scaled magnitude exceeds the symbol range.
pub fn quantize(y: f64, a: &Regulator) -> Result<i32> {
    let scaled = a.value() * y;
    if !scaled.is_finite() || scaled.abs() > SYMBOL_LIMIT {
        return Err(Error::CoefficientOverflow(y));
    }
    Ok(scaled.round() as i32)
}

/// Reconstructs a coefficient from its symbol: `y_hat = k / a`.
/// The roundtrip error `|y - dequantize(quantize(y, a), a)|` is at most
/// `1/(2a)`.
pub fn dequantize(k: i32, a: &Regulator) -> f64 {
    k as f64 / a.value()
}

/// Fixed-point symbol distribution for the range coder.
///
/// Holds a window of consecutive symbols `[k_min, k_max]` plus one escape
/// slot for everything outside the window. The CDF has one entry per slot
/// boundary: `cdf[0] = 0`, `cdf[last] = 2^PRECISION`, strictly increasing,
/// so every slot (escape included) carries mass of at least 1.
///
/// Construction is pure integer bookkeeping on top of [`pmf_reparam`];
/// identical inputs produce identical tables, which is what keeps encoder
/// and decoder in lockstep.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolDistribution {
    k_min: i32,
    k_max: i32,
    cdf: Vec<u32>,
}

impl SymbolDistribution {
    /// Builds the table for `(p, a)`.
    ///
    /// The window starts from `a*mu ± TAIL_FACTOR * a*sigma`, capped at
    /// [`MAX_WINDOW`] symbols around the scaled mean, and is then trimmed
    /// to the bins that hold at least one unit of fixed-point mass. Mass
    /// beyond the window belongs to the escape slot and such symbols are
    /// escape-coded.
    pub fn build(p: &GaussianParams, a: &Regulator) -> Result<Self> {
        let mean = a.value() * p.mu;
        let spread = TAIL_FACTOR * a.value() * p.sigma;
        let mut k_min = (mean - spread).floor() as i64;
        let mut k_max = (mean + spread).ceil() as i64;
        let width = k_max - k_min + 1;
        if width > MAX_WINDOW as i64 {
            let center = mean.round() as i64;
            let half = (MAX_WINDOW as i64 - 1) / 2;
            k_min = center - half;
            k_max = center + (MAX_WINDOW as i64 - 1 - half);
        }
        if k_min < i32::MIN as i64 || k_max > i32::MAX as i64 {
            return Err(Error::InvalidGaussian {
                mu: p.mu,
                sigma: p.sigma,
            });
        }
        let (mut k_min, mut k_max) = (k_min as i32, k_max as i32);

        // Trim sub-unit tail bins, keeping the mode slot.
        let unit = 1.0 / CDF_TOTAL as f64;
        let center = (mean.round() as i32).clamp(k_min, k_max);
        while k_min < center && pmf_reparam(k_min, p, a) < unit {
            k_min += 1;
        }
        while k_max > center && pmf_reparam(k_max, p, a) < unit {
            k_max -= 1;
        }
        Self::with_window(p, a, k_min, k_max)
    }

    /// Builds a table over an explicit window. Fails if the window holds
    /// more than [`MAX_WINDOW`] symbols.
    pub fn with_window(p: &GaussianParams, a: &Regulator, k_min: i32, k_max: i32) -> Result<Self> {
        assert!(k_min <= k_max, "empty symbol window");
        let window = (k_max as i64 - k_min as i64 + 1) as usize;
        if window > MAX_WINDOW {
            return Err(Error::WindowTooWide {
                requested: window,
                limit: MAX_WINDOW,
            });
        }

        // Floor-scale the real masses, keeping every slot at >= 1, then
        // hand the leftover units back to the slots with the largest
        // dropped fractions so wide windows stay close to the real
        // distribution. The escape slot keeps one unit plus the
        // out-of-window tail mass.
        let reals: Vec<f64> = (k_min..=k_max)
            .map(|k| pmf_reparam(k, p, a) * CDF_TOTAL as f64)
            .collect();
        let out_mass = (CDF_TOTAL as f64 - reals.iter().sum::<f64>()).max(0.0);
        let escape_reserve = (out_mass.floor() as u64).max(1);

        let mut masses: Vec<u32> = reals.iter().map(|&r| (r.floor() as u32).max(1)).collect();
        let mut total: u64 = masses.iter().map(|&m| m as u64).sum();

        let budget = CDF_TOTAL as u64 - escape_reserve;
        if total < budget {
            let mut order: Vec<usize> = (0..window).collect();
            order.sort_by(|&i, &j| {
                let fi = reals[i] - reals[i].floor();
                let fj = reals[j] - reals[j].floor();
                fj.total_cmp(&fi).then(i.cmp(&j))
            });
            let mut leftover = budget - total;
            let mut cursor = 0;
            while leftover > 0 {
                masses[order[cursor % window]] += 1;
                cursor += 1;
                leftover -= 1;
            }
            total = budget;
        }

        // The minimum-mass bumps can overshoot on very wide windows; shave
        // the largest slots until at least one unit is left for escape.
        while total > (CDF_TOTAL - 1) as u64 {
            let mut arg = 0;
            for (i, &m) in masses.iter().enumerate() {
                if m > masses[arg] {
                    arg = i;
                }
            }
            let excess = total - (CDF_TOTAL - 1) as u64;
            let cut = excess.min(masses[arg] as u64 - 1) as u32;
            debug_assert!(cut > 0, "window too wide to fit the precision budget");
            masses[arg] -= cut;
            total -= cut as u64;
        }

        let mut cdf = Vec::with_capacity(window + 2);
        let mut acc = 0u32;
        cdf.push(0);
        for &m in &masses {
            acc += m;
            cdf.push(acc);
        }
        cdf.push(CDF_TOTAL); // escape slot takes the residue
        Ok(Self { k_min, k_max, cdf })
    }

    pub fn k_min(&self) -> i32 {
        self.k_min
    }

    pub fn k_max(&self) -> i32 {
        self.k_max
    }

    /// Number of in-window symbols.
    pub fn window_len(&self) -> usize {
        (self.k_max as i64 - self.k_min as i64 + 1) as usize
    }

    /// Number of coding slots: window plus the escape slot.
    pub fn num_slots(&self) -> usize {
        self.cdf.len() - 1
    }

    /// Index of the escape slot.
    pub fn escape_slot(&self) -> usize {
        self.num_slots() - 1
    }

    /// Mass reserved for out-of-window symbols.
    pub fn escape_mass(&self) -> u32 {
        self.cdf[self.cdf.len() - 1] - self.cdf[self.cdf.len() - 2]
    }

    pub fn contains(&self, k: i32) -> bool {
        (self.k_min..=self.k_max).contains(&k)
    }

    /// Coding slot for symbol `k`; out-of-window symbols map to escape.
    pub fn slot_of(&self, k: i32) -> usize {
        if self.contains(k) {
            (k as i64 - self.k_min as i64) as usize
        } else {
            self.escape_slot()
        }
    }

    /// `(cumulative, frequency)` of a slot in `2^PRECISION` units.
    pub fn slot_bounds(&self, slot: usize) -> (u32, u32) {
        (self.cdf[slot], self.cdf[slot + 1] - self.cdf[slot])
    }

    /// Slot whose interval contains the cumulative value `cum`.
    pub fn slot_for_cum(&self, cum: u32) -> usize {
        debug_assert!(cum < CDF_TOTAL);
        self.cdf.partition_point(|&c| c <= cum) - 1
    }

    pub fn cdf(&self) -> &[u32] {
        &self.cdf
    }

    /// Ideal cost of coding `slot`, in bits.
    pub fn slot_bits(&self, slot: usize) -> f64 {
        let (_, freq) = self.slot_bounds(slot);
        -(freq as f64 / CDF_TOTAL as f64).log2()
    }
}
