//! Activation statistics: Gaussian fits, outlier-value classification,
//! uniform fake quantization and histogram entropy.

use serde::{Deserialize, Serialize};

use crate::bits::Bitwidth;
use crate::error::{Error, Result};

/// Mean and population standard deviation of a sample pool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub mu: f64,
    pub sigma: f64,
    pub sample_count: usize,
}

impl GaussianFit {
    /// A zero-spread fit cannot separate outliers.
    pub fn is_degenerate(&self) -> bool {
        self.sigma == 0.0
    }
}

pub fn fit_gaussian(samples: &[f32]) -> Result<GaussianFit> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples(samples.len()));
    }
    // Welford
    let mut mean = 0.0f64;
    let mut m2 = 0.0f64;
    for (i, &x) in samples.iter().enumerate() {
        let x = x as f64;
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    let var = (m2 / samples.len() as f64).max(0.0);
    Ok(GaussianFit {
        mu: mean,
        sigma: var.sqrt(),
        sample_count: samples.len(),
    })
}

/// How the threshold `phi` is applied to the fitted density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutlierRule {
    /// Outlier iff `pdf(x) / pdf(mu) <= 1 - phi` (tail values).
    #[default]
    NormalizedDensity,
    /// Outlier iff the raw density `pdf(x)` exceeds `phi`.
    Eq1Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueClass {
    Outlier,
    NonOutlier,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierModel {
    pub fit: GaussianFit,
    pub phi: f64,
    pub rule: OutlierRule,
}

impl OutlierModel {
    pub fn new(fit: GaussianFit, phi: f64, rule: OutlierRule) -> Result<Self> {
        if !(0.0..1.0).contains(&phi) {
            return Err(Error::Config(format!("phi must lie in [0, 1), got {phi}")));
        }
        Ok(Self { fit, phi, rule })
    }

    /// Distance from the mean at which values become outliers under the
    /// normalized-density rule: `sigma * sqrt(-2 ln(1 - phi))`.
    pub fn threshold(&self) -> f64 {
        self.fit.sigma * (-2.0 * (1.0 - self.phi).ln()).sqrt()
    }

    fn density(&self, x: f64) -> f64 {
        let s = self.fit.sigma;
        let z = (x - self.fit.mu) / s;
        (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
    }

    pub fn classify_value(&self, x: f64) -> Result<ValueClass> {
        if self.fit.is_degenerate() {
            return Err(Error::DegenerateSigma);
        }
        let outlier = match self.rule {
            OutlierRule::NormalizedDensity => (x - self.fit.mu).abs() >= self.threshold(),
            OutlierRule::Eq1Literal => self.density(x) > self.phi,
        };
        Ok(if outlier {
            ValueClass::Outlier
        } else {
            ValueClass::NonOutlier
        })
    }
}

/// Per-tensor quantization interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantRange {
    pub lo: f64,
    pub hi: f64,
}

impl QuantRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::BadRange { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    /// Range of observed values. A constant pool `c` gets `[c, c + 1]`, on which
    /// `c` is exactly representable at every bitwidth.
    pub fn observed(values: &[f32]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyValues);
        }
        let (lo, hi) = values
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let (lo, hi) = (lo as f64, hi as f64);
        if lo < hi {
            Self::new(lo, hi)
        } else {
            Self::new(lo, lo + 1.0)
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Asymmetric min-max affine fake quantization of a single value.
#[inline]
pub fn fake_quantize_value(x: f32, bits: Bitwidth, range: QuantRange) -> f32 {
    let Some(levels) = bits.levels() else {
        return x;
    };
    let levels = levels as f64;
    let scale = range.width() / levels;
    let q = ((x as f64 - range.lo) / scale).round().clamp(0.0, levels);
    (q * scale + range.lo) as f32
}

/// Rounds `values` to the `2^b`-level grid over `range` and back.
/// `Bitwidth::Full` is the identity.
pub fn fake_quantize(values: &[f32], bits: Bitwidth, range: QuantRange) -> Result<Vec<f32>> {
    QuantRange::new(range.lo, range.hi)?;
    Ok(values
        .iter()
        .map(|&x| fake_quantize_value(x, bits, range))
        .collect())
}

pub fn fake_quantize_in_place(values: &mut [f32], bits: Bitwidth, range: QuantRange) {
    if bits == Bitwidth::Full {
        return;
    }
    for v in values {
        *v = fake_quantize_value(*v, bits, range);
    }
}

/// `k`-bin histogram of a pool with its Shannon entropy in bits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramStats {
    pub k: usize,
    pub range: QuantRange,
    pub counts: Vec<u64>,
    pub total: u64,
    pub entropy_bits: f64,
}

impl HistogramStats {
    pub fn probabilities(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.total as f64;
        self.counts.iter().map(move |&c| c as f64 / n)
    }

    pub fn entropy_nats(&self) -> f64 {
        -self
            .probabilities()
            .filter(|&p| p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>()
    }
}

/// Bin index of `x` for `k` uniform bins over `range`; out-of-range values
/// land in the edge bins.
#[inline]
pub fn bin_index(x: f32, k: usize, range: QuantRange) -> usize {
    let t = (x as f64 - range.lo) / range.width() * k as f64;
    if t <= 0.0 {
        0
    } else {
        (t.floor() as usize).min(k - 1)
    }
}

pub fn histogram_entropy(values: &[f32], k: usize, range: QuantRange) -> Result<HistogramStats> {
    if values.is_empty() {
        return Err(Error::EmptyValues);
    }
    if k == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let range = QuantRange::new(range.lo, range.hi)?;
    let mut counts = vec![0u64; k];
    for &v in values {
        counts[bin_index(v, k, range)] += 1;
    }
    let total = values.len() as u64;
    let n = total as f64;
    let mut entropy = 0.0;
    for &c in &counts {
        if c > 0 {
            let p = c as f64 / n;
            entropy -= p * p.log2();
        }
    }
    Ok(HistogramStats {
        k,
        range,
        counts,
        total,
        entropy_bits: entropy.max(0.0),
    })
}
