//! Spectral analysis: radix-2 FFT, Welch power spectral density, cutoff
//! estimation and the Nyquist-style sampling rule `f_s = K * f_c`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::domain::CapacitanceTrace;
use crate::error::{Error, Result};

/// Iterative radix-2 FFT. The forward transform is
/// `X[k] = sum_n x[n] exp(-2 pi i k n / N)`; the inverse includes the `1/N`.
pub fn fft(x: &[Complex64], inverse: bool) -> Result<Vec<Complex64>> {
    let n = x.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::contract(format!("FFT length {n} is not a power of two")));
    }
    let bits = n.trailing_zeros();
    let mut a: Vec<Complex64> = (0..n)
        .map(|i| {
            let j = if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) };
            x[j]
        })
        .collect();
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * PI / len as f64;
        let half = len / 2;
        let twiddles: Vec<Complex64> = (0..half)
            .map(|k| Complex64::from_polar(1.0, ang * k as f64))
            .collect();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let u = a[start + k];
                let v = a[start + k + half] * twiddles[k];
                a[start + k] = u + v;
                a[start + k + half] = u - v;
            }
        }
        len <<= 1;
    }
    if inverse {
        let scale = 1.0 / n as f64;
        for v in &mut a {
            *v *= scale;
        }
    }
    Ok(a)
}

/// Taper applied to every Welch segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Taper {
    /// Periodic Hann window `0.5 - 0.5 cos(2 pi n / N)`.
    #[default]
    Hann,
    Rectangular,
}

impl Taper {
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Taper::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
                .collect(),
            Taper::Rectangular => vec![1.0; n],
        }
    }
}

/// One-sided power spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub freqs_hz: Vec<f64>,
    pub power: Vec<f64>,
    pub resolution_hz: f64,
}

impl Spectrum {
    pub fn new(freqs_hz: Vec<f64>, power: Vec<f64>, resolution_hz: f64) -> Result<Self> {
        if freqs_hz.len() != power.len() || freqs_hz.is_empty() {
            return Err(Error::contract("spectrum frequency/power lengths differ"));
        }
        if power.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::contract("spectrum power must be non-negative"));
        }
        Ok(Self {
            freqs_hz,
            power,
            resolution_hz,
        })
    }

    /// `sum(power) * resolution`, the variance captured by the spectrum.
    pub fn total_power(&self) -> f64 {
        self.power.iter().sum::<f64>() * self.resolution_hz
    }

    pub fn peak_frequency(&self) -> f64 {
        let i = self
            .power
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.freqs_hz[i]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("freq_hz,power\n");
        for (f, p) in self.freqs_hz.iter().zip(&self.power) {
            s.push_str(&format!("{f},{p}\n"));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WelchParams {
    pub n_points: usize,
    pub segment_len: usize,
    pub overlap: usize,
    pub taper: Taper,
}

impl Default for WelchParams {
    /// 8192 points in 512-sample Hann segments at 50% overlap: 31 segments.
    fn default() -> Self {
        Self {
            n_points: 8192,
            segment_len: 512,
            overlap: 256,
            taper: Taper::Hann,
        }
    }
}

impl WelchParams {
    pub fn validate(&self) -> Result<()> {
        if !self.segment_len.is_power_of_two() {
            return Err(Error::contract(format!(
                "segment length {} must be a power of two",
                self.segment_len
            )));
        }
        if self.overlap >= self.segment_len {
            return Err(Error::contract("overlap must be smaller than the segment"));
        }
        if self.n_points < self.segment_len {
            return Err(Error::contract("n_points shorter than one segment"));
        }
        Ok(())
    }

    pub fn hop(&self) -> usize {
        self.segment_len - self.overlap
    }

    pub fn segment_count(&self) -> usize {
        (self.n_points - self.segment_len) / self.hop() + 1
    }
}

/// Welch averaged periodogram over the first `n_points` samples of `values`.
///
/// Each segment has its mean removed and is tapered; the one-sided density is
/// `|X|^2 / (fs * sum(w^2))`, doubled everywhere except DC and Nyquist, so
/// `sum(power) * df` approximates the variance of the input.
pub fn welch_psd_values(values: &[f64], sample_rate_hz: f64, params: &WelchParams) -> Result<Spectrum> {
    params.validate()?;
    if values.len() < params.n_points {
        return Err(Error::InsufficientData {
            required: params.n_points,
            actual: values.len(),
        });
    }
    let seg = params.segment_len;
    let window = params.taper.coefficients(seg);
    let wss: f64 = window.iter().map(|w| w * w).sum();
    let n_bins = seg / 2 + 1;
    let count = params.segment_count();

    let periodograms: Vec<Vec<f64>> = (0..count)
        .map(|s| {
            let chunk = &values[s * params.hop()..s * params.hop() + seg];
            let mean = chunk.iter().sum::<f64>() / seg as f64;
            let buf: Vec<Complex64> = chunk
                .iter()
                .zip(&window)
                .map(|(v, w)| Complex64::new((v - mean) * w, 0.0))
                .collect();
            let spec = fft(&buf, false).expect("power-of-two segment");
            (0..n_bins)
                .map(|k| {
                    let p = spec[k].norm_sqr() / (sample_rate_hz * wss);
                    if k == 0 || (seg.is_multiple_of(2) && k == seg / 2) {
                        p
                    } else {
                        2.0 * p
                    }
                })
                .collect()
        })
        .collect();
    let power: Vec<f64> = (0..n_bins)
        .map(|k| pairwise_sum(&periodograms.iter().map(|p| p[k]).collect::<Vec<_>>()) / count as f64)
        .collect();
    let df = sample_rate_hz / seg as f64;
    let freqs = (0..n_bins).map(|k| k as f64 * df).collect();
    Spectrum::new(freqs, power, df)
}

pub fn welch_psd(trace: &CapacitanceTrace, params: &WelchParams) -> Result<Spectrum> {
    welch_psd_values(trace.values(), trace.sample_rate_hz(), params)
}

/// Order-independent summation: identical results however segments are
/// produced.
fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n => pairwise_sum(&v[..n / 2]) + pairwise_sum(&v[n / 2..]),
    }
}

/// Smallest frequency at which cumulative power reaches `fraction` of the total.
pub fn estimate_cutoff(s: &Spectrum, cumulative_fraction: f64) -> Result<f64> {
    if !(cumulative_fraction > 0.0 && cumulative_fraction <= 1.0) {
        return Err(Error::contract(format!(
            "cumulative fraction {cumulative_fraction} outside (0, 1]"
        )));
    }
    let total: f64 = s.power.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("spectrum has no power".into()));
    }
    let target = cumulative_fraction * total;
    let mut acc = 0.0;
    for (f, p) in s.freqs_hz.iter().zip(&s.power) {
        acc += p;
        if acc >= target {
            return Ok(*f);
        }
    }
    Ok(*s.freqs_hz.last().expect("non-empty spectrum"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub f_c_hz: f64,
    pub k: f64,
    pub f_s_hz: f64,
}

pub const DEFAULT_SAMPLING_FACTOR: f64 = 2.5;

/// `f_s = k * f_c` with the safety factor `k` in `[2, 3]`.
pub fn sampling_plan(f_c_hz: f64, k: f64) -> Result<SamplingPlan> {
    if !(f_c_hz > 0.0 && f_c_hz.is_finite()) {
        return Err(Error::contract(format!("cutoff {f_c_hz} must be positive")));
    }
    if !(2.0..=3.0).contains(&k) {
        return Err(Error::contract(format!("sampling factor {k} outside [2, 3]")));
    }
    Ok(SamplingPlan {
        f_c_hz,
        k,
        f_s_hz: k * f_c_hz,
    })
}
