//! Spectrum traces and the one-sided Fourier recipe shared by the
//! master-equation and mean-field engines.
//!
//! For a correlation `C(t)` sampled on `t_n = n·dt`, the spectral density per
//! Hz is
//!
//! ```text
//! S(f) = 2 Re[ dt · Σ_n w_n C(t_n) e^{i 2π f t_n} ]
//! ```
//!
//! with trapezoid weights `w_0 = w_{N-1} = 1/2`. This is the trapezoid rule for
//! `(1/π) Re ∫₀^∞ e^{iωt} C(t) dt` rescaled to a per-Hz density, so that
//! `∫ S(f) df = Re C(0)` over one period of the sampled transform.
//! Frequencies are relative to the rotating frame; a line with
//! `C(t) ∝ e^{i2πf₀t}` appears at `f = −f₀`.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Decay threshold on `|C|` relative to `|C(0)|` at the end of a series.
pub const DECAY_THRESHOLD: f64 = 1e-3;

/// Minimum zero-padding factor of the FFT route.
pub const ZERO_PAD_FACTOR: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FrequencyAxis {
    /// Laboratory frequencies, Hz.
    Absolute,
    /// Offsets from `reference_hz`, Hz.
    Detuning { reference_hz: f64 },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TraceMeta {
    pub model: String,
    pub params_hash: u64,
    pub notes: Vec<(String, String)>,
}

impl TraceMeta {
    pub fn new(model: &str, params_hash: u64) -> Self {
        TraceMeta {
            model: model.to_string(),
            params_hash,
            notes: Vec::new(),
        }
    }

    pub fn with_note(mut self, key: &str, value: impl ToString) -> Self {
        self.notes.push((key.to_string(), value.to_string()));
        self
    }

    pub fn note(&self, key: &str) -> Option<&str> {
        self.notes.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumTrace {
    frequencies: Vec<f64>,
    values: Vec<f64>,
    axis: FrequencyAxis,
    pub meta: TraceMeta,
}

impl SpectrumTrace {
    pub fn new(
        frequencies: Vec<f64>,
        values: Vec<f64>,
        axis: FrequencyAxis,
        meta: TraceMeta,
    ) -> Result<Self> {
        if frequencies.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: frequencies.len(),
                got: values.len(),
            });
        }
        if frequencies.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::param("frequencies", "must be strictly increasing"));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::param("values", format!("non-finite value {v}")));
        }
        Ok(SpectrumTrace {
            frequencies,
            values,
            axis,
            meta,
        })
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn axis(&self) -> FrequencyAxis {
        self.axis
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same trace on the absolute axis.
    pub fn to_absolute(&self) -> SpectrumTrace {
        match self.axis {
            FrequencyAxis::Absolute => self.clone(),
            FrequencyAxis::Detuning { reference_hz } => SpectrumTrace {
                frequencies: self.frequencies.iter().map(|f| f + reference_hz).collect(),
                values: self.values.clone(),
                axis: FrequencyAxis::Absolute,
                meta: self.meta.clone(),
            },
        }
    }

    /// Same values on a new ascending axis (used for affine data transforms).
    pub fn with_values(&self, values: Vec<f64>) -> Result<SpectrumTrace> {
        SpectrumTrace::new(self.frequencies.clone(), values, self.axis, self.meta.clone())
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Divides by the maximum (no-op for an all-zero trace).
    pub fn normalized(&self) -> SpectrumTrace {
        let m = self.max_value();
        let mut out = self.clone();
        if m > 0.0 {
            out.values.iter_mut().for_each(|v| *v /= m);
        }
        out
    }

    /// Trapezoid integral over the frequency axis.
    pub fn integral(&self) -> f64 {
        self.frequencies
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(f, v)| 0.5 * (f[1] - f[0]) * (v[0] + v[1]))
            .sum()
    }

    /// Index and value of the largest sample.
    pub fn argmax(&self) -> Option<(usize, f64)> {
        self.values
            .iter()
            .cloned()
            .enumerate()
            .fold(None, |best, (i, v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((i, v)),
            })
    }
}

/// Stable 64-bit FNV-1a hash of a textual parameter description.
pub fn params_hash(text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn weight(n: usize, len: usize) -> f64 {
    if n == 0 || n + 1 == len {
        0.5
    } else {
        1.0
    }
}

/// `max |C|` over the last 5% of the series relative to `|C(0)|`.
pub fn tail_ratio(values: &[Complex64]) -> f64 {
    let Some(first) = values.first() else {
        return 0.0;
    };
    let c0 = first.norm();
    if c0 == 0.0 {
        return 0.0;
    }
    let start = values.len() - (values.len() / 20).max(1);
    values[start..].iter().map(|v| v.norm()).fold(0.0, f64::max) / c0
}

/// Multiplies by `exp(-ln(1/DECAY_THRESHOLD)·t/T)` so that the last sample is
/// suppressed to the decay threshold; used only when a non-decayed series is
/// transformed on request.
pub fn tail_window(values: &[Complex64]) -> Vec<Complex64> {
    let n = values.len();
    if n < 2 {
        return values.to_vec();
    }
    let k = (1.0 / DECAY_THRESHOLD).ln() / (n - 1) as f64;
    values
        .iter()
        .enumerate()
        .map(|(i, v)| v * (-k * i as f64).exp())
        .collect()
}

/// Evaluates the one-sided transform directly at arbitrary frame
/// frequencies (Hz).
pub fn one_sided_transform(values: &[Complex64], dt: f64, freqs: &[f64]) -> Vec<f64> {
    let len = values.len();
    let weighted: Vec<Complex64> = values
        .iter()
        .enumerate()
        .map(|(n, v)| v * weight(n, len))
        .collect();
    freqs
        .iter()
        .map(|&f| {
            let z = Complex64::from_polar(1.0, std::f64::consts::TAU * f * dt);
            // Horner in z
            let acc = weighted.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c);
            2.0 * dt * acc.re
        })
        .collect()
}

/// The same transform on the FFT grid: zero-padded to the next power of two
/// of at least `ZERO_PAD_FACTOR·N` samples, returned with ascending frame
/// frequencies spanning one period `[-1/2dt, 1/2dt)`.
pub fn one_sided_fft(values: &[Complex64], dt: f64) -> (Vec<f64>, Vec<f64>) {
    let len = values.len();
    let padded = (ZERO_PAD_FACTOR * len.max(1)).next_power_of_two();
    let mut buf: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); padded];
    for (n, v) in values.iter().enumerate() {
        buf[n] = v * weight(n, len);
    }
    // inverse transform carries the e^{+i2πkn/L} kernel
    FftPlanner::new().plan_fft_inverse(padded).process(&mut buf);
    let df = 1.0 / (padded as f64 * dt);
    let half = padded / 2;
    let mut freqs = Vec::with_capacity(padded);
    let mut vals = Vec::with_capacity(padded);
    for k in (half..padded).chain(0..half) {
        let f = if k >= half {
            (k as f64 - padded as f64) * df
        } else {
            k as f64 * df
        };
        freqs.push(f);
        vals.push(2.0 * dt * buf[k].re);
    }
    (freqs, vals)
}
