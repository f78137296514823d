use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyResponse {
    /// Strictly increasing, Hz.
    pub freqs: Vec<f64>,
    pub values: Vec<Complex64>,
}

impl FrequencyResponse {
    pub fn new(freqs: Vec<f64>, values: Vec<Complex64>) -> Result<Self> {
        if freqs.len() != values.len() {
            return Err(Error::Validation("frequency response length mismatch".into()));
        }
        if freqs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Validation("frequencies must be strictly increasing".into()));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Validation("non-finite frequency response value".into()));
        }
        Ok(Self { freqs, values })
    }

    /// Samples a model on the given grid.
    pub fn from_fn<F: Fn(Complex64) -> Complex64>(freqs: &[f64], h: F) -> Self {
        let values = freqs.iter().map(|f| h(Complex64::new(0.0, 2.0 * PI * f))).collect();
        Self { freqs: freqs.to_vec(), values }
    }

    /// Frequency of the largest magnitude.
    pub fn peak_freq(&self) -> Option<f64> {
        self.values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .map(|(i, _)| self.freqs[i])
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FrfEstimate {
    pub frf: FrequencyResponse,
    /// Magnitude-squared coherence per retained bin.
    pub coherence: Vec<f64>,
    pub dropped: Vec<f64>,
    pub warnings: Vec<String>,
}

fn dft_bin(x: &[f64], f: f64, dt: f64) -> Complex64 {
    // Rotating phasor recurrence, renormalized periodically.
    let step = Complex64::from_polar(1.0, -2.0 * PI * f * dt);
    let mut w = Complex64::new(1.0, 0.0);
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, v) in x.iter().enumerate() {
        acc += w * v;
        w *= step;
        if k % 1024 == 1023 {
            w = Complex64::from_polar(1.0, -2.0 * PI * f * dt * (k + 1) as f64);
        }
    }
    acc
}

/// Empirical frequency response `Y(f)/U(f)` at the probed frequencies.
///
/// The record is split into `n_periods` equal segments, each holding an
/// integer number of periods of every probed frequency; spectra are averaged
/// across segments (H1 estimate) and coherence is reported per bin. Bins
/// whose input amplitude is below `1e-9` of the strongest are dropped.
pub fn estimate_frf(u: &[f64], y: &[f64], dt: f64, freqs: &[f64], n_periods: usize) -> Result<FrfEstimate> {
    if u.len() != y.len() {
        return Err(Error::Validation(format!("input has {} samples, output {}", u.len(), y.len())));
    }
    let n_periods = n_periods.max(1);
    let seg = u.len() / n_periods;
    if seg < 2 || !(dt > 0.0) {
        return Err(Error::Validation("record too short for FRF estimation".into()));
    }
    let mut warnings = Vec::new();
    for &f in freqs {
        let cycles = f * seg as f64 * dt;
        if (cycles - cycles.round()).abs() > 1e-6 {
            warnings.push(format!("{f} Hz is not periodic in the {:.3} s segment", seg as f64 * dt));
            break;
        }
    }
    let mut suu = Vec::with_capacity(freqs.len());
    let mut syy = Vec::with_capacity(freqs.len());
    let mut syu = Vec::with_capacity(freqs.len());
    for &f in freqs {
        let (mut a, mut b, mut c) = (0.0, 0.0, Complex64::new(0.0, 0.0));
        for p in 0..n_periods {
            let r = p * seg..(p + 1) * seg;
            let uf = dft_bin(&u[r.clone()], f, dt);
            let yf = dft_bin(&y[r], f, dt);
            a += uf.norm_sqr();
            b += yf.norm_sqr();
            c += yf * uf.conj();
        }
        suu.push(a);
        syy.push(b);
        syu.push(c);
    }
    let umax = suu.iter().cloned().fold(0.0, f64::max);
    let mut keep_f = Vec::new();
    let mut values = Vec::new();
    let mut coherence = Vec::new();
    let mut dropped = Vec::new();
    for (i, &f) in freqs.iter().enumerate() {
        if !(suu[i].sqrt() > 1e-9 * umax.sqrt()) {
            dropped.push(f);
            continue;
        }
        keep_f.push(f);
        values.push(syu[i] / suu[i]);
        coherence.push(if syy[i] > 0.0 { syu[i].norm_sqr() / (suu[i] * syy[i]) } else { 0.0 });
    }
    if !dropped.is_empty() {
        warnings.push(format!("{} bins dropped for negligible input", dropped.len()));
    }
    Ok(FrfEstimate { frf: FrequencyResponse::new(keep_f, values)?, coherence, dropped, warnings })
}
