use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Sum of sinusoids `Σ aᵢ·sin(2π fᵢ t + φᵢ)`; amplitudes in MW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSignal {
    pub freqs: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub phases: Vec<f64>,
    pub seed: u64,
    pub peak_clamp: Option<f64>,
    /// Spacing of the frequency grid, Hz; the waveform repeats every `1/step` s.
    pub step: f64,
}

impl ProbeSignal {
    pub fn value(&self, t: f64) -> f64 {
        self.freqs
            .iter()
            .zip(&self.amplitudes)
            .zip(&self.phases)
            .map(|((f, a), p)| a * (2.0 * PI * f * t + p).sin())
            .sum()
    }

    pub fn period(&self) -> f64 {
        1.0 / self.step
    }

    /// Samples `n` points at spacing `dt` starting at t = 0.
    pub fn sample(&self, dt: f64, n: usize) -> Result<Vec<f64>> {
        let nyq = 0.5 / dt;
        if let Some(f) = self.freqs.iter().find(|f| **f >= nyq) {
            return Err(Error::InvalidBand { lo: self.freqs[0], hi: *f, reason: format!("above Nyquist {nyq} Hz") });
        }
        Ok((0..n).map(|k| self.value(k as f64 * dt)).collect())
    }

    pub fn scale(&mut self, factor: f64) {
        self.amplitudes.iter_mut().for_each(|a| *a *= factor);
    }

    /// Peak of the waveform over one period, evaluated on a dense grid via
    /// an inverse FFT of the line spectrum.
    pub fn peak(&self) -> f64 {
        const N: usize = 1 << 18;
        let mut spec = vec![rustfft::num_complex::Complex::new(0.0, 0.0); N];
        for ((f, a), p) in self.freqs.iter().zip(&self.amplitudes).zip(&self.phases) {
            let bin = (f / self.step).round() as usize;
            // a·sin(ωt + φ) = Im(a·e^{jφ}·e^{jωt})
            let c = rustfft::num_complex::Complex::from_polar(*a, *p);
            spec[bin % N] += c;
        }
        FftPlanner::<f64>::new().plan_fft_inverse(N).process(&mut spec);
        spec.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }
}

/// Multisine on the grid `lo, lo+step, …, hi` with uniformly random
/// amplitudes in `amp_range` and phases in `[0, 2π)` drawn from `seed`.
/// When `peak_clamp` is set, amplitudes are scaled down so the waveform peak
/// stays below it.
pub fn gen_multisine(
    band: (f64, f64),
    step: f64,
    amp_range: (f64, f64),
    seed: u64,
    peak_clamp: Option<f64>,
) -> Result<ProbeSignal> {
    let (lo, hi) = band;
    if !(lo > 0.0) || !(hi >= lo) || !(step > 0.0) {
        return Err(Error::InvalidBand { lo, hi, reason: "empty band or non-positive step".into() });
    }
    if ((lo / step).round() - lo / step).abs() > 1e-6 {
        return Err(Error::InvalidBand { lo, hi, reason: format!("band edge not on the {step} Hz grid") });
    }
    if !(amp_range.0 >= 0.0 && amp_range.1 >= amp_range.0) {
        return Err(Error::Validation(format!("bad amplitude range {amp_range:?}")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    let k0 = (lo / step).round() as usize;
    let freqs: Vec<f64> = (0..n).map(|k| (k0 + k) as f64 * step).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut amplitudes = Vec::with_capacity(n);
    let mut phases = Vec::with_capacity(n);
    for _ in 0..n {
        amplitudes.push(if amp_range.1 > amp_range.0 { rng.gen_range(amp_range.0..amp_range.1) } else { amp_range.0 });
        phases.push(rng.gen_range(0.0..2.0 * PI));
    }
    let mut sig = ProbeSignal { freqs, amplitudes, phases, seed, peak_clamp, step };
    if let Some(c) = peak_clamp {
        let peak = sig.peak();
        if peak > c {
            sig.scale(c / peak * (1.0 - 1e-3));
        }
    }
    Ok(sig)
}
