use crate::error::{Error, Result};
use crate::timeseries::TimeSeriesSet;
use std::f64::consts::PI;

/// Second-order section `(b0 + b1 z⁻¹ + b2 z⁻²)/(1 + a1 z⁻¹ + a2 z⁻²)`.
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    /// Bilinear-transformed analog prototype with pre-warped corner.
    fn new(fc: f64, fs: f64, q: f64, highpass: bool) -> Self {
        let w = (PI * fc / fs).tan();
        let norm = 1.0 / (1.0 + w / q + w * w);
        let a = [2.0 * (w * w - 1.0) * norm, (1.0 - w / q + w * w) * norm];
        let b = if highpass {
            [norm, -2.0 * norm, norm]
        } else {
            let g = w * w * norm;
            [g, 2.0 * g, g]
        };
        Self { b, a }
    }

    fn run(&self, x: &[f64]) -> Vec<f64> {
        // Transposed direct form II, state initialized to the steady state
        // for the first sample.
        let dc = (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1]);
        let x0 = x.first().copied().unwrap_or(0.0);
        let y0 = dc * x0;
        let mut s2 = self.b[2] * x0 - self.a[1] * y0;
        let mut s1 = self.b[1] * x0 - self.a[0] * y0 + s2;
        let mut y = Vec::with_capacity(x.len());
        for &v in x {
            let out = self.b[0] * v + s1;
            s1 = self.b[1] * v - self.a[0] * out + s2;
            s2 = self.b[2] * v - self.a[1] * out;
            y.push(out);
        }
        y
    }
}

/// Q factors of the two sections of a 4th-order Butterworth filter.
const BUTTER4_Q: [f64; 2] = [0.541_196_100_146_197, 1.306_562_964_876_376_8];

fn sections(band: (f64, f64), fs: f64) -> Vec<Biquad> {
    let mut s = Vec::new();
    if band.0 > 0.0 {
        s.extend(BUTTER4_Q.iter().map(|q| Biquad::new(band.0, fs, *q, true)));
    }
    s.extend(BUTTER4_Q.iter().map(|q| Biquad::new(band.1, fs, *q, false)));
    s
}

/// Removes the least-squares line.
pub fn detrend(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return vec![0.0; x.len()];
    }
    let tm = (n - 1.0) / 2.0;
    let xm = x.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (k, v) in x.iter().enumerate() {
        let t = k as f64 - tm;
        sxy += t * (v - xm);
        sxx += t * t;
    }
    let slope = sxy / sxx;
    x.iter().enumerate().map(|(k, v)| v - xm - slope * (k as f64 - tm)).collect()
}

/// Forward-backward filtering with odd-reflection padding at both ends.
fn filtfilt(secs: &[Biquad], x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    let pad = pad.min(n.saturating_sub(1));
    let mut ext = Vec::with_capacity(n + 2 * pad);
    for k in (1..=pad).rev() {
        ext.push(2.0 * x[0] - x[k]);
    }
    ext.extend_from_slice(x);
    for k in 1..=pad {
        ext.push(2.0 * x[n - 1] - x[n - 1 - k]);
    }
    let mut y = ext;
    for s in secs {
        y = s.run(&y);
    }
    y.reverse();
    for s in secs {
        y = s.run(&y);
    }
    y.reverse();
    y[pad..pad + n].to_vec()
}

/// Validates a band against the sampling interval. `lo = 0` disables the
/// high-pass stage.
pub fn check_band(band: (f64, f64), dt: f64) -> Result<()> {
    let nyq = 0.5 / dt;
    let (lo, hi) = band;
    let reason = if !(lo >= 0.0) {
        Some("lower edge must be non-negative")
    } else if !(hi > lo) {
        Some("upper edge must exceed lower edge")
    } else if !(hi < nyq) {
        Some("upper edge must be below Nyquist")
    } else {
        None
    };
    match reason {
        Some(r) => Err(Error::InvalidBand { lo, hi, reason: format!("{r} (Nyquist {nyq} Hz)") }),
        None => Ok(()),
    }
}

/// Zero-phase band-pass of one channel after removing mean and linear trend.
pub fn bandpass(x: &[f64], dt: f64, band: (f64, f64)) -> Result<Vec<f64>> {
    check_band(band, dt)?;
    let fs = 1.0 / dt;
    let secs = sections(band, fs);
    let slowest = if band.0 > 0.0 { band.0 } else { band.1 };
    let pad = (3.0 / (slowest * dt)).ceil() as usize;
    Ok(filtfilt(&secs, &detrend(x), pad))
}

/// Detrends and band-passes every channel; length and time base unchanged.
pub fn preprocess(ts: &TimeSeriesSet, band: (f64, f64)) -> Result<TimeSeriesSet> {
    check_band(band, ts.dt)?;
    let mut out = TimeSeriesSet::new(ts.t0, ts.dt);
    for (n, d) in ts.names.iter().zip(&ts.data) {
        out.push(n.clone(), bandpass(d, ts.dt, band)?)?;
    }
    Ok(out)
}

/// Low-pass (zero-phase, at 0.8× the new Nyquist) then keep every
/// `factor`-th sample.
pub fn decimate(ts: &TimeSeriesSet, factor: usize) -> Result<TimeSeriesSet> {
    if factor <= 1 {
        return Ok(ts.clone());
    }
    let new_dt = ts.dt * factor as f64;
    let fc = 0.8 * 0.5 / new_dt;
    let secs = sections((0.0, fc), 1.0 / ts.dt);
    let pad = (3.0 / (fc * ts.dt)).ceil() as usize;
    let mut out = TimeSeriesSet::new(ts.t0, new_dt);
    for (n, d) in ts.names.iter().zip(&ts.data) {
        let y = filtfilt(&secs, d, pad);
        out.push(n.clone(), y.into_iter().step_by(factor).collect())?;
    }
    Ok(out)
}
