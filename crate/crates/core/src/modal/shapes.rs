use crate::error::{Error, Result};
use crate::linalg::lstsq;
use crate::mode::Mode;
use crate::timeseries::TimeSeriesSet;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct ChannelShape {
    pub channel: String,
    /// Relative to the largest channel.
    pub amplitude: f64,
    /// Degrees in (−180, 180], relative to the largest channel.
    pub phase_deg: f64,
    #[serde(skip)]
    pub residue: Complex64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeShape {
    pub mode: Mode,
    pub channels: Vec<ChannelShape>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ModeShapeReport {
    pub shapes: Vec<ModeShape>,
    /// Per-channel fraction of signal energy left unexplained.
    pub residual: Vec<f64>,
    pub warnings: Vec<String>,
}

impl ModeShapeReport {
    /// Rows of `(mode_freq_hz, channel, amplitude, phase_deg)`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["freq_hz", "channel", "amplitude", "phase_deg"])?;
        for s in &self.shapes {
            for c in &s.channels {
                wr.write_record(&[
                    format!("{}", s.mode.freq_hz),
                    c.channel.clone(),
                    format!("{}", c.amplitude),
                    format!("{}", c.phase_deg),
                ])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// Wraps degrees into (−180, 180].
pub fn wrap_deg(a: f64) -> f64 {
    let w = a.rem_euclid(360.0);
    if w > 180.0 {
        w - 360.0
    } else {
        w
    }
}

/// Fits every channel against the fixed modal exponentials (plus a constant)
/// and reports amplitude and phase per mode. Residuals above
/// `residual_warning` of a channel's energy produce a warning.
pub fn mode_shapes(ts: &TimeSeriesSet, modes: &[Mode], residual_warning: f64) -> Result<ModeShapeReport> {
    let modes: Vec<Mode> = modes.iter().copied().filter(|m| m.is_oscillatory()).collect();
    if modes.is_empty() {
        return Err(Error::NoModes);
    }
    let n = ts.len();
    let cols = 2 * modes.len() + 1;
    if n < 2 * cols {
        return Err(Error::Window(format!("{n} samples are too few for {} modes", modes.len())));
    }
    let basis = DMatrix::from_fn(n, cols, |k, c| {
        if c == cols - 1 {
            return 1.0;
        }
        let m = &modes[c / 2];
        let t = k as f64 * ts.dt;
        let e = (-m.sigma * t).exp();
        if c % 2 == 0 {
            e * (m.omega() * t).cos()
        } else {
            e * (m.omega() * t).sin()
        }
    });
    let mut residues = vec![Vec::with_capacity(ts.n_channels()); modes.len()];
    let mut residual = Vec::new();
    let mut warnings = Vec::new();
    for (name, x) in ts.names.iter().zip(&ts.data) {
        let b = DVector::from_column_slice(x);
        let (coef, _) = lstsq(&basis, &b, 1e-12)?;
        let err = (&basis * &coef - &b).norm_squared();
        let energy = b.norm_squared();
        let frac = if energy > 0.0 { err / energy } else { 0.0 };
        if frac > residual_warning {
            warnings.push(format!("channel {name}: {:.1}% of signal energy unexplained", 100.0 * frac));
        }
        residual.push(frac);
        // a·cos + b·sin = Re{(a − jb)·e^{jωt}}
        for (j, r) in residues.iter_mut().enumerate() {
            r.push(Complex64::new(coef[2 * j], -coef[2 * j + 1]));
        }
    }
    let shapes = modes
        .iter()
        .zip(residues)
        .map(|(m, r)| {
            let (kmax, rmax) = r
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
                .map(|(k, v)| (k, *v))
                .unwrap();
            let ref_phase = rmax.arg();
            let scale = rmax.norm();
            let channels = ts
                .names
                .iter()
                .zip(&r)
                .enumerate()
                .map(|(k, (name, c))| ChannelShape {
                    channel: name.clone(),
                    amplitude: if scale > 0.0 { c.norm() / scale } else { 0.0 },
                    phase_deg: if k == kmax { 0.0 } else { wrap_deg((c.arg() - ref_phase).to_degrees()) },
                    residue: *c,
                })
                .collect();
            ModeShape { mode: *m, channels }
        })
        .collect();
    Ok(ModeShapeReport { shapes, residual, warnings })
}
