//! Uniformly sampled, named measurement channels.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesSet {
    pub t0: f64,
    pub dt: f64,
    pub names: Vec<String>,
    pub data: Vec<Vec<f64>>,
}

impl TimeSeriesSet {
    pub fn new(t0: f64, dt: f64) -> Self {
        Self { t0, dt, names: Vec::new(), data: Vec::new() }
    }

    pub fn with_channels(t0: f64, dt: f64, channels: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let mut ts = Self::new(t0, dt);
        for (n, d) in channels {
            ts.push(n, d)?;
        }
        Ok(ts)
    }

    pub fn push(&mut self, name: impl Into<String>, samples: Vec<f64>) -> Result<()> {
        let name = name.into();
        if !(self.dt > 0.0) {
            return Err(Error::Validation(format!("sample interval must be positive, got {}", self.dt)));
        }
        if let Some(first) = self.data.first() {
            if first.len() != samples.len() {
                return Err(Error::Validation(format!(
                    "channel {name} has {} samples, expected {}",
                    samples.len(),
                    first.len()
                )));
            }
        }
        if self.names.contains(&name) {
            return Err(Error::Validation(format!("duplicate channel {name}")));
        }
        self.names.push(name);
        self.data.push(samples);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.data.first().map_or(0, |d| d.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_channels(&self) -> usize {
        self.names.len()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.len().saturating_sub(1))
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownChannel(name.to_string()))
    }

    pub fn channel(&self, name: &str) -> Result<&[f64]> {
        Ok(&self.data[self.index_of(name)?])
    }

    /// Subset of channels, in the requested order.
    pub fn select(&self, names: &[String]) -> Result<Self> {
        let mut out = Self::new(self.t0, self.dt);
        for n in names {
            out.push(n.clone(), self.channel(n)?.to_vec())?;
        }
        Ok(out)
    }

    /// Samples from `start` (inclusive) spanning `duration` seconds. Errors
    /// instead of truncating when the window runs past the data.
    pub fn slice(&self, start: f64, duration: f64) -> Result<Self> {
        if !(duration > 0.0) {
            return Err(Error::Window(format!("duration must be positive, got {duration}")));
        }
        let k0 = ((start - self.t0) / self.dt - 1e-9).ceil();
        if k0 < 0.0 {
            return Err(Error::Window(format!("window start {start} s precedes data start {} s", self.t0)));
        }
        let k0 = k0 as usize;
        let n = (duration / self.dt + 1e-9).floor() as usize + 1;
        if k0 + n > self.len() {
            return Err(Error::Window(format!(
                "window [{start}, {}] s extends past end of data at {} s",
                start + duration,
                self.t_end()
            )));
        }
        Ok(Self {
            t0: self.time(k0),
            dt: self.dt,
            names: self.names.clone(),
            data: self.data.iter().map(|d| d[k0..k0 + n].to_vec()).collect(),
        })
    }

    /// CSV with a `time` column followed by one column per channel. Values
    /// use the shortest round-trip representation, so output is
    /// byte-identical for identical data.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["time".to_string()];
        header.extend(self.names.iter().cloned());
        wr.write_record(&header)?;
        for k in 0..self.len() {
            let mut row = vec![format!("{}", self.time(k))];
            row.extend(self.data.iter().map(|d| format!("{}", d[k])));
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers()?.clone();
        if headers.get(0) != Some("time") {
            return Err(Error::Validation("first CSV column must be `time`".into()));
        }
        let names: Vec<String> = headers.iter().skip(1).map(String::from).collect();
        let mut time = Vec::new();
        let mut data = vec![Vec::new(); names.len()];
        for rec in rd.records() {
            let rec = rec?;
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Validation(format!("bad number {s:?}: {e}")));
            time.push(parse(&rec[0])?);
            for (i, d) in data.iter_mut().enumerate() {
                d.push(parse(rec.get(i + 1).unwrap_or(""))?);
            }
        }
        if time.len() < 2 {
            return Err(Error::Validation("time series needs at least two samples".into()));
        }
        let dt = (time[time.len() - 1] - time[0]) / (time.len() - 1) as f64;
        for w in time.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt.abs().max(1e-12) {
                return Err(Error::Validation("time column is not uniformly sampled".into()));
            }
        }
        let mut ts = Self::new(time[0], dt);
        for (n, d) in names.into_iter().zip(data) {
            ts.push(n, d)?;
        }
        Ok(ts)
    }
}
