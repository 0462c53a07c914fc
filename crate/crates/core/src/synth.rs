//! Deterministic OHLCV fixtures on a weekday calendar.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::Rng as _;

use crate::dataio::OhlcvRecord;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    /// `10000 + 1000·sin(2πt/50)` opens.
    Sine,
    /// Opens rising linearly from 8000 by 3 points a day.
    Trend,
    /// Seeded geometric random walk starting near 10000, with an overnight
    /// gap between each close and the next open.
    Noise,
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SynthKind::Sine => "sine",
            SynthKind::Trend => "trend",
            SynthKind::Noise => "noise",
        })
    }
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sine" => Ok(SynthKind::Sine),
            "trend" => Ok(SynthKind::Trend),
            "noise" => Ok(SynthKind::Noise),
            _ => Err(Error::Config(format!("unknown fixture `{s}` (sine, trend, noise)"))),
        }
    }
}

pub const SINE_OFFSET: f64 = 10_000.0;
pub const SINE_AMPLITUDE: f64 = 1_000.0;
pub const SINE_PERIOD: f64 = 50.0;

pub fn first_day() -> NaiveDate {
    NaiveDate::from_ymd_opt(2014, 12, 29).expect("valid date")
}

/// `n` consecutive weekdays starting at `start` (advanced to a weekday).
pub fn weekdays(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

fn sine(t: f64) -> f64 {
    SINE_OFFSET + SINE_AMPLITUDE * (2.0 * PI * t / SINE_PERIOD).sin()
}

pub fn synthesize(kind: SynthKind, days: usize, seed: u64) -> Vec<OhlcvRecord> {
    let mut g = rng::seeded(seed);
    let mut level = SINE_OFFSET;
    weekdays(first_day(), days)
        .into_iter()
        .enumerate()
        .map(|(i, date)| {
            let t = i as f64;
            let (open, close) = match kind {
                SynthKind::Sine => (sine(t), sine(t + 0.5)),
                SynthKind::Trend => (8000.0 + 3.0 * t, 8001.5 + 3.0 * t),
                SynthKind::Noise => {
                    let open = level * (1.0 + g.gen_range(-0.004..0.004));
                    level = open * (1.0 + g.gen_range(-0.01..0.01));
                    (open, level)
                }
            };
            let spread = 20.0 + 5.0 * (i % 7) as f64;
            OhlcvRecord {
                date,
                open,
                high: open.max(close) + spread,
                low: open.min(close) - spread,
                close,
                volume: 200_000 + 1_000 * (i % 11) as u64 + 10 * i as u64,
            }
        })
        .collect()
}
