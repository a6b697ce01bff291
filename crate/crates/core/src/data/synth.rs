//! Synthetic Argo-like float data with injected sensor faults.
//!
//! A float repeatedly rises from `max_pressure` to the surface, sampling
//! temperature and salinity along exponential thermocline / halocline shapes.
//! Faults are injected into a fixed number of records (`round(n * rate)`), so
//! the realised error rate matches the target up to that rounding.

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, Feature, ObservationRecord, QcFlag, N_FEATURES};
use crate::rng::{streams, substream};

/// Shape of the simulated water column and float trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileShape {
    pub levels_per_profile: usize,
    pub max_pressure: f64,
    pub cycle_days: f64,
    pub level_interval_seconds: i64,
    pub start_time: DateTime<Utc>,
    pub start_latitude: f64,
    pub start_longitude: f64,
    /// Standard deviation of the per-cycle position random walk, degrees.
    pub drift_per_cycle: f64,
    pub surface_temperature: f64,
    pub deep_temperature: f64,
    pub thermocline_scale: f64,
    pub surface_salinity: f64,
    pub deep_salinity: f64,
    pub halocline_scale: f64,
    pub temperature_noise: f64,
    pub salinity_noise: f64,
}

impl Default for ProfileShape {
    fn default() -> Self {
        Self {
            levels_per_profile: 100,
            max_pressure: 2000.0,
            cycle_days: 10.0,
            level_interval_seconds: 30,
            start_time: Utc.with_ymd_and_hms(2019, 3, 21, 0, 0, 0).unwrap(),
            start_latitude: 24.0,
            start_longitude: -38.0,
            drift_per_cycle: 0.05,
            surface_temperature: 24.0,
            deep_temperature: 3.5,
            thermocline_scale: 300.0,
            surface_salinity: 36.4,
            deep_salinity: 34.9,
            halocline_scale: 450.0,
            temperature_noise: 0.02,
            salinity_noise: 0.005,
        }
    }
}

/// Fault archetypes injected into synthetic records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// Single-sample excursion far from the profile.
    Spike,
    /// Sensor latched on a reading from the other end of the profile.
    Stuck,
    /// Calibration offset of moderate size.
    Offset,
}

#[derive(Debug, Clone, Copy)]
struct Cycle {
    start: DateTime<Utc>,
    latitude: f64,
    longitude: f64,
    surface_temperature: f64,
    thermocline_scale: f64,
    surface_salinity: f64,
}

impl Cycle {
    fn temperature(&self, shape: &ProfileShape, p: f64) -> f64 {
        shape.deep_temperature + (self.surface_temperature - shape.deep_temperature) * (-p / self.thermocline_scale).exp()
    }

    fn salinity(&self, shape: &ProfileShape, p: f64) -> f64 {
        shape.deep_salinity + (self.surface_salinity - shape.deep_salinity) * (-p / shape.halocline_scale).exp()
    }
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    (x * scale).round() / scale
}

fn level_pressure(shape: &ProfileShape, level: usize) -> f64 {
    let last = (shape.levels_per_profile - 1).max(1) as f64;
    5.0 + (shape.max_pressure - 5.0) * (level as f64 / last).powf(1.6)
}

pub fn generate_synthetic_dataset(n: usize, error_rate: f64, seed: u64, shape: &ProfileShape) -> Result<Dataset, DataError> {
    if !(error_rate > 0.0 && error_rate < 1.0) {
        return Err(DataError::InvalidRate(error_rate));
    }
    if n < 100 {
        return Err(DataError::TooFewRows { required: 100, found: n });
    }
    let levels = shape.levels_per_profile.max(2);
    let n_cycles = n.div_ceil(levels);

    let mut rng = substream(seed, streams::SYNTH_PROFILES);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let cycle_secs = (shape.cycle_days * 86_400.0).round() as i64;

    let mut cycles = Vec::with_capacity(n_cycles);
    let (mut lat, mut lon) = (shape.start_latitude, shape.start_longitude);
    for c in 0..n_cycles {
        let phase = std::f64::consts::TAU * (c as f64 * shape.cycle_days) / 365.25;
        cycles.push(Cycle {
            start: shape.start_time + Duration::seconds(cycle_secs * c as i64),
            latitude: lat,
            longitude: lon,
            surface_temperature: shape.surface_temperature + 1.5 * phase.sin() + 0.3 * unit.sample(&mut rng),
            thermocline_scale: shape.thermocline_scale * (1.0 + 0.05 * unit.sample(&mut rng)),
            surface_salinity: shape.surface_salinity + 0.05 * unit.sample(&mut rng),
        });
        lat = (lat + shape.drift_per_cycle * unit.sample(&mut rng)).clamp(-89.0, 89.0);
        lon += shape.drift_per_cycle * unit.sample(&mut rng);
    }

    let mut records = Vec::with_capacity(n);
    let mut owner = Vec::with_capacity(n);
    'outer: for (c, cycle) in cycles.iter().enumerate() {
        // ascent: deepest level first
        for step in 0..levels {
            if records.len() == n {
                break 'outer;
            }
            let level = levels - 1 - step;
            let p = level_pressure(shape, level);
            let pressure = round_to(p + 0.5 * unit.sample(&mut rng), 1).max(0.0);
            records.push(ObservationRecord {
                timestamp: cycle.start + Duration::seconds(shape.level_interval_seconds * step as i64),
                latitude: round_to(cycle.latitude, 4),
                longitude: round_to(cycle.longitude, 4),
                pressure,
                temperature: round_to(cycle.temperature(shape, pressure) + shape.temperature_noise * unit.sample(&mut rng), 3),
                salinity: round_to(cycle.salinity(shape, pressure) + shape.salinity_noise * unit.sample(&mut rng), 3),
                flags: [QcFlag::GOOD; N_FEATURES],
            });
            owner.push(c);
        }
    }

    let mut rng = substream(seed, streams::SYNTH_ERRORS);
    let n_errors = ((n as f64 * error_rate).round() as usize).clamp(1, n);
    let mut chosen = index::sample(&mut rng, n, n_errors).into_vec();
    chosen.sort_unstable();
    for i in chosen {
        let cycle = cycles[owner[i]];
        let kind = match rng.random_range(0..3) {
            0 => ErrorKind::Spike,
            1 => ErrorKind::Stuck,
            _ => ErrorKind::Offset,
        };
        inject(&mut records[i], kind, &cycle, shape, &mut rng);
    }

    Dataset::new(format!("synthetic-n{n}-r{error_rate}-s{seed}"), records)
}

fn signed<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let magnitude = rng.random_range(lo..hi);
    if rng.random_bool(0.5) {
        magnitude
    } else {
        -magnitude
    }
}

/// Smallest temperature / salinity excursions that count as bad data at
/// pressure `p`; the water column is far more uniform at depth.
fn excursion_floor(p: f64) -> (f64, f64) {
    if p < 500.0 {
        (6.0, 0.9)
    } else {
        (2.0, 0.3)
    }
}

fn inject<R: Rng>(rec: &mut ObservationRecord, kind: ErrorKind, cycle: &Cycle, shape: &ProfileShape, rng: &mut R) {
    let bad = QcFlag::BAD;
    let target = rng.random_range(0..3);
    let (t_floor, s_floor) = excursion_floor(rec.pressure);
    match (kind, target) {
        (ErrorKind::Spike, 0) => {
            rec.temperature = round_to(rec.temperature + signed(rng, t_floor, 2.0 * t_floor), 3);
            rec.flags[Feature::Temperature.index()] = bad;
        }
        (ErrorKind::Spike, 1) => {
            rec.salinity = round_to(rec.salinity + signed(rng, s_floor, 2.0 * s_floor), 3);
            rec.flags[Feature::Salinity.index()] = bad;
        }
        (ErrorKind::Spike, _) => {
            rec.latitude = round_to((rec.latitude + signed(rng, 2.0, 6.0)).clamp(-90.0, 90.0), 4);
            rec.longitude = round_to(rec.longitude + signed(rng, 2.0, 6.0), 4);
            rec.flags[Feature::Latitude.index()] = bad;
            rec.flags[Feature::Longitude.index()] = bad;
        }
        (ErrorKind::Stuck, t) => {
            let latched_at = if rec.pressure < shape.max_pressure / 2.0 { shape.max_pressure } else { 5.0 };
            if t % 2 == 0 {
                rec.temperature = round_to(cycle.temperature(shape, latched_at), 3);
                rec.flags[Feature::Temperature.index()] = bad;
            } else {
                rec.salinity = round_to(cycle.salinity(shape, latched_at), 3);
                rec.flags[Feature::Salinity.index()] = bad;
            }
        }
        // drifted calibration: always biased the same way, just past the floor
        (ErrorKind::Offset, t) => {
            if t % 2 == 0 {
                rec.temperature = round_to(rec.temperature + rng.random_range(t_floor..1.5 * t_floor), 3);
                rec.flags[Feature::Temperature.index()] = bad;
            } else {
                rec.salinity = round_to(rec.salinity - rng.random_range(s_floor..1.5 * s_floor), 3);
                rec.flags[Feature::Salinity.index()] = bad;
            }
        }
    }
}
