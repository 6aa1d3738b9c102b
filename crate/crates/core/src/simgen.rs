//! Synthetic driving traces.
//!
//! A single ego vehicle drives along a randomized road made of segments with
//! posted speed limits and curvature. Longitudinal control follows the
//! intelligent driver model (IDM), parameterized per behavior profile, with
//! occasional lead vehicles appearing ahead of the ego car. Every 0.05 s the
//! simulator emits one [`SampleRecord`] carrying IMU, speed, obstacle and
//! speed-limit channels.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{DT, SENSOR_MAX_RANGE};

/// Column order of exported trace files.
pub const TRACE_COLUMNS: [&str; 11] = [
    "t",
    "accel_x",
    "accel_y",
    "accel_z",
    "gyro_x",
    "gyro_y",
    "gyro_z",
    "speed",
    "obstacle_distance",
    "speed_limit",
    "label",
];

/// Shortest trace [`generate_trace`] accepts, in seconds.
pub const MIN_TRACE_DURATION: f64 = 60.0;

/// Driving-style class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Cautious,
    Normal,
    Aggressive,
}

impl Profile {
    pub const ALL: [Profile; 3] = [Profile::Cautious, Profile::Normal, Profile::Aggressive];

    pub fn index(self) -> usize {
        match self {
            Profile::Cautious => 0,
            Profile::Normal => 1,
            Profile::Aggressive => 2,
        }
    }

    pub fn from_index(index: usize) -> Option<Profile> {
        Profile::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Profile::Cautious => "cautious",
            Profile::Normal => "normal",
            Profile::Aggressive => "aggressive",
        }
    }
}

impl std::fmt::Display for Profile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Behavioral parameters of one driving profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileParams {
    pub label: Profile,
    /// Multiplier applied to the posted limit to get the IDM desired speed.
    pub desired_speed_factor: f64,
    /// IDM maximum acceleration, m/s².
    pub max_accel: f64,
    /// IDM comfortable deceleration, m/s².
    pub comfort_decel: f64,
    /// IDM standstill gap, m.
    pub min_gap: f64,
    /// IDM time headway, s.
    pub time_headway: f64,
    pub steer_aggressiveness: f64,
    pub noise_scale: f64,
}

impl ProfileParams {
    pub fn default_for(label: Profile) -> Self {
        match label {
            Profile::Cautious => ProfileParams {
                label,
                desired_speed_factor: 0.9,
                max_accel: 1.5,
                comfort_decel: 2.0,
                min_gap: 4.0,
                time_headway: 2.0,
                steer_aggressiveness: 0.5,
                noise_scale: 0.05,
            },
            Profile::Normal => ProfileParams {
                label,
                desired_speed_factor: 1.0,
                max_accel: 2.5,
                comfort_decel: 3.0,
                min_gap: 2.5,
                time_headway: 1.4,
                steer_aggressiveness: 1.0,
                noise_scale: 0.10,
            },
            Profile::Aggressive => ProfileParams {
                label,
                desired_speed_factor: 1.3,
                max_accel: 4.0,
                comfort_decel: 6.0,
                min_gap: 1.0,
                time_headway: 0.7,
                steer_aggressiveness: 1.5,
                noise_scale: 0.20,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("desired_speed_factor", self.desired_speed_factor),
            ("max_accel", self.max_accel),
            ("comfort_decel", self.comfort_decel),
            ("min_gap", self.min_gap),
            ("time_headway", self.time_headway),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::invalid(format!(
                    "{} profile: {name} must be > 0, got {value}",
                    self.label
                )));
            }
        }
        for (name, value) in [
            ("steer_aggressiveness", self.steer_aggressiveness),
            ("noise_scale", self.noise_scale),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::invalid(format!(
                    "{} profile: {name} must be >= 0, got {value}",
                    self.label
                )));
            }
        }
        Ok(())
    }
}

/// Checks that a set of profiles is usable together: each valid, and the
/// profiles pairwise distinct in desired speed factor and minimum gap.
pub fn validate_profile_set(profiles: &[ProfileParams]) -> Result<()> {
    for p in profiles {
        p.validate()?;
    }
    for (i, a) in profiles.iter().enumerate() {
        for b in &profiles[i + 1..] {
            if a.desired_speed_factor == b.desired_speed_factor || a.min_gap == b.min_gap {
                return Err(Error::invalid(format!(
                    "profiles {} and {} must differ in desired_speed_factor and min_gap",
                    a.label, b.label
                )));
            }
        }
    }
    Ok(())
}

/// Knobs of the road generator, the vehicle dynamics and the sensor models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Posted limits a segment may carry, m/s.
    pub speed_limits: Vec<f64>,
    /// Relative frequency of each entry of `speed_limits`.
    pub speed_limit_weights: Vec<f64>,
    pub min_segment_length: f64,
    pub max_segment_length: f64,
    /// Bound on |curvature|, 1/m.
    pub max_curvature: f64,
    /// Fraction of segments that are straight.
    pub straight_fraction: f64,
    /// Mean time between lead-vehicle events, s.
    pub mean_event_interval: f64,
    pub min_event_duration: f64,
    pub max_event_duration: f64,
    /// Probability that a lead vehicle is standing still (queue, red light).
    pub stopped_lead_probability: f64,
    /// Moving lead vehicles drive at a fraction of the posted limit drawn from this range.
    pub lead_speed_fraction: (f64, f64),
    /// Gap at which a lead vehicle appears, m.
    pub initial_gap: (f64, f64),
    /// Hard braking limit of the vehicle, m/s².
    pub braking_max: f64,
    /// Standard deviation of the driver's throttle jitter per unit `noise_scale`, m/s².
    pub jitter_gain: f64,
    /// Correlation time of the throttle jitter, s.
    pub jitter_tau: f64,
    /// Per-trace relative spread of driver parameters around the profile values.
    pub driver_variability: f64,
    pub imu_accel_noise: f64,
    /// Extra lateral accelerometer noise from body roll and road camber, m/s².
    pub lateral_vibration: f64,
    pub imu_gyro_noise: f64,
    pub vertical_noise: f64,
    /// Standard deviation of the yaw-rate jitter per unit steer aggressiveness.
    pub steer_noise: f64,
    /// Amplitude of the vertical settling transient at spawn, m/s².
    pub spawn_transient: f64,
    pub obstacle_noise: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            speed_limits: vec![8.33, 13.89, 25.0],
            speed_limit_weights: vec![0.35, 0.45, 0.20],
            min_segment_length: 150.0,
            max_segment_length: 600.0,
            max_curvature: 0.004,
            straight_fraction: 0.6,
            mean_event_interval: 40.0,
            min_event_duration: 15.0,
            max_event_duration: 60.0,
            stopped_lead_probability: 0.2,
            lead_speed_fraction: (0.3, 0.9),
            initial_gap: (25.0, 60.0),
            braking_max: 9.0,
            jitter_gain: 4.0,
            jitter_tau: 2.0,
            driver_variability: 0.0,
            imu_accel_noise: 0.02,
            lateral_vibration: 0.3,
            imu_gyro_noise: 0.01,
            vertical_noise: 0.08,
            steer_noise: 0.02,
            spawn_transient: 3.0,
            obstacle_noise: 0.02,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.speed_limits.is_empty() || self.speed_limits.len() != self.speed_limit_weights.len()
        {
            return Err(Error::invalid(
                "speed_limits and speed_limit_weights must be non-empty and of equal length",
            ));
        }
        if self.speed_limits.iter().any(|&v| v.is_nan() || v <= 0.0) {
            return Err(Error::invalid("speed limits must be > 0"));
        }
        if !(self.min_segment_length > 0.0 && self.max_segment_length >= self.min_segment_length) {
            return Err(Error::invalid(
                "segment length bounds must satisfy 0 < min <= max",
            ));
        }
        if !(self.max_curvature.is_finite() && self.max_curvature >= 0.0) {
            return Err(Error::invalid("max_curvature must be finite and >= 0"));
        }
        if !(self.mean_event_interval > 0.0
            && self.min_event_duration > 0.0
            && self.max_event_duration >= self.min_event_duration)
        {
            return Err(Error::invalid("lead event timing must be positive"));
        }
        if !(self.braking_max > 0.0 && self.jitter_tau > 0.0) {
            return Err(Error::invalid("braking_max and jitter_tau must be > 0"));
        }
        let noise = [
            self.jitter_gain,
            self.driver_variability,
            self.imu_accel_noise,
            self.lateral_vibration,
            self.imu_gyro_noise,
            self.vertical_noise,
            self.steer_noise,
            self.obstacle_noise,
        ];
        if noise.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
            return Err(Error::invalid("noise levels must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoadSegment {
    pub length: f64,
    pub speed_limit: f64,
    pub curvature: f64,
}

/// A lead vehicle that appears `initial_gap` meters ahead at `start_time`
/// and drives at constant `lead_speed` for `duration` seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeadEvent {
    pub start_time: f64,
    pub duration: f64,
    pub lead_speed: f64,
    pub initial_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoadLayout {
    pub segments: Vec<RoadSegment>,
    pub lead_events: Vec<LeadEvent>,
}

impl RoadLayout {
    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(|s| s.length).sum()
    }

    /// Segment under `position`; positions past the end wrap around.
    pub fn segment_at(&self, position: f64) -> &RoadSegment {
        let total = self.total_length();
        let mut pos = position.rem_euclid(total);
        for seg in &self.segments {
            if pos < seg.length {
                return seg;
            }
            pos -= seg.length;
        }
        self.segments.last().expect("road has at least one segment")
    }
}

/// Builds a road layout of `total_length` meters with the default [`SimConfig`].
pub fn build_road(seed: u64, total_length: f64) -> Result<RoadLayout> {
    build_road_with(seed, total_length, &SimConfig::default())
}

pub fn build_road_with(seed: u64, total_length: f64, cfg: &SimConfig) -> Result<RoadLayout> {
    if !(total_length.is_finite() && total_length > 0.0) {
        return Err(Error::invalid(format!(
            "road length must be > 0, got {total_length}"
        )));
    }
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut segments: Vec<RoadSegment> = Vec::new();
    let mut covered = 0.0;
    while covered < total_length {
        let drawn = rng.random_range(cfg.min_segment_length..=cfg.max_segment_length);
        let length = drawn.min(total_length - covered);
        let speed_limit = pick_weighted(&mut rng, &cfg.speed_limits, &cfg.speed_limit_weights);
        let curvature = draw_curvature(&mut rng, cfg, speed_limit);
        segments.push(RoadSegment {
            length,
            speed_limit,
            curvature,
        });
        covered += length;
    }

    // Guarantee at least two distinct limits.
    let first_limit = segments[0].speed_limit;
    if cfg.speed_limits.len() > 1 && segments.iter().all(|s| s.speed_limit == first_limit) {
        let other = cfg
            .speed_limits
            .iter()
            .copied()
            .find(|&v| v != first_limit)
            .expect("more than one limit configured");
        if segments.len() == 1 {
            let half = segments[0].length / 2.0;
            segments[0].length = half;
            segments.push(RoadSegment {
                length: total_length - half,
                speed_limit: other,
                curvature: draw_curvature(&mut rng, cfg, other),
            });
        } else {
            let last = segments.len() - 1;
            segments[last].speed_limit = other;
            segments[last].curvature = draw_curvature(&mut rng, cfg, other);
        }
    }

    // Enough events for the slowest plausible traversal of the road.
    let horizon = total_length / 5.0;
    let reference_limit = weighted_mean(&cfg.speed_limits, &cfg.speed_limit_weights);
    let gap_dist = Exp::new(1.0 / cfg.mean_event_interval)
        .map_err(|e| Error::invalid(format!("mean_event_interval: {e}")))?;
    let mut lead_events = Vec::new();
    let mut t = gap_dist.sample(&mut rng);
    while t < horizon {
        let duration = rng.random_range(cfg.min_event_duration..=cfg.max_event_duration);
        let lead_speed = if rng.random::<f64>() < cfg.stopped_lead_probability {
            0.0
        } else {
            let (lo, hi) = cfg.lead_speed_fraction;
            reference_limit * rng.random_range(lo..=hi)
        };
        let (glo, ghi) = cfg.initial_gap;
        lead_events.push(LeadEvent {
            start_time: t,
            duration,
            lead_speed,
            initial_gap: rng.random_range(glo..=ghi),
        });
        t += duration + gap_dist.sample(&mut rng);
    }

    Ok(RoadLayout {
        segments,
        lead_events,
    })
}

fn pick_weighted(rng: &mut impl Rng, values: &[f64], weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (&v, &w) in values.iter().zip(weights) {
        if u < w {
            return v;
        }
        u -= w;
    }
    *values.last().expect("non-empty")
}

fn weighted_mean(values: &[f64], weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total
}

fn draw_curvature(rng: &mut impl Rng, cfg: &SimConfig, speed_limit: f64) -> f64 {
    if rng.random::<f64>() < cfg.straight_fraction || cfg.max_curvature == 0.0 {
        return 0.0;
    }
    // Keep nominal lateral acceleration on fast roads within ~2 m/s².
    let bound = cfg.max_curvature.min(2.0 / (speed_limit * speed_limit));
    rng.random_range(-bound..=bound)
}

/// One synchronous sensor reading.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord {
    pub t: f64,
    pub accel_x: f64,
    pub accel_y: f64,
    pub accel_z: f64,
    pub gyro_x: f64,
    pub gyro_y: f64,
    pub gyro_z: f64,
    pub speed: f64,
    /// `None` when nothing is within sensor range.
    pub obstacle_distance: Option<f64>,
    pub speed_limit: f64,
    pub label: Profile,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LeadVehicle {
    pub gap: f64,
    pub speed: f64,
    pub ends_at: f64,
}

/// Full simulator state between two steps.
#[derive(Clone, Debug, PartialEq)]
pub struct VehicleState {
    pub t: f64,
    pub step: u64,
    pub position: f64,
    pub speed: f64,
    /// Realized longitudinal acceleration over the last step.
    pub accel: f64,
    /// Ornstein-Uhlenbeck throttle jitter, m/s².
    pub jitter: f64,
    pub lead: Option<LeadVehicle>,
    pub next_event: usize,
    pub imu: [f64; 6],
    pub obstacle_distance: Option<f64>,
    pub speed_limit: f64,
}

impl VehicleState {
    pub fn at_rest(road: &RoadLayout) -> Self {
        VehicleState {
            t: 0.0,
            step: 0,
            position: 0.0,
            speed: 0.0,
            accel: 0.0,
            jitter: 0.0,
            lead: None,
            next_event: 0,
            imu: [0.0; 6],
            obstacle_distance: None,
            speed_limit: road.segment_at(0.0).speed_limit,
        }
    }

    pub fn record(&self, label: Profile) -> SampleRecord {
        let [accel_x, accel_y, accel_z, gyro_x, gyro_y, gyro_z] = self.imu;
        SampleRecord {
            t: self.t,
            accel_x,
            accel_y,
            accel_z,
            gyro_x,
            gyro_y,
            gyro_z,
            speed: self.speed,
            obstacle_distance: self.obstacle_distance,
            speed_limit: self.speed_limit,
            label,
        }
    }
}

/// IDM acceleration before clipping and noise.
pub fn idm_acceleration(
    params: &ProfileParams,
    speed: f64,
    desired_speed: f64,
    lead: Option<&LeadVehicle>,
) -> f64 {
    let a = params.max_accel;
    let free = a * (1.0 - (speed / desired_speed).powi(4));
    // Slowing down for a lower limit happens at comfortable deceleration.
    let free = free.max(-params.comfort_decel);
    match lead {
        None => free,
        Some(lead) => {
            let closing = speed - lead.speed;
            let desired_gap = params.min_gap
                + (speed * params.time_headway
                    + speed * closing / (2.0 * (a * params.comfort_decel).sqrt()))
                .max(0.0);
            free - a * (desired_gap / lead.gap.max(1e-3)).powi(2)
        }
    }
}

/// Advances the simulation by one step of `dt` seconds.
pub fn step_dynamics(
    state: &VehicleState,
    params: &ProfileParams,
    road: &RoadLayout,
    cfg: &SimConfig,
    dt: f64,
    rng: &mut impl Rng,
) -> VehicleState {
    let mut next = state.clone();
    next.step = state.step + 1;
    next.t = next.step as f64 * dt;

    // Lead vehicle bookkeeping at the start of the step.
    if let Some(lead) = next.lead {
        if state.t >= lead.ends_at {
            next.lead = None;
        }
    }
    while let Some(event) = road.lead_events.get(next.next_event) {
        if event.start_time > state.t {
            break;
        }
        next.next_event += 1;
        if next.lead.is_none() && state.t < event.start_time + event.duration {
            next.lead = Some(LeadVehicle {
                gap: event.initial_gap,
                speed: event.lead_speed,
                ends_at: event.start_time + event.duration,
            });
        }
    }

    let segment = road.segment_at(state.position);
    let desired_speed = params.desired_speed_factor * segment.speed_limit;
    let commanded = idm_acceleration(params, state.speed, desired_speed, next.lead.as_ref())
        .clamp(-cfg.braking_max, params.max_accel);

    // Throttle jitter fades out at standstill so stopped cars stay stopped.
    let sigma = params.noise_scale * cfg.jitter_gain;
    let xi: f64 = StandardNormal.sample(rng);
    next.jitter = state.jitter - state.jitter * dt / cfg.jitter_tau
        + sigma * (2.0 * dt / cfg.jitter_tau).sqrt() * xi;
    let moving = (state.speed / 3.0).min(1.0);
    let accel = commanded + next.jitter * moving;

    let mut speed = (state.speed + accel * dt).max(0.0);
    if let Some(lead) = next.lead.as_mut() {
        lead.gap += (lead.speed - 0.5 * (state.speed + speed)) * dt;
        if lead.gap < 0.5 {
            lead.gap = 0.5;
            speed = speed.min(lead.speed);
        }
    }
    next.speed = speed;
    next.accel = (speed - state.speed) / dt;
    next.position = state.position + 0.5 * (state.speed + speed) * dt;

    let segment = road.segment_at(next.position);
    next.speed_limit = segment.speed_limit;

    let n = |rng: &mut dyn rand::RngCore, sd: f64| -> f64 {
        if sd > 0.0 {
            Normal::new(0.0, sd).expect("finite sd").sample(rng)
        } else {
            0.0
        }
    };
    let steer_jitter = n(rng, cfg.steer_noise * params.steer_aggressiveness);
    let yaw_rate = segment.curvature * speed * (1.0 + steer_jitter)
        + n(rng, 0.1 * cfg.steer_noise * params.steer_aggressiveness) * moving;
    let transient = cfg.spawn_transient * (-next.t / 0.25).exp();
    next.imu = [
        next.accel + n(rng, cfg.imu_accel_noise),
        speed * yaw_rate + n(rng, cfg.imu_accel_noise.hypot(cfg.lateral_vibration)),
        transient + n(rng, cfg.vertical_noise),
        n(rng, cfg.imu_gyro_noise),
        n(rng, cfg.imu_gyro_noise),
        yaw_rate + n(rng, cfg.imu_gyro_noise),
    ];

    next.obstacle_distance = match next.lead {
        Some(lead) if lead.gap <= SENSOR_MAX_RANGE => {
            Some((lead.gap + n(rng, cfg.obstacle_noise)).clamp(0.0, SENSOR_MAX_RANGE))
        }
        _ => None,
    };
    next
}

/// Number of records a trace of `duration` seconds holds.
pub fn trace_len(duration: f64) -> usize {
    (duration / DT + 1e-9).floor() as usize
}

/// Generates a labeled trace with the default [`SimConfig`].
pub fn generate_trace(
    params: &ProfileParams,
    duration: f64,
    seed: u64,
) -> Result<Vec<SampleRecord>> {
    generate_trace_with(params, duration, seed, &SimConfig::default())
}

pub fn generate_trace_with(
    params: &ProfileParams,
    duration: f64,
    seed: u64,
    cfg: &SimConfig,
) -> Result<Vec<SampleRecord>> {
    if duration.is_nan() || duration < MIN_TRACE_DURATION {
        return Err(Error::invalid(format!(
            "trace duration must be >= {MIN_TRACE_DURATION} s, got {duration}"
        )));
    }
    params.validate()?;
    cfg.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let road_seed: u64 = rng.random();
    // Long enough that the ego car never wraps around.
    let road = build_road_with(road_seed, duration * 40.0, cfg)?;
    let driver = perturb_driver(params, cfg.driver_variability, &mut rng);

    let n = trace_len(duration);
    let mut records = Vec::with_capacity(n);
    let mut state = VehicleState::at_rest(&road);
    state.imu[2] = cfg.spawn_transient;
    for _ in 0..n {
        records.push(state.record(params.label));
        state = step_dynamics(&state, &driver, &road, cfg, DT, &mut rng);
    }
    Ok(records)
}

/// Per-trace driver heterogeneity: scales the profile parameters by
/// log-normal factors of relative spread `spread`.
fn perturb_driver(params: &ProfileParams, spread: f64, rng: &mut impl Rng) -> ProfileParams {
    let factor = |rng: &mut dyn rand::RngCore| -> f64 {
        if spread > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            (spread * z).exp()
        } else {
            1.0
        }
    };
    let speed_spread = factor(rng).powf(0.25);
    ProfileParams {
        desired_speed_factor: params.desired_speed_factor * speed_spread,
        max_accel: params.max_accel * factor(rng),
        comfort_decel: params.comfort_decel * factor(rng),
        min_gap: params.min_gap * factor(rng),
        time_headway: params.time_headway * factor(rng),
        noise_scale: params.noise_scale * factor(rng),
        ..params.clone()
    }
}

/// Writes records as CSV with the [`TRACE_COLUMNS`] header.
pub fn export_trace(records: &[SampleRecord], path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::invalid("cannot export an empty trace"));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(file));
    writer.write_record(TRACE_COLUMNS)?;
    for r in records {
        let distance = r
            .obstacle_distance
            .map(|d| d.to_string())
            .unwrap_or_default();
        writer.write_record([
            r.t.to_string(),
            r.accel_x.to_string(),
            r.accel_y.to_string(),
            r.accel_z.to_string(),
            r.gyro_x.to_string(),
            r.gyro_y.to_string(),
            r.gyro_z.to_string(),
            r.speed.to_string(),
            distance,
            r.speed_limit.to_string(),
            r.label.index().to_string(),
        ])?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn free_road() -> RoadLayout {
        RoadLayout {
            segments: vec![RoadSegment {
                length: 10_000.0,
                speed_limit: 13.89,
                curvature: 0.0,
            }],
            lead_events: vec![],
        }
    }

    #[test]
    fn road_is_deterministic_per_seed() {
        assert_eq!(
            build_road(7, 5000.0).unwrap(),
            build_road(7, 5000.0).unwrap()
        );
    }

    #[test]
    fn different_seeds_give_different_roads() {
        let a = build_road(7, 5000.0).unwrap();
        let b = build_road(8, 5000.0).unwrap();
        assert_ne!(a.segments, b.segments);
    }

    #[test]
    fn short_road_has_one_or_two_segments_covering_length() {
        let road = build_road(1, 100.0).unwrap();
        assert!((1..=2).contains(&road.segments.len()));
        assert!((road.total_length() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn road_has_two_limits_and_bounded_curvature() {
        let cfg = SimConfig::default();
        for seed in 0..50 {
            let road = build_road(seed, 800.0).unwrap();
            let first = road.segments[0].speed_limit;
            assert!(road.segments.iter().any(|s| s.speed_limit != first));
            assert!((road.total_length() - 800.0).abs() < 1e-9);
            for s in &road.segments {
                assert!(s.length > 0.0);
                assert!(s.curvature.abs() <= cfg.max_curvature);
                assert!(cfg.speed_limits.contains(&s.speed_limit));
            }
        }
    }

    #[test]
    fn non_positive_road_length_is_rejected() {
        assert!(matches!(build_road(1, 0.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(
            build_road(1, -5.0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn equilibrium_speed_gives_near_zero_accel() {
        let params = ProfileParams::default_for(Profile::Normal);
        let road = free_road();
        let cfg = SimConfig::default();
        let mut state = VehicleState::at_rest(&road);
        state.speed = params.desired_speed_factor * 13.89;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let next = step_dynamics(&state, &params, &road, &cfg, DT, &mut rng);
        let sigma = params.noise_scale * cfg.jitter_gain * (2.0 * DT / cfg.jitter_tau).sqrt();
        assert!(next.accel.abs() <= 5.0 * sigma, "accel {}", next.accel);
    }

    #[test]
    fn starts_from_rest_on_free_road() {
        let params = ProfileParams::default_for(Profile::Cautious);
        let road = free_road();
        let state = VehicleState::at_rest(&road);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let next = step_dynamics(&state, &params, &road, &SimConfig::default(), DT, &mut rng);
        assert!(next.accel > 0.0);
        assert!(next.speed > 0.0);
    }

    #[test]
    fn brakes_when_closing_on_lead_at_min_gap() {
        for profile in Profile::ALL {
            let params = ProfileParams::default_for(profile);
            let lead = LeadVehicle {
                gap: params.min_gap,
                speed: 5.0,
                ends_at: 100.0,
            };
            let a = idm_acceleration(&params, 10.0, 13.89, Some(&lead));
            assert!(a < 0.0, "{profile}: {a}");

            let mut road = free_road();
            road.lead_events.push(LeadEvent {
                start_time: 0.0,
                duration: 100.0,
                lead_speed: 5.0,
                initial_gap: params.min_gap,
            });
            let mut state = VehicleState::at_rest(&road);
            state.speed = 10.0;
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let next = step_dynamics(&state, &params, &road, &SimConfig::default(), DT, &mut rng);
            assert!(next.accel < 0.0, "{profile}: {}", next.accel);
        }
    }

    #[test]
    fn trace_has_expected_length_and_label() {
        for profile in Profile::ALL {
            let params = ProfileParams::default_for(profile);
            let trace = generate_trace(&params, 60.0, 3).unwrap();
            assert_eq!(trace.len(), 1200);
            assert!(trace.iter().all(|r| r.label == profile));
        }
    }

    #[test]
    fn trace_is_deterministic() {
        let params = ProfileParams::default_for(Profile::Aggressive);
        let a = generate_trace(&params, 120.0, 42).unwrap();
        let b = generate_trace(&params, 120.0, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn short_duration_is_rejected() {
        let params = ProfileParams::default_for(Profile::Normal);
        assert!(matches!(
            generate_trace(&params, 59.9, 1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn physical_sanity() {
        for profile in Profile::ALL {
            let params = ProfileParams::default_for(profile);
            let trace = generate_trace(&params, 300.0, 9).unwrap();
            for (k, w) in trace.windows(2).enumerate() {
                assert!((w[1].t - w[0].t - DT).abs() < 1e-9, "step {k}");
            }
            for r in &trace {
                assert!(r.speed >= 0.0);
                if let Some(d) = r.obstacle_distance {
                    assert!((0.0..=SENSOR_MAX_RANGE).contains(&d));
                }
            }
        }
    }

    #[test]
    fn aggressive_overspeeds_more_than_cautious() {
        let frac = |p: Profile| {
            let trace = generate_trace(&ProfileParams::default_for(p), 600.0, 21).unwrap();
            trace.iter().filter(|r| r.speed > r.speed_limit).count() as f64 / trace.len() as f64
        };
        assert!(frac(Profile::Aggressive) > frac(Profile::Cautious));
    }

    #[test]
    fn mean_speed_orders_profiles() {
        let mean_speed = |p: Profile| {
            let params = ProfileParams::default_for(p);
            let mut total = 0.0;
            let mut n = 0usize;
            for seed in 0..10 {
                for r in generate_trace(&params, 600.0, 1000 + seed).unwrap() {
                    total += r.speed;
                    n += 1;
                }
            }
            total / n as f64
        };
        let (c, n, a) = (
            mean_speed(Profile::Cautious),
            mean_speed(Profile::Normal),
            mean_speed(Profile::Aggressive),
        );
        assert!(a > n && n > c, "cautious {c}, normal {n}, aggressive {a}");
    }

    #[test]
    fn export_rejects_empty_trace() {
        let dir = tempfile::tempdir().unwrap();
        assert!(export_trace(&[], &dir.path().join("x.csv")).is_err());
    }

    #[test]
    fn default_profiles_are_a_valid_set() {
        let set: Vec<_> = Profile::ALL
            .iter()
            .map(|&p| ProfileParams::default_for(p))
            .collect();
        validate_profile_set(&set).unwrap();
        let mut dup = set.clone();
        dup[1].min_gap = dup[0].min_gap;
        assert!(validate_profile_set(&dup).is_err());
    }
}
