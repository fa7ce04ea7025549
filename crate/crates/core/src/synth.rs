//! Synthetic classroom sensor data.
//!
//! CO₂ follows a first-order mass balance: every occupant adds `g` ppm per
//! step and ventilation removes a fraction `k` of the excess over ambient,
//!
//! ```text
//! co2[t+1] = co2[t] + g·n[t] − k·(co2[t] − ambient) + ε
//! ```
//!
//! so a constant occupancy `n` settles at `ambient + g·n/k`. Temperature
//! relaxes toward `base_temp + temp_per_person·n` at the same rate.
//! Humidity, noise and pressure respond to the current occupancy directly.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use rand_pcg::Pcg64;

use crate::dataio::{SensorReading, SECONDS_PER_DAY};
use crate::encoding::MAX_COUNT;
use crate::seed::derive_indexed_seed;

/// Simulation constants. Noise deviations are in feature order
/// temp, hum, co2, noise, pressure.
#[derive(Debug, Clone, PartialEq)]
pub struct RoomParams {
    /// ppm
    pub ambient_co2: f64,
    /// ppm per person per step
    pub co2_per_person: f64,
    /// Fraction of the excess CO₂ removed per step, in (0, 1].
    pub air_exchange: f64,
    pub sensor_noise_sd: [f64; 5],
    /// °C
    pub base_temp: f64,
    /// °C per person at equilibrium
    pub temp_per_person: f64,
    pub base_humidity: f64,
    pub humidity_per_person: f64,
    /// dB in an empty room
    pub base_noise: f64,
    pub noise_per_person: f64,
    /// mbar
    pub base_pressure: f64,
    pub pressure_per_person: f64,
    pub step_minutes: u32,
    /// UTC day index of the first simulated day.
    pub start_day: i64,
}

impl Default for RoomParams {
    fn default() -> Self {
        RoomParams {
            ambient_co2: 420.0,
            co2_per_person: 4.0,
            air_exchange: 0.1,
            sensor_noise_sd: [0.05, 0.3, 5.0, 0.6, 0.1],
            base_temp: 21.5,
            temp_per_person: 0.08,
            base_humidity: 43.0,
            humidity_per_person: 0.15,
            base_noise: 35.0,
            noise_per_person: 1.5,
            base_pressure: 1020.6,
            pressure_per_person: 0.0,
            step_minutes: 5,
            // 2022-03-07, a Monday.
            start_day: 19_058,
        }
    }
}

impl RoomParams {
    pub fn noiseless() -> Self {
        RoomParams { sensor_noise_sd: [0.0; 5], ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.air_exchange > 0.0 && self.air_exchange <= 1.0) {
            return Err(format!("air_exchange must lie in (0, 1], got {}", self.air_exchange));
        }
        if self.co2_per_person <= 0.0 {
            return Err("co2_per_person must be positive".into());
        }
        if self.step_minutes == 0 || 1440 % self.step_minutes != 0 {
            return Err("step_minutes must be a positive divisor of 1440".into());
        }
        if self.ambient_co2 <= 0.0 || self.sensor_noise_sd.iter().any(|s| *s < 0.0) {
            return Err("ambient_co2 must be positive and noise deviations non-negative".into());
        }
        Ok(())
    }

    pub fn steps_per_day(&self) -> usize {
        (1440 / self.step_minutes) as usize
    }

    /// Steady-state CO₂ under a constant occupancy.
    pub fn co2_equilibrium(&self, people: u32) -> f64 {
        self.ambient_co2 + self.co2_per_person * people as f64 / self.air_exchange
    }
}

/// One occupied interval, in minutes after midnight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Session {
    pub start_minute: u32,
    pub end_minute: u32,
    pub people: u32,
}

/// Per-day occupied intervals, ordered and non-overlapping within a day.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancySchedule {
    pub days: Vec<Vec<Session>>,
}

impl OccupancySchedule {
    /// Occupancy at `minute` of day `day`.
    pub fn people_at(&self, day: usize, minute: u32) -> u32 {
        self.days[day]
            .iter()
            .find(|s| (s.start_minute..s.end_minute).contains(&minute))
            .map_or(0, |s| s.people)
    }

    /// `day,start_minute,end_minute,people` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("day,start_minute,end_minute,people\n");
        for (d, sessions) in self.days.iter().enumerate() {
            for s in sessions {
                let _ = writeln!(out, "{d},{},{},{}", s.start_minute, s.end_minute, s.people);
            }
        }
        out
    }
}

/// Lecture slots, as minutes after midnight.
const SLOTS: [u32; 6] = [8 * 60, 10 * 60, 12 * 60, 14 * 60, 16 * 60, 18 * 60];
const DURATIONS: [u32; 3] = [50, 75, 110];

struct Course {
    slot: u32,
    duration: u32,
    attendance: u32,
}

/// Draws a weekly timetable of recurring courses: each weekday hosts zero
/// to three of them and weekends are empty. Day 0 is a Monday. A course
/// keeps its head count for the whole session and from week to week;
/// only the start time shifts by a few minutes between meetings.
pub fn gen_schedule(days: usize, seed: u64) -> OccupancySchedule {
    let mut rng = Pcg64::seed_from_u64(derive_indexed_seed(seed, "synth/courses", 0));
    let mut slots = SLOTS.to_vec();
    slots.shuffle(&mut rng);
    let courses: Vec<Course> = slots
        .into_iter()
        .map(|slot| Course {
            slot,
            duration: DURATIONS[rng.gen_range(0..DURATIONS.len())],
            attendance: rng.gen_range(1..=MAX_COUNT),
        })
        .collect();
    let week: Vec<Vec<&Course>> = (0..7)
        .map(|weekday| {
            if weekday >= 5 {
                return Vec::new();
            }
            let count = match rng.gen_range(0..20) {
                0..=1 => 0,
                2..=6 => 1,
                7..=13 => 2,
                _ => 3,
            };
            let mut picked: Vec<&Course> = courses.choose_multiple(&mut rng, count).collect();
            picked.sort_by_key(|c| c.slot);
            picked
        })
        .collect();

    let schedule_days = (0..days)
        .map(|d| {
            let mut rng = Pcg64::seed_from_u64(derive_indexed_seed(seed, "synth/day", d as u64));
            week[d % 7]
                .iter()
                .map(|c| {
                    let offset = 5 * rng.gen_range(0..=2);
                    Session { start_minute: c.slot + offset, end_minute: c.slot + offset + c.duration, people: c.attendance }
                })
                .collect()
        })
        .collect();
    OccupancySchedule { days: schedule_days }
}

fn gaussian(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("non-negative deviation")
}

/// Simulates every day of `schedule` at `params.step_minutes` cadence.
/// Each day starts from ambient conditions and uses its own random stream.
///
/// Panics if `params` fails [`RoomParams::validate`].
pub fn gen_readings(schedule: &OccupancySchedule, params: &RoomParams, seed: u64) -> Vec<SensorReading> {
    params.validate().expect("valid room parameters");
    let steps = params.steps_per_day();
    let step_secs = params.step_minutes as i64 * 60;
    let sd = params.sensor_noise_sd;
    let k = params.air_exchange;
    let mut out = Vec::with_capacity(schedule.days.len() * steps);

    for day in 0..schedule.days.len() {
        let mut rng = Pcg64::seed_from_u64(derive_indexed_seed(seed, "synth/readings", day as u64));
        let noise: Vec<Normal<f64>> = sd.iter().map(|&s| gaussian(s)).collect();
        let day_start = (params.start_day + day as i64) * SECONDS_PER_DAY;
        let mut co2 = params.ambient_co2;
        let mut temp = params.base_temp;
        for t in 0..steps {
            let people = schedule.people_at(day, t as u32 * params.step_minutes);
            let n = people as f64;
            out.push(SensorReading {
                timestamp: day_start + t as i64 * step_secs,
                temperature: temp,
                humidity: (params.base_humidity + params.humidity_per_person * n + noise[1].sample(&mut rng))
                    .clamp(0.0, 100.0),
                co2,
                noise: params.base_noise + params.noise_per_person * n + noise[3].sample(&mut rng),
                pressure: params.base_pressure + params.pressure_per_person * n + noise[4].sample(&mut rng),
                people: Some(people),
            });
            co2 += params.co2_per_person * n - k * (co2 - params.ambient_co2) + noise[2].sample(&mut rng);
            co2 = co2.max(1.0);
            temp += k * (params.base_temp + params.temp_per_person * n - temp) + noise[0].sample(&mut rng);
        }
    }
    out
}

/// Constant-occupancy CO₂ trajectory, starting at ambient, without noise.
pub fn co2_trajectory(params: &RoomParams, people: u32, steps: usize) -> Vec<f64> {
    let mut co2 = params.ambient_co2;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(co2);
    for _ in 0..steps {
        co2 += params.co2_per_person * people as f64 - params.air_exchange * (co2 - params.ambient_co2);
        out.push(co2);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{parse_sensor_csv, write_sensor_csv};

    #[test]
    fn schedule_is_seeded_and_in_range() {
        assert_eq!(gen_schedule(11, 5), gen_schedule(11, 5));
        assert_ne!(gen_schedule(11, 5), gen_schedule(11, 6));
        assert_eq!(gen_schedule(1, 5).days.len(), 1);
        for seed in 0..20 {
            for day in gen_schedule(11, seed).days {
                assert!(day.len() <= 3);
                assert!(day.iter().all(|s| s.people <= 15 && s.start_minute < s.end_minute));
                assert!(day.windows(2).all(|w| w[0].end_minute <= w[1].start_minute));
            }
        }
    }

    #[test]
    fn timetable_repeats_weekly() {
        let s = gen_schedule(21, 4);
        for d in 0..14 {
            let heads = |day: usize| s.days[day].iter().map(|x| (x.start_minute / 60, x.people)).collect::<Vec<_>>();
            assert_eq!(heads(d), heads(d + 7));
        }
        assert!(s.days.iter().skip(5).step_by(7).chain(s.days.iter().skip(6).step_by(7)).all(Vec::is_empty));
    }

    #[test]
    fn empty_room_stays_at_ambient() {
        let schedule = OccupancySchedule { days: vec![vec![]; 2] };
        let p = RoomParams::noiseless();
        let rows = gen_readings(&schedule, &p, 3);
        assert_eq!(rows.len(), 2 * 288);
        assert!(rows.iter().all(|r| r.co2 == p.ambient_co2 && r.people == Some(0)));
    }

    #[test]
    fn constant_occupancy_reaches_equilibrium() {
        let p = RoomParams { co2_per_person: 2.0, air_exchange: 0.05, ..RoomParams::noiseless() };
        assert!((p.co2_equilibrium(10) - 820.0).abs() < 1e-9);
        let traj = co2_trajectory(&p, 10, 400);
        // 1 − (1 − k)^n crosses 1 − 1/e between n = 19 and n = 20.
        let target = 420.0 + 400.0 * (1.0 - (-1.0f64).exp());
        let crossing = traj.iter().position(|&c| c >= target).unwrap();
        assert_eq!(crossing, 20);
        assert!((traj[400] - 820.0).abs() < 1e-3);
    }

    #[test]
    fn readings_follow_schedule() {
        let schedule = gen_schedule(3, 9);
        let rows = gen_readings(&schedule, &RoomParams::default(), 9);
        assert!(rows.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
        assert!(rows.iter().all(|r| r.validate().is_ok()));
        for r in &rows {
            let day = (r.day() - RoomParams::default().start_day) as usize;
            let minute = (r.timestamp.rem_euclid(SECONDS_PER_DAY) / 60) as u32;
            assert_eq!(r.people, Some(schedule.people_at(day, minute)));
        }
        assert_eq!(parse_sensor_csv(&write_sensor_csv(&rows)).unwrap(), rows);
        assert!(schedule.to_csv().starts_with("day,start_minute,end_minute,people\n"));
    }

    #[test]
    fn occupied_steps_have_more_co2() {
        let schedule = gen_schedule(11, 1);
        let rows = gen_readings(&schedule, &RoomParams::noiseless(), 1);
        let mean = |occupied: bool| {
            let v: Vec<f64> = rows.iter().filter(|r| (r.people.unwrap() > 0) == occupied).map(|r| r.co2).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!(mean(true) > mean(false));
        assert!(rows.iter().all(|r| r.co2 >= 420.0));
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(RoomParams { air_exchange: 0.0, ..RoomParams::default() }.validate().is_err());
        assert!(RoomParams { air_exchange: 1.5, ..RoomParams::default() }.validate().is_err());
        assert!(RoomParams { co2_per_person: 0.0, ..RoomParams::default() }.validate().is_err());
        assert!(RoomParams { step_minutes: 7, ..RoomParams::default() }.validate().is_err());
    }
}
