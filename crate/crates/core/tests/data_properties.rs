use occupancy_core::dataio::{
    group_by_day, make_windows, parse_sensor_csv, window_count, write_sensor_csv, SensorReading, SECONDS_PER_DAY,
};
use occupancy_core::synth::{gen_readings, gen_schedule, RoomParams};
use occupancy_core::{compute_norm_stats, NormStats};
use proptest::prelude::*;

fn reading_strategy() -> impl Strategy<Value = (i64, [f64; 5], Option<u32>)> {
    (
        1i64..5_000,
        (-30.0..50.0f64, 0.0..=100.0f64, 1e-3..1e4f64, 0.0..150.0f64, 500.0..1100.0f64),
        proptest::option::of(0u32..40),
    )
        .prop_map(|(gap, (t, h, c, n, p), people)| (gap, [t, h, c, n, p], people))
}

fn build(start: i64, rows: &[(i64, [f64; 5], Option<u32>)]) -> Vec<SensorReading> {
    let mut ts = start;
    rows.iter()
        .map(|(gap, f, people)| {
            ts += gap;
            SensorReading {
                timestamp: ts,
                temperature: f[0],
                humidity: f[1],
                co2: f[2],
                noise: f[3],
                pressure: f[4],
                people: *people,
            }
        })
        .collect()
}

proptest! {
    #[test]
    fn csv_round_trip(start in -1_000_000_000i64..2_000_000_000, rows in proptest::collection::vec(reading_strategy(), 0..60)) {
        let readings = build(start, &rows);
        let text = write_sensor_csv(&readings);
        prop_assert_eq!(parse_sensor_csv(&text).unwrap(), readings);
    }

    #[test]
    fn denormalize_inverts_normalize(
        x in proptest::array::uniform5(-1e4..1e4f64),
        mean in proptest::array::uniform5(-1e3..1e3f64),
        std in proptest::array::uniform5(1e-2..1e3f64),
    ) {
        let stats = NormStats { mean, std };
        let back = stats.denormalize(&stats.normalize(&x));
        for k in 0..5 {
            prop_assert!((back[k] - x[k]).abs() <= 1e-9 * x[k].abs().max(1.0));
        }
    }

    #[test]
    fn windows_stay_within_a_day(
        start in 0i64..100_000_000,
        rows in proptest::collection::vec(reading_strategy(), 1..120),
        window_len in 1usize..8,
        stride in 1usize..4,
    ) {
        let readings = build(start, &rows);
        let days = group_by_day(&readings);
        let ds = make_windows(&days, &NormStats::identity(), window_len, stride);
        let expected: usize = days.iter().map(|d| window_count(d.readings.len(), window_len, stride)).sum();
        prop_assert_eq!(ds.len(), expected);
        // Recover each window's timestamps from its end and check the day.
        for (i, &end) in ds.timestamps.iter().enumerate() {
            let pos = readings.iter().position(|r| r.timestamp == end).unwrap();
            prop_assert!(pos + 1 >= window_len);
            let first = readings[pos + 1 - window_len].timestamp;
            prop_assert_eq!(first.div_euclid(SECONDS_PER_DAY), end.div_euclid(SECONDS_PER_DAY));
            prop_assert_eq!(ds.labels[i], readings[pos].people);
        }
    }

    #[test]
    fn window_count_matches_enumeration(rows in 0usize..400, window_len in 1usize..50, stride in 1usize..20) {
        let brute = (0..rows).step_by(stride).filter(|s| s + window_len <= rows).count();
        prop_assert_eq!(window_count(rows, window_len, stride), brute);
    }
}

#[test]
fn synth_is_deterministic_and_parses() {
    let schedule = gen_schedule(4, 3);
    let a = gen_readings(&schedule, &RoomParams::default(), 3);
    let b = gen_readings(&schedule, &RoomParams::default(), 3);
    assert_eq!(write_sensor_csv(&a), write_sensor_csv(&b));
    assert_eq!(parse_sensor_csv(&write_sensor_csv(&a)).unwrap(), a);
    assert!(a.iter().all(|r| r.validate().is_ok()));
    assert_eq!(group_by_day(&a).len(), 4);
}

#[test]
fn noiseless_co2_never_below_ambient() {
    let params = RoomParams::noiseless();
    for seed in 0..5 {
        let rows = gen_readings(&gen_schedule(7, seed), &params, seed);
        assert!(rows.iter().all(|r| r.co2 >= params.ambient_co2 - 1e-9));
    }
}

#[test]
fn normalized_training_features_are_standardized() {
    let rows = gen_readings(&gen_schedule(7, 2), &RoomParams::default(), 2);
    let days = group_by_day(&rows);
    let stats = compute_norm_stats(&days).unwrap();
    let ds = make_windows(&days, &stats, 1, 1);
    for k in 0..5 {
        let col: Vec<f64> = ds.windows.chunks(5).map(|w| w[k]).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
        assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-9, "feature {k}: {mean} {var}");
    }
}
