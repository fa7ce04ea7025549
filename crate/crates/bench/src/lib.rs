//! Benchmark fixtures shared by the criterion targets.

use occupancy_core::dataio::{make_windows, NormStats, WindowedDataset};
use occupancy_core::synth::{gen_readings, gen_schedule, RoomParams};
use occupancy_core::{compute_norm_stats, dataio::group_by_day};

/// One synthetic day, normalized and windowed.
pub fn synthetic_windows(window_len: usize) -> (NormStats, WindowedDataset) {
    let rows = gen_readings(&gen_schedule(1, 7), &RoomParams::default(), 7);
    let days = group_by_day(&rows);
    let stats = compute_norm_stats(&days).expect("non-empty day");
    let windows = make_windows(&days, &stats, window_len, 1);
    (stats, windows)
}
