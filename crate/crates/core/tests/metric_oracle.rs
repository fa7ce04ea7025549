use occupancy_core::encoding::clamp_count;
use occupancy_core::eval::{confusion, micro_f1, MetricsReport};
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

#[test]
fn per_class_metrics_match_brute_force() {
    let mut rng = Pcg64::seed_from_u64(21);
    for _ in 0..1000 {
        let n = rng.gen_range(1..200);
        let truths: Vec<u32> = (0..n).map(|_| rng.gen_range(0..16)).collect();
        let preds: Vec<u32> = truths.iter().map(|&t| if rng.gen_bool(0.6) { t } else { rng.gen_range(0..16) }).collect();
        let p: Vec<_> = preds.iter().map(|&k| clamp_count(k)).collect();
        let t: Vec<_> = truths.iter().map(|&k| clamp_count(k)).collect();
        let report = MetricsReport::from_counts(&confusion(&p, &t).unwrap());
        for k in 0..16u32 {
            let tp = preds.iter().zip(&truths).filter(|&(&a, &b)| a == k && b == k).count() as f64;
            let predicted = preds.iter().filter(|&&a| a == k).count() as f64;
            let actual = truths.iter().filter(|&&b| b == k).count() as f64;
            let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
            let recall = if actual > 0.0 { tp / actual } else { 0.0 };
            let m = &report.per_class[k as usize];
            assert_eq!((m.precision, m.recall), (precision, recall));
        }
        let accuracy = preds.iter().zip(&truths).filter(|(a, b)| a == b).count() as f64 / n as f64;
        assert!((micro_f1(&p, &t).unwrap() - accuracy).abs() < 1e-15);
    }
}
