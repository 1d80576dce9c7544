use ddmv_core::drift::DriftSpec;
use ddmv_core::gauss_sum::Summation;
use ddmv_core::initial::InitialDensity;
use ddmv_core::scheme::{
    simulate_unchecked, step_with_noise, DensityEstimate, ParticleCloud, RecordCadence, SchemeConfig,
};

fn moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

#[test]
fn first_step_has_no_drift() {
    let mut cfg = SchemeConfig::new(4, 1.0, 50_000, 1, 3).unwrap();
    cfg.record = RecordCadence::All;
    let rec = simulate_unchecked(&cfg, &DriftSpec::constant(vec![2.0]).unwrap(), &InitialDensity::standard_gaussian(1))
        .unwrap();
    let (m1, v1) = moments(rec.at_step(1).unwrap().cloud.positions());
    // N(0, 1 + 2ε) after the first step
    assert!(m1.abs() < 4.0 * (1.5f64 / 50_000.0).sqrt(), "{m1}");
    assert!((v1 - 1.5).abs() < 0.05, "{v1}");
    let (m2, _) = moments(rec.at_step(2).unwrap().cloud.positions());
    assert!((m2 - 0.5).abs() < 4.0 * (2.0f64 / 50_000.0).sqrt(), "{m2}");
}

#[test]
fn constant_drift_mean_is_shifted_by_the_cutoff() {
    let n = 16;
    let cfg = SchemeConfig::new(n, 1.0, 50_000, 1, 11).unwrap();
    let c = 0.7;
    let rec = simulate_unchecked(&cfg, &DriftSpec::constant(vec![c]).unwrap(), &InitialDensity::standard_gaussian(1))
        .unwrap();
    let (m, v) = moments(rec.last().cloud.positions());
    let target = c * (1.0 - 1.0 / n as f64);
    assert!((m - target).abs() < 3.0 * (3.0f64 / 50_000.0).sqrt(), "{m} vs {target}");
    assert!((v - 3.0).abs() < 0.08, "{v}");
}

#[test]
fn zero_drift_variance() {
    let cfg = SchemeConfig::new(8, 1.0, 20_000, 2, 5).unwrap();
    let rec = simulate_unchecked(&cfg, &DriftSpec::zero(), &InitialDensity::standard_gaussian(2)).unwrap();
    let pos = rec.last().cloud.positions();
    for axis in 0..2 {
        let xs: Vec<f64> = pos.iter().skip(axis).step_by(2).copied().collect();
        let (m, v) = moments(&xs);
        assert!(m.abs() < 0.05, "{m}");
        assert!((v - 3.0).abs() < 0.12, "{v}");
    }
}

#[test]
fn step_commutes_with_relabelling() {
    let cfg = SchemeConfig::new(8, 1.0, 400, 1, 2).unwrap();
    let ic = InitialDensity::gaussian(vec![0.0], 0.5).unwrap();
    let drift = DriftSpec::mixed(0.5, vec![1.0], 1.0).unwrap();
    let cloud = ic.sample(400, 9).unwrap();
    let rec = simulate_unchecked(&cfg, &drift, &ic).unwrap();
    let density = rec.at_step(1).unwrap().density.clone();
    let noise: Vec<f64> = (0..400).map(|i| ((i * 37 % 101) as f64 / 50.0) - 1.0).collect();
    let perm: Vec<usize> = (0..400).rev().collect();
    let permuted = ParticleCloud::new(1, perm.iter().map(|&i| cloud.positions()[i]).collect()).unwrap();
    let pnoise: Vec<f64> = perm.iter().map(|&i| noise[i]).collect();
    let a = step_with_noise(&cloud, 1, &density, &drift, &cfg, &noise).unwrap();
    let b = step_with_noise(&permuted, 1, &density, &drift, &cfg, &pnoise).unwrap();
    for (j, &i) in perm.iter().enumerate() {
        let (x, y) = (a.cloud.positions()[i], b.cloud.positions()[j]);
        assert!((x - y).abs() < 1e-12, "{x} vs {y}");
    }
    // the next density is the same mixture up to summation order
    let grid: Vec<f64> = (-20..=20).map(|i| i as f64 * 0.2).collect();
    let da = a.density.eval_many(&grid, Summation::Exact, 8.0).unwrap().values;
    let db = b.density.eval_many(&grid, Summation::Exact, 8.0).unwrap().values;
    for (x, y) in da.iter().zip(&db) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn result_does_not_depend_on_worker_count() {
    let cfg = SchemeConfig::new(16, 1.0, 20_000, 1, 42).unwrap();
    let ic = InitialDensity::gaussian(vec![0.0], 0.5).unwrap();
    let drift = DriftSpec::burgers_clamp(vec![1.0], 1.0).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| simulate_unchecked(&cfg, &drift, &ic).unwrap())
    };
    let (a, b) = (run(1), run(3));
    let bits = |r: &ddmv_core::scheme::SimulationRecord| -> Vec<u64> {
        r.snapshots.iter().flat_map(|s| s.cloud.positions().iter().map(|x| x.to_bits())).collect()
    };
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn truncated_summation_tracks_exact() {
    let mut cfg = SchemeConfig::new(8, 1.0, 3_000, 1, 8).unwrap();
    let ic = InitialDensity::gaussian(vec![0.0], 0.5).unwrap();
    let drift = DriftSpec::burgers_clamp(vec![1.0], 1.0).unwrap();
    let fast = simulate_unchecked(&cfg, &drift, &ic).unwrap();
    cfg.summation = Summation::Exact;
    let exact = simulate_unchecked(&cfg, &drift, &ic).unwrap();
    let worst = fast
        .last()
        .cloud
        .positions()
        .iter()
        .zip(exact.last().cloud.positions())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-9, "{worst}");
    assert!(fast.snapshots.iter().all(|s| s.density_error_bound < 1e-9));
}

#[test]
fn exact_initial_density_at_time_zero() {
    let cfg = SchemeConfig::new(8, 1.0, 100, 1, 1).unwrap();
    let ic = InitialDensity::gaussian(vec![0.3], 0.5).unwrap();
    let rec = simulate_unchecked(&cfg, &DriftSpec::zero(), &ic).unwrap();
    let d = &rec.at_step(0).unwrap().density;
    assert!(matches!(d, DensityEstimate::ExactInitial(_)));
    assert!((d.eval(&[0.3]) - ic.density(&[0.3])).abs() < 1e-15);
}
