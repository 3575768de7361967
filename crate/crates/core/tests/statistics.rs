use nls_gibbs::gibbs::{
    read_jsonl, renormalized_mass, sample_ensemble, sample_gaussian_field, EnsembleConfig, Variant,
};
use nls_gibbs::hermite::QuadratureGrid;
use nls_gibbs::rng::ComplexGaussianStream;
use nls_gibbs::stats;

fn grid() -> QuadratureGrid {
    QuadratureGrid::build(4 * 17, 8).unwrap()
}

#[test]
fn doubling_samples_shrinks_se_by_sqrt_two() {
    let draw = |m: u64| -> Vec<f64> {
        (0..m)
            .map(|i| renormalized_mass(&sample_gaussian_field(16, &mut ComplexGaussianStream::new(3, i)), 16))
            .collect()
    };
    let (_, se1) = stats::mean_with_se(&draw(4000), 256, 11);
    let (_, se2) = stats::mean_with_se(&draw(8000), 256, 11);
    let ratio = se1 / se2;
    assert!((ratio - 2f64.sqrt()).abs() < 0.2, "ratio {ratio}");
}

#[test]
fn defocusing_weights_are_at_most_one() {
    let ens = sample_ensemble(&EnsembleConfig::new(16, 500, Variant::Defocusing, 3, 9), &grid()).unwrap();
    assert!(ens.log_weights.iter().all(|lw| *lw <= 0.0));
    assert!(ens.ess() > 50.0 && ens.ess() <= 500.0);
    assert!(ens.mean_weight() > 0.0 && ens.mean_weight() <= 1.0);
}

#[test]
fn focusing_cutoff_kills_large_mass() {
    let mut cfg = EnsembleConfig::new(16, 2000, Variant::Focusing, 3, 4);
    cfg.zeta_r = 0.5;
    cfg.ess_floor = 0.0;
    let ens = sample_ensemble(&cfg, &grid()).unwrap();
    assert!(ens.killed_fraction() > 0.0 && ens.killed_fraction() < 1.0);
    for (s, lw) in ens.samples.iter().zip(&ens.log_weights) {
        if renormalized_mass(s, 16).abs() >= 1.0 {
            assert_eq!(*lw, f64::NEG_INFINITY);
        }
    }
}

#[test]
fn ensemble_is_independent_of_worker_count() {
    let cfg = EnsembleConfig::new(16, 300, Variant::Defocusing, 3, 21);
    let g = grid();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let a = one.install(|| sample_ensemble(&cfg, &g).unwrap());
    let b = three.install(|| sample_ensemble(&cfg, &g).unwrap());
    assert_eq!(a.log_weights, b.log_weights);
    assert_eq!(a.samples, b.samples);
}

#[test]
fn jsonl_round_trip() {
    let mut cfg = EnsembleConfig::new(8, 20, Variant::Defocusing, 3, 2);
    cfg.ess_floor = 0.0;
    let ens = sample_ensemble(&cfg, &QuadratureGrid::build(40, 8).unwrap()).unwrap();
    let mut buf = Vec::new();
    ens.write_jsonl(&mut buf).unwrap();
    let records = read_jsonl(buf.as_slice()).unwrap();
    assert_eq!(records.len(), 20);
    for (i, r) in records.iter().enumerate() {
        assert_eq!(r.stream_index, ens.stream_indices[i]);
        assert_eq!(r.state().unwrap(), ens.samples[i]);
        assert_eq!(r.log_weight(), ens.log_weights[i]);
    }
}
