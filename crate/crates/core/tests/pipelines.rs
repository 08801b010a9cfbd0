use cglmp_core::experiment::{figure4_sweep, figure5_pipeline, CountModel, ExperimentConfig};
use cglmp_core::qstate::{state_fidelity, werner_from_fidelity, NoiseModel};

#[test]
fn tomography_pipeline_recovers_noisy_scan() {
    let cfg = ExperimentConfig::new(NoiseModel::from_fidelity(0.982).unwrap(), 200_000)
        .with_seed(3)
        .with_resamples(8);
    let scan = figure5_pipeline(&cfg, 4).unwrap();
    let (rec, reports) = (scan.state, scan.reports);
    let truth = werner_from_fidelity(0.982).unwrap();
    assert!(state_fidelity(rec.density(), truth.density()).unwrap() > 0.995);
    assert_eq!(reports.len(), 4);
    for r in &reports {
        assert!(r.violation, "d={} I={}", r.d, r.value);
        assert!(r.stderr.unwrap() > 0.0);
    }
    assert!((reports[0].value - 2.76).abs() < 0.03);
}

#[test]
fn sweep_with_jitter_still_violates() {
    let cfg = ExperimentConfig::new(NoiseModel::from_fidelity(0.982).unwrap(), 100_000)
        .with_resamples(10)
        .with_jitter(0.005);
    let reports = figure4_sweep(&cfg, 3).unwrap();
    assert!(reports.iter().all(|r| r.value > 2.5));
    let joint = figure4_sweep(&cfg.with_count_model(CountModel::Joint), 3).unwrap();
    assert!(joint.iter().all(|r| r.value > 2.5));
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = ExperimentConfig::new(NoiseModel::Ideal, 0);
    assert!(figure4_sweep(&cfg, 1).is_err());
    cfg.events = 10;
    cfg.angle_jitter = -1.0;
    assert!(figure4_sweep(&cfg, 1).is_err());
    cfg.angle_jitter = 0.0;
    // fewer events than wave-plate settings at d=8
    assert!(figure4_sweep(&cfg, 3).is_err());
}
