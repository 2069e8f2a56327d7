use fbt_core::bayes::EstimatorConfig;
use fbt_core::bootstrap::{BlindColdConfig, BootstrapConfig, PriorSpec};
use fbt_core::experiments::{run_drift_tracking, run_length_sweep, AnalysisConfig, CoefficientKey, DataSource, DriftConfig};
use fbt_core::gateset::{ideal_two_qubit_gateset, TwoQubitGate};
use fbt_core::simulator::{ExperimentPlan, NoiseInjection};

fn analysis() -> AnalysisConfig {
    AnalysisConfig {
        bootstrap: BootstrapConfig::BlindCold(BlindColdConfig {
            prior: PriorSpec {
                frozen: vec!["z1".into(), "z2".into()],
                ..PriorSpec::default()
            },
            ..BlindColdConfig::default()
        }),
        estimator: EstimatorConfig {
            approx_error: false,
            ..EstimatorConfig::default()
        },
        ci_draws: 20,
        min_records: 10,
        ..AnalysisConfig::default()
    }
}

#[test]
fn length_order_does_not_change_results() {
    let gs = ideal_two_qubit_gateset(TwoQubitGate::Cz);
    let source = DataSource::Simulated {
        plan: ExperimentPlan {
            n_sequences: 40,
            seed: 9,
            ..ExperimentPlan::default()
        },
        injection: NoiseInjection::default().with_static("x1", "H_IX", 0.01),
    };
    let config = analysis();
    let a = run_length_sweep(&gs, &source, &[2, 4, 6], &config).unwrap();
    let b = run_length_sweep(&gs, &source, &[6, 2, 4], &config).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn stationary_tracking_contracts_after_burn_in() {
    let gs = ideal_two_qubit_gateset(TwoQubitGate::Cz);
    let source = DataSource::Simulated {
        plan: ExperimentPlan {
            n_batches: 8,
            batch_size: 20,
            lengths: vec![4, 8],
            seed: 4,
            ..ExperimentPlan::default()
        },
        injection: NoiseInjection::default().with_static("x1", "S_ZI", 2e-3),
    };
    let config = DriftConfig {
        analysis: AnalysisConfig {
            ci_draws: 5,
            ..analysis()
        },
        tracked: vec![CoefficientKey::new("x1", "eps_j")],
        ..DriftConfig::default()
    };
    let r = run_drift_tracking(&gs, &source, &config, None).unwrap();
    let traces: Vec<f64> = r.batches.iter().map(|b| b.covariance_trace).collect();
    assert_eq!(traces.len(), 8);
    assert!(traces[3..].windows(2).all(|w| w[1] <= w[0]), "{traces:?}");
    let values: Vec<f64> = r.series(&config.tracked[0]).iter().map(|v| v.value).collect();
    assert!(values.iter().all(|v| v.is_finite()));
}
