use fbt_core::bayes::GaussianState;
use fbt_core::bootstrap::{
    bootstrap, BlindColdConfig, BootstrapConfig, FidelityColdConfig, FidelityStat, PartialWarmConfig,
};
use fbt_core::gateset::{ideal_two_qubit_gateset, TwoQubitGate};
use fbt_core::linearize::{channels_from_residual, ResidualRegistry};
use proptest::prelude::*;

fn min_eig(s: &GaussianState) -> f64 {
    s.covariance().symmetric_eigen().eigenvalues.min()
}

fn fidelity_cold(seed: u64) -> BootstrapConfig {
    let mut cfg = FidelityColdConfig {
        n_samples: 60,
        moment_iterations: 1,
        seed,
        ..Default::default()
    };
    cfg.fidelity.insert("cz".into(), FidelityStat { mean: 0.98, variance: 2.5e-5 });
    BootstrapConfig::FidelityCold(cfg)
}

fn partial_warm(seed: u64) -> BootstrapConfig {
    BootstrapConfig::PartialWarm(PartialWarmConfig {
        n_samples: 60,
        seed,
        ..Default::default()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(3))]

    #[test]
    fn sampling_strategies_are_seed_deterministic(seed in any::<u64>()) {
        let gs = ideal_two_qubit_gateset(TwoQubitGate::Cz);
        let blind = bootstrap(&gs, &BootstrapConfig::BlindCold(BlindColdConfig::default()), None).unwrap();
        for cfg in [fidelity_cold(seed), partial_warm(seed)] {
            let a = bootstrap(&gs, &cfg, Some(&blind)).unwrap();
            let b = bootstrap(&gs, &cfg, Some(&blind)).unwrap();
            prop_assert_eq!(&a, &b);
        }
    }

    #[test]
    fn strategies_give_psd_covariance_and_cptp_means(seed in any::<u64>()) {
        let gs = ideal_two_qubit_gateset(TwoQubitGate::Cz);
        let reg = ResidualRegistry::for_gateset(&gs);
        let blind_cfg = BlindColdConfig { depolarizing: 0.01, spam_depolarizing: 0.02, ..Default::default() };
        let blind = bootstrap(&gs, &BootstrapConfig::BlindCold(blind_cfg), None).unwrap();
        let warm = bootstrap(&gs, &BootstrapConfig::FullWarm(Default::default()), Some(&blind)).unwrap();
        prop_assert_eq!(warm.mean(), blind.mean());
        for cfg in [fidelity_cold(seed), partial_warm(seed)] {
            let s = bootstrap(&gs, &cfg, Some(&blind)).unwrap();
            let scale = s.covariance().amax().max(1e-300);
            prop_assert!(min_eig(&s) >= -1e-10 * scale, "{}", cfg.name());
            prop_assert_eq!(channels_from_residual(&reg, s.mean()).unwrap().len(), 7);
        }
        prop_assert!(min_eig(&blind) >= -1e-12);
    }
}
