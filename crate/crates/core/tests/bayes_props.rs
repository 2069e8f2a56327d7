use fbt_core::bayes::{shot_noise_variance, Estimator, EstimatorConfig, GaussianState};
use fbt_core::bootstrap::{blind_cold_boot, BlindColdConfig};
use fbt_core::gateset::{ideal_two_qubit_gateset, GateSequence, NoisyGateSet, TwoQubitGate};
use fbt_core::linearize::{linearize, with_residual, ResidualRegistry};
use fbt_core::records::ObservationRecord;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_sequence(gs: &NoisyGateSet, len: usize, rng: &mut ChaCha8Rng) -> GateSequence {
    let labels = gs.labels();
    GateSequence::new((0..len).map(|_| labels[rng.random_range(0..labels.len())].clone()).collect())
}

fn prior(gs: &NoisyGateSet) -> GaussianState {
    blind_cold_boot(gs, &BlindColdConfig::default()).unwrap()
}

#[test]
fn one_dimensional_conjugate_update() {
    // N(0, 1) prior, unit-variance observation of 1 ⇒ N(0.5, 0.5)
    let gs = ideal_two_qubit_gateset(TwoQubitGate::Cz);
    let reg = ResidualRegistry::for_gateset(&gs);
    let n = reg.len();
    let mut factor = DMatrix::zeros(n, 1);
    factor[(20, 0)] = 1.0;
    let mut state = GaussianState::from_factor(reg.clone(), DVector::zeros(n), factor).unwrap();
    let mut lin = linearize(&gs, &reg, &"x1".parse().unwrap(), None).unwrap();
    lin.m_bar = 0.0;
    lin.a_row = DVector::zeros(n);
    lin.a_row[20] = 1.0;
    state.condition(&lin, &DVector::zeros(n), 1.0, 1.0).unwrap();
    assert!((state.mean()[20] - 0.5).abs() < 1e-15);
    assert!((state.covariance()[(20, 20)] - 0.5).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn sequential_updates_equal_joint_gls(seed in any::<u64>()) {
        let gs = ideal_two_qubit_gateset(TwoQubitGate::Cz);
        let reg = ResidualRegistry::for_gateset(&gs);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state0 = prior(&gs);
        let x0 = state0.mean().clone();
        let lin_gs = with_residual(&gs, &reg, &x0).unwrap();
        let mut rows = Vec::new();
        let mut y = Vec::new();
        let mut r = Vec::new();
        let mut state = state0.clone();
        for _ in 0..10 {
            let len = rng.random_range(1..12);
            let seq = random_sequence(&gs, len, &mut rng);
            let lin = linearize(&lin_gs, &reg, &seq, None).unwrap();
            let obs = rng.random::<f64>();
            let var = 1e-3 + 1e-2 * rng.random::<f64>();
            state.condition(&lin, &x0, obs, var).unwrap();
            y.push(obs - lin.m_bar);
            rows.push(lin.a_row.transpose());
            r.push(var);
        }
        let a = DMatrix::from_rows(&rows);
        let gamma = state0.covariance();
        let s = &a * &gamma * a.transpose() + DMatrix::from_diagonal(&DVector::from_vec(r));
        let k = &gamma * a.transpose() * s.try_inverse().unwrap();
        let innov = DVector::from_vec(y) - &a * (state0.mean() - &x0);
        let mean = state0.mean() + &k * innov;
        let cov = &gamma - &k * &a * &gamma;
        prop_assert!((state.mean() - mean).amax() < 1e-8);
        prop_assert!((state.covariance() - cov).amax() < 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn variance_along_measurement_never_grows(seed in any::<u64>()) {
        let gs = ideal_two_qubit_gateset(TwoQubitGate::Cz);
        let reg = ResidualRegistry::for_gateset(&gs);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = prior(&gs);
        let x0 = state.mean().clone();
        for _ in 0..20 {
            let len = rng.random_range(1..20);
            let seq = random_sequence(&gs, len, &mut rng);
            let lin = linearize(&gs, &reg, &seq, None).unwrap();
            let before = state.variance_along(&lin.a_row);
            let m = state.predict(&lin, &x0);
            let c = state.condition(&lin, &x0, rng.random::<f64>(), shot_noise_variance(m, 100)).unwrap();
            let after = state.variance_along(&lin.a_row);
            prop_assert!(after <= before * (1.0 + 1e-12) + 1e-18);
            prop_assert!((after - c.posterior_variance).abs() <= 1e-9 * before.max(1e-12));
        }
    }

    #[test]
    fn estimator_update_count_tracks_records(seed in any::<u64>(), n in 0usize..30) {
        let gs = ideal_two_qubit_gateset(TwoQubitGate::Cz);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = EstimatorConfig { approx_error: false, relinearize_every: 7, ..Default::default() };
        let mut est = Estimator::new(&gs, prior(&gs), cfg).unwrap();
        let recs: Vec<ObservationRecord> = (0..n)
            .map(|_| {
                let len = rng.random_range(1..10);
                ObservationRecord::from_counts(random_sequence(&gs, len, &mut rng), rng.random_range(0..=50), 50)
            })
            .collect();
        let summaries = est.update_all(&recs).unwrap();
        prop_assert_eq!(est.state().update_count, n as u64);
        let idx: Vec<u64> = summaries.iter().map(|s| s.index).collect();
        prop_assert_eq!(idx, (1..=n as u64).collect::<Vec<_>>());
    }
}
