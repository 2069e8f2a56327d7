use fbt_core::gateset::{ideal_two_qubit_gateset, TwoQubitGate};
use fbt_core::parity::default_projections;
use fbt_core::simulator::{simulate, simulate_projected, DriftFunction, ExperimentPlan, NoiseInjection, PlanKind};
use proptest::prelude::*;

fn plan(seed: u64, shots: u32, n: usize) -> ExperimentPlan {
    ExperimentPlan {
        kind: PlanKind::Generic,
        lengths: vec![4, 12],
        n_sequences: n,
        shots,
        seed,
        ..ExperimentPlan::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn simulation_is_deterministic(seed in any::<u64>()) {
        let gs = ideal_two_qubit_gateset(TwoQubitGate::Cz);
        let injection = NoiseInjection::default()
            .with_static("x1", "S_ZI", 2e-3)
            .with_drift("cz", "H_ZZ", DriftFunction::Sinusoidal { offset: 0.0, amplitude: 1e-2, period: 5.0, phase: 0.0 })
            .with_length_dependent("x2", "H_IZ", 1e-3);
        let p = plan(seed, 50, 12);
        prop_assert_eq!(simulate(&p, &injection, &gs).unwrap(), simulate(&p, &injection, &gs).unwrap());
        let projections = default_projections();
        prop_assert_eq!(
            simulate_projected(&p, &injection, &gs, &projections).unwrap(),
            simulate_projected(&p, &injection, &gs, &projections).unwrap()
        );
    }
}

#[test]
fn zero_injection_matches_ideal_outcomes() {
    let gs = ideal_two_qubit_gateset(TwoQubitGate::Cz);
    let shots = 10_000;
    let records = simulate(&plan(5, shots, 20), &NoiseInjection::default(), &gs).unwrap();
    assert_eq!(records.len(), 20);
    for r in &records {
        let p = gs.outcome(&r.sequence, None).unwrap();
        let sigma = (p * (1.0 - p) / shots as f64).sqrt();
        let dev = (r.freq - p).abs();
        assert!(dev <= 3.0 * sigma + 1e-12, "{}: freq {} vs {p}", r.sequence, r.freq);
    }
}
