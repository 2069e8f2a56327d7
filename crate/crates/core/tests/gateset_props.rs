use fbt_core::gateset::{ideal_two_qubit_gateset, GateSequence, NoisyGateSet, TwoQubitGate};
use fbt_core::postproc::{apply_gauge, GaugeTransform};
use fbt_core::testkit::random_cptp_near_identity;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_sequence(gs: &NoisyGateSet, len: usize, rng: &mut ChaCha8Rng) -> GateSequence {
    let labels = gs.labels();
    GateSequence::new((0..len).map(|_| labels[rng.random_range(0..labels.len())].clone()).collect())
}

fn noisy(seed: u64) -> NoisyGateSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gs = ideal_two_qubit_gateset(TwoQubitGate::Cz);
    let noise = (0..gs.gates().len()).map(|_| random_cptp_near_identity(2, 0.05, &mut rng)).collect();
    gs.with_noise(
        noise,
        random_cptp_near_identity(2, 0.05, &mut rng),
        random_cptp_near_identity(2, 0.05, &mut rng),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ideal_outcomes_are_probabilities(seed in any::<u64>(), len in 0usize..40, dcz in any::<bool>()) {
        let gs = ideal_two_qubit_gateset(if dcz { TwoQubitGate::Dcz } else { TwoQubitGate::Cz });
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seq = random_sequence(&gs, len, &mut rng);
        let p = gs.outcome_raw(&seq, None).unwrap();
        prop_assert!((-1e-10..=1.0 + 1e-10).contains(&p), "{p}");
    }

    #[test]
    fn outcomes_are_gauge_invariant(seed in any::<u64>()) {
        let gs = noisy(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
        let mut s = DMatrix::<f64>::identity(16, 16);
        for r in 1..16 {
            for c in 0..16 {
                s[(r, c)] += 0.1 * (rng.random::<f64>() - 0.5);
            }
        }
        let t = GaugeTransform::new(s).unwrap();
        let moved = apply_gauge(&gs, &t).unwrap();
        for _ in 0..50 {
            let len = rng.random_range(1..20);
            let seq = random_sequence(&gs, len, &mut rng);
            let a = gs.outcome_raw(&seq, None).unwrap();
            let b = moved.outcome_raw(&seq, None).unwrap();
            prop_assert!((a - b).abs() < 1e-10, "{a} {b}");
        }
    }
}
