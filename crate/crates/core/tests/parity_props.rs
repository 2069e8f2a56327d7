use fbt_core::gateset::{ideal_two_qubit_gateset, GateSequence, NoisyGateSet, TwoQubitGate};
use fbt_core::parity::{default_projections, unpack_to_native, ProjectedRecord, ProjectionOutcome, UnpackMode};
use fbt_core::testkit::random_cptp_near_identity;
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

fn projected(seq: GateSequence, odd: f64) -> ProjectedRecord {
    ProjectedRecord {
        sequence: seq,
        outcomes: vec![
            ProjectionOutcome { projection: "odd".into(), freq: odd, shots: 100 },
            ProjectionOutcome { projection: "even".into(), freq: 1.0 - odd, shots: 100 },
        ],
        t: 0.0,
        batch: None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn odd_and_even_outcomes_sum_to_one(seed in any::<u64>(), len in 0usize..30) {
        let gs = noisy(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seq = random_sequence(&gs, len, &mut rng);
        let odd = gs.outcome_raw(&seq, None).unwrap();
        let even = gs.outcome_raw(&seq, Some("even")).unwrap();
        prop_assert!((odd + even - 1.0).abs() < 1e-12);
    }

    #[test]
    fn folded_and_appended_prefixes_agree_on_ideal_gates(seed in any::<u64>(), len in 0usize..30) {
        let gs = ideal_two_qubit_gateset(TwoQubitGate::Cz);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rec = projected(random_sequence(&gs, len, &mut rng), 0.3);
        let projections = default_projections();
        let a = unpack_to_native(std::slice::from_ref(&rec), &projections, &UnpackMode::A("even".into())).unwrap();
        let b = unpack_to_native(std::slice::from_ref(&rec), &projections, &UnpackMode::B("even".into())).unwrap();
        let pa = gs.outcome_raw(&a[0].sequence, a[0].effect.as_deref()).unwrap();
        let pb = gs.outcome_raw(&b[0].sequence, b[0].effect.as_deref()).unwrap();
        prop_assert!((pa - pb).abs() < 1e-12);
        prop_assert_eq!(a[0].freq, b[0].freq);
    }
}

#[test]
fn mode_d_doubles_the_record_count() {
    let gs = ideal_two_qubit_gateset(TwoQubitGate::Cz);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let recs: Vec<ProjectedRecord> = (0..4220)
        .map(|k| projected(random_sequence(&gs, 1 + k % 16, &mut rng), 0.5))
        .collect();
    let out = unpack_to_native(&recs, &default_projections(), &UnpackMode::D).unwrap();
    assert_eq!(out.len(), 8440);
    assert!(out.iter().all(|r| r.effect.is_none()));
    let grouped = unpack_to_native(&recs, &default_projections(), &UnpackMode::C).unwrap();
    assert_eq!(grouped.len(), 8440);
    assert_eq!(grouped[8439].group, Some(4219));
}
