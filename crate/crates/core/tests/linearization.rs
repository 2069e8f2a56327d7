use fbt_core::gateset::{ideal_two_qubit_gateset, GateLabel, GateSequence, NoisyGateSet, TwoQubitGate};
use fbt_core::linearize::{linearize, with_residual, ResidualRegistry};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random_sequence(gs: &NoisyGateSet, len: usize, rng: &mut ChaCha8Rng) -> GateSequence {
    let labels = gs.labels();
    GateSequence::new((0..len).map(|_| labels[rng.random_range(0..labels.len())].clone()).collect())
}

/// Residual with TP-consistent first rows (zero), scaled to Frobenius norm
/// `norm` per block.
fn random_residual(reg: &ResidualRegistry, norm: f64, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let n = reg.superop_dim();
    let mut x = DVector::zeros(reg.len());
    for e in reg.entries() {
        let mut block = DVector::<f64>::from_fn(e.len, |k, _| {
            if k % n == 0 {
                0.0
            } else {
                rng.sample(StandardNormal)
            }
        });
        block *= norm / block.norm();
        x.rows_mut(e.offset, e.len).copy_from(&block);
    }
    x
}

#[test]
fn linearization_error_is_quadratic() {
    let gs = ideal_two_qubit_gateset(TwoQubitGate::Cz);
    let reg = ResidualRegistry::for_gateset(&gs);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut errors = [0.0f64; 2];
    for k in 0..200 {
        let len = [8, 16, 32][k % 3];
        let seq = random_sequence(&gs, len, &mut rng);
        let lin = linearize(&gs, &reg, &seq, None).unwrap();
        let dir = random_residual(&reg, 1.0, &mut rng);
        for (slot, norm) in [1e-3, 1e-2].into_iter().enumerate() {
            let x = &dir * norm;
            let exact = with_residual(&gs, &reg, &x).unwrap().outcome_raw(&seq, None).unwrap();
            errors[slot] += (exact - lin.predict(&x)).abs();
        }
    }
    let ratio = errors[1] / errors[0];
    assert!((50.0..=200.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn repeated_gate_block_is_sum_of_positions() {
    let gs = ideal_two_qubit_gateset(TwoQubitGate::Cz);
    let k = 5;
    // k distinct copies of x1 expose the per-position blocks
    let mut doc = gs.to_document();
    let x1 = doc.gates.iter().find(|g| g.label.as_str() == "x1").unwrap().clone();
    for p in 0..k {
        let mut g = x1.clone();
        g.label = GateLabel::new(format!("x1_{p}"));
        doc.gates.push(g);
    }
    let split = NoisyGateSet::from_document(&doc).unwrap();
    let split_reg = ResidualRegistry::for_gateset(&split);
    let reg = ResidualRegistry::for_gateset(&gs);
    let seq: GateSequence = "cz x2".parse::<GateSequence>().unwrap().then(&GateSequence::new(vec!["x1".into(); k]));
    let split_seq: GateSequence = "cz x2"
        .parse::<GateSequence>()
        .unwrap()
        .then(&GateSequence::new((0..k).map(|p| GateLabel::new(format!("x1_{p}"))).collect()));
    let whole = linearize(&gs, &reg, &seq, None).unwrap();
    let parts = linearize(&split, &split_reg, &split_seq, None).unwrap();
    let block = reg.entry(&fbt_core::linearize::Owner::Gate("x1".into())).unwrap();
    let mut sum = DVector::<f64>::zeros(block.len);
    for p in 0..k {
        let e = split_reg.entry(&fbt_core::linearize::Owner::Gate(GateLabel::new(format!("x1_{p}")))).unwrap();
        sum += parts.a_row.rows(e.offset, e.len);
    }
    let diff = (whole.a_row.rows(block.offset, block.len) - sum).amax();
    assert!(diff < 1e-12, "{diff}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn linear_model_is_linear(seed in any::<u64>(), len in 1usize..30) {
        let gs = ideal_two_qubit_gateset(TwoQubitGate::Cz);
        let reg = ResidualRegistry::for_gateset(&gs);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seq = random_sequence(&gs, len, &mut rng);
        let lin = linearize(&gs, &reg, &seq, None).unwrap();
        let x = random_residual(&reg, 1e-2, &mut rng);
        let once = lin.predict(&x) - lin.m_bar;
        let twice = lin.predict(&(&x * 2.0)) - lin.m_bar;
        prop_assert!((twice - 2.0 * once).abs() <= 1e-15 * (1.0 + once.abs()) * 4.0);
    }

    #[test]
    fn directional_derivative_matches(seed in any::<u64>(), len in 1usize..20) {
        let gs = ideal_two_qubit_gateset(TwoQubitGate::Cz);
        let reg = ResidualRegistry::for_gateset(&gs);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seq = random_sequence(&gs, len, &mut rng);
        let lin = linearize(&gs, &reg, &seq, None).unwrap();
        let x = random_residual(&reg, 1.0, &mut rng);
        let x = &x * (1e-4 / x.norm());
        let exact = with_residual(&gs, &reg, &x).unwrap().outcome_raw(&seq, None).unwrap();
        prop_assert!((exact - lin.predict(&x)).abs() <= 1e-6);
    }
}
