mod common;

use common::{model, perturbed, random_like};
use ewcl_core::continual::{ewc_penalty, lwf_penalty, si_penalty, FisherDiagonal, SIState, TaskSnapshot};
use ewcl_core::model::CausalLM;
use ewcl_core::numerics::{finite_diff_check, DenseArray, Graph, Objective, ParameterStore};
use ewcl_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn single(values: &[f64]) -> ParameterStore {
    let mut s = ParameterStore::new();
    s.insert("w", DenseArray::from_vec(values.to_vec())).unwrap();
    s
}

/// Tiny model with θ_A = its params, F = 1 on the first two tok_emb entries, 0 elsewhere.
fn hand_setup() -> (CausalLM, TaskSnapshot, FisherDiagonal) {
    let m = model(1, 4, 4, 0);
    let snap = TaskSnapshot::capture(&m);
    let mut f = m.params().zeros_like();
    f.get_mut("tok_emb").unwrap().data_mut()[..2].copy_from_slice(&[1.0, 1.0]);
    (m, snap, FisherDiagonal::new(f, 1).unwrap())
}

#[test]
fn ewc_hand_case_is_five() {
    let (m, snap, fisher) = hand_setup();
    let mut p = m.params().clone();
    let emb = p.get_mut("tok_emb").unwrap().data_mut();
    emb[0] += 1.0;
    emb[1] += 2.0;
    // moving zero-Fisher coordinates costs nothing
    emb[2] += 100.0;
    // (λ/2) Σ F Δ² = (2/2)(1·1 + 1·4)
    let v = ewc_penalty(&p, &snap, &fisher, 2.0).unwrap();
    assert!((v - 5.0).abs() < 1e-12, "{v}");
}

#[test]
fn ewc_vanishes_at_anchor_and_zero_strength() {
    let m = model(1, 8, 8, 1);
    let snap = TaskSnapshot::capture(&m);
    let fisher = FisherDiagonal::new(random_like(m.params(), 0.0, 3.0, 2), 1).unwrap();
    assert_eq!(ewc_penalty(m.params(), &snap, &fisher, 1e12).unwrap(), 0.0);
    let moved = perturbed(m.params(), 0.5, 3);
    assert_eq!(ewc_penalty(&moved, &snap, &fisher, 0.0).unwrap(), 0.0);
    assert!(ewc_penalty(&moved, &snap, &fisher, 1.0).unwrap() > 0.0);
}

#[test]
fn ewc_is_invariant_to_store_order() {
    let m = model(1, 8, 8, 1);
    let snap = TaskSnapshot::capture(&m);
    let fisher = FisherDiagonal::new(random_like(m.params(), 0.0, 3.0, 2), 1).unwrap();
    let moved = perturbed(m.params(), 0.5, 3);
    let mut reversed = ParameterStore::new();
    for (name, a) in moved.iter().collect::<Vec<_>>().into_iter().rev() {
        reversed.insert(name, a.clone()).unwrap();
    }
    let a = ewc_penalty(&moved, &snap, &fisher, 1.5).unwrap();
    let b = ewc_penalty(&reversed, &snap, &fisher, 1.5).unwrap();
    assert!((a - b).abs() <= 1e-12 * a);
}

struct EwcOnly<'a> {
    snap: &'a TaskSnapshot,
    fisher: &'a FisherDiagonal,
    lambda: f64,
}

impl Objective for EwcOnly<'_> {
    fn value(&mut self, params: &ParameterStore) -> Result<f64> {
        ewc_penalty(params, self.snap, self.fisher, self.lambda)
    }

    fn value_and_grad(&mut self, params: &ParameterStore) -> Result<(f64, ParameterStore)> {
        let mut g = Graph::new();
        let vars = g.bind(params);
        let p = ewcl_core::continual::ewc_penalty_graph(&mut g, &vars, params, self.snap, self.fisher, self.lambda)?;
        Ok((g.scalar(p), g.backward(p)?.param_grads(params)))
    }
}

#[test]
fn ewc_gradient_matches_finite_differences() {
    let m = model(1, 8, 8, 4);
    let snap = TaskSnapshot::capture(&m);
    let fisher = FisherDiagonal::new(random_like(m.params(), 0.1, 3.0, 5), 1).unwrap();
    let start = perturbed(m.params(), 0.5, 6);
    let mut obj = EwcOnly { snap: &snap, fisher: &fisher, lambda: 2.0 };
    // the penalty is quadratic, so a wide step has no truncation error and less cancellation
    let report = finite_diff_check(&mut obj, &start, 1e-2, 0).unwrap();
    assert!(report.max_rel_error < 1e-6, "{report:?}");
}

#[test]
fn si_hand_case() {
    let state = SIState::from_parts(single(&[0.0]), single(&[0.2]), 1e-3).unwrap();
    let s = state.consolidate(&single(&[0.1])).unwrap();
    let expect = 0.2 / (0.01 + 1e-3);
    let got = s.get("w").unwrap().data()[0];
    assert!((got - expect).abs() / expect < 1e-12, "{got}");
    assert!((got - 18.1818).abs() < 1e-4);
}

#[test]
fn si_accumulation_and_clamping() {
    let mut state = SIState::begin(&single(&[1.0, 1.0, 1.0]), 1e-3).unwrap();
    // a step down a positive gradient contributes positively
    state.accumulate(&single(&[-0.1, 0.0, 0.1]), &single(&[2.0, 5.0, 1.0])).unwrap();
    assert_eq!(state.numerator().get("w").unwrap().data(), &[0.2, 0.0, -0.1]);
    let end = single(&[0.9, 1.0, 1.1]);
    let raw = state.raw_importance(&end).unwrap();
    assert!(raw.get("w").unwrap().data()[2] < 0.0);
    let s = state.consolidate(&end).unwrap();
    assert_eq!(s.get("w").unwrap().data()[1], 0.0);
    assert_eq!(s.get("w").unwrap().data()[2], 0.0);
    assert!(s.values().all(|v| v >= 0.0));
}

#[test]
fn si_penalty_is_weighted_squared_distance() {
    let v = si_penalty(&single(&[1.0, 3.0]), &single(&[0.0, 1.0]), &single(&[2.0, 0.5]), 3.0).unwrap();
    assert_eq!(v, 3.0 * (2.0 * 1.0 + 0.5 * 4.0));
    assert!(SIState::begin(&single(&[0.0]), 0.0).is_err());
}

fn kl_oracle(student: &[f64], teacher: &[f64], t: f64) -> f64 {
    let soft = |z: &[f64]| {
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| ((v - m) / t).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect::<Vec<_>>()
    };
    let (p, q) = (soft(teacher), soft(student));
    p.iter().zip(&q).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * (a / b).ln()).sum()
}

#[test]
fn lwf_matches_independent_kl() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let rows = 3;
    let cols = 7;
    let s: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-3.0..3.0)).collect();
    let t: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-3.0..3.0)).collect();
    for temp in [1.0, 2.0] {
        let got = lwf_penalty(
            &DenseArray::new(vec![rows, cols], s.clone()).unwrap(),
            &DenseArray::new(vec![rows, cols], t.clone()).unwrap(),
            0.5,
            temp,
        )
        .unwrap();
        let expect: f64 =
            0.5 * (0..rows).map(|r| kl_oracle(&s[r * cols..][..cols], &t[r * cols..][..cols], temp)).sum::<f64>()
                / rows as f64;
        assert!((got - expect).abs() < 1e-12 * expect.max(1.0), "{got} vs {expect}");
    }
}

#[test]
fn lwf_is_zero_for_identical_and_nonnegative_otherwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let z = DenseArray::new(vec![2, 5], (0..10).map(|_| rng.random_range(-5.0..5.0)).collect()).unwrap();
    assert_eq!(lwf_penalty(&z, &z, 1.0, 1.0).unwrap(), 0.0);
    for _ in 0..1000 {
        let a = DenseArray::new(vec![2, 5], (0..10).map(|_| rng.random_range(-20.0..20.0)).collect()).unwrap();
        let b = DenseArray::new(vec![2, 5], (0..10).map(|_| rng.random_range(-20.0..20.0)).collect()).unwrap();
        assert!(lwf_penalty(&a, &b, 1.0, 1.0).unwrap() >= 0.0);
    }
}
