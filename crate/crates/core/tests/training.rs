mod common;

use common::{model, perturbed, random_like, toy_corpus};
use ewcl_core::continual::{FisherDiagonal, TaskSnapshot};
use ewcl_core::data::BatchStream;
use ewcl_core::model::{decays, CausalLM};
use ewcl_core::trainer::{
    adamw_step, lr_schedule, train_task, NoHooks, Regularizer, StepRecord, TrainConfig, TrainHooks, TrainState,
};
use ewcl_core::Result;

const L: usize = 16;

fn cfg(steps: u64) -> TrainConfig {
    TrainConfig { learning_rate: 1e-2, total_steps: steps, batch_size: 2, ..TrainConfig::default() }
}

fn run(m: &mut CausalLM, config: &TrainConfig, regs: &[Regularizer<'_>]) -> Vec<StepRecord> {
    let mut stream = BatchStream::new(&toy_corpus(), L, config.batch_size, 0).unwrap();
    let mut state = TrainState::new(m.params());
    train_task(m, &mut stream, config, regs, &mut state, &mut NoHooks).unwrap()
}

#[test]
fn every_step_is_logged_once() {
    let mut m = model(1, 8, L, 0);
    let log = run(&mut m, &cfg(10), &[]);
    assert_eq!(log.len(), 10);
    assert_eq!(log.iter().map(|r| r.step).collect::<Vec<_>>(), (1..=10).collect::<Vec<_>>());
    assert!(log.iter().all(|r| r.task_loss.is_finite() && r.penalties.is_empty()));
}

#[test]
fn logged_loss_precedes_the_update() {
    let mut m = model(1, 8, L, 0);
    let first = BatchStream::new(&toy_corpus(), L, 2, 0).unwrap().next_batch();
    let before = m.next_token_loss(&first).unwrap();
    let log = run(&mut m, &cfg(1), &[]);
    assert_eq!(log[0].task_loss, before);
    assert_ne!(m.next_token_loss(&first).unwrap(), before);
}

#[test]
fn loss_falls_on_a_repetitive_corpus() {
    let mut m = model(2, 16, L, 1);
    let log = run(&mut m, &cfg(200), &[]);
    let head: f64 = log[..10].iter().map(|r| r.task_loss).sum::<f64>() / 10.0;
    let tail: f64 = log[190..].iter().map(|r| r.task_loss).sum::<f64>() / 10.0;
    assert!(tail < 0.5 * head, "{head} -> {tail}");
}

#[test]
fn identical_runs_are_bit_identical() {
    let (mut a, mut b) = (model(1, 8, L, 2), model(1, 8, L, 2));
    let la = run(&mut a, &cfg(15), &[]);
    let lb = run(&mut b, &cfg(15), &[]);
    assert_eq!(la, lb);
    assert_eq!(a, b);
}

#[test]
fn accumulation_equals_one_step_on_mean_gradient() {
    let config = TrainConfig { grad_accum_steps: 3, batch_size: 1, ..cfg(1) };
    let mut m = model(1, 8, L, 3);
    let start = m.clone();
    let mut stream = BatchStream::new(&toy_corpus(), L, 1, 0).unwrap();
    let mut probe = stream.clone();
    let mut state = TrainState::new(m.params());
    train_task(&mut m, &mut stream, &config, &[], &mut state, &mut NoHooks).unwrap();
    assert_eq!(stream.position(), 3);

    let mut mean = start.params().zeros_like();
    for _ in 0..3 {
        let (_, g) = start.loss_and_grad(&probe.next_batch()).unwrap();
        for (a, b) in mean.arrays_mut().iter_mut().zip(g.arrays()) {
            a.data_mut().iter_mut().zip(b.data()).for_each(|(x, y)| *x += y);
        }
    }
    for a in mean.arrays_mut() {
        a.data_mut().iter_mut().for_each(|v| *v /= 3.0);
    }
    let mut manual = start.params().clone();
    let mut optim = TrainState::new(&manual).optim;
    let decay: Vec<bool> = manual.names().iter().map(|n| decays(n)).collect();
    adamw_step(&mut manual, &mean, &mut optim, lr_schedule(1, &config), &config, &decay).unwrap();
    for (x, y) in m.params().values().zip(manual.values()) {
        assert!((x - y).abs() <= 1e-14 * (1.0 + y.abs()), "{x} vs {y}");
    }
}

#[derive(Default)]
struct Capture {
    saved: Vec<(CausalLM, TrainState, u64)>,
    steps: usize,
}

impl TrainHooks for Capture {
    fn on_step(&mut self, _record: &StepRecord) -> Result<()> {
        self.steps += 1;
        Ok(())
    }

    fn on_checkpoint(&mut self, model: &CausalLM, state: &TrainState, data_position: u64) -> Result<()> {
        self.saved.push((model.clone(), state.clone(), data_position));
        Ok(())
    }
}

#[test]
fn resume_reproduces_the_uninterrupted_run() {
    let config = TrainConfig { checkpoint_every: 4, ..cfg(12) };
    let corpus = toy_corpus();
    let mut full = model(1, 8, L, 4);
    let mut stream = BatchStream::new(&corpus, L, 2, 7).unwrap();
    let mut state = TrainState::new(full.params());
    let mut hooks = Capture::default();
    let full_log = train_task(&mut full, &mut stream, &config, &[], &mut state, &mut hooks).unwrap();
    assert_eq!(hooks.steps, 12);
    assert_eq!(hooks.saved.iter().map(|s| s.1.optim.step).collect::<Vec<_>>(), [4, 8, 12]);

    let (mut resumed, mut rstate, position) = hooks.saved[0].clone();
    let mut rstream = BatchStream::new(&corpus, L, 2, 7).unwrap();
    rstream.seek(position);
    let tail = train_task(&mut resumed, &mut rstream, &config, &[], &mut rstate, &mut NoHooks).unwrap();
    assert_eq!(tail.as_slice(), &full_log[4..]);
    assert_eq!(resumed, full);
    assert_eq!(rstate, state);
}

#[test]
fn zero_strength_matches_no_regularizer() {
    let base = model(1, 8, L, 5);
    let snap = TaskSnapshot::capture(&CausalLM::from_parts(base.config().clone(), perturbed(base.params(), 0.3, 1)).unwrap());
    let fisher = FisherDiagonal::new(random_like(base.params(), 0.0, 1.0, 2), 1).unwrap();
    let (mut a, mut b) = (base.clone(), base.clone());
    let la = run(&mut a, &cfg(10), &[]);
    let lb = run(&mut b, &cfg(10), &[Regularizer::Ewc { strength: 0.0, snapshot: &snap, fisher: &fisher }]);
    assert_eq!(a, b);
    for (x, y) in la.iter().zip(&lb) {
        assert_eq!(x.task_loss, y.task_loss);
        assert_eq!(y.penalties, vec![("ewc".to_string(), 0.0)]);
    }
}

#[test]
fn penalties_are_logged_non_negative_and_pull_back() {
    let base = model(1, 8, L, 6);
    let snap = TaskSnapshot::capture(&base);
    let teacher = base.clone();
    let fisher = FisherDiagonal::new(random_like(base.params(), 0.5, 1.0, 3), 1).unwrap();
    let (mut free, mut held) = (base.clone(), base.clone());
    run(&mut free, &cfg(20), &[]);
    let regs = [
        Regularizer::Ewc { strength: 50.0, snapshot: &snap, fisher: &fisher },
        Regularizer::Lwf { strength: 1.0, temperature: 1.0, teacher: &teacher },
    ];
    let log = run(&mut held, &cfg(20), &regs);
    for r in &log {
        assert_eq!(r.penalties.len(), 2);
        assert!(r.penalties.iter().all(|(_, v)| *v >= 0.0));
    }
    assert_eq!(log[0].penalties[0].1, 0.0);
    let d_free = free.params().l2_distance(base.params()).unwrap();
    let d_held = held.params().l2_distance(base.params()).unwrap();
    assert!(d_held < d_free, "{d_held} vs {d_free}");
}

#[test]
fn si_path_integral_is_collected() {
    let mut m = model(1, 8, L, 7);
    let start = m.params().clone();
    let mut stream = BatchStream::new(&toy_corpus(), L, 2, 0).unwrap();
    let mut state = TrainState::with_si(m.params(), 1e-3).unwrap();
    train_task(&mut m, &mut stream, &cfg(30), &[], &mut state, &mut NoHooks).unwrap();
    let si = state.si.unwrap();
    assert_eq!(si.start(), &start);
    // descending the loss makes the path integral mostly positive
    let total: f64 = si.numerator().values().sum();
    assert!(total > 0.0);
    let importance = si.consolidate(m.params()).unwrap();
    assert!(importance.values().all(|v| v >= 0.0) && importance.values().any(|v| v > 0.0));
}
