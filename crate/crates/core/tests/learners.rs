mod common;

use avgq::env::{make, ActionId, FeatureTable, StateId};
use avgq::learners::{
    offset_grad, offset_value, AverageRewardMode, DiffQLearner, OffsetFn, QNetwork, RviLearner, StepSchedule,
};
use avgq::nn::{MlpSpec, ParamVector};
use avgq::oracle::{relative_value_iteration, DEFAULT_MAX_ITER, DEFAULT_TOL};
use avgq::replay::ReplayBuffer;
use avgq::rng::{stream, Stream};
use avgq::Error;
use common::{assert_close, deterministic_cycle, exact_table_params, one_hot, transition, OneHidden};

const CYCLE_REWARDS: [[f64; 2]; 3] = [[0.0, 0.5], [1.0, 0.0], [2.0, 0.2]];

fn cycle_buffer(copies: usize) -> ReplayBuffer {
    let model = deterministic_cycle(&CYCLE_REWARDS);
    let mut buf = ReplayBuffer::new(1000, 64).unwrap();
    for _ in 0..copies {
        for s in 0..3 {
            for u in 0..2 {
                let next = model.row(s, u)[0].0;
                buf.push(transition(s, u, model.reward(s, u), next));
            }
        }
    }
    buf
}

fn random_net(states: usize, hidden: usize, seed: u64) -> (QNetwork, ParamVector) {
    let spec = MlpSpec::new(states, vec![hidden], 2).unwrap();
    let theta = spec.init(&mut stream(seed, Stream::Init));
    (QNetwork::new(spec, FeatureTable::one_hot(states), 0).unwrap(), theta)
}

fn axpy(theta: &[f64], scale: f64, g: &[f64]) -> Vec<f64> {
    theta.iter().zip(g).map(|(t, gi)| t + scale * gi).collect()
}

#[test]
fn deterministic_fgdqn_step_equals_plain_bellman_gradient_step() {
    let buf = cycle_buffer(4);
    for seed in 0..12 {
        let (q, theta) = random_net(3, 5, seed);
        let offset = OffsetFn::FixedSa { state: StateId(1), action: ActionId(0) };
        let a = 0.1;
        let mut learner = RviLearner::full_gradient(theta.clone(), offset, StepSchedule::Constant { a });
        let mut rng = stream(seed, Stream::Replay);
        let t = buf.sample_uniform(1, &mut rng.clone()).unwrap()[0];
        learner.fgdqn_step(&q, &buf, 1, &mut rng).unwrap();

        let net = OneHidden::new(q.spec(), &theta);
        let (x, xn) = (one_hot(3, t.state.0), one_hot(3, t.next_state.0));
        let v = net.greedy(&xn);
        let f = net.q(&one_hot(3, 1), 0);
        let e = t.reward + net.q(&xn, v) - f - net.q(&x, t.action.0);
        let factor: Vec<f64> = net
            .grad(&xn, v)
            .iter()
            .zip(net.grad(&one_hot(3, 1), 0))
            .zip(net.grad(&x, t.action.0))
            .map(|((gn, gf), gx)| gn - gf - gx)
            .collect();
        assert_close(&learner.theta.0, &axpy(&theta.0, -a * e, &factor), 1e-10);
    }
}

/// Network and offset anchored so that the RVI equation holds exactly on the cycle.
/// Going round earns 3 per 3 steps; with `Q(0, 0) = beta = 1` the table follows by hand.
fn cycle_fixed_point() -> (QNetwork, ParamVector, f64) {
    let table = vec![vec![1.0, 0.5], vec![2.0, 1.0], vec![2.0, 1.2]];
    let (spec, theta) = exact_table_params(&table);
    (QNetwork::new(spec, FeatureTable::one_hot(3), 0).unwrap(), theta, 1.0)
}

#[test]
fn exact_solution_is_a_fixed_point_of_every_rule() {
    let (q, theta, beta) = cycle_fixed_point();
    let model = deterministic_cycle(&CYCLE_REWARDS);
    let buf = cycle_buffer(3);
    let offset = OffsetFn::FixedSa { state: StateId(0), action: ActionId(0) };
    assert!((offset_value(&offset, &q, &theta).unwrap() - beta).abs() < 1e-9);
    let sched = StepSchedule::Constant { a: 0.05 };
    let mut rng = stream(3, Stream::Replay);

    let mut full = RviLearner::full_gradient(theta.clone(), offset, sched);
    let mut semi = RviLearner::semi_gradient(theta.clone(), offset, sched, 10);
    let mut dq = DiffQLearner::new(theta.clone(), beta, 1.0, sched, AverageRewardMode::GenerativeSweep);
    let mut dq_semi = DiffQLearner::new(theta.clone(), beta, 1.0, sched, AverageRewardMode::ReplayBatch);
    for _ in 0..50 {
        assert!(full.fgdqn_step(&q, &buf, 8, &mut rng).unwrap().loss < 1e-18);
        assert!(semi.dqn_step(&q, &buf, 8, &mut rng).unwrap().loss < 1e-18);
        assert!(dq.fgdqn_step(&q, &buf, Some(&model), 8, &mut rng).unwrap().loss < 1e-18);
        assert!(dq_semi.dqn_step(&q, &buf, None, 8, &mut rng).unwrap().loss < 1e-18);
    }
    for th in [&full.theta, &semi.theta, &dq.theta, &dq_semi.theta] {
        assert_close(&th.0, &theta.0, 1e-9);
    }
    assert!((dq.r_bar - beta).abs() < 1e-9);
    assert!((dq_semi.r_bar - beta).abs() < 1e-9);
}

#[test]
fn stochastic_fixed_point_has_small_td_error() {
    let env = make("circulant", None).unwrap();
    let sol = relative_value_iteration(env.tabular_model(), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    let shift = sol.beta - sol.q[0][0];
    let table: Vec<Vec<f64>> = sol.q.iter().map(|row| row.iter().map(|v| v + shift).collect()).collect();
    let (spec, theta) = exact_table_params(&table);
    let q = QNetwork::new(spec, FeatureTable::one_hot(4), 0).unwrap();
    let mut buf = ReplayBuffer::new(100_000, 4096).unwrap();
    let mut rng = stream(1, Stream::Env);
    for _ in 0..20_000 {
        for s in 0..4 {
            for u in 0..2 {
                let (next, r) = env.step(StateId(s), ActionId(u), &mut rng).unwrap();
                buf.push(transition(s, u, r, next.0));
            }
        }
    }
    let offset = OffsetFn::FixedSa { state: StateId(0), action: ActionId(0) };
    let mut learner = RviLearner::full_gradient(theta.clone(), offset, StepSchedule::Constant { a: 0.01 });
    let mut replay = stream(1, Stream::Replay);
    for _ in 0..100 {
        // each conditional average pools 4096 draws of a Bernoulli(1/2) move with values
        // at most 2 apart, so |E| is of order 2 * 0.5 / 64 ~ 0.016
        assert!(learner.fgdqn_step(&q, &buf, 16, &mut replay).unwrap().loss < 4e-3);
    }
    let drift = learner.theta.0.iter().zip(&theta.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(drift < 0.05, "drift {drift}");
}

#[test]
fn semi_gradient_single_triplet_matches_hand_computation() {
    let (q, theta) = random_net(3, 4, 21);
    let mut buf = ReplayBuffer::new(10, 10).unwrap();
    buf.push(transition(2, 1, 0.75, 0));
    let offset = OffsetFn::MaxAtState { state: StateId(1) };
    let a = 0.2;
    let mut learner = RviLearner::semi_gradient(theta.clone(), offset, StepSchedule::Constant { a }, 3);
    learner.dqn_step(&q, &buf, 1, &mut stream(0, Stream::Replay)).unwrap();

    let net = OneHidden::new(q.spec(), &theta);
    let (x, xn, s1) = (one_hot(3, 2), one_hot(3, 0), one_hot(3, 1));
    let z = 0.75 + net.q(&xn, net.greedy(&xn)) - net.q(&s1, net.greedy(&s1));
    let expected = axpy(&theta.0, a * (z - net.q(&x, 1)), &net.grad(&x, 1));
    assert_close(&learner.theta.0, &expected, 1e-10);
    // the target is refreshed only every third step
    assert_eq!(learner.target.as_ref().unwrap(), &theta);
    learner.dqn_step(&q, &buf, 1, &mut stream(0, Stream::Replay)).unwrap();
    assert_eq!(learner.target.as_ref().unwrap(), &theta);
    learner.dqn_step(&q, &buf, 1, &mut stream(0, Stream::Replay)).unwrap();
    assert_eq!(learner.target.as_ref().unwrap(), &learner.theta);
}

#[test]
fn semi_gradient_with_zero_td_after_sync_is_still() {
    let (q, theta, _) = cycle_fixed_point();
    let buf = cycle_buffer(1);
    let offset = OffsetFn::FixedSa { state: StateId(0), action: ActionId(0) };
    let mut learner = RviLearner::semi_gradient(theta.clone(), offset, StepSchedule::Constant { a: 1.0 }, 1);
    learner.dqn_step(&q, &buf, 6, &mut stream(5, Stream::Replay)).unwrap();
    assert_close(&learner.theta.0, &theta.0, 1e-12);
}

#[test]
fn diffq_with_zero_eta_is_rvi_with_constant_offset() {
    let buf = cycle_buffer(2);
    let model = deterministic_cycle(&CYCLE_REWARDS);
    for seed in 0..6 {
        let (q, theta) = random_net(3, 6, 100 + seed);
        let (a, r0) = (0.05, 0.3);
        let mut dq = DiffQLearner::new(theta.clone(), r0, 0.0, StepSchedule::Constant { a }, AverageRewardMode::GenerativeSweep);
        let mut rng = stream(seed, Stream::Replay);
        let t = buf.sample_uniform(1, &mut rng.clone()).unwrap()[0];
        dq.fgdqn_step(&q, &buf, Some(&model), 1, &mut rng).unwrap();
        assert_eq!(dq.r_bar, r0);
        assert!(dq.y.0.iter().all(|&y| y == 0.0));

        let net = OneHidden::new(q.spec(), &theta);
        let (x, xn) = (one_hot(3, t.state.0), one_hot(3, t.next_state.0));
        let v = net.greedy(&xn);
        let e = t.reward + net.q(&xn, v) - r0 - net.q(&x, t.action.0);
        let factor: Vec<f64> = net.grad(&xn, v).iter().zip(net.grad(&x, t.action.0)).map(|(a, b)| a - b).collect();
        assert_close(&dq.theta.0, &axpy(&theta.0, -a * e, &factor), 1e-10);
    }
}

#[test]
fn diffq_replay_batch_rate_updates_match_hand_computation() {
    let (q, theta) = random_net(3, 4, 77);
    let mut buf = ReplayBuffer::new(10, 10).unwrap();
    buf.push(transition(0, 1, 0.5, 2));
    let (a, eta, r0) = (0.1, 0.5, 0.2);
    let mut dq = DiffQLearner::new(theta.clone(), r0, eta, StepSchedule::Constant { a }, AverageRewardMode::ReplayBatch);
    dq.fgdqn_step(&q, &buf, None, 1, &mut stream(0, Stream::Replay)).unwrap();

    let net = OneHidden::new(q.spec(), &theta);
    let (x, xn) = (one_hot(3, 0), one_hot(3, 2));
    let v = net.greedy(&xn);
    let td = 0.5 + net.q(&xn, v) - r0 - net.q(&x, 1);
    assert!((dq.r_bar - (r0 + eta * a * td)).abs() < 1e-12);
    let diff: Vec<f64> = net.grad(&xn, v).iter().zip(net.grad(&x, 1)).map(|(a, b)| a - b).collect();
    let y: Vec<f64> = diff.iter().map(|d| eta * a * d).collect();
    assert_close(&dq.y.0, &y, 1e-12);
    assert_close(&dq.theta.0, &axpy(&theta.0, -a * td, &diff), 1e-10);
}

#[test]
fn diffq_semi_gradient_keeps_y_zero() {
    let env = make("circulant", None).unwrap();
    let (q, theta) = random_net(4, 8, 5);
    let mut buf = ReplayBuffer::new(1000, 64).unwrap();
    let mut rng = stream(2, Stream::Env);
    let mut s = StateId(0);
    for i in 0..500 {
        let u = ActionId(i % 2);
        let (next, r) = env.step(s, u, &mut rng).unwrap();
        buf.push(transition(s.0, u.0, r, next.0));
        s = next;
    }
    let sched = StepSchedule::Constant { a: 0.05 };
    let mut dq = DiffQLearner::new(theta, 0.0, 1.0, sched, AverageRewardMode::GenerativeSweep).with_target_network(10);
    let mut replay = stream(2, Stream::Replay);
    for _ in 0..200 {
        dq.dqn_step(&q, &buf, Some(env.tabular_model()), 8, &mut replay).unwrap();
        assert!(dq.y.0.iter().all(|&y| y == 0.0));
    }
    assert!(dq.r_bar != 0.0);
}

#[test]
fn generative_sweep_needs_a_model() {
    let (q, theta) = random_net(3, 4, 1);
    let buf = cycle_buffer(1);
    let mut dq = DiffQLearner::new(theta, 0.0, 1.0, StepSchedule::Constant { a: 0.1 }, AverageRewardMode::GenerativeSweep);
    let err = dq.fgdqn_step(&q, &buf, None, 2, &mut stream(0, Stream::Replay)).unwrap_err();
    assert!(matches!(err, Error::UnsupportedMode(_)));
}

#[test]
fn tabular_analogue_reaches_oracle_gain() {
    let model = deterministic_cycle(&CYCLE_REWARDS);
    let beta = relative_value_iteration(&model, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap().beta;
    let (q, theta) = random_net(3, 16, 8);
    let buf = cycle_buffer(2);
    let sched = StepSchedule::PowerLaw { a0: 0.1, tau: 500.0, kappa: 0.6 };
    let mut dq = DiffQLearner::new(theta, 0.0, 1.0, sched, AverageRewardMode::GenerativeSweep);
    let mut rng = stream(4, Stream::Replay);
    for _ in 0..20_000 {
        dq.fgdqn_step(&q, &buf, Some(&model), 6, &mut rng).unwrap();
    }
    assert!((dq.r_bar - beta).abs() < 1e-2, "R̄ = {} vs {beta}", dq.r_bar);
}

#[test]
fn offset_kinds_match_their_definitions() {
    let spec = MlpSpec::new(2, vec![3], 2).unwrap();
    let theta = spec.init(&mut stream(12, Stream::Init));
    let q = QNetwork::new(spec.clone(), FeatureTable::one_hot(2), 0).unwrap();
    let net = OneHidden::new(&spec, &theta);
    let vals: Vec<f64> = (0..2).flat_map(|s| (0..2).map(move |u| (s, u))).map(|(s, u)| net.q(&one_hot(2, s), u)).collect();

    let fixed = OffsetFn::FixedSa { state: StateId(1), action: ActionId(0) };
    assert!((offset_value(&fixed, &q, &theta).unwrap() - vals[2]).abs() < 1e-12);
    assert_close(&offset_grad(&fixed, &q, &theta).unwrap().0, &net.grad(&one_hot(2, 1), 0), 1e-12);

    let mean = offset_value(&OffsetFn::Mean, &q, &theta).unwrap();
    assert!((mean - vals.iter().sum::<f64>() / 4.0).abs() < 1e-12);
    let g = offset_grad(&OffsetFn::Mean, &q, &theta).unwrap();
    let h = 1e-6;
    for i in 0..theta.len() {
        let mut plus = theta.clone();
        let mut minus = theta.clone();
        plus.0[i] += h;
        minus.0[i] -= h;
        let fd = (offset_value(&OffsetFn::Mean, &q, &plus).unwrap() - offset_value(&OffsetFn::Mean, &q, &minus).unwrap()) / (2.0 * h);
        assert!((fd - g.0[i]).abs() < 1e-7, "param {i}: {fd} vs {}", g.0[i]);
    }

    let best = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(offset_value(&OffsetFn::GlobalMax, &q, &theta).unwrap(), best);
}

#[test]
fn global_offsets_refuse_large_tables() {
    let n = 2100;
    let spec = MlpSpec::new(1, vec![2], 2).unwrap();
    let theta = ParamVector::zeros(spec.num_params());
    let q = QNetwork::new(spec, FeatureTable::normalized_scalar(n), 0).unwrap();
    for kind in [OffsetFn::GlobalMax, OffsetFn::Mean] {
        assert!(matches!(offset_value(&kind, &q, &theta), Err(Error::UnsupportedOffset(_))));
    }
    assert!(offset_value(&OffsetFn::MaxAtState { state: StateId(n - 1) }, &q, &theta).is_ok());
}
