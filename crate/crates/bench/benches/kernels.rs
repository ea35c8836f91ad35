use std::hint::black_box;

use avgq::env::{make, ActionId, StateId, Transition};
use avgq::learners::{OffsetFn, QNetwork, RviLearner, StepSchedule};
use avgq::nn::{self, MlpSpec};
use avgq::oracle::{relative_value_iteration, DEFAULT_MAX_ITER, DEFAULT_TOL};
use avgq::replay::ReplayBuffer;
use avgq::rng::{stream, Stream};
use criterion::{criterion_group, criterion_main, Criterion};
use rand::Rng;

fn mlp(c: &mut Criterion) {
    let spec = MlpSpec::new(16, vec![64], 2).unwrap();
    let theta = spec.init(&mut stream(0, Stream::Init));
    let x: Vec<f64> = (0..16).map(|i| (i % 3) as f64 * 0.5).collect();
    c.bench_function("mlp_forward_16x64x2", |b| b.iter(|| nn::forward(&spec, &theta, black_box(&x)).unwrap()));
    c.bench_function("mlp_grad_16x64x2", |b| b.iter(|| nn::grad_param(&spec, &theta, black_box(&x), ActionId(1)).unwrap()));
}

fn filled_buffer(key: &str, pushes: usize) -> ReplayBuffer {
    let env = make(key, None).unwrap();
    let mut rng = stream(1, Stream::Env);
    let mut buf = ReplayBuffer::new(100_000, 256).unwrap();
    let mut s = StateId(0);
    for _ in 0..pushes {
        let u = ActionId(rng.random_range(0..env.num_actions()));
        let (next, reward) = env.step(s, u, &mut rng).unwrap();
        buf.push(Transition { state: s, action: u, reward, next_state: next });
        s = next;
    }
    buf
}

fn replay(c: &mut Criterion) {
    let buf = filled_buffer("access-control", 50_000);
    c.bench_function("conditional_td_average_cap256", |b| {
        b.iter(|| buf.conditional_td_average(StateId(3), ActionId(1), 0.5, 0.1, |y| y.0 as f64 * 0.01).unwrap())
    });
}

fn fgdqn(c: &mut Criterion) {
    let env = make("access-control", None).unwrap();
    let q = QNetwork::for_env(&env, vec![64]).unwrap();
    let buf = filled_buffer("access-control", 20_000);
    let theta = q.spec().init(&mut stream(0, Stream::Init));
    let offset = OffsetFn::FixedSa { state: StateId(0), action: ActionId(0) };
    let mut learner = RviLearner::full_gradient(theta, offset, StepSchedule::Constant { a: 1e-4 });
    let mut rng = stream(0, Stream::Replay);
    c.bench_function("fgdqn_step_batch32", |b| b.iter(|| learner.fgdqn_step(&q, &buf, 32, &mut rng).unwrap()));
}

fn oracle(c: &mut Criterion) {
    let model = make("deadline-small", None).unwrap().tabular_model().clone();
    c.bench_function("rvi_deadline_small", |b| b.iter(|| relative_value_iteration(black_box(&model), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap()));
}

criterion_group!(benches, mlp, replay, fgdqn, oracle);
criterion_main!(benches);
