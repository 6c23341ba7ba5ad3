use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use ndarray::Array2;
use racesac_bench::{race_env, race_track, random_buffer, rng};
use racesac_core::nn::Mlp;
use racesac_core::{Environment, RegularizerSpec, SacAgent, SacConfig};
use rand::Rng;

fn mlp(c: &mut Criterion) {
    let mut r = rng(1);
    let net = Mlp::new(&[10, 64, 64, 1], &mut r);
    let x = Array2::from_shape_fn((256, 10), |_| r.gen_range(-1.0..1.0));
    c.bench_function("mlp forward 256x[10,64,64,1]", |b| {
        b.iter(|| net.forward_batch(black_box(x.view())).unwrap())
    });
    c.bench_function("mlp forward+backward 256x[10,64,64,1]", |b| {
        b.iter(|| {
            let (y, cache) = net.forward_cached(x.view()).unwrap();
            net.backward(&cache, y.view()).unwrap()
        })
    });
}

fn sac_update(c: &mut Criterion) {
    let buf = random_buffer(5000, 2);
    let cfg = SacConfig {
        hidden: vec![64, 64],
        batch_size: 256,
        ..SacConfig::default()
    };
    let reg = RegularizerSpec::PolicyOutput(vec![1.0, 0.2]);
    let mut r = rng(3);
    let mut agent = SacAgent::new(8, 2, &cfg, &reg, &mut r).unwrap();
    c.bench_function("sac update batch 256 [64,64]", |b| {
        b.iter_batched(
            || buf.sample(256, &mut r).unwrap(),
            |batch| agent.update(&batch, &mut rng(4)).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn env_step(c: &mut Criterion) {
    let mut env = race_env(5);
    env.reset();
    let mut r = rng(6);
    c.bench_function("race env step", |b| {
        b.iter(|| {
            let a = [r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)];
            let s = env.step(black_box(&a));
            if s.done || s.fault {
                env.reset();
            }
        })
    });
}

fn projection(c: &mut Criterion) {
    let track = race_track();
    let mut r = rng(7);
    let pts: Vec<(f64, f64, f64)> = (0..1024)
        .map(|_| {
            let p = r.gen_range(0.0..track.length());
            let (x, y) = track.position_at(p);
            (
                x + r.gen_range(-0.15..0.15),
                y + r.gen_range(-0.15..0.15),
                p,
            )
        })
        .collect();
    let mut i = 0;
    c.bench_function("cartesian to frenet, no hint", |b| {
        b.iter(|| {
            i = (i + 1) % pts.len();
            let (x, y, _) = pts[i];
            track.cartesian_to_frenet(x, y, 0.0, None)
        })
    });
    c.bench_function("cartesian to frenet, hinted", |b| {
        b.iter(|| {
            i = (i + 1) % pts.len();
            let (x, y, p) = pts[i];
            track.cartesian_to_frenet(x, y, 0.0, Some(p))
        })
    });
}

criterion_group!(benches, mlp, sac_update, env_step, projection);
criterion_main!(benches);
