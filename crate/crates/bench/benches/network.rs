use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use endreg::net::{Architecture, Network};
use endreg::{Matrix, Rng};

fn bench_desk_conv(c: &mut Criterion) {
    let mut rng = Rng::new(0);
    let arch = Architecture::desk_conv(3, 16, 16, 10).unwrap();
    let net = Network::<f32>::new(arch, &mut rng).unwrap();
    let m = 64;
    let inputs = Matrix::from_fn(3 * 16 * 16, m, |_, _| rng.uniform() as f32);
    let grad_logits = Matrix::from_fn(10, m, |_, _| rng.normal() as f32 * 0.01);
    let grad_gamma = Matrix::zeros(16, m);

    c.bench_function("desk_conv_forward_64", |b| {
        b.iter(|| net.forward(black_box(&inputs)).unwrap())
    });
    let (_, trace) = net.forward(&inputs).unwrap();
    c.bench_function("desk_conv_backward_64", |b| {
        b.iter(|| net.backward(black_box(&trace), &grad_logits, &grad_gamma).unwrap())
    });
}

criterion_group!(benches, bench_desk_conv);
criterion_main!(benches);
