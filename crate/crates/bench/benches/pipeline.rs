use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use flowpat_bench::{small_split, windows};
use flowpat_core::dataset::{labels, rows};
use flowpat_core::dsp::{fft, welch_psd_values, WelchParams};
use flowpat_core::models::{Architecture, ForestConfig, NeuralModel, RandomForest, SENetConfig};
use flowpat_core::nn::layers::{Conv1d, Ctx, Mode};
use flowpat_core::nn::{AdamW, AdamWConfig, ParamStore, Tape, Tensor};
use flowpat_core::rng::rng_from;
use num_complex::Complex64;

fn spectral(c: &mut Criterion) {
    let x: Vec<Complex64> = (0..8192).map(|i| Complex64::new((i as f64 * 0.37).sin(), 0.0)).collect();
    c.bench_function("fft_8192", |b| b.iter(|| fft(black_box(&x), false).unwrap()));
    let signal: Vec<f64> = (0..20_000).map(|i| (i as f64 * 0.2).sin() + 0.1 * (i as f64 * 1.3).cos()).collect();
    let params = WelchParams::default();
    c.bench_function("welch_default", |b| b.iter(|| welch_psd_values(black_box(&signal), 100.0, &params).unwrap()));
}

fn conv(c: &mut Criterion) {
    let mut rng = rng_from(1);
    let mut store = ParamStore::new();
    let layer = Conv1d::new(&mut store, "conv", 16, 16, 5, 1, true, &mut rng);
    let x = Tensor::full(&[64, 16, 250], 0.5);
    let weights = vec![1.0; 64 * 16 * 250];
    c.bench_function("conv1d_forward_backward_64x16x250", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let xv = tape.leaf(x.clone());
            let mut r = rng_from(0);
            let mut ctx = Ctx {
                tape: &mut tape,
                store: &mut store,
                mode: Mode::Train,
                rng: &mut r,
            };
            let y = layer.forward(&mut ctx, xv).unwrap();
            let loss = tape.sum_product(y, weights.clone()).unwrap();
            black_box(tape.backward(loss));
        })
    });
}

fn senet_step(c: &mut Criterion) {
    let rows_owned = windows(64);
    let batch: Vec<&[f64]> = rows_owned.iter().map(|r| r.as_slice()).collect();
    let targets: Vec<usize> = (0..64).map(|i| i % 7).collect();
    let mut group = c.benchmark_group("senet");
    group.sample_size(10);
    group.bench_function("train_step_batch_64", |b| {
        b.iter_batched(
            || {
                let model = NeuralModel::build(Architecture::SENet(SENetConfig::default()), 1).unwrap();
                let opt = AdamW::new(AdamWConfig::default(), &model.store);
                (model, opt)
            },
            |(mut model, mut opt)| {
                let mut tape = Tape::new();
                let x = tape.constant(model.input_tensor(&batch).unwrap());
                let mut rng = rng_from(3);
                let logits = model.forward(&mut tape, x, Mode::Train, &mut rng).unwrap();
                let loss = tape.cross_entropy(logits, &targets).unwrap();
                let grads = tape.backward(loss);
                model.store.zero_grad();
                grads.accumulate_into(&mut model.store);
                opt.step(&mut model.store);
                model
            },
            BatchSize::LargeInput,
        )
    });
    group.bench_function("predict_256", |b| {
        let mut model = NeuralModel::build(Architecture::SENet(SENetConfig::default()), 1).unwrap();
        let many = windows(256);
        let refs: Vec<&[f64]> = many.iter().map(|r| r.as_slice()).collect();
        b.iter(|| model.predict(black_box(&refs), 256).unwrap())
    });
    group.finish();
}

fn forest(c: &mut Criterion) {
    let split = small_split(40, 10);
    let x = rows(&split.train);
    let y = labels(&split.train);
    let cfg = ForestConfig {
        n_trees: 20,
        ..Default::default()
    };
    let mut group = c.benchmark_group("forest");
    group.sample_size(10);
    group.bench_function("fit_20_trees_280x500", |b| b.iter(|| RandomForest::fit(black_box(&x), &y, &cfg, 7).unwrap()));
    group.finish();
}

criterion_group!(benches, spectral, conv, senet_step, forest);
criterion_main!(benches);
