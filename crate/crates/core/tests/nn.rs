use flowpat_core::nn::kernels::{softmax_rows, swish};
use flowpat_core::nn::layers::{BatchNorm1d, Conv1d, Ctx, Dropout, Linear, Mode};
use flowpat_core::nn::{AdamW, AdamWConfig, ParamStore, Tape, Tensor};
use flowpat_core::rng::rng_from;
use proptest::prelude::*;
use rand::Rng as _;

fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = rng_from(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
}

#[test]
fn swish_closed_form() {
    assert_eq!(swish(0.0), 0.0);
    assert!((swish(20.0) - 20.0).abs() < 1e-6);
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::new(&[3], vec![0.0, 20.0, -1.0]).unwrap());
    let y = tape.swish(x);
    let v = tape.value(y).data();
    assert_eq!(v[0], 0.0);
    assert!((v[1] - 20.0).abs() < 1e-6);
    assert!((v[2] + 1.0 / (1.0 + 1f64.exp())).abs() < 1e-15);
}

#[test]
fn global_average_of_ones() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::full(&[3, 4, 9], 1.0));
    let y = tape.global_avg_pool1d(x).unwrap();
    assert_eq!(tape.value(y).shape(), &[3, 4]);
    assert!(tape.value(y).data().iter().all(|&v| v == 1.0));
}

#[test]
fn batch_norm_normalizes_per_channel() {
    let (b, c, l) = (6, 3, 11);
    let mut store = ParamStore::new();
    let bn = BatchNorm1d::new(&mut store, "bn", c);
    let mut tape = Tape::new();
    let mut x = random(&[b, c, l], 1);
    for (i, v) in x.data_mut().iter_mut().enumerate() {
        *v = *v * 3.0 + 7.0 * ((i / l) % c) as f64;
    }
    let xv = tape.constant(x);
    let mut rng = rng_from(0);
    let mut ctx = Ctx {
        tape: &mut tape,
        store: &mut store,
        mode: Mode::Train,
        rng: &mut rng,
    };
    let y = bn.forward(&mut ctx, xv).unwrap();
    let y = tape.value(y).data();
    for ch in 0..c {
        let vals: Vec<f64> = (0..b).flat_map(|i| (0..l).map(move |t| (i, t))).map(|(i, t)| y[(i * c + ch) * l + t]).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        assert!(mean.abs() < 1e-6, "{mean}");
        assert!((var - 1.0).abs() < 1e-4, "{var}");
    }
}

#[test]
fn dropout_rate_is_validated_and_scales() {
    assert!(Dropout::new(1.0).is_err());
    assert!(Dropout::new(-0.1).is_err());
    let d = Dropout::new(0.25).unwrap();
    let mut store = ParamStore::new();
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::full(&[4, 256], 1.0));
    let mut rng = rng_from(3);
    let mut ctx = Ctx {
        tape: &mut tape,
        store: &mut store,
        mode: Mode::Train,
        rng: &mut rng,
    };
    let y = d.forward(&mut ctx, x).unwrap();
    ctx.mode = Mode::Eval;
    let z = d.forward(&mut ctx, x).unwrap();
    assert!(tape.value(y).data().iter().all(|&v| v == 0.0 || (v - 1.0 / 0.75).abs() < 1e-15));
    let kept = tape.value(y).data().iter().filter(|&&v| v != 0.0).count() as f64 / 1024.0;
    assert!((kept - 0.75).abs() < 0.05, "{kept}");
    assert_eq!(tape.value(z).data(), tape.value(x).data());
}

#[test]
fn only_normalization_and_dropout_see_the_mode() {
    let mut rng = rng_from(5);
    let mut store = ParamStore::new();
    let conv = Conv1d::new(&mut store, "c", 2, 3, 5, 1, true, &mut rng);
    let fc = Linear::new(&mut store, "fc", 3, 4, &mut rng);
    let x = random(&[2, 2, 8], 6);
    let run = |store: &mut ParamStore, mode: Mode| {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let mut r = rng_from(0);
        let mut ctx = Ctx {
            tape: &mut tape,
            store,
            mode,
            rng: &mut r,
        };
        let h = conv.forward(&mut ctx, xv).unwrap();
        let h = ctx.tape.swish(h);
        let h = ctx.tape.max_pool1d(h, 2).unwrap();
        let h = ctx.tape.relu(h);
        let h = ctx.tape.global_avg_pool1d(h).unwrap();
        let h = ctx.tape.sigmoid(h);
        let h = fc.forward(&mut ctx, h).unwrap();
        let h = ctx.tape.softmax(h).unwrap();
        tape.value(h).clone()
    };
    assert_eq!(run(&mut store, Mode::Train), run(&mut store, Mode::Eval));
}

#[test]
fn two_layer_network_memorizes_32_pairs() {
    let mut rng = rng_from(11);
    let mut store = ParamStore::new();
    let fc1 = Linear::new(&mut store, "fc1", 10, 64, &mut rng);
    let fc2 = Linear::new(&mut store, "fc2", 64, 7, &mut rng);
    let x = random(&[32, 10], 12);
    let y: Vec<usize> = (0..32).map(|_| rng.gen_range(0..7)).collect();
    let mut opt = AdamW::new(
        AdamWConfig {
            lr: 1e-2,
            ..Default::default()
        },
        &store,
    );
    let mut solved_at = None;
    for step in 0..2000 {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let mut r = rng_from(0);
        let mut ctx = Ctx {
            tape: &mut tape,
            store: &mut store,
            mode: Mode::Train,
            rng: &mut r,
        };
        let h = fc1.forward(&mut ctx, xv).unwrap();
        let h = ctx.tape.relu(h);
        let logits = fc2.forward(&mut ctx, h).unwrap();
        let correct = tape
            .value(logits)
            .data()
            .chunks(7)
            .zip(&y)
            .filter(|(row, &t)| flowpat_core::models::argmax(row) == t)
            .count();
        if correct == 32 {
            solved_at = Some(step);
            break;
        }
        let loss = tape.cross_entropy(logits, &y).unwrap();
        let grads = tape.backward(loss);
        store.zero_grad();
        grads.accumulate_into(&mut store);
        opt.step(&mut store);
    }
    assert!(solved_at.is_some(), "not memorized within 2000 steps");
}

#[test]
fn saturated_correct_logits_have_no_loss() {
    let mut tape = Tape::new();
    let mut z = Tensor::zeros(&[2, 7]);
    z.data_mut()[3] = 30.0;
    z.data_mut()[7 + 6] = 30.0;
    let z = tape.constant(z);
    let loss = tape.cross_entropy(z, &[3, 6]).unwrap();
    assert!(tape.value(loss).item() < 1e-9);
}

#[test]
fn non_finite_logits_are_rejected() {
    let mut tape = Tape::new();
    let z = tape.constant(Tensor::new(&[1, 7], vec![f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap());
    assert!(tape.cross_entropy(z, &[0]).is_err());
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(v in prop::collection::vec(-15.0f64..15.0, 7..70)) {
        let n = v.len() / 7 * 7;
        let p = softmax_rows(&v[..n], 7);
        for row in p.chunks(7) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            prop_assert!(row.iter().all(|&x| x > 0.0 && x < 1.0));
        }
    }

    #[test]
    fn tensor_length_matches_shape(dims in prop::collection::vec(1usize..6, 1..4)) {
        let n: usize = dims.iter().product();
        prop_assert!(Tensor::new(&dims, vec![0.0; n]).is_ok());
        prop_assert!(Tensor::new(&dims, vec![0.0; n + 1]).is_err());
    }
}
