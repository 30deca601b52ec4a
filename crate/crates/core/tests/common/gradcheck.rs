//! Central finite-difference checks of tape gradients.

use flowpat_core::error::Result;
use flowpat_core::models::senet::{BasicBlock, SeBlock, SENetConfig};
use flowpat_core::nn::layers::{BatchNorm1d, Conv1d, Ctx, Linear, Mode};
use flowpat_core::nn::{ParamStore, Tape, Tensor, Var};
use flowpat_core::rng::{rng_from, Rng};
use rand::seq::index::sample;
use rand::Rng as _;

pub const STEP: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-4;
/// Denominator floor so that gradients near zero are judged absolutely.
const FLOOR: f64 = 1e-6;
/// Coordinates sampled per tensor.
const COORDS: usize = 24;

#[derive(Debug, Clone)]
pub struct Outcome {
    pub name: String,
    pub shape: Vec<usize>,
    pub max_rel: f64,
    pub checked: usize,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.max_rel < TOLERANCE
    }
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FLOOR)
}

type Forward<'a> = dyn Fn(&mut Ctx, Var) -> Result<Var> + 'a;

/// `sum(f(x) * w)` for fixed random `w`; returns the loss, the tape, the input
/// leaf and the loss node.
fn project(store: &mut ParamStore, x: &Tensor, weights: &[f64], mode: Mode, f: &Forward) -> (f64, Tape, Var, Var) {
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let mut rng = rng_from(0);
    let out = {
        let mut ctx = Ctx {
            tape: &mut tape,
            store,
            mode,
            rng: &mut rng,
        };
        f(&mut ctx, xv).expect("forward")
    };
    let loss = tape.sum_product(out, weights.to_vec()).expect("projection");
    (tape.value(loss).item(), tape, xv, loss)
}

fn pick(rng: &mut Rng, n: usize) -> Vec<usize> {
    if n <= COORDS {
        (0..n).collect()
    } else {
        sample(rng, n, COORDS).into_vec()
    }
}

/// Compares analytic and numeric gradients for the input and every
/// trainable parameter of `store`.
pub fn check(name: &str, store: &mut ParamStore, x: Tensor, mode: Mode, seed: u64, f: &Forward) -> Outcome {
    let mut rng = rng_from(seed ^ 0xabcd);
    let out_len = {
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let mut r = rng_from(0);
        let mut ctx = Ctx {
            tape: &mut tape,
            store,
            mode,
            rng: &mut r,
        };
        let y = f(&mut ctx, xv).expect("forward");
        tape.value(y).len()
    };
    let weights: Vec<f64> = (0..out_len).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let (_, tape, xv, root) = project(store, &x, &weights, mode, f);
    let grads = tape.backward(root);
    let dx = grads.wrt(xv).expect("input gradient").clone();
    store.zero_grad();
    grads.accumulate_into(store);

    let mut max_rel: f64 = 0.0;
    let mut checked = 0;
    for i in pick(&mut rng, x.len()) {
        let mut plus = x.clone();
        plus.data_mut()[i] += STEP;
        let mut minus = x.clone();
        minus.data_mut()[i] -= STEP;
        let num = (project(store, &plus, &weights, mode, f).0 - project(store, &minus, &weights, mode, f).0) / (2.0 * STEP);
        max_rel = max_rel.max(rel_err(dx.data()[i], num));
        checked += 1;
    }
    let ids: Vec<_> = store.iter().filter(|(_, p)| p.requires_grad).map(|(id, _)| id).collect();
    for id in ids {
        let analytic = store.get(id).grad.clone();
        for i in pick(&mut rng, analytic.len()) {
            let orig = store.get(id).value.data()[i];
            store.get_mut(id).value.data_mut()[i] = orig + STEP;
            let lp = project(store, &x, &weights, mode, f).0;
            store.get_mut(id).value.data_mut()[i] = orig - STEP;
            let lm = project(store, &x, &weights, mode, f).0;
            store.get_mut(id).value.data_mut()[i] = orig;
            let num = (lp - lm) / (2.0 * STEP);
            max_rel = max_rel.max(rel_err(analytic.data()[i], num));
            checked += 1;
        }
    }
    Outcome {
        name: name.to_string(),
        shape: x.shape().to_vec(),
        max_rel,
        checked,
    }
}

fn uniform(rng: &mut Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect()).unwrap()
}

/// Values bounded away from zero by `gap`, for kinked activations.
fn away_from_zero(rng: &mut Rng, shape: &[usize], gap: f64) -> Tensor {
    let mut t = uniform(rng, shape);
    for v in t.data_mut() {
        if v.abs() < gap {
            *v = if *v < 0.0 { -gap - 0.1 } else { gap + 0.1 };
        }
    }
    t
}

/// Shuffled distinct values so that every pooling window has a clear maximum.
fn distinct(rng: &mut Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n).map(|i| (i as f64 - n as f64 / 2.0) * 0.05).collect();
    for i in (1..n).rev() {
        v.swap(i, rng.gen_range(0..=i));
    }
    Tensor::new(shape, v).unwrap()
}

pub const SHAPES_PER_LAYER: u64 = 5;

/// Every layer on `SHAPES_PER_LAYER` random shapes.
pub fn full_suite() -> Vec<Outcome> {
    let mut out = Vec::new();
    for s in 0..SHAPES_PER_LAYER {
        out.extend(layer_checks(s));
    }
    out
}

pub fn layer_checks(seed: u64) -> Vec<Outcome> {
    let mut rng = rng_from(1000 + seed);
    let mut out = Vec::new();

    // conv1d, including even kernels and strides
    {
        let (b, ci, co) = (rng.gen_range(1..4), rng.gen_range(1..4), rng.gen_range(1..5));
        let k = rng.gen_range(1..7);
        let stride = rng.gen_range(1..4);
        let len = rng.gen_range(k.max(4)..20);
        let mut store = ParamStore::new();
        let conv = Conv1d::new(&mut store, "c", ci, co, k, stride, true, &mut rng);
        let x = uniform(&mut rng, &[b, ci, len]);
        out.push(check(&format!("conv1d k{k} s{stride}"), &mut store, x, Mode::Train, seed, &|c, x| conv.forward(c, x)));
    }
    // fully connected
    {
        let (b, n_in, n_out) = (rng.gen_range(1..5), rng.gen_range(1..9), rng.gen_range(1..9));
        let mut store = ParamStore::new();
        let fc = Linear::new(&mut store, "fc", n_in, n_out, &mut rng);
        let x = uniform(&mut rng, &[b, n_in]);
        out.push(check("linear", &mut store, x, Mode::Train, seed, &|c, x| fc.forward(c, x)));
    }
    // batch norm, batch statistics and running statistics
    for mode in [Mode::Train, Mode::Eval] {
        let (b, ch, len) = (rng.gen_range(2..5), rng.gen_range(1..4), rng.gen_range(1..9));
        let mut store = ParamStore::new();
        let bn = BatchNorm1d::new(&mut store, "bn", ch);
        for (i, v) in store.iter_mut().enumerate() {
            if v.requires_grad {
                for x in v.value.data_mut() {
                    *x += 0.3 * (i as f64 + 1.0);
                }
            }
        }
        let x = uniform(&mut rng, &[b, ch, len]);
        out.push(check(&format!("batch_norm {mode:?}"), &mut store, x, mode, seed, &|c, x| bn.forward(c, x)));
    }
    {
        let (b, ch) = (rng.gen_range(2..6), rng.gen_range(1..5));
        let mut store = ParamStore::new();
        let bn = BatchNorm1d::new(&mut store, "bn", ch);
        let x = uniform(&mut rng, &[b, ch]);
        out.push(check("batch_norm [B,C]", &mut store, x, Mode::Train, seed, &|c, x| bn.forward(c, x)));
    }
    // pooling
    {
        let shape = [rng.gen_range(1..3), rng.gen_range(1..4), rng.gen_range(2..12)];
        let x = distinct(&mut rng, &shape);
        out.push(check("max_pool1d k2", &mut ParamStore::new(), x, Mode::Train, seed, &|c, x| c.tape.max_pool1d(x, 2)));
        let x = uniform(&mut rng, &shape);
        out.push(check("global_avg_pool1d", &mut ParamStore::new(), x, Mode::Train, seed, &|c, x| c.tape.global_avg_pool1d(x)));
    }
    // activations
    {
        let shape = [rng.gen_range(1..4), rng.gen_range(1..4), rng.gen_range(1..8)];
        let x = uniform(&mut rng, &shape);
        out.push(check("swish", &mut ParamStore::new(), x.clone(), Mode::Train, seed, &|c, x| Ok(c.tape.swish(x))));
        out.push(check("sigmoid", &mut ParamStore::new(), x, Mode::Train, seed, &|c, x| Ok(c.tape.sigmoid(x))));
        let x = away_from_zero(&mut rng, &shape, 1e-2);
        out.push(check("relu", &mut ParamStore::new(), x, Mode::Train, seed, &|c, x| Ok(c.tape.relu(x))));
        let x = uniform(&mut rng, &[shape[0], shape[2] + 1]);
        out.push(check("softmax", &mut ParamStore::new(), x, Mode::Train, seed, &|c, x| c.tape.softmax(x)));
    }
    // squeeze-and-excitation
    {
        let (b, ch, len) = (rng.gen_range(1..4), rng.gen_range(1..9), rng.gen_range(1..10));
        let r = rng.gen_range(1..5);
        let mut store = ParamStore::new();
        let se = SeBlock::new(&mut store, "se", ch, r, &mut rng);
        let x = uniform(&mut rng, &[b, ch, len]);
        out.push(check(&format!("se_block r{r}"), &mut store, x, Mode::Train, seed, &|c, x| se.forward(c, x)));
    }
    // residual basic block, cycling through its variants
    {
        let bn = seed.is_multiple_of(2);
        let stride = if seed.is_multiple_of(3) { 2 } else { 1 };
        let ci = rng.gen_range(1..5);
        let co = if stride == 2 || seed % 4 == 1 { ci + rng.gen_range(1..3) } else { ci };
        let cfg = SENetConfig {
            kernel_size: [3, 5, 8][seed as usize % 3],
            use_batch_norm: bn,
            se_reduction: 2,
            ..Default::default()
        };
        let (b, len) = (rng.gen_range(2..4), rng.gen_range(6..14));
        let mut store = ParamStore::new();
        let block = BasicBlock::new(&mut store, "blk", ci, co, stride, &cfg, &mut rng);
        let x = uniform(&mut rng, &[b, ci, len]);
        let name = format!("basic_block bn={bn} stride={stride} {ci}->{co} k{}", cfg.kernel_size);
        out.push(check(&name, &mut store, x, Mode::Train, seed, &|c, x| block.forward(c, x, false)));
    }
    out
}
