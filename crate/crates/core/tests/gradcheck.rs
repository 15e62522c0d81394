//! Central finite-difference checks for every differentiable tape op.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vulngraph::autodiff::{Tape, Tensor, Var};

const STEP: f64 = 1e-5;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Checks d f / d inputs against central differences; returns the max relative error.
fn check(inputs: &[Tensor], f: &dyn Fn(&mut Tape, &[Var]) -> Var) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars);
    let grads = tape.backward(out).unwrap();
    let eval = |ins: &[Tensor]| {
        let mut tp = Tape::new();
        let vs: Vec<Var> = ins.iter().map(|t| tp.param(t.clone())).collect();
        let o = f(&mut tp, &vs);
        tp.value(o).item()
    };
    let mut worst: f64 = 0.0;
    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[k]).cloned().unwrap_or_else(|| Tensor::zeros(input.rows(), input.cols()));
        for j in 0..input.len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[j] += STEP;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[j] -= STEP;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * STEP);
            worst = worst.max(rel_err(analytic.data()[j], numeric));
        }
    }
    worst
}

fn rand_t(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    Tensor::uniform(r, c, 1.0, rng)
}

/// Contracts an op output with a fixed random weight so every output entry matters.
fn contract(tape: &mut Tape, v: Var, seed: u64) -> Var {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = tape.value(v).shape();
    let w = tape.constant(Tensor::uniform(shape[0], shape[1], 1.0, &mut rng));
    let h = tape.hadamard(v, w).unwrap();
    tape.sum(h)
}

#[test]
fn hadamard_sum_gradient_is_other_operand() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = rand_t(&mut rng, 4, 5);
    let b = rand_t(&mut rng, 4, 5);
    let mut tape = Tape::new();
    let va = tape.param(a.clone());
    let vb = tape.param(b.clone());
    let h = tape.hadamard(va, vb).unwrap();
    let s = tape.sum(h);
    let g = tape.backward(s).unwrap();
    assert_eq!(g.get(va).unwrap(), &b);
    assert!(check(&[a, b], &|t, v| {
        let h = t.hadamard(v[0], v[1]).unwrap();
        t.sum(h)
    }) < 1e-4);
}

#[test]
fn every_op_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..5u64 {
        let (r, c, k) = (rng.gen_range(1..5), rng.gen_range(1..5), rng.gen_range(1..5));
        let a = rand_t(&mut rng, r, c);
        let b = rand_t(&mut rng, r, c);
        let m = rand_t(&mut rng, c, k);
        let row = rand_t(&mut rng, 1, c);
        let pos = a.map(|x| x.abs() + 0.5);
        let idx: Vec<usize> = (0..r + 2).map(|_| rng.gen_range(0..r)).collect();
        let targets: Vec<f64> = (0..r).map(|_| rng.gen_range(0..2) as f64).collect();
        let labels: Vec<u8> = (0..r.max(3)).map(|i| (i % 2) as u8).collect();
        let tri = rand_t(&mut rng, labels.len(), c);
        let col = rand_t(&mut rng, r, 1);

        type F = Box<dyn Fn(&mut Tape, &[Var]) -> Var>;
        let cases: Vec<(&str, Vec<Tensor>, F)> = vec![
            ("matmul", vec![a.clone(), m.clone()], Box::new(move |t, v| { let o = t.matmul(v[0], v[1]).unwrap(); contract(t, o, trial) })),
            ("add", vec![a.clone(), b.clone()], Box::new(move |t, v| { let o = t.add(v[0], v[1]).unwrap(); contract(t, o, trial) })),
            ("add_row", vec![a.clone(), row.clone()], Box::new(move |t, v| { let o = t.add_row(v[0], v[1]).unwrap(); contract(t, o, trial) })),
            ("sub", vec![a.clone(), b.clone()], Box::new(move |t, v| { let o = t.sub(v[0], v[1]).unwrap(); contract(t, o, trial) })),
            ("hadamard", vec![a.clone(), b.clone()], Box::new(move |t, v| { let o = t.hadamard(v[0], v[1]).unwrap(); contract(t, o, trial) })),
            ("scale", vec![a.clone()], Box::new(move |t, v| { let o = t.scale(v[0], -1.7); contract(t, o, trial) })),
            ("concat", vec![a.clone(), b.clone()], Box::new(move |t, v| { let o = t.concat(v[0], v[1]).unwrap(); contract(t, o, trial) })),
            ("slice_cols", vec![a.clone()], Box::new(move |t, v| { let c = t.value(v[0]).cols(); let o = t.slice_cols(v[0], c / 2, c).unwrap(); contract(t, o, trial) })),
            ("mean", vec![a.clone()], Box::new(move |t, v| { let o = t.mean(v[0]); contract(t, o, trial) })),
            ("sum_rows", vec![a.clone()], Box::new(move |t, v| { let o = t.sum_rows(v[0]); contract(t, o, trial) })),
            ("sum_cols", vec![a.clone()], Box::new(move |t, v| { let o = t.sum_cols(v[0]); contract(t, o, trial) })),
            ("sigmoid", vec![a.clone()], Box::new(move |t, v| { let o = t.sigmoid(v[0]); contract(t, o, trial) })),
            ("tanh", vec![a.clone()], Box::new(move |t, v| { let o = t.tanh(v[0]); contract(t, o, trial) })),
            ("relu", vec![a.clone()], Box::new(move |t, v| { let o = t.relu(v[0]); contract(t, o, trial) })),
            ("softmax", vec![a.clone()], Box::new(move |t, v| { let o = t.softmax(v[0]); contract(t, o, trial) })),
            ("log", vec![pos.clone()], Box::new(move |t, v| { let o = t.log(v[0]); contract(t, o, trial) })),
            ("gather_rows", vec![a.clone()], { let idx = idx.clone(); Box::new(move |t, v| { let o = t.gather_rows(v[0], &idx).unwrap(); contract(t, o, trial) }) }),
            ("scatter_add_rows", vec![rand_t(&mut rng, idx.len(), c)], { let idx = idx.clone(); Box::new(move |t, v| { let o = t.scatter_add_rows(v[0], &idx, r).unwrap(); contract(t, o, trial) }) }),
            ("bce_with_logits", vec![col.clone()], { let y = targets.clone(); Box::new(move |t, v| t.bce_with_logits(v[0], &y).unwrap()) }),
            ("triplet_margin", vec![tri.clone()], { let l = labels.clone(); Box::new(move |t, v| t.triplet_margin(v[0], &l, 0.5).unwrap()) }),
        ];
        for (name, inputs, f) in cases {
            let err = check(&inputs, f.as_ref());
            assert!(err < 1e-4, "{name} (trial {trial}): relative error {err:e}");
        }
    }
}
