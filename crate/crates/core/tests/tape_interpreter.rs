mod common;

use std::sync::Arc;

use common::{chacha, random_matrix};
use hetinfomax::numkit::{Matrix, SparsePattern, Tape, ValueId};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

type Rows = Vec<Vec<f64>>;

fn rows(m: &Matrix) -> Rows {
    m.row_iter().map(<[f64]>::to_vec).collect()
}

/// One step of a random expression, applied both on the tape and by hand.
enum Step {
    Sigmoid,
    Tanh,
    Softmax,
    Transpose,
    MatMul(Matrix),
    Add(Matrix),
}

fn random_step(r: &mut ChaCha8Rng, shape: (usize, usize)) -> Step {
    match r.random_range(0..6) {
        0 => Step::Sigmoid,
        1 => Step::Tanh,
        2 => Step::Softmax,
        3 => Step::Transpose,
        4 => {
            let k = r.random_range(1..=5);
            Step::MatMul(random_matrix(shape.1, k, 1.0, r))
        }
        _ => Step::Add(random_matrix(shape.0, shape.1, 1.0, r)),
    }
}

fn on_tape(t: &mut Tape, x: ValueId, step: &Step) -> ValueId {
    match step {
        Step::Sigmoid => t.sigmoid(x),
        Step::Tanh => t.tanh(x),
        Step::Softmax => t.row_softmax(x),
        Step::Transpose => t.transpose(x),
        Step::MatMul(m) => {
            let c = t.constant(m.clone()).unwrap();
            t.matmul(x, c)
        }
        Step::Add(m) => {
            let c = t.constant(m.clone()).unwrap();
            t.add(x, c)
        }
    }
    .unwrap()
}

fn by_hand(x: &Rows, step: &Step) -> Rows {
    let map = |f: fn(f64) -> f64| x.iter().map(|r| r.iter().map(|&v| f(v)).collect()).collect();
    match step {
        Step::Sigmoid => map(|v| 1.0 / (1.0 + (-v).exp())),
        Step::Tanh => map(f64::tanh),
        Step::Softmax => x
            .iter()
            .map(|r| {
                let top = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = r.iter().map(|v| (v - top).exp()).collect();
                let s: f64 = e.iter().sum();
                e.iter().map(|v| v / s).collect()
            })
            .collect(),
        Step::Transpose => (0..x[0].len()).map(|j| x.iter().map(|r| r[j]).collect()).collect(),
        Step::MatMul(m) => x
            .iter()
            .map(|r| (0..m.cols()).map(|j| r.iter().enumerate().map(|(k, v)| v * m[(k, j)]).sum()).collect())
            .collect(),
        Step::Add(m) => x
            .iter()
            .enumerate()
            .map(|(i, r)| r.iter().enumerate().map(|(j, v)| v + m[(i, j)]).collect())
            .collect(),
    }
}

#[test]
fn random_three_step_expressions_match_a_direct_interpreter() {
    for trial in 0..200 {
        let mut r = chacha(trial);
        let (n, m) = (r.random_range(1..=6), r.random_range(1..=6));
        let x = random_matrix(n, m, 1.5, &mut r);
        let mut t = Tape::new();
        let mut id = t.constant(x.clone()).unwrap();
        let mut want = rows(&x);
        for _ in 0..3 {
            let shape = t.value(id).shape();
            let step = random_step(&mut r, shape);
            id = on_tape(&mut t, id, &step);
            want = by_hand(&want, &step);
        }
        let got = t.evaluate(id).unwrap();
        let diff = rows(got)
            .iter()
            .flatten()
            .zip(want.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff <= 1e-12, "trial {trial}: {diff}");
    }
}

#[test]
fn rebuilding_a_tape_is_bit_identical() {
    let build = || {
        let mut r = chacha(5);
        let mut t = Tape::new();
        let x = t.constant(random_matrix(5, 4, 1.0, &mut r)).unwrap();
        let w = t.constant(random_matrix(4, 3, 1.0, &mut r)).unwrap();
        let y = t.matmul(x, w).unwrap();
        let y = t.elu(y).unwrap();
        let y = t.row_softmax(y).unwrap();
        let s = t.sum(y).unwrap();
        let v = t.evaluate(y).unwrap().clone();
        let bits: Vec<u64> = v.as_slice().iter().map(|f| f.to_bits()).collect();
        (bits, t.value(s).scalar().to_bits())
    };
    assert_eq!(build(), build());
}

#[test]
fn masked_softmax_is_exactly_zero_off_pattern() {
    for trial in 0..50 {
        let mut r = chacha(300 + trial);
        let (n, m) = (r.random_range(1..=8), r.random_range(1..=8));
        let lists: Vec<Vec<usize>> = (0..n)
            .map(|_| {
                let mut l: Vec<usize> = (0..m).filter(|_| r.random_bool(0.5)).collect();
                if l.is_empty() {
                    l.push(r.random_range(0..m));
                }
                l
            })
            .collect();
        let pattern = Arc::new(SparsePattern::from_rows(m, &lists));
        let mut t = Tape::new();
        let logits = t.constant(random_matrix(pattern.nnz(), 1, 3.0, &mut r)).unwrap();
        let alpha = t.masked_row_softmax(logits, &pattern).unwrap();
        let values = t.value(alpha).as_slice().to_vec();
        // Densify through the pattern: off-pattern entries are never written.
        let mut dense = vec![vec![0.0; m]; n];
        for (i, list) in lists.iter().enumerate() {
            for (e, &j) in pattern.row_range(i).zip(list) {
                dense[i][j] = values[e];
            }
        }
        for (i, list) in lists.iter().enumerate() {
            let total: f64 = dense[i].iter().sum();
            assert!((total - 1.0).abs() <= 1e-12);
            for j in 0..m {
                if !list.contains(&j) {
                    assert_eq!(dense[i][j], 0.0);
                }
            }
        }
    }
}
