#![allow(dead_code)]

use std::sync::Arc;

use madrop_core::{build_mask, SchemeKind, SchemeSpec, TransitionMatrix};
use proptest::prelude::*;

pub fn spec(scheme: SchemeKind, b: usize, n: usize, theta: f64) -> SchemeSpec {
    SchemeSpec::new(scheme, b, n, theta, 0.5).unwrap()
}

pub fn matrix(spec: &SchemeSpec, rows: &[Vec<f64>]) -> TransitionMatrix {
    TransitionMatrix::from_rows(Arc::new(build_mask(spec)), rows).unwrap()
}

/// Reference matrix for B=1, N=2, drop target 0.02.
pub fn q_bst_rows() -> Vec<Vec<f64>> {
    vec![
        vec![0.69, 0.31, 0.0, 0.0],
        vec![0.76, 0.17, 0.07, 0.0],
        vec![0.67, 0.27, 0.0, 0.06],
        vec![0.64, 0.36, 0.0, 0.0],
    ]
}

/// Fills every allowed entry of `spec` from `weights` (cycled), normalizing
/// each row. Zero weights produce structural-looking zeros; row M always
/// keeps some scheduling mass.
pub fn matrix_from_weights(spec: &SchemeSpec, weights: &[f64]) -> TransitionMatrix {
    let structure = Arc::new(build_mask(spec));
    let m = structure.termination();
    let n = structure.n_states();
    let mut rows = vec![vec![0.0; n]; n];
    let mut k = 0;
    let mut next = || {
        let w = weights[k % weights.len()];
        k += 1;
        w
    };
    for (p, row) in rows.iter_mut().enumerate() {
        let mut cells: Vec<usize> = structure.targets(p).to_vec();
        if p < m {
            cells.push(p + 1);
        }
        let mut w: Vec<f64> = cells.iter().map(|_| next()).collect();
        if p == m && w.iter().all(|v| *v == 0.0) {
            w[0] = 1.0;
        }
        if w.iter().all(|v| *v == 0.0) {
            *w.last_mut().unwrap() = 1.0;
        }
        let total: f64 = w.iter().sum();
        for (c, v) in cells.iter().zip(w) {
            row[*c] = v / total;
        }
    }
    TransitionMatrix::from_rows(structure, &rows).unwrap()
}

pub fn arb_scheme() -> impl Strategy<Value = SchemeKind> {
    prop_oneof![Just(SchemeKind::Best), Just(SchemeKind::Ooa), Just(SchemeKind::Sse)]
}

/// Random structure with `B + N <= 7` and a random valid matrix on it.
pub fn arb_matrix() -> impl Strategy<Value = (SchemeSpec, TransitionMatrix)> {
    (arb_scheme(), 0usize..=4, 0usize..=3, prop::collection::vec(prop_oneof![4 => 0.01f64..1.0, 1 => Just(0.0)], 48))
        .prop_filter("needs at least one state transition", |(_, b, n, _)| b + n >= 1)
        .prop_map(|(scheme, b, n, w)| {
            let s = spec(scheme, b, n, 0.1);
            let q = matrix_from_weights(&s, &w);
            (s, q)
        })
}

/// Stationary law by power iteration of the lazy chain `(I + Q) / 2`,
/// started from the empty state.
pub fn power_stationary(q: &TransitionMatrix) -> Vec<f64> {
    let n = q.n_states();
    let mut pi = vec![0.0; n];
    pi[0] = 1.0;
    for _ in 0..200_000 {
        let mut next = vec![0.0; n];
        for s in 0..n {
            for t in 0..n {
                next[t] += 0.5 * pi[s] * q.get(s, t);
            }
            next[s] += 0.5 * pi[s];
        }
        let diff: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if diff < 1e-15 {
            break;
        }
    }
    pi
}

/// Composite Simpson rule with `n` (even) panels. The end values are taken
/// just inside `[a, b]` so jumps at the ends do not leak in.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a + 1e-9 * h) + f(b - 1e-9 * h);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Mean and batch-means standard error of a correlated sample path.
pub fn batch_mean_se(xs: &[f64], batches: usize) -> (f64, f64) {
    let len = xs.len() / batches;
    let means: Vec<f64> = (0..batches).map(|b| xs[b * len..(b + 1) * len].iter().sum::<f64>() / len as f64).collect();
    let mean = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (mean, (var / batches as f64).sqrt())
}
