//! Reference implementations written independently of the crate.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use rand::Rng;

use colloquy_core::benchmark::AnswerVerdict;
use colloquy_core::executor::Objective;
use colloquy_core::gateway::EmbeddingVector;

pub fn unit_vector(rng: &mut impl Rng, dim: usize) -> EmbeddingVector {
    loop {
        let raw: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        if let Ok(v) = EmbeddingVector::normalized(raw) {
            return v;
        }
    }
}

/// `count` keys where roughly a fifth repeat an earlier key, so ties occur.
pub fn keys_with_ties(rng: &mut impl Rng, count: usize, dim: usize) -> Vec<EmbeddingVector> {
    let mut keys: Vec<EmbeddingVector> = Vec::with_capacity(count);
    for _ in 0..count {
        if !keys.is_empty() && rng.random_bool(0.2) {
            let j = rng.random_range(0..keys.len());
            keys.push(keys[j].clone());
        } else {
            keys.push(unit_vector(rng, dim));
        }
    }
    keys
}

/// Repeated linear scan: pick the highest unused score, first index wins ties.
pub fn scan_top_n(query: &EmbeddingVector, keys: &[EmbeddingVector], n: usize) -> Vec<usize> {
    let scores: Vec<f64> = keys
        .iter()
        .map(|k| query.values().iter().zip(k.values()).map(|(a, b)| a * b).sum())
        .collect();
    let mut used = vec![false; keys.len()];
    let mut out = Vec::new();
    while out.len() < n.min(keys.len()) {
        let mut best: Option<usize> = None;
        for (i, s) in scores.iter().enumerate() {
            if used[i] {
                continue;
            }
            if best.is_none_or(|b| *s > scores[b]) {
                best = Some(i);
            }
        }
        let b = best.expect("unused key left");
        used[b] = true;
        out.push(b);
    }
    out
}

pub fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

/// Exact verdict for the given tolerances, read as the rationals the f64
/// constants denote.
pub fn exact_verdict(pred: Objective, gt: f64, relative: f64, zero_absolute: f64) -> AnswerVerdict {
    let Objective::Value(p) = pred else { return AnswerVerdict::Failed };
    let (p, g) = (exact(p), exact(gt));
    let ok = if g.is_zero() {
        p.abs() <= exact(zero_absolute)
    } else {
        (p - &g).abs() <= exact(relative) * g.abs()
    };
    if ok {
        AnswerVerdict::Correct
    } else {
        AnswerVerdict::Incorrect
    }
}

/// True when the exact relative error lies within a relative 1e-9 of the
/// tolerance, where f64 division may round either way.
pub fn in_rounding_band(pred: f64, gt: f64, relative: f64) -> bool {
    if gt == 0.0 {
        return false;
    }
    let err = (exact(pred) - exact(gt)).abs() / exact(gt).abs();
    let tol = exact(relative);
    (err - &tol).abs() <= tol * exact(1e-9)
}

/// Debate fires when either side failed or the exact gap exceeds the tolerance.
pub fn exact_trigger(a: Objective, b: Objective, tolerance: f64) -> bool {
    match (a, b) {
        (Objective::Value(x), Objective::Value(y)) => (exact(x) - exact(y)).abs() > exact(tolerance),
        _ => true,
    }
}

/// Full-matrix edit distance over chars.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
        }
    }
    d[a.len()][b.len()]
}

pub fn normalized_edit_distance(a: &str, b: &str) -> BigRational {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return BigRational::zero();
    }
    BigRational::new(BigInt::from(edit_distance(a, b)), BigInt::from(longest))
}
