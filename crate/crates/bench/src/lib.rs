//! Input generators for the criterion benches in `benches/`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use colloquy_core::gateway::EmbeddingVector;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit_vectors(rng: &mut impl Rng, count: usize, dim: usize) -> Vec<EmbeddingVector> {
    (0..count)
        .map(|_| {
            let raw: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            EmbeddingVector::normalized(raw).expect("non-zero with overwhelming probability")
        })
        .collect()
}

/// Formulation-like text of roughly `len` chars.
pub fn model_text(rng: &mut impl Rng, len: usize) -> String {
    const WORDS: &[&str] = &["minimize", "x_1", "+", "3", "y", "<=", "20", "subject", "to", "integer", "\n"];
    let mut out = String::new();
    while out.len() < len {
        out.push_str(WORDS[rng.random_range(0..WORDS.len())]);
        out.push(' ');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_seeded() {
        assert_eq!(unit_vectors(&mut rng(1), 3, 8), unit_vectors(&mut rng(1), 3, 8));
        assert_eq!(model_text(&mut rng(2), 50), model_text(&mut rng(2), 50));
        assert!(unit_vectors(&mut rng(3), 4, 16).iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
    }
}
