//! Seeded fixtures shared by the benchmarks.

use paat::encoder::{BiLstmParams, LstmDirection};
use paat::{Document, Matrix, PaatConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
    Matrix::random_uniform(rows, cols, 1.0, &mut rng(seed))
}

pub fn bilstm(input: usize, hidden: usize, seed: u64) -> BiLstmParams {
    let mut r = rng(seed);
    let mut dir = || LstmDirection {
        w_input: Matrix::random_uniform(4 * hidden, input, 0.3, &mut r),
        w_hidden: Matrix::random_uniform(4 * hidden, hidden, 0.3, &mut r),
        bias: Matrix::random_uniform(4 * hidden, 1, 0.3, &mut r),
    };
    BiLstmParams {
        forward: dir(),
        backward: dir(),
    }
}

/// A document shaped like the dispersed preset: 600 tokens, a few labels.
pub fn document(config: &PaatConfig, len: usize, seed: u64) -> Document {
    let mut r = rng(seed);
    Document {
        id: format!("bench{seed}"),
        tokens: (0..len).map(|_| r.gen_range(3..config.vocab_size as u32)).collect(),
        gold: vec![0, 3, 7],
    }
}
