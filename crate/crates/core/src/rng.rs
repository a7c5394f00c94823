//! Seeded random streams.
//!
//! Every random quantity is drawn from a ChaCha8 generator seeded with
//! `ChaCha8Rng::seed_from_u64(seed)` and switched to a fixed stream number,
//! so the matrix, the right-hand side and the solver's own draws for one seed
//! never share a stream. The ChaCha8 output is platform independent.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SolverRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Matrix = 1,
    Rhs = 2,
    Solver = 3,
    Hoffman = 4,
}

pub fn seeded(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
