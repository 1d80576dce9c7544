//! Low-discrepancy probe points (Halton sequence).

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while index > 0 {
        out += f * (index % base) as f64;
        index /= base;
        f *= inv;
    }
    out
}

/// Halton points in [0,1)^dim, skipping the first `offset` indices.
#[derive(Debug, Clone)]
pub struct Halton {
    dim: usize,
    next: u64,
}

impl Halton {
    pub fn new(dim: usize, offset: u64) -> Self {
        assert!(dim <= PRIMES.len(), "Halton supports at most {} dimensions", PRIMES.len());
        Self { dim, next: offset + 1 }
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        let i = self.next;
        self.next += 1;
        PRIMES[..self.dim].iter().map(|&b| radical_inverse(i, b)).collect()
    }
}
