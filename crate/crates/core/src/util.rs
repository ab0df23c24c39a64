//! Small shared utilities: deterministic RNG, matrix helpers, grids.

use crate::{CMat, CVec};
use num_complex::Complex64;

/// SplitMix64 generator. Used wherever the library needs reproducible
/// randomized trials (seeded from configs); deterministic across platforms.
#[derive(Debug, Clone)]
pub struct SplitMix64(u64);

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform in [lo, hi).
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in [0, n).
    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    pub fn complex(&mut self) -> Complex64 {
        Complex64::new(self.range(-1.0, 1.0), self.range(-1.0, 1.0))
    }
}

/// `n` equispaced values in [start, end) (end excluded).
pub fn periodic_grid(n: usize, start: f64, end: f64) -> Vec<f64> {
    let step = (end - start) / n as f64;
    (0..n).map(|i| start + step * i as f64).collect()
}

/// `n` values from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let step = (b - a) / (n - 1) as f64;
    (0..n).map(|i| a + step * i as f64).collect()
}

/// Frobenius norm.
pub fn fro_norm(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Deviation from Hermitian symmetry, relative to the matrix norm.
pub fn hermitian_defect(m: &CMat) -> f64 {
    let scale = fro_norm(m).max(1e-300);
    fro_norm(&(m - m.adjoint())) / scale
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Random Haar-ish unitary built by Gram-Schmidt on a random complex matrix.
pub fn random_unitary(n: usize, rng: &mut SplitMix64) -> CMat {
    let mut cols: Vec<CVec> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v = CVec::from_fn(n, |_, _| rng.complex());
        for c in &cols {
            let proj = c.dotc(&v);
            v -= c * proj;
        }
        let norm = v.norm();
        if norm > 1e-8 {
            cols.push(v / Complex64::new(norm, 0.0));
        }
    }
    CMat::from_columns(&cols)
}

/// Random Hermitian matrix with the prescribed eigenvalues.
pub fn random_hermitian_with_spectrum(eigs: &[f64], rng: &mut SplitMix64) -> CMat {
    let n = eigs.len();
    let u = random_unitary(n, rng);
    let d = CMat::from_diagonal(&CVec::from_iterator(
        n,
        eigs.iter().map(|&x| Complex64::new(x, 0.0)),
    ));
    &u * d * u.adjoint()
}

/// Matrix exponential by scaling-and-squaring with a Taylor series.
/// Plain and robust for the small symbol matrices used here.
pub fn expm(m: &CMat) -> CMat {
    let n = m.nrows();
    let norm = fro_norm(m);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = m / Complex64::new(2f64.powi(squarings as i32), 0.0);
    let mut term = identity(n);
    let mut sum = identity(n);
    for k in 1..60 {
        term = &term * &scaled / Complex64::new(k as f64, 0.0);
        let t = fro_norm(&term);
        sum += &term;
        if t < 1e-18 * fro_norm(&sum).max(1.0) {
            break;
        }
    }
    let mut out = sum;
    for _ in 0..squarings {
        out = &out * &out;
    }
    out
}

/// FNV-1a digest of a byte string, hex-encoded. Used for config digests.
pub fn fnv1a_hex(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}
