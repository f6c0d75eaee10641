#![allow(dead_code)]

use lodnn_core::fem::CoefficientField;
use lodnn_core::mesh::{Level, MeshHierarchy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_field(hier: &MeshHierarchy, alpha: f64, beta: f64, seed: u64) -> CoefficientField {
    let mut r = rng(seed);
    let n = hier.num_elements(Level::Eps);
    let v = (0..n).map(|_| r.gen_range(alpha..=beta)).collect();
    CoefficientField::new(hier, v, alpha, beta).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn rel_diff(a: &lodnn_core::dense::DenseMatrix, b: &lodnn_core::dense::DenseMatrix) -> f64 {
    let d = a.sub(b).unwrap();
    d.max_abs() / a.max_abs().max(b.max_abs()).max(1e-300)
}

/// Spectral norm from the eigenvalues of `AᵀA` (Jacobi), used as an oracle.
pub fn spec_norm(a: &lodnn_core::dense::DenseMatrix) -> f64 {
    let ata = a.transpose().matmul(a).unwrap();
    let ev = lodnn_core::dense::symmetric_eigenvalues(&ata).unwrap();
    ev.iter().cloned().fold(0.0f64, f64::max).sqrt()
}
