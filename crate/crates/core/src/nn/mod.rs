//! ReLU network calculus and explicit constructions: exact realization,
//! plain and sparse concatenation, parallelization, identity networks,
//! approximate scalar and matrix multiplication and approximate matrix
//! inversion.

use alloc::string::String;
use alloc::vec::Vec;

pub mod inverse;
pub mod matrix;
pub mod mult;
pub mod network;

pub use inverse::{inversion_network, neumann_order, InversionPlan, InversionVariant};
pub use matrix::{mat, transpose_permutation, vec};
pub use mult::{matrix_mult_network, scalar_mult_network};
pub use network::{Layer, Network};

/// Audit record attached to a constructed network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkCertificate {
    /// Map the network approximates.
    pub target: String,
    /// Input set on which the tolerance is guaranteed.
    pub domain: String,
    /// Guaranteed sup-error on `domain`.
    pub tolerance: f64,
    /// Depth `L` of the attached network.
    pub depth: usize,
    /// Non-zero parameter count `M` of the attached network.
    pub params: usize,
    /// Named budget entries (orders, per-stage bounds).
    pub budget: Vec<(String, f64)>,
}

impl NetworkCertificate {
    /// True when `L` and `M` agree with `net`.
    pub fn matches(&self, net: &Network) -> bool {
        self.depth == net.depth() && self.params == net.num_params()
    }

    pub fn budget_value(&self, name: &str) -> Option<f64> {
        self.budget.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }
}
