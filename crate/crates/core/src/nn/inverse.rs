//! Approximate inversion `A ↦ (Id − A)^{-1}` for `‖A‖₂ ≤ 1 − δ` by a
//! truncated Neumann series evaluated with repeated squaring:
//!
//! ```text
//! T_1 = Id + A,  B_1 = A A
//! T_{j+1} = T_j + T_j B_j,  B_{j+1} = B_j B_j      (j = 1, .., J−1)
//! T_j = Σ_{k < 2^j} A^k,  B_j = A^{2^j}
//! ```
//!
//! Every product is an approximate multiplication network whose inputs are
//! scaled by rigorous bounds of the current iterates, and the sawtooth order
//! is chosen from a forward error recursion so that truncation plus
//! multiplication error stays below the requested tolerance.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::matrix::{packed_index, packed_len};
use super::mult::{self, Product, ProductStack};
use super::network::Network;
use super::NetworkCertificate;
use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Symmetric inputs are handled in packed upper-triangular form, which halves
/// the work and makes outputs exactly symmetric; the general variant computes
/// every entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InversionVariant {
    General,
    Symmetric,
}

/// Truncation order `m(θ, δ) = ⌈log(θδ/2) / log(1 − δ)⌉`.
pub fn neumann_order(theta: f64, delta: f64) -> Result<usize> {
    check_theta_delta(theta, delta)?;
    let m = libm::ceil(libm::log(0.5 * theta * delta) / libm::log(1.0 - delta));
    Ok(if m < 0.0 { 0 } else { m as usize })
}

fn check_theta_delta(theta: f64, delta: f64) -> Result<()> {
    if !(theta > 0.0 && theta < 0.25) {
        return Err(Error::InvalidTolerance(format!("θ must lie in (0, 1/4), got {theta}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidTolerance(format!("δ must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

/// Error budget of an inversion network.
#[derive(Debug, Clone, PartialEq)]
pub struct InversionPlan {
    pub n: usize,
    pub delta: f64,
    pub theta: f64,
    pub variant: InversionVariant,
    /// Neumann truncation order.
    pub neumann_order: usize,
    /// Number of factors `J`; the series is summed up to `2^J − 1`.
    pub stages: usize,
    /// Sawtooth order of every approximate multiplication.
    pub mult_order: usize,
    /// `‖(Id − A)^{-1} − T_J‖₂ ≤ (1−δ)^{2^J} / δ`.
    pub truncation_bound: f64,
    /// Bound on `‖T̃_J − T_J‖_F` from the forward recursion.
    pub multiplication_bound: f64,
    /// Entry bounds `(Z_T, Z_B)` used for the products of each stage; the
    /// first stage only squares `A` and has `Z_T = 0`.
    pub stage_bounds: Vec<(f64, f64)>,
}

impl InversionPlan {
    pub fn new(n: usize, delta: f64, theta: f64, variant: InversionVariant) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGeometry("inversion needs n ≥ 1".into()));
        }
        let m = neumann_order(theta, delta)?;
        let mut stages = 1;
        while (1usize << stages) < m + 1 {
            stages += 1;
        }
        let q = 1.0 - delta;
        let truncation_bound = libm::pow(q, libm::pow(2.0, stages as f64)) / delta;
        let budget = theta - truncation_bound;
        for order in 0..=mult::MAX_ORDER {
            let (bound, stage_bounds) = forward_bounds(n, q, stages, order, variant);
            if bound <= budget {
                return Ok(Self {
                    n,
                    delta,
                    theta,
                    variant,
                    neumann_order: m,
                    stages,
                    mult_order: order,
                    truncation_bound,
                    multiplication_bound: bound,
                    stage_bounds,
                });
            }
        }
        Err(Error::InvalidTolerance(format!("θ = {theta} is not reachable for n = {n}, δ = {delta}")))
    }

    /// Depth of the resulting network.
    pub fn depth(&self) -> usize {
        if self.stages == 1 {
            1
        } else {
            self.stages * (self.mult_order + 1) + 1
        }
    }

    /// Guaranteed spectral error on the input class.
    pub fn error_bound(&self) -> f64 {
        self.truncation_bound + self.multiplication_bound
    }
}

/// Returns the final bound on `‖T̃_J − T_J‖_F` and the per-stage entry bounds.
fn forward_bounds(n: usize, q: f64, stages: usize, order: usize, variant: InversionVariant) -> (f64, Vec<(f64, f64)>) {
    if stages == 1 {
        return (0.0, Vec::new());
    }
    let eps = mult::square_error(order);
    let n2 = (n * n) as f64;
    let mirror = match variant {
        InversionVariant::General => 1.0,
        InversionVariant::Symmetric => libm::sqrt(2.0),
    };
    let delta = 1.0 - q;
    let mut bounds = Vec::with_capacity(stages);
    // Entries of A are bounded by ‖A‖₂ ≤ q.
    bounds.push((0.0, q));
    let mut e = n2 * q * q * eps;
    let mut f = 0.0f64;
    for j in 1..stages {
        // ‖B_j‖₂ ≤ q^{2^j}, ‖T_j‖₂ ≤ (1 − q^{2^j}) / δ.
        let x = libm::pow(q, libm::pow(2.0, j as f64));
        let t = (1.0 - x) / delta;
        let zb = x + e;
        let zt = t + f;
        bounds.push((zt, zb));
        let f_next = f + mirror * ((t + f) * e + f * x) + n2 * zt * zb * eps;
        let e_next = e * (2.0 * x + e) + n2 * zb * zb * eps;
        f = f_next;
        e = e_next;
    }
    (f, bounds)
}

/// Layout of the iterates inside the network.
struct Layout {
    n: usize,
    variant: InversionVariant,
}

impl Layout {
    fn len(&self) -> usize {
        match self.variant {
            InversionVariant::General => self.n * self.n,
            InversionVariant::Symmetric => packed_len(self.n),
        }
    }

    fn index(&self, i: usize, j: usize) -> usize {
        match self.variant {
            InversionVariant::General => i + j * self.n,
            InversionVariant::Symmetric => packed_index(i, j),
        }
    }

    /// Entries `(i, j)` stored by the layout, in storage order.
    fn entries(&self) -> Vec<(usize, usize)> {
        let n = self.n;
        let mut out = Vec::with_capacity(self.len());
        for j in 0..n {
            for i in 0..n {
                if self.variant == InversionVariant::General || i <= j {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// Affine map from `vec(A)` to stored `A`, or to `T_1 = Id + A` when no
/// product stage follows.
fn initial_layer(lay: &Layout, with_identity: bool) -> Result<Network> {
    let n = lay.n;
    let len = lay.len();
    let mut t = Vec::with_capacity(len);
    let mut bias = vec![0.0; len];
    for (i, j) in lay.entries() {
        let s = lay.index(i, j);
        t.push((s, i + j * n, 1.0));
        if with_identity && i == j {
            bias[s] = 1.0;
        }
    }
    Network::affine(SparseMatrix::from_triplets(len, n * n, t)?, bias)
}

/// First stage: stored `A` to `(T_1, B_1) = (Id + A, A A)`.
fn first_stage(lay: &Layout, zb: f64, order: usize) -> Result<Network> {
    let n = lay.n;
    let len = lay.len();
    let entries = lay.entries();
    let mut products = Vec::with_capacity(entries.len() * n);
    for &(i, j) in &entries {
        for p in 0..n {
            products.push(Product { x: lay.index(i, p), y: lay.index(p, j), zx: zb, zy: zb });
        }
    }
    let carry: Vec<usize> = (0..len).collect();
    let stack = ProductStack::new(len, &products, &carry, order)?;
    let mut rows = Vec::with_capacity(2 * len);
    let mut bias = vec![0.0; 2 * len];
    for (s, &(i, j)) in entries.iter().enumerate() {
        let mut row = Vec::with_capacity(2);
        stack.carry_terms(s, 1.0, &mut row);
        rows.push(row);
        if i == j {
            bias[s] = 1.0;
        }
    }
    for s in 0..len {
        let mut row = Vec::with_capacity(6 * n);
        for p in 0..n {
            stack.product_terms(s * n + p, 1.0, &mut row);
        }
        rows.push(row);
    }
    stack.finish(rows, bias)
}

/// Update `(T_j, B_j) ↦ (T_j + T_j B_j, B_j B_j)`; the last stage only produces `T`.
fn stage_network(lay: &Layout, zt: f64, zb: f64, order: usize, last: bool) -> Result<Network> {
    let n = lay.n;
    let len = lay.len();
    let entries = lay.entries();
    let mut products = Vec::with_capacity(entries.len() * n * if last { 1 } else { 2 });
    for &(i, j) in &entries {
        for p in 0..n {
            products.push(Product { x: lay.index(i, p), y: len + lay.index(p, j), zx: zt, zy: zb });
        }
    }
    if !last {
        for &(i, j) in &entries {
            for p in 0..n {
                products.push(Product { x: len + lay.index(i, p), y: len + lay.index(p, j), zx: zb, zy: zb });
            }
        }
    }
    let carry: Vec<usize> = (0..len).collect();
    let stack = ProductStack::new(2 * len, &products, &carry, order)?;
    let out_len = if last { len } else { 2 * len };
    let mut rows = Vec::with_capacity(out_len);
    for s in 0..len {
        let mut row = Vec::with_capacity(6 * n + 2);
        stack.carry_terms(s, 1.0, &mut row);
        for p in 0..n {
            stack.product_terms(s * n + p, 1.0, &mut row);
        }
        rows.push(row);
    }
    if !last {
        let off = len * n;
        for s in 0..len {
            let mut row = Vec::with_capacity(6 * n);
            for p in 0..n {
                stack.product_terms(off + s * n + p, 1.0, &mut row);
            }
            rows.push(row);
        }
    }
    stack.finish(rows, vec![0.0; out_len])
}

/// Read-out from stored `T` to `vec` of the full matrix.
fn final_layer(lay: &Layout) -> Network {
    let n = lay.n;
    let mut t = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            t.push((i + j * n, lay.index(i, j), 1.0));
        }
    }
    Network::linear(SparseMatrix::from_triplets(n * n, lay.len(), t).expect("indices in range"))
}

/// Builds the network of an inversion plan.
pub fn inversion_network_from_plan(plan: &InversionPlan) -> Result<Network> {
    let lay = Layout { n: plan.n, variant: plan.variant };
    let mut net = initial_layer(&lay, plan.stages == 1)?;
    for (j, &(zt, zb)) in plan.stage_bounds.iter().enumerate() {
        let stage = if j == 0 {
            first_stage(&lay, zb, plan.mult_order)?
        } else {
            stage_network(&lay, zt, zb, plan.mult_order, j + 1 == plan.stages)?
        };
        net = stage.compose(net)?;
    }
    final_layer(&lay).compose(net)
}

/// Network `vec(A) ↦ ≈ vec((Id − A)^{-1})` with spectral error at most `θ`
/// for every `A` with `‖A‖₂ ≤ 1 − δ` (closed ball). The symmetric variant
/// reads only the upper triangle of `A` and is meant for symmetric inputs.
pub fn inversion_network(n: usize, delta: f64, theta: f64, variant: InversionVariant) -> Result<(Network, NetworkCertificate)> {
    let plan = InversionPlan::new(n, delta, theta, variant)?;
    let net = inversion_network_from_plan(&plan)?;
    let cert = certificate(&plan, &net);
    Ok((net, cert))
}

pub(crate) fn certificate(plan: &InversionPlan, net: &Network) -> NetworkCertificate {
    let target = format!("vec(A) -> vec((Id - A)^-1), n = {}", plan.n);
    let domain: String = match plan.variant {
        InversionVariant::General => format!("||A||_2 <= {}", 1.0 - plan.delta),
        InversionVariant::Symmetric => format!("A symmetric, ||A||_2 <= {}", 1.0 - plan.delta),
    };
    NetworkCertificate {
        target,
        domain,
        tolerance: plan.theta,
        depth: net.depth(),
        params: net.num_params(),
        budget: vec![
            ("neumann_order".into(), plan.neumann_order as f64),
            ("stages".into(), plan.stages as f64),
            ("mult_order".into(), plan.mult_order as f64),
            ("truncation_bound".into(), plan.truncation_bound),
            ("multiplication_bound".into(), plan.multiplication_bound),
        ],
    }
}
