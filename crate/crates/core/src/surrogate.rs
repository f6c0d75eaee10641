//! Explicit ReLU surrogate of the local PG-LOD matrix of an interior patch.
//!
//! The network maps the coefficient values of a patch to `vec(S^pg_ω)` in
//! seven steps, each a small network, joined by sparse concatenation:
//!
//! ```text
//! 1. a            ↦ vec(S) = U a
//! 2. vec(S)       ↦ ≈ vec(S⁻¹)           rescaled inversion, tolerance θ
//! 3. vec(X)       ↦ vec(X Iᵀ)             n_ℓ copies of I, then a permutation
//! 4. vec(X Iᵀ)    ↦ vec(I X Iᵀ) = vec(Ŷ)  N_ℓ copies of I
//! 5. vec(Ŷ)       ↦ ≈ vec(Ŷ⁻¹)           rescaled inversion, tolerance γ
//! 6. vec(Z)       ↦ vec(Z I P_{ω,K})      N_ℓ copies of (I P_{ω,K})ᵀ, then a permutation
//! 7. vec(W)       ↦ vec(P_ωᵀ Iᵀ W)        2^d copies of P_ωᵀ Iᵀ
//! ```
//!
//! With `c_θ = v ‖P_{ω,K}‖ ‖P_ω‖ ‖I‖⁴ / V̂_inf²` and
//! `c_γ = max(1, v̂) ‖P_{ω,K}‖ ‖P_ω‖ ‖I‖²` the output error is at most
//! `c_θ θ + c_γ γ` in the spectral norm.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::dense::{symmetric_eigenvalues, Cholesky, DenseMatrix};
use crate::error::{check_dim, Error, Result};
use crate::exec::Executor;
use crate::fem::{self, CoefficientField, Load};
use crate::lod::{self, LocalProblem};
use crate::mesh::{Level, MeshHierarchy, Patch};
use crate::nn::{inversion_network, mat, transpose_permutation, InversionVariant, Network, NetworkCertificate};
use crate::sparse::SparseMatrix;

/// Relative outward padding of all estimated spectral bounds.
pub const SPECTRAL_PAD: f64 = 0.01;

/// Rescaling factors are this fraction of the inverse upper spectral bound.
pub const RESCALE_FACTOR: f64 = 0.99;

/// Default cap on the input size `n_ℓ²` of the inner inversion network.
pub const DEFAULT_MAX_INVERSION_INPUTS: usize = 10_000;

/// Mesh data that fixes the local operators of every interior patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SurrogateGeometry {
    pub dim: usize,
    pub n_coarse: usize,
    pub ell: usize,
    pub r_eps: usize,
    pub r_h: usize,
}

impl SurrogateGeometry {
    pub fn new(dim: usize, n_coarse: usize, ell: usize, r_eps: usize, r_h: usize) -> Result<Self> {
        let g = Self { dim, n_coarse, ell, r_eps, r_h };
        g.hierarchy()?;
        if ell == 0 {
            return Err(Error::InvalidGeometry("oversampling ℓ must be at least 1".into()));
        }
        if n_coarse < 2 * ell + 3 {
            return Err(Error::InvalidGeometry(format!(
                "no interior patch with ℓ = {ell} on {n_coarse} coarse elements per axis (need at least {})",
                2 * ell + 3
            )));
        }
        Ok(g)
    }

    pub fn of_hierarchy(hier: &MeshHierarchy, ell: usize) -> Result<Self> {
        Self::new(hier.dim(), hier.n_coarse(), ell, hier.r_eps(), hier.r_h())
    }

    pub fn hierarchy(&self) -> Result<MeshHierarchy> {
        MeshHierarchy::new(self.dim, self.n_coarse, self.r_eps, self.r_h)
    }

    /// The interior patch around the element `(ℓ+1, .., ℓ+1)`.
    pub fn reference_patch(&self) -> Result<Patch> {
        let hier = self.hierarchy()?;
        let mut k = [0; 3];
        for a in k.iter_mut().take(self.dim) {
            *a = self.ell + 1;
        }
        Patch::new(&hier, k, self.ell)
    }

    /// True when `patch` is an interior patch of this geometry.
    pub fn serves(&self, patch: &Patch) -> bool {
        patch.is_interior() && patch.ell() == self.ell && Self::of_hierarchy(patch.hierarchy(), self.ell).ok() == Some(*self)
    }
}

/// Class-wide spectral bounds and operator norms of one geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralBounds {
    /// Bounds on the spectrum of the patch stiffness `S`.
    pub v_inf: f64,
    pub v_sup: f64,
    /// Bounds on the spectrum of `Y = I S⁻¹ Iᵀ`.
    pub vhat_inf: f64,
    pub vhat_sup: f64,
    pub norm_interp: f64,
    pub norm_prolong: f64,
    pub norm_element_prolong: f64,
}

impl SpectralBounds {
    pub fn v_resc(&self) -> f64 {
        RESCALE_FACTOR / self.v_sup
    }

    pub fn vhat_resc(&self) -> f64 {
        RESCALE_FACTOR / self.vhat_sup
    }

    pub fn delta(&self) -> f64 {
        self.v_resc() * self.v_inf
    }

    pub fn delta_hat(&self) -> f64 {
        self.vhat_resc() * self.vhat_inf
    }

    /// Factor of θ in the end-to-end bound.
    pub fn c_theta(&self) -> f64 {
        let ni = self.norm_interp;
        self.v_resc() * self.norm_element_prolong * self.norm_prolong * ni * ni * ni * ni / (self.vhat_inf * self.vhat_inf)
    }

    /// Factor of γ in the end-to-end bound.
    pub fn c_gamma(&self) -> f64 {
        let ni = self.norm_interp;
        self.vhat_resc().max(1.0) * self.norm_element_prolong * self.norm_prolong * ni * ni
    }

    /// End-to-end spectral error bound for inner tolerances `θ`, `γ`.
    pub fn error_bound(&self, theta: f64, gamma: f64) -> f64 {
        self.c_theta() * theta + self.c_gamma() * gamma
    }

    /// Largest θ for which the spectrum of the perturbed `Ŷ` stays inside
    /// `[V̂_inf, V̂_sup]`.
    pub fn theta_cap(&self) -> f64 {
        let ni = self.norm_interp;
        let containment = 0.5 * SPECTRAL_PAD * self.vhat_inf / (self.v_resc() * ni * ni);
        let positivity = self.vhat_inf / (2.0 * self.v_resc() * ni * ni);
        containment.min(positivity).min(self.vhat_inf)
    }

    fn check(&self) -> Result<()> {
        let vals = [self.v_inf, self.v_sup, self.vhat_inf, self.vhat_sup, self.norm_interp, self.norm_prolong, self.norm_element_prolong];
        if vals.iter().all(|v| v.is_finite() && *v > 0.0) && self.v_inf <= self.v_sup && self.vhat_inf <= self.vhat_sup {
            Ok(())
        } else {
            Err(Error::InvalidTolerance(format!("degenerate spectral bounds {self:?}")))
        }
    }
}

fn check_bounds(alpha: f64, beta: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= beta && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidCoefficient(format!("bounds must satisfy 0 < alpha <= beta < inf, got [{alpha}, {beta}]")))
    }
}

/// Local operators of the reference patch.
struct Operators {
    patch: Patch,
    u: SparseMatrix,
    interp: SparseMatrix,
    prolong: SparseMatrix,
    element_prolong: DenseMatrix,
}

impl Operators {
    fn new(geometry: &SurrogateGeometry) -> Result<Self> {
        let patch = geometry.reference_patch()?;
        let u = fem::coefficient_to_stiffness_map(&patch)?;
        let interp = fem::quasi_interpolation(&patch)?;
        let (prolong, pk) = fem::prolongations(&patch)?;
        Ok(Self { patch, u, interp, prolong, element_prolong: pk.to_dense() })
    }

    fn stiffness(&self, value: f64) -> Result<DenseMatrix> {
        Ok(fem::assemble_stiffness_local(&self.patch, &vec![value; self.patch.num_eps_elements()])?.to_dense())
    }

    /// `Y = I S⁻¹ Iᵀ` for a constant coefficient.
    fn schur(&self, value: f64) -> Result<DenseMatrix> {
        let s_inv = Cholesky::new(&self.stiffness(value)?)?.inverse()?;
        let i = self.interp.to_dense();
        let y = i.matmul(&s_inv)?.matmul(&i.transpose())?;
        Ok(symmetrized(&y))
    }
}

fn symmetrized(a: &DenseMatrix) -> DenseMatrix {
    DenseMatrix::from_fn(a.rows(), a.cols(), |i, j| 0.5 * (a.get(i, j) + a.get(j, i)))
}

fn extreme_eigenvalues(a: &DenseMatrix) -> Result<(f64, f64)> {
    let ev = symmetric_eigenvalues(a)?;
    match (ev.first(), ev.last()) {
        (Some(lo), Some(hi)) => Ok((*lo, *hi)),
        _ => Err(Error::InvalidGeometry("empty operator".into())),
    }
}

/// Spectral bounds valid for every coefficient with values in `[α, β]`.
///
/// The quadratic form of `S` is monotone in the coefficient, so the extremal
/// eigenvalues are attained at the constant coefficients `α` and `β`; `Y`
/// is antitone. All bounds are padded outward by [`SPECTRAL_PAD`].
pub fn estimate_spectral_bounds(geometry: &SurrogateGeometry, alpha: f64, beta: f64) -> Result<SpectralBounds> {
    check_bounds(alpha, beta)?;
    let ops = Operators::new(geometry)?;
    spectral_bounds_of(&ops, alpha, beta)
}

fn spectral_bounds_of(ops: &Operators, alpha: f64, beta: f64) -> Result<SpectralBounds> {
    let (s_lo, _) = extreme_eigenvalues(&ops.stiffness(alpha)?)?;
    let (_, s_hi) = extreme_eigenvalues(&ops.stiffness(beta)?)?;
    let (y_lo, _) = extreme_eigenvalues(&ops.schur(beta)?)?;
    let (_, y_hi) = extreme_eigenvalues(&ops.schur(alpha)?)?;
    let b = SpectralBounds {
        v_inf: (1.0 - SPECTRAL_PAD) * s_lo,
        v_sup: (1.0 + SPECTRAL_PAD) * s_hi,
        vhat_inf: (1.0 - SPECTRAL_PAD) * y_lo,
        vhat_sup: (1.0 + SPECTRAL_PAD) * y_hi,
        norm_interp: ops.interp.to_dense().spectral_norm_exact(),
        norm_prolong: ops.prolong.to_dense().spectral_norm_exact(),
        norm_element_prolong: ops.element_prolong.spectral_norm_exact(),
    };
    b.check()?;
    Ok(b)
}

/// Splits `η` evenly between the two summands of the error bound, then
/// shrinks θ to [`SpectralBounds::theta_cap`]; both are kept below `η / 2`.
pub fn split_tolerances(eta: f64, bounds: &SpectralBounds) -> Result<(f64, f64)> {
    if !(eta > 0.0 && eta <= 0.25) {
        return Err(Error::InvalidTolerance(format!("η must lie in (0, 1/4], got {eta}")));
    }
    bounds.check()?;
    let theta = (0.5 * eta / bounds.c_theta()).min(bounds.theta_cap()).min(0.5 * eta);
    let gamma = (0.5 * eta / bounds.c_gamma()).min(0.5 * eta);
    if !(theta > 0.0 && gamma > 0.0) {
        return Err(Error::InvalidTolerance(format!("no admissible split for η = {eta}")));
    }
    Ok((theta, gamma))
}

/// Network `vec(M) ↦ vec(s · (c · M)⁻¹)` for symmetric `M` with spectrum in
/// `[lo, hi]`, where `c = 0.99 / hi` and `δ = c · lo`.
fn rescaled_inversion(n: usize, resc: f64, delta: f64, tol: f64) -> Result<(Network, NetworkCertificate)> {
    let n2 = n * n;
    let mut bias = vec![0.0; n2];
    for i in 0..n {
        bias[i + i * n] = 1.0;
    }
    let input = Network::affine(SparseMatrix::identity(n2).scaled(-resc), bias)?;
    let (inv, cert) = inversion_network(n, delta, tol, InversionVariant::Symmetric)?;
    let output = Network::linear(SparseMatrix::identity(n2).scaled(resc));
    Ok((output.compose(inv.sparse_compose(input)?)?, cert))
}

/// `k` parallel copies of `x ↦ W x`.
fn copies_of(w: &SparseMatrix, k: usize) -> Result<Network> {
    Network::linear(w.clone()).copies(k)
}

/// The seven step networks and the data they were built from.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub geometry: SurrogateGeometry,
    /// Steps 1 to 7 in application order.
    pub steps: Vec<Network>,
    pub bounds: SpectralBounds,
    pub eta: f64,
    pub theta: f64,
    pub gamma: f64,
    pub inner_certificates: [NetworkCertificate; 2],
}

/// Builds the seven step networks; refuses geometries with
/// `n_ℓ² > max_inversion_inputs`.
pub fn build_pipeline(
    geometry: &SurrogateGeometry,
    alpha: f64,
    beta: f64,
    eta: f64,
    max_inversion_inputs: usize,
) -> Result<Pipeline> {
    check_bounds(alpha, beta)?;
    let ops = Operators::new(geometry)?;
    let n = ops.patch.num_fine_inner_nodes();
    if n * n > max_inversion_inputs {
        return Err(Error::TooLarge { size: n * n, limit: max_inversion_inputs, what: "inversion network input" });
    }
    let nc = ops.patch.num_coarse_nodes();
    let nk = 1usize << geometry.dim;
    let bounds = spectral_bounds_of(&ops, alpha, beta)?;
    let (theta, gamma) = split_tolerances(eta, &bounds)?;

    let step1 = Network::linear(ops.u.clone());
    let (step2, cert_s) = rescaled_inversion(n, bounds.v_resc(), bounds.delta(), theta)?;
    let step3 = Network::linear(transpose_permutation(nc, n)).compose(copies_of(&ops.interp, n)?)?;
    let step4 = copies_of(&ops.interp, nc)?;
    let (step5, cert_y) = rescaled_inversion(nc, bounds.vhat_resc(), bounds.delta_hat(), gamma)?;
    let ipk = SparseMatrix::from_dense(&ops.interp.to_dense().matmul(&ops.element_prolong)?, 0.0);
    let step6 = Network::linear(transpose_permutation(nk, nc)).compose(copies_of(&ipk.transpose(), nc)?)?;
    let pt_it = ops.prolong.transpose().matmul(&ops.interp.transpose())?;
    let step7 = copies_of(&pt_it, nk)?;

    Ok(Pipeline {
        geometry: *geometry,
        steps: vec![step1, step2, step3, step4, step5, step6, step7],
        bounds,
        eta,
        theta,
        gamma,
        inner_certificates: [cert_s, cert_y],
    })
}

/// Network `Ψ^pg_η` with its audit data.
#[derive(Debug, Clone)]
pub struct LocalSurrogate {
    pub net: Network,
    pub geometry: SurrogateGeometry,
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub theta: f64,
    pub gamma: f64,
    pub v_resc: f64,
    pub vhat_resc: f64,
    pub delta: f64,
    pub delta_hat: f64,
    pub bounds: SpectralBounds,
    pub certificate: NetworkCertificate,
}

impl LocalSurrogate {
    /// Input dimension `m_ℓ`.
    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    /// Shape `(N_ℓ, 2^d)` of the output matrix.
    pub fn output_shape(&self) -> (usize, usize) {
        let nk = 1usize << self.geometry.dim;
        (self.net.output_dim() / nk, nk)
    }

    /// Re-checks the stored metadata against the network and the geometry.
    pub fn validate(&self) -> Result<()> {
        let patch = self.geometry.reference_patch()?;
        check_dim(patch.num_eps_elements(), self.net.input_dim(), "surrogate input")?;
        check_dim(patch.num_coarse_nodes() << self.geometry.dim, self.net.output_dim(), "surrogate output")?;
        if !self.certificate.matches(&self.net) {
            return Err(Error::Network("certificate does not match the network".into()));
        }
        if self.bounds.error_bound(self.theta, self.gamma) > self.eta * (1.0 + 1e-12) {
            return Err(Error::InvalidTolerance("recorded split violates the error bound".into()));
        }
        Ok(())
    }
}

/// Builds `Ψ^pg_η = Ψ⁷ ⊙ … ⊙ Ψ¹` for the class of coefficients with values
/// in `[α, β]`.
pub fn build_pg_network(geometry: &SurrogateGeometry, alpha: f64, beta: f64, eta: f64) -> Result<LocalSurrogate> {
    build_pg_network_with_limit(geometry, alpha, beta, eta, DEFAULT_MAX_INVERSION_INPUTS)
}

pub fn build_pg_network_with_limit(
    geometry: &SurrogateGeometry,
    alpha: f64,
    beta: f64,
    eta: f64,
    max_inversion_inputs: usize,
) -> Result<LocalSurrogate> {
    let pipe = build_pipeline(geometry, alpha, beta, eta, max_inversion_inputs)?;
    let predicted_depth: usize = pipe.steps.iter().map(Network::depth).sum();
    let step_depths: Vec<usize> = pipe.steps.iter().map(Network::depth).collect();
    let step_params: Vec<usize> = pipe.steps.iter().map(Network::num_params).collect();
    let net = Network::sparse_chain(pipe.steps)?;
    let b = pipe.bounds;
    let error_bound = b.error_bound(pipe.theta, pipe.gamma);
    let mut budget: Vec<(String, f64)> = vec![
        ("theta".into(), pipe.theta),
        ("gamma".into(), pipe.gamma),
        ("c_theta".into(), b.c_theta()),
        ("c_gamma".into(), b.c_gamma()),
        ("error_bound".into(), error_bound),
        ("v_resc".into(), b.v_resc()),
        ("vhat_resc".into(), b.vhat_resc()),
        ("delta".into(), b.delta()),
        ("delta_hat".into(), b.delta_hat()),
    ];
    for (name, c) in [("inv_s", &pipe.inner_certificates[0]), ("inv_y", &pipe.inner_certificates[1])] {
        budget.push((format!("{name}_depth"), c.depth as f64));
        budget.push((format!("{name}_params"), c.params as f64));
        for (k, v) in &c.budget {
            budget.push((format!("{name}_{k}"), *v));
        }
    }
    for (i, (l, m)) in step_depths.iter().zip(&step_params).enumerate() {
        budget.push((format!("step{}_depth", i + 1), *l as f64));
        budget.push((format!("step{}_params", i + 1), *m as f64));
    }
    let g = pipe.geometry;
    let certificate = NetworkCertificate {
        target: format!(
            "vec(A on patch) -> vec(S^pg), d = {}, nH = {}, ell = {}, r_eps = {}, r_h = {}",
            g.dim, g.n_coarse, g.ell, g.r_eps, g.r_h
        ),
        domain: format!("{} <= A <= {} on every coefficient element", alpha, beta),
        tolerance: pipe.eta,
        depth: predicted_depth,
        params: net.num_params(),
        budget,
    };
    let s = LocalSurrogate {
        net,
        geometry: g,
        alpha,
        beta,
        eta: pipe.eta,
        theta: pipe.theta,
        gamma: pipe.gamma,
        v_resc: b.v_resc(),
        vhat_resc: b.vhat_resc(),
        delta: b.delta(),
        delta_hat: b.delta_hat(),
        bounds: b,
        certificate,
    };
    s.validate()?;
    Ok(s)
}

/// Source of local matrices `Θ_K` for interior patches.
pub trait PatchSurrogate: Sync {
    fn geometry(&self) -> &SurrogateGeometry;

    /// `Θ_K` (`N_ℓ × 2^d`) from the coefficient values of a patch.
    fn local_matrix(&self, a: &[f64]) -> Result<DenseMatrix>;
}

/// Forward pass `Θ_K = mat(R(Ψ^pg_η)(a))`; rejects coefficients outside
/// `[α, β]`, where the certificate does not apply.
pub fn surrogate_local_matrix(s: &LocalSurrogate, a: &[f64]) -> Result<DenseMatrix> {
    check_dim(s.input_dim(), a.len(), "surrogate_local_matrix input")?;
    if let Some((i, v)) = a.iter().enumerate().find(|(_, v)| !(**v >= s.alpha && **v <= s.beta)) {
        return Err(Error::InvalidCoefficient(format!("value {v} at local element {i} outside [{}, {}]", s.alpha, s.beta)));
    }
    let (rows, cols) = s.output_shape();
    mat(&s.net.realize(a)?, rows, cols)
}

impl PatchSurrogate for LocalSurrogate {
    fn geometry(&self) -> &SurrogateGeometry {
        &self.geometry
    }

    fn local_matrix(&self, a: &[f64]) -> Result<DenseMatrix> {
        surrogate_local_matrix(self, a)
    }
}

/// The exact local matrix in place of a network (the `η → 0` limit).
#[derive(Debug, Clone, Copy)]
pub struct ExactSurrogate {
    geometry: SurrogateGeometry,
    patch: Patch,
}

impl ExactSurrogate {
    pub fn new(geometry: &SurrogateGeometry) -> Result<Self> {
        Ok(Self { geometry: *geometry, patch: geometry.reference_patch()? })
    }
}

impl PatchSurrogate for ExactSurrogate {
    fn geometry(&self) -> &SurrogateGeometry {
        &self.geometry
    }

    fn local_matrix(&self, a: &[f64]) -> Result<DenseMatrix> {
        LocalProblem::from_local(&self.patch, a)?.pg_matrix()
    }
}

/// Global matrix assembled from surrogate outputs.
#[derive(Debug, Clone)]
pub struct SurrogateStiffness {
    pub s_nn: SparseMatrix,
    /// `(coarse element, ‖S^pg_ω − Θ_K‖₂)` for every surrogate patch, in audited mode.
    pub per_patch_errors: Option<Vec<(usize, f64)>>,
    /// Number of patches served by the surrogate; the rest use the exact path.
    pub surrogate_patches: usize,
}

struct PatchResult {
    patch: Patch,
    local: DenseMatrix,
    surrogate: bool,
    error: Option<f64>,
}

/// `S^nn = Σ_K Φ_K(Θ_K)`: interior patches from the surrogate, all other
/// patches from the exact local problem.
pub fn assemble_nn_global<S: PatchSurrogate, E: Executor>(
    s: &S,
    a: &CoefficientField,
    ell: usize,
    exec: &E,
    audited: bool,
) -> Result<SurrogateStiffness> {
    let hier = *a.hierarchy();
    let g = SurrogateGeometry::of_hierarchy(&hier, ell)?;
    if g != *s.geometry() {
        return Err(Error::InvalidGeometry(format!("surrogate built for {:?}, problem has {:?}", s.geometry(), g)));
    }
    let nk = hier.num_elements(Level::Coarse);
    let results: Result<Vec<PatchResult>> = exec
        .map(nk, |k| -> Result<PatchResult> {
            let patch = Patch::from_index(&hier, k, ell)?;
            if patch.is_interior() {
                let local = s.local_matrix(&a.restrict(&patch))?;
                let error = if audited {
                    let exact = LocalProblem::new(&patch, a)?.pg_matrix()?;
                    Some(exact.sub(&local)?.spectral_norm_exact())
                } else {
                    None
                };
                Ok(PatchResult { patch, local, surrogate: true, error })
            } else {
                let local = LocalProblem::new(&patch, a)?.pg_matrix()?;
                Ok(PatchResult { patch, local, surrogate: false, error: None })
            }
        })
        .into_iter()
        .collect();
    let results = results?;
    let nc = hier.num_free_nodes(Level::Coarse);
    let mut t = Vec::new();
    let mut errors = Vec::new();
    let mut count = 0;
    for (k, r) in results.iter().enumerate() {
        lod::scatter_local(&r.patch, &r.local, &mut t);
        if r.surrogate {
            count += 1;
            if let Some(e) = r.error {
                errors.push((k, e));
            }
        }
    }
    Ok(SurrogateStiffness {
        s_nn: SparseMatrix::from_triplets(nc, nc, t)?,
        per_patch_errors: audited.then_some(errors),
        surrogate_patches: count,
    })
}

/// Options of [`compare_solutions`].
#[derive(Debug, Clone, Copy, Default)]
pub struct CompareOptions {
    /// Record per-patch errors of the surrogate.
    pub audited: bool,
    /// Also solve the classical (Galerkin) LOD system.
    pub classical: bool,
}

/// Gaps between the PG-LOD solution and the surrogate solution.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub coarse_size: f64,
    pub ell: usize,
    pub surrogate_patches: usize,
    pub total_patches: usize,
    /// `‖u^pg − u^nn‖₂` of the coefficient vectors.
    pub euclidean_gap: f64,
    /// `H^{d/2} ‖u^pg − u^nn‖₂`.
    pub scaled_gap: f64,
    /// `‖u^pg − u^nn‖_{L²}` through the coarse mass matrix.
    pub l2_gap: f64,
    /// `‖u^pg‖_{L²}`.
    pub l2_norm_pg: f64,
    /// `‖S^nn − S^pg‖₂`.
    pub matrix_gap: f64,
    /// Sum and maximum of the per-patch errors, in audited mode.
    pub patch_error_sum: Option<f64>,
    pub patch_error_max: Option<f64>,
    /// `‖u^c − u^pg‖_{L²}` when the classical system was solved.
    pub l2_classical_gap: Option<f64>,
}

/// Solves `S^pg u^pg = f` and `S^nn u^nn = f` and reports their distance.
pub fn compare_solutions<S: PatchSurrogate, E: Executor>(
    a: &CoefficientField,
    f: &Load<'_>,
    ell: usize,
    s: &S,
    exec: &E,
    opts: CompareOptions,
) -> Result<ComparisonReport> {
    let hier = *a.hierarchy();
    let sys = lod::assemble_lod(a, ell, exec, opts.classical)?;
    let nn = assemble_nn_global(s, a, ell, exec, opts.audited)?;
    let rhs = fem::load_vector(f, Level::Coarse, &hier)?;
    let u_pg = lod::solve_coarse(&sys.s_pg, &rhs)?;
    let u_nn = lod::solve_coarse(&nn.s_nn, &rhs)?;
    let diff: Vec<f64> = u_pg.iter().zip(&u_nn).map(|(x, y)| x - y).collect();
    let euclidean_gap = libm::sqrt(diff.iter().map(|v| v * v).sum());
    let hc = hier.coarse_size();
    let l2_classical_gap = match &sys.s_c {
        Some(sc) => {
            let u_c = lod::solve_coarse(sc, &rhs)?;
            let dc: Vec<f64> = u_c.iter().zip(&u_pg).map(|(x, y)| x - y).collect();
            Some(lod::coarse_l2_norm(&hier, &dc)?)
        }
        None => None,
    };
    let (patch_error_sum, patch_error_max) = match &nn.per_patch_errors {
        Some(e) => (Some(e.iter().map(|x| x.1).sum()), Some(e.iter().map(|x| x.1).fold(0.0, f64::max))),
        None => (None, None),
    };
    Ok(ComparisonReport {
        coarse_size: hc,
        ell,
        surrogate_patches: nn.surrogate_patches,
        total_patches: hier.num_elements(Level::Coarse),
        euclidean_gap,
        scaled_gap: libm::pow(hc, 0.5 * hier.dim() as f64) * euclidean_gap,
        l2_gap: lod::coarse_l2_norm(&hier, &diff)?,
        l2_norm_pg: lod::coarse_l2_norm(&hier, &u_pg)?,
        matrix_gap: nn.s_nn.add(&sys.s_pg.clone().scaled(-1.0))?.spectral_norm(),
        patch_error_sum,
        patch_error_max,
        l2_classical_gap,
    })
}
