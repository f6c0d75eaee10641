//! Localized orthogonal decomposition: element corrector problems in
//! saddle-point form, local Petrov–Galerkin matrices and their global
//! assembly, the symmetric (Galerkin) variant, and coarse / fine solves.
//!
//! For a patch `ω = N^ℓ(K)` with stiffness `S`, quasi-interpolation `I`
//! (rows of coarse nodes on `∂D` removed) and prolongations `P_ω`, `P_{ω,K}`:
//!
//! ```text
//! S Ξ + Iᵀ Φ = S P_{ω,K},   I Ξ = 0
//! Φ = (I S⁻¹ Iᵀ)⁻¹ I P_{ω,K},   Ξ = P_{ω,K} − S⁻¹ Iᵀ Φ
//! S^pg_ω = P_ωᵀ S (P_{ω,K} − Ξ) = P_ωᵀ Iᵀ (I S⁻¹ Iᵀ)⁻¹ I P_{ω,K}
//! ```

use alloc::vec;
use alloc::vec::Vec;

use crate::dense::{BandCholesky, Cholesky, DenseMatrix, Lu};
use crate::error::{check_dim, Error, Result};
use crate::exec::Executor;
use crate::fem::{self, CoefficientField, Load};
use crate::mesh::{Level, MeshHierarchy, Patch};
use crate::sparse::SparseMatrix;

/// Corrector coefficients `Ξ` (`n_ℓ × 2^d`) and multipliers `Φ` (`N_ℓ × 2^d`).
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectorSolution {
    pub xi: DenseMatrix,
    pub phi: DenseMatrix,
}

/// Local Petrov–Galerkin matrix `S^pg_ω` (`N_ℓ × 2^d`) of coarse element `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalLodMatrix {
    pub element: usize,
    pub values: DenseMatrix,
}

/// Factorized local problem on one patch.
pub struct LocalProblem {
    patch: Patch,
    stiffness: SparseMatrix,
    interp: SparseMatrix,
    prolong: SparseMatrix,
    prolong_k: DenseMatrix,
    // Coarse rows of `I` that are off ∂D.
    active: Vec<usize>,
    // S⁻¹ I_activeᵀ, n_ℓ × |active|.
    s_inv_it: DenseMatrix,
    schur: Cholesky,
}

fn dense_rows(m: &SparseMatrix, rows: &[usize]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|&r| {
            let mut v = vec![0.0; m.cols()];
            let (c, x) = m.row(r);
            for (j, a) in c.iter().zip(x) {
                v[*j as usize] = *a;
            }
            v
        })
        .collect()
}

impl LocalProblem {
    /// Sets up and factorizes the local problem for coefficient `a`.
    pub fn new(patch: &Patch, a: &CoefficientField) -> Result<Self> {
        let stiffness = fem::assemble_stiffness(patch, a)?;
        Self::with_stiffness(patch, stiffness)
    }

    /// Same as [`LocalProblem::new`] from a local coefficient vector.
    pub fn from_local(patch: &Patch, local: &[f64]) -> Result<Self> {
        let stiffness = fem::assemble_stiffness_local(patch, local)?;
        Self::with_stiffness(patch, stiffness)
    }

    fn with_stiffness(patch: &Patch, stiffness: SparseMatrix) -> Result<Self> {
        let interp = fem::quasi_interpolation(patch)?;
        let (prolong, pk) = fem::prolongations(patch)?;
        let hier = patch.hierarchy();
        let coarse = patch.local_indexers().coarse_nodes;
        let active: Vec<usize> = (0..coarse.len())
            .filter(|&i| !hier.is_boundary_node(Level::Coarse, &hier.node_multi(Level::Coarse, coarse[i])))
            .collect();
        let chol = BandCholesky::new(&stiffness)?;
        let n = stiffness.rows();
        let rows = dense_rows(&interp, &active);
        let mut s_inv_it = DenseMatrix::zeros(n, active.len());
        for (k, r) in rows.iter().enumerate() {
            let z = chol.solve(r)?;
            s_inv_it.set_column(k, &z);
        }
        let na = active.len();
        let mut y = DenseMatrix::zeros(na, na);
        for (i, r) in rows.iter().enumerate() {
            for j in 0..na {
                let mut s = 0.0;
                for (p, rp) in r.iter().enumerate() {
                    if *rp != 0.0 {
                        s += rp * s_inv_it.get(p, j);
                    }
                }
                y.set(i, j, s);
            }
        }
        for i in 0..na {
            for j in 0..i {
                let v = 0.5 * (y.get(i, j) + y.get(j, i));
                y.set(i, j, v);
                y.set(j, i, v);
            }
        }
        let schur = Cholesky::new(&y).map_err(|_| Error::Singular("local Schur complement"))?;
        Ok(Self { patch: *patch, stiffness, interp, prolong, prolong_k: pk.to_dense(), active, s_inv_it, schur })
    }

    pub fn patch(&self) -> &Patch {
        &self.patch
    }

    pub fn stiffness(&self) -> &SparseMatrix {
        &self.stiffness
    }

    pub fn interpolation(&self) -> &SparseMatrix {
        &self.interp
    }

    pub fn prolongation(&self) -> &SparseMatrix {
        &self.prolong
    }

    pub fn element_prolongation(&self) -> &DenseMatrix {
        &self.prolong_k
    }

    /// `I P_{ω,K}` restricted to the active rows.
    fn rhs(&self) -> Result<DenseMatrix> {
        let nk = self.prolong_k.cols();
        let mut out = DenseMatrix::zeros(self.active.len(), nk);
        for (i, &r) in self.active.iter().enumerate() {
            let (c, x) = self.interp.row(r);
            for j in 0..nk {
                let mut s = 0.0;
                for (p, a) in c.iter().zip(x) {
                    s += a * self.prolong_k.get(*p as usize, j);
                }
                out.set(i, j, s);
            }
        }
        Ok(out)
    }

    fn multipliers_active(&self) -> Result<DenseMatrix> {
        let rhs = self.rhs()?;
        let mut phi = DenseMatrix::zeros(rhs.rows(), rhs.cols());
        for j in 0..rhs.cols() {
            phi.set_column(j, &self.schur.solve(&rhs.column(j))?);
        }
        Ok(phi)
    }

    /// Schur-complement solution of the saddle-point system.
    pub fn solve_corrector(&self) -> Result<CorrectorSolution> {
        let phi_a = self.multipliers_active()?;
        let correction = self.s_inv_it.matmul(&phi_a)?;
        let xi = self.prolong_k.sub(&correction)?;
        let mut phi = DenseMatrix::zeros(self.interp.rows(), phi_a.cols());
        for (i, &r) in self.active.iter().enumerate() {
            for j in 0..phi_a.cols() {
                phi.set(r, j, phi_a.get(i, j));
            }
        }
        Ok(CorrectorSolution { xi, phi })
    }

    /// Closed form `P_ωᵀ Iᵀ (I S⁻¹ Iᵀ)⁻¹ I P_{ω,K}`.
    pub fn pg_matrix(&self) -> Result<DenseMatrix> {
        let phi_a = self.multipliers_active()?;
        // w = Iᵀ Φ (fine inner nodes × 2^d).
        let n = self.interp.cols();
        let mut w = DenseMatrix::zeros(n, phi_a.cols());
        for (i, &r) in self.active.iter().enumerate() {
            let (c, x) = self.interp.row(r);
            for (p, a) in c.iter().zip(x) {
                for j in 0..phi_a.cols() {
                    w.add_to(*p as usize, j, a * phi_a.get(i, j));
                }
            }
        }
        sparse_t_times_dense(&self.prolong, &w)
    }

    /// `P_ωᵀ S (P_{ω,K} − Ξ)` from a corrector solution.
    pub fn pg_matrix_from_corrector(&self, sol: &CorrectorSolution) -> Result<DenseMatrix> {
        let psi = self.prolong_k.sub(&sol.xi)?;
        let mut spsi = DenseMatrix::zeros(psi.rows(), psi.cols());
        for j in 0..psi.cols() {
            spsi.set_column(j, &self.stiffness.matvec(&psi.column(j))?);
        }
        sparse_t_times_dense(&self.prolong, &spsi)
    }

    /// Bilinear form `a(Λ_i, ψ_j)` evaluated element by element, where `Λ_i`
    /// is the patch interpolant of coarse basis function `i` and
    /// `ψ_j = P_{ω,K} e_j − Ξ e_j`.
    pub fn pg_matrix_bilinear(&self, a: &CoefficientField, sol: &CorrectorSolution) -> Result<DenseMatrix> {
        let psi = self.prolong_k.sub(&sol.xi)?;
        fem::energy_pairing(&self.patch, a, &self.prolong.to_dense(), &psi)
    }

    /// Residuals of the two block equations, relative to `‖S P_{ω,K}‖` (Frobenius).
    pub fn residuals(&self, sol: &CorrectorSolution) -> Result<(f64, f64)> {
        let nk = sol.xi.cols();
        let mut r1 = 0.0;
        let mut scale = 0.0;
        let mut r2 = 0.0;
        for j in 0..nk {
            let sx = self.stiffness.matvec(&sol.xi.column(j))?;
            let itp = self.interp.transpose_matvec(&sol.phi.column(j))?;
            let spk = self.stiffness.matvec(&self.prolong_k.column(j))?;
            for p in 0..sx.len() {
                let v = sx[p] + itp[p] - spk[p];
                r1 += v * v;
                scale += spk[p] * spk[p];
            }
            let ix = self.interp.matvec(&sol.xi.column(j))?;
            r2 += ix.iter().map(|v| v * v).sum::<f64>();
        }
        let scale = libm::sqrt(scale).max(f64::MIN_POSITIVE);
        Ok((libm::sqrt(r1) / scale, libm::sqrt(r2)))
    }
}

fn sparse_t_times_dense(p: &SparseMatrix, w: &DenseMatrix) -> Result<DenseMatrix> {
    check_dim(p.rows(), w.rows(), "Pᵀ W")?;
    let mut out = DenseMatrix::zeros(p.cols(), w.cols());
    for r in 0..p.rows() {
        let (c, x) = p.row(r);
        for (i, a) in c.iter().zip(x) {
            for j in 0..w.cols() {
                out.add_to(*i as usize, j, a * w.get(r, j));
            }
        }
    }
    Ok(out)
}

/// Saddle-point solve for the element corrector of `patch`.
pub fn solve_corrector(patch: &Patch, a: &CoefficientField) -> Result<CorrectorSolution> {
    LocalProblem::new(patch, a)?.solve_corrector()
}

/// Local PG-LOD matrix of `patch` in closed form.
pub fn local_pg_matrix(patch: &Patch, a: &CoefficientField) -> Result<LocalLodMatrix> {
    let values = LocalProblem::new(patch, a)?.pg_matrix()?;
    let element = patch.hierarchy().element_index(Level::Coarse, &patch.element());
    Ok(LocalLodMatrix { element, values })
}

/// Adds a local matrix into global triplets through the patch's scatter map.
pub fn scatter_local(patch: &Patch, local: &DenseMatrix, out: &mut Vec<(usize, usize, f64)>) {
    let map = patch.scatter_map();
    for (i, gi) in map.nodes.iter().enumerate() {
        let Some(gi) = gi else { continue };
        for (j, gj) in map.element_nodes.iter().enumerate() {
            let Some(gj) = gj else { continue };
            out.push((*gi, *gj, local.get(i, j)));
        }
    }
}

/// Global PG and (optionally) C-LOD matrices over the free coarse nodes.
#[derive(Debug, Clone)]
pub struct LodSystem {
    pub s_pg: SparseMatrix,
    pub s_c: Option<SparseMatrix>,
}

struct ElementResult {
    patch: Patch,
    pg: DenseMatrix,
    // (global free fine index, corner, value of P_{ω,K} − Ξ)
    basis: Vec<(usize, usize, f64)>,
}

fn element_results<E: Executor>(a: &CoefficientField, ell: usize, exec: &E, want_basis: bool) -> Result<Vec<ElementResult>> {
    let hier = *a.hierarchy();
    let nk = hier.num_elements(Level::Coarse);
    let res = exec.map(nk, |k| -> Result<ElementResult> {
        let patch = Patch::from_index(&hier, k, ell)?;
        let lp = LocalProblem::new(&patch, a)?;
        let pg = lp.pg_matrix()?;
        let mut basis = Vec::new();
        if want_basis {
            let sol = lp.solve_corrector()?;
            let psi = lp.prolong_k.sub(&sol.xi)?;
            let fine = patch.local_indexers().fine_inner_nodes;
            for (p, &g) in fine.iter().enumerate() {
                let m = hier.node_multi(Level::Fine, g);
                let gf = hier.free_node_index(Level::Fine, &m).expect("inner patch nodes are free");
                for c in 0..psi.cols() {
                    let v = psi.get(p, c);
                    if v != 0.0 {
                        basis.push((gf, c, v));
                    }
                }
            }
        }
        Ok(ElementResult { patch, pg, basis })
    });
    res.into_iter().collect()
}

/// Assembles `S^pg = Σ_K Φ_K(S^pg_ω)` and, if requested, `S^c`.
pub fn assemble_lod<E: Executor>(a: &CoefficientField, ell: usize, exec: &E, with_clod: bool) -> Result<LodSystem> {
    if ell == 0 {
        return Err(Error::InvalidGeometry("oversampling ℓ must be at least 1".into()));
    }
    let hier = *a.hierarchy();
    let results = element_results(a, ell, exec, with_clod)?;
    let nc = hier.num_free_nodes(Level::Coarse);
    let mut t = Vec::new();
    for r in &results {
        scatter_local(&r.patch, &r.pg, &mut t);
    }
    let s_pg = SparseMatrix::from_triplets(nc, nc, t)?;
    let s_c = if with_clod {
        let mut bt = Vec::new();
        for r in &results {
            let map = r.patch.scatter_map();
            for &(gf, c, v) in &r.basis {
                if let Some(j) = map.element_nodes[c] {
                    bt.push((gf, j, v));
                }
            }
        }
        let basis = SparseMatrix::from_triplets(hier.num_free_nodes(Level::Fine), nc, bt)?;
        let sh = fem::assemble_global_stiffness(a)?;
        let shb = sh.matmul(&basis)?;
        Some(basis.transpose().matmul(&shb)?)
    } else {
        None
    };
    Ok(LodSystem { s_pg, s_c })
}

/// Global PG-LOD matrix.
pub fn assemble_pg_global<E: Executor>(a: &CoefficientField, ell: usize, exec: &E) -> Result<SparseMatrix> {
    Ok(assemble_lod(a, ell, exec, false)?.s_pg)
}

/// Global C-LOD matrix `a((id−Q)Λ_j, (id−Q)Λ_i)`.
pub fn assemble_clod_global<E: Executor>(a: &CoefficientField, ell: usize, exec: &E) -> Result<SparseMatrix> {
    Ok(assemble_lod(a, ell, exec, true)?.s_c.expect("requested"))
}

/// Largest coarse system solved with a dense factorization.
pub const COARSE_SIZE_LIMIT: usize = 8192;
/// Largest fine reference problem.
pub const FINE_SIZE_LIMIT: usize = 1_000_000;

/// Direct solve of a coarse system.
pub fn solve_coarse(s: &SparseMatrix, f: &[f64]) -> Result<Vec<f64>> {
    check_dim(s.rows(), f.len(), "solve_coarse")?;
    if s.rows() > COARSE_SIZE_LIMIT {
        return Err(Error::TooLarge { size: s.rows(), limit: COARSE_SIZE_LIMIT, what: "coarse system" });
    }
    if f.iter().all(|v| *v == 0.0) {
        return Ok(vec![0.0; f.len()]);
    }
    Lu::new(&s.to_dense())?.solve(f)
}

/// Galerkin solution on the free fine nodes.
pub fn solve_fine_reference(a: &CoefficientField, f: &Load<'_>) -> Result<Vec<f64>> {
    let hier = a.hierarchy();
    let n = hier.num_free_nodes(Level::Fine);
    if n > FINE_SIZE_LIMIT {
        return Err(Error::TooLarge { size: n, limit: FINE_SIZE_LIMIT, what: "fine reference problem" });
    }
    let s = fem::assemble_global_stiffness(a)?;
    let rhs = fem::load_vector(f, Level::Fine, hier)?;
    BandCholesky::new(&s)?.solve(&rhs)
}

/// L² distance between a coarse function and a fine function, measured on the fine mesh.
pub fn coarse_fine_l2_error(hier: &MeshHierarchy, coarse: &[f64], fine: &[f64]) -> Result<f64> {
    let p = fem::global_prolongation(hier)?;
    let pc = p.matvec(coarse)?;
    check_dim(pc.len(), fine.len(), "coarse_fine_l2_error")?;
    let e: Vec<f64> = fine.iter().zip(&pc).map(|(a, b)| a - b).collect();
    let m = fem::assemble_mass(Level::Fine, hier)?;
    fem::mass_norm(&m, &e)
}

/// L² norm of a coarse free-node vector.
pub fn coarse_l2_norm(hier: &MeshHierarchy, v: &[f64]) -> Result<f64> {
    let m = fem::assemble_mass(Level::Coarse, hier)?;
    fem::mass_norm(&m, v)
}
