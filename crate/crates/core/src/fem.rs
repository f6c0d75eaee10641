//! Q1 finite elements on the nested meshes: coefficient fields, stiffness and
//! mass assembly, prolongations, the coefficient-to-stiffness map and the
//! quasi-interpolation matrix.
//!
//! Local fine-node vectors of a patch are indexed by the patch's inner fine
//! nodes (lexicographic, axis 0 fastest); local coarse vectors by all coarse
//! nodes of the patch box including its boundary.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::dense::DenseMatrix;
use crate::error::{check_dim, Error, Result};
use crate::mesh::{for_each_in_box, Level, MeshHierarchy, MultiIndex, Patch};
use crate::sparse::SparseMatrix;

/// Piecewise-constant scalar coefficient on the coefficient mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    hier: MeshHierarchy,
    values: Vec<f64>,
    alpha: f64,
    beta: f64,
}

impl CoefficientField {
    pub fn new(hier: &MeshHierarchy, values: Vec<f64>, alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= beta && beta.is_finite()) {
            return Err(Error::InvalidCoefficient(format!("bounds must satisfy 0 < alpha <= beta < inf, got [{alpha}, {beta}]")));
        }
        let n = hier.num_elements(Level::Eps);
        if values.len() != n {
            return Err(Error::InvalidCoefficient(format!("expected {n} values, found {}", values.len())));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(**v >= alpha && **v <= beta)) {
            return Err(Error::InvalidCoefficient(format!("value {v} at element {i} outside [{alpha}, {beta}]")));
        }
        Ok(Self { hier: *hier, values, alpha, beta })
    }

    pub fn constant(hier: &MeshHierarchy, value: f64) -> Result<Self> {
        Self::new(hier, vec![value; hier.num_elements(Level::Eps)], value, value)
    }

    /// Samples `f` at the midpoints of the coefficient elements.
    pub fn from_fn(hier: &MeshHierarchy, alpha: f64, beta: f64, f: impl Fn(&[f64; 3]) -> f64) -> Result<Self> {
        let n = hier.num_elements(Level::Eps);
        let e = hier.eps_size();
        let values = (0..n)
            .map(|i| {
                let m = hier.element_multi(Level::Eps, i);
                let mut x = [0.0; 3];
                for a in 0..hier.dim() {
                    x[a] = (m[a] as f64 + 0.5) * e;
                }
                f(&x)
            })
            .collect();
        Self::new(hier, values, alpha, beta)
    }

    pub fn hierarchy(&self) -> &MeshHierarchy {
        &self.hier
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Coefficient `c·A` with bounds scaled accordingly.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(&self.hier, self.values.iter().map(|v| v * c).collect(), self.alpha * c, self.beta * c)
    }

    /// Values on the patch's coefficient elements in local order.
    pub fn restrict(&self, patch: &Patch) -> Vec<f64> {
        patch.local_indexers().eps_elements.iter().map(|&i| self.values[i]).collect()
    }

    /// Coefficient on the fine element with multi-index `m`.
    pub fn on_fine_element(&self, m: &MultiIndex) -> f64 {
        let p = self.hier.parent(Level::Fine, Level::Eps, m);
        self.values[self.hier.element_index(Level::Eps, &p)]
    }
}

/// Gauss points and weights of the two-point rule on `[0, 1]`.
const GAUSS: [(f64, f64); 2] = [(0.211_324_865_405_187_1, 0.5), (0.788_675_134_594_812_9, 0.5)];

/// 1D Q1 stiffness and mass on the unit interval.
const K1: [[f64; 2]; 2] = [[1.0, -1.0], [-1.0, 1.0]];
const M1: [[f64; 2]; 2] = [[1.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 1.0 / 3.0]];

#[inline]
fn shape_1d(bit: usize, xi: f64) -> f64 {
    if bit == 0 {
        1.0 - xi
    } else {
        xi
    }
}

#[inline]
fn dshape_1d(bit: usize) -> f64 {
    if bit == 0 {
        -1.0
    } else {
        1.0
    }
}

/// Unit-coefficient Q1 element stiffness on a cube of side `h`, closed form
/// `h^{d-2} Σ_a (⊗_{b≠a} M1) ⊗ K1`.
pub fn reference_stiffness(d: usize, h: f64) -> Vec<f64> {
    let nc = 1 << d;
    let mut k = vec![0.0; nc * nc];
    let s = libm::pow(h, d as f64 - 2.0);
    for c1 in 0..nc {
        for c2 in 0..nc {
            let mut v = 0.0;
            for a in 0..d {
                let mut t = 1.0;
                for b in 0..d {
                    let (i, j) = ((c1 >> b) & 1, (c2 >> b) & 1);
                    t *= if a == b { K1[i][j] } else { M1[i][j] };
                }
                v += t;
            }
            k[c1 * nc + c2] = s * v;
        }
    }
    k
}

/// Q1 element mass on a cube of side `h`.
pub fn reference_mass(d: usize, h: f64) -> Vec<f64> {
    let nc = 1 << d;
    let mut m = vec![0.0; nc * nc];
    let s = libm::pow(h, d as f64);
    for c1 in 0..nc {
        for c2 in 0..nc {
            let mut t = 1.0;
            for b in 0..d {
                t *= M1[(c1 >> b) & 1][(c2 >> b) & 1];
            }
            m[c1 * nc + c2] = s * t;
        }
    }
    m
}

/// Unit-coefficient element stiffness by tensor Gauss quadrature.
fn gauss_stiffness(d: usize, h: f64) -> Vec<f64> {
    let nc = 1 << d;
    let nq = 1 << d;
    let mut k = vec![0.0; nc * nc];
    let jac = libm::pow(h, d as f64);
    for q in 0..nq {
        let mut xi = [0.0; 3];
        let mut w = 1.0;
        for a in 0..d {
            let (x, wa) = GAUSS[(q >> a) & 1];
            xi[a] = x;
            w *= wa;
        }
        let mut grads = [[0.0; 3]; 8];
        for (c, g) in grads.iter_mut().enumerate().take(nc) {
            for a in 0..d {
                let mut v = dshape_1d((c >> a) & 1) / h;
                for b in 0..d {
                    if b != a {
                        v *= shape_1d((c >> b) & 1, xi[b]);
                    }
                }
                g[a] = v;
            }
        }
        for c1 in 0..nc {
            for c2 in 0..nc {
                let mut dot = 0.0;
                for a in 0..d {
                    dot += grads[c1][a] * grads[c2][a];
                }
                k[c1 * nc + c2] += w * jac * dot;
            }
        }
    }
    k
}

/// A box of fine elements with its inner nodes as unknowns.
#[derive(Debug, Clone, Copy)]
struct FineBox {
    d: usize,
    lo: MultiIndex,
    hi: MultiIndex,
    // Inner nodes per axis.
    inner: [usize; 3],
}

impl FineBox {
    fn of_patch(p: &Patch) -> Self {
        let r = p.fine_range();
        let d = p.dim();
        let mut inner = [1; 3];
        for a in 0..d {
            inner[a] = r.hi[a] - r.lo[a];
        }
        Self { d, lo: r.lo, hi: r.hi, inner }
    }

    fn num_inner(&self) -> usize {
        self.inner[..self.d].iter().product()
    }

    /// Local inner index of a global fine node, `None` on the box boundary.
    #[inline]
    fn inner_index(&self, node: &MultiIndex) -> Option<usize> {
        let mut idx = 0;
        for a in (0..self.d).rev() {
            let t = node[a].checked_sub(self.lo[a] + 1)?;
            if t >= self.inner[a] {
                return None;
            }
            idx = idx * self.inner[a] + t;
        }
        Some(idx)
    }

    /// Inner local indices of the `2^d` corners of fine element `e`.
    fn element_dofs(&self, e: &MultiIndex) -> [Option<usize>; 8] {
        let mut out = [None; 8];
        for (c, slot) in out.iter_mut().enumerate().take(1 << self.d) {
            let mut node = *e;
            for a in 0..self.d {
                node[a] += (c >> a) & 1;
            }
            *slot = self.inner_index(&node);
        }
        out
    }
}

fn assemble_box(hier: &MeshHierarchy, b: &FineBox, coef: impl Fn(&MultiIndex) -> f64, kref: &[f64]) -> Result<SparseMatrix> {
    let nc = 1 << b.d;
    let mut t = Vec::with_capacity(b.num_inner() * 3usize.pow(b.d as u32));
    let _ = hier;
    for_each_in_box(b.d, &b.lo, &b.hi, |e| {
        let a = coef(e);
        let dofs = b.element_dofs(e);
        for c1 in 0..nc {
            let Some(i) = dofs[c1] else { continue };
            for c2 in 0..nc {
                let Some(j) = dofs[c2] else { continue };
                t.push((i, j, a * kref[c1 * nc + c2]));
            }
        }
    });
    let n = b.num_inner();
    SparseMatrix::from_triplets(n, n, t)
}

fn check_same_hierarchy(a: &MeshHierarchy, b: &MeshHierarchy) -> Result<()> {
    if a != b {
        return Err(Error::InvalidGeometry("coefficient and patch use different mesh hierarchies".into()));
    }
    Ok(())
}

/// Patch stiffness `S_{A,ω}` on `V_h(ω)` by element-wise Gauss quadrature.
pub fn assemble_stiffness(patch: &Patch, a: &CoefficientField) -> Result<SparseMatrix> {
    check_same_hierarchy(patch.hierarchy(), a.hierarchy())?;
    let hier = patch.hierarchy();
    let kref = gauss_stiffness(hier.dim(), hier.fine_size());
    assemble_box(hier, &FineBox::of_patch(patch), |e| a.on_fine_element(e), &kref)
}

/// Patch stiffness from a local coefficient vector (ordered like the patch's
/// coefficient elements).
pub fn assemble_stiffness_local(patch: &Patch, local: &[f64]) -> Result<SparseMatrix> {
    check_dim(patch.num_eps_elements(), local.len(), "assemble_stiffness_local")?;
    let hier = patch.hierarchy();
    let er = patch.eps_range();
    let d = hier.dim();
    let ext = patch.extent(Level::Eps);
    let r = hier.r_h();
    let kref = gauss_stiffness(d, hier.fine_size());
    assemble_box(
        hier,
        &FineBox::of_patch(patch),
        |e| {
            let mut idx = 0;
            for a in (0..d).rev() {
                idx = idx * ext[a] + (e[a] / r - er.lo[a]);
            }
            local[idx]
        },
        &kref,
    )
}

/// Global fine stiffness on the free fine nodes.
pub fn assemble_global_stiffness(a: &CoefficientField) -> Result<SparseMatrix> {
    let hier = a.hierarchy();
    let p = global_patch(hier)?;
    assemble_stiffness(&p, a)
}

/// A patch covering the whole domain; its inner fine nodes are the free fine nodes.
pub fn global_patch(hier: &MeshHierarchy) -> Result<Patch> {
    Patch::new(hier, [0; 3], hier.n_coarse())
}

/// Coefficient-to-stiffness map `U` with `vec(S_{A,ω}) = U · A|_ω`.
///
/// Rows are indexed by `k + l·n_ℓ` (column-major `vec`), columns by the
/// patch's coefficient elements.
pub fn coefficient_to_stiffness_map(patch: &Patch) -> Result<SparseMatrix> {
    let hier = patch.hierarchy();
    let d = hier.dim();
    let b = FineBox::of_patch(patch);
    let n = b.num_inner();
    let nc = 1 << d;
    let kref = reference_stiffness(d, hier.fine_size());
    let er = patch.eps_range();
    let ext = patch.extent(Level::Eps);
    let r = hier.r_h();
    let mut t = Vec::new();
    let mut local_col = 0;
    for_each_in_box(d, &er.lo, &er.hi, |eps| {
        let mut flo = [0; 3];
        let mut fhi = [0; 3];
        for a in 0..d {
            flo[a] = eps[a] * r;
            fhi[a] = eps[a] * r + r - 1;
        }
        for_each_in_box(d, &flo, &fhi, |e| {
            let dofs = b.element_dofs(e);
            for c1 in 0..nc {
                let Some(i) = dofs[c1] else { continue };
                for c2 in 0..nc {
                    let Some(j) = dofs[c2] else { continue };
                    t.push((i + j * n, local_col, kref[c1 * nc + c2]));
                }
            }
        });
        local_col += 1;
    });
    debug_assert_eq!(local_col, ext[..d].iter().product::<usize>());
    SparseMatrix::from_triplets(n * n, patch.num_eps_elements(), t)
}

/// Reshapes `vec(S)` into the `n × n` matrix `S` (sparse).
pub fn unvec_square(v: &[f64], n: usize) -> Result<SparseMatrix> {
    check_dim(n * n, v.len(), "unvec_square")?;
    let mut t = Vec::new();
    for (idx, x) in v.iter().enumerate() {
        if *x != 0.0 {
            t.push((idx % n, idx / n, *x));
        }
    }
    SparseMatrix::from_triplets(n, n, t)
}

/// Global Q1 mass matrix on the free nodes of a level.
pub fn assemble_mass(level: Level, hier: &MeshHierarchy) -> Result<SparseMatrix> {
    let d = hier.dim();
    let n = hier.per_axis(level);
    let mref = reference_mass(d, hier.mesh_size(level));
    let nc = 1 << d;
    let mut t = Vec::new();
    let mut hi = [0; 3];
    for a in 0..d {
        hi[a] = n - 1;
    }
    for_each_in_box(d, &[0; 3], &hi, |e| {
        let mut dofs = [None; 8];
        for (c, slot) in dofs.iter_mut().enumerate().take(nc) {
            let mut node = *e;
            for a in 0..d {
                node[a] += (c >> a) & 1;
            }
            *slot = hier.free_node_index(level, &node);
        }
        for c1 in 0..nc {
            let Some(i) = dofs[c1] else { continue };
            for c2 in 0..nc {
                let Some(j) = dofs[c2] else { continue };
                t.push((i, j, mref[c1 * nc + c2]));
            }
        }
    });
    let m = hier.num_free_nodes(level);
    SparseMatrix::from_triplets(m, m, t)
}

/// Global Q1 stiffness with unit coefficient on the free nodes of a level.
pub fn assemble_laplacian(level: Level, hier: &MeshHierarchy) -> Result<SparseMatrix> {
    let d = hier.dim();
    let n = hier.per_axis(level);
    let kref = reference_stiffness(d, hier.mesh_size(level));
    let nc = 1 << d;
    let mut t = Vec::new();
    let mut hi = [0; 3];
    for a in 0..d {
        hi[a] = n - 1;
    }
    for_each_in_box(d, &[0; 3], &hi, |e| {
        let mut dofs = [None; 8];
        for (c, slot) in dofs.iter_mut().enumerate().take(nc) {
            let mut node = *e;
            for a in 0..d {
                node[a] += (c >> a) & 1;
            }
            *slot = hier.free_node_index(level, &node);
        }
        for c1 in 0..nc {
            let Some(i) = dofs[c1] else { continue };
            for c2 in 0..nc {
                let Some(j) = dofs[c2] else { continue };
                t.push((i, j, kref[c1 * nc + c2]));
            }
        }
    });
    let m = hier.num_free_nodes(level);
    SparseMatrix::from_triplets(m, m, t)
}

/// Value of the coarse hat function at node `z` (coarse multi-index) at `x`.
#[inline]
fn coarse_hat(d: usize, hc: f64, z: &MultiIndex, x: &[f64; 3]) -> f64 {
    let mut v = 1.0;
    for a in 0..d {
        let t = 1.0 - libm::fabs(x[a] - z[a] as f64 * hc) / hc;
        if t <= 0.0 {
            return 0.0;
        }
        v *= t;
    }
    v
}

/// Patch prolongations `(P_ω, P_{ω,K})`.
///
/// `P_ω` interpolates coarse nodal vectors of the patch at its inner fine
/// nodes. `P_{ω,K}` carries the share of the `2^d` basis functions of `K`
/// that belongs to `K`: nodal values inside `K` weighted by one over the
/// number of coarse elements sharing the node, so that the shares of all
/// elements around a node sum to its full basis function.
pub fn prolongations(patch: &Patch) -> Result<(SparseMatrix, SparseMatrix)> {
    let hier = patch.hierarchy();
    let d = hier.dim();
    let idx = patch.local_indexers();
    let hc = hier.coarse_size();
    let r = hier.r_fine();
    let n = idx.fine_inner_nodes.len();
    let big_n = idx.coarse_nodes.len();
    let cr = patch.coarse_range();
    let k = patch.element();
    let mut t = Vec::new();
    let mut tk = Vec::new();
    let corners = patch.element_corner_positions();
    let coarse_multi: Vec<MultiIndex> = idx.coarse_nodes.iter().map(|&g| hier.node_multi(Level::Coarse, g)).collect();
    for (p, &g) in idx.fine_inner_nodes.iter().enumerate() {
        let m = hier.node_multi(Level::Fine, g);
        let x = hier.node_coords(Level::Fine, &m);
        // Coarse nodes whose hats can be nonzero at x: the corners of the coarse cell(s) around x.
        let mut lo = [0; 3];
        let mut hi = [0; 3];
        for a in 0..d {
            let c = m[a] / r;
            lo[a] = c.max(cr.lo[a]);
            hi[a] = (if m[a] % r == 0 { c } else { c + 1 }).min(cr.hi[a] + 1);
        }
        for_each_in_box(d, &lo, &hi, |z| {
            let v = coarse_hat(d, hc, z, &x);
            if v != 0.0 {
                let mut pos = 0;
                for a in (0..d).rev() {
                    pos = pos * (cr.hi[a] - cr.lo[a] + 2) + (z[a] - cr.lo[a]);
                }
                t.push((p, pos, v));
            }
        });
        // Share of K.
        let mut in_k = true;
        let mut w = 1.0;
        for a in 0..d {
            let lo_f = k[a] * r;
            if m[a] < lo_f || m[a] > lo_f + r {
                in_k = false;
                break;
            }
            if m[a] == lo_f || m[a] == lo_f + r {
                w *= 0.5;
            }
        }
        if in_k {
            for (c, &pos) in corners.iter().enumerate() {
                let v = coarse_hat(d, hc, &coarse_multi[pos], &x);
                if v != 0.0 {
                    tk.push((p, c, w * v));
                }
            }
        }
    }
    Ok((SparseMatrix::from_triplets(n, big_n, t)?, SparseMatrix::from_triplets(n, 1 << d, tk)?))
}

/// Global prolongation from free coarse nodes to free fine nodes.
pub fn global_prolongation(hier: &MeshHierarchy) -> Result<SparseMatrix> {
    let d = hier.dim();
    let hc = hier.coarse_size();
    let r = hier.r_fine();
    let nf = hier.num_free_nodes(Level::Fine);
    let mut t = Vec::new();
    for p in 0..nf {
        let m = hier.free_node_multi(Level::Fine, p);
        let x = hier.node_coords(Level::Fine, &m);
        let mut lo = [0; 3];
        let mut hi = [0; 3];
        for a in 0..d {
            lo[a] = m[a] / r;
            hi[a] = if m[a] % r == 0 { m[a] / r } else { m[a] / r + 1 };
        }
        for_each_in_box(d, &lo, &hi, |z| {
            if let Some(j) = hier.free_node_index(Level::Coarse, z) {
                let v = coarse_hat(d, hc, z, &x);
                if v != 0.0 {
                    t.push((p, j, v));
                }
            }
        });
    }
    SparseMatrix::from_triplets(nf, hier.num_free_nodes(Level::Coarse), t)
}

/// 1D table of the local L² projection onto linears on one coarse interval:
/// `table[b][t]` is the coefficient of corner `b` produced by the fine hat at
/// relative fine node `t ∈ 0..=r`, restricted to the interval.
fn projection_table_1d(r: usize, hc: f64) -> [Vec<f64>; 2] {
    let h = hc / r as f64;
    // Inverse of the interval mass matrix H·M1.
    let minv = [[4.0 / hc, -2.0 / hc], [-2.0 / hc, 4.0 / hc]];
    let mut table = [vec![0.0; r + 1], vec![0.0; r + 1]];
    for t in 0..=r {
        let mut integ = [0.0; 2];
        // Fine elements [t-1, t] and [t, t+1] inside the interval.
        for e in [t as isize - 1, t as isize] {
            if e < 0 || e as usize >= r {
                continue;
            }
            for (xi, w) in GAUSS {
                let x = (e as f64 + xi) * h;
                let lam = 1.0 - libm::fabs(x - t as f64 * h) / h;
                let lam = if lam > 0.0 { lam } else { 0.0 };
                integ[0] += w * h * lam * (1.0 - x / hc);
                integ[1] += w * h * lam * (x / hc);
            }
        }
        for b in 0..2 {
            table[b][t] = minv[b][0] * integ[0] + minv[b][1] * integ[1];
        }
    }
    table
}

/// Quasi-interpolation `I_ω = E_H ∘ Π_H` on a patch, an `N_ℓ × n_ℓ` matrix.
///
/// `Π_H` is the element-wise L² projection onto Q1 on the patch's coarse
/// elements and `E_H` averages with weight `2^{-d}` at every node off `∂D`;
/// rows of nodes on `∂D` are zero.
pub fn quasi_interpolation(patch: &Patch) -> Result<SparseMatrix> {
    let hier = patch.hierarchy();
    let d = hier.dim();
    let r = hier.r_fine();
    let table = projection_table_1d(r, hier.coarse_size());
    let b = FineBox::of_patch(patch);
    let cr = patch.coarse_range();
    let big_n = patch.num_coarse_nodes();
    let weight = 1.0 / (1usize << d) as f64;
    let mut t = Vec::new();
    for_each_in_box(d, &cr.lo, &cr.hi, |kk| {
        // Fine nodes of the closed coarse element.
        let mut flo = [0; 3];
        let mut fhi = [0; 3];
        for a in 0..d {
            flo[a] = kk[a] * r;
            fhi[a] = kk[a] * r + r;
        }
        for c in 0..(1usize << d) {
            let mut z = *kk;
            for a in 0..d {
                z[a] += (c >> a) & 1;
            }
            if hier.is_boundary_node(Level::Coarse, &z) {
                continue;
            }
            let mut pos = 0;
            for a in (0..d).rev() {
                pos = pos * (cr.hi[a] - cr.lo[a] + 2) + (z[a] - cr.lo[a]);
            }
            for_each_in_box(d, &flo, &fhi, |node| {
                if let Some(p) = b.inner_index(node) {
                    let mut v = weight;
                    for a in 0..d {
                        v *= table[(c >> a) & 1][node[a] - flo[a]];
                    }
                    if v != 0.0 {
                        t.push((pos, p, v));
                    }
                }
            });
        }
    });
    SparseMatrix::from_triplets(big_n, b.num_inner(), t)
}

/// Element-loop evaluation of `Uᵀ S_{A,ω} V` for column blocks `U`, `V` of
/// inner-node vectors, without assembling `S`.
pub fn energy_pairing(patch: &Patch, a: &CoefficientField, u: &DenseMatrix, v: &DenseMatrix) -> Result<DenseMatrix> {
    check_same_hierarchy(patch.hierarchy(), a.hierarchy())?;
    let b = FineBox::of_patch(patch);
    check_dim(b.num_inner(), u.rows(), "energy_pairing U rows")?;
    check_dim(b.num_inner(), v.rows(), "energy_pairing V rows")?;
    let hier = patch.hierarchy();
    let d = hier.dim();
    let nc = 1 << d;
    let kref = gauss_stiffness(d, hier.fine_size());
    let mut out = DenseMatrix::zeros(u.cols(), v.cols());
    for_each_in_box(d, &b.lo, &b.hi, |e| {
        let coef = a.on_fine_element(e);
        let dofs = b.element_dofs(e);
        for i in 0..u.cols() {
            let ue: [f64; 8] = core::array::from_fn(|c| if c < nc { dofs[c].map_or(0.0, |p| u.get(p, i)) } else { 0.0 });
            if ue.iter().all(|x| *x == 0.0) {
                continue;
            }
            for j in 0..v.cols() {
                let mut s = 0.0;
                for c2 in 0..nc {
                    let Some(q) = dofs[c2] else { continue };
                    let vq = v.get(q, j);
                    if vq == 0.0 {
                        continue;
                    }
                    let mut ku = 0.0;
                    for c1 in 0..nc {
                        ku += kref[c1 * nc + c2] * ue[c1];
                    }
                    s += ku * vq;
                }
                out.add_to(i, j, coef * s);
            }
        }
    });
    Ok(out)
}

/// Right-hand side description.
pub enum Load<'a> {
    Constant(f64),
    /// One constant per element of the assembly level.
    PerElement(&'a [f64]),
    Function(&'a dyn Fn(&[f64; 3]) -> f64),
}

/// Load vector `∫ f Λ_i` on the free nodes of a level, by tensor Gauss quadrature.
pub fn load_vector(f: &Load<'_>, level: Level, hier: &MeshHierarchy) -> Result<Vec<f64>> {
    let d = hier.dim();
    let n = hier.per_axis(level);
    let h = hier.mesh_size(level);
    if let Load::PerElement(v) = f {
        check_dim(hier.num_elements(level), v.len(), "load_vector per-element values")?;
    }
    let mut out = vec![0.0; hier.num_free_nodes(level)];
    let mut hi = [0; 3];
    for a in 0..d {
        hi[a] = n - 1;
    }
    let nc = 1 << d;
    let jac = libm::pow(h, d as f64);
    for_each_in_box(d, &[0; 3], &hi, |e| {
        let mut dofs = [None; 8];
        for (c, slot) in dofs.iter_mut().enumerate().take(nc) {
            let mut node = *e;
            for a in 0..d {
                node[a] += (c >> a) & 1;
            }
            *slot = hier.free_node_index(level, &node);
        }
        for q in 0..nc {
            let mut xi = [0.0; 3];
            let mut x = [0.0; 3];
            let mut w = jac;
            for a in 0..d {
                let (g, wa) = GAUSS[(q >> a) & 1];
                xi[a] = g;
                x[a] = (e[a] as f64 + g) * h;
                w *= wa;
            }
            let fv = match f {
                Load::Constant(c) => *c,
                Load::PerElement(v) => v[hier.element_index(level, e)],
                Load::Function(g) => g(&x),
            };
            for c in 0..nc {
                if let Some(i) = dofs[c] {
                    let mut s = 1.0;
                    for a in 0..d {
                        s *= shape_1d((c >> a) & 1, xi[a]);
                    }
                    out[i] += w * fv * s;
                }
            }
        }
    });
    Ok(out)
}

/// L² norm of a free-node vector through a mass matrix, `sqrt(vᵀ M v)`.
pub fn mass_norm(m: &SparseMatrix, v: &[f64]) -> Result<f64> {
    let mv = m.matvec(v)?;
    let s: f64 = mv.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok(libm::sqrt(s.max(0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_matrices_agree() {
        for d in 1..=3 {
            let a = reference_stiffness(d, 0.25);
            let b = gauss_stiffness(d, 0.25);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-13, "d={d}");
            }
        }
    }

    #[test]
    fn projection_table_reproduces_linears() {
        let r = 4;
        let t = projection_table_1d(r, 0.5);
        // Projecting the function 1 (sum of all fine hats) gives 1 at both corners.
        for b in 0..2 {
            let s: f64 = t[b].iter().sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
    }
}
