mod common;

use common::{max_abs_diff, random_field, rel_diff, rng};
use lodnn_core::dense::{symmetric_eigenvalues, DenseMatrix, Lu};
use lodnn_core::exec::Serial;
use lodnn_core::fem::{self, CoefficientField, Load};
use lodnn_core::lod::{self, LocalProblem};
use lodnn_core::mesh::{Level, MeshHierarchy, Patch};
use rand::Rng;

fn cases() -> Vec<(MeshHierarchy, usize, usize)> {
    vec![
        (MeshHierarchy::new(1, 8, 2, 2).unwrap(), 4, 1),
        (MeshHierarchy::new(1, 8, 3, 1).unwrap(), 0, 2),
        (MeshHierarchy::new(2, 5, 2, 1).unwrap(), 12, 1),
        (MeshHierarchy::new(2, 6, 1, 2).unwrap(), 0, 1),
    ]
}

/// Full saddle system `[[S, Iᵀ], [I, 0]]` over active rows, solved by dense LU.
fn kkt_oracle(lp: &LocalProblem, patch: &Patch) -> (DenseMatrix, DenseMatrix) {
    let hier = patch.hierarchy();
    let s = lp.stiffness().to_dense();
    let i_full = lp.interpolation().to_dense();
    let coarse = patch.local_indexers().coarse_nodes;
    let active: Vec<usize> = (0..coarse.len())
        .filter(|&c| !hier.is_boundary_node(Level::Coarse, &hier.node_multi(Level::Coarse, coarse[c])))
        .collect();
    let n = s.rows();
    let m = active.len();
    let kkt = DenseMatrix::from_fn(n + m, n + m, |r, c| match (r < n, c < n) {
        (true, true) => s.get(r, c),
        (true, false) => i_full.get(active[c - n], r),
        (false, true) => i_full.get(active[r - n], c),
        (false, false) => 0.0,
    });
    let lu = Lu::new(&kkt).unwrap();
    let pk = lp.element_prolongation();
    let spk = s.matmul(pk).unwrap();
    let mut xi = DenseMatrix::zeros(n, pk.cols());
    let mut phi = DenseMatrix::zeros(coarse.len(), pk.cols());
    for j in 0..pk.cols() {
        let mut rhs = spk.column(j);
        rhs.resize(n + m, 0.0);
        let x = lu.solve(&rhs).unwrap();
        xi.set_column(j, &x[..n]);
        for (k, &a) in active.iter().enumerate() {
            phi.set(a, j, x[n + k]);
        }
    }
    (xi, phi)
}

#[test]
fn corrector_matches_dense_kkt_and_satisfies_constraints() {
    for (seed, (h, k, ell)) in cases().into_iter().enumerate() {
        let p = Patch::from_index(&h, k, ell).unwrap();
        for s in 0..5 {
            let a = random_field(&h, 1.0, 10.0, 100 * seed as u64 + s);
            let lp = LocalProblem::new(&p, &a).unwrap();
            let sol = lp.solve_corrector().unwrap();
            let (xi, phi) = kkt_oracle(&lp, &p);
            assert!(rel_diff(&sol.xi, &xi) < 1e-8);
            assert!(rel_diff(&sol.phi, &phi) < 1e-8);
            let (r1, r2) = lp.residuals(&sol).unwrap();
            assert!(r1 <= 1e-10, "block one residual {r1}");
            assert!(r2 <= 1e-10, "kernel residual {r2}");
        }
    }
}

#[test]
fn kernel_constraint_over_many_coefficients() {
    let h = MeshHierarchy::new(2, 5, 2, 1).unwrap();
    for s in 0..20 {
        let a = random_field(&h, 1.0, 10.0, 500 + s);
        for k in [0, 7, 12] {
            let lp = LocalProblem::new(&Patch::from_index(&h, k, 1).unwrap(), &a).unwrap();
            let sol = lp.solve_corrector().unwrap();
            assert!(lp.residuals(&sol).unwrap().1 <= 1e-10);
        }
    }
}

#[test]
fn three_formulas_agree() {
    for (seed, (h, k, ell)) in cases().into_iter().enumerate() {
        let p = Patch::from_index(&h, k, ell).unwrap();
        let a = random_field(&h, 1.0, 10.0, 7 + seed as u64);
        let lp = LocalProblem::new(&p, &a).unwrap();
        let sol = lp.solve_corrector().unwrap();
        let closed = lp.pg_matrix().unwrap();
        let via_s = lp.pg_matrix_from_corrector(&sol).unwrap();
        let bilinear = lp.pg_matrix_bilinear(&a, &sol).unwrap();
        assert_eq!((closed.rows(), closed.cols()), (p.num_coarse_nodes(), 1 << h.dim()));
        assert!(rel_diff(&closed, &via_s) < 1e-8);
        assert!(rel_diff(&closed, &bilinear) < 1e-8);
        assert!(rel_diff(&via_s, &bilinear) < 1e-8);
    }
}

#[test]
fn local_matrix_scales_linearly() {
    let h = MeshHierarchy::new(2, 5, 2, 1).unwrap();
    let a = random_field(&h, 1.0, 10.0, 3);
    let p = Patch::from_index(&h, 12, 1).unwrap();
    let base = lod::local_pg_matrix(&p, &a).unwrap();
    let scaled = lod::local_pg_matrix(&p, &a.scaled(3.5).unwrap()).unwrap();
    let mut expect = base.values.clone();
    expect.scale(3.5);
    assert_eq!(base.element, 12);
    assert!(rel_diff(&scaled.values, &expect) < 1e-12);
}

#[test]
fn covering_patches_give_symmetric_classical_matrix() {
    for (d, n) in [(1, 8), (2, 4)] {
        let h = MeshHierarchy::new(d, n, 2, 1).unwrap();
        for a in [CoefficientField::constant(&h, 1.0).unwrap(), random_field(&h, 1.0, 10.0, 41)] {
            let sys = lod::assemble_lod(&a, n, &Serial, true).unwrap();
            let pg = sys.s_pg.to_dense();
            let c = sys.s_c.unwrap().to_dense();
            assert!(pg.sub(&c).unwrap().max_abs() <= 1e-8);
            assert!(pg.sub(&pg.transpose()).unwrap().max_abs() <= 1e-8);
            for i in 0..pg.rows() {
                let row: f64 = pg.row(i).iter().sum();
                let col: f64 = (0..pg.rows()).map(|r| pg.get(r, i)).sum();
                assert!((row - col).abs() <= 1e-8);
            }
        }
    }
}

#[test]
fn deep_interior_row_sums_decay() {
    let h = MeshHierarchy::new(1, 8, 2, 2).unwrap();
    let a = CoefficientField::constant(&h, 1.0).unwrap();
    let pg = lod::assemble_pg_global(&a, 8, &Serial).unwrap().to_dense();
    let sums: Vec<f64> = (0..pg.rows()).map(|i| pg.row(i).iter().sum::<f64>().abs()).collect();
    let centre = pg.rows() / 2;
    assert!(sums[centre] <= 1e-2 * pg.get(centre, centre));
    for i in 0..centre {
        assert!(sums[i + 1] < sums[i]);
    }
}

#[test]
fn sparsity_follows_patch_support() {
    let h = MeshHierarchy::new(2, 7, 1, 2).unwrap();
    let a = random_field(&h, 1.0, 10.0, 8);
    for ell in 1..=2 {
        let s = lod::assemble_pg_global(&a, ell, &Serial).unwrap();
        for (i, j, _) in s.triplets() {
            let zi = h.free_node_multi(Level::Coarse, i);
            let zj = h.free_node_multi(Level::Coarse, j);
            for ax in 0..2 {
                assert!(zi[ax].abs_diff(zj[ax]) <= ell + 1);
            }
        }
    }
}

#[test]
fn classical_matrix_is_spd_with_stable_scaling() {
    let mut ratios = Vec::new();
    for n in [4, 8, 16] {
        let h = MeshHierarchy::new(1, n, 2, 2).unwrap();
        let a = random_field(&h, 1.0, 10.0, 77);
        let c = lod::assemble_clod_global(&a, 2, &Serial).unwrap();
        assert!(c.is_symmetric(1e-12 * c.max_abs()));
        let ev = symmetric_eigenvalues(&c.to_dense()).unwrap();
        assert!(ev[0] > 0.0);
        ratios.push(ev[0] / h.coarse_size());
    }
    let lo = ratios.iter().cloned().fold(f64::MAX, f64::min);
    let hi = ratios.iter().cloned().fold(0.0, f64::max);
    assert!(hi / lo < 4.0, "{ratios:?}");
}

/// Gaussian elimination without pivoting (the matrix is SPD).
fn gauss_solve(mut m: DenseMatrix, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        for i in k + 1..n {
            let f = m.get(i, k) / m.get(k, k);
            for j in k..n {
                m.add_to(i, j, -f * m.get(k, j));
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| m.get(i, j) * x[j]).sum();
        x[i] = (b[i] - s) / m.get(i, i);
    }
    x
}

#[test]
fn coarse_solve_matches_elimination_oracle() {
    let h = MeshHierarchy::new(2, 6, 2, 1).unwrap();
    let a = random_field(&h, 1.0, 10.0, 13);
    let sys = lod::assemble_lod(&a, 2, &Serial, true).unwrap();
    let f = fem::load_vector(&Load::Constant(1.0), Level::Coarse, &h).unwrap();
    let c = sys.s_c.unwrap();
    let u = lod::solve_coarse(&c, &f).unwrap();
    let oracle = gauss_solve(c.to_dense(), f.clone());
    let scale = oracle.iter().map(|v| v.abs()).fold(0.0, f64::max);
    assert!(max_abs_diff(&u, &oracle) <= 1e-10 * scale);
    let res: Vec<f64> = c.matvec(&u).unwrap().iter().zip(&f).map(|(x, y)| x - y).collect();
    let fn2 = f.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(res.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1e-10 * fn2);
    let upg = lod::solve_coarse(&sys.s_pg, &f).unwrap();
    assert!(upg.iter().all(|v| v.is_finite()));
    assert_eq!(lod::solve_coarse(&c, &vec![0.0; f.len()]).unwrap(), vec![0.0; f.len()]);
}

#[test]
fn pg_and_classical_solutions_converge_in_ell() {
    let h = MeshHierarchy::new(1, 16, 4, 1).unwrap();
    let a = random_field(&h, 1.0, 10.0, 21);
    let f = fem::load_vector(&Load::Constant(1.0), Level::Coarse, &h).unwrap();
    let reference = lod::assemble_pg_global(&a, 16, &Serial).unwrap();
    let uref = lod::solve_coarse(&reference, &f).unwrap();
    let reference = reference.to_dense();
    let err = |u: &[f64]| {
        let e: Vec<f64> = u.iter().zip(&uref).map(|(x, y)| x - y).collect();
        lod::coarse_l2_norm(&h, &e).unwrap()
    };
    let mut rows = Vec::new();
    for ell in [3, 6] {
        let sys = lod::assemble_lod(&a, ell, &Serial, true).unwrap();
        let uc = lod::solve_coarse(sys.s_c.as_ref().unwrap(), &f).unwrap();
        let up = lod::solve_coarse(&sys.s_pg, &f).unwrap();
        let gap: Vec<f64> = uc.iter().zip(&up).map(|(x, y)| x - y).collect();
        let mat = sys.s_pg.to_dense().sub(&reference).unwrap().max_abs();
        rows.push([err(&uc), err(&up), lod::coarse_l2_norm(&h, &gap).unwrap(), mat]);
    }
    for q in 0..4 {
        assert!(rows[1][q] < 1e-2 * rows[0][q], "{rows:?}");
    }
}

#[test]
fn fine_reference_matches_exact_flux_solution() {
    let h = MeshHierarchy::new(1, 4, 4, 2).unwrap();
    let a = random_field(&h, 1.0, 10.0, 31);
    let u = lod::solve_fine_reference(&a, &Load::Constant(1.0)).unwrap();
    // -(a u')' = 1 with piecewise constant a: u' = (c - x)/a.
    let he = h.eps_size();
    let av = a.values();
    let inv: f64 = av.iter().map(|v| he / v).sum();
    let mom: f64 = av.iter().enumerate().map(|(e, v)| (((e + 1) as f64 * he).powi(2) - (e as f64 * he).powi(2)) / (2.0 * v)).sum();
    let c = mom / inv;
    let exact = |x: f64| -> f64 {
        let mut s = 0.0;
        for (e, v) in av.iter().enumerate() {
            let x0 = e as f64 * he;
            let x1 = ((e + 1) as f64 * he).min(x);
            if x1 <= x0 {
                break;
            }
            s += (c * (x1 - x0) - (x1 * x1 - x0 * x0) / 2.0) / v;
        }
        s
    };
    for (i, ui) in u.iter().enumerate() {
        let x = (i + 1) as f64 * h.fine_size();
        assert!((ui - exact(x)).abs() <= 1e-12, "node {i}");
    }
}

#[test]
fn fine_reference_galerkin_identities() {
    let h = MeshHierarchy::new(2, 4, 2, 2).unwrap();
    let a = random_field(&h, 1.0, 10.0, 5);
    let f = |x: &[f64; 3]| (x[0] * 3.0).sin() + x[1];
    let u = lod::solve_fine_reference(&a, &Load::Function(&f)).unwrap();
    let s = fem::assemble_global_stiffness(&a).unwrap();
    let rhs = fem::load_vector(&Load::Function(&f), Level::Fine, &h).unwrap();
    let su = s.matvec(&u).unwrap();
    let mut r = rng(3);
    let scale = rhs.iter().map(|v| v.abs()).sum::<f64>();
    for _ in 0..5 {
        let v: Vec<f64> = (0..u.len()).map(|_| r.gen_range(-1.0..1.0)).collect();
        let res: f64 = su.iter().zip(&rhs).zip(&v).map(|((a, b), c)| (a - b) * c).sum();
        assert!(res.abs() <= 1e-10 * scale);
    }
    let energy: f64 = su.iter().zip(&u).map(|(a, b)| a * b).sum();
    let work: f64 = rhs.iter().zip(&u).map(|(a, b)| a * b).sum();
    assert!((energy - work).abs() <= 1e-12 * work.abs());
}
