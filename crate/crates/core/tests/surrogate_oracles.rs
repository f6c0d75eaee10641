mod common;

use std::sync::OnceLock;

use common::{random_field, rng, spec_norm};
use lodnn_core::dense::{symmetric_eigenvalues, Cholesky, DenseMatrix};
use lodnn_core::exec::Serial;
use lodnn_core::fem::{self, CoefficientField, Load};
use lodnn_core::lod::{self, LocalProblem};
use lodnn_core::mesh::{Level, MeshHierarchy, Patch};
use lodnn_core::nn::{mat, vec};
use lodnn_core::surrogate::*;
use lodnn_core::Error;
use rand::Rng;

const ALPHA: f64 = 1.0;
const BETA: f64 = 10.0;

fn tiny() -> SurrogateGeometry {
    SurrogateGeometry::new(1, 6, 1, 2, 2).unwrap()
}

fn tiny_surrogate() -> &'static LocalSurrogate {
    static S: OnceLock<LocalSurrogate> = OnceLock::new();
    S.get_or_init(|| build_pg_network(&tiny(), ALPHA, BETA, 0.25).unwrap())
}

fn random_local(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n).map(|_| r.gen_range(ALPHA..=BETA)).collect()
}

fn dense_stiffness(patch: &Patch, a: &[f64]) -> DenseMatrix {
    fem::assemble_stiffness_local(patch, a).unwrap().to_dense()
}

fn schur(patch: &Patch, a: &[f64]) -> DenseMatrix {
    let s_inv = Cholesky::new(&dense_stiffness(patch, a)).unwrap().inverse().unwrap();
    let i = fem::quasi_interpolation(patch).unwrap().to_dense();
    i.matmul(&s_inv).unwrap().matmul(&i.transpose()).unwrap()
}

#[test]
fn constant_alpha_bounds_the_rayleigh_quotient() {
    let g = tiny();
    let patch = g.reference_patch().unwrap();
    let m = patch.num_eps_elements();
    let s_alpha = dense_stiffness(&patch, &vec![ALPHA; m]);
    let lam_min = symmetric_eigenvalues(&s_alpha).unwrap()[0];
    let mut r = rng(3);
    for seed in 0..20 {
        let s = dense_stiffness(&patch, &random_local(m, seed));
        let v: Vec<f64> = (0..s.rows()).map(|_| r.gen_range(-1.0..1.0)).collect();
        let sv = s.matvec(&v).unwrap();
        let q: f64 = sv.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() / v.iter().map(|x| x * x).sum::<f64>();
        assert!(lam_min <= q);
    }
}

#[test]
fn spectral_bounds_match_dense_eigenvalues() {
    let g = tiny();
    let b = estimate_spectral_bounds(&g, ALPHA, BETA).unwrap();
    let patch = g.reference_patch().unwrap();
    let m = patch.num_eps_elements();
    let ev_beta = symmetric_eigenvalues(&dense_stiffness(&patch, &vec![BETA; m])).unwrap();
    let ev_alpha = symmetric_eigenvalues(&dense_stiffness(&patch, &vec![ALPHA; m])).unwrap();
    let top = *ev_beta.last().unwrap();
    assert!(b.v_sup >= top && b.v_sup <= 1.01 * top * (1.0 + 1e-12));
    assert!(b.v_inf <= ev_alpha[0] && b.v_inf >= 0.99 * ev_alpha[0] * (1.0 - 1e-12));
    assert!((b.delta() - b.v_resc() * b.v_inf).abs() < 1e-15);
    // Every admissible coefficient has its spectra inside the bounds.
    for seed in 0..20 {
        let a = random_local(m, 100 + seed);
        let ev = symmetric_eigenvalues(&dense_stiffness(&patch, &a)).unwrap();
        assert!(b.v_inf <= ev[0] && *ev.last().unwrap() <= b.v_sup);
        let y = schur(&patch, &a);
        let y = DenseMatrix::from_fn(y.rows(), y.cols(), |i, j| 0.5 * (y.get(i, j) + y.get(j, i)));
        let ey = symmetric_eigenvalues(&y).unwrap();
        assert!(b.vhat_inf <= ey[0] && *ey.last().unwrap() <= b.vhat_sup);
    }
    let i = fem::quasi_interpolation(&patch).unwrap().to_dense();
    assert!((b.norm_interp - spec_norm(&i)).abs() < 1e-10 * b.norm_interp);
}

#[test]
fn interpolation_norm_scales_like_the_mesh_ratio() {
    let mut scaled = Vec::new();
    for r_h in [2, 4, 8] {
        let g = SurrogateGeometry::new(1, 5, 1, 2, r_h).unwrap();
        let b = estimate_spectral_bounds(&g, ALPHA, BETA).unwrap();
        let ratio = 1.0 / (2 * r_h) as f64;
        scaled.push(b.norm_interp * b.norm_interp / ratio);
    }
    let lo = scaled.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = scaled.iter().cloned().fold(0.0, f64::max);
    assert!(lo > 0.0 && hi / lo < 4.0, "{scaled:?}");
}

#[test]
fn split_is_proportional_and_admissible() {
    let b = estimate_spectral_bounds(&tiny(), ALPHA, BETA).unwrap();
    let (t1, g1) = split_tolerances(0.05, &b).unwrap();
    let (t2, g2) = split_tolerances(0.1, &b).unwrap();
    assert!((g2 / g1 - 2.0).abs() < 1e-12);
    assert!(t2 >= t1);
    for eta in [0.01, 0.05, 0.1, 0.25] {
        let (theta, gamma) = split_tolerances(eta, &b).unwrap();
        assert!(theta > 0.0 && theta < eta && gamma > 0.0 && gamma < eta);
        assert!(b.c_theta() * theta + b.c_gamma() * gamma <= eta * (1.0 + 1e-12));
        let ni2 = b.norm_interp * b.norm_interp;
        assert!(theta < b.vhat_inf && theta < b.vhat_inf / (2.0 * b.v_resc() * ni2));
    }
    // θ lies below the smallest eigenvalue of Y at the lower coefficient bound.
    let patch = tiny().reference_patch().unwrap();
    let y = schur(&patch, &vec![ALPHA; patch.num_eps_elements()]);
    let (theta, _) = split_tolerances(0.25, &b).unwrap();
    assert!(theta < symmetric_eigenvalues(&y).unwrap()[0]);
    assert!(matches!(split_tolerances(0.3, &b), Err(Error::InvalidTolerance(_))));
}

#[test]
fn local_contract_on_random_coefficients() {
    let s = tiny_surrogate();
    let patch = s.geometry.reference_patch().unwrap();
    assert_eq!(s.net.input_dim(), patch.num_eps_elements());
    assert_eq!(s.net.output_dim(), patch.num_coarse_nodes() * 2);
    for seed in 0..20 {
        let a = random_local(s.input_dim(), 500 + seed);
        let theta = surrogate_local_matrix(s, &a).unwrap();
        let exact = LocalProblem::from_local(&patch, &a).unwrap().pg_matrix().unwrap();
        assert!(spec_norm(&exact.sub(&theta).unwrap()) <= s.eta);
    }
}

#[test]
fn certificate_accounts_for_the_network() {
    let s = tiny_surrogate();
    assert!(s.certificate.matches(&s.net));
    assert_eq!(s.certificate.tolerance, 0.25);
    let steps: f64 = (1..=7).map(|i| s.certificate.budget_value(&format!("step{i}_depth")).unwrap()).sum();
    assert_eq!(steps as usize, s.net.depth());
    assert!(s.certificate.budget_value("error_bound").unwrap() <= s.eta * (1.0 + 1e-12));
    // Sparse concatenation at most doubles the parameters of each part.
    let parts: f64 = (1..=7).map(|i| s.certificate.budget_value(&format!("step{i}_params")).unwrap()).sum();
    assert!(s.net.num_params() as f64 <= 4.0 * parts);
    assert!((s.delta - s.v_resc * s.bounds.v_inf).abs() < 1e-15);
    assert!((s.delta_hat - s.vhat_resc * s.bounds.vhat_inf).abs() < 1e-15);
    s.validate().unwrap();
}

#[test]
fn affine_steps_are_exact() {
    let g = tiny();
    let p = build_pipeline(&g, ALPHA, BETA, 0.25, DEFAULT_MAX_INVERSION_INPUTS).unwrap();
    let patch = g.reference_patch().unwrap();
    let n = patch.num_fine_inner_nodes();
    let nc = patch.num_coarse_nodes();
    let i = fem::quasi_interpolation(&patch).unwrap().to_dense();
    let (pw, pk) = fem::prolongations(&patch).unwrap();
    let (pw, pk) = (pw.to_dense(), pk.to_dense());
    let a = random_local(patch.num_eps_elements(), 9);

    let s1 = p.steps[0].realize(&a).unwrap();
    assert!(max_diff(&s1, &vec(&dense_stiffness(&patch, &a))) <= 1e-9);

    let mut r = rng(4);
    let x = DenseMatrix::from_fn(n, n, |_, _| r.gen_range(-1.0..1.0));
    let x = DenseMatrix::from_fn(n, n, |a, b| x.get(a, b) + x.get(b, a));
    let s3 = p.steps[2].realize(&vec(&x)).unwrap();
    assert!(max_diff(&s3, &vec(&x.matmul(&i.transpose()).unwrap())) <= 1e-12);

    let xi = x.matmul(&i.transpose()).unwrap();
    let s4 = p.steps[3].realize(&vec(&xi)).unwrap();
    assert!(max_diff(&s4, &vec(&i.matmul(&xi).unwrap())) <= 1e-12);

    let z = DenseMatrix::from_fn(nc, nc, |a, b| 1.0 / (1.0 + a as f64 + b as f64));
    let ipk = i.matmul(&pk).unwrap();
    let s6 = p.steps[5].realize(&vec(&z)).unwrap();
    assert!(max_diff(&s6, &vec(&z.matmul(&ipk).unwrap())) <= 1e-12);

    let w = z.matmul(&ipk).unwrap();
    let s7 = p.steps[6].realize(&vec(&w)).unwrap();
    let expect = pw.transpose().matmul(&i.transpose()).unwrap().matmul(&w).unwrap();
    assert!(max_diff(&s7, &vec(&expect)) <= 1e-12);
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    common::max_abs_diff(a, b)
}

#[test]
fn inversion_steps_meet_their_budgets() {
    let g = tiny();
    let p = build_pipeline(&g, ALPHA, BETA, 0.25, DEFAULT_MAX_INVERSION_INPUTS).unwrap();
    let b = p.bounds;
    let patch = g.reference_patch().unwrap();
    let n = patch.num_fine_inner_nodes();
    let nc = patch.num_coarse_nodes();
    let i = fem::quasi_interpolation(&patch).unwrap().to_dense();
    for seed in 0..5 {
        let a = random_local(patch.num_eps_elements(), 40 + seed);
        let s = dense_stiffness(&patch, &a);
        let s_inv = Cholesky::new(&s).unwrap().inverse().unwrap();
        let x = mat(&p.steps[1].realize(&vec(&s)).unwrap(), n, n).unwrap();
        assert!(x.is_symmetric());
        assert!(spec_norm(&x.sub(&s_inv).unwrap()) <= b.v_resc() * p.theta);

        let y_hat = i.matmul(&x).unwrap().matmul(&i.transpose()).unwrap();
        let y = i.matmul(&s_inv).unwrap().matmul(&i.transpose()).unwrap();
        let y_inv = dense_inverse(&y);
        let out = mat(&p.steps[4].realize(&vec(&y_hat)).unwrap(), nc, nc).unwrap();
        let ni2 = b.norm_interp * b.norm_interp;
        let bound = b.v_resc() * ni2 * p.theta / (b.vhat_inf * b.vhat_inf) + b.vhat_resc() * p.gamma;
        assert!(spec_norm(&out.sub(&y_inv).unwrap()) <= bound);
    }
}

fn dense_inverse(a: &DenseMatrix) -> DenseMatrix {
    let lu = lodnn_core::dense::Lu::new(a).unwrap();
    let mut out = DenseMatrix::zeros(a.rows(), a.cols());
    for j in 0..a.cols() {
        let mut e = vec![0.0; a.rows()];
        e[j] = 1.0;
        out.set_column(j, &lu.solve(&e).unwrap());
    }
    out
}

#[test]
fn forward_pass_is_pure_and_checks_bounds() {
    let s = tiny_surrogate();
    let a = random_local(s.input_dim(), 77);
    assert_eq!(surrogate_local_matrix(s, &a).unwrap(), surrogate_local_matrix(s, &a).unwrap());
    let mut bad = a.clone();
    bad[0] = BETA * 1.5;
    assert!(matches!(surrogate_local_matrix(s, &bad), Err(Error::InvalidCoefficient(_))));
    assert!(surrogate_local_matrix(s, &a[1..]).is_err());
    let patch = s.geometry.reference_patch().unwrap();
    let constant = vec![ALPHA; s.input_dim()];
    let exact = LocalProblem::from_local(&patch, &constant).unwrap().pg_matrix().unwrap();
    assert!(spec_norm(&exact.sub(&surrogate_local_matrix(s, &constant).unwrap()).unwrap()) <= s.eta);
}

#[test]
fn one_network_serves_every_interior_patch() {
    let s = tiny_surrogate();
    let hier = s.geometry.hierarchy().unwrap();
    let a = random_local(s.input_dim(), 8);
    let theta = surrogate_local_matrix(s, &a).unwrap();
    let mut interior = 0;
    for k in 0..hier.num_elements(Level::Coarse) {
        let patch = Patch::from_index(&hier, k, 1).unwrap();
        if !patch.is_interior() {
            assert!(!s.geometry.serves(&patch));
            continue;
        }
        interior += 1;
        assert!(s.geometry.serves(&patch));
        let exact = LocalProblem::from_local(&patch, &a).unwrap().pg_matrix().unwrap();
        assert!(spec_norm(&exact.sub(&theta).unwrap()) <= s.eta);
    }
    assert_eq!(interior, 2);
}

#[test]
fn global_assembly_with_the_exact_surrogate_is_pg_lod() {
    let g = tiny();
    let hier = g.hierarchy().unwrap();
    let a = random_field(&hier, ALPHA, BETA, 12);
    let oracle = ExactSurrogate::new(&g).unwrap();
    let nn = assemble_nn_global(&oracle, &a, 1, &Serial, true).unwrap();
    let pg = lod::assemble_pg_global(&a, 1, &Serial).unwrap();
    assert_eq!(nn.surrogate_patches, 2);
    assert_eq!(nn.s_nn.row_ptr(), pg.row_ptr());
    assert_eq!(nn.s_nn.col_indices(), pg.col_indices());
    assert!(common::max_abs_diff(nn.s_nn.values(), pg.values()) <= 1e-10);
    assert!(nn.per_patch_errors.unwrap().iter().all(|e| e.1 <= 1e-10));
}

#[test]
fn global_assembly_error_is_bounded_by_patch_errors() {
    let s = tiny_surrogate();
    let hier = s.geometry.hierarchy().unwrap();
    let a = random_field(&hier, ALPHA, BETA, 13);
    let nn = assemble_nn_global(s, &a, 1, &Serial, true).unwrap();
    let pg = lod::assemble_pg_global(&a, 1, &Serial).unwrap();
    assert_eq!(nn.s_nn.col_indices(), pg.col_indices());
    let errs = nn.per_patch_errors.unwrap();
    assert_eq!(errs.len(), nn.surrogate_patches);
    let sum: f64 = errs.iter().map(|e| e.1).sum();
    let gap = common::spec_norm(&nn.s_nn.add(&pg.clone().scaled(-1.0)).unwrap().to_dense());
    assert!(gap <= sum * (1.0 + 1e-9) + 1e-14);
    assert!(sum <= errs.len() as f64 * s.eta);
}

#[test]
fn geometry_mismatch_is_rejected() {
    let s = tiny_surrogate();
    let other = MeshHierarchy::new(1, 7, 2, 2).unwrap();
    let a = CoefficientField::constant(&other, 2.0).unwrap();
    assert!(matches!(assemble_nn_global(s, &a, 1, &Serial, false), Err(Error::InvalidGeometry(_))));
    assert!(SurrogateGeometry::new(1, 4, 1, 2, 2).is_err());
}

#[test]
fn size_guard_refuses_large_inversions() {
    let g = SurrogateGeometry::new(1, 7, 2, 2, 2).unwrap();
    let e = build_pipeline(&g, ALPHA, BETA, 0.25, 100).unwrap_err();
    assert!(matches!(e, Error::TooLarge { size: 361, limit: 100, .. }));
}

#[test]
fn exact_surrogate_reproduces_pg_solution() {
    let g = tiny();
    let hier = g.hierarchy().unwrap();
    let a = random_field(&hier, ALPHA, BETA, 21);
    let oracle = ExactSurrogate::new(&g).unwrap();
    let opts = CompareOptions { audited: true, classical: true };
    let rep = compare_solutions(&a, &Load::Constant(1.0), 1, &oracle, &Serial, opts).unwrap();
    assert!(rep.euclidean_gap <= 1e-10 && rep.l2_gap <= 1e-10 && rep.scaled_gap <= 1e-10 && rep.matrix_gap <= 1e-10);
    assert!(rep.l2_classical_gap.unwrap() > 0.0);
    assert_eq!(rep.surrogate_patches, 2);
    assert_eq!(rep.total_patches, 6);
}

#[test]
fn network_surrogate_solution_is_close() {
    let s = tiny_surrogate();
    let hier = s.geometry.hierarchy().unwrap();
    let a = random_field(&hier, ALPHA, BETA, 22);
    let opts = CompareOptions { audited: true, classical: false };
    let rep = compare_solutions(&a, &Load::Constant(1.0), 1, s, &Serial, opts).unwrap();
    assert!(rep.patch_error_max.unwrap() <= s.eta);
    assert!(rep.matrix_gap <= rep.patch_error_sum.unwrap() * (1.0 + 1e-9) + 1e-14);
    assert!(rep.l2_gap < 0.1 * rep.l2_norm_pg);
}

#[test]
fn coarse_mass_norm_matches_quadrature() {
    let hier = MeshHierarchy::new(1, 8, 1, 1).unwrap();
    let v: Vec<f64> = (0..hier.num_free_nodes(Level::Coarse)).map(|i| ((i * 5 % 7) as f64) - 3.0).collect();
    let norm = lod::coarse_l2_norm(&hier, &v).unwrap();
    // Exact integration of the squared piecewise-linear function.
    let h = hier.coarse_size();
    let mut full = vec![0.0];
    full.extend_from_slice(&v);
    full.push(0.0);
    let q: f64 = full.windows(2).map(|w| h * (w[0] * w[0] + w[0] * w[1] + w[1] * w[1]) / 3.0).sum();
    assert!((norm - q.sqrt()).abs() <= 1e-12 * norm);
}
