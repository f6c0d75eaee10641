//! Study drivers. Every driver is deterministic given the seed: random
//! draws come from ChaCha8 streams keyed by what they describe, and all
//! parallel work goes through an index-ordered executor.

use std::time::Instant;

use lodnn_core::dense::{symmetric_eigenvalues, DenseMatrix, Lu};
use lodnn_core::exec::Executor;
use lodnn_core::fem::{self, CoefficientField, Load};
use lodnn_core::lod::{self, LocalProblem};
use lodnn_core::mesh::{Level, MeshHierarchy};
use lodnn_core::nn::{self, inversion_network, InversionVariant, Layer, Network};
use lodnn_core::sparse::SparseMatrix;
use lodnn_core::surrogate::{
    self, build_pg_network_with_limit, compare_solutions, CompareOptions, ExactSurrogate, LocalSurrogate, PatchSurrogate,
    SurrogateGeometry,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{CoefficientSpec, ExperimentConfig, LoadSpec, StudyKind};
use crate::error::{format_err, AppResult};
use crate::formats;
use crate::output::{format_f64, Params, ResultRow};

/// Largest matrix handed to the dense eigenvalue solver.
pub const DENSE_EIG_LIMIT: usize = 2048;

const STREAM_COEFFICIENT: u64 = 1 << 40;
const STREAM_VECTORS: u64 = 2 << 40;
const STREAM_LOCAL: u64 = 3 << 40;
const STREAM_NN: u64 = 4 << 40;

/// Generator for one named stream of the run.
pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

/// The configured coefficient on `hier`. Random coefficients depend only on
/// the seed and the ε-grid, so points sharing an ε-grid share the coefficient.
pub fn problem_coefficient(cfg: &ExperimentConfig, hier: &MeshHierarchy) -> AppResult<CoefficientField> {
    draw_coefficient(cfg, hier, 0)
}

/// Draw `k` of the configured coefficient; only random coefficients differ between draws.
pub fn draw_coefficient(cfg: &ExperimentConfig, hier: &MeshHierarchy, k: usize) -> AppResult<CoefficientField> {
    let p = &cfg.problem;
    let d = hier.dim();
    let a = match &p.coefficient {
        CoefficientSpec::Random => {
            let n_eps = hier.per_axis(Level::Eps) as u64;
            let mut r = stream(cfg.seed, (k as u64) << 48 | STREAM_COEFFICIENT | (d as u64) << 32 | n_eps);
            let values = (0..hier.num_elements(Level::Eps)).map(|_| r.gen_range(p.alpha..=p.beta)).collect();
            CoefficientField::new(hier, values, p.alpha, p.beta)?
        }
        CoefficientSpec::Smooth => CoefficientField::from_fn(hier, p.alpha, p.beta, |x| {
            2.0 + x[..d].iter().map(|v| (2.0 * std::f64::consts::PI * v).sin()).product::<f64>()
        })?,
        CoefficientSpec::Constant { value } => {
            CoefficientField::new(hier, vec![*value; hier.num_elements(Level::Eps)], p.alpha, p.beta)?
        }
        CoefficientSpec::File { path } => {
            let a = formats::load_coefficient(path)?;
            let h = a.hierarchy();
            if (h.dim(), h.n_coarse(), h.r_eps()) != (d, hier.n_coarse(), hier.r_eps()) {
                return Err(format_err(
                    "coefficient file",
                    format!("{} describes d={} nH={} r_eps={}, problem needs d={d} nH={} r_eps={}", path.display(), h.dim(), h.n_coarse(), h.r_eps(), hier.n_coarse(), hier.r_eps()),
                ));
            }
            CoefficientField::new(hier, a.values().to_vec(), p.alpha, p.beta)?
        }
    };
    Ok(a)
}

/// Runs `f` with the configured right-hand side.
pub fn with_load<R>(spec: &LoadSpec, d: usize, f: impl FnOnce(&Load<'_>) -> R) -> R {
    match spec {
        LoadSpec::Constant { value } => f(&Load::Constant(*value)),
        LoadSpec::Sine => {
            let g = move |x: &[f64; 3]| x[..d].iter().map(|v| (std::f64::consts::PI * v).sin()).product::<f64>();
            f(&Load::Function(&g))
        }
    }
}

fn params(cfg: &ExperimentConfig, hier: &MeshHierarchy, ell: Option<usize>, eta: Option<f64>) -> Params {
    Params {
        d: Some(hier.dim()),
        coarse_size: Some(hier.coarse_size()),
        eps: Some(hier.eps_size()),
        fine_size: Some(hier.fine_size()),
        ell,
        eta,
        seed: cfg.seed,
    }
}

/// Surrogate for the configured geometry: loaded from `surrogate.network`
/// when that file exists, otherwise constructed.
pub fn obtain_surrogate(cfg: &ExperimentConfig, hier: &MeshHierarchy, ell: usize, eta: f64) -> AppResult<LocalSurrogate> {
    if let Some(path) = &cfg.surrogate.network {
        if path.exists() {
            return formats::load_surrogate_for(path, hier, ell);
        }
    }
    build_surrogate(cfg, hier, ell, eta)
}

pub fn build_surrogate(cfg: &ExperimentConfig, hier: &MeshHierarchy, ell: usize, eta: f64) -> AppResult<LocalSurrogate> {
    let geom = SurrogateGeometry::of_hierarchy(hier, ell)?;
    let p = &cfg.problem;
    Ok(build_pg_network_with_limit(&geom, p.alpha, p.beta, eta, cfg.surrogate.max_inversion_inputs)?)
}

/// `(coarse element, ‖S^pg_ω − Θ_K‖₂)` for every interior patch of the problem.
pub fn patch_audit<S: PatchSurrogate, E: Executor>(s: &S, a: &CoefficientField, ell: usize, exec: &E) -> AppResult<Vec<(usize, f64)>> {
    let st = surrogate::assemble_nn_global(s, a, ell, exec, true)?;
    Ok(st.per_patch_errors.unwrap_or_default())
}

/// Runs the configured study and returns one row per parameter point.
pub fn run<E: Executor>(cfg: &ExperimentConfig, exec: &E) -> AppResult<Vec<ResultRow>> {
    cfg.validate()?;
    let mut rows = match cfg.study {
        StudyKind::FineSweep => fine_sweep(cfg, exec),
        StudyKind::EllSweep => ell_sweep(cfg, exec),
        StudyKind::CoarseSweep => coarse_sweep(cfg, exec),
        StudyKind::EigStudy => eig_study(cfg, exec),
        StudyKind::NnCalculusSuite => nn_suite(cfg, exec),
        StudyKind::LocalContract => local_contract(cfg, exec),
    };
    for r in &mut rows {
        r.check_schema();
    }
    Ok(rows)
}

/// Times `body` on a fresh row; errors mark the row infeasible.
fn point(rows: &mut Vec<ResultRow>, mut row: ResultRow, body: impl FnOnce(&mut ResultRow) -> AppResult<()>) {
    let t = Instant::now();
    if let Err(e) = body(&mut row) {
        row.fail(e);
    }
    row.seconds = t.elapsed().as_secs_f64();
    rows.push(row);
}

fn failed_hierarchy(cfg: &ExperimentConfig, rows: &mut Vec<ResultRow>, n: usize, e: impl std::fmt::Display) {
    let mut row = ResultRow::new(cfg.study, format!("nH={n}"), Params { seed: cfg.seed, ..Params::default() });
    row.fail(e);
    rows.push(row);
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Nodal Q1 interpolation of a free-node fine vector onto a finer fine mesh
/// with the same coarse and ε meshes.
pub fn interpolate_fine(from: &MeshHierarchy, v: &[f64], to: &MeshHierarchy) -> Vec<f64> {
    let d = from.dim();
    let nf = from.per_axis(Level::Fine);
    let q = to.per_axis(Level::Fine) / nf;
    (0..to.num_free_nodes(Level::Fine))
        .map(|i| {
            let m = to.free_node_multi(Level::Fine, i);
            let mut base = [0; 3];
            let mut t = [0.0; 3];
            for a in 0..d {
                let c = (m[a] / q).min(nf - 1);
                base[a] = c;
                t[a] = (m[a] - c * q) as f64 / q as f64;
            }
            let mut s = 0.0;
            for corner in 0..1usize << d {
                let mut node = base;
                let mut w = 1.0;
                for a in 0..d {
                    let b = (corner >> a) & 1;
                    node[a] += b;
                    w *= if b == 1 { t[a] } else { 1.0 - t[a] };
                }
                if w != 0.0 {
                    if let Some(j) = from.free_node_index(Level::Fine, &node) {
                        s += w * v[j];
                    }
                }
            }
            s
        })
        .collect()
}

fn quadratic_norm(m: &SparseMatrix, v: &[f64]) -> AppResult<f64> {
    Ok(fem::mass_norm(m, v)?)
}

fn fine_sweep<E: Executor>(cfg: &ExperimentConfig, _exec: &E) -> Vec<ResultRow> {
    let p = &cfg.problem;
    let levels = &cfg.fine.r_h_levels;
    let mut rows = Vec::new();
    for &n in &p.n_coarse {
        let r_eps = p.r_eps_for(n);
        let reference = (|| -> AppResult<_> {
            let h = MeshHierarchy::new(p.dim, n, r_eps, *levels.last().expect("validated"))?;
            let a = problem_coefficient(cfg, &h)?;
            let u = with_load(&p.load, p.dim, |f| lod::solve_fine_reference(&a, f))?;
            let lap = fem::assemble_laplacian(Level::Fine, &h)?;
            let stiff = fem::assemble_global_stiffness(&a)?;
            let mass = fem::assemble_mass(Level::Fine, &h)?;
            Ok((h, a, u, lap, stiff, mass))
        })();
        let (href, aref, uref, lap, stiff, mass) = match reference {
            Ok(r) => r,
            Err(e) => {
                failed_hierarchy(cfg, &mut rows, n, e);
                continue;
            }
        };
        let first = rows.len();
        for &r_h in &levels[..levels.len() - 1] {
            let hier = MeshHierarchy::new(p.dim, n, r_eps, r_h).expect("validated");
            let row = ResultRow::new(cfg.study, format!("nH={n} r_h={r_h}"), params(cfg, &hier, None, None));
            point(&mut rows, row, |row| {
                let a = CoefficientField::new(&hier, aref.values().to_vec(), aref.alpha(), aref.beta())?;
                let u = with_load(&p.load, p.dim, |f| lod::solve_fine_reference(&a, f))?;
                let e: Vec<f64> = uref.iter().zip(interpolate_fine(&hier, &u, &href)).map(|(x, y)| x - y).collect();
                row.push("h1_error", quadratic_norm(&lap, &e)?);
                row.push("energy_error", quadratic_norm(&stiff, &e)?);
                row.push("l2_error", quadratic_norm(&mass, &e)?);
                Ok(())
            });
        }
        let pts: Vec<(f64, f64)> = rows[first..]
            .iter()
            .filter(|r| r.is_ok())
            .filter_map(|r| Some((r.params.fine_size?, r.metric("h1_error")?)))
            .collect();
        let rate = if pts.len() >= 2 && pts.iter().all(|p| p.1 > 0.0) { Some(loglog_slope(&pts)) } else { None };
        for r in rows[first..].iter_mut().filter(|r| r.is_ok()) {
            if let Some(rate) = rate {
                r.push("h1_rate", rate);
            }
            r.push("s_target", cfg.fine.regularity_s);
        }
    }
    rows
}

fn ell_sweep<E: Executor>(cfg: &ExperimentConfig, exec: &E) -> Vec<ResultRow> {
    let p = &cfg.problem;
    let mut rows = Vec::new();
    for &n in &p.n_coarse {
        let setup = (|| -> AppResult<_> {
            let hier = p.hierarchy(n)?;
            let a = problem_coefficient(cfg, &hier)?;
            let fine = with_load(&p.load, p.dim, |f| lod::solve_fine_reference(&a, f))?;
            let rhs = with_load(&p.load, p.dim, |f| fem::load_vector(f, Level::Coarse, &hier))?;
            Ok((hier, a, fine, rhs))
        })();
        let (hier, a, fine, rhs) = match setup {
            Ok(s) => s,
            Err(e) => {
                failed_hierarchy(cfg, &mut rows, n, e);
                continue;
            }
        };
        for ell in cfg.lod.ells(&hier) {
            let row = ResultRow::new(cfg.study, format!("nH={n} ell={ell}"), params(cfg, &hier, Some(ell), None));
            point(&mut rows, row, |row| {
                let sys = lod::assemble_lod(&a, ell, exec, true)?;
                let u_pg = lod::solve_coarse(&sys.s_pg, &rhs)?;
                let u_c = lod::solve_coarse(sys.s_c.as_ref().expect("requested"), &rhs)?;
                let diff: Vec<f64> = u_c.iter().zip(&u_pg).map(|(x, y)| x - y).collect();
                row.push("l2_clod_vs_pg", lod::coarse_l2_norm(&hier, &diff)?);
                row.push("l2_pg_vs_fine", lod::coarse_fine_l2_error(&hier, &u_pg, &fine)?);
                row.push("l2_clod_vs_fine", lod::coarse_fine_l2_error(&hier, &u_c, &fine)?);
                row.push("l2_norm_pg", lod::coarse_l2_norm(&hier, &u_pg)?);
                Ok(())
            });
        }
    }
    rows
}

/// Local matrices used in place of the deterministic ones in the H-sweep.
enum Source {
    /// No interior patch exists, so `S^nn = S^pg`.
    Trivial,
    Oracle(ExactSurrogate),
    Network(Box<LocalSurrogate>),
}

/// Metrics aggregated as a root mean square over coefficient draws.
const RMS_METRICS: [&str; 7] =
    ["l2_pg_vs_fine", "l2_norm_fine", "l2_pg_vs_nn", "l2_pg_vs_nn_over_H", "euclidean_gap", "scaled_gap", "matrix_gap"];
/// Metrics aggregated as a maximum over coefficient draws.
const MAX_METRICS: [&str; 2] = ["patch_error_sum", "patch_error_max"];

fn aggregate_draws(row: &mut ResultRow, draws: Vec<Vec<(&'static str, f64)>>) {
    let n = draws.len() as f64;
    let mut it = draws.iter();
    let first = it.next().expect("at least one draw");
    if draws.len() == 1 {
        row.metrics.extend(first.iter().copied());
        return;
    }
    for (i, &(k, v0)) in first.iter().enumerate() {
        let vals = draws.iter().map(|d| d[i].1);
        let v = if RMS_METRICS.contains(&k) {
            (vals.map(|v| v * v).sum::<f64>() / n).sqrt()
        } else if MAX_METRICS.contains(&k) {
            vals.fold(f64::NEG_INFINITY, f64::max)
        } else {
            v0
        };
        row.push(k, v);
    }
}

struct Draw {
    a: CoefficientField,
    fine: Vec<f64>,
    fine_norm: f64,
}

fn coarse_sweep<E: Executor>(cfg: &ExperimentConfig, exec: &E) -> Vec<ResultRow> {
    let p = &cfg.problem;
    let mut rows = Vec::new();
    for &n in &p.n_coarse {
        let setup = (|| -> AppResult<_> {
            let hier = p.hierarchy(n)?;
            let rhs = with_load(&p.load, p.dim, |f| fem::load_vector(f, Level::Coarse, &hier))?;
            let mass = fem::assemble_mass(Level::Fine, &hier)?;
            let mut draws = Vec::with_capacity(cfg.draws);
            for k in 0..cfg.draws {
                let a = draw_coefficient(cfg, &hier, k)?;
                let fine = with_load(&p.load, p.dim, |f| lod::solve_fine_reference(&a, f))?;
                let fine_norm = fem::mass_norm(&mass, &fine)?;
                draws.push(Draw { a, fine, fine_norm });
            }
            Ok((hier, rhs, draws))
        })();
        let (hier, rhs, draws) = match setup {
            Ok(s) => s,
            Err(e) => {
                failed_hierarchy(cfg, &mut rows, n, e);
                continue;
            }
        };
        for ell in cfg.lod.ells(&hier) {
            let etas = if cfg.surrogate.enabled { cfg.surrogate.etas(&hier).into_iter().map(Some).collect() } else { vec![None] };
            for eta in etas {
                let label = match eta {
                    Some(e) => format!("nH={n} ell={ell} eta={}", format_f64(e)),
                    None => format!("nH={n} ell={ell}"),
                };
                let row = ResultRow::new(cfg.study, label, params(cfg, &hier, Some(ell), eta));
                point(&mut rows, row, |row| {
                    let source = match eta {
                        Some(eta) => Some(surrogate_source(cfg, &hier, ell, eta)?),
                        None => None,
                    };
                    if let Some(Source::Network(s)) = &source {
                        row.push("network_depth", s.net.depth() as f64);
                        row.push("network_params", s.net.num_params() as f64);
                        row.push("theta", s.theta);
                        row.push("gamma", s.gamma);
                    }
                    let mut per_draw = Vec::with_capacity(draws.len());
                    for d in &draws {
                        let mut m = Vec::new();
                        let s_pg = lod::assemble_pg_global(&d.a, ell, exec)?;
                        let u_pg = lod::solve_coarse(&s_pg, &rhs)?;
                        m.push(("l2_pg_vs_fine", lod::coarse_fine_l2_error(&hier, &u_pg, &d.fine)?));
                        m.push(("l2_norm_fine", d.fine_norm));
                        if let Some(src) = &source {
                            surrogate_gaps(cfg, &mut m, &hier, &d.a, ell, src, exec)?;
                        }
                        per_draw.push(m);
                    }
                    aggregate_draws(row, per_draw);
                    Ok(())
                });
            }
        }
    }
    rows
}

fn surrogate_source(cfg: &ExperimentConfig, hier: &MeshHierarchy, ell: usize, eta: f64) -> AppResult<Source> {
    let geom = match SurrogateGeometry::of_hierarchy(hier, ell) {
        Ok(g) => g,
        Err(_) if hier.n_coarse() < 2 * ell + 3 => return Ok(Source::Trivial),
        Err(e) => return Err(e.into()),
    };
    Ok(if cfg.surrogate.oracle {
        Source::Oracle(ExactSurrogate::new(&geom)?)
    } else {
        Source::Network(Box::new(build_surrogate(cfg, hier, ell, eta)?))
    })
}

fn surrogate_gaps<E: Executor>(
    cfg: &ExperimentConfig,
    m: &mut Vec<(&'static str, f64)>,
    hier: &MeshHierarchy,
    a: &CoefficientField,
    ell: usize,
    source: &Source,
    exec: &E,
) -> AppResult<()> {
    let hc = hier.coarse_size();
    let opts = CompareOptions { audited: cfg.surrogate.audited, classical: false };
    let load = &cfg.problem.load;
    let report = match source {
        Source::Trivial => {
            m.extend([
                ("l2_pg_vs_nn", 0.0),
                ("l2_pg_vs_nn_over_H", 0.0),
                ("euclidean_gap", 0.0),
                ("scaled_gap", 0.0),
                ("matrix_gap", 0.0),
                ("surrogate_patches", 0.0),
                ("total_patches", hier.num_elements(Level::Coarse) as f64),
            ]);
            return Ok(());
        }
        Source::Oracle(s) => with_load(load, hier.dim(), |f| compare_solutions(a, f, ell, s, exec, opts))?,
        Source::Network(s) => with_load(load, hier.dim(), |f| compare_solutions(a, f, ell, s.as_ref(), exec, opts))?,
    };
    m.push(("l2_pg_vs_nn", report.l2_gap));
    m.push(("l2_pg_vs_nn_over_H", report.l2_gap / hc));
    m.push(("euclidean_gap", report.euclidean_gap));
    m.push(("scaled_gap", report.scaled_gap));
    m.push(("matrix_gap", report.matrix_gap));
    if let (Some(s), Some(mx)) = (report.patch_error_sum, report.patch_error_max) {
        m.push(("patch_error_sum", s));
        m.push(("patch_error_max", mx));
    }
    m.push(("surrogate_patches", report.surrogate_patches as f64));
    m.push(("total_patches", report.total_patches as f64));
    Ok(())
}

fn check_dense(size: usize) -> AppResult<()> {
    if size > DENSE_EIG_LIMIT {
        return Err(lodnn_core::Error::TooLarge { size, limit: DENSE_EIG_LIMIT, what: "dense eigenvalue problem" }.into());
    }
    Ok(())
}

fn eigenvalues(m: &SparseMatrix) -> AppResult<Vec<f64>> {
    check_dense(m.rows())?;
    Ok(symmetric_eigenvalues(&m.to_dense())?)
}

fn eig_study<E: Executor>(cfg: &ExperimentConfig, exec: &E) -> Vec<ResultRow> {
    let p = &cfg.problem;
    let mut rows = Vec::new();
    for &n in &p.n_coarse {
        let hier = match p.hierarchy(n) {
            Ok(h) => h,
            Err(e) => {
                failed_hierarchy(cfg, &mut rows, n, e);
                continue;
            }
        };
        let ell = cfg.lod.ells(&hier)[0];
        let row = ResultRow::new(cfg.study, format!("nH={n} ell={ell}"), params(cfg, &hier, Some(ell), None));
        point(&mut rows, row, |row| {
            let d = hier.dim() as i32;
            let hc = hier.coarse_size();
            let hd = hc.powi(d);
            check_dense((hier.per_axis(Level::Fine) - 1).pow(d as u32))?;
            let a = problem_coefficient(cfg, &hier)?;
            let sys = lod::assemble_lod(&a, ell, exec, true)?;
            let sc = sys.s_c.expect("requested");
            let lmin = eigenvalues(&sc)?[0];
            row.push("lambda_min_sc", lmin);
            row.push("lambda_min_sc_over_Hd", lmin / hd);
            let h = hier.fine_size();
            let ev = eigenvalues(&fem::assemble_laplacian(Level::Fine, &hier)?)?;
            row.push("fine_lambda_max_scaled", ev[ev.len() - 1] * h.powi(2 - d));
            row.push("fine_lambda_min_scaled", ev[0] * h.powi(-d));
            let mass = fem::assemble_mass(Level::Coarse, &hier)?;
            let nc = mass.rows();
            let mut r = stream(cfg.seed, STREAM_VECTORS | n as u64);
            let lower = (1.0f64 / 6.0).powi(d);
            let (mut lo, mut hi, mut bad) = (f64::INFINITY, 0.0f64, 0usize);
            for _ in 0..cfg.samples {
                let v: Vec<f64> = (0..nc).map(|_| r.gen_range(-1.0..1.0)).collect();
                let vv: f64 = v.iter().map(|x| x * x).sum();
                let ratio = fem::mass_norm(&mass, &v)?.powi(2) / (vv * hd);
                lo = lo.min(ratio);
                hi = hi.max(ratio);
                if ratio < lower * (1.0 - 1e-12) || ratio > 1.0 + 1e-12 {
                    bad += 1;
                }
            }
            row.push("mass_ratio_min", lo);
            row.push("mass_ratio_max", hi);
            row.push("mass_lower_factor", lower);
            row.push("norm_equiv_violations", bad as f64);
            Ok(())
        });
    }
    rows
}

fn random_sparse(r: &mut impl Rng, rows: usize, cols: usize, density: f64) -> SparseMatrix {
    let mut t = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            if r.gen_bool(density) {
                t.push((i, j, r.gen_range(-1.0..1.0)));
            }
        }
    }
    SparseMatrix::from_triplets(rows, cols, t).expect("indices in range")
}

fn random_net(r: &mut impl Rng, input: usize, depth: usize, output: usize) -> Network {
    let mut dims = vec![input];
    for _ in 1..depth {
        dims.push(r.gen_range(1..6));
    }
    dims.push(output);
    let layers = (0..depth)
        .map(|l| {
            let w = random_sparse(r, dims[l + 1], dims[l], 0.6);
            let b = (0..dims[l + 1]).map(|_| if r.gen_bool(0.5) { r.gen_range(-1.0..1.0) } else { 0.0 }).collect();
            Layer::new(w, b).expect("matching sizes")
        })
        .collect();
    Network::new(layers).expect("non-empty")
}

fn random_vec(r: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(-scale..scale)).collect()
}

fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs() / scale))
}

/// Tolerance for realizations that are mathematically identical but may
/// round differently.
const REALIZATION_TOL: f64 = 1e-12;

struct Tally {
    cases: usize,
    failures: usize,
    max_error: f64,
}

impl Tally {
    fn new() -> Self {
        Self { cases: 0, failures: 0, max_error: 0.0 }
    }

    fn record(&mut self, ok: bool, err: f64) {
        self.cases += 1;
        self.failures += usize::from(!ok);
        self.max_error = self.max_error.max(err);
    }

    fn write(&self, row: &mut ResultRow) {
        row.push("cases", self.cases as f64);
        row.push("failures", self.failures as f64);
        row.push("max_error", self.max_error);
    }
}

fn nn_suite<E: Executor>(cfg: &ExperimentConfig, exec: &E) -> Vec<ResultRow> {
    let mut rows = Vec::new();
    let base = Params { seed: cfg.seed, ..Params::default() };
    let cases = cfg.samples;

    point(&mut rows, ResultRow::new(cfg.study, "identity", base), |row| {
        let mut r = stream(cfg.seed, STREAM_NN | 1);
        let mut t = Tally::new();
        for _ in 0..cases {
            let n = r.gen_range(1..8);
            let depth = r.gen_range(1..5);
            let x = random_vec(&mut r, n, 1e6);
            let y = Network::identity_with_depth(n, depth).realize(&x)?;
            t.record(y == x, rel_error(&y, &x));
        }
        t.write(row);
        Ok(())
    });

    point(&mut rows, ResultRow::new(cfg.study, "sparse-concat", base), |row| {
        let mut r = stream(cfg.seed, STREAM_NN | 2);
        let mut t = Tally::new();
        for _ in 0..cases {
            let mid = r.gen_range(1..5);
            let (lo, li) = (r.gen_range(1..4), r.gen_range(1..4));
            let outer = random_net(&mut r, mid, lo, 2);
            let inner = random_net(&mut r, 3, li, mid);
            let c = outer.sparse_concat(&inner)?;
            let x = random_vec(&mut r, 3, 3.0);
            let err = rel_error(&c.realize(&x)?, &outer.realize(&inner.realize(&x)?)?);
            let ok = c.depth() == outer.depth() + inner.depth()
                && c.num_params() <= 2 * outer.num_params() + 2 * inner.num_params()
                && err <= REALIZATION_TOL;
            t.record(ok, err);
        }
        t.write(row);
        Ok(())
    });

    point(&mut rows, ResultRow::new(cfg.study, "parallelize", base), |row| {
        let mut r = stream(cfg.seed, STREAM_NN | 3);
        let mut t = Tally::new();
        for _ in 0..cases {
            let depth = r.gen_range(1..4);
            let shared = r.gen_bool(0.5);
            let a = random_net(&mut r, 3, depth, 2);
            let b = random_net(&mut r, if shared { 3 } else { 2 }, depth, 4);
            let p = Network::parallelize(&[&a, &b], shared)?;
            let x = random_vec(&mut r, 3, 3.0);
            let y = if shared { x.clone() } else { random_vec(&mut r, 2, 3.0) };
            let mut input = x.clone();
            if !shared {
                input.extend_from_slice(&y);
            }
            let mut want = a.realize(&x)?;
            want.extend(b.realize(&y)?);
            let err = rel_error(&p.realize(&input)?, &want);
            let ok = p.depth() == depth && p.num_params() == a.num_params() + b.num_params() && err <= REALIZATION_TOL;
            t.record(ok, err);
        }
        t.write(row);
        Ok(())
    });

    point(&mut rows, ResultRow::new(cfg.study, "permutation-concat", base), |row| {
        let mut r = stream(cfg.seed, STREAM_NN | 4);
        let mut t = Tally::new();
        for _ in 0..cases {
            let out = r.gen_range(1..6);
            let depth = r.gen_range(1..4);
            let net = random_net(&mut r, 3, depth, out);
            let mut perm: Vec<usize> = (0..out).collect();
            for i in (1..out).rev() {
                perm.swap(i, r.gen_range(0..=i));
            }
            let q = SparseMatrix::from_triplets(out, out, perm.iter().enumerate().map(|(i, &j)| (i, j, 1.0)).collect())?;
            let c = Network::linear(q).concat(&net)?;
            let x = random_vec(&mut r, 3, 3.0);
            let y = net.realize(&x)?;
            let want: Vec<f64> = perm.iter().map(|&j| y[j]).collect();
            let z = c.realize(&x)?;
            let ok = (c.depth(), c.num_params()) == (net.depth(), net.num_params()) && z == want;
            t.record(ok, rel_error(&z, &want));
        }
        t.write(row);
        Ok(())
    });

    let mut id = 0;
    for n in 2..=6 {
        for delta in [0.25, 0.5] {
            for theta in [0.1, 0.01] {
                id += 1;
                let label = format!("inversion n={n} delta={delta} theta={theta}");
                point(&mut rows, ResultRow::new(cfg.study, label, base), |row| {
                    inversion_point(cfg, row, exec, STREAM_NN | 0x100 | id, n, delta, theta)
                });
            }
        }
    }
    rows
}

/// Random symmetric matrix with `‖A‖₂ = radius` for half of the draws and
/// a uniform fraction of it otherwise.
pub fn random_symmetric(r: &mut impl Rng, n: usize, radius: f64) -> AppResult<DenseMatrix> {
    let g = DenseMatrix::from_fn(n, n, |_, _| r.gen_range(-1.0..1.0));
    let s = DenseMatrix::from_fn(n, n, |i, j| 0.5 * (g.get(i, j) + g.get(j, i)));
    let ev = symmetric_eigenvalues(&s)?;
    let norm = ev[0].abs().max(ev[n - 1].abs()).max(1e-300);
    let target = if r.gen_bool(0.5) { radius } else { radius * r.gen_range(0.0..1.0) };
    let mut out = s;
    out.scale(target / norm);
    Ok(out)
}

fn inverse_of_identity_minus(a: &DenseMatrix) -> AppResult<DenseMatrix> {
    let n = a.rows();
    let m = DenseMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - a.get(i, j));
    let lu = Lu::new(&m)?;
    let mut inv = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        inv.set_column(j, &lu.solve(&e)?);
    }
    Ok(inv)
}

#[allow(clippy::too_many_arguments)]
fn inversion_point<E: Executor>(
    cfg: &ExperimentConfig,
    row: &mut ResultRow,
    exec: &E,
    stream_id: u64,
    n: usize,
    delta: f64,
    theta: f64,
) -> AppResult<()> {
    let (net, cert) = inversion_network(n, delta, theta, InversionVariant::Symmetric)?;
    let mut r = stream(cfg.seed, stream_id);
    let inputs: Vec<DenseMatrix> = (0..cfg.samples).map(|_| random_symmetric(&mut r, n, 1.0 - delta)).collect::<AppResult<_>>()?;
    let results = exec.map(inputs.len(), |i| -> AppResult<(f64, f64, bool)> {
        let a = &inputs[i];
        let out = nn::mat(&net.realize(&nn::vec(a))?, n, n)?;
        let err = out.sub(&inverse_of_identity_minus(a)?)?.spectral_norm_exact();
        Ok((err, out.spectral_norm_exact(), out.is_symmetric()))
    });
    let mut t = Tally::new();
    let (mut excess, mut asym) = (f64::NEG_INFINITY, 0usize);
    for res in results {
        let (err, norm, sym) = res?;
        let bound = theta + 1.0 / delta;
        excess = excess.max(norm - bound);
        asym += usize::from(!sym);
        t.record(err <= theta && norm <= bound && sym, err);
    }
    t.write(row);
    row.push("max_norm_excess", excess);
    row.push("asymmetric_outputs", asym as f64);
    row.push("network_depth", net.depth() as f64);
    row.push("network_params", net.num_params() as f64);
    if !cert.matches(&net) {
        return Err(format_err("inversion certificate", "depth or size does not match the network"));
    }
    Ok(())
}

/// Per-sample local errors `‖S^pg_ω(a) − Θ(a)‖₂` on random admissible coefficients.
pub fn local_errors<E: Executor>(s: &LocalSurrogate, seed: u64, stream_id: u64, samples: usize, exec: &E) -> AppResult<Vec<f64>> {
    let patch = s.geometry.reference_patch()?;
    let mut r = stream(seed, stream_id);
    let coeffs: Vec<Vec<f64>> = (0..samples).map(|_| (0..s.input_dim()).map(|_| r.gen_range(s.alpha..=s.beta)).collect()).collect();
    exec.map(coeffs.len(), |i| -> AppResult<f64> {
        let theta = surrogate::surrogate_local_matrix(s, &coeffs[i])?;
        let exact = LocalProblem::from_local(&patch, &coeffs[i])?.pg_matrix()?;
        Ok(exact.sub(&theta)?.spectral_norm_exact())
    })
    .into_iter()
    .collect()
}

fn local_contract<E: Executor>(cfg: &ExperimentConfig, exec: &E) -> Vec<ResultRow> {
    let p = &cfg.problem;
    let mut rows = Vec::new();
    let mut id = 0u64;
    for &n in &p.n_coarse {
        let hier = match p.hierarchy(n) {
            Ok(h) => h,
            Err(e) => {
                failed_hierarchy(cfg, &mut rows, n, e);
                continue;
            }
        };
        for ell in cfg.lod.ells(&hier) {
            for eta in cfg.surrogate.etas(&hier) {
                id += 1;
                let row = ResultRow::new(cfg.study, format!("nH={n} ell={ell} eta={}", format_f64(eta)), params(cfg, &hier, Some(ell), Some(eta)));
                point(&mut rows, row, |row| {
                    let s = build_surrogate(cfg, &hier, ell, eta)?;
                    let errs = local_errors(&s, cfg.seed, STREAM_LOCAL | id, cfg.samples, exec)?;
                    let mut t = Tally::new();
                    for &e in &errs {
                        t.record(e <= eta, e);
                    }
                    t.write(row);
                    row.push("mean_error", errs.iter().sum::<f64>() / errs.len() as f64);
                    row.push("error_bound", s.bounds.error_bound(s.theta, s.gamma));
                    row.push("certificate_matches", f64::from(u8::from(s.certificate.matches(&s.net))));
                    row.push("network_depth", s.net.depth() as f64);
                    row.push("network_params", s.net.num_params() as f64);
                    row.push("theta", s.theta);
                    row.push("gamma", s.gamma);
                    Ok(())
                });
            }
        }
    }
    rows
}
