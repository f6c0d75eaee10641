use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use lodnn::config::ExperimentConfig;
use lodnn::output::{format_f64, write_outputs};
use lodnn::study::{self, obtain_surrogate, patch_audit, problem_coefficient, with_load};
use lodnn::{formats, AppResult, RayonExecutor};
use lodnn_core::fem::{self};
use lodnn_core::lod;
use lodnn_core::mesh::{Level, MeshHierarchy};
use lodnn_core::surrogate::{compare_solutions, CompareOptions, ExactSurrogate, SurrogateGeometry};

#[derive(Parser)]
#[command(name = "lodnn", version, about = "LOD solvers, explicit ReLU surrogates and reproducible studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve with C-LOD and PG-LOD and print errors against the fine reference.
    SolveLod(Common),
    /// Construct a local surrogate network and write it to disk.
    BuildNetwork(Common),
    /// Audit the surrogate on every interior patch of the configured problem.
    LocalContract(Common),
    /// Compare the PG-LOD solution with the surrogate solution.
    Compare(Common),
    /// Run the configured study and write CSV plus manifest.
    Study(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 picks automatically.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

impl Common {
    fn load(&self) -> AppResult<(ExperimentConfig, RayonExecutor)> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.output = o.clone();
        }
        Ok((cfg, RayonExecutor::new(self.threads)?))
    }
}

fn first_point(cfg: &ExperimentConfig) -> AppResult<(MeshHierarchy, usize, f64)> {
    let hier = cfg.problem.hierarchy(cfg.problem.n_coarse[0])?;
    let ell = cfg.lod.ells(&hier)[0];
    let eta = cfg.surrogate.etas(&hier)[0];
    Ok((hier, ell, eta))
}

fn network_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.surrogate.network.clone().unwrap_or_else(|| cfg.output.join("surrogate.lnn"))
}

fn solve_lod(c: &Common) -> AppResult<()> {
    let (cfg, exec) = c.load()?;
    let p = &cfg.problem;
    println!("nH ell l2_clod_vs_fine l2_pg_vs_fine l2_clod_vs_pg max_abs_spg_minus_sc");
    for &n in &p.n_coarse {
        let hier = p.hierarchy(n)?;
        let a = problem_coefficient(&cfg, &hier)?;
        let fine = with_load(&p.load, p.dim, |f| lod::solve_fine_reference(&a, f))?;
        let rhs = with_load(&p.load, p.dim, |f| fem::load_vector(f, Level::Coarse, &hier))?;
        for ell in cfg.lod.ells(&hier) {
            let sys = lod::assemble_lod(&a, ell, &exec, true)?;
            let sc = sys.s_c.expect("requested");
            let u_pg = lod::solve_coarse(&sys.s_pg, &rhs)?;
            let u_c = lod::solve_coarse(&sc, &rhs)?;
            let diff: Vec<f64> = u_c.iter().zip(&u_pg).map(|(x, y)| x - y).collect();
            let gap = sys.s_pg.add(&sc.clone().scaled(-1.0))?.max_abs();
            println!(
                "{n} {ell} {} {} {} {}",
                format_f64(lod::coarse_fine_l2_error(&hier, &u_c, &fine)?),
                format_f64(lod::coarse_fine_l2_error(&hier, &u_pg, &fine)?),
                format_f64(lod::coarse_l2_norm(&hier, &diff)?),
                format_f64(gap)
            );
        }
    }
    Ok(())
}

fn build_network(c: &Common) -> AppResult<()> {
    let (cfg, _) = c.load()?;
    let (hier, ell, eta) = first_point(&cfg)?;
    let t = Instant::now();
    let s = study::build_surrogate(&cfg, &hier, ell, eta)?;
    let path = network_path(&cfg);
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    formats::save_surrogate(&path, &s)?;
    println!("wrote {}", path.display());
    println!("geometry {:?}", s.geometry);
    println!("eta {} theta {} gamma {}", format_f64(s.eta), format_f64(s.theta), format_f64(s.gamma));
    println!("depth {} params {} seconds {:.3}", s.net.depth(), s.net.num_params(), t.elapsed().as_secs_f64());
    Ok(())
}

fn print_patch_errors(errors: &[(usize, f64)], eta: f64) {
    let max = errors.iter().map(|e| e.1).fold(0.0, f64::max);
    for (k, e) in errors {
        println!("patch {k} error {}", format_f64(*e));
    }
    println!("patches {} max_error {} eta {} within {}", errors.len(), format_f64(max), format_f64(eta), max <= eta);
}

fn local_contract(c: &Common) -> AppResult<()> {
    let (cfg, exec) = c.load()?;
    let (hier, ell, eta) = first_point(&cfg)?;
    let a = problem_coefficient(&cfg, &hier)?;
    let s = obtain_surrogate(&cfg, &hier, ell, eta)?;
    print_patch_errors(&patch_audit(&s, &a, ell, &exec)?, s.eta);
    Ok(())
}

fn compare(c: &Common) -> AppResult<()> {
    let (cfg, exec) = c.load()?;
    let (hier, ell, eta) = first_point(&cfg)?;
    let a = problem_coefficient(&cfg, &hier)?;
    let opts = CompareOptions { audited: true, classical: true };
    let (report, errors, eta) = if cfg.surrogate.oracle {
        let s = ExactSurrogate::new(&SurrogateGeometry::of_hierarchy(&hier, ell)?)?;
        let r = with_load(&cfg.problem.load, hier.dim(), |f| compare_solutions(&a, f, ell, &s, &exec, opts))?;
        (r, patch_audit(&s, &a, ell, &exec)?, 0.0)
    } else {
        let s = obtain_surrogate(&cfg, &hier, ell, eta)?;
        let r = with_load(&cfg.problem.load, hier.dim(), |f| compare_solutions(&a, f, ell, &s, &exec, opts))?;
        (r, patch_audit(&s, &a, ell, &exec)?, s.eta)
    };
    print_patch_errors(&errors, eta);
    println!("H {} ell {}", format_f64(report.coarse_size), report.ell);
    println!("surrogate_patches {} of {}", report.surrogate_patches, report.total_patches);
    println!("euclidean_gap {}", format_f64(report.euclidean_gap));
    println!("scaled_gap {}", format_f64(report.scaled_gap));
    println!("l2_gap {}", format_f64(report.l2_gap));
    println!("l2_norm_pg {}", format_f64(report.l2_norm_pg));
    println!("matrix_gap {}", format_f64(report.matrix_gap));
    if let Some(g) = report.l2_classical_gap {
        println!("l2_clod_vs_pg {}", format_f64(g));
    }
    Ok(())
}

fn run_study(c: &Common) -> AppResult<()> {
    let (cfg, exec) = c.load()?;
    let t = Instant::now();
    let rows = study::run(&cfg, &exec)?;
    let files = write_outputs(&cfg.output, &cfg, &rows, exec.threads(), t.elapsed().as_secs_f64())?;
    let bad = rows.iter().filter(|r| !r.is_ok()).count();
    println!("{} rows ({bad} infeasible) -> {} and {}", rows.len(), files.csv.display(), files.manifest.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::SolveLod(c) => solve_lod(c),
        Command::BuildNetwork(c) => build_network(c),
        Command::LocalContract(c) => local_contract(c),
        Command::Compare(c) => compare(c),
        Command::Study(c) => run_study(c),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
