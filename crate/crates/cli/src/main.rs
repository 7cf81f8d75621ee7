use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use sparsetomo::config::{parse_config, PhantomChoice, RunConfig, SolverChoice};
use sparsetomo::geometry::{ImageGrid, ProjectionGeometry};
use sparsetomo::io::{self, CsvRecord};
use sparsetomo::l1::solve_l1;
use sparsetomo::metrics::{gradient_sparsity, rmse};
use sparsetomo::noise::{apply_poisson_dose, noise_norm_estimate, simulate_ideal_data, DoseSpec};
use sparsetomo::phantom::{generate, pixel_sparsity};
use sparsetomo::projector::{build_system_matrix, Sinogram, SystemMatrix};
use sparsetomo::seed::derive_seed;
use sparsetomo::study::{
    epsilon_grid, extract_transition_boundary, run_dose_study, run_epsilon_sweep, run_phase_diagram,
    run_wedge_study, SweepSolver, BOUNDARY_LEVEL,
};
use sparsetomo::tv::solve_tv_asdpocs;

/// Seed-derivation task names for single-object commands.
const TASK_OBJECT: &str = "object";
const TASK_OBJECT_NOISE: &str = "object-noise";

#[derive(Parser)]
#[command(name = "sparsetomo", version, about = "Sparse-view tomography reconstruction and sampling studies")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults are used for missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `base_seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured phantom.
    Phantom,
    /// Project a phantom (generated, or read with --image) to a sinogram.
    Project {
        #[arg(long)]
        image: Option<PathBuf>,
    },
    /// Reconstruct a sinogram (read with --sinogram, or simulated from the phantom).
    Reconstruct {
        #[arg(long)]
        sinogram: Option<PathBuf>,
    },
    /// Recovery-fraction map over (k, mu) with the l1 solver.
    PhaseDiagram,
    /// Optimal RMSE over total counts and projection numbers.
    DoseStudy,
    /// Optimal RMSE over tilt ranges and projection numbers.
    WedgeStudy,
    /// RMSE against the data tolerance for one noisy dataset.
    EpsSweep,
    /// Print the effective configuration.
    ShowConfig,
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_config(&text).with_context(|| format!("in {}", path.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.base_seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    if let Some(n) = cli.common.threads {
        if n == 0 {
            bail!("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let out = &cli.common.out;
    if !matches!(cli.command, Command::ShowConfig) {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    }
    match cli.command {
        Command::Phantom => {
            let x = phantom(&cfg)?;
            write_image(&cfg, &x, out, "phantom")?;
            println!(
                "{}x{} phantom: pixel sparsity {:.4}, gradient sparsity {:.4}",
                x.width(),
                x.height(),
                pixel_sparsity(&x),
                gradient_sparsity(&x)
            );
        }
        Command::Project { image } => {
            let x = match image {
                Some(p) => io::read_image_text(&p)?,
                None => phantom(&cfg)?,
            };
            let a = system_matrix(&cfg, &x)?;
            let b = data(&cfg, &a, &x)?;
            let path = out.join("sinogram.txt");
            io::write_sinogram_text(&b, &path)?;
            println!("wrote {}", path.display());
        }
        Command::Reconstruct { sinogram } => reconstruct(&cfg, sinogram.as_deref(), out)?,
        Command::PhaseDiagram => {
            let cells = run_phase_diagram(&cfg.phase_diagram_config())?;
            write_csv(&cells, out, "phase_diagram.csv")?;
            let boundary: Vec<BoundaryPoint> = extract_transition_boundary(&cells, BOUNDARY_LEVEL)?
                .into_iter()
                .map(|(k, mu)| BoundaryPoint { k, mu })
                .collect();
            write_csv(&boundary, out, "boundary.csv")?;
        }
        Command::DoseStudy => {
            let x = phantom(&cfg)?;
            let recs = run_dose_study(&x, &cfg.total_counts_values, &cfg.n_proj_values, &cfg.noisy_study_config())?;
            report_failures(&recs);
            write_csv(&recs, out, "dose_study.csv")?;
        }
        Command::WedgeStudy => {
            let x = phantom(&cfg)?;
            let n_e = cfg.total_counts.unwrap_or(cfg.total_counts_values[0]);
            let recs = run_wedge_study(&x, n_e, &cfg.theta_values, &cfg.n_proj_values, &cfg.noisy_study_config())?;
            report_failures(&recs);
            write_csv(&recs, out, "wedge_study.csv")?;
        }
        Command::EpsSweep => {
            let Some(n_e) = cfg.total_counts else {
                bail!("eps-sweep needs `total_counts` in the config");
            };
            let x = phantom(&cfg)?;
            let a = system_matrix(&cfg, &x)?;
            let b = simulate_ideal_data(&a, &x)?;
            let noisy = apply_poisson_dose(&b, &DoseSpec::new(n_e, noise_seed(&cfg))?)?;
            let scale = noise_norm_estimate(&noisy).filter(|&s| s > 0.0).context("no counts recorded")?;
            let grid = epsilon_grid(scale, cfg.eps_lo, cfg.eps_hi, cfg.eps_points)?;
            let solver = match cfg.solver {
                SolverChoice::L1 => SweepSolver::L1(cfg.l1_options()),
                SolverChoice::Tv => SweepSolver::Tv(cfg.tv_options()),
            };
            let sweep = run_epsilon_sweep(&a, &noisy, &x, &grid, &solver)?;
            write_csv(&sweep.curve, out, "eps_sweep.csv")?;
            write_image(&cfg, &sweep.best_image, out, "best")?;
            let best = sweep.best_point();
            println!("optimal epsilon {:.4e}, rmse {:.4e}", best.epsilon, best.rmse);
        }
        Command::ShowConfig => print!("{}", sparsetomo::config::serialize_config(&cfg)),
    }
    Ok(())
}

struct BoundaryPoint {
    k: f64,
    mu: f64,
}

impl CsvRecord for BoundaryPoint {
    fn header() -> &'static [&'static str] {
        &["k", "mu"]
    }

    fn fields(&self) -> Vec<String> {
        vec![io::fmt_sig(self.k), io::fmt_sig(self.mu)]
    }
}

fn phantom(cfg: &RunConfig) -> Result<ImageGrid> {
    let seed = derive_seed(cfg.base_seed, TASK_OBJECT, &[]);
    Ok(generate(&cfg.phantom_spec(seed))?)
}

fn noise_seed(cfg: &RunConfig) -> u64 {
    derive_seed(cfg.base_seed, TASK_OBJECT_NOISE, &[])
}

fn system_matrix(cfg: &RunConfig, x: &ImageGrid) -> Result<SystemMatrix> {
    let g = ProjectionGeometry::new(
        x.width(),
        x.height(),
        cfg.n_det,
        sparsetomo::geometry::make_tilt_schedule(cfg.theta_max, cfg.n_proj)?,
    )?;
    Ok(build_system_matrix(&g))
}

/// Ideal data, or Poisson data when `total_counts` is set.
fn data(cfg: &RunConfig, a: &SystemMatrix, x: &ImageGrid) -> Result<Sinogram> {
    let b = simulate_ideal_data(a, x)?;
    Ok(match cfg.total_counts {
        Some(n_e) => apply_poisson_dose(&b, &DoseSpec::new(n_e, noise_seed(cfg))?)?,
        None => b,
    })
}

fn reconstruct(cfg: &RunConfig, sinogram: Option<&Path>, out: &Path) -> Result<()> {
    let (b, truth) = match sinogram {
        Some(p) => (io::read_sinogram_text(p)?, None),
        None => {
            let x = phantom(cfg)?;
            let a = system_matrix(cfg, &x)?;
            (data(cfg, &a, &x)?, Some(x))
        }
    };
    if b.n_proj() != cfg.n_proj || b.n_det() != cfg.n_det {
        bail!(
            "sinogram is {}x{} but the config asks for n_proj {} and n_det {}",
            b.n_proj(),
            b.n_det(),
            cfg.n_proj,
            cfg.n_det
        );
    }
    let g = ProjectionGeometry::square(cfg.size, cfg.n_det, cfg.theta_max, cfg.n_proj)?;
    let a = build_system_matrix(&g);
    let r = match cfg.solver {
        SolverChoice::L1 => solve_l1(&a, &b, &cfg.l1_options())?,
        SolverChoice::Tv => solve_tv_asdpocs(&a, &b, &cfg.tv_options())?,
    };
    write_image(cfg, &r.image, out, "recon")?;
    let diag = out.join("diagnostics.csv");
    let file = fs::File::create(&diag).with_context(|| format!("creating {}", diag.display()))?;
    r.write_diagnostics_csv(std::io::BufWriter::new(file))?;
    print!(
        "{} iterations, converged {}, residual {:.4e}, objective {:.4e}",
        r.iterations, r.converged, r.residual_norm, r.objective
    );
    match truth {
        Some(x) => println!(", rmse {:.4e}", rmse(&r.image, &x)?),
        None => println!(),
    }
    Ok(())
}

/// Writes the windowed PGM and the lossless text form of `x`.
fn write_image(cfg: &RunConfig, x: &ImageGrid, out: &Path, stem: &str) -> Result<()> {
    let window = match cfg.phantom {
        PhantomChoice::PtcLike => cfg.window(),
        PhantomChoice::PixelSparse if cfg.window() == io::DEFAULT_WINDOW => (0.0, 1.0),
        PhantomChoice::PixelSparse => cfg.window(),
    };
    io::write_image(x, &out.join(format!("{stem}.pgm")), window, cfg.pgm_ascii)?;
    io::write_image_text(x, &out.join(format!("{stem}.txt")))?;
    Ok(())
}

fn write_csv<T: CsvRecord>(records: &[T], out: &Path, name: &str) -> Result<()> {
    let path = out.join(name);
    io::write_csv(records, &path)?;
    println!("wrote {} ({} rows)", path.display(), records.len());
    Ok(())
}

fn report_failures(records: &[sparsetomo::study::StudyRecord]) {
    for r in records.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "warning: {} N_e {} N_p {} theta {}: {}",
            r.study,
            r.total_counts,
            r.n_proj,
            r.theta_max,
            r.error.as_deref().unwrap_or_default()
        );
    }
}
