use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use smean::forward::MeanData;
use smean::io::{
    compare, export_slice_pgm, parse_config, write_metrics_csv, write_reports_csv, Metrics, Payload, RunConfig,
    SliceSpec, VolumeFile,
};
use smean::reconstruction::{reconstruct_with, ReconImage};
use smean::verification::{run_all, VerificationConfig};

/// Spherical means with centers on an ellipsoid: simulation, inversion and
/// numerical checks.
#[derive(Parser, Debug)]
#[command(name = "smean", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample the phantom on the volume grid.
    Phantom(ImageArgs),
    /// Compute spherical means of the phantom.
    Forward {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Invert spherical means (computed on the fly unless --means is given).
    Reconstruct {
        #[command(flatten)]
        image: ImageArgs,
        /// Means file written by `forward`.
        #[arg(long)]
        means: Option<PathBuf>,
        /// Write errors against the phantom to this CSV.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Run the numerical checks and write one CSV row per check.
    Verify {
        /// Only run checks in this dimension.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two volume files; the first is the reference.
    Metrics {
        reference: PathBuf,
        candidate: PathBuf,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct ImageArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also export a PGM slice.
    #[arg(long)]
    pgm: Option<PathBuf>,
    /// Axis held fixed by the slice (3D and up).
    #[arg(long, default_value_t = 2)]
    axis: usize,
    /// Index along the fixed axis; the middle by default.
    #[arg(long)]
    index: Option<usize>,
}

type AnyResult<T> = Result<T, Box<dyn std::error::Error>>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> AnyResult<ExitCode> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err("--threads must be positive".into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    match cli.command {
        Command::Phantom(args) => {
            let config = load_config(cli.config.as_deref(), cli.seed)?;
            let setup = config.setup()?;
            let truth = setup.truth();
            let out = output(&args.out, &config, "phantom.vol")?;
            VolumeFile::from_image(&truth, Payload::Phantom, Some(&setup.geometry)).write_path(&out)?;
            println!("wrote {}", out.display());
            write_pgm(&truth, &args)?;
        }
        Command::Forward { out } => {
            let config = load_config(cli.config.as_deref(), cli.seed)?;
            let setup = config.setup()?;
            let start = Instant::now();
            let data = setup.forward(config.forward_path)?;
            log::info!("forward transform took {:.2?}", start.elapsed());
            let out = output(&out, &config, "means.vol")?;
            VolumeFile::from_means(&data).write_path(&out)?;
            println!("wrote {}", out.display());
        }
        Command::Reconstruct { image, means, metrics } => {
            let config = load_config(cli.config.as_deref(), cli.seed)?;
            let setup = config.setup()?;
            let data: MeanData = match &means {
                Some(path) => {
                    let file = VolumeFile::read_path(path)?;
                    let data = file.to_means()?;
                    if data.dim() != config.dimension {
                        return Err(format!(
                            "means file {} is {}-dimensional but the config has dimension {}",
                            path.display(),
                            data.dim(),
                            config.dimension
                        )
                        .into());
                    }
                    data
                }
                None => setup.forward(config.forward_path)?,
            };
            let start = Instant::now();
            let recon = reconstruct_with(&data, &setup.grid, config.reconstruction_options())?;
            log::info!("reconstruction took {:.2?}", start.elapsed());
            let out = output(&image.out, &config, "reconstruction.vol")?;
            VolumeFile::from_image(&recon, Payload::Reconstruction, Some(&setup.geometry)).write_path(&out)?;
            println!("wrote {}", out.display());
            write_pgm(&recon, &image)?;
            if let Some(path) = metrics {
                let radius = |x: &[f64]| setup.geometry.normalized_radius(x);
                let m = compare(&setup.truth(), &recon, Some(&radius))?;
                print_metrics(&m);
                ensure_parent(&path)?;
                write_metrics_csv(&m, fs::File::create(&path)?)?;
                println!("wrote {}", path.display());
            }
        }
        Command::Verify { n, out } => {
            let (mut verification, out) = match cli.config.as_deref() {
                Some(path) => {
                    let config = load_config(Some(path), cli.seed)?;
                    let out = output(&out, &config, "verify.csv")?;
                    (config.verification_config(), out)
                }
                None => {
                    let mut v = VerificationConfig::default();
                    if let Some(seed) = cli.seed {
                        v.seed = seed;
                    }
                    let out = out.unwrap_or_else(|| PathBuf::from("verify.csv"));
                    ensure_parent(&out)?;
                    (v, out)
                }
            };
            if let Some(n) = n {
                verification.checks.retain(|c| c.dimension() == n);
                if verification.checks.is_empty() {
                    return Err(format!("no checks are defined for n = {n}").into());
                }
            }
            let reports = run_all(&verification);
            let mut stdout = io::stdout().lock();
            for r in &reports {
                writeln!(
                    stdout,
                    "{} {:<22} error {:.3e} tol {:.3e}  {}",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.error,
                    r.tolerance,
                    r.params_string()
                )?;
            }
            write_reports_csv(&reports, fs::File::create(&out)?)?;
            writeln!(stdout, "wrote {}", out.display())?;
            let failed = reports.iter().filter(|r| !r.passed).count();
            if failed > 0 {
                eprintln!("error: {failed} of {} checks failed", reports.len());
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Metrics {
            reference,
            candidate,
            out,
        } => {
            let ref_file = VolumeFile::read_path(&reference)?;
            let cand_file = VolumeFile::read_path(&candidate)?;
            let geometry = ref_file.geometry()?;
            let radius = geometry.as_ref().map(|g| move |x: &[f64]| g.normalized_radius(x));
            let m = compare(
                &ref_file.to_image()?,
                &cand_file.to_image()?,
                radius.as_ref().map(|f| f as &dyn Fn(&[f64]) -> f64),
            )?;
            match out {
                Some(path) => {
                    ensure_parent(&path)?;
                    write_metrics_csv(&m, fs::File::create(&path)?)?;
                }
                None => write_metrics_csv(&m, io::stdout().lock())?,
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> AnyResult<RunConfig> {
    let path = path.ok_or("this command needs --config")?;
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut config = parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

fn ensure_parent(path: &Path) -> io::Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir),
        _ => Ok(()),
    }
}

/// Explicit path, else `name` inside the configured output directory.
fn output(explicit: &Option<PathBuf>, config: &RunConfig, name: &str) -> io::Result<PathBuf> {
    let path = explicit.clone().unwrap_or_else(|| config.output_dir.join(name));
    ensure_parent(&path)?;
    Ok(path)
}

fn write_pgm(image: &ReconImage, args: &ImageArgs) -> AnyResult<()> {
    let Some(path) = &args.pgm else { return Ok(()) };
    let counts = image.grid.counts();
    let index = args.index.unwrap_or_else(|| counts.get(args.axis).map_or(0, |c| c / 2));
    let bytes = export_slice_pgm(image, SliceSpec { axis: args.axis, index }, None)?;
    ensure_parent(path)?;
    fs::write(path, bytes)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn print_metrics(m: &Metrics) {
    println!(
        "rel L2 {:.4e}  rel Linf {:.4e}  (full grid {:.4e} / {:.4e}, core {:.4e}, {} nodes)",
        m.rel_l2, m.rel_linf, m.rel_l2_full, m.rel_linf_full, m.rel_l2_core, m.nodes
    );
}
