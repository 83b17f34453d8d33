//! `ndconv` command line: convolve, simulate, deconvolve, verify and score.

mod manifest;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndconv::imageio::{read_pgm, read_tensor, write_pgm, write_tensor};
use ndconv::simulation::{add_gaussian_noise, phantom_lines, phantom_texture, snr_db, NoiseSpec, PsfSpec};
use ndconv::verify::{run_suite, VerifyConfig};
use ndconv::{
    build_matrix, conv_full, deconv_pg, deconv_rl, DeconvConfig, Error, Kernel, RlConfig, Shape, StepSize,
    StopReason, Tensor,
};

use manifest::{dir_of, RunManifest};

const EXIT_USAGE: u8 = 2;
const EXIT_FORMAT: u8 = 3;
const EXIT_SHAPE: u8 = 4;
const EXIT_NUMERICAL: u8 = 5;

#[derive(Parser)]
#[command(name = "ndconv", version, about = "N-dimensional convolution and nonnegative deconvolution")]
struct Cli {
    /// Worker threads for convolutions (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full convolution of an input with a kernel.
    Convolve(ConvolveArgs),
    /// Nonnegative deconvolution of an observation.
    Deconv(DeconvArgs),
    /// Blur a phantom and add Gaussian noise.
    Simulate(SimulateArgs),
    /// Randomized operator checks against the explicit matrix.
    Verify(VerifyArgs),
    /// SNR of an estimate against a reference, in dB.
    Metrics(MetricsArgs),
    /// Dump the explicit convolution matrix as CSV.
    Matrix(MatrixArgs),
}

#[derive(Args)]
struct ConvolveArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    kernel: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Pg,
    Rl,
}

#[derive(Args)]
struct DeconvArgs {
    #[arg(long)]
    observed: PathBuf,
    #[arg(long)]
    kernel: PathBuf,
    /// Extents of the unknown image, e.g. 512x512.
    #[arg(long, value_parser = parse_shape)]
    shape: Shape,
    #[arg(long, value_enum, default_value = "pg")]
    method: Method,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    /// Relative objective decrease (pg) or relative change (rl) that stops the run.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Initial line-search step for pg: "auto" or a positive number.
    #[arg(long, default_value = "auto", value_parser = parse_step)]
    step: StepSize,
    /// Require an initialization that draws no random numbers. Both solvers
    /// start deterministically, so this only records the requirement.
    #[arg(long)]
    seedless: bool,
    /// Defaults to trace.csv next to the output.
    #[arg(long)]
    trace_csv: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Phantom {
    Lines,
    Texture,
    File,
}

#[derive(Clone, Copy, ValueEnum)]
enum Psf {
    Gaussian,
    Delta,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "lines")]
    phantom: Phantom,
    /// Image used with `--phantom file`.
    #[arg(long, required_if_eq("phantom", "file"))]
    input: Option<PathBuf>,
    /// Side length of generated phantoms.
    #[arg(long, default_value_t = 512)]
    size: usize,
    #[arg(long, default_value_t = 9)]
    lines: usize,
    #[arg(long, default_value_t = 255.0)]
    intensity: f64,
    #[arg(long, value_enum, default_value = "gaussian")]
    psf: Psf,
    #[arg(long, default_value_t = 5)]
    psf_size: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0.0)]
    noise_mean: f64,
    #[arg(long, default_value_t = 5.0)]
    noise_std: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    outdir: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 3)]
    ndim: usize,
    #[arg(long, default_value_t = 5)]
    max_extent: usize,
    #[arg(long, default_value_t = 2)]
    max_radius: usize,
    #[arg(long, default_value_t = 200)]
    cases: usize,
    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    estimate: PathBuf,
}

#[derive(Args)]
struct MatrixArgs {
    #[arg(long)]
    kernel: PathBuf,
    #[arg(long, value_parser = parse_shape)]
    shape: Shape,
    #[arg(long)]
    output: PathBuf,
}

fn parse_shape(s: &str) -> Result<Shape, String> {
    let extents = s
        .split(['x', 'X'])
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("bad extent {p:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    Shape::new(extents).map_err(|e| e.to_string())
}

fn parse_step(s: &str) -> Result<StepSize, String> {
    if s == "auto" {
        return Ok(StepSize::Auto);
    }
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(StepSize::Fixed(v)),
        _ => Err(format!("expected \"auto\" or a positive number, got {s:?}")),
    }
}

enum Failure {
    Lib(Error),
    Usage(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Lib(Error::Io(e))
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Numerical(_) => EXIT_NUMERICAL,
            Failure::Lib(e) => match e {
                Error::InvalidArgument(_) => EXIT_USAGE,
                Error::Format(_) | Error::Length { .. } | Error::OutOfRange { .. } | Error::Io(_) => EXIT_FORMAT,
                Error::Shape(_) | Error::OutOfBounds { .. } | Error::TooLarge { .. } => EXIT_SHAPE,
                Error::NonFinite(_) | Error::Degenerate(_) | Error::UndefinedMetric(_) => EXIT_NUMERICAL,
            },
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Lib(e) => e.to_string(),
            Failure::Usage(m) | Failure::Numerical(m) => m.clone(),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn is_pgm(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

fn load(path: &Path) -> Result<Tensor<f64>, Error> {
    if is_pgm(path) {
        read_pgm(path)
    } else {
        read_tensor(path)
    }
}

/// PGM outputs are clamped to 8 bits; anything else keeps full precision.
fn save(t: &Tensor<f64>, path: &Path) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    if is_pgm(path) {
        write_pgm(t, path, true)
    } else {
        write_tensor(t, path)
    }
}

fn load_kernel(path: &Path) -> Result<Kernel<f64>, Error> {
    Kernel::new(load(path)?)
}

fn convolve(args: &ConvolveArgs) -> CmdResult {
    let started = Instant::now();
    let x = load(&args.input)?;
    let h = load_kernel(&args.kernel)?;
    let y = conv_full(&x, &h)?;
    save(&y, &args.output)?;

    let mut m = RunManifest::new("convolve");
    m.set_path("input", &args.input);
    m.set_path("kernel", &args.kernel);
    m.set_path("output", &args.output);
    m.set("input_shape", x.shape());
    m.set("kernel_shape", h.shape());
    m.set("output_shape", y.shape());
    m.set_wall_time(started.elapsed());
    m.write_to(dir_of(&args.output))?;
    println!("{} * {} -> {}", x.shape(), h.shape(), y.shape());
    Ok(())
}

fn deconv(args: &DeconvArgs) -> CmdResult {
    let started = Instant::now();
    let y = load(&args.observed)?;
    let h = load_kernel(&args.kernel)?;
    let report = match args.method {
        Method::Pg => {
            let cfg = DeconvConfig {
                max_iters: args.max_iters,
                tol_rel_objective: args.tol,
                initial_step: args.step,
                ..Default::default()
            };
            deconv_pg(&y, &h, &args.shape, &cfg)?
        }
        Method::Rl => {
            let cfg = RlConfig { max_iters: args.max_iters, tol_rel_change: args.tol };
            deconv_rl(&y, &h, &args.shape, &cfg)?
        }
    };
    save(&report.estimate, &args.output)?;
    let out_dir = dir_of(&args.output);
    let trace_path = args.trace_csv.clone().unwrap_or_else(|| out_dir.join("trace.csv"));
    report.write_trace_csv(BufWriter::new(File::create(&trace_path)?))?;

    let method = match args.method {
        Method::Pg => "pg",
        Method::Rl => "rl",
    };
    let mut m = RunManifest::new("deconv");
    m.set_path("observed", &args.observed);
    m.set_path("kernel", &args.kernel);
    m.set("shape", &args.shape);
    m.set("method", method);
    m.set("max_iters", args.max_iters);
    m.set("tol", args.tol);
    m.set(
        "step",
        match args.step {
            StepSize::Auto => "auto".to_string(),
            StepSize::Fixed(s) => s.to_string(),
        },
    );
    m.set("seedless", args.seedless);
    m.set("seed", "none");
    m.set_path("output", &args.output);
    m.set_path("trace_csv", &trace_path);
    m.set("iterations_run", report.iterations_run);
    m.set("stop_reason", report.stop_reason.as_str());
    m.set("initial_objective", format!("{:e}", report.initial_objective));
    m.set("final_objective", format!("{:e}", report.final_objective()));
    if let Some(step) = report.step_size {
        m.set("step_size", format!("{step:e}"));
    }
    if args.method == Method::Rl {
        m.set("clamped_observations", report.clamped_observations);
    }
    m.set_wall_time(started.elapsed());
    m.write_to(out_dir)?;

    println!(
        "{method}: {} iterations, {}, objective {:e} -> {:e}",
        report.iterations_run,
        report.stop_reason.as_str(),
        report.initial_objective,
        report.final_objective()
    );
    if report.stop_reason == StopReason::Stalled {
        return Err(Failure::Numerical("line search stalled before convergence".into()));
    }
    Ok(())
}

fn simulate(args: &SimulateArgs) -> CmdResult {
    let started = Instant::now();
    let truth = match args.phantom {
        Phantom::Lines => phantom_lines(args.size, args.size, args.lines, args.intensity)?,
        Phantom::Texture => phantom_texture(args.size, args.size)?,
        Phantom::File => {
            let path = args.input.as_ref().ok_or_else(|| Failure::Usage("--phantom file needs --input".into()))?;
            load(path)?
        }
    };
    let psf = match args.psf {
        Psf::Gaussian => PsfSpec::Gaussian { size: vec![args.psf_size; truth.ndim()], sigma: args.sigma },
        Psf::Delta => PsfSpec::Delta { ndim: truth.ndim() },
    };
    let h = psf.build()?;
    let blurred = conv_full(&truth, &h)?;
    let noise = NoiseSpec { mean: args.noise_mean, std_dev: args.noise_std, seed: args.seed };
    let observed = add_gaussian_noise(&blurred, &noise)?;

    fs::create_dir_all(&args.outdir)?;
    let dir = &args.outdir;
    save(&truth, &dir.join("truth.tensor"))?;
    save(h.tensor(), &dir.join("kernel.tensor"))?;
    save(&observed, &dir.join("observed.tensor"))?;
    save(&truth, &dir.join("truth.pgm"))?;
    save(&observed, &dir.join("observed.pgm"))?;

    let mut m = RunManifest::new("simulate");
    m.set(
        "phantom",
        match args.phantom {
            Phantom::Lines => "lines",
            Phantom::Texture => "texture",
            Phantom::File => "file",
        },
    );
    if let Some(input) = &args.input {
        m.set_path("input", input);
    }
    m.set("size", args.size);
    m.set("lines", args.lines);
    m.set("intensity", args.intensity);
    m.set(
        "psf",
        match args.psf {
            Psf::Gaussian => "gaussian",
            Psf::Delta => "delta",
        },
    );
    m.set("psf_size", args.psf_size);
    m.set("sigma", args.sigma);
    m.set("noise_mean", args.noise_mean);
    m.set("noise_std", args.noise_std);
    m.set("seed", args.seed);
    m.set_path("outdir", &args.outdir);
    m.set("truth_shape", truth.shape());
    m.set("kernel_shape", h.shape());
    m.set("observed_shape", observed.shape());
    m.set("outputs", "truth.tensor,kernel.tensor,observed.tensor,truth.pgm,observed.pgm");
    m.set_wall_time(started.elapsed());
    m.write_to(dir)?;
    println!("truth {} kernel {} observed {}", truth.shape(), h.shape(), observed.shape());
    Ok(())
}

fn verify(args: &VerifyArgs) -> CmdResult {
    if args.ndim == 0 || args.max_extent == 0 || args.cases == 0 {
        return Err(Failure::Usage("--ndim, --max-extent and --cases must be positive".into()));
    }
    let cfg = VerifyConfig {
        max_ndim: args.ndim,
        max_extent: args.max_extent,
        max_radius: args.max_radius,
        cases: args.cases,
        seed: args.seed,
    };
    let report = run_suite(&cfg)?;
    for p in &report.properties {
        println!(
            "{} {}: {} cases, {} failures, worst {:.3e} (tol {:e})",
            if p.passed() { "PASS" } else { "FAIL" },
            p.name,
            p.cases,
            p.failures,
            p.worst_error,
            p.tolerance
        );
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Numerical("operator checks failed".into()))
    }
}

fn metrics(args: &MetricsArgs) -> CmdResult {
    let reference = load(&args.reference)?;
    let estimate = load(&args.estimate)?;
    let snr = snr_db(&reference, &estimate)?;
    if snr.is_infinite() {
        println!("inf");
    } else {
        println!("{snr:.3}");
    }
    Ok(())
}

fn matrix(args: &MatrixArgs) -> CmdResult {
    let started = Instant::now();
    let h = load_kernel(&args.kernel)?;
    let a = build_matrix(&h, &args.shape)?;
    if let Some(dir) = args.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    a.write_csv(BufWriter::new(File::create(&args.output)?))?;

    let mut m = RunManifest::new("matrix");
    m.set_path("kernel", &args.kernel);
    m.set("shape", &args.shape);
    m.set_path("output", &args.output);
    m.set("rows", a.rows());
    m.set("cols", a.cols());
    m.set_wall_time(started.elapsed());
    m.write_to(dir_of(&args.output))?;
    println!("{}x{} matrix", a.rows(), a.cols());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let result = match &cli.command {
        Command::Convolve(a) => convolve(a),
        Command::Deconv(a) => deconv(a),
        Command::Simulate(a) => simulate(a),
        Command::Verify(a) => verify(a),
        Command::Metrics(a) => metrics(a),
        Command::Matrix(a) => matrix(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
