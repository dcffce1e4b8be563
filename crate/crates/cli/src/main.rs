//! Command-line front end: weighted-Laplacian spectra, saddle
//! dynamics simulation, optimal loss parameters, spectral-gap
//! estimation from samples, dataset intervention scans, and SVG/CSV
//! reports. Outputs are written atomically and every output directory
//! carries one manifest with config echo, seed, and input digests.

mod manifest;
mod svg;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use lgan_core::datasets::{connectivity_scan, correlate_scores, synthetic_images, ScanItem, ScanReport};
use lgan_core::dynamics::{
    evolve_analytic, evolve_numeric, project_initial_conditions, smooth_random_field,
    IntegratorConfig, Scheme,
};
use lgan_core::io as core_io;
use lgan_core::laplace::WeightedLaplacian;
use lgan_core::lgan::{
    coefficients_from_losses, max_real_part, optimal_parameters, LganCoefficients, LossSpec,
};
use lgan_core::measure::{gaussian_density, mixture_density, GridDensity, MixtureSpec};
use lgan_core::poincare::{
    estimate_graph, estimate_grid_reference, estimate_parametric, Bandwidth, GraphEstimatorConfig,
    GraphNormalization, GridReferenceConfig, ParametricEstimatorConfig, DEFAULT_NEIGHBORS,
};
use manifest::InputDigests;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug)]
enum CliError {
    Core(lgan_core::Error),
    MissingManifest { dir: PathBuf },
    Input(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::MissingManifest { .. } => "MissingManifest",
            CliError::Input(_) => "InvalidInput",
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::MissingManifest { dir } => {
                write!(f, "no manifest.json in run directory {}", dir.display())
            }
            CliError::Input(m) => write!(f, "{m}"),
        }
    }
}

impl From<lgan_core::Error> for CliError {
    fn from(e: lgan_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(lgan_core::Error::Io(e))
    }
}

type CliResult<T> = Result<T, CliError>;

fn input_err(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

// ---------------------------------------------------------------------------
// Argument surface
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "lgan",
    version,
    about = "Spectral analysis of density connectivity and linearized adversarial dynamics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalues and modes of the weighted Laplacian of a density
    Spectrum(SpectrumCmd),
    /// Integrate the linearized saddle dynamics on a density grid
    Simulate(SimulateCmd),
    /// Critically damped loss parameters for a given spectral gap
    OptimalParams(OptimalParamsCmd),
    /// Estimate the spectral gap of a sample set
    Estimate(EstimateCmd),
    /// Gap response of an image dataset to augmentations and selection
    Scan(ScanCmd),
    /// Rank-correlate a scan against external per-row scores
    Correlate(CorrelateCmd),
    /// Render SVG/CSV reports from finished run directories
    Report(ReportCmd),
}

#[derive(Args)]
struct DensityOpts {
    /// Density source: gaussian | uniform | mixture:<D> | <path.csv>
    #[arg(long)]
    density: String,
    /// Domain override for presets, "lo:hi" per axis, comma separated
    #[arg(long, allow_hyphen_values = true)]
    domain: Option<String>,
    /// Grid point override for presets, one count per axis
    #[arg(long)]
    points: Option<String>,
}

#[derive(Args)]
struct SpectrumCmd {
    #[command(flatten)]
    density: DensityOpts,
    /// Eigenvalue count, zero mode included
    #[arg(long, default_value_t = 6)]
    k: usize,
    /// Output directory (spectrum.csv, spectrum.json, manifest.json)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum SchemeArg {
    Euler,
    Heun,
    Analytic,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum LossPreset {
    /// Quadratic pairing around the equilibrium
    LeastSquares,
    /// Linear pairing (vanilla saturating losses)
    Linear,
}

#[derive(Args)]
struct SimulateCmd {
    #[command(flatten)]
    density: DensityOpts,
    /// Derive alpha and beta from a loss preset instead of flags
    #[arg(long, value_enum)]
    loss: Option<LossPreset>,
    /// Damping coefficient of the linearized loss
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    alpha: f64,
    /// Coupling coefficient of the linearized loss
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    beta: f64,
    /// Gradient penalty weight
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    gamma: f64,
    #[arg(long, value_enum, default_value_t = SchemeArg::Heun)]
    scheme: SchemeArg,
    /// Step size for the numeric schemes
    #[arg(long, default_value_t = 1e-3)]
    tau: f64,
    /// Step count for the numeric schemes
    #[arg(long, default_value_t = 20_000)]
    steps: usize,
    /// Time horizon for the analytic scheme
    #[arg(long, default_value_t = 20.0)]
    t_end: f64,
    /// Trace samples for the analytic scheme
    #[arg(long, default_value_t = 400)]
    trace_points: usize,
    /// Modes kept by the analytic expansion
    #[arg(long, default_value_t = 64)]
    modes: usize,
    /// Master seed for the random initial data
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (trace.csv, summary.json, manifest.json)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OptimalParamsCmd {
    /// Coupling coefficient; sign does not matter
    #[arg(long, allow_negative_numbers = true)]
    beta: f64,
    /// Smallest nonzero eigenvalue of the target's weighted Laplacian
    #[arg(long)]
    xi_min: f64,
    /// Damping share in [0, |beta| sqrt(xi_min)]; omitted means 0
    #[arg(long)]
    alpha: Option<f64>,
    /// Output directory (params.json, manifest.json)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum EstimatorArg {
    Graph,
    Parametric,
    Grid,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum NormalizationArg {
    RandomWalk,
    Symmetric,
}

#[derive(Args)]
struct GraphOpts {
    /// Neighbors per point in the graph estimator
    #[arg(long, default_value_t = DEFAULT_NEIGHBORS)]
    k_neighbors: usize,
    /// Kernel bandwidth: auto (self-tuning) or a fixed width
    #[arg(long, default_value = "auto")]
    bandwidth: String,
    /// Graph Laplacian normalization (same spectrum either way)
    #[arg(long, value_enum, default_value_t = NormalizationArg::RandomWalk)]
    normalization: NormalizationArg,
}

impl GraphOpts {
    fn build(&self, seed: u64) -> CliResult<GraphEstimatorConfig> {
        let bandwidth = if self.bandwidth == "auto" {
            Bandwidth::SelfTuning
        } else {
            let v: f64 = self
                .bandwidth
                .parse()
                .map_err(|_| input_err(format!("bandwidth must be 'auto' or a number, got '{}'", self.bandwidth)))?;
            Bandwidth::Fixed(v)
        };
        Ok(GraphEstimatorConfig {
            k_neighbors: self.k_neighbors,
            bandwidth,
            normalization: match self.normalization {
                NormalizationArg::RandomWalk => GraphNormalization::RandomWalk,
                NormalizationArg::Symmetric => GraphNormalization::Symmetric,
            },
            seed,
        })
    }
}

#[derive(Args)]
struct EstimateCmd {
    /// Sample file, csv or lgs
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Graph)]
    estimator: EstimatorArg,
    #[command(flatten)]
    graph: GraphOpts,
    /// Radial basis centers (parametric)
    #[arg(long, default_value_t = 64)]
    centers: usize,
    /// Radial basis width (parametric); default is the median center spacing
    #[arg(long)]
    length_scale: Option<f64>,
    /// Batch size of the stochastic quotient (parametric)
    #[arg(long, default_value_t = 256)]
    batch: usize,
    /// Gradient step size (parametric)
    #[arg(long, default_value_t = 0.2)]
    step_size: f64,
    /// Training iterations (parametric)
    #[arg(long, default_value_t = 3000)]
    iterations: usize,
    /// Smoothing kernel width (grid); default is the Silverman rule
    #[arg(long)]
    grid_bandwidth: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (estimate.json, manifest.json)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScanCmd {
    /// Image stack file (lgi)
    #[arg(long, required_unless_present = "synthetic", conflicts_with = "synthetic")]
    images: Option<PathBuf>,
    /// Generate a synthetic stack instead: "N,C,H,W"
    #[arg(long)]
    synthetic: Option<String>,
    /// Pixel noise level for --synthetic, in [0, 0.5]
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    /// Path to a JSON file listing the interventions to scan
    #[arg(long)]
    plan: PathBuf,
    #[command(flatten)]
    graph: GraphOpts,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (scan.csv, scan.json, manifest.json)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CorrelateCmd {
    /// Scan report produced by the scan command (scan.json)
    #[arg(long)]
    scan: PathBuf,
    /// Score table csv with header label,param,score, one row per scan row
    #[arg(long)]
    scores: PathBuf,
    /// Output directory (correlate.json, manifest.json)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportCmd {
    /// Run directories, each holding a manifest.json
    #[arg(long, num_args = 1.., required = true)]
    runs: Vec<PathBuf>,
    /// Output directory for the SVG/CSV bundle
    #[arg(long)]
    out: PathBuf,
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

fn parse_domain(s: &str) -> CliResult<Vec<(f64, f64)>> {
    s.split(',')
        .map(|axis| {
            let (lo, hi) = axis
                .split_once(':')
                .ok_or_else(|| input_err(format!("domain axis '{axis}' is not lo:hi")))?;
            let lo: f64 = lo.trim().parse().map_err(|_| input_err(format!("bad domain bound '{lo}'")))?;
            let hi: f64 = hi.trim().parse().map_err(|_| input_err(format!("bad domain bound '{hi}'")))?;
            Ok((lo, hi))
        })
        .collect()
}

fn parse_points(s: &str) -> CliResult<Vec<usize>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| input_err(format!("bad point count '{p}'")))
        })
        .collect()
}

/// Resolve a density source into a grid plus a config echo.
fn build_density(
    opts: &DensityOpts,
    inputs: &mut InputDigests,
) -> CliResult<(GridDensity, serde_json::Value)> {
    let spec = opts.density.as_str();
    let is_preset = spec == "gaussian" || spec == "uniform" || spec.starts_with("mixture:");
    if !is_preset {
        if opts.domain.is_some() || opts.points.is_some() {
            return Err(input_err("--domain and --points apply to density presets only"));
        }
        let path = Path::new(spec);
        inputs.digest_only(path)?;
        let g = core_io::read_density_csv(path)?;
        let echo = serde_json::json!({
            "source": spec,
            "domain": g.domain(),
            "shape": g.shape(),
        });
        return Ok((g, echo));
    }

    let domain = match &opts.domain {
        Some(s) => Some(parse_domain(s)?),
        None => None,
    };
    let shape = match &opts.points {
        Some(s) => Some(parse_points(s)?),
        None => None,
    };
    let g = if spec == "gaussian" {
        let domain = domain.unwrap_or_else(|| vec![(-10.0, 10.0)]);
        let shape = shape.unwrap_or_else(|| vec![2001]);
        let d = domain.len();
        gaussian_density(&vec![0.0; d], &vec![1.0; d], &domain, &shape)?
    } else if spec == "uniform" {
        let domain = domain.unwrap_or_else(|| vec![(0.0, 1.0)]);
        let shape = shape.unwrap_or_else(|| vec![1001]);
        let len = shape.iter().product();
        GridDensity::from_values(&domain, &shape, vec![1.0; len])?
    } else {
        let sep: f64 = spec["mixture:".len()..]
            .parse()
            .map_err(|_| input_err(format!("bad mixture separation in '{spec}'")))?;
        let mix = MixtureSpec::two_modes(sep);
        let domain = domain.unwrap_or_else(|| vec![(-8.0, sep + 8.0)]);
        let shape = shape.unwrap_or_else(|| vec![2001]);
        mixture_density(&mix, &domain, &shape)?
    };
    let echo = serde_json::json!({
        "source": spec,
        "domain": g.domain(),
        "shape": g.shape(),
    });
    Ok((g, echo))
}

fn ensure_dir(p: &Path) -> CliResult<()> {
    std::fs::create_dir_all(p)?;
    Ok(())
}

fn write_json(path: &Path, v: &serde_json::Value) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(v).expect("value serializes");
    bytes.push(b'\n');
    core_io::atomic_write(path, &bytes)?;
    Ok(())
}

fn print_json(v: &serde_json::Value) {
    println!("{v}");
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn run_spectrum(cmd: &SpectrumCmd) -> CliResult<()> {
    let mut inputs = InputDigests::new();
    let (density, density_echo) = build_density(&cmd.density, &mut inputs)?;
    let op = WeightedLaplacian::assemble(&density);
    let spectrum = op.spectrum(cmd.k)?;
    let summary = serde_json::json!({
        "xis": spectrum.xis(),
        "residuals": spectrum.residuals(),
    });
    if let Some(out) = &cmd.out {
        ensure_dir(out)?;
        core_io::write_spectrum_csv(&out.join("spectrum.csv"), &spectrum)?;
        core_io::write_spectrum_json(&out.join("spectrum.json"), &spectrum)?;
        let config = serde_json::json!({"density": density_echo, "k": cmd.k});
        manifest::write(out, "spectrum", &config, None, &inputs)?;
    }
    print_json(&summary);
    Ok(())
}

fn run_simulate(cmd: &SimulateCmd) -> CliResult<()> {
    let mut inputs = InputDigests::new();
    let (density, density_echo) = build_density(&cmd.density, &mut inputs)?;
    let op = WeightedLaplacian::assemble(&density);
    let coeffs = match cmd.loss {
        Some(LossPreset::LeastSquares) => {
            coefficients_from_losses(&LossSpec::least_squares(), cmd.gamma)?
        }
        Some(LossPreset::Linear) => coefficients_from_losses(&LossSpec::linear(), cmd.gamma)?,
        None => LganCoefficients::new(cmd.alpha, cmd.beta, cmd.gamma)?,
    };

    // smooth start keeps the measured rate on the physical branch
    let u0 = smooth_random_field(&op, cmd.seed, 0.025)?;
    let v0 = op.zero_face_field();

    let (trace, xi_min, scheme_name) = match cmd.scheme {
        SchemeArg::Analytic => {
            let spectrum = op.spectrum(cmd.modes + 1)?;
            let expansion =
                project_initial_conditions(&spectrum, &op, &coeffs, &u0, &v0, cmd.modes)?;
            if cmd.trace_points == 0 || !(cmd.t_end > 0.0) {
                return Err(input_err("analytic runs need t_end > 0 and trace_points > 0"));
            }
            let times: Vec<f64> = (0..=cmd.trace_points)
                .map(|i| cmd.t_end * i as f64 / cmd.trace_points as f64)
                .collect();
            let tr = evolve_analytic(&expansion, &coeffs, &times)?;
            let xi = spectrum
                .xi_min()
                .ok_or_else(|| input_err("spectrum holds no nonzero mode"))?;
            (tr, xi, "analytic")
        }
        numeric => {
            let cfg = IntegratorConfig {
                scheme: if numeric == SchemeArg::Euler {
                    Scheme::Euler
                } else {
                    Scheme::Heun
                },
                tau: cmd.tau,
                steps: cmd.steps,
                gamma: coeffs.gamma,
                store_every: 0,
            };
            let tr = evolve_numeric(&op, &coeffs, &u0, &v0, &cfg)?;
            let xi = op.poincare_constant()?;
            (tr, xi, if numeric == SchemeArg::Euler { "euler" } else { "heun" })
        }
    };
    let eta = max_real_part(&coeffs, xi_min)?;

    let config = serde_json::json!({
        "density": density_echo,
        "alpha": coeffs.alpha,
        "beta": coeffs.beta,
        "gamma": coeffs.gamma,
        "scheme": scheme_name,
        "tau": cmd.tau,
        "steps": cmd.steps,
        "t_end": cmd.t_end,
        "trace_points": cmd.trace_points,
        "modes": cmd.modes,
    });
    let summary = serde_json::json!({
        "scheme": scheme_name,
        "measured_rate": trace.measured_rate,
        "predicted_rate": eta,
        "xi_min": xi_min,
        "diverged": trace.diverged,
        "cfl_flagged": trace.cfl_flagged,
        "final_u_norm": trace.u_norms.last(),
    });
    if let Some(out) = &cmd.out {
        ensure_dir(out)?;
        core_io::write_trace_csv(&out.join("trace.csv"), &trace)?;
        write_json(&out.join("summary.json"), &summary)?;
        manifest::write(out, "simulate", &config, Some(cmd.seed), &inputs)?;
    }
    print_json(&summary);
    Ok(())
}

fn run_optimal_params(cmd: &OptimalParamsCmd) -> CliResult<()> {
    let coeffs = optimal_parameters(cmd.beta, cmd.xi_min, cmd.alpha)?;
    let eta = max_real_part(&coeffs, cmd.xi_min)?;
    let doc = serde_json::json!({
        "alpha": coeffs.alpha,
        "beta": coeffs.beta,
        "gamma": coeffs.gamma,
        "eta": eta,
        "xi_min": cmd.xi_min,
    });
    if let Some(out) = &cmd.out {
        ensure_dir(out)?;
        write_json(&out.join("params.json"), &doc)?;
        let config = serde_json::json!({
            "beta": cmd.beta,
            "xi_min": cmd.xi_min,
            "alpha": cmd.alpha,
        });
        manifest::write(out, "optimal-params", &config, None, &InputDigests::new())?;
    }
    print_json(&doc);
    Ok(())
}

fn run_estimate(cmd: &EstimateCmd) -> CliResult<()> {
    let mut inputs = InputDigests::new();
    inputs.digest_only(&cmd.input)?;
    let samples = core_io::read_samples(&cmd.input)?;

    let (estimate, config) = match cmd.estimator {
        EstimatorArg::Graph => {
            let cfg = cmd.graph.build(cmd.seed)?;
            let est = estimate_graph(&samples, &cfg)?;
            (est, serde_json::to_value(&cfg).expect("config serializes"))
        }
        EstimatorArg::Parametric => {
            let cfg = ParametricEstimatorConfig {
                n_centers: cmd.centers,
                length_scale: cmd.length_scale,
                batch_size: cmd.batch,
                step_size: cmd.step_size,
                iterations: cmd.iterations,
                seed: cmd.seed,
            };
            let est = estimate_parametric(&samples, &cfg)?;
            (est, serde_json::to_value(&cfg).expect("config serializes"))
        }
        EstimatorArg::Grid => {
            let cfg = GridReferenceConfig {
                bandwidth: cmd.grid_bandwidth,
                domain: None,
                shape: None,
            };
            let est = estimate_grid_reference(&samples, &cfg)?;
            (est, serde_json::to_value(&cfg).expect("config serializes"))
        }
    };

    let summary = serde_json::json!({
        "xi_hat": estimate.xi_hat,
        "estimator": estimate.estimator,
        "converged": estimate.converged,
        "n": estimate.n,
        "d": estimate.d,
    });
    if let Some(out) = &cmd.out {
        ensure_dir(out)?;
        write_json(
            &out.join("estimate.json"),
            &serde_json::to_value(&estimate).expect("estimate serializes"),
        )?;
        if !estimate.loss_curve.is_empty() {
            let mut csv = String::from("iteration,quotient\n");
            for (i, q) in estimate.loss_curve.iter().enumerate() {
                csv.push_str(&format!("{i},{q}\n"));
            }
            core_io::atomic_write(&out.join("loss_curve.csv"), csv.as_bytes())?;
        }
        let config = serde_json::json!({
            "input": cmd.input.display().to_string(),
            "estimator": config,
        });
        manifest::write(out, "estimate", &config, Some(cmd.seed), &inputs)?;
    }
    print_json(&summary);
    Ok(())
}

fn scan_csv(report: &ScanReport) -> String {
    let mut csv = String::from("kind,param,xi_hat,xi_norm\n");
    csv.push_str(&format!("baseline,0,{},1\n", report.baseline_xi));
    for row in &report.rows {
        let xi = row.xi_hat.map(|v| v.to_string()).unwrap_or_default();
        let norm = row.xi_norm.map(|v| v.to_string()).unwrap_or_default();
        csv.push_str(&format!("{},{},{xi},{norm}\n", row.label, row.param));
    }
    csv
}

fn run_scan(cmd: &ScanCmd) -> CliResult<()> {
    let mut inputs = InputDigests::new();
    let (images, source_echo) = match (&cmd.images, &cmd.synthetic) {
        (Some(path), None) => {
            inputs.digest_only(path)?;
            let imgs = core_io::read_images_lgi1(path)?;
            (imgs, serde_json::json!({"images": path.display().to_string()}))
        }
        (None, Some(spec)) => {
            let dims: Vec<usize> = spec
                .split(',')
                .map(|p| p.trim().parse().map_err(|_| input_err(format!("bad dimension '{p}'"))))
                .collect::<CliResult<_>>()?;
            if dims.len() != 4 {
                return Err(input_err("--synthetic needs four dimensions N,C,H,W"));
            }
            let imgs = synthetic_images(dims[0], dims[1], dims[2], dims[3], cmd.noise, cmd.seed)?;
            (
                imgs,
                serde_json::json!({"synthetic": dims, "noise": cmd.noise}),
            )
        }
        _ => unreachable!("clap enforces exactly one image source"),
    };
    let plan_bytes = inputs.read(&cmd.plan)?;
    let plan: Vec<ScanItem> = serde_json::from_slice(&plan_bytes)
        .map_err(|e| input_err(format!("bad scan plan: {e}")))?;
    let graph = cmd.graph.build(cmd.seed)?;
    let report = connectivity_scan(&images, &plan, &graph, cmd.seed)?;

    let failed = report.rows.iter().filter(|r| r.error.is_some()).count();
    let summary = serde_json::json!({
        "baseline_xi": report.baseline_xi,
        "rows": report.rows.len(),
        "failed": failed,
    });
    if let Some(out) = &cmd.out {
        ensure_dir(out)?;
        core_io::atomic_write(&out.join("scan.csv"), scan_csv(&report).as_bytes())?;
        write_json(
            &out.join("scan.json"),
            &serde_json::to_value(&report).expect("report serializes"),
        )?;
        let config = serde_json::json!({
            "source": source_echo,
            "plan": plan,
            "graph": graph,
        });
        manifest::write(out, "scan", &config, Some(cmd.seed), &inputs)?;
    }
    print_json(&summary);
    Ok(())
}

fn run_correlate(cmd: &CorrelateCmd) -> CliResult<()> {
    let mut inputs = InputDigests::new();
    let report_bytes = inputs.read(&cmd.scan)?;
    let mut report: ScanReport = serde_json::from_slice(&report_bytes)
        .map_err(|e| input_err(format!("bad scan report: {e}")))?;

    let score_bytes = inputs.read(&cmd.scores)?;
    let text = String::from_utf8(score_bytes)
        .map_err(|_| input_err("score file is not utf-8"))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| input_err("score file is empty"))?;
    if header.trim() != "label,param,score" {
        return Err(input_err("score file header must be label,param,score"));
    }
    let mut scores = Vec::new();
    for (i, line) in lines.enumerate() {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(input_err(format!("score row {} needs 3 fields", i + 1)));
        }
        let row = report
            .rows
            .get(i)
            .ok_or_else(|| input_err("more scores than scan rows"))?;
        let param: f64 = parts[1]
            .trim()
            .parse()
            .map_err(|_| input_err(format!("bad param in score row {}", i + 1)))?;
        if parts[0].trim() != row.label || param != row.param {
            return Err(input_err(format!(
                "score row {} is ({},{param}) but the scan row is ({},{})",
                i + 1,
                parts[0].trim(),
                row.label,
                row.param
            )));
        }
        let score: f64 = parts[2]
            .trim()
            .parse()
            .map_err(|_| input_err(format!("bad score in row {}", i + 1)))?;
        scores.push(score);
    }
    let rho = correlate_scores(&mut report, &scores)?;

    let doc = serde_json::json!({"spearman": rho});
    if let Some(out) = &cmd.out {
        ensure_dir(out)?;
        write_json(
            &out.join("correlate.json"),
            &serde_json::to_value(&report).expect("report serializes"),
        )?;
        let config = serde_json::json!({
            "scan": cmd.scan.display().to_string(),
            "scores": cmd.scores.display().to_string(),
        });
        manifest::write(out, "correlate", &config, None, &inputs)?;
    }
    print_json(&doc);
    Ok(())
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

struct TraceData {
    run: String,
    rows: Vec<(f64, f64, f64, f64)>, // t, u_norm, v_norm, mean_u
}

struct ScanData {
    run: String,
    rows: Vec<(String, f64, Option<f64>, Option<f64>)>, // kind, param, xi_hat, xi_norm
}

fn parse_trace_csv(text: &str) -> CliResult<Vec<(f64, f64, f64, f64)>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(input_err(format!("trace row {i} needs 4 fields")));
        }
        let parse = |s: &str| -> CliResult<f64> {
            s.trim()
                .parse()
                .map_err(|_| input_err(format!("bad number '{s}' in trace row {i}")))
        };
        rows.push((parse(f[0])?, parse(f[1])?, parse(f[2])?, parse(f[3])?));
    }
    Ok(rows)
}

fn parse_scan_csv(text: &str) -> CliResult<Vec<(String, f64, Option<f64>, Option<f64>)>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(input_err(format!("scan row {i} needs 4 fields")));
        }
        let param: f64 = f[1]
            .trim()
            .parse()
            .map_err(|_| input_err(format!("bad param '{}' in scan row {i}", f[1])))?;
        let opt = |s: &str| -> CliResult<Option<f64>> {
            let t = s.trim();
            if t.is_empty() {
                return Ok(None);
            }
            t.parse()
                .map(Some)
                .map_err(|_| input_err(format!("bad number '{t}' in scan row {i}")))
        };
        rows.push((f[0].trim().to_string(), param, opt(f[2])?, opt(f[3])?));
    }
    Ok(rows)
}

fn run_report(cmd: &ReportCmd) -> CliResult<()> {
    let mut inputs = InputDigests::new();
    let mut traces: Vec<TraceData> = Vec::new();
    let mut scans: Vec<ScanData> = Vec::new();

    for dir in &cmd.runs {
        let manifest_path = dir.join("manifest.json");
        if !manifest_path.is_file() {
            return Err(CliError::MissingManifest { dir: dir.clone() });
        }
        let bytes = inputs.read(&manifest_path)?;
        let doc: serde_json::Value = serde_json::from_slice(&bytes)
            .map_err(|e| input_err(format!("bad manifest in {}: {e}", dir.display())))?;
        let command = doc["command"].as_str().unwrap_or("");
        let run_name = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        match command {
            "simulate" => {
                let text = String::from_utf8(inputs.read(&dir.join("trace.csv"))?)
                    .map_err(|_| input_err("trace.csv is not utf-8"))?;
                traces.push(TraceData {
                    run: run_name,
                    rows: parse_trace_csv(&text)?,
                });
            }
            "scan" => {
                let text = String::from_utf8(inputs.read(&dir.join("scan.csv"))?)
                    .map_err(|_| input_err("scan.csv is not utf-8"))?;
                scans.push(ScanData {
                    run: run_name,
                    rows: parse_scan_csv(&text)?,
                });
            }
            other => {
                return Err(input_err(format!(
                    "run {} has command '{other}'; only simulate and scan runs can be plotted",
                    dir.display()
                )));
            }
        }
    }

    ensure_dir(&cmd.out)?;
    let mut wrote = Vec::new();

    if !traces.is_empty() {
        let series: Vec<svg::Series> = traces
            .iter()
            .map(|t| svg::Series {
                label: t.run.clone(),
                points: t.rows.iter().map(|r| (r.0, r.1)).collect(),
            })
            .collect();
        let chart = svg::line_chart("Convergence of the scalar field", "t", "|u|", &series, true);
        core_io::atomic_write(&cmd.out.join("decay.svg"), chart.as_bytes())?;
        let mut csv = String::from("run,t,u_norm,v_norm,mean_u\n");
        for t in &traces {
            for r in &t.rows {
                csv.push_str(&format!("{},{},{},{},{}\n", t.run, r.0, r.1, r.2, r.3));
            }
        }
        core_io::atomic_write(&cmd.out.join("traces.csv"), csv.as_bytes())?;
        wrote.push("decay.svg");
        wrote.push("traces.csv");
    }

    if !scans.is_empty() {
        let multi = scans.len() > 1;
        let mut series: Vec<svg::Series> = Vec::new();
        for s in &scans {
            let mut kinds: Vec<String> = Vec::new();
            for row in &s.rows {
                if !kinds.contains(&row.0) {
                    kinds.push(row.0.clone());
                }
            }
            for kind in kinds {
                let mut pts: Vec<(f64, f64)> = s
                    .rows
                    .iter()
                    .filter(|r| r.0 == kind)
                    .filter_map(|r| r.2.map(|xi| (r.1, xi)))
                    .collect();
                pts.sort_by(|a, b| a.0.total_cmp(&b.0));
                if pts.is_empty() {
                    continue;
                }
                let label = if multi { format!("{}/{kind}", s.run) } else { kind };
                series.push(svg::Series { label, points: pts });
            }
        }
        let chart = svg::line_chart("Gap response to interventions", "parameter", "xi", &series, false);
        core_io::atomic_write(&cmd.out.join("scan.svg"), chart.as_bytes())?;
        let mut csv = String::from("run,kind,param,xi_hat,xi_norm\n");
        for s in &scans {
            for r in &s.rows {
                let xi = r.2.map(|v| v.to_string()).unwrap_or_default();
                let norm = r.3.map(|v| v.to_string()).unwrap_or_default();
                csv.push_str(&format!("{},{},{},{xi},{norm}\n", s.run, r.0, r.1));
            }
        }
        core_io::atomic_write(&cmd.out.join("scan_rows.csv"), csv.as_bytes())?;
        wrote.push("scan.svg");
        wrote.push("scan_rows.csv");
    }

    let config = serde_json::json!({
        "runs": cmd.runs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    });
    manifest::write(&cmd.out, "report", &config, None, &inputs)?;
    print_json(&serde_json::json!({
        "decay_curves": traces.len(),
        "scan_runs": scans.len(),
        "wrote": wrote,
    }));
    Ok(())
}

// ---------------------------------------------------------------------------
// Entry
// ---------------------------------------------------------------------------

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Spectrum(c) => run_spectrum(c),
        Command::Simulate(c) => run_simulate(c),
        Command::OptimalParams(c) => run_optimal_params(c),
        Command::Estimate(c) => run_estimate(c),
        Command::Scan(c) => run_scan(c),
        Command::Correlate(c) => run_correlate(c),
        Command::Report(c) => run_report(c),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!(
            "{}",
            serde_json::json!({"error": e.kind(), "message": e.to_string()})
        );
        std::process::exit(1);
    }
}
