mod export;
mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ricci_lab::bounds::{check_derivative_formula, check_theorems, DerivativeReport, TheoremReport};
use ricci_lab::error::Error;
use ricci_lab::flow::{run_flow, FlowConfig, FlowTrace};
use ricci_lab::generate::generate_surface;
use ricci_lab::io::{load_mesh, write_off, MeshFormat};
use ricci_lab::mesh::IntrinsicMesh;
use ricci_lab::spectrum::DEFAULT_OVERLAP_FLOOR;
use serde::Serialize;

use manifest::{generator_digest, sha256, Input, RunManifest};

const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_EULER: u8 = 4;
const EXIT_NOT_CONVERGED: u8 = 5;
const EXIT_VERDICT: u8 = 6;
const EXIT_DT_UNDERFLOW: u8 = 7;
const EXIT_SOLVER: u8 = 8;

/// Normalized Ricci flow on closed triangulated surfaces, with eigenvalue
/// tracking and comparison-bound checks.
#[derive(Parser)]
#[command(name = "ricci-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a closed genus-g surface as an OFF file.
    Generate(GenerateArgs),
    /// Run the flow on a mesh and write the trace, final state and manifest.
    Flow(FlowArgs),
    /// Run the flow and check the comparison bounds; exit 0 iff all hold.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Genus-2 surface (the default).
    #[arg(long)]
    genus2: bool,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(2..), conflicts_with = "genus2")]
    genus: u64,
    /// Rounds of 4-to-1 midpoint subdivision.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..16))]
    rounds: u64,
    /// Amplitude of the random conformal perturbation.
    #[arg(long, default_value_t = 0.0, value_parser = non_negative)]
    perturb: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; defaults to `genus<g>.off` in the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "RICCI_LAB_OUT", default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// JSON flow configuration; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dt_init: Option<f64>,
    #[arg(long)]
    dt_min: Option<f64>,
    #[arg(long)]
    safety_shrink: Option<f64>,
    /// Convergence threshold on max |R - r| / |r|.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    /// Accepted steps between snapshots.
    #[arg(long)]
    stride: Option<usize>,
    /// Non-trivial eigenpairs per snapshot.
    #[arg(long)]
    eigen_count: Option<usize>,
    #[arg(long, env = "RICCI_LAB_OUT", default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct FlowArgs {
    /// Input mesh (.off or .obj).
    #[arg(long)]
    mesh: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct VerifyArgs {
    /// Directory of a previous `flow` run; its manifest supplies mesh and config.
    #[arg(long, required_unless_present = "mesh")]
    run: Option<PathBuf>,
    #[arg(long, conflicts_with = "run")]
    mesh: Option<PathBuf>,
    /// Lower bound of the initial Gauss curvature; defaults to its minimum.
    #[arg(long, allow_hyphen_values = true)]
    sigma: Option<f64>,
    /// Also write SVG charts of the eigenvalue and curvature bounds.
    #[arg(long)]
    plots: bool,
    /// Minimum eigenvector overlap for an unambiguous track transition.
    #[arg(long, default_value_t = DEFAULT_OVERLAP_FLOOR)]
    overlap_floor: f64,
    /// Add the eigenvalue-derivative comparison to the report (informational).
    #[arg(long)]
    check_derivative: bool,
    #[command(flatten)]
    config: ConfigArgs,
}

fn non_negative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a finite non-negative number, got {s:?}")),
    }
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Precondition(_) => EXIT_USAGE,
            Error::NonNegativeEuler { .. } => EXIT_EULER,
            Error::NotConverged => EXIT_NOT_CONVERGED,
            Error::DtUnderflow { .. } => EXIT_DT_UNDERFLOW,
            Error::SolverNonConvergence { .. } => EXIT_SOLVER,
            _ => EXIT_IO,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure { code, message: message.into() }
}

fn io_context(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| fail(EXIT_IO, format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => generate(args),
        Command::Flow(args) => flow(args),
        Command::Verify(args) => verify(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn generate(args: GenerateArgs) -> Result<u8, Failure> {
    let genus = args.genus as usize;
    let rounds = args.rounds as usize;
    let mesh = generate_surface(genus, rounds, args.perturb, args.seed)?;
    let digest = generator_digest(genus, rounds, args.perturb, args.seed);
    let manifest = RunManifest::new(
        "generate",
        Input::Generator { genus, rounds, perturb: args.perturb, seed: args.seed },
        digest,
        &args.out_dir,
    );
    let out = args.out.unwrap_or_else(|| args.out_dir.join(format!("genus{genus}.off")));
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_context(parent))?;
    }
    let mut bytes = Vec::new();
    write_off(&mesh, &manifest.header_lines(), &mut bytes)?;
    fs::write(&out, bytes).map_err(io_context(&out))?;
    println!(
        "wrote {} (V={}, E={}, F={}, chi={})",
        out.display(),
        mesh.vertex_count(),
        mesh.edge_count(),
        mesh.face_count(),
        mesh.euler_characteristic()
    );
    Ok(0)
}

fn resolve_config(args: &ConfigArgs, base: Option<FlowConfig>) -> Result<FlowConfig, Failure> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(io_context(path))?;
            serde_json::from_str(&text).map_err(|e| fail(EXIT_IO, format!("{}: {e}", path.display())))?
        }
        None => base.unwrap_or_default(),
    };
    if let Some(v) = args.dt_init {
        config.dt_init = v;
    }
    if let Some(v) = args.dt_min {
        config.dt_min = v;
    }
    if let Some(v) = args.safety_shrink {
        config.safety_shrink = v;
    }
    if let Some(v) = args.tol {
        config.convergence_tol = v;
    }
    if let Some(v) = args.max_steps {
        config.max_steps = v;
    }
    if let Some(v) = args.stride {
        config.snapshot_stride = v;
    }
    if let Some(v) = args.eigen_count {
        config.eigen_count = v;
    }
    config.validate()?;
    Ok(config)
}

fn read_mesh(path: &Path) -> Result<(IntrinsicMesh, String), Failure> {
    let format = MeshFormat::from_path(path)
        .ok_or_else(|| fail(EXIT_USAGE, format!("{}: expected a .off or .obj file", path.display())))?;
    let bytes = fs::read(path).map_err(io_context(path))?;
    let mesh = load_mesh(bytes.as_slice(), format).map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    })?;
    Ok((mesh, sha256(&bytes)))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| fail(EXIT_IO, e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(io_context(path))?;
    Ok(())
}

fn summary(trace: &FlowTrace) -> String {
    let last = trace.last();
    format!(
        "{} after {} steps ({} rejected), t = {:.6}, max |R - r| / |r| = {:.3e}",
        if trace.converged { "converged" } else { "not converged" },
        trace.step_count,
        trace.rejected_steps,
        last.t(),
        last.curvature.relative_deviation()
    )
}

fn flow(args: FlowArgs) -> Result<u8, Failure> {
    let config = resolve_config(&args.config, None)?;
    let (mesh, digest) = read_mesh(&args.mesh)?;
    let out_dir = &args.config.out_dir;
    let mut manifest =
        RunManifest::new("flow", Input::Mesh { path: args.mesh.display().to_string() }, digest, out_dir);
    manifest.config = Some(config.clone());
    let trace = run_flow(&mesh, &config)?;

    fs::create_dir_all(out_dir).map_err(io_context(out_dir))?;
    let csv_path = out_dir.join("trace.csv");
    let file = fs::File::create(&csv_path).map_err(io_context(&csv_path))?;
    export::write_trace_csv(&trace, config.eigen_count, &manifest.header_lines(), std::io::BufWriter::new(file))
        .map_err(|e| fail(EXIT_IO, format!("{}: {e}", csv_path.display())))?;
    write_json(&out_dir.join("state.json"), &trace.last().state)?;
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    println!("{}", summary(&trace));
    Ok(if trace.converged { 0 } else { EXIT_NOT_CONVERGED })
}

#[derive(Serialize)]
struct VerifyOutput<'a> {
    tool: &'a str,
    version: &'a str,
    input_digest: &'a str,
    seed: Option<u64>,
    config: &'a FlowConfig,
    overlap_floor: f64,
    report: &'a TheoremReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    derivative: Option<&'a DerivativeReport>,
}

fn verify(args: VerifyArgs) -> Result<u8, Failure> {
    let (mesh_path, base_config, expected_digest) = match &args.run {
        Some(dir) => {
            let path = dir.join("manifest.json");
            let text = fs::read_to_string(&path).map_err(io_context(&path))?;
            let manifest: RunManifest =
                serde_json::from_str(&text).map_err(|e| fail(EXIT_IO, format!("{}: {e}", path.display())))?;
            let Input::Mesh { path: mesh } = manifest.input else {
                return Err(fail(EXIT_USAGE, format!("{}: not the manifest of a flow run", path.display())));
            };
            (PathBuf::from(mesh), manifest.config, Some(manifest.input_digest))
        }
        None => (args.mesh.clone().expect("clap enforces --mesh or --run"), None, None),
    };
    let config = resolve_config(&args.config, base_config)?;
    if config.eigen_count == 0 {
        return Err(fail(EXIT_USAGE, "verify needs eigen_count >= 1"));
    }
    if !(args.overlap_floor > 0.0 && args.overlap_floor <= 1.0) {
        return Err(fail(EXIT_USAGE, "overlap floor must lie in (0, 1]"));
    }
    let (mesh, digest) = read_mesh(&mesh_path)?;
    if let Some(expected) = expected_digest {
        if expected != digest {
            return Err(fail(EXIT_IO, format!("{} changed since the flow run (digest mismatch)", mesh_path.display())));
        }
    }
    let out_dir = &args.config.out_dir;
    let mut manifest =
        RunManifest::new("verify", Input::Mesh { path: mesh_path.display().to_string() }, digest, out_dir);
    manifest.config = Some(config.clone());
    manifest.sigma = args.sigma;

    let trace = run_flow(&mesh, &config)?;
    if !trace.converged {
        return Err(fail(EXIT_NOT_CONVERGED, format!("refusing to verify: {}", summary(&trace))));
    }
    let tracks = trace.tracks(config.eigen_count, args.overlap_floor);
    let report = check_theorems(&trace, &tracks, args.sigma)?;
    let derivative = if args.check_derivative {
        Some(check_derivative_formula(&mesh, &trace, &tracks, &config.solver_options())?)
    } else {
        None
    };

    fs::create_dir_all(out_dir).map_err(io_context(out_dir))?;
    let output = VerifyOutput {
        tool: manifest::TOOL,
        version: manifest::VERSION,
        input_digest: &manifest.input_digest,
        seed: manifest.seed,
        config: &config,
        overlap_floor: args.overlap_floor,
        report: &report,
        derivative: derivative.as_ref(),
    };
    write_json(&out_dir.join("report.json"), &output)?;
    write_json(&out_dir.join("verify-manifest.json"), &manifest)?;
    if args.plots {
        let curves: Vec<Vec<(f64, f64)>> =
            tracks.iter().map(|t| t.samples.iter().map(|s| (s.t, s.lambda)).collect()).collect();
        let path = out_dir.join("eigenvalues.svg");
        fs::write(&path, export::eigen_chart(&report, &curves)).map_err(io_context(&path))?;
        let path = out_dir.join("curvature.svg");
        fs::write(&path, export::curvature_chart(&report)).map_err(io_context(&path))?;
    }

    println!("{}", summary(&trace));
    for r in &report.indices {
        println!(
            "lambda_{}: {:.6} -> {:.6}  T1 {}  T2 {}  bound {}  final {}{}",
            r.index,
            r.lambda_g,
            r.lambda_tilde,
            verdict(r.theorem1_ok),
            verdict(r.theorem2_ok),
            verdict(r.barrier_ok),
            verdict(r.pointwise_bound_ok),
            if r.track_ambiguous { "  (ambiguous track)" } else { "" }
        );
    }
    println!("curvature barrier {} (worst margin {:.3e})", verdict(report.max_principle.ok), report.max_principle.worst_margin);
    if let Some(d) = &derivative {
        let failed = d.samples.iter().filter(|s| !s.ok).count();
        println!("derivative formula: {} of {} samples outside tolerance", failed, d.samples.len());
    }
    Ok(if report.all_ok { 0 } else { EXIT_VERDICT })
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAIL"
    }
}
