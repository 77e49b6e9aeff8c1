//! Command-line harness: correctness checks, timing, model reports,
//! parameter sweeps and kernel emission.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use quadfem::codegen::generate_kernel_source;
use quadfem::element::{quadrature_rule, tabulate, QuadratureRule, Tabulation};
use quadfem::executor::{
    integrate_transposed, shared_memory_requirement, DeviceConfig, ExecParams, ExecutionGeometry,
};
use quadfem::mesh::{
    compute_geometry, gather_coefficients, generate_unit_simplex_mesh, FieldLayout, Mesh,
};
use quadfem::perf_model::{balance, estimate, ratio_to_f64, PerfEstimate};
use quadfem::physics::{
    elasticity_form, poisson_form, poisson_varcoef_form, AuxField, AuxSpace, PhysicsForm,
};
use quadfem::real::Precision;
use quadfem::reference::{assemble_residual, integrate_reference};

pub const BLOCK_SWEEP: [usize; 6] = [16, 20, 24, 28, 32, 36];
pub const BATCH_SWEEP: [usize; 4] = [4, 8, 12, 16];
pub const MIN_REPS: usize = 5;

pub const CSV_HEADER: &str =
    "dim,physics,scalar,n_bl,n_cb,n_cells,max_rel_err,model_flops,bytes,beta,wall_ms,mflops_rate";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] quadfem::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Core(quadfem::Error::Configuration(_)) => 2,
            CliError::Core(quadfem::Error::SharedMemoryCapacity { .. }) => 2,
            CliError::Core(quadfem::Error::InvalidDimension(_)) => 2,
            CliError::Core(quadfem::Error::Capability(_)) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Check,
    Bench,
    Model,
    Sweep,
    EmitKernel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PhysicsKind {
    Poisson,
    PoissonVarcoef,
    Elasticity,
}

impl PhysicsKind {
    pub fn name(self) -> &'static str {
        match self {
            PhysicsKind::Poisson => "poisson",
            PhysicsKind::PoissonVarcoef => "poisson-varcoef",
            PhysicsKind::Elasticity => "elasticity",
        }
    }

    pub fn form(self, dim: usize) -> quadfem::Result<PhysicsForm> {
        match self {
            PhysicsKind::Poisson => poisson_form(dim),
            PhysicsKind::PoissonVarcoef => poisson_varcoef_form(dim),
            PhysicsKind::Elasticity => elasticity_form(dim),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScalarKind {
    F32,
    F64,
}

impl ScalarKind {
    pub fn precision(self) -> Precision {
        match self {
            ScalarKind::F32 => Precision::Single,
            ScalarKind::F64 => Precision::Double,
        }
    }

    /// Pass threshold for the max relative error of a check run.
    pub fn tolerance(self) -> f64 {
        match self {
            ScalarKind::F32 => 1e-5,
            ScalarKind::F64 => 1e-11,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FieldKind {
    Random,
    Affine,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AuxKind {
    /// One coefficient per cell.
    P0,
    /// Coefficient in the solution's P1 space.
    P1,
}

#[derive(Debug, Clone, Parser)]
#[command(
    name = "quadfem",
    version,
    about = "Quadrature-based residual evaluation on a simulated accelerator"
)]
pub struct Args {
    #[arg(long, value_enum, default_value = "check")]
    pub mode: Mode,
    /// Shorthand for `--mode emit-kernel`.
    #[arg(long)]
    pub emit_kernel: bool,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, value_enum, default_value = "poisson")]
    pub physics: PhysicsKind,
    /// Subdivisions per axis of the unit square or cube.
    #[arg(long, default_value_t = 8)]
    pub refine: usize,
    #[arg(long = "num-blocks", default_value_t = 16)]
    pub num_blocks: usize,
    #[arg(long = "num-batches", default_value_t = 8)]
    pub num_batches: usize,
    #[arg(long = "real", value_enum, default_value = "f32")]
    pub scalar: ScalarKind,
    /// Host threads used to run chunks.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// CSV (or kernel text) destination.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "random")]
    pub field: FieldKind,
    #[arg(long, value_enum, default_value = "p1")]
    pub aux: AuxKind,
    #[arg(long, default_value_t = MIN_REPS)]
    pub reps: usize,
    /// Write the virtual-device batch trace as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Write the generated mesh in dump format.
    #[arg(long)]
    pub dump_mesh: Option<PathBuf>,
    /// Shared memory per thread block, bytes.
    #[arg(long, default_value_t = 48 * 1024)]
    pub shared_mem_cap: usize,
    #[arg(long, default_value_t = 1024)]
    pub max_threads: usize,
}

/// Validated run parameters.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Mode,
    pub dim: usize,
    pub physics: PhysicsKind,
    pub refine: usize,
    pub n_bl: usize,
    pub n_cb: usize,
    pub scalar: ScalarKind,
    pub jobs: usize,
    pub output: Option<PathBuf>,
    pub seed: u64,
    pub field: FieldKind,
    pub aux: AuxKind,
    pub reps: usize,
    pub trace: Option<PathBuf>,
    pub dump_mesh: Option<PathBuf>,
    pub device: DeviceConfig,
}

impl RunConfig {
    pub fn from_args(args: Args) -> Result<Self, CliError> {
        let mode = if args.emit_kernel {
            Mode::EmitKernel
        } else {
            args.mode
        };
        let cfg = Self {
            mode,
            dim: args.dim,
            physics: args.physics,
            refine: args.refine,
            n_bl: args.num_blocks,
            n_cb: args.num_batches,
            scalar: args.scalar,
            jobs: args.jobs,
            output: args.output,
            seed: args.seed,
            field: args.field,
            aux: args.aux,
            reps: args.reps,
            trace: args.trace,
            dump_mesh: args.dump_mesh,
            device: DeviceConfig {
                max_threads: args.max_threads,
                shared_mem_cap: args.shared_mem_cap,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse_from<I, T>(argv: I) -> Result<Self, CliError>
    where
        I: IntoIterator<Item = T>,
        T: Into<std::ffi::OsString> + Clone,
    {
        let args = Args::try_parse_from(argv).map_err(|e| CliError::Config(e.to_string()))?;
        Self::from_args(args)
    }

    fn validate(&self) -> Result<(), CliError> {
        if !(2..=3).contains(&self.dim) {
            return Err(CliError::Config(format!(
                "--dim must be 2 or 3, got {}",
                self.dim
            )));
        }
        if self.refine == 0 {
            return Err(CliError::Config("--refine must be at least 1".into()));
        }
        if self.jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        if self.reps < MIN_REPS {
            return Err(CliError::Config(format!(
                "--reps must be at least {MIN_REPS}, got {}",
                self.reps
            )));
        }
        let form = self.physics.form(self.dim)?;
        let n_q = quadrature_rule(self.dim, 1)?.n_points();
        let n_cells = cell_count(self.dim, self.refine).ok_or_else(|| {
            CliError::Config(format!("--refine {} overflows the cell count", self.refine))
        })?;
        let configs: Vec<(usize, usize)> = match self.mode {
            Mode::Sweep => BLOCK_SWEEP
                .iter()
                .flat_map(|&b| BATCH_SWEEP.iter().map(move |&c| (b, c)))
                .collect(),
            _ => vec![(self.n_bl, self.n_cb)],
        };
        for (n_bl, n_cb) in configs {
            let geom = ExecutionGeometry::for_form(&form, n_q, n_bl, n_cb, n_cells, &self.device)?;
            if matches!(self.mode, Mode::Check | Mode::Bench | Mode::Sweep) {
                let aux_space = (form.n_aux() > 0).then_some(match self.aux {
                    AuxKind::P0 => AuxSpace::Cellwise,
                    AuxKind::P1 => AuxSpace::SameSpace,
                });
                let required = match self.scalar {
                    ScalarKind::F32 => shared_memory_requirement::<f32>(&geom, &form, aux_space),
                    ScalarKind::F64 => shared_memory_requirement::<f64>(&geom, &form, aux_space),
                };
                if required > self.device.shared_mem_cap {
                    return Err(CliError::Config(format!(
                        "n_bl={n_bl}, n_cb={n_cb} needs {required} bytes of shared memory, above --shared-mem-cap {}",
                        self.device.shared_mem_cap
                    )));
                }
            }
        }
        Ok(())
    }

    fn exec_params(&self, n_bl: usize, n_cb: usize) -> ExecParams {
        ExecParams {
            n_bl,
            n_cb,
            device: self.device,
            jobs: self.jobs,
            log_tasks: false,
        }
    }
}

/// Cells of the structured simplex mesh with `n` subdivisions per axis.
pub fn cell_count(dim: usize, n: usize) -> Option<usize> {
    let per_box = if dim == 2 { 2 } else { 6 };
    n.checked_pow(dim as u32)?.checked_mul(per_box)
}

/// Deterministic global field for `layout` on `mesh`.
pub fn seeded_field(mesh: &Mesh, layout: &FieldLayout, kind: FieldKind, seed: u64) -> Vec<f64> {
    let n_comp = layout.n_comp;
    let mut out = vec![0.0; layout.global_len(mesh)];
    match kind {
        FieldKind::Constant => out.fill(1.0),
        FieldKind::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            out.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        }
        FieldKind::Affine => {
            for v in 0..mesh.n_vertices() {
                let x = mesh.vertex(v);
                let z = x.get(2).copied().unwrap_or(0.0);
                let base = 2.0 * x[0] + 3.0 * x[1] - z + 1.0;
                for c in 0..n_comp {
                    out[v * n_comp + c] = base * (c + 1) as f64;
                }
            }
        }
    }
    out
}

/// `max|x - y| / max|y|`, or the absolute error when `y` is zero.
pub fn max_rel_err(x: &[f64], y: &[f64]) -> f64 {
    let diff = x
        .iter()
        .zip(y)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let scale = y.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Inputs of one run.
pub struct Problem {
    pub mesh: Mesh,
    pub layout: FieldLayout,
    pub rule: QuadratureRule,
    pub tab: Tabulation,
    pub form: PhysicsForm,
    pub field: Vec<f64>,
    pub aux: Option<AuxField>,
}

impl Problem {
    pub fn build(cfg: &RunConfig) -> Result<Self, CliError> {
        let mesh = generate_unit_simplex_mesh(cfg.dim, cfg.refine)?;
        let form = cfg.physics.form(cfg.dim)?;
        let layout = FieldLayout::new(form.n_comp());
        let rule = quadrature_rule(cfg.dim, 1)?;
        let tab = tabulate(cfg.dim, &rule)?;
        let field = seeded_field(&mesh, &layout, cfg.field, cfg.seed);
        let aux = if form.n_aux() == 0 {
            None
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_a0c5);
            let n_aux = form.n_aux();
            Some(match cfg.aux {
                AuxKind::P0 => AuxField::cellwise(
                    n_aux,
                    (0..mesh.n_cells() * n_aux)
                        .map(|_| rng.gen_range(1.0..2.0))
                        .collect(),
                ),
                AuxKind::P1 => {
                    let nodal: Vec<f64> = (0..mesh.n_vertices() * n_aux)
                        .map(|_| rng.gen_range(1.0..2.0))
                        .collect();
                    let per_cell = gather_coefficients(&mesh, &FieldLayout::new(n_aux), &nodal)?;
                    AuxField::same_space(n_aux, per_cell)
                }
            })
        };
        Ok(Self {
            mesh,
            layout,
            rule,
            tab,
            form,
            field,
            aux,
        })
    }

    pub fn reference_residual(&self) -> Result<Vec<f64>, CliError> {
        let geom = compute_geometry(&self.mesh)?;
        let coeffs = gather_coefficients(&self.mesh, &self.layout, &self.field)?;
        let elem = integrate_reference(
            &self.tab,
            &self.rule,
            &geom,
            &self.form,
            &coeffs,
            self.aux.as_ref(),
        )?;
        Ok(assemble_residual(&self.mesh, &self.layout, &elem)?)
    }
}

/// One timed transposed run.
pub struct Measurement {
    pub residual: Vec<f64>,
    pub wall_ms: f64,
    pub model_flops: u64,
    pub bytes: u64,
    pub trace_csv: String,
}

pub fn run_transposed(
    problem: &Problem,
    scalar: ScalarKind,
    params: &ExecParams,
) -> Result<Measurement, CliError> {
    let p = problem;
    let start = Instant::now();
    let result = match scalar {
        ScalarKind::F32 => integrate_transposed::<f32>(
            &p.mesh,
            &p.layout,
            &p.tab,
            &p.rule,
            params,
            &p.form,
            &p.field,
            p.aux.as_ref(),
        )?,
        ScalarKind::F64 => integrate_transposed::<f64>(
            &p.mesh,
            &p.layout,
            &p.tab,
            &p.rule,
            params,
            &p.form,
            &p.field,
            p.aux.as_ref(),
        )?,
    };
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(Measurement {
        wall_ms,
        model_flops: result.trace.total_flops().model,
        bytes: result.trace.total_bytes(),
        trace_csv: result.trace.to_csv(),
        residual: result.residual,
    })
}

/// Output of [`run`]: text for standard output, optional file payload and
/// the process exit status.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub exit_code: u8,
    pub text: String,
    pub file_payload: Option<String>,
}

struct Row<'a> {
    cfg: &'a RunConfig,
    n_bl: usize,
    n_cb: usize,
    n_cells: usize,
    err: f64,
    m: &'a Measurement,
    beta: f64,
}

impl Row<'_> {
    fn csv(&self) -> String {
        let mflops = if self.m.wall_ms > 0.0 {
            self.m.model_flops as f64 / (self.m.wall_ms * 1e3)
        } else {
            0.0
        };
        format!(
            "{},{},{},{},{},{},{:e},{},{},{},{:.3},{:.3}",
            self.cfg.dim,
            self.cfg.physics.name(),
            self.cfg.scalar.precision().name(),
            self.n_bl,
            self.n_cb,
            self.n_cells,
            self.err,
            self.m.model_flops,
            self.m.bytes,
            self.beta,
            self.m.wall_ms,
            mflops
        )
    }
}

const TIMING_NOTE: &str =
    "# wall times are host measurements of a simulated device and are not comparable to hardware GFLOP/s";

fn beta_for(
    cfg: &RunConfig,
    form: &PhysicsForm,
    n_bl: usize,
    n_cb: usize,
) -> Result<f64, CliError> {
    let n_q = quadrature_rule(cfg.dim, 1)?.n_points();
    let geom = ExecutionGeometry::for_form(form, n_q, n_bl, n_cb, 0, &cfg.device)?;
    Ok(ratio_to_f64(balance(&geom)))
}

pub fn run(cfg: &RunConfig) -> Result<Report, CliError> {
    match cfg.mode {
        Mode::Check => run_check(cfg),
        Mode::Bench => run_bench(cfg),
        Mode::Model => run_model(cfg),
        Mode::Sweep => run_sweep(cfg),
        Mode::EmitKernel => run_emit(cfg),
    }
}

fn write_side_files(cfg: &RunConfig, problem: &Problem, trace_csv: &str) -> Result<(), CliError> {
    if let Some(path) = &cfg.dump_mesh {
        std::fs::write(path, problem.mesh.to_dump_string())?;
    }
    if let Some(path) = &cfg.trace {
        std::fs::write(path, trace_csv)?;
    }
    Ok(())
}

fn run_check(cfg: &RunConfig) -> Result<Report, CliError> {
    let problem = Problem::build(cfg)?;
    let reference = problem.reference_residual()?;
    let m = run_transposed(&problem, cfg.scalar, &cfg.exec_params(cfg.n_bl, cfg.n_cb))?;
    write_side_files(cfg, &problem, &m.trace_csv)?;
    let err = max_rel_err(&m.residual, &reference);
    let tol = cfg.scalar.tolerance();
    let pass = err <= tol;
    let row = Row {
        cfg,
        n_bl: cfg.n_bl,
        n_cb: cfg.n_cb,
        n_cells: problem.mesh.n_cells(),
        err,
        m: &m,
        beta: beta_for(cfg, &problem.form, cfg.n_bl, cfg.n_cb)?,
    };
    let text = format!(
        "check {} {}D {} refine={} cells={} n_bl={} n_cb={}: max relative error {:.3e} (tolerance {:.0e}) {}\n",
        cfg.physics.name(),
        cfg.dim,
        cfg.scalar.precision().name(),
        cfg.refine,
        problem.mesh.n_cells(),
        cfg.n_bl,
        cfg.n_cb,
        err,
        tol,
        if pass { "PASS" } else { "FAIL" }
    );
    Ok(Report {
        exit_code: if pass { 0 } else { 1 },
        text,
        file_payload: Some(format!("{CSV_HEADER}\n{}\n", row.csv())),
    })
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn run_bench(cfg: &RunConfig) -> Result<Report, CliError> {
    let problem = Problem::build(cfg)?;
    let params = cfg.exec_params(cfg.n_bl, cfg.n_cb);
    let mut times = Vec::with_capacity(cfg.reps);
    let mut last = None;
    for _ in 0..cfg.reps {
        let m = run_transposed(&problem, cfg.scalar, &params)?;
        times.push(m.wall_ms);
        last = Some(m);
    }
    let mut m = last.expect("reps is at least MIN_REPS");
    write_side_files(cfg, &problem, &m.trace_csv)?;
    m.wall_ms = median(times);
    let reference = problem.reference_residual()?;
    let err = max_rel_err(&m.residual, &reference);
    let pass = err <= cfg.scalar.tolerance();
    let row = Row {
        cfg,
        n_bl: cfg.n_bl,
        n_cb: cfg.n_cb,
        n_cells: problem.mesh.n_cells(),
        err,
        m: &m,
        beta: beta_for(cfg, &problem.form, cfg.n_bl, cfg.n_cb)?,
    };
    let csv = format!("{CSV_HEADER}\n{}\n", row.csv());
    let mut text = String::new();
    writeln!(text, "{TIMING_NOTE}").unwrap();
    writeln!(
        text,
        "bench {} {}D {} cells={} reps={}: median {:.3} ms, {} model flops, {:.3} MFLOP/s (model flops / median time)",
        cfg.physics.name(),
        cfg.dim,
        cfg.scalar.precision().name(),
        problem.mesh.n_cells(),
        cfg.reps,
        m.wall_ms,
        m.model_flops,
        m.model_flops as f64 / (m.wall_ms * 1e3).max(f64::MIN_POSITIVE)
    )
    .unwrap();
    text.push_str(&csv);
    Ok(Report {
        exit_code: if pass { 0 } else { 1 },
        text,
        file_payload: Some(format!("{TIMING_NOTE}\n{csv}")),
    })
}

fn run_model(cfg: &RunConfig) -> Result<Report, CliError> {
    let form = cfg.physics.form(cfg.dim)?;
    let n_q = quadrature_rule(cfg.dim, 1)?.n_points();
    let n_cells = cell_count(cfg.dim, cfg.refine).unwrap_or(0);
    let geom = ExecutionGeometry::for_form(&form, n_q, cfg.n_bl, cfg.n_cb, n_cells, &cfg.device)?;
    let width = cfg.scalar.precision().width();
    let est = estimate(&geom, width, form.has_f0(), cfg.device.shared_mem_cap);
    let beta = balance(&geom);
    let mut text = String::new();
    writeln!(
        text,
        "performance model: {} {}D, {}",
        cfg.physics.name(),
        cfg.dim,
        cfg.scalar.precision().name()
    )
    .unwrap();
    text.push_str(&est.table());
    writeln!(
        text,
        "  {:<28} {} = {:.6}",
        "beta at 4-byte scalars",
        beta,
        ratio_to_f64(beta)
    )
    .unwrap();
    if cfg.physics == PhysicsKind::Poisson && cfg.dim == 2 {
        text.push_str(&shared_memory_diagnostic(&form, &cfg.device)?);
    }
    Ok(Report {
        exit_code: 0,
        text,
        file_payload: Some(format!("{}\n{}\n", PerfEstimate::CSV_HEADER, est.csv_row())),
    })
}

/// Formula evaluation for the published 2D Poisson configuration with 32
/// concurrent blocks, next to the quoted 5 KB estimate.
fn shared_memory_diagnostic(form: &PhysicsForm, device: &DeviceConfig) -> Result<String, CliError> {
    const QUOTED_BYTES: u64 = 5 * 1024;
    let geom = ExecutionGeometry::for_form(form, 1, 32, 1, 0, device)?;
    let est = estimate(&geom, 4, form.has_f0(), device.shared_mem_cap);
    let mut s = String::new();
    writeln!(
        s,
        "shared memory diagnostic (2D Poisson, f32, N_bl=32, N_q=1):"
    )
    .unwrap();
    writeln!(
        s,
        "  formula M = {} bytes, {} blocks per {} bytes; quoted M = {} bytes, {} blocks",
        est.shared_bytes_block,
        est.occupancy_hint,
        device.shared_mem_cap,
        QUOTED_BYTES,
        device.shared_mem_cap as u64 / QUOTED_BYTES
    )
    .unwrap();
    Ok(s)
}

fn run_sweep(cfg: &RunConfig) -> Result<Report, CliError> {
    let problem = Problem::build(cfg)?;
    let reference = problem.reference_residual()?;
    let tol = cfg.scalar.tolerance();
    let mut csv = format!("{CSV_HEADER}\n");
    let mut failures = 0;
    for &n_bl in &BLOCK_SWEEP {
        for &n_cb in &BATCH_SWEEP {
            let m = run_transposed(&problem, cfg.scalar, &cfg.exec_params(n_bl, n_cb))?;
            let err = max_rel_err(&m.residual, &reference);
            if err > tol {
                failures += 1;
            }
            let row = Row {
                cfg,
                n_bl,
                n_cb,
                n_cells: problem.mesh.n_cells(),
                err,
                m: &m,
                beta: beta_for(cfg, &problem.form, n_bl, n_cb)?,
            };
            csv.push_str(&row.csv());
            csv.push('\n');
        }
    }
    let mut text = format!("{TIMING_NOTE}\n");
    text.push_str(&csv);
    writeln!(
        text,
        "sweep: {} of {} configurations within tolerance {:.0e}",
        BLOCK_SWEEP.len() * BATCH_SWEEP.len() - failures,
        BLOCK_SWEEP.len() * BATCH_SWEEP.len(),
        tol
    )
    .unwrap();
    Ok(Report {
        exit_code: if failures == 0 { 0 } else { 1 },
        text,
        file_payload: Some(csv),
    })
}

fn run_emit(cfg: &RunConfig) -> Result<Report, CliError> {
    let form = cfg.physics.form(cfg.dim)?;
    let n_q = quadrature_rule(cfg.dim, 1)?.n_points();
    let geom = ExecutionGeometry::for_form(&form, n_q, cfg.n_bl, cfg.n_cb, 0, &cfg.device)?;
    let kernel = generate_kernel_source(&geom, &form, cfg.scalar.precision())?;
    Ok(Report {
        exit_code: 0,
        text: kernel.text.clone(),
        file_payload: Some(kernel.text),
    })
}

/// Runs `cfg`, writing the payload to `--output` when one is given (in which
/// case standard output only carries the summary for non-kernel modes).
pub fn run_and_write(cfg: &RunConfig) -> Result<Report, CliError> {
    let mut report = run(cfg)?;
    if let (Some(path), Some(payload)) = (&cfg.output, &report.file_payload) {
        std::fs::write(path, payload)?;
        if cfg.mode == Mode::EmitKernel {
            report.text = format!("wrote kernel source to {}\n", path.display());
        }
    }
    Ok(report)
}
