//! Thread-transposed element integration on a deterministic virtual device.
//!
//! Cells are split into chunks (one per thread block), each chunk into `n_cb`
//! batches processed in sequence, and each batch into `n_bl` blocks of
//! `n_bs = n_b * n_q` cells. A batch runs in two phases separated by a single
//! barrier:
//!
//! 1. quadrature phase: each of the `n_t` threads owns a (quadrature point,
//!    component) pair and walks `n_sqc` cells, storing the weighted pointwise
//!    `f0`/`f1` values in shared memory;
//! 2. basis phase: each thread owns a (basis function, component) pair and
//!    walks `n_sbc` cells, reducing the stored values against the test
//!    functions into a private accumulator.
//!
//! No reduction crosses threads, so the only synchronisation is the barrier
//! between the phases. The virtual device executes threads one after another
//! in each phase step; concurrency is a property of the schedule, recorded in
//! the optional task log.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::element::{QuadratureRule, Tabulation};
use crate::mesh::{compute_geometry, gather_coefficients, scatter_add_element_vectors};
use crate::mesh::{CellGeometry, FieldLayout, GeometrySlice, Mesh};
use crate::physics::{AuxField, AuxSlice, AuxSpace, KernelScalar, PhysicsForm, PointState};
use crate::reference::{check_inputs, integrate_cells};
use crate::{Error, Real, Result};

/// Hardware limits of the simulated device.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeviceConfig {
    /// Maximum threads per thread block.
    pub max_threads: usize,
    /// Shared memory available to one thread block, in bytes.
    pub shared_mem_cap: usize,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        Self {
            max_threads: 1024,
            shared_mem_cap: 48 * 1024,
        }
    }
}

/// Every size derived from a chunk/batch/block decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExecutionGeometry {
    pub dim: usize,
    /// Scalar basis functions per cell.
    pub n_b: usize,
    pub n_comp: usize,
    /// Quadrature points per cell.
    pub n_q: usize,
    /// Basis functions over all components, `n_b * n_comp`.
    pub n_bt: usize,
    /// Cells per block, `n_b * n_q`.
    pub n_bs: usize,
    /// Concurrent blocks per batch.
    pub n_bl: usize,
    /// Cells per batch.
    pub n_bc: usize,
    /// Batches per chunk.
    pub n_cb: usize,
    /// Cells per chunk.
    pub n_chunk: usize,
    /// Threads per thread block.
    pub n_t: usize,
    /// Quadrature-phase threads per cell.
    pub n_tq: usize,
    /// Cells each thread visits in the quadrature phase.
    pub n_sqc: usize,
    /// Cells each thread visits in the basis phase.
    pub n_sbc: usize,
    /// Cells written concurrently by the basis phase.
    pub n_cbc: usize,
    pub n_cells: usize,
    pub n_chunks: usize,
    /// Remainder cells handled by the serial path.
    pub n_r: usize,
}

fn mul(a: usize, b: usize, what: &str) -> Result<usize> {
    a.checked_mul(b)
        .ok_or_else(|| Error::Configuration(format!("{what} overflows")))
}

impl ExecutionGeometry {
    #[allow(clippy::too_many_arguments)]
    pub fn derive(
        dim: usize,
        n_b: usize,
        n_comp: usize,
        n_q: usize,
        n_bl: usize,
        n_cb: usize,
        n_cells: usize,
        device: &DeviceConfig,
    ) -> Result<Self> {
        crate::mesh::check_dim(dim)?;
        for (name, v) in [
            ("n_b", n_b),
            ("n_comp", n_comp),
            ("n_q", n_q),
            ("n_bl", n_bl),
            ("n_cb", n_cb),
        ] {
            if v == 0 {
                return Err(Error::Configuration(format!("{name} must be at least 1")));
            }
        }
        let n_bt = mul(n_b, n_comp, "n_bt")?;
        let n_bs = mul(n_b, n_q, "block size")?;
        let n_bc = mul(n_bs, n_bl, "batch size")?;
        let n_chunk = mul(n_bc, n_cb, "chunk size")?;
        let n_t = mul(n_bc, n_comp, "thread count")?;
        if n_t > device.max_threads {
            return Err(Error::Configuration(format!(
                "{n_t} threads per block (n_bs={n_bs} x n_comp={n_comp} x n_bl={n_bl}) exceeds the device limit of {}",
                device.max_threads
            )));
        }
        Ok(Self {
            dim,
            n_b,
            n_comp,
            n_q,
            n_bt,
            n_bs,
            n_bl,
            n_bc,
            n_cb,
            n_chunk,
            n_t,
            n_tq: n_q * n_comp,
            n_sqc: n_q,
            n_sbc: n_b,
            n_cbc: n_bl * n_q,
            n_cells,
            n_chunks: n_cells / n_chunk,
            n_r: n_cells % n_chunk,
        })
    }

    /// Geometry for a P1 form on a mesh with the given rule size.
    pub fn for_form(
        form: &PhysicsForm,
        n_q: usize,
        n_bl: usize,
        n_cb: usize,
        n_cells: usize,
        device: &DeviceConfig,
    ) -> Result<Self> {
        Self::derive(
            form.dim(),
            form.dim() + 1,
            form.n_comp(),
            n_q,
            n_bl,
            n_cb,
            n_cells,
            device,
        )
    }

    /// Cells covered by chunk `i`.
    pub fn chunk_cells(&self, i: usize) -> Range<usize> {
        i * self.n_chunk..(i + 1) * self.n_chunk
    }

    /// Cells left to the serial path.
    pub fn remainder_cells(&self) -> Range<usize> {
        self.n_chunks * self.n_chunk..self.n_cells
    }

    /// Quadrature-phase assignment of thread `t`.
    pub fn quad_task(&self, t: usize) -> QuadTask {
        let per_block = self.n_bs * self.n_comp;
        let local = t % per_block;
        QuadTask {
            block: t / per_block,
            slot: local / self.n_tq,
            q: (local / self.n_comp) % self.n_q,
            comp: local % self.n_comp,
        }
    }

    /// Batch-local cell handled by a quadrature task at sequential step `s`.
    pub fn quad_cell(&self, task: &QuadTask, s: usize) -> usize {
        task.block * self.n_bs + s * self.n_b + task.slot
    }

    /// Basis-phase assignment of thread `t`.
    pub fn basis_task(&self, t: usize) -> BasisTask {
        let per_block = self.n_bs * self.n_comp;
        let local = t % per_block;
        BasisTask {
            block: t / per_block,
            slot: local / self.n_bt,
            b: (local / self.n_comp) % self.n_b,
            comp: local % self.n_comp,
        }
    }

    /// Batch-local cell handled by a basis task at sequential step `s`.
    pub fn basis_cell(&self, task: &BasisTask, s: usize) -> usize {
        task.block * self.n_bs + s * self.n_q + task.slot
    }
}

/// Derives the decomposition against the default device limits.
pub fn derive_execution_geometry(
    dim: usize,
    n_b: usize,
    n_comp: usize,
    n_q: usize,
    n_bl: usize,
    n_cb: usize,
    n_cells: usize,
) -> Result<ExecutionGeometry> {
    ExecutionGeometry::derive(
        dim,
        n_b,
        n_comp,
        n_q,
        n_bl,
        n_cb,
        n_cells,
        &DeviceConfig::default(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadTask {
    pub block: usize,
    pub slot: usize,
    pub q: usize,
    pub comp: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasisTask {
    pub block: usize,
    pub slot: usize,
    pub b: usize,
    pub comp: usize,
}

/// Shared memory of one thread block.
///
/// Every load-phase thread stages its own copy of the geometry record and
/// coefficient block of cell `t / n_comp`; threads read the copy matching
/// their component.
#[derive(Debug, Clone)]
pub struct SharedMemoryImage<S> {
    /// `B[q][bt]`, present only when the form has an `f0` term.
    pub tab_values: Vec<S>,
    /// `D[q][bt][k]`.
    pub tab_derivs: Vec<S>,
    /// `[cell * n_comp + copy][invJ (d*d), detJ]`.
    pub geometry: Vec<S>,
    /// `[cell * n_comp + copy][bt]`.
    pub coefficients: Vec<S>,
    /// `[cell][q][comp]`, present only when the form has an `f0` term.
    pub f0: Vec<S>,
    /// `[cell][q][comp][k]`.
    pub f1: Vec<S>,
    /// Auxiliary data, `[cell][n_aux]` for P0 or `[cell][b][n_aux]` for P1.
    pub aux: Vec<S>,
}

impl<S: Real> SharedMemoryImage<S> {
    pub fn new(geom: &ExecutionGeometry, has_f0: bool, aux_per_cell: usize) -> Self {
        let d = geom.dim;
        let tab_len = geom.n_q * geom.n_bt;
        let f_len = geom.n_bc * geom.n_q * geom.n_comp;
        let zeros = |n: usize| vec![S::ZERO; n];
        Self {
            tab_values: zeros(if has_f0 { tab_len } else { 0 }),
            tab_derivs: zeros(tab_len * d),
            geometry: zeros(geom.n_t * (d * d + 1)),
            coefficients: zeros(geom.n_t * geom.n_bt),
            f0: zeros(if has_f0 { f_len } else { 0 }),
            f1: zeros(f_len * d),
            aux: zeros(geom.n_bc * aux_per_cell),
        }
    }

    /// Bytes of every area except the auxiliary one.
    pub fn model_bytes(&self) -> usize {
        S::WIDTH
            * (self.tab_values.len()
                + self.tab_derivs.len()
                + self.geometry.len()
                + self.coefficients.len()
                + self.f0.len()
                + self.f1.len())
    }

    pub fn aux_bytes(&self) -> usize {
        S::WIDTH * self.aux.len()
    }

    pub fn total_bytes(&self) -> usize {
        self.model_bytes() + self.aux_bytes()
    }
}

/// Flops by accounting category.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopCounts {
    /// Generic integration arithmetic covered by the flop model.
    pub model: u64,
    /// Arithmetic on `f0` values (scaling and the `Bᵀ f0` reduction).
    pub f0: u64,
    /// Interpolation of same-space auxiliary fields.
    pub aux: u64,
    /// Field components a quadrature thread recomputes for its neighbours.
    pub redundant: u64,
    /// Flops reported by the physics form itself.
    pub physics: u64,
}

impl FlopCounts {
    pub fn total(&self) -> u64 {
        self.model + self.f0 + self.aux + self.redundant + self.physics
    }

    fn add(&mut self, o: &FlopCounts) {
        self.model += o.model;
        self.f0 += o.f0;
        self.aux += o.aux;
        self.redundant += o.redundant;
        self.physics += o.physics;
    }
}

/// Counters for one batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchRecord {
    pub chunk: usize,
    pub batch: usize,
    pub flops: FlopCounts,
    /// Bytes moved into shared memory for geometry, coefficients and
    /// quadrature-point records.
    pub bytes_loaded: u64,
    /// Extra bytes staged for auxiliary fields.
    pub aux_bytes: u64,
    pub barriers: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Quadrature,
    Basis,
}

/// One task executed by one virtual thread.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TaskRecord {
    pub chunk: usize,
    pub batch: usize,
    pub phase: Phase,
    /// Sequential step within the phase; tasks sharing a step run concurrently.
    pub step: usize,
    pub thread: usize,
    /// Global cell index.
    pub cell: usize,
    /// Quadrature point (quadrature phase) or basis function (basis phase).
    pub point_or_basis: usize,
    pub comp: usize,
    /// True when the task writes an element vector entry to global memory.
    pub writes_global: bool,
}

/// Instrumentation gathered while executing chunks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VirtualDeviceTrace {
    pub batches: Vec<BatchRecord>,
    pub barriers_per_chunk: Vec<u32>,
    /// Shared memory image size of one thread block, model areas only.
    pub shared_bytes: usize,
    pub tasks: Option<Vec<TaskRecord>>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
struct TraceRow {
    chunk: usize,
    batch: usize,
    flops: u64,
    bytes_loaded: u64,
    barriers: u32,
}

impl VirtualDeviceTrace {
    pub fn total_flops(&self) -> FlopCounts {
        let mut f = FlopCounts::default();
        for b in &self.batches {
            f.add(&b.flops);
        }
        f
    }

    pub fn total_bytes(&self) -> u64 {
        self.batches.iter().map(|b| b.bytes_loaded).sum()
    }

    pub fn total_barriers(&self) -> u64 {
        self.barriers_per_chunk.iter().map(|&b| b as u64).sum()
    }

    fn append(&mut self, other: VirtualDeviceTrace) {
        self.batches.extend(other.batches);
        self.barriers_per_chunk.extend(other.barriers_per_chunk);
        self.shared_bytes = self.shared_bytes.max(other.shared_bytes);
        match (&mut self.tasks, other.tasks) {
            (Some(mine), Some(theirs)) => mine.extend(theirs),
            (slot @ None, Some(theirs)) => *slot = Some(theirs),
            _ => {}
        }
    }

    /// CSV with columns `chunk,batch,flops,bytes_loaded,barriers`; `flops`
    /// holds the model-category count.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for b in &self.batches {
            w.serialize(TraceRow {
                chunk: b.chunk,
                batch: b.batch,
                flops: b.flops.model,
                bytes_loaded: b.bytes_loaded,
                barriers: b.barriers,
            })
            .expect("in-memory CSV write");
        }
        if self.batches.is_empty() {
            w.write_record(["chunk", "batch", "flops", "bytes_loaded", "barriers"])
                .expect("in-memory CSV write");
        }
        String::from_utf8(w.into_inner().expect("in-memory CSV flush")).expect("CSV is UTF-8")
    }

    /// Reads rows written by [`VirtualDeviceTrace::to_csv`]. Only the CSV
    /// columns are recovered; other counters are zero.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let headers = r.headers().map_err(|e| Error::Parse {
            line: 1,
            msg: e.to_string(),
        })?;
        if headers != vec!["chunk", "batch", "flops", "bytes_loaded", "barriers"] {
            return Err(Error::Parse {
                line: 1,
                msg: format!("unexpected header {headers:?}"),
            });
        }
        let mut trace = VirtualDeviceTrace::default();
        for (i, row) in r.deserialize::<TraceRow>().enumerate() {
            let row = row.map_err(|e| Error::Parse {
                line: i + 2,
                msg: e.to_string(),
            })?;
            if row.chunk >= trace.barriers_per_chunk.len() {
                if row.chunk != trace.barriers_per_chunk.len() {
                    return Err(Error::Parse {
                        line: i + 2,
                        msg: format!("chunk {} out of sequence", row.chunk),
                    });
                }
                trace.barriers_per_chunk.push(0);
            }
            trace.barriers_per_chunk[row.chunk] =
                trace.barriers_per_chunk[row.chunk].saturating_add(row.barriers);
            trace.batches.push(BatchRecord {
                chunk: row.chunk,
                batch: row.batch,
                flops: FlopCounts {
                    model: row.flops,
                    ..Default::default()
                },
                bytes_loaded: row.bytes_loaded,
                aux_bytes: 0,
                barriers: row.barriers,
            });
        }
        Ok(trace)
    }
}

/// Inputs for one chunk; all slices cover exactly `n_chunk` cells.
#[derive(Debug, Clone, Copy)]
pub struct ChunkInput<'a> {
    pub chunk_index: usize,
    /// Global index of the chunk's first cell, used in task logs.
    pub first_cell: usize,
    pub geometry: GeometrySlice<'a>,
    pub coeffs: &'a [f64],
    pub aux: Option<AuxSlice<'a>>,
}

#[derive(Debug, Clone)]
pub struct ChunkOutput<S> {
    /// `[cell][basis][component]`.
    pub elem_vecs: Vec<S>,
    pub trace: VirtualDeviceTrace,
}

/// Shared memory a configuration needs, including auxiliary staging.
pub fn shared_memory_requirement<S: Real>(
    geom: &ExecutionGeometry,
    form: &PhysicsForm,
    aux_space: Option<AuxSpace>,
) -> usize {
    let image =
        SharedMemoryImage::<S>::new(geom, form.has_f0(), aux_per_cell(geom, form, aux_space));
    image.total_bytes()
}

fn aux_per_cell(geom: &ExecutionGeometry, form: &PhysicsForm, space: Option<AuxSpace>) -> usize {
    match space {
        None => 0,
        Some(AuxSpace::Cellwise) => form.n_aux(),
        Some(AuxSpace::SameSpace) => form.n_aux() * geom.n_b,
    }
}

/// Runs one chunk through the transposed schedule.
#[allow(clippy::too_many_arguments)]
pub fn execute_chunk<S: KernelScalar>(
    geom: &ExecutionGeometry,
    device: &DeviceConfig,
    tab: &Tabulation,
    rule: &QuadratureRule,
    form: &PhysicsForm,
    input: ChunkInput<'_>,
    log_tasks: bool,
) -> Result<ChunkOutput<S>> {
    let d = geom.dim;
    let (n_b, n_q, nc, n_bt) = (geom.n_b, geom.n_q, geom.n_comp, geom.n_bt);
    if tab.n_b() != n_b || tab.n_q() != n_q || tab.dim() != d || rule.n_points() != n_q {
        return Err(Error::Configuration(
            "tabulation does not match the execution geometry".into(),
        ));
    }
    if form.n_comp() != nc || form.dim() != d {
        return Err(Error::Configuration(
            "physics form does not match the execution geometry".into(),
        ));
    }
    for (what, actual, expected) in [
        ("chunk geometry", input.geometry.n_cells(), geom.n_chunk),
        (
            "chunk coefficients",
            input.coeffs.len(),
            geom.n_chunk * n_bt,
        ),
    ] {
        if actual != expected {
            return Err(Error::Shape {
                what,
                expected,
                actual,
            });
        }
    }
    let aux = match (form.n_aux(), input.aux) {
        (0, None) => None,
        (0, Some(_)) => return Err(Error::UnexpectedAuxiliary(form.name().into())),
        (_, None) => return Err(Error::MissingAuxiliary(form.name().into())),
        (_, Some(a)) => Some(a),
    };
    let n_aux = form.n_aux();
    let aux_w = aux_per_cell(geom, form, aux.map(|a| a.space));
    if let Some(a) = aux {
        if a.values.len() != geom.n_chunk * aux_w {
            return Err(Error::Shape {
                what: "chunk auxiliary values",
                expected: geom.n_chunk * aux_w,
                actual: a.values.len(),
            });
        }
    }

    let has_f0 = form.has_f0();
    let mut sh = SharedMemoryImage::<S>::new(geom, has_f0, aux_w);
    let required = sh.total_bytes();
    if required > device.shared_mem_cap {
        return Err(Error::SharedMemoryCapacity {
            required,
            cap: device.shared_mem_cap,
        });
    }

    let s_bytes = S::WIDTH as u64;
    let d64 = d as u64;
    let geo_w = d * d + 1;

    // Thread-private: weight and basis values at the thread's quadrature point.
    let weights: Vec<S> = (0..n_q).map(|q| S::from_f64(rule.weight(q))).collect();
    let private_basis: Vec<S> = (0..n_q)
        .flat_map(|q| (0..n_b).map(move |b| (q, b)))
        .map(|(q, b)| S::from_f64(tab.value(q, b)))
        .collect();

    // Tabulation is loaded once per chunk, expanded over components.
    for q in 0..n_q {
        for b in 0..n_b {
            for c in 0..nc {
                let bt = b * nc + c;
                if has_f0 {
                    sh.tab_values[q * n_bt + bt] = S::from_f64(tab.value(q, b));
                }
                for (k, &v) in tab.derivative(q, b).iter().enumerate() {
                    sh.tab_derivs[(q * n_bt + bt) * d + k] = S::from_f64(v);
                }
            }
        }
    }

    let mut out = vec![S::ZERO; geom.n_chunk * n_bt];
    let mut trace = VirtualDeviceTrace {
        shared_bytes: sh.model_bytes(),
        tasks: log_tasks.then(Vec::new),
        ..Default::default()
    };

    let mut u = vec![S::ZERO; nc];
    let mut grad_u = vec![S::ZERO; nc * d];
    let mut a = vec![S::ZERO; n_aux];
    let mut grad_a = vec![S::ZERO; n_aux * d];
    let mut g = vec![S::ZERO; d];
    let mut f1 = vec![S::ZERO; d];

    for batch in 0..geom.n_cb {
        let base = batch * geom.n_bc;
        let mut fl = FlopCounts::default();
        let mut bytes = 0u64;
        let mut aux_bytes = 0u64;

        // Load geometry and coefficients: thread t stages cell t / n_comp.
        for t in 0..geom.n_t {
            let cell = t / nc;
            let gc = base + cell;
            let dst = &mut sh.geometry[t * geo_w..(t + 1) * geo_w];
            for (x, &v) in dst.iter_mut().zip(input.geometry.inv_jacobian(gc)) {
                *x = S::from_f64(v);
            }
            dst[d * d] = S::from_f64(input.geometry.determinants[gc]);
            let src = &input.coeffs[gc * n_bt..(gc + 1) * n_bt];
            for (x, &v) in sh.coefficients[t * n_bt..(t + 1) * n_bt]
                .iter_mut()
                .zip(src)
            {
                *x = S::from_f64(v);
            }
            bytes += s_bytes * (geo_w + n_bt) as u64;
        }
        if let Some(ax) = aux {
            let src = &ax.values[base * aux_w..(base + geom.n_bc) * aux_w];
            for (x, &v) in sh.aux.iter_mut().zip(src) {
                *x = S::from_f64(v);
            }
            aux_bytes += s_bytes * src.len() as u64;
        }

        // Quadrature phase.
        for step in 0..geom.n_sqc {
            for t in 0..geom.n_t {
                let task = geom.quad_task(t);
                let cell = geom.quad_cell(&task, step);
                let (q, comp) = (task.q, task.comp);
                let slot = cell * nc + comp;
                let gm = &sh.geometry[slot * geo_w..(slot + 1) * geo_w];
                let (inv_j, det_j) = (&gm[..d * d], gm[d * d]);
                let cf = &sh.coefficients[slot * n_bt..(slot + 1) * n_bt];
                let phi_row = &private_basis[q * n_b..(q + 1) * n_b];

                u.fill(S::ZERO);
                grad_u.fill(S::ZERO);
                a.fill(S::ZERO);
                grad_a.fill(S::ZERO);
                for b in 0..n_b {
                    let phi = phi_row[b];
                    let dref = &sh.tab_derivs[(q * n_bt + b * nc + comp) * d..][..d];
                    pull_back(d, inv_j, dref, &mut g);
                    fl.model += 2 * d64 * d64;
                    for c in 0..nc {
                        let coef = cf[b * nc + c];
                        u[c] += coef * phi;
                        for k in 0..d {
                            grad_u[c * d + k] += coef * g[k];
                        }
                        if c == comp {
                            fl.model += 2 + 2 * d64;
                        } else {
                            fl.redundant += 2 + 2 * d64;
                        }
                    }
                    if let Some(AuxSpace::SameSpace) = aux.map(|x| x.space) {
                        let av = &sh.aux[(cell * n_b + b) * n_aux..][..n_aux];
                        for i in 0..n_aux {
                            a[i] += av[i] * phi;
                            for k in 0..d {
                                grad_a[i * d + k] += av[i] * g[k];
                            }
                        }
                        fl.aux += (2 + 2 * d64) * n_aux as u64;
                    }
                }
                if let Some(AuxSpace::Cellwise) = aux.map(|x| x.space) {
                    a.copy_from_slice(&sh.aux[cell * n_aux..(cell + 1) * n_aux]);
                }

                let w = weights[q];
                let state = PointState {
                    dim: d,
                    u: &u,
                    grad_u: &grad_u,
                    a: &a,
                    grad_a: &grad_a,
                };
                let rec = (cell * n_q + q) * nc + comp;
                if has_f0 {
                    sh.f0[rec] = form.eval_f0(&state, comp)? * det_j * w;
                    fl.f0 += 2;
                    fl.physics += form.flops_f0();
                }
                form.eval_f1(&state, comp, &mut f1)?;
                fl.physics += form.flops_f1();
                for (dst, &v) in sh.f1[rec * d..(rec + 1) * d].iter_mut().zip(&f1) {
                    *dst = v * det_j * w;
                }
                fl.model += 2 * d64;
                // A quadrature record is accounted as (d + 1) scalars (f0 and
                // f1); without f0 the scalar slot is not materialised.
                bytes += s_bytes * (d64 + 1);

                if let Some(log) = trace.tasks.as_mut() {
                    log.push(TaskRecord {
                        chunk: input.chunk_index,
                        batch,
                        phase: Phase::Quadrature,
                        step,
                        thread: t,
                        cell: input.first_cell + base + cell,
                        point_or_basis: q,
                        comp,
                        writes_global: false,
                    });
                }
            }
        }

        // ==== TRANSPOSE THREADS ====
        let barriers = 1u32;

        // Basis phase.
        for step in 0..geom.n_sbc {
            for t in 0..geom.n_t {
                let task = geom.basis_task(t);
                let cell = geom.basis_cell(&task, step);
                let (b, comp) = (task.b, task.comp);
                let bt = b * nc + comp;
                let slot = cell * nc + comp;
                let inv_j = &sh.geometry[slot * geo_w..slot * geo_w + d * d];

                let mut acc = S::ZERO;
                for q in 0..n_q {
                    let rec = (cell * n_q + q) * nc + comp;
                    if has_f0 {
                        acc += sh.tab_values[q * n_bt + bt] * sh.f0[rec];
                        fl.f0 += 2;
                    }
                    pull_back(d, inv_j, &sh.tab_derivs[(q * n_bt + bt) * d..][..d], &mut g);
                    for (&gk, &fk) in g.iter().zip(&sh.f1[rec * d..(rec + 1) * d]) {
                        acc += gk * fk;
                    }
                    fl.model += 2 * d64 * d64 + 2 * d64;
                }
                out[(base + cell) * n_bt + bt] = acc;

                if let Some(log) = trace.tasks.as_mut() {
                    log.push(TaskRecord {
                        chunk: input.chunk_index,
                        batch,
                        phase: Phase::Basis,
                        step,
                        thread: t,
                        cell: input.first_cell + base + cell,
                        point_or_basis: b,
                        comp,
                        writes_global: true,
                    });
                }
            }
        }

        trace.batches.push(BatchRecord {
            chunk: input.chunk_index,
            batch,
            flops: fl,
            bytes_loaded: bytes,
            aux_bytes,
            barriers,
        });
    }
    trace.barriers_per_chunk.push(geom.n_cb as u32);

    Ok(ChunkOutput {
        elem_vecs: out,
        trace,
    })
}

/// `out = invJᵀ · ref_grad`, in the same operation order as the reference
/// integrator.
#[inline]
fn pull_back<S: Real>(d: usize, inv_j: &[S], ref_grad: &[S], out: &mut [S]) {
    for i in 0..d {
        let mut acc = S::ZERO;
        for j in 0..d {
            acc += inv_j[j * d + i] * ref_grad[j];
        }
        out[i] = acc;
    }
}

/// Scheduling parameters for [`integrate_transposed`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecParams {
    /// Concurrent blocks per batch.
    pub n_bl: usize,
    /// Batches per chunk.
    pub n_cb: usize,
    pub device: DeviceConfig,
    /// Host threads used to run distinct chunks.
    pub jobs: usize,
    pub log_tasks: bool,
}

impl ExecParams {
    pub fn new(n_bl: usize, n_cb: usize) -> Self {
        Self {
            n_bl,
            n_cb,
            device: DeviceConfig::default(),
            jobs: 1,
            log_tasks: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TransposedResult {
    pub residual: Vec<f64>,
    /// `[cell][basis][component]`, chunk cells widened from the device type.
    pub elem_vecs: Vec<f64>,
    pub geometry: ExecutionGeometry,
    pub trace: VirtualDeviceTrace,
}

/// Element vectors for every cell: whole chunks on the virtual device, the
/// remainder on the serial path.
#[allow(clippy::too_many_arguments)]
pub fn integrate_transposed_cells<S: KernelScalar>(
    tab: &Tabulation,
    rule: &QuadratureRule,
    cell_geom: &CellGeometry,
    form: &PhysicsForm,
    coeffs: &[f64],
    aux: Option<&AuxField>,
    params: &ExecParams,
) -> Result<(Vec<f64>, ExecutionGeometry, VirtualDeviceTrace)> {
    let n_cells = cell_geom.n_cells();
    check_inputs(tab, rule, cell_geom.dim(), n_cells, form, coeffs, aux)?;
    let geom = ExecutionGeometry::for_form(
        form,
        tab.n_q(),
        params.n_bl,
        params.n_cb,
        n_cells,
        &params.device,
    )?;
    if params.jobs == 0 {
        return Err(Error::Configuration("jobs must be at least 1".into()));
    }
    let n_bt = geom.n_bt;

    let run = |i: usize| {
        let cells = geom.chunk_cells(i);
        let input = ChunkInput {
            chunk_index: i,
            first_cell: cells.start,
            geometry: cell_geom.slice(cells.clone()),
            coeffs: &coeffs[cells.start * n_bt..cells.end * n_bt],
            aux: aux.map(|a| a.slice(geom.n_b, cells.clone())),
        };
        execute_chunk::<S>(
            &geom,
            &params.device,
            tab,
            rule,
            form,
            input,
            params.log_tasks,
        )
    };
    let outputs: Vec<Result<ChunkOutput<S>>> = if params.jobs > 1 && geom.n_chunks > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(params.jobs)
            .build()
            .map_err(|e| Error::Configuration(format!("thread pool: {e}")))?;
        pool.install(|| (0..geom.n_chunks).into_par_iter().map(run).collect())
    } else {
        (0..geom.n_chunks).map(run).collect()
    };

    let mut elem = vec![0.0; n_cells * n_bt];
    let mut trace = VirtualDeviceTrace {
        tasks: params.log_tasks.then(Vec::new),
        ..Default::default()
    };
    for (i, out) in outputs.into_iter().enumerate() {
        let out = out?;
        let cells = geom.chunk_cells(i);
        for (dst, &v) in elem[cells.start * n_bt..cells.end * n_bt]
            .iter_mut()
            .zip(&out.elem_vecs)
        {
            *dst = v.to_f64();
        }
        trace.append(out.trace);
    }

    let rem = geom.remainder_cells();
    if !rem.is_empty() {
        integrate_cells(
            tab,
            rule,
            cell_geom.slice(rem.clone()),
            form,
            &coeffs[rem.start * n_bt..],
            aux.map(|a| a.slice(geom.n_b, rem.clone())),
            &mut elem[rem.start * n_bt..],
        )?;
    }
    Ok((elem, geom, trace))
}

/// Assembles the residual of `global` with the transposed schedule.
#[allow(clippy::too_many_arguments)]
pub fn integrate_transposed<S: KernelScalar>(
    mesh: &Mesh,
    layout: &FieldLayout,
    tab: &Tabulation,
    rule: &QuadratureRule,
    params: &ExecParams,
    form: &PhysicsForm,
    global: &[f64],
    aux: Option<&AuxField>,
) -> Result<TransposedResult> {
    if layout.n_comp != form.n_comp() {
        return Err(Error::Shape {
            what: "layout components",
            expected: form.n_comp(),
            actual: layout.n_comp,
        });
    }
    let cell_geom = compute_geometry(mesh)?;
    let coeffs = gather_coefficients(mesh, layout, global)?;
    let (elem_vecs, geometry, trace) =
        integrate_transposed_cells::<S>(tab, rule, &cell_geom, form, &coeffs, aux, params)?;
    let residual = scatter_add_element_vectors(mesh, layout, &elem_vecs)?;
    Ok(TransposedResult {
        residual,
        elem_vecs,
        geometry,
        trace,
    })
}
