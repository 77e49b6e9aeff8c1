//! Closed-form resource model for the transposed schedule and the algorithmic
//! balance it implies.
//!
//! All counts are per thread block (shared memory) or per cell batch (traffic
//! and flops). `s` is the scalar width in bytes.
//!
//! * shared memory: `M = s((d²+1)N_t + (d+1)N_bt N_q + N_t N_bt + (d+1)N_t N_sqc)`,
//!   with `d+1` replaced by `d` in the tabulation and `f` terms when the form
//!   has no `f0`;
//! * traffic per batch: `s N_t ((d²+1) + N_bt + (d+1)N_q)`;
//! * flops per batch:
//!   `[(2 + (2+2d)d) N_bt N_q + 2d N_comp N_q + (2+2d)d N_q N_bt] N_bs N_bl`.

use std::fmt::Write as _;

use num_rational::Ratio;

use crate::executor::ExecutionGeometry;
use crate::{Error, Result};

/// Shared memory per thread block and per cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SharedMemory {
    pub block: u64,
    pub per_cell: Ratio<u64>,
}

pub fn shared_memory_bytes(
    geom: &ExecutionGeometry,
    scalar_width: usize,
    needs_f0: bool,
) -> SharedMemory {
    let d = geom.dim as u64;
    let s = scalar_width as u64;
    let (n_t, n_bt, n_q, n_sqc) = (
        geom.n_t as u64,
        geom.n_bt as u64,
        geom.n_q as u64,
        geom.n_sqc as u64,
    );
    let tab_rows = if needs_f0 { d + 1 } else { d };
    let block =
        s * ((d * d + 1) * n_t + tab_rows * n_bt * n_q + n_t * n_bt + tab_rows * n_t * n_sqc);
    SharedMemory {
        block,
        per_cell: Ratio::new(block, geom.n_bc as u64),
    }
}

/// Upper bound on per-cell shared memory with `N_sqc` replaced by `N_q`.
pub fn shared_memory_per_cell_bound(
    geom: &ExecutionGeometry,
    scalar_width: usize,
    needs_f0: bool,
) -> Ratio<u64> {
    let d = geom.dim as u64;
    let rows = if needs_f0 { d + 1 } else { d };
    let nc = geom.n_comp as u64;
    let inner = Ratio::from_integer(d * d + 1 + geom.n_bt as u64 + rows * geom.n_q as u64)
        + Ratio::new(rows, geom.n_bl as u64);
    inner * (scalar_width as u64 * nc)
}

/// Bytes loaded and flops executed per cell batch.
pub fn traffic_and_flops(geom: &ExecutionGeometry, scalar_width: usize) -> (u64, u64) {
    let d = geom.dim as u64;
    let s = scalar_width as u64;
    let (n_t, n_bt, n_q, n_comp) = (
        geom.n_t as u64,
        geom.n_bt as u64,
        geom.n_q as u64,
        geom.n_comp as u64,
    );
    let bytes = s * n_t * ((d * d + 1) + n_bt + (d + 1) * n_q);
    let per_cell =
        (2 + (2 + 2 * d) * d) * n_bt * n_q + 2 * d * n_comp * n_q + (2 + 2 * d) * d * n_q * n_bt;
    let flops = per_cell * geom.n_bs as u64 * geom.n_bl as u64;
    (bytes, flops)
}

/// Flops per byte with 4-byte scalars.
pub fn balance(geom: &ExecutionGeometry) -> Ratio<u64> {
    balance_with_width(geom, 4)
}

pub fn balance_with_width(geom: &ExecutionGeometry, scalar_width: usize) -> Ratio<u64> {
    let (bytes, flops) = traffic_and_flops(geom, scalar_width);
    Ratio::new(flops, bytes)
}

pub fn ratio_to_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Flop-rate ceiling (GFLOP/s) of a bandwidth-bound kernel with balance
/// `beta` (flop/byte) on a device sustaining `bandwidth_gbs` GB/s.
pub fn predict_bandwidth_bound(beta: f64, bandwidth_gbs: f64) -> Result<f64> {
    if !(beta >= 0.0 && beta.is_finite() && bandwidth_gbs >= 0.0 && bandwidth_gbs.is_finite()) {
        return Err(Error::Configuration(format!(
            "balance and bandwidth must be non-negative and finite (got {beta}, {bandwidth_gbs})"
        )));
    }
    Ok(beta * bandwidth_gbs)
}

/// Model outputs for one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct PerfEstimate {
    pub geometry: ExecutionGeometry,
    pub scalar_width: usize,
    pub needs_f0: bool,
    /// `M`, bytes per thread block.
    pub shared_bytes_block: u64,
    /// `M_c`, bytes per cell.
    pub shared_bytes_per_cell: Ratio<u64>,
    pub bytes_per_batch: u64,
    pub flops_per_batch: u64,
    /// Flop/byte at this estimate's scalar width.
    pub balance: Ratio<u64>,
    /// Thread blocks that fit in `shared_mem_cap` at once.
    pub occupancy_hint: u64,
    pub shared_mem_cap: usize,
}

pub fn estimate(
    geom: &ExecutionGeometry,
    scalar_width: usize,
    needs_f0: bool,
    shared_mem_cap: usize,
) -> PerfEstimate {
    let sm = shared_memory_bytes(geom, scalar_width, needs_f0);
    let (bytes, flops) = traffic_and_flops(geom, scalar_width);
    PerfEstimate {
        geometry: *geom,
        scalar_width,
        needs_f0,
        shared_bytes_block: sm.block,
        shared_bytes_per_cell: sm.per_cell,
        bytes_per_batch: bytes,
        flops_per_batch: flops,
        balance: Ratio::new(flops, bytes),
        occupancy_hint: shared_mem_cap as u64 / sm.block,
        shared_mem_cap,
    }
}

impl PerfEstimate {
    pub const CSV_HEADER: &'static str =
        "dim,n_b,n_comp,n_q,n_bt,n_bs,n_bl,n_bc,n_cb,n_t,n_sqc,n_sbc,scalar_width,M,M_c,bytes_per_batch,flops_per_batch,beta,occupancy_hint";

    pub fn csv_row(&self) -> String {
        let g = &self.geometry;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            g.dim,
            g.n_b,
            g.n_comp,
            g.n_q,
            g.n_bt,
            g.n_bs,
            g.n_bl,
            g.n_bc,
            g.n_cb,
            g.n_t,
            g.n_sqc,
            g.n_sbc,
            self.scalar_width,
            self.shared_bytes_block,
            ratio_to_f64(self.shared_bytes_per_cell),
            self.bytes_per_batch,
            self.flops_per_batch,
            ratio_to_f64(self.balance),
            self.occupancy_hint
        )
    }

    /// Human-readable report.
    pub fn table(&self) -> String {
        let g = &self.geometry;
        let mut s = String::new();
        let mut row = |k: &str, v: String| writeln!(s, "  {k:<28} {v}").unwrap();
        row("dimension", g.dim.to_string());
        row("basis functions (N_b)", g.n_b.to_string());
        row("components (N_comp)", g.n_comp.to_string());
        row("quadrature points (N_q)", g.n_q.to_string());
        row("cells per block (N_bs)", g.n_bs.to_string());
        row("blocks per batch (N_bl)", g.n_bl.to_string());
        row("cells per batch (N_bc)", g.n_bc.to_string());
        row("batches per chunk (N_cb)", g.n_cb.to_string());
        row("threads per block (N_t)", g.n_t.to_string());
        row("serial quad cells (N_sqc)", g.n_sqc.to_string());
        row("serial basis cells (N_sbc)", g.n_sbc.to_string());
        row("scalar width (bytes)", self.scalar_width.to_string());
        row(
            "f0 storage",
            if self.needs_f0 { "yes" } else { "no" }.to_string(),
        );
        row(
            "shared memory M (bytes)",
            self.shared_bytes_block.to_string(),
        );
        row(
            "shared memory M_c (bytes)",
            format!(
                "{} = {:.3}",
                self.shared_bytes_per_cell,
                ratio_to_f64(self.shared_bytes_per_cell)
            ),
        );
        row("bytes per batch", self.bytes_per_batch.to_string());
        row("flops per batch", self.flops_per_batch.to_string());
        row(
            "balance beta (flop/byte)",
            format!("{} = {:.4}", self.balance, ratio_to_f64(self.balance)),
        );
        row(
            "occupancy hint",
            format!(
                "{} blocks in {} bytes",
                self.occupancy_hint, self.shared_mem_cap
            ),
        );
        s
    }
}
