#![no_main]

use libfuzzer_sys::fuzz_target;
use quadfem::executor::{DeviceConfig, ExecutionGeometry};

fn word(data: &[u8], i: usize) -> usize {
    let mut b = [0u8; 8];
    for (k, slot) in b.iter_mut().enumerate() {
        *slot = data.get(i * 8 + k).copied().unwrap_or(0);
    }
    u64::from_le_bytes(b) as usize
}

fuzz_target!(|data: &[u8]| {
    let device = DeviceConfig {
        max_threads: word(data, 8),
        shared_mem_cap: word(data, 9),
    };
    let Ok(g) = ExecutionGeometry::derive(
        word(data, 0),
        word(data, 1),
        word(data, 2),
        word(data, 3),
        word(data, 4),
        word(data, 5),
        word(data, 6),
        &device,
    ) else {
        return;
    };
    assert!(g.n_t <= device.max_threads);
    assert_eq!(g.n_chunks * g.n_chunk + g.n_r, g.n_cells);
    for t in [0, g.n_t / 2, g.n_t - 1] {
        let q = g.quad_task(t);
        assert!(g.quad_cell(&q, g.n_sqc - 1) < g.n_bc);
        let b = g.basis_task(t);
        assert!(g.basis_cell(&b, g.n_sbc - 1) < g.n_bc);
    }
});
