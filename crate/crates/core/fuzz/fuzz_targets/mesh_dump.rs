#![no_main]

use libfuzzer_sys::fuzz_target;
use quadfem::mesh::Mesh;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(mesh) = Mesh::from_dump_str(text) {
        let again = Mesh::from_dump_str(&mesh.to_dump_string()).expect("dump output parses");
        assert_eq!(again, mesh);
    }
});
