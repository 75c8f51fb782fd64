#![no_main]

use libfuzzer_sys::fuzz_target;
use meshspm::mesh::{ply::parse_ply, TriangleMesh};

fuzz_target!(|data: &str| {
    // Anything the reader accepts must either build a mesh or be rejected cleanly.
    if let Ok((vertices, faces)) = parse_ply(data) {
        if let Ok(mesh) = TriangleMesh::new(vertices, faces) {
            assert!(mesh.total_area().is_finite());
        }
    }
});
