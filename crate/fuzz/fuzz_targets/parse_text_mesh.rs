#![no_main]

use libfuzzer_sys::fuzz_target;
use meshspm::mesh::text::{parse_faces, parse_text_mesh, parse_vertices};

fuzz_target!(|data: &str| {
    // Split the input into a vertex file and a face file at the first NUL.
    let (vertices, faces) = data.split_once('\0').unwrap_or((data, ""));
    let _ = parse_vertices(vertices);
    let _ = parse_faces(faces);
    let _ = parse_text_mesh(vertices, faces);
});
