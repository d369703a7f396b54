//! Golden byte fixtures shared with the host codec: every framed request in
//! tests/fixtures/coder must produce the stored response bit for bit.

use std::fs;
use std::path::PathBuf;

use nvb_coder::handle_request;

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .parent()
        .unwrap()
        .join("tests/fixtures/coder")
}

#[test]
fn golden_fixtures_bit_exact() {
    let dir = fixture_dir();
    let mut paths: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|_| panic!("missing fixture dir {:?}", dir))
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with("_request.bin"))
        .collect();
    paths.sort();
    assert!(!paths.is_empty(), "no fixtures found in {:?}", dir);
    for req_path in paths {
        let resp_path = PathBuf::from(
            req_path.to_string_lossy().replace("_request.bin", "_response.bin"));
        let request = fs::read(&req_path).unwrap();
        let expected = fs::read(&resp_path).unwrap();
        let actual = handle_request(&request);
        assert_eq!(actual, expected, "fixture mismatch: {:?}", req_path);
    }
}
