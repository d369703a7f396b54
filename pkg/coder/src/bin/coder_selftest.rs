//! Standalone verification suites: round-trip fuzzing, entropy bounds, and
//! (optionally) golden byte fixtures shared with the host codec.
//!
//! Usage: coder-selftest [--fixtures DIR] [--fuzz-cases N]

use std::env;
use std::fs;
use std::path::PathBuf;
use std::process::exit;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nvb_coder::cdf::{build_laplace_cdf, build_uniform_cdf};
use nvb_coder::framing::handle_request;
use nvb_coder::rc::{decode_stream, encode_stream};

fn laplace_sample<R: Rng>(rng: &mut R, scale: f64) -> f64 {
    let u: f64 = rng.gen_range(-0.5..0.5);
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

fn round_half_away(x: f64) -> i64 {
    x.signum() as i64 * (x.abs() + 0.5).floor() as i64
}

fn fuzz_roundtrip(cases: usize) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0DE);
    for case in 0..cases {
        let n = rng.gen_range(0..200usize);
        let mut tables = Vec::new();
        let mut idx = Vec::new();
        let mut symbols = Vec::new();
        let n_tab = rng.gen_range(1..8usize);
        for _ in 0..n_tab {
            let mu = rng.gen_range(-10.0..10.0);
            let sigma = (rng.gen_range(0.01f64.ln()..64.0f64.ln())).exp();
            tables.push(build_laplace_cdf(mu, sigma, -64, 63)
                .map_err(|e| format!("case {}: table build {:?}", case, e))?);
        }
        for _ in 0..n {
            let ti = rng.gen_range(0..n_tab);
            idx.push(ti as u32);
            // Mostly in-window values, occasionally far escapes.
            let sym = if rng.gen_bool(0.05) {
                rng.gen_range(-100_000..100_000i32)
            } else {
                rng.gen_range(-80..80i32)
            };
            symbols.push(sym);
        }
        let data = encode_stream(&symbols, &tables, &idx);
        let back = decode_stream(&data, &tables, &idx)
            .map_err(|e| format!("case {}: decode failed at {}: {}", case, e.offset, e.message))?;
        if back != symbols {
            return Err(format!("case {}: round trip mismatch", case));
        }
    }
    Ok(())
}

fn discrete_laplace_bits(k: i64, scale: f64) -> f64 {
    let cdf = |x: f64| if x <= 0.0 { 0.5 * x.exp() } else { 1.0 - 0.5 * (-x).exp() };
    let p = cdf((k as f64 + 0.5) / scale) - cdf((k as f64 - 0.5) / scale);
    -p.max(2.0f64.powi(-24)).log2()
}

fn laplace_entropy_bound() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 1_000_000usize;
    let scale = 1.0;
    let mut symbols = Vec::with_capacity(n);
    let mut bound_bits = 0.0f64;
    for _ in 0..n {
        let k = round_half_away(laplace_sample(&mut rng, scale));
        bound_bits += discrete_laplace_bits(k, scale);
        symbols.push(k as i32);
    }
    let table = build_laplace_cdf(0.0, scale, -64, 63).unwrap();
    let idx = vec![0u32; n];
    let data = encode_stream(&symbols, &[table], &idx);
    let bound_bytes = bound_bits / 8.0;
    let limit = bound_bytes * 1.01 + 32.0;
    if (data.len() as f64) > limit {
        return Err(format!("coded {} bytes exceeds bound {:.1}", data.len(), limit));
    }
    println!("  laplace bound: {} bytes vs Shannon {:.1} (+{:.3}%)",
             data.len(), bound_bytes,
             100.0 * (data.len() as f64 - bound_bytes) / bound_bytes);
    Ok(())
}

fn uniform_entropy() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 500_000usize;
    let table = build_uniform_cdf(256);
    let symbols: Vec<i32> = (0..n).map(|_| rng.gen_range(0..256)).collect();
    let idx = vec![0u32; n];
    let data = encode_stream(&symbols, &[table], &idx);
    let per_symbol = data.len() as f64 / n as f64;
    // Bucket mass is 254/65536 under the near-uniform table.
    let expected = -(254.0f64 / 65536.0).log2() / 8.0;
    if (per_symbol - expected).abs() > 0.005 * expected {
        return Err(format!("{:.5} bytes/symbol vs expected {:.5}", per_symbol, expected));
    }
    println!("  uniform-256: {:.5} bytes/symbol (expected {:.5})", per_symbol, expected);
    Ok(())
}

fn golden_fixtures(dir: &PathBuf) -> Result<(), String> {
    let mut checked = 0;
    let mut names: Vec<_> = fs::read_dir(dir)
        .map_err(|e| format!("fixtures dir: {}", e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with("_request.bin"))
        .collect();
    names.sort();
    for req_path in names {
        let resp_path = PathBuf::from(
            req_path.to_string_lossy().replace("_request.bin", "_response.bin"));
        let request = fs::read(&req_path).map_err(|e| e.to_string())?;
        let expected = fs::read(&resp_path).map_err(|e| e.to_string())?;
        let actual = handle_request(&request);
        if actual != expected {
            return Err(format!("fixture mismatch for {:?}", req_path));
        }
        checked += 1;
    }
    if checked == 0 {
        return Err("no fixtures found".into());
    }
    println!("  {} golden fixtures bit-exact", checked);
    Ok(())
}

fn main() {
    let args: Vec<String> = env::args().collect();
    let mut fixtures: Option<PathBuf> = None;
    let mut fuzz_cases = 10_000usize;
    let mut i = 1;
    while i < args.len() {
        match args[i].as_str() {
            "--fixtures" => {
                fixtures = Some(PathBuf::from(&args[i + 1]));
                i += 2;
            }
            "--fuzz-cases" => {
                fuzz_cases = args[i + 1].parse().expect("fuzz case count");
                i += 2;
            }
            other => {
                eprintln!("unknown argument {}", other);
                exit(2);
            }
        }
    }

    let mut failed = false;
    let mut run = |name: &str, result: Result<(), String>| match result {
        Ok(()) => println!("[ok] {}", name),
        Err(msg) => {
            println!("[fail] {}: {}", name, msg);
            failed = true;
        }
    };

    run(&format!("round-trip fuzz ({} cases)", fuzz_cases), fuzz_roundtrip(fuzz_cases));
    run("laplace entropy bound (1e6 symbols)", laplace_entropy_bound());
    run("uniform-256 rate", uniform_entropy());
    if let Some(dir) = fixtures {
        run("golden fixtures", golden_fixtures(&dir));
    }
    exit(if failed { 1 } else { 0 });
}
