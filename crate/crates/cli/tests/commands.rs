use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use speqrng_cli::exit;

fn speqrng(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_speqrng"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Value {
    let out = speqrng(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let path = String::from_utf8(out.stdout).unwrap();
    serde_json::from_str(&std::fs::read_to_string(path.trim()).unwrap()).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    speqrng(dir, args).status.code().unwrap()
}

fn num(v: &Value, pointer: &str) -> f64 {
    v.pointer(pointer).and_then(Value::as_f64).unwrap_or_else(|| panic!("{pointer} missing"))
}

#[test]
fn chsh_on_bundled_counts() {
    let d = TempDir::new().unwrap();
    let r = ok(d.path(), &["chsh"]);
    assert!((num(&r, "/results/chsh/i_hat").abs() - 2.65429).abs() < 1e-5);
    assert_eq!(r["results"]["chsh"]["n_raw"], 35_483_419);
    assert_eq!(r["seed"], 1);
    assert_eq!(r["config_hash"].as_str().unwrap().len(), 64);
    assert!(d.path().join("chsh.txt").exists());
}

#[test]
fn certify_with_reference_bounds() {
    let d = TempDir::new().unwrap();
    let low = ok(d.path(), &["certify", "--trust", "general_rho", "--reference-bounds"]);
    let high = ok(d.path(), &["certify", "--trust", "free_v", "--reference-bounds"]);
    let h = |r: &Value| num(r, "/results/certification/h_min_star");
    assert!((h(&low) - 0.025).abs() < 0.005, "{}", h(&low));
    assert!((h(&high) - 0.301).abs() < 0.005, "{}", h(&high));
    for key in ["p_guess", "p_guess_star", "bits_per_second", "i_hat", "e_p", "e_i"] {
        assert!(high["results"]["certification"].get(key).is_some(), "{key}");
    }
}

#[test]
fn forced_large_e_i_is_vacuous() {
    let d = TempDir::new().unwrap();
    let r = ok(d.path(), &["certify", "--reference-bounds", "--e-i", "1.0"]);
    assert_eq!(r["results"]["certification"]["vacuous"], true);
    assert_eq!(num(&r, "/results/certification/h_min_star"), 0.0);
}

#[test]
fn exit_codes_follow_error_class() {
    let d = TempDir::new().unwrap();
    let p = d.path();
    assert_eq!(code(p, &["certify"]), exit::CONFIG);
    assert_eq!(code(p, &["--config", "/nonexistent.json", "chsh"]), exit::CONFIG);
    assert_eq!(code(p, &["bounds", "--trust", "nonsense"]), exit::CONFIG);
    assert_eq!(code(p, &["frobnicate"]), exit::USAGE);

    let unsorted = p.join("unsorted.csv");
    std::fs::write(&unsorted, "200,1\n100,2\n").unwrap();
    assert_eq!(
        code(p, &["ingest", "--input", unsorted.to_str().unwrap(), "--setting", "0,0"]),
        exit::INPUT
    );
    assert_eq!(
        code(p, &["ingest", "--input", "/nonexistent.csv", "--setting", "0,0"]),
        exit::IO
    );

    let short = p.join("short.csv");
    let lines: String = (0..50).map(|i| format!("{},{}\n", i * 1000, i % 4 + 1)).collect();
    std::fs::write(&short, lines).unwrap();
    assert_eq!(
        code(p, &["extract", "--input", short.to_str().unwrap(), "--h-min", "0.5"]),
        exit::ENTROPY_BUDGET
    );

    let tiny = p.join("tiny");
    std::fs::create_dir(&tiny).unwrap();
    for name in ["events_x0_y0.csv", "events_x0_y1.csv", "events_x1_y0.csv", "events_x1_y1.csv"] {
        std::fs::copy(&short, tiny.join(name)).unwrap();
    }
    assert_eq!(
        code(p, &["chsh", "--events-dir", tiny.to_str().unwrap()]),
        exit::INSUFFICIENT_DATA
    );
}

#[test]
fn simulate_ingest_and_estimate() {
    let d = TempDir::new().unwrap();
    let p = d.path();
    let m = ok(p, &["--seed", "4", "simulate", "--ideal-components", "--duration-s", "0.3"]);
    assert!((num(&m, "/results/true_chsh").abs() - 2.0 * 2f64.sqrt()).abs() < 1e-12);
    assert_eq!(m["results"]["settings"].as_array().unwrap().len(), 4);

    let events = p.join("events_x1_y1.csv");
    let ing = ok(p, &["ingest", "--input", events.to_str().unwrap(), "--setting", "1,1", "--duration-s", "0.3", "--qsym"]);
    let r = &ing["results"];
    let total = r["n_bins_total"].as_u64().unwrap();
    assert_eq!(total, 300_000);
    assert_eq!(
        total,
        r["n_empty"].as_u64().unwrap() + r["n_multi"].as_u64().unwrap() + r["n_symbols"].as_u64().unwrap()
    );
    assert!(p.join("symbols_x1_y1.qsym").exists());

    let est = ok(p, &["chsh", "--events-dir", p.to_str().unwrap()]);
    let i = num(&est, "/results/chsh/i_hat");
    let s = num(&est, "/results/chsh/multinomial_std");
    assert!((i.abs() - 2.0 * 2f64.sqrt()).abs() < 4.0 * s, "{i} ± {s}");
}

#[test]
fn qsym_input_needs_duration() {
    let d = TempDir::new().unwrap();
    let p = d.path();
    ok(p, &["simulate", "--duration-s", "0.05"]);
    let events = p.join("events_x0_y0.csv");
    ok(p, &["ingest", "--input", events.to_str().unwrap(), "--setting", "0,0", "--qsym"]);
    let qsym = p.join("symbols_x0_y0.qsym");
    let q = qsym.to_str().unwrap();
    assert_eq!(code(p, &["ingest", "--input", q, "--setting", "0,0"]), exit::CONFIG);
    let r = ok(p, &["ingest", "--input", q, "--setting", "0,0", "--duration-s", "0.05"]);
    assert_eq!(r["results"]["n_bins_total"], 50_000);
}

#[test]
fn bound_cache_round_trip() {
    let d = TempDir::new().unwrap();
    let p = d.path();
    let quick = ["--starts-ep", "3", "--starts-ei", "3", "--grid", "3", "--refine-evals", "4", "--n-mc", "20"];
    let mut args = vec!["bounds", "--trust", "free_v"];
    args.extend(quick);
    let b = ok(p, &args);
    assert!(num(&b, "/results/result/e_p/value") > 0.0);
    let cache = p.join("bounds_free_v.json");
    let c = cache.to_str().unwrap();
    let r = ok(p, &["certify", "--trust", "free_v", "--bounds", c]);
    assert_eq!(
        num(&r, "/results/bounds/e_p/value"),
        num(&b, "/results/result/e_p/value")
    );
    assert_eq!(code(p, &["certify", "--trust", "general_rho", "--bounds", c]), exit::CONFIG);

    let mut ideal = vec!["bounds", "--trust", "free_v", "--ideal-components"];
    ideal.extend(quick);
    let z = ok(p, &ideal);
    assert!(num(&z, "/results/result/e_p/value") < 1e-9);
    assert!(num(&z, "/results/result/e_i/value") < 1e-9);
    assert_eq!(code(p, &["certify", "--trust", "free_v", "--bounds", c]), exit::CONFIG);
}

#[test]
fn paper_scale_flag_sets_start_counts() {
    let d = TempDir::new().unwrap();
    let out = speqrng(d.path(), &["--paper-scale", "bounds", "--trust", "free_v", "--grid", "1"]);
    assert_eq!(out.status.code(), Some(exit::MODEL));
    let r = ok(
        d.path(),
        &["--paper-scale", "bounds", "--trust", "free_v", "--grid", "2", "--refine-evals", "1", "--starts-ei", "2", "--n-mc", "10"],
    );
    assert_eq!(r["results"]["result"]["config"]["n_starts_ep"], 3000);
    assert_eq!(r["results"]["result"]["config"]["n_starts_ei"], 2);
}

#[test]
fn extract_writes_packed_bits() {
    let d = TempDir::new().unwrap();
    let p = d.path();
    ok(p, &["simulate", "--duration-s", "0.2"]);
    let events = p.join("events_x0_y0.csv");
    let r = ok(
        p,
        &["extract", "--input", events.to_str().unwrap(), "--h-min", "0.3", "--block-bits", "4096"],
    );
    let bits = r["results"]["output_bits"].as_u64().unwrap();
    assert_eq!(r["results"]["output_bits_per_block"], 4096 * 3 / 10 - 128);
    let bytes = std::fs::read(p.join("extracted.bin")).unwrap();
    assert_eq!(bytes.len() as u64, bits.div_ceil(8));

    let seed = p.join("seed.bin");
    std::fs::write(&seed, vec![0u8; 1]).unwrap();
    assert_eq!(
        code(
            p,
            &["extract", "--input", events.to_str().unwrap(), "--h-min", "0.3", "--block-bits", "4096", "--seed-file", seed.to_str().unwrap()]
        ),
        exit::MODEL
    );
}
