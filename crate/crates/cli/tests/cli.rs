use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn snse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snse"))
        .args(args)
        .env_remove("SNSE_WORKERS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const SMALL: &str = r#"
[grid]
dim = 2
n_per_axis = 16

[time]
horizon = 0.02
dt = 4e-3

[noise]
amplitude = 1.0
filter = "low-pass"

[decomposition]
k_max = 3

[ensemble]
n_paths = 4

[verify.heat]
n_paths = 16

[verify.poincare]
n_fields = 100
max_radius = 4.0

[verify.uniqueness]
horizon = 0.02
n_paths = 4

[verify.weak_form]
initial = { kind = "zero" }
horizon = 0.01
fine_dt = 1.25e-4
strides = [8, 4, 2]
windows = 5
n_paths = 2

[verify.consistency]
initial = { kind = "zero" }
horizon = 0.02
n_paths = 2
"#;

/// Reads an SNSF file without the library: header, then `re, im` pairs per
/// component in flat FFT order.
fn decode(bytes: &[u8]) -> (usize, usize, Vec<Vec<(f64, f64)>>) {
    assert_eq!(&bytes[..4], b"SNSF");
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let (dim, n, comps) = (u32_at(8), u32_at(12), u32_at(16));
    let len = n.pow(dim as u32);
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let coeffs = (0..comps)
        .map(|c| {
            (0..len)
                .map(|i| {
                    let o = 20 + 16 * (c * len + i);
                    (f64_at(o), f64_at(o + 8))
                })
                .collect()
        })
        .collect();
    (dim, n, coeffs)
}

/// `L³` norm by direct summation of the Fourier series on the doubled grid.
fn l3_oracle(path: &Path) -> f64 {
    let (dim, n, coeffs) = decode(&fs::read(path).unwrap());
    assert_eq!(dim, 2);
    let wave = |m: usize| if m < n / 2 { m as f64 } else { m as f64 - n as f64 };
    let modes: Vec<(f64, f64, usize)> = (0..n * n)
        .filter(|&i| coeffs.iter().any(|c| c[i] != (0.0, 0.0)))
        .map(|i| (wave(i / n), wave(i % n), i))
        .collect();
    let q = 2 * n;
    let h = 2.0 * PI / q as f64;
    let mut sum = 0.0;
    for a in 0..q {
        for b in 0..q {
            let (x0, x1) = (a as f64 * h, b as f64 * h);
            let mut mag2 = 0.0;
            for c in &coeffs {
                let v: f64 = modes
                    .iter()
                    .map(|&(k0, k1, i)| {
                        let ph = k0 * x0 + k1 * x1;
                        c[i].0 * ph.cos() - c[i].1 * ph.sin()
                    })
                    .sum();
                mag2 += v * v;
            }
            sum += mag2.powf(1.5);
        }
    }
    (sum * h * h).cbrt()
}

#[test]
fn decompose_zero_field_gives_zero_levels() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &format!("{SMALL}\n[initial]\nkind = \"zero\"\n"));
    let out = dir.path().join("out");
    let o = snse(&["decompose", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let cert = json(&out.join("certificate.json"));
    assert_eq!(cert["pass"], true);
    for k in 0..=3 {
        let (_, _, c) = decode(&fs::read(out.join(format!("decomposition/level_{k:02}.snsf"))).unwrap());
        assert!(c.iter().flatten().all(|z| *z == (0.0, 0.0)));
    }
}

#[test]
fn decompose_certificate_matches_recomputed_norms() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_text = format!(
        "{SMALL}\n[initial]\nkind = \"random\"\nnorm = 1.0\nseed = 4\nspectrum = {{ profile = \"exponential\", length = 1.0, max_radius = 5.0 }}\n"
    );
    let cfg = write(dir.path(), "c.toml", &cfg_text);
    // Store the datum through a direct run with dense output, then decompose
    // it from the file.
    let sim = dir.path().join("sim");
    let mut direct = cfg_text.clone();
    direct.push_str("\n[output]\ndense = true\n");
    let direct = direct.replace("n_paths = 4\n\n[verify.heat]", "n_paths = 1\nmethod = \"direct\"\n\n[verify.heat]");
    let dcfg = write(dir.path(), "d.toml", &direct);
    let o = snse(&["simulate", "--config", &dcfg, "--out", sim.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let input = sim.join("paths/path_0000/dense/step_000000.snsf");

    let out = dir.path().join("out");
    let o = snse(&[
        "decompose",
        "--config",
        &cfg,
        "--input",
        input.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let cert = json(&out.join("certificate.json"));
    let levels = cert["decomposition"]["levels"].as_array().unwrap();
    let w0 = cert["decomposition"]["w0_norm"].as_f64().unwrap();
    for (k, lv) in levels.iter().enumerate() {
        let stored = lv["critical"].as_f64().unwrap();
        let oracle = l3_oracle(&out.join(format!("decomposition/level_{k:02}.snsf")));
        assert!((stored - oracle).abs() <= 1e-12 * w0.max(1.0), "level {k}: {stored} vs {oracle}");
        let bound = if k == 0 { 2.0 * w0 } else { w0 / 4f64.powi(k as i32) };
        assert!(oracle <= bound * (1.0 + 1e-12));
    }
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["input"]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn infeasible_split_exits_two_and_names_resolution() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("k_max = 3", "k_max = 3\nepsilon0 = 1e-4")
        + "\n[initial]\nkind = \"random\"\nnorm = 1.0\nseed = 1\nspectrum = { profile = \"flat\", max_radius = 8.0 }\n";
    let text = text.replace("[ensemble]", "[cascade]\nepsilon1 = 0.11\n\n[ensemble]");
    let cfg = write(dir.path(), "c.toml", &text);
    let o = snse(&["decompose", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("n_per_axis >="), "{}", stderr(&o));
}

#[test]
fn taylor_green_ledger_follows_analytic_decay() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("amplitude = 1.0\nfilter = \"low-pass\"", "kind = \"zero\"")
        + "\n[initial]\nkind = \"taylor-green\"\namplitude = 1.0\n";
    let text = text.replace("n_paths = 4\n\n[verify.heat]", "n_paths = 1\nmethod = \"direct\"\n\n[verify.heat]");
    let cfg = write(dir.path(), "c.toml", &text);
    let out = dir.path().join("o");
    let o = snse(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("paths/path_0000/u.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("# snse-ledger v1"));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let l2 = header.iter().position(|h| *h == "L2").unwrap();
    // ‖sin x cos y‖² + ‖cos x sin y‖² = 2π² on the 2-torus.
    let l2_0 = (2.0 * PI * PI).sqrt();
    let mut rows = 0;
    for line in lines {
        let cols: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        let expect = l2_0 * (-2.0 * cols[0]).exp();
        assert!((cols[l2] - expect).abs() < 1e-10, "t = {}: {} vs {expect}", cols[0], cols[l2]);
        rows += 1;
    }
    assert_eq!(rows, 6);
}

#[test]
fn repeated_simulation_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        &(SMALL.to_string()
            + "\n[initial]\nkind = \"random\"\nnorm = 0.6\nseed = 2\nspectrum = { profile = \"exponential\", length = 1.0, max_radius = 5.0 }\n"),
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, workers) in [(&a, "1"), (&b, "3")] {
        let o = snse(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap(), "--workers", workers]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let fa = json(&a.join("manifest.json"))["files"].clone();
    let fb = json(&b.join("manifest.json"))["files"].clone();
    assert_eq!(fa, fb);
    assert!(fa.as_array().unwrap().len() >= 4 * 7);

    // Re-running from the manifest reproduces every ledger.
    let c = dir.path().join("c");
    let manifest = a.join("manifest.json");
    let o = snse(&["simulate", "--config", manifest.to_str().unwrap(), "--out", c.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(json(&c.join("manifest.json"))["files"], fa);
}

#[test]
fn malformed_configs_exit_one_with_located_messages() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("[time]\nhorizn = 0.1\n", "horizn"),
        ("[time]\ndt = -1.0\n", "time"),
        ("[grid]\ndim = 2\nn_per_axis = 9\n", "grid"),
        ("[noise]\nratio = 3.0\n", "noise"),
        ("[cascade]\nepsilon1 = 0.01\n", "cascade.epsilon1"),
        ("[initial]\nkind = \"spiral\"\n", "spiral"),
        ("[grid\n", "line 1"),
    ];
    for (i, (text, needle)) in cases.iter().enumerate() {
        let cfg = write(dir.path(), &format!("bad{i}.toml"), text);
        let o = snse(&["simulate", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
        assert_eq!(code(&o), 1, "{text}");
        assert!(stderr(&o).contains(needle), "{text}: {}", stderr(&o));
    }
    assert!(!dir.path().join("o").exists());
    assert_eq!(code(&snse(&["simulate", "--bogus"])), 1);
    assert_eq!(code(&snse(&["simulate", "--mode", "l4"])), 1);
    assert_eq!(code(&snse(&["--help"])), 0);
}

#[test]
fn zero_data_verify_passes_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &format!("{SMALL}\n[initial]\nkind = \"zero\"\n"));
    let a = dir.path().join("a");
    let o = snse(&["verify", "--config", &cfg, "--out", a.to_str().unwrap()]);
    let table = String::from_utf8_lossy(&o.stdout).into_owned();
    assert_eq!(code(&o), 0, "{table}\n{}", stderr(&o));
    assert!(table.contains("overall PASS"));
    let reports = json(&a.join("reports.json"));
    assert_eq!(reports["all_pass"], true);
    for r in reports["energy"]["reports"].as_array().unwrap() {
        assert_eq!(r["lhs"]["mean"], 0.0, "{}", r["name"]);
    }

    let r = snse(&["report", "--input", a.to_str().unwrap()]);
    assert_eq!(code(&r), 0);
    assert_eq!(String::from_utf8_lossy(&r.stdout), table);

    let b = dir.path().join("b");
    let o = snse(&["verify", "--config", a.join("manifest.json").to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["reports.json", "reports.txt", "survival.csv", "level_constants.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        &(SMALL.to_string()
            + "\n[initial]\nkind = \"random\"\nnorm = 0.3\nseed = 2\nspectrum = { profile = \"exponential\", length = 1.0, max_radius = 5.0 }\n"),
    );
    let out = dir.path().join("o");
    let o = Command::new(env!("CARGO_BIN_EXE_snse"))
        .args([
            "simulate",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
            "--paths",
            "2",
            "--seeds",
            "99",
            "--mode",
            "h12",
            "--dense-output",
        ])
        .env("SNSE_WORKERS", "2")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["config"]["ensemble"]["n_paths"], 2);
    assert_eq!(m["config"]["ensemble"]["base_seed"], 99);
    assert_eq!(m["config"]["cascade"]["mode"], "h12");
    assert_eq!(m["config"]["output"]["dense"], true);
    assert_eq!(m["paths"].as_array().unwrap().len(), 2);
    assert!(out.join("paths/path_0001/dense/step_000005.snsf").exists());
    assert!(out.join("paths/path_0001/dense/step_000005.snsf.json").exists());
}
