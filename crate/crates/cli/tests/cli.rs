//! End-to-end tests of the `kmerlight` binary. Set `KMERLIGHT_BLESS=1` to
//! regenerate the files under `tests/golden`.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn kmerlight(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kmerlight")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Vec<u8> {
    let out = kmerlight(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn exit_code(args: &[&str]) -> i32 {
    kmerlight(args).status.code().expect("exit code")
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn check_golden(name: &str, actual: &[u8]) {
    let path = golden(name);
    if std::env::var_os("KMERLIGHT_BLESS").is_some() {
        fs::write(&path, actual).unwrap();
    }
    let expected = fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(expected == actual, "{name} differs from its golden file");
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small dataset: the golden synth output.
fn tiny(dir: &TempDir) -> PathBuf {
    let prefix = dir.path().join("tiny");
    ok(&["synth", "--genome-length", "2000", "--repeat", "200:2", "-c", "5", "-l", "50", "-k", "11", "--seed", "7", "-o", s(&prefix)]);
    prefix
}

/// Dataset with clear coverage peaks.
fn medium(dir: &TempDir) -> PathBuf {
    let prefix = dir.path().join("medium");
    ok(&[
        "synth", "--genome-length", "60000", "--repeat", "6000:2", "--repeat", "3000:3", "-c", "40", "-l", "100",
        "--error-rate", "0.002", "-k", "15", "--seed", "11", "-o", s(&prefix),
    ]);
    prefix
}

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    PathBuf::from(format!("{}{ext}", prefix.display()))
}

fn revcomp(s: &[u8]) -> Vec<u8> {
    s.iter()
        .rev()
        .map(|b| match b {
            b'A' => b'T',
            b'C' => b'G',
            b'G' => b'C',
            _ => b'A',
        })
        .collect()
}

/// Canonical k-mer counts of the FASTQ/FASTA sequences, by string slicing.
fn naive_counts(path: &Path, k: usize) -> HashMap<Vec<u8>, u64> {
    let text = fs::read_to_string(path).unwrap();
    let fastq = text.starts_with('@');
    let mut seqs: Vec<Vec<u8>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if fastq {
            if i % 4 == 1 {
                seqs.push(line.as_bytes().to_vec());
            }
        } else if line.starts_with('>') {
            seqs.push(Vec::new());
        } else {
            seqs.last_mut().unwrap().extend_from_slice(line.as_bytes());
        }
    }
    let mut counts = HashMap::new();
    for seq in seqs {
        for w in seq.windows(k).filter(|w| w.iter().all(|b| b"ACGT".contains(b))) {
            let rc = revcomp(w);
            *counts.entry(w.to_vec().min(rc)).or_default() += 1;
        }
    }
    counts
}

fn parse_tsv(text: &[u8]) -> (BTreeMap<String, f64>, BTreeMap<u64, f64>) {
    let mut header = BTreeMap::new();
    let mut rows = BTreeMap::new();
    for line in std::str::from_utf8(text).unwrap().lines() {
        let (a, b) = line.split_once('\t').unwrap();
        if let Some(key) = a.strip_prefix('#') {
            header.insert(key.to_string(), b.parse().unwrap_or(f64::NAN));
        } else {
            rows.insert(a.parse().unwrap(), b.parse().unwrap());
        }
    }
    (header, rows)
}

#[test]
fn synth_golden_and_deterministic() {
    let dir = TempDir::new().unwrap();
    let prefix = tiny(&dir);
    for ext in [".fa", ".fq", ".truth.json"] {
        check_golden(&format!("tiny{ext}"), &fs::read(with_ext(&prefix, ext)).unwrap());
    }
}

#[test]
fn synth_rejects_bad_specs() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x");
    assert_eq!(exit_code(&["synth", "--genome-length", "100", "-l", "150", "-o", s(&out)]), 1);
    assert_eq!(exit_code(&["synth", "--genome-length", "100", "--repeat", "80:2", "-o", s(&out)]), 1);
    assert_eq!(exit_code(&["synth", "--repeat", "ten:2", "-o", s(&out)]), 1);
    assert_eq!(exit_code(&["synth", "-o", "/nonexistent/dir/x", "--genome-length", "1000"]), 2);
}

#[test]
fn synth_truth_matches_genome() {
    let dir = TempDir::new().unwrap();
    let prefix = medium(&dir);
    let truth: Value = serde_json::from_slice(&fs::read(with_ext(&prefix, ".truth.json")).unwrap()).unwrap();
    assert_eq!(truth["schema_version"], 1);
    let mut g: BTreeMap<u64, u64> = BTreeMap::new();
    for &n in naive_counts(&with_ext(&prefix, ".fa"), 15).values() {
        *g.entry(n).or_default() += n;
    }
    let stated: BTreeMap<u64, u64> = serde_json::from_value(truth["g_m"].clone()).unwrap();
    assert_eq!(stated, g);
    assert!(g[&2] >= 2 * (6000 - 14) && g[&3] >= 3 * (3000 - 14));
}

#[test]
fn hist_golden_and_thread_invariant() {
    let dir = TempDir::new().unwrap();
    let fq = with_ext(&tiny(&dir), ".fq");
    let args = ["hist", "-k", "11", "--log2-counters", "8", "--seed", "42", s(&fq)];
    let single = ok(&args);
    check_golden("tiny.hist.tsv", &single);
    assert_eq!(ok(&args), single);
    let mut threaded = args.to_vec();
    threaded.extend(["--threads", "3"]);
    assert_eq!(ok(&threaded), single);
    let mut json = args.to_vec();
    json.extend(["--format", "json"]);
    let v: Value = serde_json::from_slice(&ok(&json)).unwrap();
    assert_eq!(v["schema_version"], 1);
}

#[test]
fn hist_error_paths() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.fq");
    fs::write(&bad, "@r1\nACGT\n+\nII\n").unwrap();
    let fq = with_ext(&tiny(&dir), ".fq");
    assert_eq!(exit_code(&["hist", s(&dir.path().join("missing.fq"))]), 2);
    assert_eq!(exit_code(&["hist", s(&bad)]), 2);
    assert_eq!(exit_code(&["hist", "--instances", "4", s(&fq)]), 1);
    assert_eq!(exit_code(&["hist", "--aux-bits", "20", s(&fq)]), 1);
    assert_eq!(exit_code(&["hist", "-k", "0", s(&fq)]), 1);
    assert_eq!(exit_code(&["hist", "--mem-budget", "1K", s(&fq)]), 1);
    assert_eq!(exit_code(&["hist", "--mem-budget", "1M", "--log2-counters", "8", s(&fq)]), 1);
    assert_eq!(exit_code(&["hist", "--max-count", "3000000000", s(&fq)]), 3);
}

#[test]
fn hist_tracks_exact_counts() {
    let dir = TempDir::new().unwrap();
    let fq = with_ext(&medium(&dir), ".fq");
    let counts = naive_counts(&fq, 15);
    let f0 = counts.len() as f64;
    let f1 = counts.values().filter(|&&n| n == 1).count() as f64;
    let n: u64 = counts.values().sum();
    let (header, rows) = parse_tsv(&ok(&["hist", "-k", "15", "--log2-counters", "14", s(&fq)]));
    assert_eq!(header["N"], n as f64);
    assert!((header["F0"] - f0).abs() / f0 < 0.05, "F0 {} vs {f0}", header["F0"]);
    assert!((rows[&1] - f1).abs() / f1 < 0.05, "f1 {} vs {f1}", rows[&1]);
}

#[test]
fn exact_golden_and_matches_brute_force() {
    let dir = TempDir::new().unwrap();
    let fq = with_ext(&tiny(&dir), ".fq");
    let out = ok(&["exact", "-k", "11", s(&fq)]);
    check_golden("tiny.exact.tsv", &out);
    let (header, rows) = parse_tsv(&out);
    let mut want: BTreeMap<u64, f64> = BTreeMap::new();
    let counts = naive_counts(&fq, 11);
    for &n in counts.values() {
        *want.entry(n).or_default() += 1.0;
    }
    assert_eq!(rows, want);
    assert_eq!(header["F0"], counts.len() as f64);
    let raw = parse_tsv(&ok(&["exact", "-k", "11", "--raw", s(&fq)])).0;
    assert!(raw["F0"] > header["F0"]);
}

#[test]
fn exact_error_paths() {
    let dir = TempDir::new().unwrap();
    let fq = with_ext(&tiny(&dir), ".fq");
    assert_eq!(exit_code(&["exact", "-k", "0", s(&fq)]), 1);
    assert_eq!(exit_code(&["exact", s(&dir.path().join("missing.fq"))]), 2);
    assert_eq!(exit_code(&["exact", "--max-distinct", "10", s(&fq)]), 2);
}

#[test]
fn compare_golden_and_recomputes_errors() {
    let dir = TempDir::new().unwrap();
    let fq = with_ext(&tiny(&dir), ".fq");
    let est = dir.path().join("est.tsv");
    let ex = dir.path().join("ex.tsv");
    ok(&["hist", "-k", "11", "--log2-counters", "8", "--seed", "42", s(&fq), "-o", s(&est)]);
    ok(&["exact", "-k", "11", s(&fq), "-o", s(&ex)]);
    let out = ok(&["compare", s(&est), s(&ex), "--max-count", "6"]);
    check_golden("tiny.compare.json", &out);
    let report: Value = serde_json::from_slice(&out).unwrap();
    assert_eq!(report["schema_version"], 1);
    let (eh, er) = parse_tsv(&fs::read(&est).unwrap());
    let (xh, xr) = parse_tsv(&fs::read(&ex).unwrap());
    let entries = report["entries"].as_array().unwrap();
    let f0 = &entries[0];
    assert_eq!(f0["statistic"], "f0");
    let want = (eh["F0"] - xh["F0"]).abs() / xh["F0"];
    assert!((f0["relative_error"].as_f64().unwrap() - want).abs() < 1e-12);
    for e in &entries[1..] {
        let i = e["statistic"]["f"].as_u64().unwrap();
        let exact = xr[&i];
        let estimate = er.get(&i).copied().unwrap_or(0.0);
        assert!((e["relative_error"].as_f64().unwrap() - (estimate - exact).abs() / exact).abs() < 1e-12);
        assert_eq!(e["lambda"].as_u64().unwrap(), (xh["F0"] / exact).ceil() as u64);
    }
}

#[test]
fn compare_error_paths() {
    let dir = TempDir::new().unwrap();
    let junk = dir.path().join("junk.tsv");
    fs::write(&junk, "1\tnot-a-number\n").unwrap();
    assert_eq!(exit_code(&["compare", s(&junk), s(&junk)]), 2);
    assert_eq!(exit_code(&["compare", s(&dir.path().join("a")), s(&junk)]), 2);
    assert_eq!(exit_code(&["compare", s(&junk)]), 1);
}

#[test]
fn fit_golden_and_recovers_truth() {
    let dir = TempDir::new().unwrap();
    let prefix = medium(&dir);
    let ex = dir.path().join("ex.tsv");
    ok(&["exact", "-k", "15", s(&with_ext(&prefix, ".fq")), "-o", s(&ex)]);
    let out = ok(&["fit", s(&ex), "-l", "100", "-c", "40", "--genome-length", "60000"]);
    check_golden("medium.fit.json", &out);
    let fit: Value = serde_json::from_slice(&out).unwrap();
    assert_eq!(fit["schema_version"], 1);
    let truth: Value = serde_json::from_slice(&fs::read(with_ext(&prefix, ".truth.json")).unwrap()).unwrap();
    for (m, tol) in [("1", 0.05), ("2", 0.10), ("3", 0.15)] {
        let est = fit["g_m"][m].as_f64().unwrap();
        let want = truth["g_m"][m].as_f64().unwrap();
        assert!((est - want).abs() / want < tol, "g{m}: {est} vs {want}");
    }
    let size = fit["fit"]["genome_size"].as_f64().unwrap();
    assert!((size - 60000.0).abs() / 60000.0 < 0.05, "genome size {size}");
}

#[test]
fn fit_error_paths() {
    let dir = TempDir::new().unwrap();
    let flat = dir.path().join("flat.tsv");
    let rows: String = (1..=50).map(|i| format!("{i}\t{}\n", 1000 - i)).collect();
    fs::write(&flat, format!("#F0\t47725\n#N\t1000000\n#k\t21\n{rows}")).unwrap();
    assert_eq!(exit_code(&["fit", s(&flat), "-l", "100"]), 3);
    let nok = dir.path().join("nok.tsv");
    fs::write(&nok, "#F0\t3\n1\t3\n").unwrap();
    assert_eq!(exit_code(&["fit", s(&nok), "-l", "100"]), 1);
    assert_eq!(exit_code(&["fit", s(&flat), "-l", "10", "-k", "21"]), 1);
    assert_eq!(exit_code(&["fit", s(&dir.path().join("none.tsv")), "-l", "100"]), 2);
}

#[test]
fn pipeline_closure() {
    let dir = TempDir::new().unwrap();
    let fq = with_ext(&medium(&dir), ".fq");
    let h = dir.path().join("h.json");
    ok(&["hist", "-k", "15", "--log2-counters", "14", "--format", "json", s(&fq), "-o", s(&h)]);
    let fit: Value = serde_json::from_slice(&ok(&["fit", s(&h), "-l", "100"])).unwrap();
    assert!(fit["fit"]["coverage"].as_f64().unwrap() > 30.0);
}

#[test]
fn sketch_files_golden_merge_and_reload() {
    let dir = TempDir::new().unwrap();
    let fq = with_ext(&tiny(&dir), ".fq");
    let text = fs::read_to_string(&fq).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let half = lines.len() / 8 * 4;
    let (a, b) = (dir.path().join("a.fq"), dir.path().join("b.fq"));
    fs::write(&a, lines[..half].join("\n") + "\n").unwrap();
    fs::write(&b, lines[half..].join("\n") + "\n").unwrap();
    let opts = ["-k", "11", "--log2-counters", "6", "--instances", "1", "--seed", "9"];
    let build = |input: &Path, out: &Path| {
        let mut args = vec!["sketch", "build"];
        args.extend(opts);
        args.extend(["-o", s(out), s(input)]);
        ok(&args);
    };
    let (whole, sa, sb, merged) =
        (dir.path().join("w.kml"), dir.path().join("a.kml"), dir.path().join("b.kml"), dir.path().join("m.kml"));
    build(&fq, &whole);
    build(&a, &sa);
    build(&b, &sb);
    check_golden("tiny.kml", &fs::read(&whole).unwrap());
    ok(&["sketch", "merge", s(&sa), s(&sb), "-o", s(&merged)]);
    assert_eq!(fs::read(&merged).unwrap(), fs::read(&whole).unwrap());

    let mut hist = vec!["hist"];
    hist.extend(opts);
    hist.push(s(&fq));
    assert_eq!(ok(&["sketch", "hist", s(&whole)]), ok(&hist));
    let info: Value = serde_json::from_slice(&ok(&["sketch", "info", s(&whole)])).unwrap();
    assert_eq!(info["schema_version"], 1);
    assert_eq!(info["k"], 11);
    assert_eq!(info["serialized_bytes"].as_u64().unwrap(), fs::metadata(&whole).unwrap().len());
}

#[test]
fn sketch_error_paths() {
    let dir = TempDir::new().unwrap();
    let fq = with_ext(&tiny(&dir), ".fq");
    let (x, y) = (dir.path().join("x.kml"), dir.path().join("y.kml"));
    ok(&["sketch", "build", "-k", "11", "--log2-counters", "6", "-o", s(&x), s(&fq)]);
    ok(&["sketch", "build", "-k", "11", "--log2-counters", "7", "-o", s(&y), s(&fq)]);
    let out = dir.path().join("o.kml");
    assert_eq!(exit_code(&["sketch", "merge", s(&x), s(&y), "-o", s(&out)]), 2);
    let mut bytes = fs::read(&x).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xff;
    fs::write(&y, &bytes).unwrap();
    assert_eq!(exit_code(&["sketch", "info", s(&y)]), 2);
    fs::write(&y, &bytes[..10]).unwrap();
    assert_eq!(exit_code(&["sketch", "hist", s(&y)]), 2);
    assert_eq!(exit_code(&["sketch", "merge", s(&x), "-o", s(&out)]), 1);
}

#[test]
fn mem_budget_picks_largest_fitting_sketch() {
    let dir = TempDir::new().unwrap();
    let fq = with_ext(&tiny(&dir), ".fq");
    let out = dir.path().join("s.kml");
    // 7 instances * 64 levels * 2^10 counters * 6 bytes = 2.625 MiB.
    ok(&["sketch", "build", "-k", "11", "--mem-budget", "3M", "-o", s(&out), s(&fq)]);
    let info: Value = serde_json::from_slice(&ok(&["sketch", "info", s(&out)])).unwrap();
    assert_eq!(info["log2_counters"], 10);
}
