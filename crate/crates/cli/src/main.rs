//! `kmerlight` command-line front end.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use kmerlight::exact::{exact_count_paths, ExactError};
use kmerlight::kmer::IngestError;
use kmerlight::models::{
    detect_peaks, estimate_genome_size_consistency, estimate_true_distinct, fit_model, FitError,
    PeakConfig, FIT_SCHEMA_VERSION,
};
use kmerlight::sketch::{estimate_histogram, MAX_LOG2_COUNTERS};
use kmerlight::synth::{
    generate_genome, write_genome_fasta, write_reads_fastq, GenomeSpec, GroundTruth, ReadSpec,
    RepeatBlock,
};
use kmerlight::{
    compare, exact_histogram, ingest, AbundanceSketch, Histogram, IngestConfig, SketchError,
    SketchParams, StreamStats,
};
use serde_json::json;

const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "kmerlight", version, about = "k-mer abundance histograms in sublinear memory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the k-mer abundance histogram of FASTA/FASTQ input with a sketch.
    Hist {
        #[command(flatten)]
        sketch: SketchArgs,
        #[command(flatten)]
        out: HistOutput,
        /// Also save the sketch to this file.
        #[arg(long)]
        save_sketch: Option<PathBuf>,
        /// FASTA/FASTQ files, optionally gzipped; `-` for stdin.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Count k-mers exactly and write their histogram.
    Exact {
        #[arg(short, long, default_value_t = 21)]
        k: usize,
        #[command(flatten)]
        strand: Strand,
        /// Give up beyond this many distinct k-mers.
        #[arg(long)]
        max_distinct: Option<usize>,
        #[command(flatten)]
        out: HistOutput,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Relative errors of an estimated histogram against an exact one (JSON).
    Compare {
        estimated: PathBuf,
        exact: PathBuf,
        /// Compare f_1..=f_max.
        #[arg(long, default_value_t = 100)]
        max_count: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Fit the generative model to a histogram: repeats, error rate, coverage, genome size (JSON).
    Fit {
        histogram: PathBuf,
        /// Read length l.
        #[arg(short = 'l', long)]
        read_length: u32,
        /// k; taken from the histogram header when omitted.
        #[arg(short, long)]
        k: Option<u32>,
        /// Known coverage, for the second genome-size route.
        #[arg(short, long)]
        coverage: Option<f64>,
        /// Known genome length, for comparison.
        #[arg(long)]
        genome_length: Option<u64>,
        /// Last multiplicity attributed to errors (detected when omitted).
        #[arg(long)]
        error_cutoff: Option<u64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Generate a genome with planted repeats, reads, and ground truth.
    Synth(SynthArgs),
    /// Save, load, merge and inspect sketch files.
    #[command(subcommand)]
    Sketch(SketchCommand),
}

#[derive(Subcommand)]
enum SketchCommand {
    /// Sketch input reads and save the sketch.
    Build {
        #[command(flatten)]
        sketch: SketchArgs,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Merge sketches built with identical parameters.
    Merge {
        #[arg(required = true, num_args = 2..)]
        inputs: Vec<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Histogram of a saved sketch.
    Hist {
        input: PathBuf,
        #[command(flatten)]
        out: HistOutput,
    },
    /// Parameters and size of a saved sketch (JSON).
    Info { input: PathBuf },
}

#[derive(Args)]
struct SketchArgs {
    #[arg(short, long, default_value_t = 21)]
    k: usize,
    /// log2 of the counters per level.
    #[arg(long, default_value_t = 16, conflicts_with = "mem_budget")]
    log2_counters: u32,
    /// Largest log2-counters whose worst-case footprint fits, e.g. `512M`.
    #[arg(long, value_parser = parse_bytes)]
    mem_budget: Option<u64>,
    /// Independent sketch instances (odd).
    #[arg(long, default_value_t = 7)]
    instances: usize,
    /// log2 of the label universe.
    #[arg(long, default_value_t = 16)]
    aux_bits: u32,
    #[command(flatten)]
    strand: Strand,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short = 't', long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct Strand {
    /// Count k-mers and their reverse complements together (default).
    #[arg(long, overrides_with = "raw")]
    canonical: bool,
    /// Count k-mers as read.
    #[arg(long)]
    raw: bool,
}

impl Strand {
    fn canonical(&self) -> bool {
        !self.raw || self.canonical
    }
}

#[derive(Args)]
struct HistOutput {
    /// Largest multiplicity reported.
    #[arg(long, default_value_t = 1000)]
    max_count: u64,
    #[arg(long, value_enum, default_value_t = Format::Tsv)]
    format: Format,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Tsv,
    Json,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 1_000_000)]
    genome_length: usize,
    /// Planted repeat block `LENGTH:COPIES`; repeatable.
    #[arg(long = "repeat", value_parser = parse_repeat)]
    repeats: Vec<RepeatBlock>,
    #[arg(short, long, default_value_t = 30.0)]
    coverage: f64,
    #[arg(short = 'l', long, default_value_t = 100)]
    read_length: usize,
    /// Per-base substitution rate.
    #[arg(long, default_value_t = 0.001)]
    error_rate: f64,
    /// k used for the ground-truth repeat statistics.
    #[arg(short, long, default_value_t = 21)]
    k: usize,
    #[command(flatten)]
    strand: Strand,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output prefix: writes PREFIX.fa, PREFIX.fq and PREFIX.truth.json.
    #[arg(short, long)]
    output: PathBuf,
}

fn parse_bytes(s: &str) -> Result<u64, String> {
    let s = s.trim();
    let (digits, scale) = match s.char_indices().last() {
        Some((i, c)) if c.is_ascii_alphabetic() => {
            let scale = match c.to_ascii_uppercase() {
                'K' => 1 << 10,
                'M' => 1 << 20,
                'G' => 1 << 30,
                _ => return Err(format!("unknown size suffix in {s:?}")),
            };
            (&s[..i], scale)
        }
        _ => (s, 1),
    };
    let n: u64 = digits.parse().map_err(|_| format!("invalid size {s:?}"))?;
    n.checked_mul(scale).ok_or_else(|| format!("size {s:?} overflows"))
}

fn parse_repeat(s: &str) -> Result<RepeatBlock, String> {
    let (len, copies) = s.split_once(':').ok_or("expected LENGTH:COPIES")?;
    Ok(RepeatBlock {
        length: len.parse().map_err(|_| format!("invalid length {len:?}"))?,
        copies: copies.parse().map_err(|_| format!("invalid copy count {copies:?}"))?,
    })
}

/// Error with the process exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

const USAGE: u8 = 1;
const INPUT: u8 = 2;
const ESTIMATION: u8 = 3;

fn fail(code: u8) -> impl FnOnce(anyhow::Error) -> Failure {
    move |error| Failure { code, error }
}

impl From<SketchError> for Failure {
    fn from(e: SketchError) -> Self {
        let code = match e {
            SketchError::Config(_) => USAGE,
            SketchError::Saturated | SketchError::UnsupportedMultiplicity(_) => ESTIMATION,
            _ => INPUT,
        };
        Failure { code, error: e.into() }
    }
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Sketch(s) => s.into(),
            IngestError::BadK { .. } => Failure { code: USAGE, error: e.into() },
            _ => Failure { code: INPUT, error: e.into() },
        }
    }
}

impl From<ExactError> for Failure {
    fn from(e: ExactError) -> Self {
        Failure { code: INPUT, error: e.into() }
    }
}

impl From<FitError> for Failure {
    fn from(e: FitError) -> Self {
        let code = if matches!(e, FitError::BadInput(_)) { USAGE } else { ESTIMATION };
        Failure { code, error: e.into() }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Hist { sketch, out, save_sketch, inputs } => cmd_hist(&sketch, &out, save_sketch.as_deref(), &inputs),
        Command::Exact { k, strand, max_distinct, out, inputs } => {
            cmd_exact(k, strand.canonical(), max_distinct, &out, &inputs)
        }
        Command::Compare { estimated, exact, max_count, output } => {
            cmd_compare(&estimated, &exact, max_count, output.as_deref())
        }
        Command::Fit { histogram, read_length, k, coverage, genome_length, error_cutoff, output } => {
            cmd_fit(&histogram, read_length, k, coverage, genome_length, error_cutoff, output.as_deref())
        }
        Command::Synth(args) => cmd_synth(&args),
        Command::Sketch(SketchCommand::Build { sketch, output, inputs }) => {
            build_sketch(&sketch, &inputs).and_then(|(s, _)| save_sketch(&s, &output))
        }
        Command::Sketch(SketchCommand::Merge { inputs, output }) => cmd_merge(&inputs, &output),
        Command::Sketch(SketchCommand::Hist { input, out }) => {
            load_sketch(&input).and_then(|s| write_histogram(&sketch_histogram(&s, out.max_count)?, &out))
        }
        Command::Sketch(SketchCommand::Info { input }) => load_sketch(&input).and_then(|s| sketch_info(&s)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", describe(&f.error));
            ExitCode::from(f.code)
        }
    }
}

fn params_for(args: &SketchArgs) -> Result<SketchParams, Failure> {
    if !(3..=16).contains(&args.aux_bits) {
        return Err(Failure { code: USAGE, error: anyhow!("--aux-bits must be in 3..=16") });
    }
    let with = |log2r| {
        SketchParams::new(args.instances, log2r, args.seed).with_aux_universe(1u32 << args.aux_bits)
    };
    let log2r = match args.mem_budget {
        None => args.log2_counters,
        Some(budget) => (1..=MAX_LOG2_COUNTERS)
            .rev()
            .find(|&l| with(l).max_footprint_bytes() <= budget)
            .ok_or_else(|| Failure { code: USAGE, error: anyhow!("--mem-budget {budget} bytes is too small for any sketch") })?,
    };
    let params = with(log2r);
    params.validate()?;
    Ok(params)
}

fn build_sketch(args: &SketchArgs, inputs: &[PathBuf]) -> Result<(AbundanceSketch, StreamStats), Failure> {
    let mut cfg = IngestConfig::new(args.k, params_for(args)?);
    cfg.canonical = args.strand.canonical();
    cfg.workers = args.threads.max(1);
    let start = Instant::now();
    let (sketch, stats) = ingest(inputs, &cfg)?;
    let secs = start.elapsed().as_secs_f64();
    eprintln!(
        "reads {}  k-mers (N) {}  skipped windows {}  wall {:.2}s  throughput {:.3e} k-mers/s  peak memory {}",
        stats.reads,
        stats.kmers,
        stats.skipped,
        secs,
        stats.kmers as f64 / secs.max(1e-9),
        peak_memory()
    );
    Ok((sketch, stats))
}

fn sketch_histogram(sketch: &AbundanceSketch, max_count: u64) -> Result<Histogram, Failure> {
    let mut h: Histogram = estimate_histogram(sketch, max_count)?;
    let k = sketch.kmer_config().k;
    h.k = (k > 0).then_some(k);
    eprintln!("F0 estimate {:.1}", h.f0);
    Ok(h)
}

fn cmd_hist(args: &SketchArgs, out: &HistOutput, save: Option<&Path>, inputs: &[PathBuf]) -> CmdResult {
    let (sketch, _) = build_sketch(args, inputs)?;
    if let Some(path) = save {
        save_sketch(&sketch, path)?;
    }
    write_histogram(&sketch_histogram(&sketch, out.max_count)?, out)
}

fn cmd_exact(k: usize, canonical: bool, limit: Option<usize>, out: &HistOutput, inputs: &[PathBuf]) -> CmdResult {
    if !(1..=kmerlight::kmer::MAX_K).contains(&k) {
        return Err(Failure { code: USAGE, error: anyhow!("k must be in 1..={}", kmerlight::kmer::MAX_K) });
    }
    let start = Instant::now();
    let (counts, stats) = exact_count_paths(inputs, k, canonical, limit)?;
    let mut h: Histogram = exact_histogram(&counts);
    h.k = Some(k as u32);
    h.counts.retain(|&i, _| i <= out.max_count);
    let secs = start.elapsed().as_secs_f64();
    eprintln!(
        "reads {}  k-mers (N) {}  distinct (F0) {}  wall {:.2}s  throughput {:.3e} k-mers/s  peak memory {}",
        stats.reads,
        stats.kmers,
        counts.distinct(),
        secs,
        stats.kmers as f64 / secs.max(1e-9),
        peak_memory()
    );
    write_histogram(&h, out)
}

fn read_histogram(path: &Path) -> Result<Histogram, Failure> {
    let mut text = String::new();
    open(path)
        .and_then(|mut r| r.read_to_string(&mut text).map_err(Into::into))
        .map_err(fail(INPUT))?;
    Histogram::parse(&text).with_context(|| path.display().to_string()).map_err(fail(INPUT))
}

fn cmd_compare(estimated: &Path, exact: &Path, max_count: u64, output: Option<&Path>) -> CmdResult {
    let est = read_histogram(estimated)?;
    let ex = read_histogram(exact)?;
    let report = compare(&est, &ex, max_count);
    let mut value = serde_json::to_value(&report).map_err(|e| fail(INPUT)(e.into()))?;
    value["schema_version"] = json!(REPORT_SCHEMA_VERSION);
    write_json(&value, output)
}

fn cmd_fit(
    path: &Path,
    read_length: u32,
    k: Option<u32>,
    coverage: Option<f64>,
    genome_length: Option<u64>,
    error_cutoff: Option<u64>,
    output: Option<&Path>,
) -> CmdResult {
    let hist = read_histogram(path)?;
    let k = k.or(hist.k).ok_or_else(|| Failure {
        code: USAGE,
        error: anyhow!("{} has no #k header; pass -k", path.display()),
    })?;
    if k == 0 || read_length < k {
        return Err(Failure { code: USAGE, error: anyhow!("read length {read_length} must be at least k = {k}") });
    }
    let peaks = detect_peaks(&hist, error_cutoff, &PeakConfig::default())?;
    let fit = fit_model(&hist, &peaks, read_length, k)?;
    let sizes = estimate_genome_size_consistency(&fit, coverage, genome_length);
    let value = json!({
        "schema_version": FIT_SCHEMA_VERSION,
        "peaks": peaks,
        "fit": fit,
        "g_m": fit.g_m(),
        "true_distinct": estimate_true_distinct(&hist, fit.error_cutoff),
        "genome_size": sizes,
    });
    write_json(&value, output)
}

fn cmd_synth(args: &SynthArgs) -> CmdResult {
    let spec = GenomeSpec { length: args.genome_length, repeat_blocks: args.repeats.clone(), seed: args.seed };
    let genome = generate_genome(&spec, args.k, args.strand.canonical()).map_err(|e| fail(USAGE)(e.into()))?;
    let reads = ReadSpec {
        coverage: args.coverage,
        read_length: args.read_length,
        error_rate: args.error_rate,
        seed: args.seed,
        both_strands: true,
    };
    let with_ext = |ext: &str| {
        let mut p = args.output.clone().into_os_string();
        p.push(ext);
        PathBuf::from(p)
    };
    write_genome_fasta(&genome.sequence, "genome", create(&with_ext(".fa"))?).map_err(|e| fail(INPUT)(e.into()))?;
    let truth = write_reads_fastq(&genome.sequence, &reads, create(&with_ext(".fq"))?).map_err(|e| match e {
        kmerlight::synth::SynthError::Config(_) => fail(USAGE)(e.into()),
        _ => fail(INPUT)(e.into()),
    })?;
    let sidecar = GroundTruth::new(&genome, &reads, &truth);
    let value = serde_json::to_value(&sidecar).map_err(|e| fail(INPUT)(e.into()))?;
    write_json(&value, Some(&with_ext(".truth.json")))?;
    eprintln!("genome {} bp, {} reads, {} substitutions", genome.sequence.len(), truth.reads, truth.substitutions);
    Ok(())
}

fn cmd_merge(inputs: &[PathBuf], output: &Path) -> CmdResult {
    let mut merged = load_sketch(&inputs[0])?;
    for path in &inputs[1..] {
        merged
            .merge_from(&load_sketch(path)?)
            .with_context(|| path.display().to_string())
            .map_err(fail(INPUT))?;
    }
    save_sketch(&merged, output)
}

fn sketch_info(sketch: &AbundanceSketch) -> CmdResult {
    let p = sketch.params();
    let kc = sketch.kmer_config();
    let value = json!({
        "schema_version": REPORT_SCHEMA_VERSION,
        "instances": p.instances(),
        "log2_counters": p.log2_counters,
        "aux_universe": p.aux_universe,
        "levels": p.levels,
        "seeds": p.seeds,
        "k": kc.k,
        "canonical": kc.canonical,
        "total_updates": sketch.total_updates(),
        "serialized_bytes": sketch.serialized_len(),
        "allocated_bytes": sketch.allocated_bytes(),
    });
    write_json(&value, None)
}

fn load_sketch(path: &Path) -> Result<AbundanceSketch, Failure> {
    let input = open(path).map_err(fail(INPUT))?;
    AbundanceSketch::read_from(input)
        .with_context(|| path.display().to_string())
        .map_err(fail(INPUT))
}

fn save_sketch(sketch: &AbundanceSketch, path: &Path) -> CmdResult {
    let mut out = create(path)?;
    sketch
        .write_to(&mut out)
        .map_err(anyhow::Error::from)
        .and_then(|()| out.flush().map_err(Into::into))
        .with_context(|| path.display().to_string())
        .map_err(fail(INPUT))
}

fn open(path: &Path) -> anyhow::Result<Box<dyn Read>> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(io::stdin()));
    }
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(Box::new(io::BufReader::new(f)))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("cannot create {}", path.display()))
        .map_err(fail(INPUT))
}

fn emit(bytes: &[u8], output: Option<&Path>) -> CmdResult {
    let result = match output {
        Some(path) => {
            let mut out = create(path)?;
            out.write_all(bytes).and_then(|()| out.flush())
        }
        None => io::stdout().lock().write_all(bytes),
    };
    result.context("cannot write output").map_err(fail(INPUT))
}

fn write_json(value: &serde_json::Value, output: Option<&Path>) -> CmdResult {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| fail(INPUT)(e.into()))?;
    text.push('\n');
    emit(text.as_bytes(), output)
}

fn write_histogram(h: &Histogram, out: &HistOutput) -> CmdResult {
    match out.format {
        Format::Tsv => emit(h.to_tsv().as_bytes(), out.output.as_deref()),
        Format::Json => write_json(&h.to_json(), out.output.as_deref()),
    }
}

/// The error chain, skipping causes already spelled out by their parent.
fn describe(error: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in error.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

/// Peak resident set size from `/proc`, where available.
fn peak_memory() -> String {
    std::fs::read_to_string("/proc/self/status")
        .ok()
        .and_then(|s| s.lines().find(|l| l.starts_with("VmHWM:")).map(|l| l[6..].trim().to_string()))
        .unwrap_or_else(|| "n/a".into())
}
