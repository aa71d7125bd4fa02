use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wavematch::calibration::{
    build_template, calibrate, locate_operations, subsample_template, LocatedOperations,
};
use wavematch::engine::{apply_holdoff, batch_match, batch_match_parallel, run_engine};
use wavematch::io::{self, FormatError, Settings, TemplateFile};
use wavematch::resource::{estimate_luts, max_template_length, AdderStyle};
use wavematch::synth::{NoiseKind, Scenario, SynthDocument};
use wavematch::{make_interval_template, IntervalTemplate, Precision, Sample, Template, Trace};

const EXIT_IO: u8 = 3;
const EXIT_FORMAT: u8 = 4;
const EXIT_CALIBRATION: u8 = 5;
const EXIT_RESOURCE: u8 = 6;
const EXIT_INVALID: u8 = 7;

const DESK_LIMIT: usize = 10_000_000;

#[derive(Parser)]
#[command(
    name = "wavematch",
    version,
    about = "Streaming waveform matching: synthesize, calibrate, match and simulate"
)]
struct Cli {
    /// Settings file (TOML). Flags override it; it overrides built-in defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Print the effective settings as TOML and exit.
    #[arg(long, global = true)]
    print_config: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic recording and its ground truth.
    Synth(SynthArgs),
    /// Find operations in a recording by correlation with a seed segment.
    Locate(LocateArgs),
    /// Average located operations into a template.
    BuildTemplate(BuildArgs),
    /// Choose the corridor offset and threshold for a template.
    Calibrate(CalibrateArgs),
    /// Match a recording offline with the batch matcher.
    Match(MatchArgs),
    /// Run the cycle-accurate engine over a recording.
    Simulate(SimulateArgs),
    /// Estimate the LUT footprint of a template on an FPGA.
    EstimateResources(ResourceArgs),
    /// Measure matcher and simulator throughput.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    Uniform,
    Gaussian,
}

#[derive(clap::Args)]
struct SynthArgs {
    /// Output trace file.
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth CSV.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Synthesis document (TOML) instead of the built-in scenario.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Also write the synthesis document that was used.
    #[arg(long)]
    write_spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, conflicts_with = "spec")]
    operations: Option<usize>,
    #[arg(long, conflicts_with = "spec")]
    deformed: Option<usize>,
    #[arg(long, conflicts_with = "spec")]
    pattern_length: Option<usize>,
    #[arg(long, conflicts_with = "spec")]
    amplitude: Option<u32>,
    #[arg(long, conflicts_with = "spec")]
    noise: Option<u32>,
    #[arg(long, value_enum, conflicts_with = "spec")]
    noise_kind: Option<NoiseArg>,
    #[arg(long, conflicts_with = "spec")]
    gap_min: Option<usize>,
    #[arg(long, conflicts_with = "spec")]
    gap_max: Option<usize>,
    #[arg(long, conflicts_with = "spec")]
    deform_fraction: Option<f64>,
    /// Allow recordings longer than 10^7 samples.
    #[arg(long)]
    allow_large: bool,
}

#[derive(clap::Args)]
struct LocatorFlags {
    /// Minimum correlation for a location.
    #[arg(long)]
    locator_threshold: Option<f64>,
    #[arg(long)]
    coarse_step: Option<usize>,
    #[arg(long)]
    candidate_floor: Option<f64>,
    #[arg(long)]
    period_tolerance: Option<f64>,
}

#[derive(clap::Args)]
struct LocateArgs {
    #[arg(long)]
    trace: PathBuf,
    /// First sample of the seed segment in the recording.
    #[arg(long)]
    seed_start: usize,
    #[arg(long)]
    seed_length: usize,
    #[arg(long)]
    expected_count: Option<usize>,
    #[command(flatten)]
    locator: LocatorFlags,
    /// Output located-operations file (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct BuildArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    ops: PathBuf,
    /// Template length in samples.
    #[arg(long)]
    length: usize,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long, default_value_t = 0)]
    positional_buffer: usize,
    /// Output template file (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct CalibrationFlags {
    /// Comparison stride applied before calibrating.
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    offset_min: Option<u32>,
    #[arg(long)]
    offset_max: Option<u32>,
    #[arg(long)]
    background_step: Option<usize>,
}

#[derive(clap::Args)]
struct CalibrateArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    ops: PathBuf,
    #[arg(long)]
    template: PathBuf,
    #[command(flatten)]
    calibration: CalibrationFlags,
    /// Output calibrated template file (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct EngineFlags {
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    latency: Option<usize>,
    /// Samples the trigger leads the matched window; defaults to the template's value.
    #[arg(long)]
    positional_buffer: Option<usize>,
    #[arg(long)]
    holdoff: Option<usize>,
    #[arg(long)]
    trigger_duration: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    idle_value: Option<Sample>,
}

#[derive(clap::Args)]
struct MatchArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    template: PathBuf,
    /// Output event log (CSV).
    #[arg(long)]
    events: PathBuf,
    #[command(flatten)]
    engine: EngineFlags,
}

#[derive(clap::Args)]
struct SimulateArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    template: PathBuf,
    /// Output event log (CSV).
    #[arg(long)]
    events: PathBuf,
    /// Trigger waveform as rise/fall runs (CSV).
    #[arg(long)]
    trigger: Option<PathBuf>,
    /// Decimated plot data (CSV).
    #[arg(long)]
    plot: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    plot_bucket: usize,
    #[command(flatten)]
    engine: EngineFlags,
}

#[derive(clap::Args)]
struct DeviceFlags {
    #[arg(long)]
    adder: Option<AdderStyle>,
    #[arg(long)]
    device_name: Option<String>,
    #[arg(long)]
    device_luts: Option<u64>,
    /// Fraction of the device kept free for other logic.
    #[arg(long)]
    reserve: Option<f64>,
}

#[derive(clap::Args)]
struct ResourceArgs {
    /// Compared template samples.
    #[arg(long)]
    samples: usize,
    #[arg(long)]
    parallelism: Option<usize>,
    #[command(flatten)]
    device: DeviceFlags,
    /// Fail when the estimate exceeds the device minus the reserve.
    #[arg(long)]
    require_fit: bool,
}

#[derive(clap::Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    /// Compared template positions.
    #[arg(long, default_value_t = 350)]
    compared: usize,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// Samples run through the cycle-accurate engine.
    #[arg(long, default_value_t = 200_000)]
    engine_samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    engine: EngineFlags,
}

/// Failure carrying its own exit code.
#[derive(Debug)]
struct Exit(u8, String);

impl fmt::Display for Exit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Exit {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Exit(EXIT_INVALID, msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(Exit(code, _)) = err.downcast_ref::<Exit>() {
        return *code;
    }
    if let Some(f) = err.downcast_ref::<FormatError>() {
        return if f.is_io() { EXIT_IO } else { EXIT_FORMAT };
    }
    match err.downcast_ref::<wavematch::Error>() {
        Some(wavematch::Error::CalibrationFailed(_) | wavematch::Error::NoBackground) => {
            EXIT_CALIBRATION
        }
        _ => EXIT_INVALID,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("wavematch: error: {msg}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut settings = match &cli.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    if let Some(cmd) = &cli.command {
        apply_flags(cmd, &mut settings);
    }
    if cli.print_config {
        print!("{}", render_settings(&settings));
        return Ok(());
    }
    let Some(cmd) = cli.command else {
        Cli::command()
            .error(
                clap::error::ErrorKind::MissingSubcommand,
                "a subcommand is required",
            )
            .exit();
    };
    match cmd {
        Command::Synth(a) => synth(a),
        Command::Locate(a) => locate(a, &settings),
        Command::BuildTemplate(a) => build(a),
        Command::Calibrate(a) => calibrate_cmd(a, &settings),
        Command::Match(a) => match_cmd(a, &settings),
        Command::Simulate(a) => simulate(a, &settings),
        Command::EstimateResources(a) => estimate(a, &settings),
        Command::Bench(a) => bench(a, &settings),
    }
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn apply_flags(cmd: &Command, s: &mut Settings) {
    let engine = |s: &mut Settings, f: &EngineFlags| {
        set(&mut s.engine.parallelism, f.parallelism);
        set(&mut s.engine.latency, f.latency);
        set(&mut s.engine.positional_buffer, f.positional_buffer);
        set(&mut s.engine.idle_value, f.idle_value);
        if f.holdoff.is_some() {
            s.engine.holdoff = f.holdoff;
        }
        if f.trigger_duration.is_some() {
            s.engine.trigger_duration = f.trigger_duration;
        }
    };
    match cmd {
        Command::Locate(a) => {
            let f = &a.locator;
            set(&mut s.locator.threshold, f.locator_threshold);
            set(&mut s.locator.coarse_step, f.coarse_step);
            set(&mut s.locator.candidate_floor, f.candidate_floor);
            set(&mut s.locator.period_tolerance, f.period_tolerance);
        }
        Command::Calibrate(a) => {
            let f = &a.calibration;
            set(&mut s.calibration.stride, f.stride);
            set(&mut s.calibration.offset_min, f.offset_min);
            set(&mut s.calibration.offset_max, f.offset_max);
            set(&mut s.calibration.background_step, f.background_step);
        }
        Command::Match(a) => engine(s, &a.engine),
        Command::Simulate(a) => engine(s, &a.engine),
        Command::Bench(a) => engine(s, &a.engine),
        Command::EstimateResources(a) => {
            set(&mut s.engine.parallelism, a.parallelism);
            let f = &a.device;
            set(&mut s.device.adder, f.adder);
            set(&mut s.device.name, f.device_name.clone());
            set(&mut s.device.lut_capacity, f.device_luts);
            set(&mut s.device.reserve_fraction, f.reserve);
        }
        Command::Synth(_) | Command::BuildTemplate(_) => {}
    }
}

fn render_settings(s: &Settings) -> String {
    let mut out = s.to_toml();
    if s.engine.holdoff.is_none() {
        out.push_str("\n# engine.holdoff defaults to the template span\n");
    }
    if s.engine.trigger_duration.is_none() {
        out.push_str("# engine.trigger_duration defaults to min(span, holdoff)\n");
    }
    out
}

fn thousands(v: u64) -> String {
    let digits = v.to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut doc = match &a.spec {
        Some(path) => SynthDocument::from_toml(&std::fs::read_to_string(path).map_err(|e| {
            FormatError::Io {
                path: path.clone(),
                source: e,
            }
        })?)
        .map_err(|e| FormatError::Parse {
            what: path.display().to_string(),
            message: e.to_string(),
        })?,
        None => {
            let mut sc = Scenario::default();
            set(&mut sc.operations, a.operations);
            set(&mut sc.deformed, a.deformed);
            set(&mut sc.pattern_length, a.pattern_length);
            set(&mut sc.amplitude, a.amplitude);
            set(&mut sc.noise, a.noise);
            set(&mut sc.gap_min, a.gap_min);
            set(&mut sc.gap_max, a.gap_max);
            set(&mut sc.deform_fraction, a.deform_fraction);
            set(&mut sc.seed, a.seed);
            if let Some(k) = a.noise_kind {
                sc.noise_kind = match k {
                    NoiseArg::Uniform => NoiseKind::Uniform,
                    NoiseArg::Gaussian => NoiseKind::Gaussian,
                };
            }
            sc.document()?
        }
    };
    set(&mut doc.spec.seed, a.seed);
    if doc.spec.length > DESK_LIMIT && !a.allow_large {
        return Err(invalid(format!(
            "recording of {} samples exceeds the {} sample limit; pass --allow-large",
            doc.spec.length, DESK_LIMIT
        )));
    }
    let (trace, truth) = doc.generate()?;
    io::save_trace(&a.out, &trace)?;
    if let Some(path) = &a.truth {
        io::write_ground_truth(path, &truth)?;
    }
    if let Some(path) = &a.write_spec {
        std::fs::write(path, doc.to_toml()).map_err(|e| FormatError::Io {
            path: path.clone(),
            source: e,
        })?;
    }
    let good = truth.iter().filter(|g| g.well_formed).count();
    println!(
        "wrote {} samples with {} embeddings ({good} well-formed) to {}",
        trace.len(),
        truth.len(),
        a.out.display()
    );
    Ok(())
}

fn locate(a: LocateArgs, s: &Settings) -> Result<()> {
    let trace = io::load_trace(&a.trace)?;
    let end = a
        .seed_start
        .checked_add(a.seed_length)
        .filter(|&e| e <= trace.len());
    let Some(end) = end else {
        return Err(invalid(format!(
            "seed segment {}+{} runs past the recording ({} samples)",
            a.seed_start,
            a.seed_length,
            trace.len()
        )));
    };
    let seed = &trace.samples()[a.seed_start..end];
    let ops = locate_operations(&trace, seed, a.expected_count, &s.locator)?;
    io::save_json(&a.out, &ops)?;
    println!(
        "located {} operations, {} rejected",
        ops.locations.len(),
        ops.rejected.len()
    );
    for r in &ops.rejected {
        println!("rejected {}: {}", r.index, r.reason);
    }
    Ok(())
}

fn load_ops(path: &Path) -> Result<LocatedOperations> {
    let ops: LocatedOperations = io::load_json(path)?;
    if ops.locations.windows(2).any(|w| w[1] < w[0] + ops.span) {
        return Err(FormatError::Parse {
            what: path.display().to_string(),
            message: "locations must be increasing and at least one span apart".into(),
        }
        .into());
    }
    Ok(ops)
}

fn build(a: BuildArgs) -> Result<()> {
    let trace = io::load_trace(&a.trace)?;
    let ops = load_ops(&a.ops)?;
    let template = build_template(&trace, &ops, a.length)?
        .with_stride(a.stride)?
        .with_positional_buffer(a.positional_buffer);
    io::save_template(&a.out, &TemplateFile::from_template(&template))?;
    println!(
        "averaged {} operations into a {}-sample template ({} compared)",
        ops.locations.len(),
        template.len(),
        template.compared_len()
    );
    Ok(())
}

fn print_report(r: &wavematch::calibration::CalibrationReport) {
    println!("chosen_offset = {}", r.chosen_offset);
    println!("chosen_threshold = {}", r.chosen_threshold);
    println!("true_score_min = {}", r.true_score_min);
    println!("background_score_max = {}", r.background_score_max);
    println!("margin = {}", r.margin);
    println!("true_windows = {}", r.true_windows);
    println!("background_windows = {}", r.background_windows);
    println!("compared_positions = {}", r.compared_positions);
}

fn calibrate_cmd(a: CalibrateArgs, s: &Settings) -> Result<()> {
    let trace = io::load_trace(&a.trace)?;
    let ops = load_ops(&a.ops)?;
    let file = io::load_template(&a.template)?;
    let template = subsample_template(&file.template()?, s.calibration.stride)?;
    let result = calibrate(
        &trace,
        &ops,
        &template,
        s.calibration.offsets(),
        &s.calibration.options(),
    );
    let (it, report) = match result {
        Ok(ok) => ok,
        Err(e) => {
            if let wavematch::Error::CalibrationFailed(report) = &e {
                print_report(report);
            }
            return Err(e.into());
        }
    };
    print_report(&report);
    let out = TemplateFile::from_template(&template)
        .with_interval(&it, report.chosen_offset)
        .with_report(report);
    io::save_template(&a.out, &out)?;
    Ok(())
}

fn load_calibrated(path: &Path) -> Result<(Template, IntervalTemplate)> {
    let file = io::load_template(path)?;
    let template = file.template()?;
    let it = file.interval_template()?.ok_or_else(|| {
        invalid(format!(
            "{} has no calibrated interval; run `calibrate` first",
            path.display()
        ))
    })?;
    Ok((template, it))
}

fn engine_config(
    s: &Settings,
    flags: &EngineFlags,
    template: &Template,
) -> wavematch::engine::EngineConfig {
    let mut cfg = s.engine.clone();
    if flags.positional_buffer.is_none() && template.positional_buffer() > 0 {
        cfg.positional_buffer = template.positional_buffer();
    }
    cfg
}

fn match_cmd(a: MatchArgs, s: &Settings) -> Result<()> {
    let trace = io::load_trace(&a.trace)?;
    let (template, it) = load_calibrated(&a.template)?;
    let cfg = engine_config(s, &a.engine, &template);
    cfg.validate()?;
    let raw = batch_match_parallel(&trace, &it);
    let events = apply_holdoff(&raw, it.span(), &cfg);
    io::write_events(&a.events, &events)?;
    println!(
        "{} raw matches, {} events after hold-off",
        raw.len(),
        events.len()
    );
    Ok(())
}

fn simulate(a: SimulateArgs, s: &Settings) -> Result<()> {
    let trace = io::load_trace(&a.trace)?;
    let (template, it) = load_calibrated(&a.template)?;
    let cfg = engine_config(s, &a.engine, &template);
    let run = run_engine(&trace, &it, &cfg)?;
    io::write_events(&a.events, &run.events)?;
    if let Some(path) = &a.trigger {
        io::write_trigger_runs(path, &run.trigger)?;
    }
    if let Some(path) = &a.plot {
        if a.plot_bucket == 0 {
            return Err(invalid("plot bucket must be positive"));
        }
        io::write_plot(path, &trace, Some(&run.trigger), &run.events, a.plot_bucket)?;
    }
    let g = &run.geometry;
    println!(
        "{} events in {} cycles (d = {}, {} stages, output delay {} samples)",
        run.events.len(),
        run.cycles,
        g.parallelism,
        g.stages,
        run.output_delay
    );
    Ok(())
}

fn estimate(a: ResourceArgs, s: &Settings) -> Result<()> {
    let device = s.device.profile()?;
    let style = s.device.adder;
    let d = s.engine.parallelism;
    let e = estimate_luts(a.samples, style, d, &device)?;
    let reserve = s.device.reserve_fraction;
    let max = max_template_length(&device, style, d, reserve)?;
    println!(
        "{} LUTs, {:.0}% of {} ({} LUTs)",
        thousands(e.luts),
        e.utilization_percent(),
        device.name,
        thousands(device.lut_capacity)
    );
    println!(
        "adder style {style}, {} LUTs per compared sample, d = {d}",
        e.comparator_luts_per_sample
    );
    println!(
        "max template length at {:.0}% reserve: {max}",
        reserve * 100.0
    );
    let budget = 1.0 - reserve;
    if a.require_fit && e.utilization_fraction > budget {
        return Err(Exit(
            EXIT_RESOURCE,
            format!(
                "{} compared samples need {:.1}% of {}, above the {:.0}% budget",
                a.samples,
                e.utilization_percent(),
                device.name,
                budget * 100.0
            ),
        )
        .into());
    }
    Ok(())
}

fn bench(a: BenchArgs, s: &Settings) -> Result<()> {
    if a.compared == 0 || a.stride == 0 {
        return Err(invalid("compared positions and stride must be positive"));
    }
    let p = Precision::DEFAULT;
    let n = (a.compared - 1) * a.stride + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let pattern: Vec<Sample> = (0..n).map(|_| rng.random_range(-2000..=2000)).collect();
    let template = Template::new(pattern, p)?.with_stride(a.stride)?;
    let it = make_interval_template(&template, 100)?.with_threshold(a.compared as u32)?;
    let len = a.samples.max(a.engine_samples).max(n);
    let samples: Vec<Sample> = (0..len).map(|_| rng.random_range(-2000..=2000)).collect();
    let trace = Trace::new(samples, p)?;
    let batch_trace = Trace::new(trace.samples()[..a.samples.max(n)].to_vec(), p)?;

    let t0 = Instant::now();
    let found = batch_match(&batch_trace, &it).len();
    let single = batch_trace.len() as f64 / t0.elapsed().as_secs_f64();
    let t0 = Instant::now();
    batch_match_parallel(&batch_trace, &it);
    let parallel = batch_trace.len() as f64 / t0.elapsed().as_secs_f64();
    println!(
        "batch_match: {:.1} M samples/s single-threaded, {:.1} M samples/s parallel with {} threads available ({} samples, m = {}, {found} matches)",
        single / 1e6,
        parallel / 1e6,
        worker_threads(),
        batch_trace.len(),
        a.compared
    );

    let engine_trace = Trace::new(trace.samples()[..a.engine_samples.max(n)].to_vec(), p)?;
    let cfg = engine_config(s, &a.engine, &template);
    let t0 = Instant::now();
    let run = run_engine(&engine_trace, &it, &cfg)?;
    let secs = t0.elapsed().as_secs_f64();
    println!(
        "engine: {} cycles simulated at d = {}, {:.1} M samples/s, {:.2} M cycles/s",
        run.cycles,
        cfg.parallelism,
        engine_trace.len() as f64 / secs / 1e6,
        run.cycles as f64 / secs / 1e6
    );
    Ok(())
}

fn worker_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}
