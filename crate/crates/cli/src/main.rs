//! `epmap` command-line front end.

mod commands;
mod config;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use epmap::census::CensusOptions;
use epmap::tracking::{read_vertices_csv, PathSpec, Shape, TrackOptions};
use epmap::ModelParams;

use commands::{EXIT_CONFIG, EXIT_PARTIAL};
use config::{
    default_max_length, BraidJob, CensusJob, ConfigError, ErgodicityJob, Job, Loaded, MindistJob,
    RunConfig, ToyJob,
};
use manifest::Manifest;

#[derive(Parser, Debug)]
#[command(name = "epmap", version, about = "Exceptional-point maps of a non-hermitian spin chain")]
struct Cli {
    /// TOML config file: model keys at top level, one table per command.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for stochastic steps.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Minimal eigenvalue distance on a grid.
    Mindist(MindistArgs),
    /// Eigenvalue braid along a closed path.
    Braid(BraidArgs),
    /// EP density census, localization and swap orders.
    Census(CensusArgs),
    /// Gap-ratio and eigenstate statistics in the hermitian limit.
    Ergodicity(ErgodicityArgs),
    /// Self-check against the 2x2 model with EPs at +-i.
    Toy(ToyArgs),
    /// Rerun the job recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Args, Debug)]
struct MindistArgs {
    #[arg(long = "L")]
    length: Option<usize>,
    #[arg(long, num_args = 2, allow_negative_numbers = true, value_names = ["MIN", "MAX"])]
    re: Option<Vec<f64>>,
    #[arg(long, num_args = 2, allow_negative_numbers = true, value_names = ["MIN", "MAX"])]
    im: Option<Vec<f64>>,
    /// Grid size as `NRExNIM`.
    #[arg(long)]
    res: Option<String>,
}

#[derive(Args, Debug)]
struct BraidArgs {
    #[arg(long = "L")]
    length: Option<usize>,
    /// `rect re0 re1 im0 im1`, `ellipse cx cy rx ry` or `circle cx cy r`.
    #[arg(long, allow_hyphen_values = true)]
    path: Option<String>,
    /// CSV of `re,im` polygon vertices.
    #[arg(long, conflicts_with = "path")]
    vertices: Option<PathBuf>,
    #[arg(long)]
    base_steps: Option<usize>,
    #[arg(long)]
    max_depth: Option<u32>,
    #[arg(long)]
    safety: Option<f64>,
    /// Use the 2x2 model `[[1, z], [z, -1]]` instead of the chain.
    #[arg(long)]
    toy: bool,
}

#[derive(Args, Debug)]
struct CensusArgs {
    /// One or more chain lengths.
    #[arg(long = "L", num_args = 1..)]
    lengths: Option<Vec<usize>>,
    #[arg(long, num_args = 2, allow_negative_numbers = true)]
    re: Option<Vec<f64>>,
    #[arg(long)]
    im_max: Option<f64>,
    #[arg(long)]
    columns: Option<usize>,
    #[arg(long)]
    split_above: Option<usize>,
    #[arg(long)]
    base_steps: Option<usize>,
    /// Skip EP localization.
    #[arg(long)]
    no_localize: bool,
    #[arg(long)]
    localize_im_max: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    /// Classify localized EPs by swap order.
    #[arg(long)]
    classify: bool,
    /// Loop heights for the swap-order profile.
    #[arg(long, num_args = 1..)]
    heights: Option<Vec<f64>>,
    #[arg(long, num_args = 2)]
    anchor: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
struct ErgodicityArgs {
    #[arg(long = "L")]
    length: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    z: Option<f64>,
    /// Pauli string such as `x4x5`.
    #[arg(long)]
    observable: Option<String>,
    /// Central fraction of levels kept; 1 keeps all.
    #[arg(long)]
    window: Option<f64>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    gue_samples: Option<usize>,
    #[arg(long)]
    gue_dim: Option<usize>,
    /// Also run the Poisson self-test.
    #[arg(long)]
    poisson: bool,
    #[arg(long)]
    poisson_n: Option<usize>,
}

#[derive(Args, Debug)]
struct ToyArgs {
    #[arg(long, num_args = 2, allow_negative_numbers = true)]
    center: Option<Vec<f64>>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    manifest: PathBuf,
    /// Compare output digests with the manifest and fail on a mismatch.
    #[arg(long)]
    check: bool,
}

fn pair(v: &Option<Vec<f64>>) -> Option<[f64; 2]> {
    v.as_ref().map(|v| [v[0], v[1]])
}

fn cli_error(message: impl Into<String>) -> ConfigError {
    ConfigError::new(message)
}

fn parse_res(s: &str) -> Result<[usize; 2], ConfigError> {
    let bad = || cli_error(format!("--res {s:?}: expected NRExNIM, e.g. 100x100"));
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok([a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?])
}

fn check_window(loaded: &Loaded, key: &str, w: [f64; 2], name: &str) -> Result<(), ConfigError> {
    if w.iter().all(|v| v.is_finite()) && w[0] < w[1] {
        Ok(())
    } else {
        Err(loaded.error_at(key, format!("{name} window {w:?} must be finite and increasing")))
    }
}

fn model_for(loaded: &Loaded, length: Option<usize>, max_length: usize) -> Result<ModelParams, ConfigError> {
    let m = loaded.model(length);
    loaded.check_model(&m, max_length)?;
    Ok(m)
}

/// Merges command-line flags over the config file and validates the result.
fn resolve(cli: &Cli, loaded: &Loaded) -> Result<RunConfig, ConfigError> {
    let max_length = default_max_length(loaded);
    let c = &loaded.config;
    let job = match &cli.command {
        Command::Mindist(a) => {
            let s = &c.mindist;
            let model = model_for(loaded, a.length, max_length)?;
            let re = pair(&a.re).or(s.re).unwrap_or([0.0, 1.0]);
            let im = pair(&a.im).or(s.im).unwrap_or([-0.5, 0.5]);
            check_window(loaded, "re", re, "Re")?;
            check_window(loaded, "im", im, "Im")?;
            let res = match &a.res {
                Some(r) => parse_res(r)?,
                None => s.res.unwrap_or([100, 100]),
            };
            if res.iter().any(|&n| n < 2) {
                return Err(loaded.error_at("res", format!("resolution {res:?} must be at least 2x2")));
            }
            Job::Mindist(MindistJob { model, re, im, res })
        }
        Command::Braid(a) => {
            let s = &c.braid;
            let toy = a.toy || s.toy.unwrap_or(false);
            let model = if toy { None } else { Some(model_for(loaded, a.length, max_length)?) };
            let steps = a.base_steps.or(s.base_steps).unwrap_or(32);
            let shape = if let Some(v) = a.vertices.as_ref().or(s.vertices.as_ref()) {
                let text = std::fs::read_to_string(v)
                    .map_err(|e| loaded.error_at("vertices", format!("{}: {e}", v.display())))?;
                let vertices = read_vertices_csv(&text)
                    .map_err(|e| loaded.error_at("vertices", format!("{}: {e}", v.display())))?;
                Shape::Polyline { vertices, closed: true }
            } else {
                let p = a
                    .path
                    .as_ref()
                    .or(s.path.as_ref())
                    .ok_or_else(|| cli_error("braid needs --path or --vertices (or [braid] path)"))?;
                p.parse::<Shape>().map_err(|e| loaded.error_at("path", e.to_string()))?
            };
            let path = PathSpec::new(shape, steps);
            path.validate().map_err(|e| loaded.error_at("path", e.to_string()))?;
            let safety = a.safety.or(s.safety).unwrap_or(TrackOptions::default().safety);
            if !(safety > 0.0 && safety < 1.0) {
                return Err(loaded.error_at("safety", format!("safety {safety} must lie in (0, 1)")));
            }
            Job::Braid(BraidJob {
                model,
                path,
                max_depth: a.max_depth.or(s.max_depth).unwrap_or(TrackOptions::default().max_depth),
                safety,
            })
        }
        Command::Census(a) => {
            let s = &c.census;
            let lengths = a
                .lengths
                .clone()
                .or_else(|| s.lengths.clone())
                .unwrap_or_else(|| vec![c.length.unwrap_or(4)]);
            if lengths.is_empty() {
                return Err(loaded.error_at("lengths", "no chain lengths given"));
            }
            let model = model_for(loaded, Some(lengths[0]), max_length)?;
            for &l in &lengths {
                model
                    .clone()
                    .with_length(l)
                    .validate(max_length)
                    .map_err(|e| loaded.error_at("lengths", e.to_string()))?;
            }
            let re = pair(&a.re).or(s.re).unwrap_or([0.4, 0.6]);
            check_window(loaded, "re", re, "Re")?;
            let im_max = a.im_max.or(s.im_max);
            if im_max.is_some_and(|v| !(v > 0.0 && v.is_finite())) {
                return Err(loaded.error_at("im_max", "im_max must be positive"));
            }
            let tol = a.tol.or(s.tol).unwrap_or(1e-4);
            if !(tol > 0.0) {
                return Err(loaded.error_at("tol", "tol must be positive"));
            }
            let heights = a
                .heights
                .clone()
                .or_else(|| s.heights.clone())
                .unwrap_or_else(|| vec![0.05, 0.1, 0.2, 0.4, 0.8]);
            if heights.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
                return Err(loaded.error_at("heights", "heights must be positive"));
            }
            let anchor = pair(&a.anchor).or(s.anchor).unwrap_or([0.49, 0.51]);
            check_window(loaded, "anchor", anchor, "anchor")?;
            let defaults = CensusOptions::default();
            let columns = a.columns.or(s.columns);
            if columns == Some(0) {
                return Err(loaded.error_at("columns", "columns must be at least 1"));
            }
            Job::Census(CensusJob {
                model,
                lengths,
                re,
                im_max,
                columns,
                split_above: a.split_above.or(s.split_above).unwrap_or(defaults.split_above),
                base_steps: a.base_steps.or(s.base_steps).unwrap_or(defaults.base_steps),
                localize: !a.no_localize && s.localize.unwrap_or(true),
                localize_im_max: a.localize_im_max.or(s.localize_im_max),
                tol,
                classify: a.classify || s.classify.unwrap_or(false),
                heights,
                anchor,
            })
        }
        Command::Ergodicity(a) => {
            let s = &c.ergodicity;
            let model = model_for(loaded, a.length, max_length)?;
            let z = a.z.or(s.z).unwrap_or(0.5);
            if !z.is_finite() {
                return Err(loaded.error_at("z", "z must be finite"));
            }
            let window = a.window.or(s.window).unwrap_or(0.5);
            if !(window > 0.0 && window <= 1.0) {
                return Err(loaded.error_at("window", format!("window {window} not in (0, 1]")));
            }
            let observable = a.observable.clone().or_else(|| s.observable.clone());
            if let Some(o) = &observable {
                let p: epmap::PauliString =
                    o.parse().map_err(|e: epmap::Error| loaded.error_at("observable", e.to_string()))?;
                if p.factors.iter().any(|(site, _)| *site == 0 || *site > model.length) {
                    return Err(loaded.error_at("observable", format!("{o} acts outside sites 1..={}", model.length)));
                }
            }
            let dim = model.dimension();
            Job::Ergodicity(ErgodicityJob {
                z,
                observable,
                window,
                bins: a.bins.or(s.bins).unwrap_or(50).max(1),
                gue_samples: a.gue_samples.or(s.gue_samples).unwrap_or(100),
                gue_dim: a.gue_dim.or(s.gue_dim).unwrap_or(dim.min(1024)).max(3),
                poisson: a.poisson || s.poisson.unwrap_or(false),
                poisson_n: a.poisson_n.or(s.poisson_n).unwrap_or(100_000).max(3),
                model,
            })
        }
        Command::Toy(a) => {
            let center = pair(&a.center).unwrap_or([0.0, 1.0]);
            let radius = a.radius.unwrap_or(0.3);
            if !(radius > 0.0) || center[1].abs() <= radius {
                return Err(cli_error("toy loop must have positive radius and stay off the real axis"));
            }
            Job::Toy(ToyJob {
                center,
                radius,
                tol: a.tol.unwrap_or(1e-6),
            })
        }
        Command::Replay(_) => unreachable!("replay is handled before resolution"),
    };
    let threads = cli.threads.or(c.threads).unwrap_or_else(default_threads);
    if threads == 0 {
        return Err(loaded.error_at("threads", "threads must be at least 1"));
    }
    Ok(RunConfig {
        job,
        threads,
        seed: cli.seed.or(c.seed).unwrap_or(0),
        max_length,
    })
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Runs a resolved job and writes its outputs plus manifest into `out`.
fn execute(config: &RunConfig, out: &Path) -> anyhow::Result<(Manifest, Vec<String>)> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(config.threads).build()?;
    let outcome = pool.install(|| commands::run(config))?;
    let mut outputs = std::collections::BTreeMap::new();
    for (name, bytes) in &outcome.files {
        let path = out.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, bytes)?;
        outputs.insert(name.clone(), manifest::sha256_hex(bytes));
    }
    let m = Manifest {
        program: "epmap".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        outputs,
        summary: outcome.summary,
        exit_code: outcome.exit_code,
    };
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join(manifest::FILE_NAME), m.to_bytes())?;
    Ok((m, outcome.report))
}

fn real_main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let loaded = match &cli.config {
        Some(p) => match Loaded::read(p) {
            Ok(l) => l,
            Err(e) => {
                eprintln!("config error: {e}");
                return EXIT_CONFIG;
            }
        },
        None => Loaded::default(),
    };
    let out = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("out"));

    let (config, expected) = if let Command::Replay(r) = &cli.command {
        match Manifest::read(&r.manifest) {
            Ok(mut m) => {
                if let Some(t) = cli.threads {
                    m.config.threads = t;
                }
                let expected = r.check.then_some(m.outputs);
                (m.config, expected)
            }
            Err(e) => {
                eprintln!("config error: {}: {e}", r.manifest.display());
                return EXIT_CONFIG;
            }
        }
    } else {
        match resolve(&cli, &loaded) {
            Ok(c) => (c, None),
            Err(e) => {
                eprintln!("config error: {e}");
                return EXIT_CONFIG;
            }
        }
    };
    log::info!("running {} with {} threads", config.job.name(), config.threads);
    match execute(&config, &out) {
        Ok((manifest, report)) => {
            for line in report {
                println!("{line}");
            }
            if let Some(want) = expected {
                if want != manifest.outputs {
                    eprintln!("replay outputs differ from the manifest");
                    return EXIT_PARTIAL;
                }
                println!("replay matches manifest");
            }
            manifest.exit_code
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_PARTIAL
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    ExitCode::from(real_main() as u8)
}
