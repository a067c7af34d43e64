use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use memnet::activation::SigmoidKind;
use memnet::criteria::{build_from_certificate, max_memorizable};
use memnet::dataset::Dataset;
use memnet::error::Error;
use memnet::network::Network;
use memnet::pipeline::{build_sublinear, build_width3, verify, BuildOutcome};
use memnet::scalar::rational::{self, to_fraction_string};
use memnet::separateness::{gaussian_check, measure};
use memnet::serialize;
use memnet::sigmoid_approx::{exact_hardtanh, transform};
use memnet::wide::Wide;
use num_rational::BigRational;
use serde_json::{json, Value};

type Q = BigRational;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "memnet", version, about = "Exact memorizing threshold networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Theorem1,
    Width3,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Sigma {
    Exact,
    HardtanhExact,
    Tanh,
    Logistic,
}

#[derive(Subcommand)]
enum Command {
    /// Exact separateness report of a CSV dataset.
    Separate { data: PathBuf },
    /// Builds a memorizing network and writes it as JSON.
    Build {
        data: PathBuf,
        #[arg(long, value_enum, default_value = "theorem1")]
        mode: Mode,
        /// Width exponent in [2/3, 1].
        #[arg(long, default_value_t = 2.0 / 3.0)]
        w: f64,
        #[arg(long, value_enum, default_value = "exact")]
        sigma: Sigma,
        /// Error budget for the smooth activations.
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Checks a network against a dataset, exit 0 iff every point is within eps.
    Verify {
        net: PathBuf,
        data: PathBuf,
        #[arg(long, default_value = "0")]
        eps: String,
    },
    /// Largest dataset size the sufficient conditions certify for an architecture.
    Capacity {
        /// Comma-separated hidden widths.
        #[arg(long)]
        arch: String,
        /// Separateness ratio of the data.
        #[arg(long)]
        delta: String,
        #[arg(long)]
        dx: usize,
        #[arg(long)]
        classes: usize,
        /// Builds on a generated dataset of the certified size.
        #[arg(long)]
        with_build: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Monte Carlo rate of Gaussian samples within the separateness bound.
    Gaussian {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        dx: usize,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn input(msg: impl Into<String>) -> Self {
        Failure { code: 2, msg: msg.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::DuplicateInput { .. } => 3,
            Error::Verification(_)
            | Error::DirectionSearch(_)
            | Error::CompressionInfeasible(_)
            | Error::InvalidTarget { .. }
            | Error::Certificate(_)
            | Error::ApproxSearch(_)
            | Error::TransformBudget { .. }
            | Error::NumericOverflow { .. } => 1,
            _ => 2,
        };
        Failure { code, msg: e.to_string() }
    }
}

type Outcome = std::result::Result<(Value, bool), Failure>;

fn load_dataset(path: &Path) -> std::result::Result<Dataset, Failure> {
    let file = fs::File::open(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    Ok(Dataset::from_csv(file)?)
}

fn stamp(mut v: Value, command: &str, seed: Option<u64>) -> Value {
    v["command"] = json!(command);
    v["version"] = json!(VERSION);
    if let Some(s) = seed {
        v["seed"] = json!(s);
    }
    v
}

fn cmd_separate(data: &Path) -> Outcome {
    let ds = load_dataset(data)?;
    let rep = measure(&ds)?;
    eprintln!("{} points in {} dimensions, log2 delta {:.4}", ds.len(), ds.dim(), rep.log2_delta);
    Ok((stamp(json!({ "report": rep.to_json() }), "separate", None), true))
}

fn write_net<S: memnet::scalar::Scalar>(net: &Network<S>, path: &Path) -> std::result::Result<(), Failure> {
    let text = serialize::to_string(net)?;
    fs::write(path, text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

#[allow(clippy::too_many_arguments)]
fn cmd_build(data: &Path, mode: Mode, w: f64, sigma: Sigma, eps: f64, seed: u64, output: &Path) -> Outcome {
    if !(2.0 / 3.0 - 1e-12..=1.0).contains(&w) {
        return Err(Failure::input(format!("--w {w} is outside [2/3, 1]")));
    }
    if matches!(sigma, Sigma::Tanh | Sigma::Logistic) && !(eps > 0.0 && eps.is_finite()) {
        return Err(Failure::input(format!("--eps {eps} must be positive")));
    }
    let ds = load_dataset(data)?;
    let stage = |name: &'static str| move |e: Error| Failure { msg: format!("{name} stage: {e}"), ..Failure::from(e) };
    let BuildOutcome { net, report } = match mode {
        Mode::Theorem1 => build_sublinear(&ds, w, seed),
        Mode::Width3 => build_width3(&ds, seed),
    }
    .map_err(stage("construction"))?;
    let mut out = json!({ "build": report, "sigma": sigma.to_possible_value().expect("named").get_name() });
    let check = match sigma {
        Sigma::Exact => {
            write_net(&net, output)?;
            verify(&net, &ds, &Q::from_integer(0.into()))?
        }
        Sigma::HardtanhExact => {
            let s = exact_hardtanh(&net, &ds).map_err(stage("hardtanh"))?;
            write_net(&s.net, output)?;
            verify(&s.net, &ds, &Q::from_integer(0.into()))?
        }
        Sigma::Tanh | Sigma::Logistic => {
            let kind = if sigma == Sigma::Tanh { SigmoidKind::Tanh } else { SigmoidKind::Logistic };
            let s = transform(&net, &ds, eps, kind).map_err(stage("sigmoid transform"))?;
            out["transform"] = serde_json::to_value(s.report(eps)).expect("plain report");
            write_net(&s.net, output)?;
            verify(&s.net, &ds, &rational::parse(&eps.to_string())?)?
        }
    };
    let stats = net.stats();
    eprintln!(
        "{} hidden layers, width {}, {} parameters, max error {:.3e}",
        stats.hidden_layers,
        stats.width,
        stats.param_count,
        check.max_error_f64()
    );
    out["max_error"] = json!(to_fraction_string(&check.max_error));
    out["max_error_f64"] = json!(check.max_error_f64());
    out["pass"] = json!(check.pass);
    out["output"] = json!(output.display().to_string());
    let pass = check.pass;
    Ok((stamp(out, "build", Some(seed)), pass))
}

fn cmd_verify(net_path: &Path, data: &Path, eps: &str) -> Outcome {
    let eps = rational::parse(eps).map_err(|e| Failure::input(format!("--eps: {e}")))?;
    if eps < Q::from_integer(0.into()) {
        return Err(Failure::input("--eps must be nonnegative"));
    }
    let text = fs::read_to_string(net_path).map_err(|e| Failure::input(format!("{}: {e}", net_path.display())))?;
    let value: Value = serde_json::from_str(&text).map_err(Error::from)?;
    let ds = load_dataset(data)?;
    let tags = serialize::activation_tags(&value);
    let exact = tags.iter().all(|t| matches!(t.as_str(), "step" | "id" | "sigma:hard_tanh"));
    let report = if exact {
        verify(&serialize::from_value::<Q>(value)?, &ds, &eps)?
    } else {
        verify(&serialize::from_value::<Wide>(value)?, &ds, &eps)?
    };
    eprintln!("max error {:.3e}, {}", report.max_error_f64(), if report.pass { "pass" } else { "fail" });
    let mut out = report.to_json();
    out["exact"] = json!(exact);
    out["eps"] = json!(to_fraction_string(&eps));
    Ok((stamp(out, "verify", None), report.pass))
}

fn parse_arch(arch: &str) -> std::result::Result<Vec<usize>, Failure> {
    arch.split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|_| Failure::input(format!("bad width '{s}' in --arch"))))
        .collect()
}

/// `n` integer points in `[0, side)^dx` with ratio below `delta`, labels cycling.
fn separated_dataset(n: usize, dx: usize, classes: usize, delta: &Q, seed: u64) -> Option<Dataset> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let delta_sq = delta * delta;
    let mut side = 2u64;
    // largest side whose diameter stays below delta
    while Q::from_integer((dx as u64 * side * side).into()) < delta_sq {
        side += 1;
    }
    let side = side - 1;
    if side < 2 || (side as f64).powi(dx as i32) < n as f64 {
        return None;
    }
    let mut seen = std::collections::HashSet::new();
    while seen.len() < n {
        seen.insert((0..dx).map(|_| rng.gen_range(0..side) as i64).collect::<Vec<_>>());
    }
    let mut points: Vec<Vec<i64>> = seen.into_iter().collect();
    points.sort();
    let labels = (0..n).map(|i| if i < classes { i } else { rng.gen_range(0..classes) }).collect();
    let points = points.into_iter().map(|p| p.into_iter().map(rational::int).collect()).collect();
    Dataset::with_classes(points, labels, classes).ok()
}

fn cmd_capacity(arch: &str, delta: &str, dx: usize, classes: usize, with_build: bool, seed: u64) -> Outcome {
    let arch = parse_arch(arch)?;
    let delta = rational::parse(delta).map_err(|e| Failure::input(format!("--delta: {e}")))?;
    if delta <= Q::from_integer(1.into()) {
        return Err(Failure::input("--delta must exceed 1"));
    }
    if dx == 0 || classes == 0 {
        return Err(Failure::input("--dx and --classes must be positive"));
    }
    let (n_max, cert) = max_memorizable(&arch, &(&delta * &delta), dx, classes)?;
    eprintln!("certified capacity {n_max}");
    let mut out = json!({ "n_max": n_max, "certificate": cert });
    let mut pass = true;
    if with_build {
        let Some(cert) = cert.as_ref() else {
            out["build"] = json!({ "skipped": "no certificate" });
            return Ok((stamp(out, "capacity", Some(seed)), pass));
        };
        match separated_dataset(n_max, dx, classes, &delta, seed) {
            Some(ds) => {
                let net = build_from_certificate(&arch, cert, &ds)?;
                let check = verify(&net, &ds, &Q::from_integer(0.into()))?;
                pass = check.pass && net.hidden_widths() == arch;
                out["build"] = json!({ "n": ds.len(), "pass": pass, "params": net.stats().param_count });
            }
            None => out["build"] = json!({ "skipped": "grid too small for the requested ratio" }),
        }
    }
    Ok((stamp(out, "capacity", Some(seed)), pass))
}

fn cmd_gaussian(n: usize, dx: usize, delta: f64, trials: usize, seed: u64) -> Outcome {
    let rep = gaussian_check(n, dx, delta, trials, seed)?;
    eprintln!("{}/{} trials within {:.4}", rep.successes, rep.trials, rep.bound);
    let out = json!({ "n": n, "dx": dx, "delta": delta, "report": rep });
    Ok((stamp(out, "gaussian", Some(seed)), true))
}

fn init_threads() -> std::result::Result<(), Failure> {
    if let Ok(v) = std::env::var("MEMNET_THREADS") {
        let n: usize = v.parse().map_err(|_| Failure::input(format!("MEMNET_THREADS='{v}' is not a count")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::input(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    init_threads()?;
    match cli.command {
        Command::Separate { data } => cmd_separate(&data),
        Command::Build { data, mode, w, sigma, eps, seed, output } => {
            cmd_build(&data, mode, w, sigma, eps, seed, &output)
        }
        Command::Verify { net, data, eps } => cmd_verify(&net, &data, &eps),
        Command::Capacity { arch, delta, dx, classes, with_build, seed } => {
            cmd_capacity(&arch, &delta, dx, classes, with_build, seed)
        }
        Command::Gaussian { n, dx, delta, trials, seed } => cmd_gaussian(n, dx, delta, trials, seed),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok((report, pass)) => {
            println!("{}", serde_json::to_string_pretty(&report).expect("json value"));
            ExitCode::from(if pass { 0 } else { 1 })
        }
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
