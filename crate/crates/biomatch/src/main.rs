use std::fs;
use std::io::{self, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use biomatch::config;
use biomatch::evaluation::{self, Comparator, FeatureSet, TrialSet};
use biomatch::features::{self, CaptureSource};
use biomatch::keyfile::{self, SensorKey, ServiceKey};
use biomatch::sensor::{self, Outcome};
use biomatch::service::{AttemptLimit, Service};
use biomatch::store::FileStore;
use biomatch::Error;
use biomatch_core::elgamal::keygen;
use biomatch_core::protocol::{SystemConfig, SystemParams, UserId};
use biomatch_core::quantization::{build_table, LookupTable};
use biomatch_core::{GroupId, PrimeGroup, Ristretto255, Secp112r1};
use clap::{Args, Parser, Subcommand};
use rand::{CryptoRng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Seeds the protocol RNG. Read only by debug builds, for reproducible tests.
const SEED_ENV: &str = "BIOMATCH_TEST_SEED";

#[derive(Parser)]
#[command(name = "biomatch", version, about = "Privacy-preserving biometric verification with encrypted templates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a key pair split into service and sensor shares.
    Keygen {
        #[arg(long)]
        config: PathBuf,
        /// Receives public.key, service.key and sensor.key.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Write a configuration file with its score domain filled in.
    Config {
        #[arg(long, default_value = "ristretto255")]
        group: GroupId,
        #[arg(long, default_value_t = 4)]
        bits: u8,
        #[arg(long, default_value_t = 1.0)]
        delta: f64,
        #[command(flatten)]
        features: FeatureArgs,
        #[arg(long, allow_hyphen_values = true)]
        threshold: i64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Enroll a capture with the service.
    Enroll(SessionArgs),
    /// Verify a capture; exit 0 accept, 1 reject, 3 unknown user, 4 locked.
    Verify(SessionArgs),
    /// Run the verification service.
    Serve {
        #[arg(long)]
        listen: String,
        #[arg(long)]
        db_dir: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        keyshare_file: PathBuf,
        /// Verification attempts allowed per user between enrollments; 0 is unlimited.
        #[arg(long, default_value_t = 0)]
        lockout_n: u32,
    },
    /// Build lookup tables, or inspect a table blob.
    Tables {
        #[arg(long, default_value_t = 4)]
        bits: u8,
        #[arg(long, default_value_t = 1.0)]
        delta: f64,
        #[command(flatten)]
        features: FeatureArgs,
        /// Write one QLRT blob per distinct rho instead of printing.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Print the table stored in a QLRT blob.
        #[arg(long, conflicts_with = "out_dir")]
        inspect: Option<PathBuf>,
    },
    /// Accuracy experiment: ROC CSV on a synthetic population.
    Roc {
        #[command(flatten)]
        features: FeatureArgs,
        #[arg(long, default_value_t = 4)]
        bits: u8,
        #[arg(long, default_value_t = 1.0)]
        delta: f64,
        /// Score with the continuous comparator instead of lookup tables.
        #[arg(long)]
        continuous: bool,
        #[arg(long, default_value_t = 200)]
        users: usize,
        #[arg(long, default_value_t = 10)]
        captures: usize,
        #[arg(long, default_value_t = 100_000)]
        impostors: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Timing experiment: compare-round time against compare-set size.
    Bench {
        #[arg(long, default_value = "ristretto255")]
        group: GroupId,
        #[arg(long, value_delimiter = ',', default_values_t = evaluation::BENCH_ALPHAS)]
        alphas: Vec<u64>,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct FeatureArgs {
    /// fs1, fs2 or fs3.
    #[arg(long, conflicts_with = "rho")]
    feature_set: Option<String>,
    /// Comma-separated between-user variances.
    #[arg(long, value_delimiter = ',')]
    rho: Vec<f64>,
}

impl FeatureArgs {
    fn resolve(&self) -> Result<FeatureSet, Error> {
        match &self.feature_set {
            Some(name) => {
                FeatureSet::by_name(name).ok_or_else(|| Error::Config(format!("unknown feature set `{name}`")))
            }
            None if !self.rho.is_empty() => FeatureSet::new("custom", self.rho.clone()),
            None => Err(Error::Config("give --feature-set or --rho".into())),
        }
    }
}

#[derive(Args)]
struct SessionArgs {
    #[arg(long)]
    config: PathBuf,
    /// Sensor key share (any key file works for enrollment).
    #[arg(long)]
    key: PathBuf,
    #[arg(long)]
    connect: String,
    #[arg(long)]
    user: String,
    /// Feature file to read the capture from.
    #[arg(long, conflicts_with = "synthetic_user")]
    features: Option<PathBuf>,
    /// Row of the feature file.
    #[arg(long, default_value_t = 0)]
    row: usize,
    /// Seed of a synthetic user; the capture is drawn from the model.
    #[arg(long)]
    synthetic_user: Option<u64>,
    /// Capture number for a synthetic user.
    #[arg(long, default_value_t = 0)]
    capture: u64,
}

impl SessionArgs {
    fn capture(&self, params: &SystemParams) -> Result<Vec<f64>, Error> {
        let source = match (&self.features, self.synthetic_user) {
            (Some(path), None) => CaptureSource::File { vectors: features::load(path)?, row: self.row },
            (None, Some(seed)) => {
                CaptureSource::Synthetic { rhos: params.config().rhos.clone(), user_seed: seed, capture: self.capture }
            }
            _ => return Err(Error::Config("give --features or --synthetic-user".into())),
        };
        source.capture(params.feature_count())
    }
}

fn protocol_rng() -> Box<dyn CryptoRng> {
    if let Ok(v) = std::env::var(SEED_ENV) {
        if cfg!(debug_assertions) {
            if let Ok(seed) = v.parse() {
                return Box::new(ChaCha20Rng::seed_from_u64(seed));
            }
        } else {
            eprintln!("warning: {SEED_ENV} is ignored in release builds");
        }
    }
    Box::new(rand::rngs::ThreadRng::default())
}

fn write_out(path: Option<&Path>, text: &[u8]) -> Result<(), Error> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => io::stdout().write_all(text)?,
    }
    Ok(())
}

/// Exit code for setup failures: 1 configuration, 2 I/O.
fn failure_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 2,
        _ => 1,
    }
}

fn cmd_keygen<G: PrimeGroup>(out_dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(out_dir)?;
    let mut rng = protocol_rng();
    let km = keygen::<G, _>(&mut *rng);
    fs::write(out_dir.join("public.key"), keyfile::encode_public(&km.public))?;
    let service = ServiceKey { public: km.public, share: km.service };
    keyfile::write_private(&out_dir.join("service.key"), &keyfile::encode_service(&service))?;
    let sensor = SensorKey { public: km.public, share: km.sensor };
    keyfile::write_private(&out_dir.join("sensor.key"), &keyfile::encode_sensor(&sensor))?;
    eprintln!("wrote public.key, service.key and sensor.key to {}", out_dir.display());
    Ok(())
}

fn cmd_enroll<G: PrimeGroup>(args: &SessionArgs, params: &SystemParams) -> Result<(), Error> {
    let public = keyfile::decode_public::<G>(&fs::read(&args.key)?)?;
    let capture = args.capture(params)?;
    let user = UserId::new(args.user.clone())?;
    let mut stream = TcpStream::connect(&args.connect)?;
    let mut rng = protocol_rng();
    sensor::enroll_remote(&mut stream, params, &public, user, &capture, &mut *rng)?;
    println!("enrolled {}", args.user);
    Ok(())
}

fn cmd_verify<G: PrimeGroup>(args: &SessionArgs, params: &SystemParams) -> Result<Outcome, Error> {
    let key = keyfile::decode_sensor::<G>(&fs::read(&args.key)?)?;
    let capture = args.capture(params)?;
    let user = UserId::new(args.user.clone())?;
    let mut stream = TcpStream::connect(&args.connect)?;
    let mut rng = protocol_rng();
    sensor::verify_remote(&mut stream, params, &key, user, capture, &mut *rng)
}

fn cmd_serve<G: PrimeGroup>(
    params: SystemParams,
    listen: &str,
    db_dir: &Path,
    keyshare: &Path,
    lockout_n: u32,
) -> Result<(), Error> {
    let key = keyfile::decode_service::<G>(&fs::read(keyshare)?)?;
    let store = FileStore::<G>::open(db_dir)?;
    let service = Arc::new(Service::new(params, key, store, AttemptLimit::new(Some(lockout_n)))?);
    let listener = TcpListener::bind(listen)?;
    // Printed so callers binding port 0 learn the real address.
    println!("listening on {}", listener.local_addr()?);
    io::stdout().flush()?;
    service.serve(listener)
}

fn print_table(t: &LookupTable) -> String {
    let mut out = format!("# b={} rho={} delta={}\n", t.bits(), t.rho(), t.delta());
    for x in 0..t.size() {
        let row: Vec<String> = t.row(x).iter().map(|s| s.to_string()).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

fn run_roc(
    fs_: &FeatureSet,
    cmp: Comparator,
    users: usize,
    captures: usize,
    impostors: usize,
    seed: u64,
) -> Result<TrialSet, Error> {
    let pop = evaluation::gen_population(fs_, users, captures, seed);
    let plan = evaluation::plan_pairs(&pop, impostors, seed ^ 0x5eed)?;
    evaluation::score_trials(fs_, cmp, &pop, &plan)
}

macro_rules! with_group {
    ($group:expr, $f:ident ( $($arg:expr),* )) => {
        match $group {
            GroupId::Ristretto255 => $f::<Ristretto255>($($arg),*),
            GroupId::Secp112r1 => $f::<Secp112r1>($($arg),*),
        }
    };
}

fn run(cli: Cli) -> Result<u8, (Error, u8)> {
    let setup = |e: Error| {
        let code = failure_code(&e);
        (e, code)
    };
    match cli.command {
        Command::Keygen { config, out_dir } => {
            let file = config::parse(&fs::read_to_string(&config).map_err(|e| setup(e.into()))?).map_err(setup)?;
            with_group!(file.system.group, cmd_keygen(&out_dir)).map_err(setup)?;
            Ok(0)
        }
        Command::Config { group, bits, delta, features, threshold, out } => {
            let fs_ = features.resolve().map_err(setup)?;
            let cfg = SystemConfig { group, bits, delta, rhos: fs_.rhos, threshold };
            let params = SystemParams::new(cfg).map_err(|e| setup(e.into()))?;
            write_out(out.as_deref(), config::render(&params).as_bytes()).map_err(setup)?;
            Ok(0)
        }
        Command::Enroll(args) => {
            let params = config::load(&args.config).map_err(setup)?;
            with_group!(params.config().group, cmd_enroll(&args, &params)).map_err(setup)?;
            Ok(0)
        }
        Command::Verify(args) => {
            let params = config::load(&args.config).map_err(|e| (e, 2))?;
            let outcome = with_group!(params.config().group, cmd_verify(&args, &params)).map_err(|e| (e, 2))?;
            let (word, code) = match outcome {
                Outcome::Accept => ("accept", 0),
                Outcome::Reject => ("reject", 1),
                Outcome::UnknownUser => ("unknown user", 3),
                Outcome::Locked => ("locked", 4),
            };
            println!("{word}");
            Ok(code)
        }
        Command::Serve { listen, db_dir, config, keyshare_file, lockout_n } => {
            env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
            let params = config::load(&config).map_err(setup)?;
            let group = params.config().group;
            with_group!(group, cmd_serve(params, &listen, &db_dir, &keyshare_file, lockout_n)).map_err(setup)?;
            Ok(0)
        }
        Command::Tables { bits, delta, features, out_dir, inspect } => {
            if let Some(path) = inspect {
                let t = LookupTable::from_blob(&fs::read(path).map_err(|e| setup(e.into()))?)
                    .map_err(|e| setup(e.into()))?;
                write_out(None, print_table(&t).as_bytes()).map_err(setup)?;
                return Ok(0);
            }
            let fs_ = features.resolve().map_err(setup)?;
            let mut rhos = fs_.rhos.clone();
            rhos.sort_by(f64::total_cmp);
            rhos.dedup();
            if let Some(dir) = &out_dir {
                fs::create_dir_all(dir).map_err(|e| setup(e.into()))?;
            }
            for rho in rhos {
                let t = build_table(bits, rho, delta).map_err(|e| setup(e.into()))?;
                match &out_dir {
                    Some(dir) => {
                        let path = dir.join(format!("b{bits}-rho{rho}-delta{delta}.qlrt"));
                        fs::write(&path, t.to_blob()).map_err(|e| setup(e.into()))?;
                        eprintln!("wrote {}", path.display());
                    }
                    None => write_out(None, print_table(&t).as_bytes()).map_err(setup)?,
                }
            }
            Ok(0)
        }
        Command::Roc { features, bits, delta, continuous, users, captures, impostors, seed, out } => {
            let fs_ = features.resolve().map_err(setup)?;
            let cmp = if continuous { Comparator::Continuous } else { Comparator::Quantized { bits, delta } };
            let trials = run_roc(&fs_, cmp, users, captures, impostors, seed).map_err(setup)?;
            let e = evaluation::eer(&trials).map_err(setup)?;
            eprintln!(
                "{}: {} genuine, {} impostor pairs; EER {:.4}% at threshold {:.3}",
                fs_.name,
                trials.genuine.len(),
                trials.impostor.len(),
                e.eer * 100.0,
                e.threshold
            );
            let mut csv = Vec::new();
            evaluation::write_roc_csv(&evaluation::roc_points(&trials).map_err(setup)?, &mut csv)
                .map_err(|e| setup(e.into()))?;
            write_out(out.as_deref(), &csv).map_err(setup)?;
            Ok(0)
        }
        Command::Bench { group, alphas, reps, seed, out } => {
            let rows = evaluation::bench_alpha(group, &alphas, reps, seed).map_err(setup)?;
            let xs: Vec<f64> = rows.iter().map(|r| r.alpha as f64).collect();
            let ys: Vec<f64> = rows.iter().map(|r| r.median_ms).collect();
            if rows.len() >= 2 {
                let fit = evaluation::linear_fit(&xs, &ys);
                eprintln!("{group}: {:.4} ms per element, R^2 = {:.5}", fit.slope, fit.r_squared);
            }
            let mut csv = Vec::new();
            evaluation::write_bench_csv(&rows, &mut csv).map_err(|e| setup(e.into()))?;
            write_out(out.as_deref(), &csv).map_err(setup)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err((e, code)) => {
            eprintln!("error: {e}");
            ExitCode::from(code)
        }
    }
}
