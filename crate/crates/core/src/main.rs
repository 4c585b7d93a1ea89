use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use entrate::bench::{emit_report, parse_grid, run_bench, BenchConfig, Grid, ReportFormat};
use entrate::corpus::{
    bootstrap_estimate, build_kgram, subsample_curve, tokenize, CorpusReport, TokenizeConfig,
};
use entrate::dist::Unit;
use entrate::entropy::{EntropyEstimator, PolyEstimatorParams};
use entrate::markov::io::{load_matrix, write_matrix, MatrixFormat};
use entrate::markov::{
    entropy_rate_exact, generate, is_reversible, spectral_info, stationary, ChainFamily,
    REVERSIBILITY_TOL,
};
use entrate::rate::{conditional_rate, empirical_rate, lz_rate, MatchPolicy, RateEstimate};
use entrate::sim::{read_path, sample_path, sample_path_rowwise, write_path};

#[derive(Parser)]
#[command(
    name = "entrate",
    version,
    about = "Entropy-rate estimation for finite-state Markov chains"
)]
struct Cli {
    /// Master seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output unit (default: nats, bits for corpus commands).
    #[arg(long, global = true)]
    unit: Option<UnitArg>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum UnitArg {
    Nats,
    Bits,
}

impl From<UnitArg> for Unit {
    fn from(u: UnitArg) -> Self {
        match u {
            UnitArg::Nats => Unit::Nats,
            UnitArg::Bits => Unit::Bits,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a transition matrix from a chain family.
    Gen {
        /// zipf, geometric, memoryless or uniform_spectrum[:gamma]
        #[arg(long)]
        family: String,
        #[arg(long)]
        states: usize,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stationary distribution, spectrum and exact entropy rate of a matrix.
    Info {
        #[arg(long)]
        matrix: PathBuf,
    },
    /// Simulate a stationary sample path with n transitions.
    Simulate {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        n: usize,
        /// Use the per-row pre-drawn construction.
        #[arg(long)]
        rowwise: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the entropy rate of a sample path.
    Estimate {
        #[arg(long)]
        path: PathBuf,
        #[arg(long)]
        states: usize,
        #[arg(long, value_enum, default_value = "opt")]
        estimator: RateArg,
        #[command(flatten)]
        poly: PolyArgs,
    },
    /// Monte Carlo RMSE benchmark.
    Bench(BenchArgs),
    /// Conditional entropy of word sequences.
    Corpus {
        #[command(subcommand)]
        command: CorpusCommand,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum RateArg {
    Emp,
    Opt,
    Mm,
    Lz,
}

#[derive(Args)]
struct PolyArgs {
    #[arg(long, default_value_t = PolyEstimatorParams::default().c0)]
    c0: f64,
    #[arg(long, default_value_t = PolyEstimatorParams::default().c1)]
    c1: f64,
    #[arg(long, default_value_t = PolyEstimatorParams::default().c2)]
    c2: f64,
}

impl PolyArgs {
    fn params(&self) -> anyhow::Result<PolyEstimatorParams> {
        let p = PolyEstimatorParams {
            c0: self.c0,
            c1: self.c1,
            c2: self.c2,
            ..PolyEstimatorParams::default()
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Args)]
struct BenchArgs {
    /// TOML or JSON file with the benchmark configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    states: Option<usize>,
    /// Comma-separated family specs.
    #[arg(long, value_delimiter = ',')]
    families: Option<Vec<String>>,
    /// `lo:hi:count` or a comma-separated list.
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated subset of emp, opt, mm, lz.
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<String>>,
    /// Add rows with the uniform bias bound of the empirical rate.
    #[arg(long)]
    overlay_thm2: bool,
    #[arg(long)]
    lz_max_n: Option<usize>,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum EntropyArg {
    Plugin,
    Poly,
    Mm,
}

#[derive(Args)]
struct CorpusArgs {
    /// Whitespace-tokenized UTF-8 text.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, value_enum, default_value = "poly")]
    estimator: EntropyArg,
    #[arg(long)]
    lowercase: bool,
    #[command(flatten)]
    poly: PolyArgs,
}

#[derive(Subcommand)]
enum CorpusCommand {
    /// Conditional entropy of the next word given the previous k-1.
    Entropy(CorpusArgs),
    /// Estimates on random subsets of k-gram instances.
    Curve {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Comma-separated subset sizes (in k-gram instances).
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long, value_enum, default_value = "json")]
        format: FormatArg,
    },
    /// Bootstrap spread over resampled k-gram instances.
    Bootstrap {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, default_value_t = 100)]
        replicates: usize,
    },
}

fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn print_json<T: Serialize>(value: &T, out: &mut dyn Write) -> anyhow::Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct EstimateRecord {
    estimator: String,
    value: f64,
    unit: Unit,
    n: usize,
    #[serde(rename = "S")]
    states: usize,
    diagnostics: entrate::rate::Diagnostics,
}

fn convert(mut e: RateEstimate, unit: Unit) -> RateEstimate {
    e.value = unit.from_nats(e.value);
    e.diagnostics
        .per_state
        .iter_mut()
        .for_each(|v| *v = unit.from_nats(*v));
    e.diagnostics.joint_form = e.diagnostics.joint_form.map(|v| unit.from_nats(v));
    e.unit = unit;
    e
}

#[derive(Serialize)]
struct MatrixInfo {
    #[serde(rename = "S")]
    states: usize,
    stationary: Vec<f64>,
    reversible: bool,
    spectral: Option<entrate::markov::SpectralInfo>,
    entropy_rate: f64,
    unit: Unit,
}

fn corpus_estimator(args: &CorpusArgs) -> anyhow::Result<EntropyEstimator> {
    Ok(match args.estimator {
        EntropyArg::Plugin => EntropyEstimator::Plugin,
        EntropyArg::Mm => EntropyEstimator::MillerMadow,
        EntropyArg::Poly => EntropyEstimator::Poly(args.poly.params()?),
    })
}

fn load_corpus(args: &CorpusArgs) -> anyhow::Result<entrate::corpus::KGramModel> {
    let bytes =
        std::fs::read(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let stream = tokenize(
        &bytes,
        TokenizeConfig {
            lowercase: args.lowercase,
        },
    )?;
    Ok(build_kgram(&stream, args.k)?)
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let seed = cli.seed.unwrap_or(0);
    let unit: Unit = cli.unit.map(Unit::from).unwrap_or_default();

    match cli.command {
        Command::Gen {
            family,
            states,
            format,
            out,
        } => {
            let family: ChainFamily = family.parse()?;
            let t = generate(family, states, seed)?;
            let format = match format {
                FormatArg::Csv => MatrixFormat::Csv,
                FormatArg::Json => MatrixFormat::Json,
            };
            let mut w = output(out.as_deref())?;
            write_matrix(&t, format, &mut w)?;
            w.flush()?;
        }
        Command::Info { matrix } => {
            let t = load_matrix(&matrix)?;
            let pi = stationary(&t)?;
            let reversible = is_reversible(&t, pi.as_slice(), REVERSIBILITY_TOL);
            let spectral = if reversible {
                spectral_info(&t, &pi).ok()
            } else {
                None
            };
            let info = MatrixInfo {
                states: t.states(),
                stationary: pi.as_slice().to_vec(),
                reversible,
                spectral,
                entropy_rate: unit.from_nats(entropy_rate_exact(&t, &pi)),
                unit,
            };
            print_json(&info, &mut *output(None)?)?;
        }
        Command::Simulate {
            matrix,
            n,
            rowwise,
            out,
        } => {
            if n < 1 {
                bail!("n must be at least 1");
            }
            let t = load_matrix(&matrix)?;
            let pi = stationary(&t)?;
            let path = if rowwise {
                sample_path_rowwise(&t, &pi, n, seed)?
            } else {
                sample_path(&t, &pi, n, seed)?
            };
            let mut w = output(out.as_deref())?;
            write_path(&path, &mut w)?;
            w.flush()?;
        }
        Command::Estimate {
            path,
            states,
            estimator,
            poly,
        } => {
            let file = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
            let p = read_path(BufReader::new(file), states)?;
            let estimate = match estimator {
                RateArg::Emp => empirical_rate(&p)?,
                RateArg::Opt => conditional_rate(&p, &EntropyEstimator::Poly(poly.params()?))?,
                RateArg::Mm => conditional_rate(&p, &EntropyEstimator::MillerMadow)?,
                RateArg::Lz => lz_rate(&p, MatchPolicy::Centered)?,
            };
            let e = convert(estimate, unit);
            let record = EstimateRecord {
                estimator: e.estimator,
                value: e.value,
                unit: e.unit,
                n: p.transitions(),
                states,
                diagnostics: e.diagnostics,
            };
            print_json(&record, &mut *output(None)?)?;
        }
        Command::Bench(args) => {
            let mut config = match &args.config {
                Some(path) => BenchConfig::load(path)?,
                None => BenchConfig {
                    states: args.states.context("--states or --config is required")?,
                    families: args
                        .families
                        .clone()
                        .context("--families or --config is required")?,
                    n: Grid::List(parse_grid(
                        args.n.as_deref().context("--n or --config is required")?,
                    )?),
                    trials: 10,
                    estimators: vec!["emp".into(), "opt".into()],
                    seed: 0,
                    output: None,
                    unit: Unit::Nats,
                    overlay_thm2: false,
                    lz_max_n: 100_000,
                    poly: PolyEstimatorParams::default(),
                },
            };
            if let Some(s) = args.states {
                config.states = s;
            }
            if let Some(f) = args.families {
                config.families = f;
            }
            if let Some(n) = args.n {
                config.n = Grid::Spec(n);
            }
            if let Some(t) = args.trials {
                config.trials = t;
            }
            if let Some(e) = args.estimators {
                config.estimators = e;
            }
            if let Some(m) = args.lz_max_n {
                config.lz_max_n = m;
            }
            if let Some(s) = cli.seed {
                config.seed = s;
            }
            if let Some(u) = cli.unit {
                config.unit = u.into();
            }
            config.overlay_thm2 |= args.overlay_thm2;
            if args.out.is_some() {
                config.output = args.out;
            }
            let rows = run_bench(&config)?;
            let format = match args.format {
                FormatArg::Csv => ReportFormat::Csv,
                FormatArg::Json => ReportFormat::Json,
            };
            let mut w = output(config.output.as_deref())?;
            emit_report(&rows, format, &mut w)?;
            w.flush()?;
            let failed = rows.iter().filter(|r| r.error.is_some()).count();
            if failed > 0 {
                eprintln!("{failed} benchmark cells failed");
                return Ok(ExitCode::from(2));
            }
        }
        Command::Corpus { command } => {
            let unit = cli.unit.map(Unit::from).unwrap_or(Unit::Bits);
            match command {
                CorpusCommand::Entropy(args) => {
                    let model = load_corpus(&args)?;
                    let report = CorpusReport::new(&model, &corpus_estimator(&args)?, unit)?;
                    print_json(&report, &mut *output(None)?)?;
                }
                CorpusCommand::Curve {
                    corpus,
                    sizes,
                    format,
                } => {
                    let model = load_corpus(&corpus)?;
                    let estimator = corpus_estimator(&corpus)?;
                    let curve = subsample_curve(&model, &sizes, &estimator, seed, unit)?;
                    let mut w = output(None)?;
                    match format {
                        FormatArg::Csv => {
                            writeln!(w, "size,estimate_{}", unit.as_str())?;
                            for p in &curve {
                                writeln!(w, "{},{}", p.size, p.estimate)?;
                            }
                            w.flush()?;
                        }
                        FormatArg::Json => {
                            let mut report = CorpusReport::new(&model, &estimator, unit)?;
                            report.curve = Some(curve);
                            print_json(&report, &mut *w)?;
                        }
                    }
                }
                CorpusCommand::Bootstrap { corpus, replicates } => {
                    let model = load_corpus(&corpus)?;
                    let estimator = corpus_estimator(&corpus)?;
                    let mut report = CorpusReport::new(&model, &estimator, unit)?;
                    report.bootstrap = Some(bootstrap_estimate(
                        &model, replicates, &estimator, seed, unit,
                    )?);
                    print_json(&report, &mut *output(None)?)?;
                }
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
