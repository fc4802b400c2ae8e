//! Command-line frontend: generate synthetic cohorts, learn tractable
//! models, compile networks to circuit files, and query or analyze them.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 tractability-bound
//! error.

mod report;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use sddbn::data::{
    self, check_meta, demo_cohort_truth, load_csv_with_meta, load_meta, save_meta, SyntheticSpec,
};
use sddbn::encode::encode_bounded;
use sddbn::error::{Error, Result};
use sddbn::learn::{learn, LearnConfig};
use sddbn::model::VariableId;
use sddbn::query::{count_increase_prob, probability, Evidence, GroupSpec};
use sddbn::{BayesianNetwork64, CompiledModel64};

#[derive(Parser)]
#[command(
    name = "sddbn",
    about = "Learn tractable Bayesian networks over binary health records and \
             answer exact counting queries on the compiled circuits",
    long_about = None,
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort (CSV + metadata sidecar + ground truth).
    Gen(GenArgs),
    /// Learn a network from training and validation data.
    Learn(LearnArgs),
    /// Compile a saved network to vtree/sdd/map circuit files.
    Compile(CompileArgs),
    /// Probability or group-count queries against a saved network.
    Query(QueryArgs),
    /// Produce the odds and increment report over both disease groups.
    ///
    /// TSV sections: `# odds` (drug, cardiovascular, musculo_skeletal),
    /// `# denominators` (group, baseline_increase_prob), `# increments`
    /// (group, k1..kK).
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Built-in ground-truth cohort: `cohort20` (4 drugs, 4+4 paired
    /// diseases per group).
    #[arg(long, conflicts_with = "network")]
    preset: Option<String>,
    /// Sample from this network file instead of a preset.
    #[arg(long)]
    network: Option<PathBuf>,
    /// Metadata sidecar for `--network` (copied next to the output).
    #[arg(long)]
    meta: Option<PathBuf>,
    #[arg(long)]
    rows: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output prefix; writes `<out>.csv`, `<out>.meta`, `<out>.truth.bn`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LearnArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    valid: PathBuf,
    #[arg(long)]
    meta: PathBuf,
    /// Output prefix; writes `<out>.bn`, `<out>.vtree`, `<out>.sdd`,
    /// `<out>.map`, `<out>.trace`.
    #[arg(long)]
    out: PathBuf,
    /// Key-value config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Desk-scale preset: 5 restarts, 300 s budget, max size 200000.
    #[arg(long, default_value_t = false)]
    desk_scale: bool,
    /// Comma-separated Dirichlet smoothing grid.
    #[arg(long)]
    alpha_grid: Option<String>,
    #[arg(long)]
    min_split_gain: Option<f64>,
    #[arg(long)]
    max_sdd_size: Option<u64>,
    /// Seconds allowed for one split-adding phase.
    #[arg(long)]
    split_time_limit: Option<u64>,
    #[arg(long)]
    tabu_size: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    /// Total time budget in seconds, shared evenly across restarts.
    #[arg(long)]
    time_budget: Option<u64>,
    /// Size-penalty weight in the split score.
    #[arg(long)]
    kappa: Option<f64>,
    /// Candidates trial-compiled per committed split.
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_rounds: Option<usize>,
    #[arg(long)]
    stall_rounds: Option<usize>,
    /// Also reset trees that test a swapped variable.
    #[arg(long, default_value_t = false)]
    strict_swap_reset: bool,
    /// Parallel restarts.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct CompileArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    max_sdd_size: Option<u64>,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    network: PathBuf,
    /// Target assignment, e.g. `K86_T2=1,N02=0`.
    #[arg(long)]
    target: Option<String>,
    /// Conditioning evidence in the same form.
    #[arg(long)]
    evidence: Option<String>,
    /// Report P(more group diseases in T2 than T1): `K` or `L`.
    #[arg(long, conflicts_with = "target")]
    count_group: Option<String>,
    /// Metadata sidecar, required for `--count-group`.
    #[arg(long)]
    meta: Option<PathBuf>,
    #[arg(long)]
    max_sdd_size: Option<u64>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    meta: PathBuf,
    /// Write the TSV report here; without it the TSV follows the tables on
    /// standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    k_max: usize,
    #[arg(long)]
    max_sdd_size: Option<u64>,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Learn(args) => cmd_learn(args),
        Command::Compile(args) => cmd_compile(args),
        Command::Query(args) => cmd_query(args),
        Command::Analyze(args) => cmd_analyze(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn load_network(path: &Path) -> Result<BayesianNetwork64> {
    let file = File::open(path)
        .map_err(|e| Error::Input(format!("cannot open network {}: {e}", path.display())))?;
    BayesianNetwork64::load(BufReader::new(file))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let (network, metas) = match (&args.preset, &args.network) {
        (Some(name), None) => match name.as_str() {
            "cohort20" => demo_cohort_truth(),
            other => {
                return Err(Error::Input(format!(
                    "unknown preset `{other}` (available: cohort20)"
                )))
            }
        },
        (None, Some(path)) => {
            let network = load_network(path)?;
            let meta_path = args
                .meta
                .clone()
                .ok_or_else(|| Error::Input("--network requires --meta".into()))?;
            let metas = load_meta(BufReader::new(File::open(&meta_path)?))?;
            check_meta(&metas, network.names())?;
            (network, metas)
        }
        _ => {
            return Err(Error::Input(
                "exactly one of --preset or --network is required".into(),
            ))
        }
    };

    let spec = SyntheticSpec {
        network,
        n_rows: args.rows,
        seed: args.seed,
    };
    let dataset = data::generate(&spec);
    dataset.save_csv(create(&with_suffix(&args.out, ".csv"))?)?;
    save_meta(&metas, create(&with_suffix(&args.out, ".meta"))?)?;
    spec.network
        .save(create(&with_suffix(&args.out, ".truth.bn"))?)?;
    println!(
        "generated {} rows over {} variables at {}",
        dataset.n_rows(),
        dataset.n_cols(),
        args.out.display()
    );
    Ok(())
}

fn parse_config_file(path: &Path, config: &mut LearnConfig) -> Result<()> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    for (lineno, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let mut it = t.splitn(2, char::is_whitespace);
        let key = it.next().unwrap();
        let value = it.next().map(str::trim).unwrap_or("");
        let bad = |what: &str| Error::Parse {
            line: lineno + 1,
            message: format!("bad value for {what}: `{value}`"),
        };
        match key {
            "alpha_grid" => {
                config.alpha_grid = value
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad("alpha_grid"))?;
            }
            "min_split_gain" => {
                config.min_split_gain_per_example =
                    value.parse().map_err(|_| bad("min_split_gain"))?
            }
            "max_sdd_size" => {
                config.max_sdd_size = value.parse().map_err(|_| bad("max_sdd_size"))?
            }
            "split_time_limit" => {
                config.split_phase_time_limit =
                    Duration::from_secs(value.parse().map_err(|_| bad("split_time_limit"))?)
            }
            "tabu_size" => config.tabu_size = value.parse().map_err(|_| bad("tabu_size"))?,
            "restarts" => config.restarts = value.parse().map_err(|_| bad("restarts"))?,
            "time_budget" => {
                config.total_time_budget =
                    Duration::from_secs(value.parse().map_err(|_| bad("time_budget"))?)
            }
            "kappa" => config.size_penalty_kappa = value.parse().map_err(|_| bad("kappa"))?,
            "beam" => config.swap_candidate_beam = value.parse().map_err(|_| bad("beam"))?,
            "seed" => config.rng_seed = value.parse().map_err(|_| bad("seed"))?,
            "max_rounds" => {
                config.max_rounds_per_restart = value.parse().map_err(|_| bad("max_rounds"))?
            }
            "stall_rounds" => {
                config.stall_rounds = value.parse().map_err(|_| bad("stall_rounds"))?
            }
            "strict_swap_reset" => {
                config.strict_swap_reset = value.parse().map_err(|_| bad("strict_swap_reset"))?
            }
            "jobs" => config.jobs = value.parse().map_err(|_| bad("jobs"))?,
            other => {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: format!("unknown config key `{other}`"),
                })
            }
        }
    }
    Ok(())
}

fn build_config(args: &LearnArgs) -> Result<LearnConfig> {
    let mut config = if args.desk_scale {
        LearnConfig::desk_scale()
    } else {
        LearnConfig::default()
    };
    if let Some(path) = &args.config {
        parse_config_file(path, &mut config)?;
    }
    if let Some(grid) = &args.alpha_grid {
        config.alpha_grid = grid
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Input(format!("bad --alpha-grid `{grid}`")))?;
    }
    if let Some(v) = args.min_split_gain {
        config.min_split_gain_per_example = v;
    }
    if let Some(v) = args.max_sdd_size {
        config.max_sdd_size = v;
    }
    if let Some(v) = args.split_time_limit {
        config.split_phase_time_limit = Duration::from_secs(v);
    }
    if let Some(v) = args.tabu_size {
        config.tabu_size = v;
    }
    if let Some(v) = args.restarts {
        config.restarts = v;
    }
    if let Some(v) = args.time_budget {
        config.total_time_budget = Duration::from_secs(v);
    }
    if let Some(v) = args.kappa {
        config.size_penalty_kappa = v;
    }
    if let Some(v) = args.beam {
        config.swap_candidate_beam = v;
    }
    if let Some(v) = args.seed {
        config.rng_seed = v;
    }
    if let Some(v) = args.max_rounds {
        config.max_rounds_per_restart = v;
    }
    if let Some(v) = args.stall_rounds {
        config.stall_rounds = v;
    }
    if args.strict_swap_reset {
        config.strict_swap_reset = true;
    }
    if let Some(v) = args.jobs {
        config.jobs = v;
    }
    config.validate()?;
    Ok(config)
}

fn write_model_files(model: &CompiledModel64, prefix: &Path) -> Result<()> {
    model
        .manager
        .vtree()
        .save(create(&with_suffix(prefix, ".vtree"))?)?;
    model
        .manager
        .save_sdd(model.root, create(&with_suffix(prefix, ".sdd"))?)?;
    model.save_encoding_map(create(&with_suffix(prefix, ".map"))?)?;
    Ok(())
}

fn cmd_learn(args: LearnArgs) -> Result<()> {
    let config = build_config(&args)?;
    let (train, train_meta) = load_csv_with_meta(&args.train, &args.meta)?;
    let (valid, _) = load_csv_with_meta(&args.valid, &args.meta)?;
    check_meta(&train_meta, train.names())?;

    let outcome = learn(&train, &valid, &config)?;
    outcome
        .network
        .save(create(&with_suffix(&args.out, ".bn"))?)?;
    write_model_files(&outcome.compiled, &args.out)?;
    outcome
        .trace
        .save(create(&with_suffix(&args.out, ".trace"))?)?;
    println!(
        "learned {} variables, {} splits, circuit size {}, validation ll {}",
        outcome.network.var_count(),
        outcome.network.total_splits(),
        outcome.compiled.size(),
        outcome.validation_ll
    );
    Ok(())
}

fn cmd_compile(args: CompileArgs) -> Result<()> {
    let network = load_network(&args.network)?;
    let model = encode_bounded(&network, args.max_sdd_size)?;
    write_model_files(&model, &args.out)?;
    println!(
        "compiled {} variables to {} elements ({} decision nodes)",
        network.var_count(),
        model.size(),
        model.manager.count_nodes(model.root).unwrap()
    );
    Ok(())
}

fn parse_assignments(network: &BayesianNetwork64, text: &str) -> Result<Evidence> {
    let mut pairs = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (name, value) = part.split_once('=').ok_or_else(|| {
            Error::Input(format!("assignment `{part}` must look like NAME=0 or NAME=1"))
        })?;
        let var = network
            .variable_named(name.trim())
            .or_else(|| {
                name.trim()
                    .parse::<u32>()
                    .ok()
                    .filter(|i| (*i as usize) < network.var_count())
                    .map(VariableId)
            })
            .ok_or_else(|| Error::Input(format!("unknown variable `{name}`")))?;
        let bit = match value.trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::Input(format!(
                    "value `{other}` for {name} must be 0 or 1"
                )))
            }
        };
        pairs.push((var, bit));
    }
    Evidence::new(pairs)
}

fn cmd_query(args: QueryArgs) -> Result<()> {
    let network = load_network(&args.network)?;
    let model = encode_bounded(&network, args.max_sdd_size)?;
    let given = match &args.evidence {
        Some(text) => parse_assignments(&network, text)?,
        None => Evidence::empty(),
    };

    match (&args.target, &args.count_group) {
        (Some(target), None) => {
            let target = parse_assignments(&network, target)?;
            let p = probability(&model, &target, &given)?;
            println!("{p}");
        }
        (None, Some(group)) => {
            let tag = match group.as_str() {
                "K" => sddbn::data::GroupTag::K,
                "L" => sddbn::data::GroupTag::L,
                other => {
                    return Err(Error::Input(format!(
                        "group must be K or L, got `{other}`"
                    )))
                }
            };
            let meta_path = args
                .meta
                .clone()
                .ok_or_else(|| Error::Input("--count-group requires --meta".into()))?;
            let metas = load_meta(BufReader::new(File::open(&meta_path)?))?;
            check_meta(&metas, network.names())?;
            let spec = GroupSpec::from_meta(&metas, tag)?;
            let p = count_increase_prob(&model, &spec, &given)?;
            println!("{p}");
        }
        _ => {
            return Err(Error::Input(
                "exactly one of --target or --count-group is required".into(),
            ))
        }
    }
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    if args.k_max < 1 {
        return Err(Error::Input("--k-max must be at least 1".into()));
    }
    let network = load_network(&args.network)?;
    let metas = load_meta(BufReader::new(File::open(&args.meta)?))?;
    check_meta(&metas, network.names())?;
    let model = encode_bounded(&network, args.max_sdd_size)?;

    let report = report::build_report(&model, &metas, args.k_max)?;
    print!("{}", report.to_human());
    match &args.out {
        Some(path) => {
            let mut f = create(path)?;
            f.write_all(report.to_tsv().as_bytes())?;
            println!("wrote TSV report to {}", path.display());
        }
        None => {
            println!();
            print!("{}", report.to_tsv());
        }
    }
    Ok(())
}
