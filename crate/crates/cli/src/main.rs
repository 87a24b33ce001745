use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rewardgap::dataset::{corrupt_dataset, generate_dataset, read_csv, write_csv};
use rewardgap::harness::{
    hash64, probability_histogram, run_arch_sweep, run_graph_spectrum, run_noise_sweep, write_histogram_csv,
    write_results_header, write_spectrum_csv, ResultRow, SweepConfig,
};
use rewardgap::margin::{fit_margin_exponent, log_grid, margin_cdf, MarginKind};
use rewardgap::network::MlpArchitecture;
use rewardgap::reward_env::sample_states;
use rewardgap::training::train_mle;
use rewardgap::{ComparisonModel, Design, GroundTruthReward, ModelKind, RewardFamily};

#[derive(Parser)]
#[command(name = "rewardgap", version, about = "Reward modeling from pairwise comparisons with deep ReLU networks")]
struct Cli {
    /// JSON sweep configuration (field names as in SweepConfig).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Worker threads for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Overrides the base seed of the config and the default seed of subcommands.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a hidden reward and write a comparison dataset as CSV.
    GenData(GenDataArgs),
    /// Fit a reward network by maximum likelihood.
    Train(TrainArgs),
    /// Width x depth sweep on clean data.
    ArchSweep(SweepArgs),
    /// Label-noise sweep at a fixed architecture.
    NoiseSweep(SweepArgs),
    /// Margin CDFs of the hidden reward and their power-law fits.
    DiagnoseMargin(MarginArgs),
    /// Spectral gap of standard comparison designs.
    GraphSpectrum(SpectrumArgs),
    /// Histogram of the recorded win probabilities of a dataset.
    ExportHist(HistArgs),
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long, default_value = "sinusoidal")]
    reward_family: RewardFamily,
    #[arg(long, default_value = "bt")]
    model: ModelKind,
    #[arg(long)]
    tie_param: Option<f64>,
    #[arg(long, default_value_t = 10)]
    d: usize,
    #[arg(long, default_value_t = 4096)]
    n: usize,
    #[arg(long, default_value_t = 0.0)]
    noise_level: f64,
    #[arg(long, default_value = "data.csv")]
    out: PathBuf,
    /// Size of an optional second split from the same hidden reward.
    #[arg(long, requires = "eval_out")]
    eval_n: Option<usize>,
    #[arg(long, requires = "eval_n")]
    eval_out: Option<PathBuf>,
    /// Also write the sampled weights as JSON.
    #[arg(long)]
    truth_out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    eval_data: PathBuf,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 4)]
    depth: usize,
    #[arg(long, default_value = "bt")]
    model: ModelKind,
    #[arg(long)]
    tie_param: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    out_checkpoint: Option<PathBuf>,
    #[arg(long)]
    history_csv: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Result file name inside the output directory; rows are appended.
    #[arg(long)]
    out_csv: Option<PathBuf>,
    #[arg(long)]
    replications: Option<usize>,
}

#[derive(Args)]
struct MarginArgs {
    #[arg(long, default_value = "sinusoidal")]
    reward_family: RewardFamily,
    #[arg(long, default_value = "bt")]
    model: ModelKind,
    #[arg(long)]
    tie_param: Option<f64>,
    #[arg(long, default_value_t = 10)]
    d: usize,
    #[arg(long, default_value_t = 100_000)]
    n_states: usize,
    #[arg(long, default_value_t = 0.01)]
    t_min: f64,
    #[arg(long, default_value_t = 0.2)]
    t_max: f64,
    #[arg(long, default_value_t = 30)]
    t_points: usize,
    #[arg(long, default_value = "margin.csv")]
    out_csv: PathBuf,
}

#[derive(Args)]
struct SpectrumArgs {
    #[arg(long, value_delimiter = ',', default_value = "complete,star,path,cycle")]
    designs: Vec<Design>,
    #[arg(long, value_delimiter = ',', default_value = "2,3,4,5,6,8,10,12,16")]
    actions: Vec<usize>,
    /// Total comparisons spread over each design's edges.
    #[arg(long, default_value_t = 1200)]
    n_comparisons: u64,
    #[arg(long, default_value = "spectrum.csv")]
    out_csv: PathBuf,
}

#[derive(Args)]
struct HistArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "bt")]
    model: ModelKind,
    #[arg(long, default_value_t = 20)]
    bins: usize,
    #[arg(long, default_value = "hist.csv")]
    out_csv: PathBuf,
}

fn model_for(kind: ModelKind, tie: Option<f64>) -> Result<ComparisonModel> {
    Ok(match tie {
        Some(t) => ComparisonModel::new(kind, t)?,
        None => ComparisonModel::with_default_ties(kind),
    })
}

fn load_config(cli: &Cli) -> Result<SweepConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            SweepConfig::from_json(&text)?
        }
        None => SweepConfig::desk(),
    };
    if let Some(seed) = cli.seed {
        cfg.base_seed = seed;
    }
    Ok(cfg)
}

fn out_path(cli: &Cli, name: &Path) -> Result<PathBuf> {
    fs::create_dir_all(&cli.out_dir).with_context(|| format!("creating {}", cli.out_dir.display()))?;
    Ok(cli.out_dir.join(name))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn load_dataset(path: &Path, kind: ModelKind) -> Result<rewardgap::ComparisonDataset> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_csv(BufReader::new(f), kind)?)
}

fn gen_data(cli: &Cli, args: &GenDataArgs) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    let model = model_for(args.model, args.tie_param)?;
    let mut rng = ChaCha8Rng::seed_from_u64(hash64(seed, &[0]));
    let truth = GroundTruthReward::sample(args.reward_family, args.d, &mut rng);
    let clean = generate_dataset(&truth, &model, args.n, hash64(seed, &[1]))?;
    let ds = corrupt_dataset(&clean, args.noise_level, hash64(seed, &[2]))?;
    let path = out_path(cli, &args.out)?;
    let mut w = create(&path)?;
    write_csv(&ds, &mut w)?;
    w.flush()?;
    if let (Some(n), Some(p)) = (args.eval_n, &args.eval_out) {
        let clean = generate_dataset(&truth, &model, n, hash64(seed, &[3]))?;
        let ds = corrupt_dataset(&clean, args.noise_level, hash64(seed, &[4]))?;
        let mut w = create(&out_path(cli, p)?)?;
        write_csv(&ds, &mut w)?;
        w.flush()?;
    }
    if let Some(t) = &args.truth_out {
        let tp = out_path(cli, t)?;
        fs::write(&tp, serde_json::to_string_pretty(&truth)?)?;
    }
    println!("wrote {} samples to {}", ds.len(), path.display());
    Ok(())
}

fn train(cli: &Cli, args: &TrainArgs) -> Result<()> {
    let mut cfg = load_config(cli)?.training;
    cfg.seed = cli.seed.unwrap_or(cfg.seed);
    if let Some(b) = args.batch_size {
        cfg.batch_size = b;
    }
    if let Some(lr) = args.lr {
        cfg.learning_rate = lr;
    }
    if let Some(e) = args.max_epochs {
        cfg.max_epochs = e;
    }
    if let Some(p) = args.patience {
        cfg.early_stop_patience = p;
    }
    let model = model_for(args.model, args.tie_param)?;
    let train = load_dataset(&args.data, args.model)?;
    let eval = load_dataset(&args.eval_data, args.model)?;
    if train.d != eval.d {
        bail!("train data has d = {} but eval data has d = {}", train.d, eval.d);
    }
    let arch = MlpArchitecture::rectangular(train.d, args.width, args.depth, train.action_count);
    let (params, history) = train_mle(&train, &eval, &arch, &model, &cfg)?;
    if let Some(p) = &args.out_checkpoint {
        let path = out_path(cli, p)?;
        let mut w = create(&path)?;
        params.write_checkpoint(&mut w)?;
        w.flush()?;
    }
    if let Some(p) = &args.history_csv {
        fs::write(out_path(cli, p)?, history.to_csv())?;
    }
    println!(
        "epochs={} best_epoch={} initial_eval_nll={:.6} best_eval_nll={:.6} wall={:.2}s",
        history.epochs_run(),
        history.best_epoch + 1,
        history.initial_eval_nll,
        history.best_eval_nll(),
        history.wall_time_seconds
    );
    Ok(())
}

fn open_results(path: &Path) -> Result<File> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    if fresh {
        write_results_header(&mut f)?;
    }
    Ok(f)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.retain(|x| x.is_finite());
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn summarise(rows: &[ResultRow]) {
    let mut keys: Vec<(usize, usize, u64)> = Vec::new();
    for r in rows {
        let k = (r.width, r.depth, r.noise_level.to_bits());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    println!("width,depth,noise_level,median_regret,failures");
    for (w, d, m) in keys {
        let cell: Vec<&ResultRow> =
            rows.iter().filter(|r| r.width == w && r.depth == d && r.noise_level.to_bits() == m).collect();
        let failures = cell.iter().filter(|r| r.is_failure()).count();
        println!("{w},{d},{},{:.6},{failures}", f64::from_bits(m), median(cell.iter().map(|r| r.regret).collect()));
    }
}

fn sweep(cli: &Cli, args: &SweepArgs, noise: bool) -> Result<()> {
    let mut cfg = load_config(cli)?;
    if let Some(r) = args.replications {
        cfg.replications = r;
    }
    cfg.validate()?;
    let default_name = if noise { "noise_sweep.csv" } else { "arch_sweep.csv" };
    let path = out_path(cli, args.out_csv.as_deref().unwrap_or(Path::new(default_name)))?;
    let mut file = open_results(&path)?;
    let rows = if noise {
        run_noise_sweep(&cfg, cli.jobs, Some(&mut file))?
    } else {
        run_arch_sweep(&cfg, cli.jobs, Some(&mut file))?
    };
    summarise(&rows);
    println!("appended {} rows to {}", rows.len(), path.display());
    Ok(())
}

fn diagnose_margin(cli: &Cli, args: &MarginArgs) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    let model = model_for(args.model, args.tie_param)?;
    let mut rng = ChaCha8Rng::seed_from_u64(hash64(seed, &[0]));
    let truth = GroundTruthReward::sample(args.reward_family, args.d, &mut rng);
    let states = sample_states(args.n_states, args.d, &mut rng);
    let grid = log_grid(args.t_min, args.t_max, args.t_points)?;
    let prob = margin_cdf(&truth, &model, &states, &grid, MarginKind::ProbabilityGap)?;
    let reward = margin_cdf(&truth, &model, &states, &grid, MarginKind::RewardGap)?;

    let path = out_path(cli, &args.out_csv)?;
    let mut w = create(&path)?;
    writeln!(w, "t,cdf_prob_gap,cdf_reward_gap")?;
    for ((t, p), r) in grid.iter().zip(&prob.cdf_values).zip(&reward.cdf_values) {
        writeln!(w, "{t:.16e},{p:.16e},{r:.16e}")?;
    }
    w.flush()?;
    for (name, curve) in [("prob_gap", &prob), ("reward_gap", &reward)] {
        match fit_margin_exponent(curve) {
            Ok(fit) => println!(
                "{name}: alpha_hat={:.6} slope={:.6} c_hat={:.6} r_squared={:.6} points={}",
                fit.alpha_hat, fit.slope, fit.c_hat, fit.r_squared, fit.points_used
            ),
            Err(e) => println!("{name}: no fit ({e})"),
        }
    }
    Ok(())
}

fn graph_spectrum(cli: &Cli, args: &SpectrumArgs) -> Result<()> {
    let rows = run_graph_spectrum(&args.designs, &args.actions, args.n_comparisons)?;
    let path = out_path(cli, &args.out_csv)?;
    let mut w = create(&path)?;
    write_spectrum_csv(&rows, &mut w)?;
    w.flush()?;
    for r in &rows {
        println!("{},{},{:.10}", r.design, r.actions, r.lambda2);
    }
    Ok(())
}

fn export_hist(cli: &Cli, args: &HistArgs) -> Result<()> {
    let ds = load_dataset(&args.data, args.model)?;
    let hist = probability_histogram(&ds, args.bins)?;
    let path = out_path(cli, &args.out_csv)?;
    let mut w = create(&path)?;
    write_histogram_csv(&hist, &mut w)?;
    w.flush()?;
    println!("wrote {} bins over {} samples to {}", hist.len(), ds.len(), path.display());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::GenData(a) => gen_data(&cli, a),
        Command::Train(a) => train(&cli, a),
        Command::ArchSweep(a) => sweep(&cli, a, false),
        Command::NoiseSweep(a) => sweep(&cli, a, true),
        Command::DiagnoseMargin(a) => diagnose_margin(&cli, a),
        Command::GraphSpectrum(a) => graph_spectrum(&cli, a),
        Command::ExportHist(a) => export_hist(&cli, a),
    }
}
