use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use splitnoise::collector::{hex, DistributionCollection};
use splitnoise::data::Dataset;
use splitnoise::experiment::{sweep_cuts, sweep_epsilon, Baseline, ExperimentConfig};
use splitnoise::fixture;
use splitnoise::learner::{train_noise_with, PrivateHead};
use splitnoise::metrics::BlockNorm;
use splitnoise::network::{valid_cuts, Network, NetworkSpec, Split};
use splitnoise::planner::{build_cost_table, choose_cut, DeviceProfile};
use splitnoise::runtime::{serve, EdgeClient, LinkSimulator, NoiseSource, ServerConfig};
use splitnoise::wire::MAX_FRAME_BYTES;

#[derive(Parser)]
#[command(
    name = "splitnoise",
    version,
    about = "Learned-noise private split inference"
)]
struct Cli {
    /// Experiment config (TOML). Flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ModelArgs {
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Cut position; skips the planner.
    #[arg(long)]
    cut: Option<usize>,
}

#[derive(Args, Clone, Default)]
struct DataArgs {
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Args, Clone, Default)]
struct NoiseArgs {
    #[arg(long, conflicts_with = "zero_noise")]
    collection: Option<PathBuf>,
    /// Send clean activations (debugging only).
    #[arg(long)]
    zero_noise: bool,
}

#[derive(Args, Clone, Default)]
struct LinkArgs {
    /// Simulated link bandwidth in bytes per second.
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    latency_ms: f64,
}

impl LinkArgs {
    fn link(&self) -> anyhow::Result<LinkSimulator> {
        match self.bandwidth {
            Some(bw) => Ok(LinkSimulator::new(bw, self.latency_ms)?),
            None => Ok(LinkSimulator::disabled()),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print the modeled cost of every cut and the chosen one.
    Partition {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        profile: Option<PathBuf>,
    },
    /// Learn noise tensors and write the distribution collection.
    TrainNoise {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        data: DataArgs,
        /// Also push the private-task accuracy down (needs a private head).
        #[arg(long)]
        private_labels: bool,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        target: Option<usize>,
        #[arg(long)]
        max_iterations: Option<usize>,
        /// Output collection path.
        #[arg(long)]
        collection: Option<PathBuf>,
    },
    /// Run noisy split inference in-process over the evaluation range.
    Infer {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        noise: NoiseArgs,
        #[arg(long)]
        limit: Option<usize>,
        /// Also report the private head's accuracy on the sent activations.
        #[arg(long)]
        private_labels: bool,
    },
    /// Serve the cloud partition.
    Serve {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "127.0.0.1:7878")]
        bind: String,
        #[command(flatten)]
        link: LinkArgs,
        #[arg(long, default_value_t = MAX_FRAME_BYTES)]
        max_frame_bytes: usize,
    },
    /// Run the edge partition locally against a remote server.
    RemoteInfer {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        noise: NoiseArgs,
        #[arg(long)]
        server: SocketAddr,
        #[command(flatten)]
        link: LinkArgs,
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long, default_value_t = 30_000)]
        timeout_ms: u64,
    },
    /// Estimate information leakage with and without noise.
    EvalMi {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        noise: NoiseArgs,
        /// Train and evaluate one collection per value instead.
        #[arg(long, value_delimiter = ',')]
        epsilons: Option<Vec<f64>>,
        /// Run the epsilon sweep from the config file.
        #[arg(long)]
        sweep: bool,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        norm: Option<BlockNorm>,
    },
    /// Train and evaluate noise at several cuts.
    SweepCuts {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_delimiter = ',')]
        cuts: Option<Vec<usize>>,
        #[arg(long)]
        profile: Option<PathBuf>,
    },
    #[command(hide = true, subcommand)]
    Fixture(FixtureCommand),
}

#[derive(Subcommand)]
enum FixtureCommand {
    /// Retrain the bundled LeNet-5 weights.
    Lenet5 {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        epochs: usize,
    },
    /// Write the dual-label fixture into --out-dir.
    Dual,
}

/// A failure and the exit code it maps to.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

trait UsageExt<T> {
    fn usage(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> UsageExt<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into()))
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// Settings shared by every command after merging config and flags.
struct Ctx {
    cfg: ExperimentConfig,
    out_dir: PathBuf,
    explicit_out: bool,
}

impl Ctx {
    fn new(cli: &Cli) -> Result<Self, Failure> {
        let mut cfg = match &cli.config {
            Some(path) => ExperimentConfig::load(path)
                .with_context(|| format!("loading {}", path.display()))
                .usage()?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = cli.seed {
            cfg.train.seed = seed;
            cfg.mi.seed = seed;
        }
        let explicit_out = cli.out_dir.is_some() || cfg.out_dir.is_some();
        let out_dir = cli
            .out_dir
            .clone()
            .or_else(|| cfg.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("splitnoise-out"));
        Ok(Ctx {
            cfg,
            out_dir,
            explicit_out,
        })
    }

    fn apply_model(&mut self, m: &ModelArgs) {
        let p = &mut self.cfg.paths;
        override_path(&mut p.spec, &m.spec);
        override_path(&mut p.weights, &m.weights);
        if m.cut.is_some() {
            self.cfg.cut = m.cut;
        }
    }

    fn apply_data(&mut self, d: &DataArgs) {
        override_path(&mut self.cfg.paths.images, &d.images);
        override_path(&mut self.cfg.paths.labels, &d.labels);
    }

    fn out_file(&self, name: &str) -> Result<PathBuf, Failure> {
        fs::create_dir_all(&self.out_dir)
            .with_context(|| format!("creating {}", self.out_dir.display()))?;
        Ok(self.out_dir.join(name))
    }

    fn spec(&self) -> Result<NetworkSpec, Failure> {
        let path = required(&self.cfg.paths.spec, "--spec")?;
        NetworkSpec::load(path)
            .with_context(|| format!("loading {}", path.display()))
            .usage()
    }

    fn network(&self) -> Result<Arc<Network>, Failure> {
        let spec = required(&self.cfg.paths.spec, "--spec")?;
        let weights = required(&self.cfg.paths.weights, "--weights")?;
        Ok(Arc::new(Network::load(spec, weights).usage()?))
    }

    fn profile(&self) -> Result<Option<DeviceProfile>, Failure> {
        match &self.cfg.paths.profile {
            Some(p) => Ok(Some(
                DeviceProfile::load(p)
                    .with_context(|| format!("loading profile {}", p.display()))
                    .usage()?,
            )),
            None => Ok(None),
        }
    }

    /// The configured cut, or the planner's choice when a profile is set.
    fn split(&self, network: Arc<Network>) -> Result<Split, Failure> {
        let cut = match self.cfg.cut {
            Some(c) => c,
            None => {
                let profile = self.profile()?.ok_or_else(|| {
                    Failure::Usage(anyhow!("no cut given and no profile to choose one"))
                })?;
                choose_cut(&build_cost_table(network.spec(), &profile).usage()?)?
            }
        };
        check_cut(network.spec(), cut)?;
        Ok(Split::new(network, cut)?)
    }

    fn dataset(&self, private: bool) -> Result<Dataset, Failure> {
        let images = required(&self.cfg.paths.images, "--images")?;
        let labels = required(&self.cfg.paths.labels, "--labels")?;
        let data = Dataset::load_idx(images, labels)
            .with_context(|| format!("loading {}", images.display()))
            .usage()?;
        if !private {
            return Ok(data);
        }
        let path = required(&self.cfg.paths.private_labels, "paths.private_labels")?;
        data.with_private_labels(path).usage()
    }

    fn noise(&self, args: &NoiseArgs, split: &Split) -> Result<NoiseSource, Failure> {
        if args.zero_noise {
            return Ok(NoiseSource::Zero);
        }
        let path = args
            .collection
            .as_ref()
            .or(self.cfg.paths.collection.as_ref())
            .ok_or_else(|| Failure::Usage(anyhow!("pass --collection or --zero-noise")))?;
        let collection = DistributionCollection::load_for(path, split)
            .with_context(|| format!("loading {}", path.display()))
            .usage()?;
        Ok(NoiseSource::Sampled(splitnoise::sampler::Sampler::new(
            collection,
            self.cfg.mi.seed,
        )?))
    }
}

fn override_path(slot: &mut Option<PathBuf>, flag: &Option<PathBuf>) {
    if flag.is_some() {
        slot.clone_from(flag);
    }
}

fn required<'a>(slot: &'a Option<PathBuf>, name: &str) -> Result<&'a Path, Failure> {
    slot.as_deref()
        .ok_or_else(|| Failure::Usage(anyhow!("missing {name} (flag or config)")))
}

fn check_cut(spec: &NetworkSpec, cut: usize) -> CmdResult {
    let valid = valid_cuts(spec);
    if !valid.contains(&cut) {
        return Err(Failure::Usage(anyhow!(
            "cut {cut} is not valid for `{}`; valid cuts are {valid:?}",
            spec.name
        )));
    }
    Ok(())
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> CmdResult {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> CmdResult {
    let mut ctx = Ctx::new(&cli)?;
    match &cli.command {
        Command::Partition { model, profile } => {
            ctx.apply_model(model);
            override_path(&mut ctx.cfg.paths.profile, profile);
            cmd_partition(&ctx)
        }
        Command::TrainNoise {
            model,
            data,
            private_labels,
            gamma,
            epsilon,
            target,
            max_iterations,
            collection,
        } => {
            ctx.apply_model(model);
            ctx.apply_data(data);
            let t = &mut ctx.cfg.train;
            if let Some(e) = epsilon {
                t.epsilon = *e;
            }
            if let Some(n) = target {
                t.target_collection_size = *n;
            }
            if let Some(n) = max_iterations {
                t.max_iterations = *n;
            }
            if let Some(g) = gamma {
                t.gamma = *g;
            }
            if *private_labels && t.gamma == 0.0 {
                t.gamma = 1.0;
            }
            t.validate().usage()?;
            let private = t.gamma > 0.0;
            override_path(&mut ctx.cfg.paths.collection, collection);
            cmd_train_noise(&ctx, private)
        }
        Command::Infer {
            model,
            data,
            noise,
            limit,
            private_labels,
        } => {
            ctx.apply_model(model);
            ctx.apply_data(data);
            cmd_infer(&ctx, noise, *limit, *private_labels)
        }
        Command::Serve {
            model,
            bind,
            link,
            max_frame_bytes,
        } => {
            ctx.apply_model(model);
            cmd_serve(&ctx, bind, link, *max_frame_bytes)
        }
        Command::RemoteInfer {
            model,
            data,
            noise,
            server,
            link,
            limit,
            timeout_ms,
        } => {
            ctx.apply_model(model);
            ctx.apply_data(data);
            cmd_remote_infer(&ctx, noise, *server, link, *limit, *timeout_ms)
        }
        Command::EvalMi {
            model,
            data,
            noise,
            epsilons,
            sweep,
            samples,
            k,
            norm,
        } => {
            ctx.apply_model(model);
            ctx.apply_data(data);
            let mi = &mut ctx.cfg.mi;
            if let Some(n) = samples {
                mi.samples = *n;
            }
            if let Some(k) = k {
                mi.k = *k;
            }
            if let Some(n) = norm {
                mi.norm = *n;
            }
            let sweep = match epsilons {
                Some(list) => Some(list.clone()),
                None if *sweep => Some(ctx.cfg.sweep.epsilons.clone()),
                None => None,
            };
            match sweep {
                Some(list) if list.is_empty() => {
                    Err(Failure::Usage(anyhow!("the epsilon sweep is empty")))
                }
                Some(list) => cmd_sweep_epsilon(&ctx, &list),
                None => cmd_eval_mi(&ctx, noise),
            }
        }
        Command::SweepCuts {
            model,
            data,
            cuts,
            profile,
        } => {
            ctx.apply_model(model);
            ctx.apply_data(data);
            override_path(&mut ctx.cfg.paths.profile, profile);
            if let Some(c) = cuts {
                ctx.cfg.sweep.cuts.clone_from(c);
            }
            cmd_sweep_cuts(&ctx)
        }
        Command::Fixture(f) => cmd_fixture(&cli, &ctx, f),
    }
}

fn cmd_partition(ctx: &Ctx) -> CmdResult {
    let spec = ctx.spec()?;
    let profile = ctx
        .profile()?
        .ok_or_else(|| Failure::Usage(anyhow!("missing --profile (flag or config)")))?;
    let table = build_cost_table(&spec, &profile).usage()?;
    println!(
        "{:>4}  {:<10} {:>10} {:>10} {:>12} {:>10} {:>10}",
        "cut", "after", "edge_ms", "bytes", "transmit_ms", "cloud_ms", "total_ms"
    );
    for row in std::iter::once(&table.input_baseline).chain(&table.rows) {
        println!(
            "{:>4}  {:<10} {:>10.3} {:>10} {:>12.3} {:>10.3} {:>10.3}",
            row.cut,
            row.after_layer,
            row.edge_ms,
            row.transmit_bytes,
            row.transmit_ms,
            row.cloud_ms,
            row.total_ms
        );
    }
    match ctx.cfg.cut {
        Some(cut) => {
            check_cut(&spec, cut)?;
            println!("chosen cut: {cut} (override)");
        }
        None => println!("chosen cut: {}", choose_cut(&table)?),
    }
    if ctx.explicit_out {
        let mut rows = vec![table.input_baseline.clone()];
        rows.extend(table.rows.iter().cloned());
        write_rows(&ctx.out_file("cost_table.csv")?, &rows)?;
    }
    Ok(())
}

fn cmd_train_noise(ctx: &Ctx, private: bool) -> CmdResult {
    let network = ctx.network()?;
    let split = ctx.split(Arc::clone(&network))?;
    let data = ctx.dataset(private)?;
    let (train, _) = ctx.cfg.split_data(&data).usage()?;
    let head = if private {
        let spec = required(&ctx.cfg.paths.head_spec, "paths.head_spec")?;
        let weights = required(&ctx.cfg.paths.head_weights, "paths.head_weights")?;
        Some(PrivateHead::load(spec, weights).usage()?)
    } else {
        None
    };
    let before = network.hash();
    println!(
        "network {} cut {} activation {:?}, {} training examples",
        hex(&before[..8]),
        split.cut(),
        split.activation_shape(),
        train.len()
    );
    let mut accepted = 0usize;
    let out = train_noise_with(&split, train, &ctx.cfg.train, head.as_ref(), |e| {
        if e.accepted {
            accepted += 1;
            println!(
                "round {:>3} it {:>4}: collected #{accepted} (holdout {:.4}, 1/SNR {:.4}, sse {:.4})",
                e.round, e.round_iteration, e.holdout_accuracy, e.inv_snr, e.sse
            );
        }
    })?;
    if network.hash() != before {
        return Err(Failure::Runtime(anyhow!(
            "classifier parameters changed during training"
        )));
    }
    let path = match &ctx.cfg.paths.collection {
        Some(p) => p.clone(),
        None => ctx.out_file("collection.shrc")?,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    out.collection.save(&path)?;
    println!(
        "{} entries after {} iterations ({:.2} epochs), clean holdout accuracy {:.4}",
        out.collection.len(),
        out.iterations,
        out.epochs(),
        out.clean_accuracy
    );
    println!("wrote {}", path.display());
    let metrics = ctx.out_file("metrics.csv")?;
    out.write_metrics_csv(&metrics)?;
    println!("wrote {}", metrics.display());
    let candidates = ctx.out_file("candidates.csv")?;
    out.write_candidates_csv(&candidates)?;
    println!("wrote {}", candidates.display());
    Ok(())
}

fn eval_examples(ctx: &Ctx, limit: Option<usize>, private: bool) -> Result<Dataset, Failure> {
    let data = ctx.dataset(private)?;
    let (_, mut eval) = ctx.cfg.split_data(&data).usage()?;
    if let Some(n) = limit {
        eval.examples.truncate(n);
    }
    if eval.is_empty() {
        return Err(Failure::Usage(anyhow!("the evaluation range is empty")));
    }
    Ok(eval)
}

#[derive(Serialize)]
struct Prediction {
    index: usize,
    label: usize,
    predicted: usize,
    private_label: Option<usize>,
    private_predicted: Option<usize>,
}

fn cmd_infer(ctx: &Ctx, noise: &NoiseArgs, limit: Option<usize>, private: bool) -> CmdResult {
    let network = ctx.network()?;
    let split = ctx.split(network)?;
    let mut source = ctx.noise(noise, &split)?;
    let eval = eval_examples(ctx, limit, private)?;
    let head = if private {
        let spec = required(&ctx.cfg.paths.head_spec, "paths.head_spec")?;
        let weights = required(&ctx.cfg.paths.head_weights, "paths.head_weights")?;
        let head = PrivateHead::load(spec, weights).usage()?;
        head.check_split(&split).usage()?;
        Some(head)
    } else {
        None
    };
    let mut rows = Vec::with_capacity(eval.len());
    for (i, ex) in eval.examples.iter().enumerate() {
        let sent = source.perturb(&split.run_edge(&ex.input)?)?;
        let private_predicted = match &head {
            Some(h) => Some(h.forward(&sent)?.argmax()),
            None => None,
        };
        rows.push(Prediction {
            index: ctx.cfg.data.eval[0] + i,
            label: ex.label,
            predicted: split.run_cloud(&sent)?.argmax(),
            private_label: ex.private_label,
            private_predicted,
        });
    }
    let n = rows.len();
    let correct = rows.iter().filter(|r| r.label == r.predicted).count();
    println!("accuracy {:.4} ({correct}/{n})", correct as f64 / n as f64);
    if head.is_some() {
        let hits = rows
            .iter()
            .filter(|r| r.private_label.is_some() && r.private_label == r.private_predicted)
            .count();
        println!(
            "private-task accuracy {:.4} ({hits}/{n})",
            hits as f64 / n as f64
        );
    }
    write_rows(&ctx.out_file("predictions.csv")?, &rows)
}

fn cmd_serve(ctx: &Ctx, bind: &str, link: &LinkArgs, max_frame_bytes: usize) -> CmdResult {
    let network = ctx.network()?;
    let split = Arc::new(ctx.split(network)?);
    let cfg = ServerConfig {
        max_frame_bytes,
        link: link.link().usage()?,
    };
    let cut = split.cut();
    let shape = split.activation_shape().to_vec();
    let handle = serve(split, bind, cfg).with_context(|| format!("binding {bind}"))?;
    println!(
        "listening on {} (cut {cut}, activation {shape:?})",
        handle.local_addr()
    );
    std::io::stdout().flush()?;
    handle.wait();
    Ok(())
}

#[derive(Serialize)]
struct RemoteRow {
    index: usize,
    label: usize,
    predicted: usize,
    local_predicted: usize,
    frame_bytes: usize,
    edge_ms: f64,
    sample_add_ms: f64,
    transmit_ms: f64,
    round_trip_ms: f64,
}

fn cmd_remote_infer(
    ctx: &Ctx,
    noise: &NoiseArgs,
    server: SocketAddr,
    link: &LinkArgs,
    limit: Option<usize>,
    timeout_ms: u64,
) -> CmdResult {
    let network = ctx.network()?;
    let split = Arc::new(ctx.split(Arc::clone(&network))?);
    let source = ctx.noise(noise, &split)?;
    let eval = eval_examples(ctx, limit, false)?;
    let timeout = Some(Duration::from_millis(timeout_ms.max(1)));
    let mut client = EdgeClient::connect(Arc::clone(&split), source, server, timeout)
        .with_context(|| format!("connecting to {server}"))?
        .with_link(link.link().usage()?);
    let mut rows = Vec::with_capacity(eval.len());
    for (i, ex) in eval.examples.iter().enumerate() {
        let r = client.infer(&ex.input)?;
        rows.push(RemoteRow {
            index: ctx.cfg.data.eval[0] + i,
            label: ex.label,
            predicted: r.label,
            local_predicted: network.forward(&ex.input)?.argmax(),
            frame_bytes: r.frame_bytes,
            edge_ms: r.timing.edge_ms,
            sample_add_ms: r.timing.sample_add_ms,
            transmit_ms: r.timing.transmit_ms,
            round_trip_ms: r.timing.round_trip_ms,
        });
    }
    client.close();
    let n = rows.len() as f64;
    let correct = rows.iter().filter(|r| r.label == r.predicted).count();
    let agree = rows
        .iter()
        .filter(|r| r.local_predicted == r.predicted)
        .count();
    let mean = |f: fn(&RemoteRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let (sample_add, transmit) = (mean(|r| r.sample_add_ms), mean(|r| r.transmit_ms));
    println!(
        "accuracy {:.4} ({correct}/{}), agreement with local full network {agree}/{}",
        correct as f64 / n,
        rows.len(),
        rows.len()
    );
    println!(
        "mean ms: edge {:.3}, sample+add {sample_add:.3}, transmit {transmit:.3}, round trip {:.3}; sample+add / transmit = {:.3}",
        mean(|r| r.edge_ms),
        mean(|r| r.round_trip_ms),
        sample_add / transmit.max(f64::MIN_POSITIVE)
    );
    write_rows(&ctx.out_file("remote.csv")?, &rows)
}

fn cmd_eval_mi(ctx: &Ctx, noise: &NoiseArgs) -> CmdResult {
    let network = ctx.network()?;
    let split = ctx.split(network)?;
    let mut source = ctx.noise(noise, &split)?;
    let eval = eval_examples(ctx, None, false)?;
    let baseline = Baseline::new(&split, &eval.examples, &ctx.cfg.mi).usage()?;
    let report = baseline.evaluate(&split, &mut source)?;
    println!(
        "I(x;a) {:.4} bits, I(x;a') {:.4} bits, reduction {:.2}%, accuracy {:.4} -> {:.4} (loss {:.4})",
        report.clean_mi_bits,
        report.noisy_mi_bits,
        100.0 * report.reduction,
        report.clean_accuracy,
        report.noisy_accuracy,
        report.accuracy_loss
    );
    write_rows(&ctx.out_file("eval_mi.csv")?, &[report])
}

fn cmd_sweep_epsilon(ctx: &Ctx, epsilons: &[f64]) -> CmdResult {
    let network = ctx.network()?;
    let split = ctx.split(network)?;
    let data = ctx.dataset(false)?;
    let (train, eval) = ctx.cfg.split_data(&data).usage()?;
    let rows = sweep_epsilon(
        &split,
        &train,
        &eval.examples,
        &ctx.cfg.train,
        epsilons,
        &ctx.cfg.mi,
        None,
    )?;
    for r in &rows {
        println!(
            "epsilon {:<5} reduction {:.2}%  loss {:.4}  ({:.2} epochs)",
            r.epsilon,
            100.0 * r.reduction,
            r.accuracy_loss,
            r.epochs
        );
    }
    write_rows(&ctx.out_file("epsilon_sweep.csv")?, &rows)
}

fn cmd_sweep_cuts(ctx: &Ctx) -> CmdResult {
    let network = ctx.network()?;
    for &c in &ctx.cfg.sweep.cuts {
        check_cut(network.spec(), c)?;
    }
    let profile = ctx.profile()?;
    let data = ctx.dataset(false)?;
    let (train, eval) = ctx.cfg.split_data(&data).usage()?;
    let rows = sweep_cuts(
        network,
        &ctx.cfg.sweep.cuts,
        &train,
        &eval.examples,
        &ctx.cfg.train,
        &ctx.cfg.mi,
        profile.as_ref(),
    )?;
    for r in &rows {
        println!(
            "cut {:>3}: edge {:.3} ms, reduction {:.2}%, loss {:.4}",
            r.cut,
            r.edge_ms,
            100.0 * r.reduction,
            r.accuracy_loss
        );
    }
    write_rows(&ctx.out_file("cut_sweep.csv")?, &rows)
}

fn cmd_fixture(cli: &Cli, ctx: &Ctx, f: &FixtureCommand) -> CmdResult {
    let seed = cli.seed.unwrap_or(1);
    match f {
        FixtureCommand::Lenet5 {
            images,
            labels,
            out,
            epochs,
        } => {
            let data = Dataset::load_idx(images, labels).usage()?;
            let train = &data.examples[..fixture::LENET5_TRAIN.min(data.len())];
            let net = fixture::train_lenet5(train, seed, *epochs)?;
            net.weights().save(out)?;
            let test = &data.examples[data.len().min(8000)..];
            if !test.is_empty() {
                println!("test accuracy {:.4}", fixture::accuracy(&net, test)?);
            }
            println!("wrote {}", out.display());
        }
        FixtureCommand::Dual => {
            fixture::write_dual_fixture(&ctx.out_dir, seed)?;
            println!("wrote dual-label fixture to {}", ctx.out_dir.display());
        }
    }
    Ok(())
}
