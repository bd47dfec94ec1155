use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ensan::config::RunConfig;
use ensan::dataset::{load_images, LabeledImage};
use ensan::ensemble::{train_ensemble, EnsembleModel, Scheme};
use ensan::eval::{add_auxiliary, build_registry, evaluate, EvalDataset};
use ensan::image::Image;
use ensan::labels::{AttributeGroup, Partition};
use ensan::manifest::DatasetManifest;
use ensan::prototype::{compute_prototypes, PrototypeSet};
use ensan::selection::{select_best, select_random};
use ensan::synth::{generate, load_spec, SyntheticSpec};
use ensan::{Error, Result};
use serde::Serialize;

const OUTPUT_ROOT_ENV: &str = "ENSAN_OUTPUT_ROOT";
const EFFECTIVE_CONFIG: &str = "config.toml";

#[derive(Parser)]
#[command(name = "ensan", version, about = "Train and evaluate ensembles of semi-adversarial face autoencoders")]
struct Cli {
    /// TOML run configuration; built-in defaults when absent.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `paths.output` (default: $ENSAN_OUTPUT_ROOT, then ./runs).
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// Overrides `paths.manifest`.
    #[arg(long, short, global = true)]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a configuration file holding every default.
    Init {
        /// Destination file.
        #[arg(default_value = "ensan.toml")]
        path: PathBuf,
        /// Replace an existing file.
        #[arg(long)]
        force: bool,
    },
    /// Generate a labelled synthetic face set.
    Synth(SynthArgs),
    /// Compute the eight group prototypes from the training partition.
    Prototypes {
        #[arg(long, value_enum, default_value_t = PartitionArg::Train)]
        partition: PartitionArg,
    },
    /// Train (or resume) every ensemble member.
    Train(TrainArgs),
    /// Write the t member outputs for each input image.
    Perturb(PerturbArgs),
    /// Score originals and ensemble outputs with unseen predictors and matchers.
    Evaluate(EvaluateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PartitionArg {
    Train,
    Test,
    All,
}

impl PartitionArg {
    fn get(self) -> Option<Partition> {
        match self {
            PartitionArg::Train => Some(Partition::Train),
            PartitionArg::Test => Some(Partition::Test),
            PartitionArg::All => None,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// 8 groups x 4 subjects x 8 images at 64x64, one test subject per group.
    Default,
    /// 8 groups x 3 subjects x 4 images at 64x64, one test subject per group.
    Tiny,
}

#[derive(Args)]
struct SynthArgs {
    /// Destination directory (images/ and manifest.csv).
    dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Preset::Default)]
    preset: Preset,
    /// JSON generator spec; replaces the preset.
    #[arg(long)]
    spec: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    scheme: Option<Scheme>,
    /// Number of members.
    #[arg(long, short = 't')]
    members: Option<usize>,
    /// SAN epochs per member.
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Random,
    Best,
}

#[derive(Args)]
struct PerturbArgs {
    /// Trained ensemble directory (default: <output>/ensemble).
    #[arg(long)]
    ensemble: Option<PathBuf>,
    /// Partition of the manifest to perturb.
    #[arg(long, value_enum, default_value_t = PartitionArg::Test)]
    partition: PartitionArg,
    /// A single image instead of the manifest; needs --group.
    #[arg(long, requires = "group")]
    image: Option<PathBuf>,
    /// Group token such as Y-M-W for --image.
    #[arg(long)]
    group: Option<String>,
    /// Also write one policy-selected output per image.
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
    /// Member whose auxiliary classifier scores outputs for --policy best.
    #[arg(long, default_value_t = 0)]
    scorer: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Trained ensemble directory (default: <output>/ensemble).
    #[arg(long)]
    ensemble: Option<PathBuf>,
    /// Replace every member output by its input (debugging no-op).
    #[arg(long)]
    identity: bool,
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    kind: &'a str,
    message: String,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = ErrorLine {
                kind: e.kind(),
                message: e.to_string(),
            };
            eprintln!("error: {}", serde_json::to_string(&line).expect("plain struct serializes"));
            ExitCode::FAILURE
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.output {
        cfg.paths.output = Some(o.clone());
    }
    if let Some(m) = &cli.manifest {
        cfg.paths.manifest = Some(m.clone());
    }
    Ok(cfg)
}

fn output_root(cfg: &RunConfig) -> PathBuf {
    cfg.paths
        .output
        .clone()
        .or_else(|| std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn manifest(cfg: &RunConfig) -> Result<DatasetManifest> {
    let path = cfg
        .paths
        .manifest
        .as_ref()
        .ok_or_else(|| Error::Config("no manifest: set paths.manifest or pass --manifest".into()))?;
    DatasetManifest::load(path)
}

/// Creates `dir` and records the effective configuration in it.
fn prepare_dir(dir: &Path, cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    cfg.save(&dir.join(EFFECTIVE_CONFIG))
}

fn run(cli: Cli) -> Result<()> {
    if let Command::Init { path, force } = &cli.command {
        if path.exists() && !force {
            return Err(Error::Config(format!("{} exists; pass --force to replace it", path.display())));
        }
        return RunConfig::default().save(path);
    }
    let mut cfg = load_config(&cli)?;
    let root = output_root(&cfg);
    match cli.command {
        Command::Init { .. } => unreachable!("handled above"),
        Command::Synth(args) => cmd_synth(&args),
        Command::Prototypes { partition } => {
            cfg.validate()?;
            cmd_prototypes(&cfg, &root.join("prototypes"), partition)
        }
        Command::Train(args) => {
            if let Some(s) = args.scheme {
                cfg.ensemble.scheme = s;
            }
            if let Some(m) = args.members {
                cfg.ensemble.members = m;
            }
            if let Some(e) = args.epochs {
                cfg.model.epochs = e;
            }
            cfg.validate()?;
            cmd_train(&cfg, &root.join("ensemble"))
        }
        Command::Perturb(args) => {
            cfg.validate()?;
            let ens = args.ensemble.clone().unwrap_or_else(|| root.join("ensemble"));
            cmd_perturb(&cfg, &ens, &root.join("perturbed"), &args)
        }
        Command::Evaluate(args) => {
            cfg.validate()?;
            let ens = args.ensemble.clone().unwrap_or_else(|| root.join("ensemble"));
            let dir = root.join(if args.identity { "evaluation-identity" } else { "evaluation" });
            cmd_evaluate(&cfg, &ens, &dir, args.identity)
        }
    }
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let spec = match (&args.spec, args.preset) {
        (Some(p), _) => load_spec(p)?,
        (None, Preset::Default) => SyntheticSpec::default(),
        (None, Preset::Tiny) => SyntheticSpec {
            subjects_per_group: 3,
            images_per_subject: 4,
            ..SyntheticSpec::default()
        },
    };
    let m = generate(&spec, &args.dir)?;
    log::info!("wrote {} images to {}", m.len(), args.dir.display());
    Ok(())
}

fn cmd_prototypes(cfg: &RunConfig, dir: &Path, partition: PartitionArg) -> Result<()> {
    let m = manifest(cfg)?;
    let (h, w) = (cfg.model.arch.height, cfg.model.arch.width);
    let protos: PrototypeSet<f32> = match partition.get() {
        Some(p) => compute_prototypes(&m, p, h, w)?,
        None => {
            let items = load_images::<f32>(&m, None, h, w)?;
            ensan::prototype::prototypes_from_images(
                items.iter().map(|d| (d.labels, d.image.as_ref())),
                format!("{}:all", m.content_hash()),
            )?
        }
    };
    prepare_dir(dir, cfg)?;
    protos.save(dir)?;
    log::info!("wrote prototypes to {}", dir.display());
    Ok(())
}

fn cmd_train(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let m = manifest(cfg)?;
    prepare_dir(dir, cfg)?;
    let model = train_ensemble(&m, &cfg.ensemble_spec(), &cfg.model, dir)?;
    log::info!("trained {} members into {}", model.len(), dir.display());
    Ok(())
}

/// File stem for outputs derived from an image id.
fn stem(id: &str) -> String {
    let p = Path::new(id);
    let base = p.with_extension("");
    base.to_string_lossy()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

#[derive(Serialize)]
struct Selection {
    image_id: String,
    policy: &'static str,
    member: usize,
    output: String,
}

fn perturb_inputs(cfg: &RunConfig, args: &PerturbArgs, h: usize, w: usize) -> Result<Vec<LabeledImage<f32>>> {
    match (&args.image, &args.group) {
        (Some(path), Some(token)) => {
            let group = AttributeGroup::all()
                .find(|g| &g.token() == token)
                .ok_or_else(|| Error::Config(format!("unknown group {token:?}; expected e.g. Y-M-W")))?;
            let image = Image::<f32>::load(path)?;
            image.ensure_dims(h, w)?;
            Ok(vec![LabeledImage {
                id: path.to_string_lossy().into_owned(),
                subject_id: String::new(),
                labels: group.labels(),
                image: image.into(),
            }])
        }
        _ => load_images(&manifest(cfg)?, args.partition.get(), h, w),
    }
}

fn cmd_perturb(cfg: &RunConfig, ensemble_dir: &Path, dir: &Path, args: &PerturbArgs) -> Result<()> {
    let model = EnsembleModel::<f32>::load(ensemble_dir)?;
    let (h, w) = model.input_dims();
    let inputs = perturb_inputs(cfg, args, h, w)?;
    if args.scorer >= model.len() {
        return Err(Error::Config(format!("--scorer {} but the ensemble has {} members", args.scorer, model.len())));
    }
    prepare_dir(dir, cfg)?;
    let t = model.len();
    let mut selections = Vec::new();
    for item in &inputs {
        let outputs = model.perturb(&item.image, item.labels)?;
        let s = stem(&item.id);
        for (i, y) in outputs.iter().enumerate() {
            y.save(&dir.join(format!("{s}_san{i}.png")))?;
        }
        let Some(policy) = args.policy else { continue };
        let (name, member) = match policy {
            PolicyArg::Random => ("random", select_random(t, cfg.seed, &item.id)?),
            PolicyArg::Best => {
                let scorer = &model.members[args.scorer].classifier;
                let scores = outputs
                    .iter()
                    .map(|y| scorer.score(y).map(f64::from))
                    .collect::<Result<Vec<_>>>()?;
                ("best", select_best(&scores, item.labels.gender)?.0)
            }
        };
        let output = format!("{s}_{name}.png");
        outputs[member].save(&dir.join(&output))?;
        selections.push(Selection {
            image_id: item.id.clone(),
            policy: name,
            member,
            output,
        });
    }
    if args.policy.is_some() {
        let path = dir.join("selections.csv");
        let mut wr = csv::Writer::from_path(&path).map_err(|e| Error::Serde(e.to_string()))?;
        for s in &selections {
            wr.serialize(s).map_err(|e| Error::Serde(e.to_string()))?;
        }
        wr.flush().map_err(|e| Error::Io { path, source: e })?;
    }
    log::info!("wrote {} x {t} outputs to {}", inputs.len(), dir.display());
    Ok(())
}

fn cmd_evaluate(cfg: &RunConfig, ensemble_dir: &Path, dir: &Path, identity: bool) -> Result<()> {
    let model = EnsembleModel::<f32>::load(ensemble_dir)?;
    let (h, w) = model.input_dims();
    let m = manifest(cfg)?;
    let train = load_images::<f32>(&m, Some(Partition::Train), h, w)?;
    let mut datasets = vec![EvalDataset {
        name: cfg.evaluation.test_name.clone(),
        images: load_images(&m, Some(Partition::Test), h, w)?,
    }];
    for d in &cfg.evaluation.datasets {
        datasets.push(EvalDataset {
            name: d.name.clone(),
            images: load_images(&DatasetManifest::load(&d.manifest)?, d.partition, h, w)?,
        });
    }
    let arch = &model.members[0].meta.arch;
    let mut registry = build_registry(&train, arch, &cfg.evaluation.registry)?;
    if cfg.evaluation.registry.include_auxiliary {
        add_auxiliary(&mut registry, &model);
    }
    prepare_dir(dir, cfg)?;
    let report = evaluate(&model, &registry, datasets, &cfg.scoring(), identity, dir)?;
    for ds in &report.datasets {
        for f in &ds.failures {
            log::warn!("{}: {} failed: {}", ds.name, f.name, f.message);
        }
    }
    log::info!("wrote report to {}", dir.display());
    Ok(())
}
