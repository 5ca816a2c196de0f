use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use uqseg::dataset::{load_split, SplitName};
use uqseg::model::{save_model, train, HeadKind, TrainConfig, TrainingLog};
use uqseg::rng::mix_seed;

use crate::run::{load_config, require_dir, set, CliResult, Failure, RunDir};

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// `det` or `gauss`
    #[arg(long)]
    head: Option<String>,
    /// Independently seeded members; more than one makes an ensemble
    #[arg(long)]
    members: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    m_train: Option<usize>,
    #[arg(long)]
    m_pred: Option<usize>,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    scale_p: Option<f64>,
    #[arg(long)]
    scale_d: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainCmdConfig {
    pub data: Option<PathBuf>,
    pub out: PathBuf,
    pub members: usize,
    pub train: TrainConfig,
}

impl Default for TrainCmdConfig {
    fn default() -> Self {
        TrainCmdConfig {
            data: None,
            out: "model".into(),
            members: 1,
            train: TrainConfig::default(),
        }
    }
}

/// Member list written next to the member directories.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelIndex {
    pub head: HeadKind,
    pub m_pred: usize,
    pub members: Vec<String>,
}

#[derive(Serialize)]
struct TrainReport {
    head: HeadKind,
    members: Vec<MemberReport>,
}

#[derive(Serialize)]
struct MemberReport {
    dir: String,
    seed: u64,
    final_loss: Option<f64>,
    log: TrainingLog,
}

pub fn parse_head(s: &str) -> CliResult<HeadKind> {
    match s {
        "det" | "deterministic" => Ok(HeadKind::Deterministic),
        "gauss" | "gaussian" | "ssn" => Ok(HeadKind::Gaussian),
        other => Err(Failure::usage(format!(
            "unknown head {other:?}; use det or gauss"
        ))),
    }
}

pub fn run(args: TrainArgs) -> CliResult<()> {
    let mut cfg: TrainCmdConfig = load_config(args.config.as_deref())?;
    set(&mut cfg.data, args.data.map(Some));
    set(&mut cfg.out, args.out);
    set(&mut cfg.members, args.members);
    let t = &mut cfg.train;
    if let Some(h) = args.head {
        t.head = parse_head(&h)?;
    }
    set(&mut t.lr, args.lr);
    set(&mut t.epochs, args.epochs);
    set(&mut t.batch_size, args.batch_size);
    set(&mut t.m_train, args.m_train);
    set(&mut t.m_pred, args.m_pred);
    set(&mut t.rank, args.rank);
    set(&mut t.scale_p, args.scale_p);
    set(&mut t.scale_d, args.scale_d);
    set(&mut t.seed, args.seed);
    cfg.train.validate()?;
    if cfg.members == 0 {
        return Err(Failure::usage("--members must be at least 1"));
    }
    let data = cfg
        .data
        .clone()
        .ok_or_else(|| Failure::usage("--data is required"))?;
    require_dir(&data, "dataset")?;
    let (manifest, split) = load_split(&data, SplitName::Train)?;

    // A single model keeps the configured seed; ensemble members derive theirs.
    let member_seed = |e: usize| {
        if cfg.members == 1 {
            cfg.train.seed
        } else {
            mix_seed(cfg.train.seed, 100 + e as u64)
        }
    };
    let mut trained = Vec::with_capacity(cfg.members);
    for e in 0..cfg.members {
        let member_cfg = TrainConfig {
            seed: member_seed(e),
            ..cfg.train.clone()
        };
        let (params, log) = train(&manifest, &split, &member_cfg)?;
        trained.push((member_cfg.seed, params, log));
    }

    let dir = RunDir::create(&cfg.out)?;
    let mut members = Vec::new();
    for (e, (seed, params, log)) in trained.into_iter().enumerate() {
        let name = format!("member-{e}");
        save_model(dir.subdir(&name)?, &params)?;
        members.push(MemberReport {
            dir: name,
            seed,
            final_loss: log.epochs.last().map(|l| l.loss),
            log,
        });
    }
    let index = ModelIndex {
        head: cfg.train.head,
        m_pred: cfg.train.m_pred,
        members: members.iter().map(|m| m.dir.clone()).collect(),
    };
    uqseg::tensor::write_json(dir.join("models.json"), &index)?;
    dir.write_config("train", &cfg)?;
    dir.write_report(
        "train",
        &TrainReport {
            head: cfg.train.head,
            members,
        },
    )?;
    println!("{}", dir.path.display());
    Ok(())
}
