use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use procxfer::embeddings::{Casing, StoreKind};
use procxfer::eventlog::{LogSchema, SplitSpec, TimestampFormat};
use procxfer::nn::{AutoencoderConfig, InitScheme, TrainConfig};
use procxfer::tensorize::PrefixEncoding;
use procxfer::timefeat::{CyclicConfig, CyclicPart, ScalingStrategy};
use procxfer::transfer::{PipelineConfig, ScalerMode, TimeFeature};

#[derive(Debug, Parser)]
#[command(name = "procxfer", version, about = "Outcome prediction models that transfer across processes")]
pub struct Cli {
    /// JSON file whose keys mirror the long flags of the subcommand;
    /// flags given on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on a source log and write one bundle per seed.
    #[command(args_override_self = true)]
    Train(TrainArgs),
    /// Apply trained bundles, frozen, to a target log.
    #[command(args_override_self = true)]
    Transfer(TransferArgs),
    /// Score ongoing cases read as NDJSON from stdin.
    #[command(args_override_self = true)]
    Predict(PredictArgs),
    /// Train and evaluate the comparison models.
    #[command(args_override_self = true)]
    Baselines(BaselineArgs),
}

pub const SUBCOMMANDS: [&str; 4] = ["train", "transfer", "predict", "baselines"];

#[derive(Debug, Clone, Args)]
pub struct SchemaArgs {
    #[arg(long, default_value = "case_id")]
    pub case_column: String,
    #[arg(long, default_value = "activity")]
    pub activity_column: String,
    #[arg(long, default_value = "timestamp")]
    pub timestamp_column: String,
    /// strftime pattern; ISO-8601 when absent.
    #[arg(long)]
    pub ts_format: Option<String>,
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
}

impl SchemaArgs {
    pub fn timestamp_format(&self) -> TimestampFormat {
        self.ts_format.clone().map_or(TimestampFormat::Iso, TimestampFormat::Pattern)
    }

    pub fn schema(&self) -> Result<LogSchema, String> {
        if !self.delimiter.is_ascii() {
            return Err(format!("delimiter {:?} is not a single byte", self.delimiter));
        }
        Ok(LogSchema {
            case_column: self.case_column.clone(),
            activity_column: self.activity_column.clone(),
            timestamp_column: self.timestamp_column.clone(),
            timestamp_format: self.timestamp_format(),
            delimiter: self.delimiter as u8,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EncoderKind {
    Embedding,
    OneHot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StoreArg {
    /// Word vectors; activity names are split into tokens and mean-pooled.
    Token,
    /// One precomputed vector per activity name.
    Activity,
}

#[derive(Debug, Clone, Args)]
pub struct EncoderArgs {
    #[arg(long, value_enum, default_value = "embedding")]
    pub encoder: EncoderKind,
    /// word2vec text-format vector file.
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "uncased")]
    pub casing: CasingArg,
    #[arg(long, value_enum, default_value = "token")]
    pub store: StoreArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CasingArg {
    Cased,
    Uncased,
}

impl EncoderArgs {
    pub fn casing(&self) -> Casing {
        match self.casing {
            CasingArg::Cased => Casing::Cased,
            CasingArg::Uncased => Casing::Uncased,
        }
    }

    pub fn store_kind(&self) -> StoreKind {
        match self.store {
            StoreArg::Token => StoreKind::TokenLevel,
            StoreArg::Activity => StoreKind::ActivityLevel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TimeArg {
    Scaled,
    Raw,
    Cyclic,
    Autoencoder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScalerArg {
    RelativeQuantile,
    RelativeMean,
    RelativeMax,
    MinMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScalerModeArg {
    Source,
    PerDomain,
}

impl From<ScalerModeArg> for ScalerMode {
    fn from(m: ScalerModeArg) -> Self {
        match m {
            ScalerModeArg::Source => ScalerMode::Source,
            ScalerModeArg::PerDomain => ScalerMode::PerDomain,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CyclicArg {
    Hour,
    Weekday,
    Month,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EncodingArg {
    Index,
    LastK,
    Aggregate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Dedicated,
    Uniform,
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    #[arg(long, default_value_t = 50)]
    pub max_trace_len: usize,
    #[arg(long, default_value_t = 1)]
    pub min_trace_len: usize,
    /// Duration quantile that separates in-time traces.
    #[arg(long, default_value_t = 0.70)]
    pub label_quantile: f64,
    /// Train, validation and test fractions.
    #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "0.64,0.16,0.20")]
    pub split: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    pub min_prefix_len: usize,
    #[arg(long, value_enum, default_value = "index")]
    pub encoding: EncodingArg,
    /// Padded steps of the index encoding.
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    /// Events kept by the last-k encoding.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, value_enum, default_value = "scaled")]
    pub time: TimeArg,
    #[arg(long, value_enum, default_value = "relative-quantile")]
    pub scaler: ScalerArg,
    #[arg(long, default_value_t = 0.70)]
    pub scaler_quantile: f64,
    #[arg(long, value_enum, value_delimiter = ',', num_args = 1.., default_value = "hour,weekday,month")]
    pub cyclic_parts: Vec<CyclicArg>,
    #[arg(long, default_value_t = 2)]
    pub latent_dim: usize,
    #[arg(long, value_enum, default_value = "per-domain")]
    pub scaler_mode: ScalerModeArg,
    #[arg(long, default_value_t = 128)]
    pub hidden: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, value_enum, default_value = "dedicated")]
    pub init: InitArg,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    /// Train on only the first N traces of the source training split.
    #[arg(long)]
    pub source_train_limit: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

impl PipelineArgs {
    pub fn scaling(&self) -> ScalingStrategy {
        match self.scaler {
            ScalerArg::RelativeQuantile => ScalingStrategy::RelativeQuantile { q: self.scaler_quantile },
            ScalerArg::RelativeMean => ScalingStrategy::RelativeMean,
            ScalerArg::RelativeMax => ScalingStrategy::RelativeMax,
            ScalerArg::MinMax => ScalingStrategy::MinMax,
        }
    }

    pub fn config(&self) -> Result<PipelineConfig, String> {
        let [train, val, test] = self.split[..] else {
            return Err(format!("--split needs three fractions, got {}", self.split.len()));
        };
        let split = SplitSpec::new(train, val, test).map_err(|e| e.to_string())?;
        let time = match self.time {
            TimeArg::Scaled => TimeFeature::Scaled {
                strategy: self.scaling(),
            },
            TimeArg::Raw => TimeFeature::RawDays,
            TimeArg::Cyclic => TimeFeature::Cyclic {
                config: CyclicConfig::new(self.cyclic_parts.iter().map(|p| match p {
                    CyclicArg::Hour => CyclicPart::Hour,
                    CyclicArg::Weekday => CyclicPart::Weekday,
                    CyclicArg::Month => CyclicPart::Month,
                }))
                .map_err(|e| e.to_string())?,
            },
            TimeArg::Autoencoder => TimeFeature::Autoencoded {
                config: AutoencoderConfig {
                    latent_dim: self.latent_dim,
                    ..AutoencoderConfig::default()
                },
            },
        };
        let cfg = PipelineConfig {
            max_trace_len: self.max_trace_len,
            min_trace_len: self.min_trace_len,
            label_quantile: self.label_quantile,
            split,
            min_prefix_len: self.min_prefix_len,
            encoding: match self.encoding {
                EncodingArg::Index => PrefixEncoding::Index { max_steps: self.steps },
                EncodingArg::LastK => PrefixEncoding::LastK { k: self.k },
                EncodingArg::Aggregate => PrefixEncoding::Aggregate,
            },
            time,
            scaler_mode: self.scaler_mode.into(),
            hidden: self.hidden,
            layers: self.layers,
            init: match self.init {
                InitArg::Dedicated => InitScheme::Dedicated,
                InitArg::Uniform => InitScheme::Uniform,
            },
            train: TrainConfig {
                lr: self.lr,
                max_epochs: self.epochs,
                patience: self.patience,
                batch_size: self.batch_size,
                seed: 0,
            },
            threshold: self.threshold,
            source_train_limit: self.source_train_limit,
        };
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Source event log (CSV).
    #[arg(long)]
    pub log: PathBuf,
    /// Output directory; nothing is written elsewhere.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, alias = "seed", value_delimiter = ',', num_args = 1.., default_value = "0")]
    pub seeds: Vec<u64>,
    #[command(flatten)]
    pub encoder: EncoderArgs,
    #[command(flatten)]
    pub schema: SchemaArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    /// Bundle directories, or directories holding `seed-*/bundle`.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    pub bundles: Vec<PathBuf>,
    /// Target event log (CSV).
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Score every trace of the target log instead of its test split.
    #[arg(long)]
    pub whole_log: bool,
    /// Overrides the scaler mode recorded in the bundle.
    #[arg(long, value_enum)]
    pub scaler_mode: Option<ScalerModeArg>,
    /// Also train target-only models for comparison.
    #[arg(long)]
    pub compare_scratch: bool,
    /// Also train target-only models on growing shares of the target data.
    #[arg(long)]
    pub scale_study: bool,
    /// Percent of target training traces for the scale study.
    #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "1,2,5,10,20,50,100")]
    pub fractions: Vec<f64>,
    /// Seeds of the target-only models; defaults to the bundles' seeds.
    #[arg(long, alias = "seed", value_delimiter = ',', num_args = 1..)]
    pub seeds: Option<Vec<u64>>,
    /// Write source/target activity distance matrices.
    #[arg(long)]
    pub analyze_embeddings: bool,
    #[command(flatten)]
    pub schema: SchemaArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// Divisor in days for the relative time scaler, in place of the
    /// source statistic.
    #[arg(long)]
    pub target_divisor: Option<f64>,
    /// strftime pattern of incoming timestamps; ISO-8601 when absent.
    #[arg(long)]
    pub ts_format: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum ModelArg {
    Logreg,
    Tree,
    Forest,
    LstmOneHot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum RegimeArg {
    /// Train and test on the source log.
    Source,
    /// Train and test on the target log.
    Target,
    /// Train on the source log, test on the target log.
    Transfer,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub source_log: PathBuf,
    #[arg(long)]
    pub target_log: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', num_args = 1.., default_value = "logreg,tree,forest,lstm-one-hot")]
    pub models: Vec<ModelArg>,
    #[arg(long, value_enum, value_delimiter = ',', num_args = 1.., default_value = "source,target,transfer")]
    pub regime: Vec<RegimeArg>,
    #[arg(long, alias = "seed", value_delimiter = ',', num_args = 1.., default_value = "0")]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = 0.1)]
    pub logreg_lr: f64,
    #[arg(long, default_value_t = 200)]
    pub logreg_epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub logreg_l2: f64,
    #[arg(long, default_value_t = 10)]
    pub max_depth: usize,
    #[arg(long, default_value_t = 5)]
    pub min_leaf: usize,
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    #[command(flatten)]
    pub schema: SchemaArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}
