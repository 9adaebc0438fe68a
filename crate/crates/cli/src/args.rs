use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use glance_core::corpus::{CorpusConfig, GlanceMode};
use glance_core::prior::WeightMode;
use glance_core::sagcl::SamplingMode;
use glance_core::trainer::TrainConfig;

const EXIT_CODES: &str =
    "Exit codes: 0 ok, 1 usage or config error, 2 missing or unreadable file, \
3 non-finite value during training or scoring.\n\n\
Settings resolve in order: command-line flag, then the --config JSON file \
(sections \"corpus\", \"train\", \"eval\"), then the built-in default.";

#[derive(Debug, Parser)]
#[command(name = "glance", version, about = "Glance-supervised temporal grounding experiments", after_help = EXIT_CODES)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus (manifest plus binary feature files).
    GenData(GenDataArgs),
    /// Train a model on the train split of a corpus and write a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint and write its R@n,IoU=m table as CSV.
    Eval(EvalArgs),
    /// Dump the static and dynamic priors of one sample as CSV.
    InspectPrior(InspectArgs),
    /// Train and evaluate several ablations or a hyperparameter sweep.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightModeArg {
    Triplet,
    Midpoint,
}

impl From<WeightModeArg> for WeightMode {
    fn from(w: WeightModeArg) -> Self {
        match w {
            WeightModeArg::Triplet => WeightMode::Triplet,
            WeightModeArg::Midpoint => WeightMode::Midpoint,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SamplingArg {
    Calibrated,
    GaussianOnly,
    SemanticOnly,
}

impl From<SamplingArg> for SamplingMode {
    fn from(s: SamplingArg) -> Self {
        match s {
            SamplingArg::Calibrated => SamplingMode::Calibrated,
            SamplingArg::GaussianOnly => SamplingMode::GaussianOnly,
            SamplingArg::SemanticOnly => SamplingMode::SemanticOnly,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GlanceArg {
    Uniform,
    Extreme,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// JSON config file; only its "corpus" section is used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for manifest.json and features/.
    #[arg(long)]
    pub out: PathBuf,
    /// Corpus seed (default 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Glance placement inside each span (default uniform).
    #[arg(long, value_enum)]
    pub glance_mode: Option<GlanceArg>,
    /// Standard deviation of per-clip feature noise (default 0.1).
    #[arg(long)]
    pub noise: Option<f64>,
    /// Clips per video, N >= 2 (default 16).
    #[arg(long)]
    pub clips: Option<usize>,
    /// Maximum events inside one target moment (default 1).
    #[arg(long)]
    pub max_events: Option<usize>,
}

impl GenDataArgs {
    pub fn apply(&self, cfg: &mut CorpusConfig) {
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.glance_mode {
            cfg.glance_mode = match v {
                GlanceArg::Uniform => GlanceMode::Uniform,
                GlanceArg::Extreme => GlanceMode::Extreme,
            };
        }
        if let Some(v) = self.noise {
            cfg.noise_sigma = v;
        }
        if let Some(v) = self.clips {
            cfg.clips_per_video = v;
        }
        if let Some(v) = self.max_events {
            cfg.max_events_per_moment = v;
        }
    }
}

/// Training settings that can override the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct TrainOverrides {
    /// Positive moments per query (default 10).
    #[arg(long)]
    pub k: Option<usize>,
    /// Width of the glance Gaussian over positions scaled to [-1, 1] (default 0.3).
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Contrastive temperature (default 0.1).
    #[arg(long)]
    pub tau: Option<f64>,
    /// Relevance threshold selecting dynamic Gaussian centers (default 0.9).
    #[arg(long)]
    pub tr: Option<f64>,
    /// Momentum factor for smoothed relevance (default 0.7).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Dynamic Gaussian prior adjustment (default on).
    #[arg(long, value_enum)]
    pub dga: Option<Toggle>,
    /// Moment weight read from the prior (default triplet).
    #[arg(long, value_enum)]
    pub weight_mode: Option<WeightModeArg>,
    /// Score that ranks positive candidates (default calibrated).
    #[arg(long, value_enum)]
    pub sampling_mode: Option<SamplingArg>,
    /// Training epochs (default 50).
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Learning rate (default 0.001).
    #[arg(long)]
    pub lr: Option<f64>,
    /// Samples per batch (default 8).
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Training seed for initialization and shuffling (default 0).
    #[arg(long)]
    pub seed: Option<u64>,
}

impl TrainOverrides {
    pub fn apply(&self, cfg: &mut TrainConfig) {
        if let Some(v) = self.k {
            cfg.k = v;
        }
        if let Some(v) = self.sigma {
            cfg.sigma = v;
        }
        if let Some(v) = self.tau {
            cfg.tau = v;
        }
        if let Some(v) = self.tr {
            cfg.dga.threshold = v;
        }
        if let Some(v) = self.alpha {
            cfg.dga.momentum = v;
        }
        if let Some(v) = self.dga {
            cfg.dga_enabled = v == Toggle::On;
        }
        if let Some(v) = self.weight_mode {
            cfg.weight_mode = v.into();
        }
        if let Some(v) = self.sampling_mode {
            cfg.sampling_mode = v.into();
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.lr {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Corpus directory written by gen-data.
    #[arg(long)]
    pub corpus: PathBuf,
    /// JSON config file; the "train" section is used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory: model.json, model_*.bin, train_log.csv, config.json.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub train: TrainOverrides,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EvalOverrides {
    /// Comma-separated n values for R@n (default 1,5).
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// Comma-separated IoU thresholds m in (0, 1] (default 0.3,0.5,0.7).
    #[arg(long, value_delimiter = ',')]
    pub m: Option<Vec<f64>>,
    /// Suppress ranked moments whose IoU with a better one exceeds t (default 0.5).
    #[arg(long, conflicts_with = "no_nms")]
    pub nms: Option<f64>,
    /// Rank without suppression.
    #[arg(long)]
    pub no_nms: bool,
}

impl EvalOverrides {
    pub fn apply(&self, cfg: &mut glance_core::eval::EvalConfig) {
        if let Some(v) = &self.n {
            cfg.n_list = v.clone();
        }
        if let Some(v) = &self.m {
            cfg.m_list = v.clone();
        }
        if let Some(t) = self.nms {
            cfg.nms_threshold = Some(t);
        }
        if self.no_nms {
            cfg.nms_threshold = None;
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Checkpoint directory written by train.
    #[arg(long)]
    pub model: PathBuf,
    /// JSON config file; the "eval" section is used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Split to evaluate.
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// CSV output path (default <model>/recall.csv). The resolved settings
    /// go next to it as <stem>.config.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub eval: EvalOverrides,
}

#[derive(Debug, Args)]
#[command(
    after_help = "Moment CSV columns: start,end,w,w_dga and, with --model, s,p.\n  \
w      moment weight from the glance Gaussian G\n  \
w_dga  moment weight from the dynamic profile\n  \
s      cosine between query and moment embeddings\n  \
p      w*s, using w_dga when dga is on\n\
Clip CSV (<stem>.clips.csv) columns: clip,h,g,r,r_bar,mask,g_hat.\n  \
h      clip position scaled to [-1, 1]\n  \
g      glance Gaussian G\n  \
r      cosine relevance of each clip to the glance clip\n  \
r_bar  relevance after one momentum step from an empty state (equals r)\n  \
mask   1 where r_bar >= tr\n  \
g_hat  dynamic profile after clamping and renormalization\n\
Without --model, relevance is measured on the stored clip features."
)]
pub struct InspectArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Query id of the sample to inspect.
    #[arg(long)]
    pub sample: String,
    /// Moment CSV path; the clip CSV is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Checkpoint directory; adds the s and p columns.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainOverrides,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// JSON config file; "train" is the base for every variant, "eval" scores them.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated ablations: top1, midpoint, gaussian_only, semantic_only,
    /// full, full+dga (default all six, or none with --sweep).
    #[arg(long, value_delimiter = ',')]
    pub ablations: Option<Vec<String>>,
    /// One hyperparameter and its values, e.g. sigma=0.1,0.2,0.3. Keys: k,
    /// sigma, tau, tr, alpha, lr, epochs.
    #[arg(long)]
    pub sweep: Option<String>,
    /// Consolidated CSV: variant,n,m,recall,num_queries.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub train: TrainOverrides,
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn parser_is_well_formed() {
        Cli::command().debug_assert();
    }

    #[test]
    fn documented_defaults_match_library() {
        let mut cmd = Cli::command();
        let help = cmd
            .find_subcommand_mut("train")
            .unwrap()
            .render_help()
            .to_string();
        let d = TrainConfig::default();
        for text in [
            format!("(default {})", d.k),
            format!("(default {})", d.sigma),
            format!("(default {})", d.tau),
            format!("(default {})", d.dga.threshold),
            format!("(default {})", d.dga.momentum),
            format!("(default {})", d.epochs),
            format!("(default {})", d.learning_rate),
            format!("(default {})", d.batch_size),
        ] {
            assert!(help.contains(&text), "missing {text} in\n{help}");
        }
        let c = CorpusConfig::default();
        let help = cmd
            .find_subcommand_mut("gen-data")
            .unwrap()
            .render_help()
            .to_string();
        assert!(help.contains(&format!("(default {})", c.noise_sigma)));
        assert!(help.contains(&format!("(default {})", c.clips_per_video)));
    }

    #[test]
    fn overrides_only_touch_given_fields() {
        let mut cfg = TrainConfig::default();
        TrainOverrides::default().apply(&mut cfg);
        assert_eq!(cfg, TrainConfig::default());
        let o = TrainOverrides {
            k: Some(1),
            dga: Some(Toggle::Off),
            weight_mode: Some(WeightModeArg::Midpoint),
            ..TrainOverrides::default()
        };
        o.apply(&mut cfg);
        assert_eq!(
            (cfg.k, cfg.dga_enabled, cfg.weight_mode),
            (1, false, WeightMode::Midpoint)
        );
        assert_eq!(cfg.sigma, TrainConfig::default().sigma);
    }
}
