use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "neuroaudio", version, about = "Spiking/attention speech denoising toolkit")]
pub struct Cli {
    /// TOML file with settings for the chosen command; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads; 1 makes every run bit-reproducible.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic clean/noise/noisy WAV triples and a manifest.
    Synth(SynthArgs),
    /// Train a denoiser on a manifest and write a checkpoint.
    Train(TrainArgs),
    /// Denoise one WAV file with a checkpoint.
    Denoise(DenoiseArgs),
    /// Per-file and mean SI-SNR over a manifest.
    Eval(EvalArgs),
    /// Front-end characteristics, device table and MAC counts.
    Perf(PerfArgs),
    /// Tri-linear function via piecewise form, ReLU net and spiking neuron.
    Expressivity(ExpressivityArgs),
    /// STFT a WAV into a spectrogram file, or invert one back.
    Stft(StftArgs),
    /// Encode values as a spike train and decode them back.
    Encode(EncodeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seconds: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    pub snr_low: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub snr_high: Option<f64>,
    #[arg(long)]
    pub sample_rate: Option<u32>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// Run directory for the checkpoint, log and settings.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    /// Global gradient-norm clip; 0 disables it.
    #[arg(long)]
    pub grad_clip: Option<f64>,
    /// Seed for minibatch order.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seed for parameter initialization and spike streams.
    #[arg(long)]
    pub model_seed: Option<u64>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub t_sim: Option<usize>,
    /// Train on the first manifest entry only, batch size 1.
    #[arg(long)]
    pub overfit_one: bool,
    /// Replace the head with a constant mask logit before training
    /// (large positive: pass-through, large negative: silence).
    #[arg(long, allow_negative_numbers = true)]
    pub mask_logit: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_name = "WAV")]
    pub input: Option<PathBuf>,
    #[arg(long, value_name = "WAV")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Noisy,
    Clean,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// Denoise each noisy file with this checkpoint.
    #[arg(long, value_name = "FILE", conflicts_with = "estimates")]
    pub checkpoint: Option<PathBuf>,
    /// Directory of already denoised files named `<id>.wav`.
    #[arg(long, value_name = "DIR")]
    pub estimates: Option<PathBuf>,
    /// Manifest column scored when neither a checkpoint nor estimates are given.
    #[arg(long, value_enum)]
    pub baseline: Option<Baseline>,
    /// Directory for `eval.csv`, `eval.json` and the settings echo.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PerfArgs {
    /// CSV with header `name,nm,mhz,w,latency_ms`; rows are added to the table.
    #[arg(long, value_name = "FILE")]
    pub profile: Option<PathBuf>,
    /// Operations per inference used for the device table.
    #[arg(long)]
    pub macs: Option<f64>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExpressivityArgs {
    #[arg(long)]
    pub theta: Option<f64>,
    /// Simulation step of the spiking realization.
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StftArgs {
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
    /// Read a spectrogram file and write a WAV.
    #[arg(long)]
    pub inverse: bool,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub hop: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Rate,
    Ttfs,
    Phase,
    Burst,
    RankOrder,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    /// Comma-separated inputs; integers for phase coding, [0, 1] otherwise.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub values: Vec<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the spike train as JSON here instead of stdout.
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}
