use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use specfocus::dataset::Split;
use specfocus::nn::Variant;
use specfocus_cli::*;

#[derive(Parser)]
#[command(name = "specfocus", version, about = "Single-shot autofocus: synthesize, train, evaluate, ablate, scan")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a simulated focal-stack dataset.
    Synth(SynthArgs),
    /// Train one network variant.
    Train(TrainArgs),
    /// Score a model (or the oracle) on a dataset split.
    Eval(EvalArgs),
    /// Train and evaluate every variant and tabulate the results.
    Ablate(AblateArgs),
    /// Scan a simulated slide with the virtual microscope.
    Scan(ScanArgs),
}

#[derive(Args)]
struct Common {
    /// Base configuration (JSON); flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long = "out-dir", alias = "out")]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    slides: Option<usize>,
    #[arg(long)]
    stack_slices: Option<usize>,
    #[arg(long)]
    z_range_um: Option<f64>,
    #[arg(long)]
    fovs_per_slide: Option<usize>,
    #[arg(long, num_args = 2, value_names = ["W", "H"])]
    slide_size: Option<Vec<usize>>,
    #[arg(long, num_args = 2, value_names = ["W", "H"])]
    fov_size: Option<Vec<usize>>,
    #[arg(long)]
    tissue_fraction: Option<f64>,
    #[arg(long)]
    tile_size: Option<usize>,
    #[arg(long)]
    dof_um: Option<f64>,
    #[arg(long)]
    blur_gain_k: Option<f64>,
    #[arg(long)]
    chroma_offset_um: Option<f64>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    n_test_slides: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    base_channels: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    label_scale_um: Option<f64>,
    /// Disable data augmentation.
    #[arg(long)]
    no_augment: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Score the ground-truth oracle instead of a model.
    #[arg(long)]
    oracle: bool,
    #[arg(long)]
    split: Option<Split>,
    /// Median-aggregate the tiles of each image (the default).
    #[arg(long, overrides_with = "per_patch")]
    aggregate: bool,
    /// Score every tile separately.
    #[arg(long)]
    per_patch: bool,
    #[arg(long)]
    dof_um: Option<f64>,
    #[arg(long)]
    direction_epsilon_um: Option<f64>,
    #[arg(long)]
    bucket_width_um: Option<f64>,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Comma-separated seeds; `--seed` alone runs a single seed.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    base_channels: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
}

#[derive(Args)]
struct ScanArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Focus with the ground-truth oracle instead of a model.
    #[arg(long)]
    oracle: bool,
    /// Take the optics from this dataset.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    slide_id: Option<String>,
    #[arg(long, num_args = 2, value_names = ["NX", "NY"])]
    grid: Option<Vec<usize>>,
    #[arg(long)]
    tissue_fraction: Option<f64>,
    #[arg(long)]
    focal_amplitude_um: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    desk_scale: Option<f64>,
    #[arg(long)]
    z_precision_um: Option<f64>,
    #[arg(long)]
    overlap_fraction: Option<f64>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn apply_common(common: &Common, out_dir: &mut PathBuf, seed: Option<&mut u64>) {
    set(out_dir, common.out_dir.clone());
    if let Some(s) = seed {
        set(s, common.seed);
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth(a) => {
            let mut r: SynthRun = load_config(a.common.config.as_deref())?;
            apply_common(&a.common, &mut r.out_dir, Some(&mut r.seed));
            let s = &mut r.synth;
            set(&mut s.n_slides, a.slides);
            set(&mut s.stack.n_slices, a.stack_slices);
            set(&mut s.stack.z_range_um, a.z_range_um);
            set(&mut s.fovs_per_slide, a.fovs_per_slide);
            if let Some(v) = a.slide_size {
                s.slide_size = (v[0], v[1]);
            }
            if let Some(v) = a.fov_size {
                s.fov_size = (v[0], v[1]);
            }
            set(&mut s.tissue_fraction, a.tissue_fraction);
            set(&mut s.tile_size, a.tile_size);
            set(&mut s.optics.dof_um, a.dof_um);
            set(&mut s.optics.blur_gain_k, a.blur_gain_k);
            set(&mut s.optics.chroma_offset_um, a.chroma_offset_um);
            set(&mut s.optics.noise_sigma, a.noise_sigma);
            if a.n_test_slides.is_some() {
                s.n_test_slides = a.n_test_slides;
            }
            let summary = cmd_synth(&r)?;
            println!("{}", synth_summary_line(&summary));
        }
        Command::Train(a) => {
            let mut r: TrainRun = load_config(a.common.config.as_deref())?;
            apply_common(&a.common, &mut r.out_dir, Some(&mut r.seed));
            set(&mut r.dataset, a.dataset);
            set(&mut r.variant, a.variant);
            set(&mut r.base_channels, a.base_channels);
            set(&mut r.train.epochs, a.epochs);
            set(&mut r.train.batch_size, a.batch_size);
            set(&mut r.train.learning_rate, a.learning_rate);
            set(&mut r.train.weight_decay, a.weight_decay);
            if a.label_scale_um.is_some() {
                r.train.label_scale_um = a.label_scale_um;
            }
            if a.no_augment {
                r.train.augment.enabled = false;
            }
            let s = cmd_train(&r, |e| {
                eprintln!("epoch {:>3} loss {:.5} val_fe {:.3}um", e.epoch, e.train_loss, e.val_fe_um)
            })?;
            println!(
                "best epoch {} val_fe={:.3}um weights={}",
                s.best_epoch,
                s.best_val_fe_um,
                s.best_weights.display()
            );
        }
        Command::Eval(a) => {
            let mut r: EvalRun = load_config(a.common.config.as_deref())?;
            apply_common(&a.common, &mut r.out_dir, None);
            set(&mut r.dataset, a.dataset);
            if a.weights.is_some() {
                r.weights = a.weights;
            }
            r.oracle |= a.oracle;
            set(&mut r.split, a.split);
            if a.per_patch {
                r.options.aggregate = false;
            }
            if a.aggregate {
                r.options.aggregate = true;
            }
            if a.dof_um.is_some() {
                r.dof_um = a.dof_um;
            }
            set(&mut r.options.direction_epsilon_um, a.direction_epsilon_um);
            set(&mut r.options.bucket_width_um, a.bucket_width_um);
            let s = cmd_eval(&r)?;
            for w in &s.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}", s.report.summary_line());
        }
        Command::Ablate(a) => {
            let mut r: AblateRun = load_config(a.common.config.as_deref())?;
            apply_common(&a.common, &mut r.out_dir, None);
            if let Some(s) = a.common.seed {
                r.seeds = vec![s];
            }
            set(&mut r.seeds, a.seeds);
            set(&mut r.dataset, a.dataset);
            set(&mut r.base_channels, a.base_channels);
            set(&mut r.train.epochs, a.epochs);
            set(&mut r.train.batch_size, a.batch_size);
            set(&mut r.train.learning_rate, a.learning_rate);
            let rows = cmd_ablate(&r, |v, seed, e| {
                eprintln!("{v} seed {seed} epoch {:>3} loss {:.5} val_fe {:.3}um", e.epoch, e.train_loss, e.val_fe_um)
            })?;
            print!("{}", ablation_to_csv(&rows));
        }
        Command::Scan(a) => {
            let mut r: ScanRun = load_config(a.common.config.as_deref())?;
            apply_common(&a.common, &mut r.out_dir, Some(&mut r.seed));
            if a.weights.is_some() {
                r.weights = a.weights;
            }
            r.oracle |= a.oracle;
            if a.dataset.is_some() {
                r.dataset = a.dataset;
            }
            set(&mut r.slide.slide_id, a.slide_id);
            if let Some(g) = a.grid {
                r.slide.grid = (g[0], g[1]);
            }
            set(&mut r.slide.tissue_fraction, a.tissue_fraction);
            set(&mut r.slide.focal_amplitude_um, a.focal_amplitude_um);
            set(&mut r.scan.tau, a.tau);
            set(&mut r.scan.desk_scale, a.desk_scale);
            set(&mut r.scan.z_precision_um, a.z_precision_um);
            set(&mut r.scan.overlap_fraction, a.overlap_fraction);
            let report = cmd_scan(&r)?;
            println!("{}", report.summary_line());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
