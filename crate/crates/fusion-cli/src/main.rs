//! `fusion` command line: phantom generation, training, fusing,
//! visualization and evaluation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use fusion_core::checkpoint::{load_checkpoint, save_checkpoint};
use fusion_core::config::RunConfig;
use fusion_core::imageio::{load_pair, save_gray_image, save_rgb_image, Image};
use fusion_core::metrics::{evaluate_batch, evaluate_grid, grid_csv};
use fusion_core::phantom::{generate_phantoms, PhantomSpec};
use fusion_core::trainer::{train_with_progress, write_loss_csv};
use fusion_core::visualizer::{composite, input_gradients, Provenance};
use fusion_core::{fuse, FusionError};

#[derive(Parser)]
#[command(
    name = "fusion",
    version,
    about = "Unsupervised anatomical/functional image fusion with gradient-based color visualization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic phantom dataset.
    Phantom(PhantomArgs),
    /// Train a fusion model on a directory of image pairs.
    Train(TrainArgs),
    /// Fuse one registered pair with a trained checkpoint.
    Fuse(FuseArgs),
    /// Render the gradient-based color visualization of one pair.
    Visualize(VisualizeArgs),
    /// Compute fusion quality metrics over a dataset.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct PhantomArgs {
    /// Output directory for `<id>_anat.png` / `<id>_func.png` files.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 16)]
    count: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Ellipses/polygons per anatomical image.
    #[arg(long, default_value_t = 7)]
    shapes: usize,
    /// Gaussian blobs per functional image.
    #[arg(long, default_value_t = 3)]
    blobs: usize,
}

#[derive(Args)]
struct TrainArgs {
    /// JSON run configuration; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory of training pairs (overrides the config's data_dir).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Run output directory (overrides the config's output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct FuseArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Anatomical then functional image file.
    #[arg(long, num_args = 2, value_names = ["ANAT", "FUNC"])]
    pair: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VisualizeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Anatomical then functional image file.
    #[arg(long, num_args = 2, value_names = ["ANAT", "FUNC"])]
    pair: Vec<PathBuf>,
    /// Saturation factor; defaults to the checkpoint's omega.
    #[arg(long)]
    omega: Option<f64>,
    /// Normalize gradient magnitudes instead of signed values.
    #[arg(long)]
    magnitude: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Lambda sweep as `start:end:step` or a single value.
    #[arg(long)]
    lambda_grid: Option<String>,
    /// Omega sweep as `start:end:step` or a single value.
    #[arg(long)]
    omega_grid: Option<String>,
    /// Write the CSV report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

enum CliError {
    Usage(String),
    Runtime(FusionError),
}

impl From<FusionError> for CliError {
    fn from(e: FusionError) -> Self {
        match e {
            FusionError::InvalidConfig(_) | FusionError::InvalidArgument(_) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Runtime(other),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                print!("{}", e);
                return ExitCode::SUCCESS;
            }
            _ => {
                let first_line = e
                    .to_string()
                    .lines()
                    .next()
                    .unwrap_or("bad invocation")
                    .trim_start_matches("error: ")
                    .to_string();
                eprintln!("error[usage]: {}", first_line);
                return ExitCode::from(2);
            }
        },
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error[usage]: {}", msg);
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error[{}]: {}", e.tag(), e);
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Phantom(args) => run_phantom(args),
        Command::Train(args) => run_train(args),
        Command::Fuse(args) => run_fuse(args),
        Command::Visualize(args) => run_visualize(args),
        Command::Evaluate(args) => run_evaluate(args),
    }
}

fn run_phantom(args: PhantomArgs) -> Result<(), CliError> {
    let spec = PhantomSpec {
        count: args.count,
        width: args.width,
        height: args.height,
        seed: args.seed,
        shapes: args.shapes,
        blobs: args.blobs,
        ..Default::default()
    };
    let files = generate_phantoms(&spec, &args.out)?;
    println!(
        "wrote {} pairs ({} files) to {}",
        files.len(),
        2 * files.len(),
        args.out.display()
    );
    Ok(())
}

fn run_train(args: TrainArgs) -> Result<(), CliError> {
    let mut run_config = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(lambda) = args.lambda {
        run_config.fusion.lambda = lambda;
    }
    if let Some(epochs) = args.epochs {
        run_config.fusion.epochs = epochs;
    }
    if let Some(lr) = args.lr {
        run_config.fusion.lr = lr;
    }
    if let Some(seed) = args.seed {
        run_config.fusion.seed = seed;
    }
    if let Some(data) = args.data {
        run_config.data_dir = Some(data);
    }
    if let Some(out) = args.out {
        run_config.output_dir = Some(out);
    }
    run_config.fusion.validate()?;
    let data_dir = run_config
        .data_dir
        .clone()
        .ok_or_else(|| CliError::Usage("no data directory: pass --data or set data_dir".into()))?;
    let out_dir = run_config
        .output_dir
        .clone()
        .ok_or_else(|| CliError::Usage("no output directory: pass --out or set output_dir".into()))?;

    let dataset = fusion_core::imageio::load_dataset(&data_dir)?;
    println!(
        "training on {} pairs for {} epochs (lambda {}, lr {}, seed {})",
        dataset.len(),
        run_config.fusion.epochs,
        run_config.fusion.lambda,
        run_config.fusion.lr,
        run_config.fusion.seed
    );

    let checkpoint_path = out_dir.join("checkpoint.ckpt");
    run_config.checkpoint = Some(checkpoint_path.clone());
    run_config.write_echo(&out_dir)?;

    let seed = run_config.fusion.seed;
    let output = train_with_progress(&run_config.fusion, &dataset, seed, |record| {
        println!(
            "epoch {:>4}: l_total {:.6}  l_ssim_a {:.6}  l_ssim_b {:.6}  l_l2 {:.6}",
            record.epoch,
            record.mean.total,
            record.mean.ssim_anat,
            record.mean.ssim_func,
            record.mean.l2
        );
    })?;

    save_checkpoint(&output.params, &checkpoint_path)?;
    write_loss_csv(&output.records, out_dir.join("loss_log.csv"))?;
    println!("checkpoint: {}", checkpoint_path.display());
    println!("loss log:   {}", out_dir.join("loss_log.csv").display());
    Ok(())
}

fn load_pair_arg(paths: &[PathBuf]) -> Result<fusion_core::ImagePair, CliError> {
    if paths.len() != 2 {
        return Err(CliError::Usage(
            "--pair needs exactly two files: anatomical then functional".into(),
        ));
    }
    Ok(load_pair(&paths[0], &paths[1])?)
}

fn fused_to_image(t: fusion_core::Tensor<f64>, h: usize, w: usize) -> Result<Image, CliError> {
    Ok(Image::new(h, w, t.into_data())?)
}

fn run_fuse(args: FuseArgs) -> Result<(), CliError> {
    let (params, _config) = load_checkpoint(&args.checkpoint)?;
    let pair = load_pair_arg(&args.pair)?;
    let fused = fuse(&params, &pair)?;
    let image = fused_to_image(fused, pair.height(), pair.width())?;
    let out_path = args.out.join(format!("{}_fused.png", pair.id));
    save_gray_image(&image, &out_path)?;
    println!("wrote {}", out_path.display());
    Ok(())
}

fn run_visualize(args: VisualizeArgs) -> Result<(), CliError> {
    let (params, config) = load_checkpoint(&args.checkpoint)?;
    let pair = load_pair_arg(&args.pair)?;
    let omega = args.omega.unwrap_or(config.omega);

    let gradients = input_gradients(&params, &pair)?;
    let gradients = if args.magnitude {
        gradients.magnitude()
    } else {
        gradients
    };
    let checkpoint_id = args
        .checkpoint
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let color = composite(&gradients, omega)?.with_provenance(Provenance {
        lambda: config.lambda,
        omega,
        checkpoint: checkpoint_id,
    });

    let color_path = args.out.join(format!(
        "{}_l{:.2}_o{:.2}_color.png",
        pair.id, config.lambda, omega
    ));
    save_rgb_image(&color.rgb, color.height, color.width, &color_path)?;

    let fused = fuse(&params, &pair)?;
    let fused_img = fused_to_image(fused, pair.height(), pair.width())?;
    let fused_path = args.out.join(format!("{}_fused.png", pair.id));
    save_gray_image(&fused_img, &fused_path)?;

    println!("wrote {}", color_path.display());
    println!("wrote {}", fused_path.display());
    Ok(())
}

/// Parses `start:end:step` (inclusive) or a single number.
fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = |msg: &str| CliError::Usage(format!("bad grid '{}': {}", spec, msg));
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        [single] => {
            let v: f64 = single.parse().map_err(|_| bad("not a number"))?;
            Ok(vec![v])
        }
        [start, end, step] => {
            let start: f64 = start.parse().map_err(|_| bad("bad start"))?;
            let end: f64 = end.parse().map_err(|_| bad("bad end"))?;
            let step: f64 = step.parse().map_err(|_| bad("bad step"))?;
            if !(step > 0.0) || end < start {
                return Err(bad("need step > 0 and end >= start"));
            }
            let count = ((end - start) / step).round() as usize;
            let values: Vec<f64> = (0..=count)
                .map(|i| start + i as f64 * step)
                .filter(|v| *v <= end + step * 1e-9)
                .collect();
            Ok(values)
        }
        _ => Err(bad("expected VALUE or START:END:STEP")),
    }
}

fn run_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let (params, config) = load_checkpoint(&args.checkpoint)?;
    let (pairs, failures) = fusion_core::imageio::load_dataset_lenient(&args.data)?;
    for (id, err) in &failures {
        eprintln!("warning: pair {} skipped: {}", id, err);
    }
    if pairs.is_empty() {
        return Err(CliError::Runtime(FusionError::EmptyDataset(format!(
            "no loadable pairs in {}",
            args.data.display()
        ))));
    }

    let lambdas = match &args.lambda_grid {
        Some(spec) => parse_grid(spec)?,
        None => vec![config.lambda],
    };
    let omegas = match &args.omega_grid {
        Some(spec) => parse_grid(spec)?,
        None => vec![config.omega],
    };

    let grid_mode = lambdas.len() > 1 || omegas.len() > 1;
    let csv = if grid_mode {
        let reports = evaluate_grid(&params, &pairs, &lambdas, &omegas)?;
        println!("{}", reports[0].table());
        println!("grid: {} cells", reports.len());
        grid_csv(&reports)
    } else {
        let report = evaluate_batch(&params, &pairs, lambdas[0], omegas[0])?;
        println!("{}", report.table());
        report.to_csv()
    };
    if let Some(report_path) = &args.report {
        write_report(report_path, &csv)?;
        println!("report: {}", report_path.display());
    }
    Ok(())
}

fn write_report(path: &Path, csv: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|source| FusionError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        }
    }
    std::fs::write(path, csv).map_err(|source| {
        CliError::Runtime(FusionError::Io {
            path: path.to_path_buf(),
            source,
        })
    })
}
