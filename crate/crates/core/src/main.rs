use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use slotgnn::gnn::GnnVariant;
use slotgnn::harness::{self, EvalConfig, TrainConfig};
use slotgnn::model::{self, ModelConfig};
use slotgnn::scene::{self, Image, SceneConfig};
use slotgnn::{Error, Result};

#[derive(Parser)]
#[command(
    name = "slotgnn",
    version,
    about = "Parking-slot detection with an attentional GNN"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene dataset.
    GenData(GenDataArgs),
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    /// Precision/recall of a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Run a checkpoint on one image and write an overlay.
    Infer(InferArgs),
    /// Cosine similarity of paired/unpaired node features around the GNN.
    Similarity(SimilarityArgs),
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    slots_min: Option<usize>,
    #[arg(long)]
    slots_max: Option<usize>,
    #[arg(long)]
    distractors: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    /// Also write the first scenes as PPM files with their ground truth.
    #[arg(long)]
    preview_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    preview_count: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Attentional,
    FcnBaseline,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Variant::Attentional)]
    variant: Variant,
    #[arg(long, default_value_t = 3)]
    layers: usize,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    #[arg(long, default_value_t = 100.0)]
    lambda1: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda2: f64,
    #[arg(long)]
    no_pos_encoder: bool,
    #[arg(long, default_value_t = 24)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Stop after this many optimizer steps.
    #[arg(long)]
    max_steps: Option<usize>,
    /// Global gradient-norm cap; 0 disables clipping.
    #[arg(long, default_value_t = 1.0)]
    clip_norm: f64,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    threshold_px: f64,
    #[arg(long)]
    order_agnostic: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimilarityArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    json: bool,
}

fn gen_data(args: GenDataArgs) -> Result<()> {
    let mut config = SceneConfig::default();
    if let Some(v) = args.slots_min {
        config.slots_min = v;
    }
    if let Some(v) = args.slots_max {
        config.slots_max = v;
    }
    if let Some(v) = args.distractors {
        config.distractors = v;
    }
    if let Some(v) = args.noise {
        config.noise_amplitude = v;
    }
    let records = scene::generate_dataset(&config, args.seed, args.count)?;
    scene::write_dataset(&records, &args.out)?;
    info!("wrote {} scenes to {}", records.len(), args.out.display());
    if let Some(dir) = args.preview_dir {
        std::fs::create_dir_all(&dir)?;
        for (i, record) in records.iter().take(args.preview_count).enumerate() {
            let slots = harness::ground_truth_predictions(record);
            harness::render_overlay(
                &record.image,
                &record.points,
                &slots,
                dir.join(format!("scene_{i:04}.ppm")),
            )?;
        }
    }
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let mut model = ModelConfig::default();
    model.gnn.layers = args.layers;
    model.gnn.heads = args.heads;
    model.gnn.variant = match args.variant {
        Variant::Attentional => GnnVariant::Attentional,
        Variant::FcnBaseline => GnnVariant::FcnBaseline,
    };
    model.loss_weights.lambda1 = args.lambda1;
    model.loss_weights.lambda2 = args.lambda2;
    model.pos_encoder = !args.no_pos_encoder;
    let mut config = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        seed: args.seed,
        max_steps: args.max_steps,
        clip_norm: (args.clip_norm > 0.0).then_some(args.clip_norm),
        ..TrainConfig::default()
    };
    config.adam.lr = args.lr;
    let report = harness::train(&args.data, &model, &config, &args.out)?;
    if let Some(last) = report.epochs.last() {
        println!(
            "trained {} steps; final epoch loss {:.6} (point {:.6}, line {:.6})",
            report.steps.len(),
            last.total,
            last.point,
            last.line
        );
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let config = EvalConfig {
        threshold_px: args.threshold_px,
        order_agnostic: args.order_agnostic,
        ..EvalConfig::default()
    };
    let report = harness::evaluate(&args.ckpt, &args.data, &config)?;
    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&report).map_err(|e| Error::Data(e.to_string()))?
        );
    } else {
        println!(
            "TP {} FP {} FN {}  precision {:.4}  recall {:.4}  F1 {:.4}",
            report.true_positives,
            report.false_positives,
            report.false_negatives,
            report.precision,
            report.recall,
            report.f1()
        );
    }
    Ok(())
}

fn load_image(path: &Path) -> Result<Image> {
    let img = image::open(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
        .to_rgb8();
    let (width, height) = (img.width() as usize, img.height() as usize);
    let data = img
        .into_raw()
        .into_iter()
        .map(|v| v as f32 / 255.0)
        .collect();
    Ok(Image {
        width,
        height,
        data,
    })
}

fn infer(args: InferArgs) -> Result<()> {
    let params = harness::load_checkpoint(&args.ckpt)?;
    let image = load_image(&args.image)?;
    let size = params.config.image_size;
    if image.width != size || image.height != size {
        return Err(Error::Dimension(format!(
            "image is {}×{}, model expects {size}×{size}",
            image.width, image.height
        )));
    }
    let inference = model::infer(&params, &image)?;
    for p in &inference.decisions.accepted {
        println!(
            "({:.4}, {:.4}) -> ({:.4}, {:.4})  t={:.4}",
            p.x1, p.y1, p.x2, p.y2, p.t
        );
    }
    harness::render_overlay(
        &image,
        &inference.points,
        &inference.decisions.accepted,
        &args.out,
    )
}

fn similarity(args: SimilarityArgs) -> Result<()> {
    let params = harness::load_checkpoint(&args.ckpt)?;
    let records = scene::read_dataset(&args.data)?;
    let r = harness::similarity_report(&params, &records)?;
    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&r).map_err(|e| Error::Data(e.to_string()))?
        );
    } else {
        println!("            before    after");
        println!("paired    {:>8.4} {:>8.4}", r.paired_before, r.paired_after);
        println!(
            "unpaired  {:>8.4} {:>8.4}",
            r.unpaired_before, r.unpaired_after
        );
        println!("gap       {:>8.4} {:>8.4}", r.gap_before(), r.gap_after());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Infer(a) => infer(a),
        Command::Similarity(a) => similarity(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
