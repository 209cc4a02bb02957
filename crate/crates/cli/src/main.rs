use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use rotorsplat::io::{
    flow_to_rgb, generate_synthetic, load_camera_file, load_checkpoint, load_dataset_with_background,
    psnr, save_camera_file, save_checkpoint, save_dataset, write_png, CameraFile, Split,
    SyntheticSceneSpec,
};
use rotorsplat::loss::ssim;
use rotorsplat::optim::{train, InitSource, TrainConfig};
use rotorsplat::render::{render_flow, render_frame};

mod fmt;

use fmt::g6;

#[derive(Parser)]
#[command(name = "rotorsplat", version, about = "Rotor-based 4D Gaussian splatting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and its ground-truth checkpoint.
    Synth {
        /// Scene description (JSON).
        spec: PathBuf,
        out_dir: PathBuf,
    },
    /// Train a model on a transforms-style dataset.
    Train {
        data_dir: PathBuf,
        /// `key = value` lines overriding the default configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Checkpoint to write.
        #[arg(long)]
        out: PathBuf,
        /// Freeze the temporal parameters, giving a static 3D baseline.
        #[arg(long)]
        static_mode: bool,
        /// Write metrics as JSON lines here instead of stdout.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Render one view to PNG.
    Render {
        checkpoint: PathBuf,
        /// Camera JSON with `transform_matrix` and intrinsics.
        #[arg(long)]
        camera: PathBuf,
        #[arg(long)]
        time: f64,
        #[arg(long)]
        out: PathBuf,
        /// Background color as `r,g,b`.
        #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.0, 0.0, 0.0])]
        background: Vec<f64>,
    },
    /// Mean PSNR and SSIM over a dataset split.
    Eval {
        checkpoint: PathBuf,
        data_dir: PathBuf,
        /// train, val or test.
        #[arg(long, default_value = "test")]
        split: String,
        /// Background color as `r,g,b`.
        #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.0, 0.0, 0.0])]
        background: Vec<f64>,
    },
    /// Render optical flow to PNG with the standard color wheel.
    Flow {
        checkpoint: PathBuf,
        /// Camera JSON with `transform_matrix` and intrinsics.
        #[arg(long)]
        camera: PathBuf,
        #[arg(long)]
        time: f64,
        #[arg(long)]
        out: PathBuf,
        /// Flow magnitude mapped to full saturation (default: image maximum).
        #[arg(long)]
        max_flow: Option<f64>,
    },
    /// Print the 3D slice of one Gaussian.
    SliceDebug {
        checkpoint: PathBuf,
        #[arg(long)]
        index: usize,
        #[arg(long)]
        time: f64,
    },
}

fn background(v: &[f64]) -> [f64; 3] {
    [v[0], v[1], v[2]]
}

fn synth(spec_path: &Path, out: &Path) -> Result<()> {
    let text = fs::read_to_string(spec_path).with_context(|| format!("reading {}", spec_path.display()))?;
    let spec: SyntheticSceneSpec = serde_json::from_str(&text).context("parsing scene spec")?;
    let (ds, store) = generate_synthetic(&spec)?;
    save_dataset(&ds, out)?;
    save_checkpoint(&out.join("ground_truth.r4gs"), &store)?;
    if let Some(f) = ds.train.first().or(ds.test.first()) {
        save_camera_file(&out.join("camera_0.json"), &CameraFile::from_camera(&f.camera))?;
    }
    println!(
        "wrote {} train / {} test frames and {} ground-truth Gaussians to {}",
        ds.train.len(),
        ds.test.len(),
        store.len(),
        out.display()
    );
    Ok(())
}

fn train_cmd(data: &Path, config: Option<&Path>, out: &Path, static_mode: bool, log: Option<&Path>) -> Result<()> {
    let mut cfg = match config {
        Some(p) => TrainConfig::from_kv_str(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => TrainConfig::default(),
    };
    if static_mode {
        cfg.static_mode = true;
    }
    let ds = load_dataset_with_background(data, cfg.background)?;
    let b = cfg.init_box;
    let init = InitSource::Box { min: [b[0], b[1], b[2], 0.0], max: [b[3], b[4], b[5], 1.0] };
    let mut sink: Box<dyn Write> = match log {
        Some(p) => Box::new(fs::File::create(p)?),
        None => Box::new(std::io::stdout()),
    };
    let result = train(&ds.train, &cfg, &init, |m| {
        let _ = writeln!(sink, "{}", serde_json::to_string(m).unwrap());
    })?;
    save_checkpoint(out, &result.store)?;
    eprintln!("saved {} Gaussians to {}", result.store.len(), out.display());
    Ok(())
}

fn render_cmd(ckpt: &Path, camera: &Path, time: f64, out: &Path, bg: [f64; 3]) -> Result<()> {
    let store = load_checkpoint(ckpt)?;
    let cam = load_camera_file(camera)?.to_camera(time)?;
    let frame = render_frame(&store, &cam, bg);
    write_png(out, &frame.image.clamped())?;
    Ok(())
}

fn eval_cmd(ckpt: &Path, data: &Path, split: &str, bg: [f64; 3]) -> Result<()> {
    let Some(split) = Split::parse(split) else {
        bail!("unknown split `{split}` (expected train, val or test)");
    };
    let store = load_checkpoint(ckpt)?;
    let ds = load_dataset_with_background(data, bg)?;
    let frames = ds.split(split);
    if frames.is_empty() {
        bail!("split `{}` is empty", split.name());
    }
    println!("frame\ttime\tpsnr\tssim");
    let (mut p_sum, mut s_sum) = (0.0, 0.0);
    for f in frames {
        let img = render_frame(&store, &f.camera, bg).image.clamped();
        let p = psnr(&img, &f.image)?;
        let s = ssim(&img, &f.image)?;
        p_sum += p;
        s_sum += s;
        println!("{}\t{}\t{}\t{}", f.file_path, g6(f.camera.time), g6(p), g6(s));
    }
    let n = frames.len() as f64;
    println!("mean_psnr\t{}", g6(p_sum / n));
    println!("mean_ssim\t{}", g6(s_sum / n));
    Ok(())
}

fn flow_cmd(ckpt: &Path, camera: &Path, time: f64, out: &Path, max_flow: Option<f64>) -> Result<()> {
    let store = load_checkpoint(ckpt)?;
    let cam = load_camera_file(camera)?.to_camera(time)?;
    let flow = render_flow(&store, &cam);
    write_png(out, &flow_to_rgb(&flow, max_flow))?;
    Ok(())
}

fn slice_debug(ckpt: &Path, index: usize, time: f64) -> Result<()> {
    let store = load_checkpoint(ckpt)?;
    if index >= store.len() {
        bail!("index {index} out of range (store has {} Gaussians)", store.len());
    }
    let g = store.get(index);
    let s = g.slice_at(time)?;
    let v3 = |v: &rotorsplat::Vec3| format!("{} {} {}", g6(v.x), g6(v.y), g6(v.z));
    println!("lambda {}", g6(s.lambda));
    println!("decay {}", g6(s.decay));
    println!("visible {}", g.is_visible(time));
    println!("mean {}", v3(&s.mean));
    println!("speed {}", v3(&s.speed));
    for r in 0..3 {
        println!("cov{r} {} {} {}", g6(s.cov[(r, 0)]), g6(s.cov[(r, 1)]), g6(s.cov[(r, 2)]));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { spec, out_dir } => synth(&spec, &out_dir),
        Command::Train { data_dir, config, out, static_mode, log } => {
            train_cmd(&data_dir, config.as_deref(), &out, static_mode, log.as_deref())
        }
        Command::Render { checkpoint, camera, time, out, background: bg } => {
            render_cmd(&checkpoint, &camera, time, &out, background(&bg))
        }
        Command::Eval { checkpoint, data_dir, split, background: bg } => {
            eval_cmd(&checkpoint, &data_dir, &split, background(&bg))
        }
        Command::Flow { checkpoint, camera, time, out, max_flow } => {
            flow_cmd(&checkpoint, &camera, time, &out, max_flow)
        }
        Command::SliceDebug { checkpoint, index, time } => slice_debug(&checkpoint, index, time),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
