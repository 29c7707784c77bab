use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};

use tgvc_core::bitstream::{self, MAGIC};
use tgvc_core::ddim_sim::{self, Scene};
use tgvc_core::guidance::{gradient_check, GuidanceConfig, Guides, WeightMode};
use tgvc_core::motion::LengthMode;
use tgvc_core::pipeline::{self, Config, Manifest, MetricsRow};
use tgvc_core::sampler::SamplingMode;
use tgvc_core::tracker::{self, TrajectorySet};
use tgvc_core::video::{self, EmbeddingSimilarity, HistogramSimilarity, SimilarityProvider};
use tgvc_core::{synth, Error};

const MANIFEST_NAME: &str = "manifest.json";
const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "tgvc", version, about = "Trajectory-guided generative video coding toolkit")]
struct Cli {
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Code a raw video into per-clip trajectory bitstreams and a manifest.
    Encode(EncodeArgs),
    /// Decode a bitstream into the track interchange format.
    Decode {
        stream: PathBuf,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a bitstream, a manifest or an instance dump.
    Inspect { path: PathBuf },
    /// Run the guided toy sampler and dump the generated latents.
    Simulate(SimulateArgs),
    /// Compare the analytic guidance gradient with finite differences.
    Gradcheck(GradcheckArgs),
    /// Print per-clip and total rates of an encoded video.
    Metrics {
        manifest: PathBuf,
        /// Bits spent on each keyframe by the external image codec.
        #[arg(long, default_value_t = 0)]
        keyframe_bits: u64,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct EncodeArgs {
    /// Raw 8-bit frames, interleaved channels, concatenated.
    input: PathBuf,
    #[arg(long)]
    width: u32,
    #[arg(long)]
    height: u32,
    #[arg(long, default_value_t = 3)]
    channels: u8,
    /// Flat TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// One embedding vector per frame, whitespace separated.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Directory of `clip_NNNN.tracks` files replacing the built-in tracker.
    #[arg(long)]
    tracks_dir: Option<PathBuf>,
    #[arg(long, default_value = "tgvc_out")]
    out_dir: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    grid_size: Option<u32>,
    #[arg(long)]
    kmax: Option<u32>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    sampling: Option<SamplingMode>,
    #[arg(long)]
    length_mode: Option<LengthMode>,
    #[arg(long)]
    max_clip_len: Option<usize>,
    #[arg(long)]
    target_clip_len: Option<usize>,
}

impl Overrides {
    fn apply(&self, cfg: &mut Config) {
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = self.$f { cfg.$f = v; })*};
        }
        set!(
            seed,
            grid_size,
            kmax,
            alpha,
            beta,
            sampling,
            length_mode,
            max_clip_len,
            target_clip_len
        );
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 16)]
    frames: usize,
    #[arg(long, default_value_t = 10)]
    steps: usize,
    /// Guidance scale coefficient.
    #[arg(long, default_value_t = 30.0)]
    scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "two-blob")]
    scene: Scene,
    #[arg(long, default_value = "linear")]
    weight_mode: WeightMode,
    /// Latent dump of the guided run.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 6)]
    frames: usize,
    #[arg(long, default_value_t = 4)]
    height: usize,
    #[arg(long, default_value_t = 4)]
    width: usize,
    #[arg(long, default_value_t = 2)]
    channels: usize,
    #[arg(long, default_value_t = 1e-4)]
    step: f64,
    #[arg(long, default_value = "linear")]
    weight_mode: WeightMode,
    /// Repeat every frame of the first one.
    #[arg(long)]
    identical: bool,
}

/// Failure carrying the process exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let internal = error
            .chain()
            .filter_map(|e| e.downcast_ref::<Error>())
            .any(|e| !e.is_input_error());
        Failure {
            code: if internal { 3 } else { 2 },
            error,
        }
    }
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        anyhow::Error::from(error).into()
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads(cli.jobs) {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    let result = match cli.command {
        Command::Encode(args) => encode(args),
        Command::Decode { stream, out } => decode(&stream, out.as_deref()),
        Command::Inspect { path } => inspect(&path),
        Command::Simulate(args) => simulate(args),
        Command::Gradcheck(args) => gradcheck(args),
        Command::Metrics {
            manifest,
            keyframe_bits,
            json,
        } => metrics(&manifest, keyframe_bits, json),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(feature = "parallel")]
fn configure_threads(jobs: usize) -> anyhow::Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
        .context("configuring the worker pool")
}

#[cfg(not(feature = "parallel"))]
fn configure_threads(_jobs: usize) -> anyhow::Result<()> {
    Ok(())
}

/// Writes through a temporary sibling so readers never see partial files.
fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let tmp = path.with_extension("partial");
    let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

fn load_config(path: Option<&Path>, overrides: &Overrides) -> anyhow::Result<Config> {
    let mut cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            Config::from_toml(&text).with_context(|| format!("config {}", p.display()))?
        }
        None => Config::default(),
    };
    overrides.apply(&mut cfg);
    cfg.validate().context("configuration")?;
    Ok(cfg)
}

fn instance_dump(clip: &pipeline::EncodedClip) -> String {
    let mut s = format!(
        "clip {} frames {}..={} instances {}\n",
        clip.index,
        clip.first_frame,
        clip.last_frame,
        clip.instances.len()
    );
    for i in &clip.instances {
        s += &format!(
            "instance {} members {} s_intra {:.6} s_inter {:.6} selected {} keypoints {}\n",
            i.id, i.members, i.s_intra, i.s_inter, i.selected, i.keypoints
        );
    }
    s
}

fn encode(args: EncodeArgs) -> CmdResult {
    let cfg = load_config(args.config.as_deref(), &args.overrides)?;
    let frames = video::read_raw_video(&args.input, args.width, args.height, args.channels)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let provider: Box<dyn SimilarityProvider> = match &args.embeddings {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let e = EmbeddingSimilarity::parse(&text).with_context(|| format!("embeddings {}", p.display()))?;
            if e.len() != frames.len() {
                return Err(anyhow!("{} embeddings for {} frames", e.len(), frames.len()).into());
            }
            Box::new(e)
        }
        None => Box::new(HistogramSimilarity::default()),
    };
    let tracks = match &args.tracks_dir {
        Some(dir) => Some(load_tracks(dir)?),
        None => None,
    };
    let coded = pipeline::encode_video(&frames, &cfg, provider.as_ref(), tracks.as_deref())?;

    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    for clip in &coded.clips {
        let name = pipeline::stream_name(clip.index);
        write_atomic(&args.out_dir.join(&name), &clip.stream)?;
        write_atomic(
            &args.out_dir.join(Path::new(&name).with_extension("instances")),
            instance_dump(clip).as_bytes(),
        )?;
    }
    write_atomic(&args.out_dir.join(MANIFEST_NAME), coded.manifest.to_json().as_bytes())?;
    let bytes: usize = coded.manifest.clips.iter().map(|c| c.byte_length).sum();
    println!(
        "encoded {} frames into {} clips, {} motion bytes, manifest {}",
        frames.len(),
        coded.clips.len(),
        bytes,
        args.out_dir.join(MANIFEST_NAME).display()
    );
    Ok(())
}

/// Reads `clip_0000.tracks`, `clip_0001.tracks`, ... until the first gap.
fn load_tracks(dir: &Path) -> anyhow::Result<Vec<TrajectorySet>> {
    let mut sets = Vec::new();
    loop {
        let path = dir.join(Path::new(&pipeline::stream_name(sets.len())).with_extension("tracks"));
        if !path.exists() {
            break;
        }
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        sets.push(tracker::import_tracks(&text).with_context(|| format!("tracks {}", path.display()))?);
    }
    if sets.is_empty() {
        bail!("no clip_NNNN.tracks files in {}", dir.display());
    }
    Ok(sets)
}

fn decode(stream: &Path, out: Option<&Path>) -> CmdResult {
    let bytes = fs::read(stream).with_context(|| format!("reading {}", stream.display()))?;
    let set = bitstream::decode(&bytes).with_context(|| format!("decoding {}", stream.display()))?;
    let text = tracker::export_tracks(&pipeline::sparse_to_tracks(&set));
    match out {
        Some(p) => write_atomic(p, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(())
}

fn inspect(path: &Path) -> CmdResult {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.starts_with(MAGIC) {
        let set = bitstream::decode(&bytes).with_context(|| format!("decoding {}", path.display()))?;
        println!(
            "stream {} bytes, {} frames, latent {}x{}, {} instances",
            bytes.len(),
            set.frames,
            set.latent_w,
            set.latent_h,
            set.instances.len()
        );
        for (i, inst) in set.instances.iter().enumerate() {
            let visible: usize = inst
                .trajectories
                .iter()
                .map(|t| t.visible.iter().filter(|&&v| v).count())
                .sum();
            println!(
                "instance {i} keypoints {} visible points {visible}",
                inst.trajectories.len()
            );
        }
        return Ok(());
    }
    let text = String::from_utf8(bytes).map_err(|_| anyhow!("{} is neither a stream nor text", path.display()))?;
    if text.trim_start().starts_with('{') {
        let m = Manifest::parse(&text).with_context(|| format!("manifest {}", path.display()))?;
        println!(
            "video {}x{}x{}, {} frames, {} clips, keyframes {:?}, config {}",
            m.width,
            m.height,
            m.channels,
            m.total_frames,
            m.clips.len(),
            m.keyframes,
            m.config_digest
        );
        for c in &m.clips {
            println!(
                "clip {} frames {}..={} bytes {} instances {} k {:?}",
                c.index, c.frame_range[0], c.frame_range[1], c.byte_length, c.instance_count, c.instance_k
            );
        }
    } else {
        print!("{text}");
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> CmdResult {
    let setup = ddim_sim::make_scene(args.scene, args.frames)?;
    let cfg = GuidanceConfig {
        scale_coeff: args.scale,
        weight_mode: args.weight_mode,
        enabled: true,
    };
    let (latents, report) = ddim_sim::simulate(&setup, args.steps, &cfg, args.seed)?;
    if let Some(p) = &args.out {
        write_atomic(p, &latents.to_dump()?)?;
    }
    println!(
        "misalignment unguided {:.6} guided {:.6} ratio {:.6}",
        report.misalignment_unguided,
        report.misalignment_guided,
        if report.misalignment_unguided > 0.0 {
            report.misalignment_guided / report.misalignment_unguided
        } else {
            1.0
        }
    );
    Ok(())
}

fn gradcheck(args: GradcheckArgs) -> CmdResult {
    let case = synth::gradient_case(
        args.seed,
        args.frames,
        args.height,
        args.width,
        args.channels,
        args.identical,
    )?;
    let check = gradient_check(
        &case.z_t,
        &case.eps,
        case.alpha_t,
        &Guides::from_sparse(&case.sparse),
        args.weight_mode,
        args.step,
    )?;
    for (f, e) in check.per_frame.iter().enumerate() {
        println!("frame {f} max relative error {e:.3e}");
    }
    println!("max relative error {:.3e}", check.max_rel_error);
    if check.max_rel_error > GRADCHECK_TOLERANCE {
        return Err(Failure {
            code: 3,
            error: anyhow!(
                "relative error {:.3e} exceeds {GRADCHECK_TOLERANCE:e}",
                check.max_rel_error
            ),
        });
    }
    Ok(())
}

fn metrics(path: &Path, keyframe_bits: u64, json: bool) -> CmdResult {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let manifest = Manifest::parse(&text).with_context(|| format!("manifest {}", path.display()))?;
    let rows = pipeline::metrics_table(&manifest, keyframe_bits)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&rows).context("serializing rows")?);
        return Ok(());
    }
    println!("clip\tframes\tkeyframes\tmotion_bits\tkeyframe_bits\tbpp_with_motion\tbpp_without_motion");
    for MetricsRow {
        clip,
        frames,
        keyframes,
        rate,
    } in &rows
    {
        let label = clip.map_or_else(|| "total".to_string(), |c| c.to_string());
        println!(
            "{label}\t{frames}\t{keyframes}\t{}\t{}\t{:e}\t{:e}",
            rate.motion_bits, rate.keyframe_bits, rate.bpp_with_motion, rate.bpp_without_motion
        );
    }
    Ok(())
}
