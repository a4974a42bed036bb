//! Command-line surface: simulate, recon-nf, recon-grid, eval,
//! sweep-gamma, render.
//!
//! Every parameter can come from a flag or a `--config` key=value file
//! (flags win); every run writes a manifest of the resolved parameters
//! plus a SHA-256 fingerprint, and rerunning from that manifest alone
//! reproduces the outputs bit for bit.

use crate::error::{Error, Result};
use crate::field::{write_checkpoint, FieldArch};
use crate::geom::{FanBeamGeometry, ImageGrid, SamplingSchedule, TimeAxis};
use crate::grid::{alternate, GridWeights};
use crate::io::{
    export_frames, fingerprint, parse_config, read_sinogram, read_volume, render_config,
    write_history_csv, write_objective_csv, write_sinogram, write_volume, ConfigMap,
};
use crate::metrics::{psnr, psnr_per_frame, reference_peak};
use crate::nf::{train, AdaptiveGamma, NfReconConfig, TrainOutput};
use crate::phantom::{synthesize_ground_truth, synthesize_sinogram, Phantom};
use crate::volume::{pool_average_volume, CasoratiImage, VelocityGrid};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Parser)]
#[command(
    name = "dynct",
    about = "Dynamic fan-beam CT reconstruction with neural fields and a grid-based PDHG solver",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize measurements and a pooled ground-truth volume from an
    /// analytic phantom.
    Simulate(SimulateArgs),
    /// Reconstruct with the optical-flow-regularized neural field.
    ReconNf(ReconNfArgs),
    /// Reconstruct with the grid-based PDHG alternation.
    ReconGrid(ReconGridArgs),
    /// PSNR between a reconstruction and a reference volume.
    Eval(EvalArgs),
    /// Run the neural-field reconstruction for several gamma values and
    /// collect PSNR-versus-step curves.
    SweepGamma(SweepGammaArgs),
    /// Export a volume as 16-bit PGM frames.
    Render(RenderArgs),
}

/// Flag-or-config resolution: values come from the command line when
/// given, else from the `--config` file, else from the coded default.
struct Resolver {
    config: ConfigMap,
    manifest: ConfigMap,
}

impl Resolver {
    fn new(config_path: Option<&Path>, command: &str) -> Result<Self> {
        let config = match config_path {
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                let map = parse_config(&text)?;
                if let Some(cmd) = map.get("command") {
                    if cmd != command {
                        return Err(Error::Config(format!(
                            "config file is for `{cmd}`, not `{command}`"
                        )));
                    }
                }
                map
            }
            None => ConfigMap::new(),
        };
        let mut manifest = ConfigMap::new();
        manifest.insert("command".into(), command.into());
        Ok(Self { config, manifest })
    }

    fn get<T: FromStr + ToString>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let value = match flag {
            Some(v) => v,
            None => match self.config.get(key) {
                Some(raw) => raw
                    .parse::<T>()
                    .map_err(|e| Error::Config(format!("bad value for {key}: {e}")))?,
                None => default,
            },
        };
        self.manifest.insert(key.into(), value.to_string());
        Ok(value)
    }

    fn get_path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<PathBuf> {
        let value = match flag {
            Some(v) => v,
            None => match self.config.get(key) {
                Some(raw) => PathBuf::from(raw),
                None => return Err(Error::Config(format!("missing required parameter {key}"))),
            },
        };
        self.manifest.insert(key.into(), value.display().to_string());
        Ok(value)
    }

    fn get_opt_path(&mut self, key: &str, flag: Option<PathBuf>) -> Option<PathBuf> {
        let value = flag.or_else(|| self.config.get(key).map(PathBuf::from));
        if let Some(v) = &value {
            self.manifest.insert(key.into(), v.display().to_string());
        }
        value
    }

    fn finish(mut self, path: &Path) -> Result<String> {
        let print = fingerprint(&self.manifest);
        self.manifest.insert("fingerprint".into(), print.clone());
        std::fs::write(path, render_config(&self.manifest))?;
        Ok(print)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// two-square | cardiac
    #[arg(long)]
    phantom: Option<String>,
    #[arg(long)]
    frames: Option<usize>,
    /// Scanner preset: two-square | stempo | xcat
    #[arg(long)]
    geometry: Option<String>,
    #[arg(long)]
    sensors: Option<usize>,
    /// random | sequential
    #[arg(long)]
    schedule: Option<String>,
    /// Angular increment for sequential schedules, in degrees.
    #[arg(long)]
    delta_deg: Option<f64>,
    #[arg(long)]
    schedule_seed: Option<u64>,
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    noise_seed: Option<u64>,
    /// Resolution the phantom is rendered and projected at.
    #[arg(long)]
    render_res: Option<usize>,
    /// Reconstruction grid the ground truth is pooled down to.
    #[arg(long)]
    recon_res: Option<usize>,
    /// Edge-smoothing half-width in domain units (0 = hard edges).
    #[arg(long)]
    smoothing: Option<f64>,
    #[arg(long)]
    out_sinogram: Option<PathBuf>,
    #[arg(long)]
    out_ground_truth: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

fn geometry_preset(name: &str, sensors: Option<usize>) -> Result<FanBeamGeometry> {
    let mut geom = match name {
        "two-square" | "cardiac" => FanBeamGeometry::preset_two_square(),
        "stempo" => FanBeamGeometry::preset_stempo(),
        "xcat" => FanBeamGeometry::preset_xcat(),
        other => return Err(Error::Config(format!("unknown geometry preset {other}"))),
    };
    if let Some(m) = sensors {
        geom = FanBeamGeometry::new(geom.dso, geom.dsd, geom.detector_width, m)?;
    }
    Ok(geom)
}

fn run_simulate(args: SimulateArgs) -> Result<()> {
    let mut r = Resolver::new(args.config.as_deref(), "simulate")?;
    let phantom_kind = r.get("phantom", args.phantom, "two-square".to_string())?;
    let default_frames = if phantom_kind == "cardiac" { 300 } else { 100 };
    let frames = r.get("frames", args.frames, default_frames)?;
    let geometry_name = r.get("geometry", args.geometry, phantom_kind.clone())?;
    let sensors = r.get("sensors", args.sensors, 64usize)?;
    let schedule_kind = r.get("schedule", args.schedule, "random".to_string())?;
    let delta_deg = r.get("delta-deg", args.delta_deg, 9.0)?;
    let schedule_seed = r.get("schedule-seed", args.schedule_seed, 1u64)?;
    let noise_std = r.get("noise-std", args.noise_std, 0.01)?;
    let noise_seed = r.get("noise-seed", args.noise_seed, 2u64)?;
    let render_res = r.get("render-res", args.render_res, 1024usize)?;
    let recon_res = r.get("recon-res", args.recon_res, 64usize)?;
    let smoothing = r.get("smoothing", args.smoothing, 0.0)?;
    let out_sinogram = r.get_path("out-sinogram", args.out_sinogram)?;
    let out_gt = r.get_path("out-ground-truth", args.out_ground_truth)?;

    let phantom = match phantom_kind.as_str() {
        "two-square" => Phantom::two_square(),
        "cardiac" => Phantom::cardiac(),
        other => return Err(Error::Config(format!("unknown phantom {other}"))),
    }
    .with_smoothing(smoothing);
    phantom.scene.validate()?;
    let geometry = geometry_preset(&geometry_name, Some(sensors))?;
    let time_axis = TimeAxis::new(frames, phantom.t_final())?;
    let schedule = match schedule_kind.as_str() {
        "random" => SamplingSchedule::Random { seed: schedule_seed },
        "sequential" => SamplingSchedule::Sequential { delta: delta_deg.to_radians() },
        other => return Err(Error::Config(format!("unknown schedule {other}"))),
    };

    let sinogram = synthesize_sinogram(
        &phantom, &geometry, &schedule, &time_axis, noise_std, noise_seed, render_res,
    )?;
    write_sinogram(&out_sinogram, &sinogram)?;
    let gt = synthesize_ground_truth(&phantom, recon_res, render_res, &time_axis)?;
    write_volume(&out_gt, &gt)?;

    let manifest_path = args
        .manifest
        .unwrap_or_else(|| out_sinogram.with_extension("manifest"));
    let print = r.finish(&manifest_path)?;
    println!(
        "simulate: wrote {} and {} (fingerprint {print})",
        out_sinogram.display(),
        out_gt.display()
    );
    Ok(())
}

#[derive(Args)]
struct ReconNfArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    sinogram: Option<PathBuf>,
    /// Reconstruction grid resolution (square).
    #[arg(long)]
    res: Option<usize>,
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Frame batch size; 0 selects the full batch.
    #[arg(long)]
    frame_batch: Option<usize>,
    #[arg(long)]
    sampling_rate: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    seed_u: Option<u64>,
    #[arg(long)]
    seed_v: Option<u64>,
    #[arg(long)]
    seed_sampling: Option<u64>,
    #[arg(long)]
    eps_smooth: Option<f64>,
    #[arg(long)]
    m_x: Option<usize>,
    #[arg(long)]
    m_t: Option<usize>,
    #[arg(long)]
    sigma_x: Option<f64>,
    #[arg(long)]
    sigma_t: Option<f64>,
    #[arg(long)]
    hidden_layers: Option<usize>,
    #[arg(long)]
    hidden_width: Option<usize>,
    /// best | final; which parameters the output volume is rendered from.
    #[arg(long)]
    snapshot: Option<String>,
    /// true | false: one-shot gamma raise when the flow term grows.
    #[arg(long)]
    adaptive: Option<bool>,
    #[arg(long)]
    adaptive_window: Option<usize>,
    #[arg(long)]
    adaptive_trigger: Option<f64>,
    #[arg(long)]
    adaptive_target: Option<f64>,
    #[arg(long)]
    log_every: Option<usize>,
    #[arg(long)]
    out_volume: Option<PathBuf>,
    #[arg(long)]
    out_history: Option<PathBuf>,
    #[arg(long)]
    out_checkpoint_u: Option<PathBuf>,
    #[arg(long)]
    out_checkpoint_v: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

struct ResolvedNf {
    config: NfReconConfig,
    snapshot_best: bool,
}

fn resolve_nf_params(
    r: &mut Resolver,
    args: ReconNfArgs,
    n_frames: usize,
) -> Result<(ResolvedNf, ReconNfOutputs)> {
    let desk = NfReconConfig::desk(n_frames);
    let alpha = r.get("alpha", args.alpha, 0.0)?;
    let beta = r.get("beta", args.beta, 0.0)?;
    let gamma = r.get("gamma", args.gamma, 1e-2)?;
    let frame_batch_raw = r.get("frame-batch", args.frame_batch, desk.frame_batch)?;
    let frame_batch = if frame_batch_raw == 0 { n_frames } else { frame_batch_raw };
    let sampling_rate = r.get("sampling-rate", args.sampling_rate, desk.sampling_rate)?;
    let epochs = r.get("epochs", args.epochs, desk.epochs)?;
    let learning_rate = r.get("learning-rate", args.learning_rate, desk.learning_rate)?;
    let seed_u = r.get("seed-u", args.seed_u, 1u64)?;
    let seed_v = r.get("seed-v", args.seed_v, 2u64)?;
    let seed_sampling = r.get("seed-sampling", args.seed_sampling, 3u64)?;
    let eps_smooth = r.get("eps-smooth", args.eps_smooth, 1e-6)?;
    let m_x = r.get("m-x", args.m_x, desk.u_arch.m_x)?;
    let m_t = r.get("m-t", args.m_t, desk.u_arch.m_t)?;
    let sigma_x = r.get("sigma-x", args.sigma_x, desk.u_arch.sigma_x)?;
    let sigma_t = r.get("sigma-t", args.sigma_t, desk.u_arch.sigma_t)?;
    let hidden_layers = r.get("hidden-layers", args.hidden_layers, desk.u_arch.hidden_layers)?;
    let hidden_width = r.get("hidden-width", args.hidden_width, desk.u_arch.hidden_width)?;
    let snapshot = r.get("snapshot", args.snapshot, "best".to_string())?;
    let adaptive_on = r.get("adaptive", args.adaptive, false)?;
    let adaptive_default = AdaptiveGamma::default();
    let adaptive_window = r.get("adaptive-window", args.adaptive_window, adaptive_default.window)?;
    let adaptive_trigger =
        r.get("adaptive-trigger", args.adaptive_trigger, adaptive_default.trigger_ratio)?;
    let adaptive_target =
        r.get("adaptive-target", args.adaptive_target, adaptive_default.target_gamma)?;
    let log_every = r.get("log-every", args.log_every, desk.log_every)?;

    let snapshot_best = match snapshot.as_str() {
        "best" => true,
        "final" => false,
        other => return Err(Error::Config(format!("snapshot must be best|final, got {other}"))),
    };
    let u_arch = FieldArch {
        m_x,
        m_t,
        sigma_x,
        sigma_t,
        hidden_layers,
        hidden_width,
        out_dim: 1,
    };
    let v_arch = FieldArch { out_dim: 2, ..u_arch };
    let config = NfReconConfig {
        alpha,
        beta,
        gamma,
        frame_batch,
        sampling_rate,
        epochs,
        learning_rate,
        seed_u,
        seed_v,
        seed_sampling,
        eps_smooth,
        u_arch,
        v_arch,
        adaptive: adaptive_on.then_some(AdaptiveGamma {
            window: adaptive_window,
            trigger_ratio: adaptive_trigger,
            target_gamma: adaptive_target,
        }),
        log_every,
    };

    let outputs = ReconNfOutputs {
        volume: r.get_path("out-volume", args.out_volume)?,
        history: r.get_opt_path("out-history", args.out_history),
        checkpoint_u: r.get_opt_path("out-checkpoint-u", args.out_checkpoint_u),
        checkpoint_v: r.get_opt_path("out-checkpoint-v", args.out_checkpoint_v),
    };
    Ok((ResolvedNf { config, snapshot_best }, outputs))
}

struct ReconNfOutputs {
    volume: PathBuf,
    history: Option<PathBuf>,
    checkpoint_u: Option<PathBuf>,
    checkpoint_v: Option<PathBuf>,
}

fn write_nf_outputs(
    out: &TrainOutput,
    snapshot_best: bool,
    grid: &ImageGrid,
    time_axis: &TimeAxis,
    paths: &ReconNfOutputs,
) -> Result<()> {
    let (u, v) = if snapshot_best {
        out.best_or_final()
    } else {
        (&out.u_field, &out.v_field)
    };
    let volume = crate::nf::render_field(u, grid, time_axis);
    write_volume(&paths.volume, &volume)?;
    if let Some(p) = &paths.history {
        write_history_csv(p, &out.history)?;
    }
    if let Some(p) = &paths.checkpoint_u {
        write_checkpoint(p, u)?;
    }
    if let Some(p) = &paths.checkpoint_v {
        write_checkpoint(p, v)?;
    }
    Ok(())
}

fn run_recon_nf(args: ReconNfArgs) -> Result<()> {
    let mut r = Resolver::new(args.config.as_deref(), "recon-nf")?;
    let sinogram_path = r.get_path("sinogram", args.sinogram.clone())?;
    let res = r.get("res", args.res, 64usize)?;
    let gt_path = r.get_opt_path("ground-truth", args.ground_truth.clone());
    let manifest_flag = args.manifest.clone();

    let sinogram = read_sinogram(&sinogram_path)?;
    let ground_truth = gt_path.as_deref().map(read_volume).transpose()?;
    let (resolved, outputs) = resolve_nf_params(&mut r, args, sinogram.n_frames())?;

    let grid = ImageGrid::unit_square(res);
    let time_axis = TimeAxis::new(
        sinogram.n_frames(),
        *sinogram.times.last().expect("nonempty sinogram"),
    )?;
    let out = train(&resolved.config, &sinogram, &grid, ground_truth.as_ref())?;
    write_nf_outputs(&out, resolved.snapshot_best, &grid, &time_axis, &outputs)?;

    let manifest_path =
        manifest_flag.unwrap_or_else(|| outputs.volume.with_extension("manifest"));
    let print = r.finish(&manifest_path)?;
    let best = out
        .history
        .best_psnr()
        .map(|(s, p)| format!(", best PSNR {p:.2} dB at step {s}"))
        .unwrap_or_default();
    println!(
        "recon-nf: wrote {} (fingerprint {print}{best})",
        outputs.volume.display()
    );
    Ok(())
}

#[derive(Args)]
struct ReconGridArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    sinogram: Option<PathBuf>,
    #[arg(long)]
    res: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    inner_iters: Option<usize>,
    #[arg(long)]
    out_volume: Option<PathBuf>,
    /// Velocity components are written as two extra volumes next to this
    /// stem: `<stem>.vx.vol`, `<stem>.vy.vol`.
    #[arg(long)]
    out_velocity_stem: Option<PathBuf>,
    #[arg(long)]
    out_objectives: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

fn run_recon_grid(args: ReconGridArgs) -> Result<()> {
    let mut r = Resolver::new(args.config.as_deref(), "recon-grid")?;
    let sinogram_path = r.get_path("sinogram", args.sinogram)?;
    let res = r.get("res", args.res, 64usize)?;
    let alpha = r.get("alpha", args.alpha, 1e-3)?;
    let beta = r.get("beta", args.beta, 1e-4)?;
    let gamma = r.get("gamma", args.gamma, 1e-3)?;
    let rounds = r.get("rounds", args.rounds, 5usize)?;
    let inner_iters = r.get("inner-iters", args.inner_iters, 2000usize)?;
    let out_volume = r.get_path("out-volume", args.out_volume)?;
    let velocity_stem = r.get_opt_path("out-velocity-stem", args.out_velocity_stem);
    let out_objectives = r.get_opt_path("out-objectives", args.out_objectives);

    let sinogram = read_sinogram(&sinogram_path)?;
    let grid = ImageGrid::unit_square(res);
    let time_axis = TimeAxis::new(
        sinogram.n_frames(),
        *sinogram.times.last().expect("nonempty sinogram"),
    )?;
    let u0 = CasoratiImage::zeros(grid, time_axis.clone());
    let v0 = VelocityGrid::zeros(grid, time_axis.clone());
    let weights = GridWeights { alpha, beta, gamma };
    let (u, v, log) = alternate(&u0, &v0, &sinogram, &weights, rounds, inner_iters)?;

    write_volume(&out_volume, &u)?;
    if let Some(stem) = &velocity_stem {
        for (k, suffix) in ["vx.vol", "vy.vol"].iter().enumerate() {
            let values = ndarray::Array2::from_shape_fn(
                (u.n_frames(), grid.n_pixels()),
                |(i, p)| v.values[(i, p, k)],
            );
            let vol = CasoratiImage { values, grid, time_axis: time_axis.clone() };
            write_volume(&stem.with_extension(suffix), &vol)?;
        }
    }
    if let Some(p) = &out_objectives {
        write_objective_csv(p, &log.objectives)?;
    }
    let manifest_path = args
        .manifest
        .unwrap_or_else(|| out_volume.with_extension("manifest"));
    let print = r.finish(&manifest_path)?;
    println!(
        "recon-grid: wrote {} (fingerprint {print}, final objective {:.6e})",
        out_volume.display(),
        log.objectives.last().unwrap()
    );
    Ok(())
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    volume: Option<PathBuf>,
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Peak convention: `ref-max` (default) or `one`.
    #[arg(long)]
    peak: Option<String>,
    /// Also report per-frame PSNR.
    #[arg(long)]
    per_frame: Option<bool>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let mut r = Resolver::new(args.config.as_deref(), "eval")?;
    let volume_path = r.get_path("volume", args.volume)?;
    let reference_path = r.get_path("reference", args.reference)?;
    let peak_kind = r.get("peak", args.peak, "ref-max".to_string())?;
    let per_frame = r.get("per-frame", args.per_frame, false)?;
    let out_csv = r.get_opt_path("out-csv", args.out_csv);

    let x = read_volume(&volume_path)?;
    let mut reference = read_volume(&reference_path)?;
    // Pool a higher-resolution reference down to the volume's grid.
    if reference.grid.nx != x.grid.nx && reference.grid.nx % x.grid.nx == 0 {
        reference = pool_average_volume(&reference, reference.grid.nx / x.grid.nx)?;
    }
    let peak = match peak_kind.as_str() {
        "ref-max" => reference_peak(&reference),
        "one" => 1.0,
        other => return Err(Error::Config(format!("peak must be ref-max|one, got {other}"))),
    };
    let total = psnr(&x, &reference, peak)?;
    println!("psnr_db = {total:.4}");
    let per: Option<Vec<f64>> = if per_frame {
        let values = psnr_per_frame(&x, &reference, peak)?;
        for (i, p) in values.iter().enumerate() {
            println!("frame {i}: {p:.4}");
        }
        Some(values)
    } else {
        None
    };
    if let Some(path) = out_csv {
        use std::io::Write;
        let mut w = std::io::BufWriter::new(std::fs::File::create(&path)?);
        w.write_all(b"frame,psnr_db\n")?;
        writeln!(w, "all,{total:.6}")?;
        if let Some(per) = per {
            for (i, p) in per.iter().enumerate() {
                writeln!(w, "{i},{p:.6}")?;
            }
        }
    }
    if let Some(manifest_path) = args.manifest {
        r.finish(&manifest_path)?;
    }
    Ok(())
}

#[derive(Args)]
struct SweepGammaArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    sinogram: Option<PathBuf>,
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    #[arg(long)]
    res: Option<usize>,
    /// Comma-separated gamma values, e.g. `0,1e-3,1e-2`.
    #[arg(long)]
    gammas: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    frame_batch: Option<usize>,
    #[arg(long)]
    sampling_rate: Option<f64>,
    #[arg(long)]
    log_every: Option<usize>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

fn run_sweep_gamma(args: SweepGammaArgs) -> Result<()> {
    let mut r = Resolver::new(args.config.as_deref(), "sweep-gamma")?;
    let sinogram_path = r.get_path("sinogram", args.sinogram)?;
    let gt_path = r.get_path("ground-truth", args.ground_truth)?;
    let res = r.get("res", args.res, 32usize)?;
    let gammas_raw = r.get("gammas", args.gammas, "0,1e-2".to_string())?;
    let sinogram = read_sinogram(&sinogram_path)?;
    let ground_truth = read_volume(&gt_path)?;
    let desk = NfReconConfig::desk(sinogram.n_frames());
    let epochs = r.get("epochs", args.epochs, desk.epochs)?;
    let frame_batch = r.get("frame-batch", args.frame_batch, desk.frame_batch)?;
    let sampling_rate = r.get("sampling-rate", args.sampling_rate, desk.sampling_rate)?;
    let log_every = r.get("log-every", args.log_every, desk.log_every)?;
    let out_csv = r.get_path("out-csv", args.out_csv)?;

    let gammas: Vec<f64> = gammas_raw
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad gamma {s:?}: {e}")))
        })
        .collect::<Result<_>>()?;
    if gammas.is_empty() {
        return Err(Error::Config("need at least one gamma".into()));
    }

    let grid = ImageGrid::unit_square(res);
    let mut curves: Vec<Vec<(usize, f64)>> = Vec::new();
    for &gamma in &gammas {
        let config = NfReconConfig {
            gamma,
            epochs,
            frame_batch,
            sampling_rate,
            log_every,
            ..NfReconConfig::desk(sinogram.n_frames())
        };
        let out = train(&config, &sinogram, &grid, Some(&ground_truth))?;
        curves.push(
            out.history
                .records
                .iter()
                .filter_map(|rec| rec.psnr.map(|p| (rec.step, p)))
                .collect(),
        );
        let best = out.history.best_psnr().map(|(_, p)| p).unwrap_or(f64::NAN);
        println!("gamma {gamma:.3e}: best PSNR {best:.2} dB");
    }

    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(&out_csv)?);
    write!(w, "step")?;
    for g in &gammas {
        write!(w, ",psnr_gamma_{g:e}")?;
    }
    w.write_all(b"\n")?;
    let n_rows = curves.iter().map(|c| c.len()).min().unwrap_or(0);
    for row in 0..n_rows {
        write!(w, "{}", curves[0][row].0)?;
        for curve in &curves {
            write!(w, ",{:.6}", curve[row].1)?;
        }
        w.write_all(b"\n")?;
    }
    w.flush()?;

    let manifest_path = args.manifest.unwrap_or_else(|| out_csv.with_extension("manifest"));
    let print = r.finish(&manifest_path)?;
    println!("sweep-gamma: wrote {} (fingerprint {print})", out_csv.display());
    Ok(())
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    volume: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Window as `lo,hi`; omitted = min/max of the sequence.
    #[arg(long)]
    window: Option<String>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

fn run_render(args: RenderArgs) -> Result<()> {
    let mut r = Resolver::new(args.config.as_deref(), "render")?;
    let volume_path = r.get_path("volume", args.volume)?;
    let out_dir = r.get_path("out-dir", args.out_dir)?;
    let window_raw = r.get("window", args.window, "auto".to_string())?;
    let window = match window_raw.as_str() {
        "auto" => None,
        spec => {
            let (lo, hi) = spec
                .split_once(',')
                .ok_or_else(|| Error::Config(format!("window must be lo,hi, got {spec}")))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("bad window bound {s:?}: {e}")))
            };
            Some((parse(lo)?, parse(hi)?))
        }
    };
    let u = read_volume(&volume_path)?;
    let paths = export_frames(&u, &out_dir, window)?;
    if let Some(manifest_path) = args.manifest {
        r.finish(&manifest_path)?;
    }
    println!("render: wrote {} frames to {}", paths.len(), out_dir.display());
    Ok(())
}

/// Entry point used by the `dynct` binary; returns a process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own usage/help text; help requests exit 0.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Simulate(args) => run_simulate(args),
        Command::ReconNf(args) => run_recon_nf(args),
        Command::ReconGrid(args) => run_recon_grid(args),
        Command::Eval(args) => run_eval(args),
        Command::SweepGamma(args) => run_sweep_gamma(args),
        Command::Render(args) => run_render(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
