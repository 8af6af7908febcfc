//! Subcommand implementations.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use latentslam_core::domain::{FrameRecord, Pose2D};
use latentslam_core::eval::{aliasing_report, AliasingReport, PlaceSample, SeparationParams};
use latentslam_core::experience_map::{
    load_map, save_map, topology_metrics, write_edge_csv, MapFile, MetricParams, TopologyMetrics,
};
use latentslam_core::io::write_atomic;
use latentslam_core::latent::{write_log_csv, Architecture, Checkpoint, ModelParams, TrainConfig, Trainer};
use latentslam_core::pipeline::{process_frame, trace, FrameReport, SlamConfig, SlamState};
use latentslam_core::sim::{generate_dataset, integrate, load_dataset, save_dataset, Dataset, Sequence, SimConfig};
use serde::{Deserialize, Serialize};

use crate::args::{Cli, Command, EvalArgs, PlotArgs, SimulateArgs, SlamArgs, TrainArgs};
use crate::{plot, CliResult, Failure};

pub fn dispatch(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(a, cli.seed),
        Command::Train(a) => train(a, cli.seed),
        Command::Slam(a) => slam(a),
        Command::Eval(a) => eval(a),
        Command::Plot(a) => plot_cmd(a),
    }
}

fn runtime(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::validation(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))
}

fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::validation(format!("{what} {} not found", path.display())))
    }
}

fn open_dataset(dir: &Path) -> CliResult<Dataset> {
    if !dir.join("manifest.json").is_file() {
        return Err(Failure::validation(format!("{} is not a dataset directory", dir.display())));
    }
    Ok(load_dataset(dir)?)
}

fn pick_sequence<'a>(data: &'a Dataset, name: Option<&str>) -> CliResult<&'a Sequence> {
    match name {
        None => data
            .sequences
            .first()
            .ok_or_else(|| Failure::validation("dataset has no sequences")),
        Some(n) => data
            .sequences
            .iter()
            .find(|s| s.entry.name == n)
            .ok_or_else(|| Failure::validation(format!("no sequence named `{n}`"))),
    }
}

pub fn simulate(a: &SimulateArgs, seed: u64) -> CliResult<()> {
    let mut cfg: SimConfig = match &a.spec {
        Some(p) => read_json(p)?,
        None => SimConfig::default(),
    };
    if let Some(v) = a.flights {
        cfg.flights = v;
    }
    if let Some(v) = a.frames {
        cfg.frames_per_flight = v;
    }
    if let Some(v) = a.aliasing {
        cfg.warehouse.aliasing_level = v;
    }
    if let Some(v) = a.image {
        cfg.camera.shape = v;
    }
    if let Some(v) = a.odometry_std_xy {
        cfg.odometry.gaussian_std_xy = v;
    }
    if let Some(v) = a.odometry_std_theta {
        cfg.odometry.gaussian_std_theta = v;
    }
    if let Some(v) = a.reset_probability {
        cfg.odometry.reset_probability = v;
    }
    if let Some(v) = a.pixel_noise {
        cfg.pixel_noise = v;
    }
    cfg.validate()?;
    let data = generate_dataset(&cfg, seed)?;
    save_dataset(&a.out, &data)?;
    eprintln!(
        "wrote {} sequences, {} frames to {}",
        data.sequences.len(),
        data.frame_count(),
        a.out.display()
    );
    Ok(())
}

fn loss_log_path(a: &TrainArgs) -> PathBuf {
    a.log.clone().unwrap_or_else(|| a.out.with_extension("loss.csv"))
}

pub fn train(a: &TrainArgs, seed: u64) -> CliResult<()> {
    let data = open_dataset(&a.dataset)?;
    let (Some(shape), Some(action_dim)) = (data.image_shape(), data.action_dim()) else {
        return Err(Failure::validation("dataset has no frames"));
    };
    let config = TrainConfig {
        epochs: a.epochs,
        learning_rate: a.learning_rate,
        batch_size: a.batch_size,
        sequence_length: a.sequence_length,
        seed,
        kl_weight: a.kl_weight,
    };
    config.validate()?;

    let mut trainer = match &a.resume {
        Some(path) => {
            require_file(path, "checkpoint")?;
            let ck = Checkpoint::load(path)?;
            let arch = ck.params.architecture();
            if arch.observation != shape || arch.action_dim != action_dim {
                return Err(Failure::validation(format!(
                    "checkpoint expects {:?} observations and {} actions, dataset has {:?} and {}",
                    arch.observation, arch.action_dim, shape, action_dim
                )));
            }
            let adam = ck
                .adam
                .ok_or_else(|| Failure::validation(format!("{} has no optimizer state", path.display())))?;
            Trainer::resume(ck.params, config.clone(), adam, ck.epochs_done)?
        }
        None => {
            let std = Architecture::standard(shape, action_dim)?;
            let arch = Architecture::new(
                a.latent_dim.unwrap_or(std.latent_dim),
                action_dim,
                shape,
                a.channels.clone().unwrap_or(std.conv_channels),
                a.hidden.unwrap_or(std.hidden),
            )?;
            Trainer::new(ModelParams::init(arch, seed)?, config.clone())?
        }
    };

    let remaining = a.epochs.saturating_sub(trainer.epochs_done());
    let sequences: Vec<Vec<FrameRecord>> = data.sequences.into_iter().map(|s| s.frames).collect();
    let started = Instant::now();
    trainer.run(&sequences, remaining, |e| {
        eprintln!(
            "epoch {:>4}  free energy {:.4}  kl {:.4}  recon {:.4}  ({:.1}s)",
            e.epoch,
            e.free_energy,
            e.kl_term,
            e.recon_term,
            started.elapsed().as_secs_f64()
        );
    })?;
    let epochs_done = trainer.epochs_done();
    let outcome = trainer.finish();

    let mut csv = Vec::new();
    write_log_csv(&mut csv, &outcome.log).map_err(runtime)?;
    let ck = Checkpoint {
        params: outcome.params,
        train_config: Some(config),
        epochs_done,
        final_epoch: outcome.log.last().copied(),
        adam: Some(outcome.adam),
    };
    ck.save(&a.out)?;
    write_atomic(&loss_log_path(a), &csv)?;
    eprintln!("wrote {} after {epochs_done} epochs", a.out.display());
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlamSummary {
    pub sequence: String,
    pub frames: usize,
    pub nodes: usize,
    pub links: usize,
    pub loop_closures: usize,
    pub view_cells: usize,
    pub mean_frame_ms: f64,
    pub median_frame_ms: f64,
}

fn slam_config(a: &SlamArgs) -> SlamConfig {
    let mut cfg = SlamConfig::default();
    if let Some(v) = a.view_threshold {
        cfg.view_match_threshold = v;
    }
    if let Some(v) = a.match_radius {
        cfg.map.match_radius = v;
    }
    if let Some(v) = a.injection_energy {
        cfg.can.injection_energy = v;
    }
    if let Some(v) = a.inhibit {
        cfg.can.inhibit_amount = v;
    }
    if let Some(v) = a.excite_sigma_xy {
        cfg.can.excite_sigma_xy = v;
    }
    if let Some(v) = a.excite_sigma_theta {
        cfg.can.excite_sigma_theta = v;
    }
    if let Some(v) = a.can_iterations {
        cfg.can_iterations = v;
    }
    if let Some(v) = a.relax_iterations {
        cfg.map.relax_iterations = v;
    }
    if let Some(v) = a.relax_alpha {
        cfg.map.relax_alpha = v;
    }
    if a.relax_every_frame {
        cfg.map.relax_every_frame = true;
    }
    cfg
}

pub fn slam(a: &SlamArgs) -> CliResult<()> {
    let cfg = slam_config(a);
    cfg.validate()?;
    let data = open_dataset(&a.dataset)?;
    let seq = pick_sequence(&data, a.sequence.as_deref())?;
    require_file(&a.checkpoint, "checkpoint")?;
    let ck = Checkpoint::load(&a.checkpoint)?;
    let arch = ck.params.architecture();
    if arch.observation != seq.entry.image_shape || arch.action_dim != seq.entry.action_dim {
        return Err(Failure::validation(format!(
            "checkpoint expects {:?} observations and {} actions, sequence `{}` has {:?} and {}",
            arch.observation, arch.action_dim, seq.entry.name, seq.entry.image_shape, seq.entry.action_dim
        )));
    }
    let n = a.max_frames.map_or(seq.frames.len(), |m| m.min(seq.frames.len()));
    let frames = &seq.frames[..n];
    if frames.is_empty() {
        return Err(Failure::validation("no frames to process"));
    }

    let mut state = SlamState::new(arch.latent_dim, &cfg)?;
    let mut reports = Vec::with_capacity(n);
    let mut times = Vec::with_capacity(n);
    for f in frames {
        let t0 = Instant::now();
        reports.push(process_frame(&mut state, f, &ck.params, &cfg)?);
        times.push(t0.elapsed().as_secs_f64() * 1e3);
    }

    let config = serde_json::json!({ "slam": cfg, "sequence": seq.entry.name });
    let map_file = MapFile::new(state.map, state.store, config);
    let summary = SlamSummary {
        sequence: seq.entry.name.clone(),
        frames: n,
        nodes: map_file.map.experiences().len(),
        links: map_file.map.links().len(),
        loop_closures: map_file.map.loop_closure_count(),
        view_cells: map_file.view_cells.len(),
        mean_frame_ms: times.iter().sum::<f64>() / n as f64,
        median_frame_ms: median(&mut times),
    };
    let mut jsonl = String::new();
    for r in &reports {
        jsonl.push_str(&r.to_json_line());
        jsonl.push('\n');
    }
    let mut summary_json = serde_json::to_vec_pretty(&summary).map_err(runtime)?;
    summary_json.push(b'\n');

    fs::create_dir_all(&a.out)
        .map_err(|e| runtime(anyhow::anyhow!("cannot create {}: {e}", a.out.display())))?;
    save_map(&a.out.join("map.json"), &map_file)?;
    write_atomic(&a.out.join("reports.jsonl"), jsonl.as_bytes())?;
    write_atomic(&a.out.join("edges.csv"), write_edge_csv(&map_file.map).as_bytes())?;
    write_atomic(&a.out.join("summary.json"), &summary_json)?;
    println!(
        "nodes {}  links {}  loop closures {}  mean frame {:.2} ms",
        summary.nodes, summary.links, summary.loop_closures, summary.mean_frame_ms
    );
    Ok(())
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn read_reports(path: &Path) -> CliResult<Vec<FrameReport>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::validation(format!("cannot read {}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Failure::validation(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub sequence: String,
    pub frames: usize,
    pub topology: TopologyMetrics,
    /// Distance between the last dead-reckoned pose and the true pose, both
    /// relative to the start.
    pub dead_reckoning_endpoint_error: f64,
    /// Mean node error over dead-reckoning endpoint error.
    pub node_error_ratio: Option<f64>,
    /// `None` when the dataset has no simulator settings or no place pairs.
    pub aliasing: Option<AliasingReport>,
}

/// Ground truth expressed relative to the first frame.
fn relative_truth(frames: &[FrameRecord]) -> CliResult<Vec<Pose2D>> {
    let gt: Option<Vec<Pose2D>> = frames.iter().map(|f| f.ground_truth).collect();
    let gt = gt.ok_or_else(|| Failure::validation("sequence has no ground truth"))?;
    Ok(gt.iter().map(|g| gt[0].between(g)).collect())
}

pub fn evaluate(map: &MapFile, seq: &Sequence, reports: &[FrameReport], dataset: &Dataset, a: &EvalArgs) -> CliResult<EvalReport> {
    if reports.is_empty() || reports.len() > seq.frames.len() {
        return Err(Failure::validation(format!(
            "{} reports for a sequence of {} frames",
            reports.len(),
            seq.frames.len()
        )));
    }
    let frames = &seq.frames[..reports.len()];
    let truth = relative_truth(frames)?;
    let params = MetricParams {
        radius: a.revisit_radius,
        min_gap: a.revisit_gap,
        ..MetricParams::default()
    };
    let topology = topology_metrics(&map.map, &trace(frames, reports), &params)?;
    let deltas: Vec<_> = frames.iter().map(|f| f.odometry).collect();
    let dr = integrate(&deltas);
    let dead_reckoning_endpoint_error = dr.last().expect("non-empty").distance(truth.last().expect("non-empty"));
    let node_error_ratio =
        (dead_reckoning_endpoint_error > 0.0).then(|| topology.mean_node_error / dead_reckoning_endpoint_error);

    let aliasing = match &dataset.manifest.sim {
        None => None,
        Some(sim) => {
            let sequence = dataset.sequences.iter().position(|s| s.entry.name == seq.entry.name).unwrap_or(0);
            let samples: Vec<PlaceSample> = frames
                .iter()
                .enumerate()
                .map(|(frame, f)| PlaceSample {
                    sequence,
                    frame,
                    pose: f.ground_truth.expect("checked above"),
                })
                .collect();
            let latents: Vec<&[f64]> = reports.iter().map(|r| r.latent.as_slice()).collect();
            let pixels: Vec<&[f64]> = frames.iter().map(|f| f.observation.pixels()).collect();
            let sep = SeparationParams {
                position_tolerance: a.place_tolerance,
                heading_tolerance: a.place_heading_deg.to_radians(),
                min_frame_gap: a.place_gap,
                ..SeparationParams::default()
            };
            aliasing_report(&samples, &latents, &pixels, &sim.warehouse, &sep).ok()
        }
    };
    Ok(EvalReport {
        sequence: seq.entry.name.clone(),
        frames: frames.len(),
        topology,
        dead_reckoning_endpoint_error,
        node_error_ratio,
        aliasing,
    })
}

fn map_sequence_name(map: &MapFile) -> Option<String> {
    map.config.get("sequence")?.as_str().map(str::to_string)
}

pub fn eval(a: &EvalArgs) -> CliResult<()> {
    require_file(&a.map, "map")?;
    let map = load_map(&a.map)?;
    let data = open_dataset(&a.dataset)?;
    let seq = pick_sequence(&data, map_sequence_name(&map).as_deref())?;
    let reports_path = a
        .reports
        .clone()
        .unwrap_or_else(|| a.map.with_file_name("reports.jsonl"));
    let reports = read_reports(&reports_path)?;
    let report = evaluate(&map, seq, &reports, &data, a)?;
    let mut json = serde_json::to_vec_pretty(&report).map_err(runtime)?;
    json.push(b'\n');
    match &a.out {
        Some(p) => write_atomic(p, &json)?,
        None => std::io::stdout().write_all(&json).map_err(runtime)?,
    }
    Ok(())
}

pub fn plot_cmd(a: &PlotArgs) -> CliResult<()> {
    let overlay = match &a.dataset {
        Some(dir) => {
            let data = open_dataset(dir)?;
            let seq = pick_sequence(&data, a.sequence.as_deref())?;
            let deltas: Vec<_> = seq.frames.iter().map(|f| f.odometry).collect();
            Some(integrate(&deltas))
        }
        None => None,
    };
    let svg = if let Some(path) = &a.map {
        require_file(path, "map")?;
        let map = load_map(path)?;
        plot::map_svg(&map.map, overlay.as_deref(), a.width)
    } else {
        let path = a.reports.as_ref().expect("clap requires map or reports");
        let reports = read_reports(path)?;
        let poses: Vec<Pose2D> = reports.iter().map(|r| r.decoded_pose).collect();
        plot::trace_svg(&poses, overlay.as_deref(), a.width)
    };
    write_atomic(&a.out, svg.as_bytes())?;
    Ok(())
}
