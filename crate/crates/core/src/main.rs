use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use sphereloc::config::Config;
use sphereloc::fiducial::{render_marker_image, BodyModel, Dictionary, Pose};
use sphereloc::partition::{distortion_metric, pixel_cost_with, select_from_layouts, solve_layout, PartitionLayout};
use sphereloc::rectifier::{layout_views, rectify_view, save_rgb, EquirectImage};
use sphereloc::report::{distance_plot, read_results, read_truth, summarize_run, summary_csv};
use sphereloc::sim::{render_frame, replay, results_csv, truth_csv, DetectorKind, Trajectory};
use sphereloc::sphere_geometry::Rotation;
use sphereloc::tracker::Algo;
use sphereloc::{Error, Result};

#[derive(Parser)]
#[command(name = "sphereloc", version, about = "360-degree relative localization toolkit")]
struct Cli {
    /// TOML file overriding the built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve a cap layout for N partitions and write it as JSON.
    Partition {
        #[arg(short, long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve a range of N, tabulate θ, pixel cost and distortion, and pick N.
    SweepN {
        #[arg(long)]
        min: Option<usize>,
        #[arg(long)]
        max: Option<usize>,
        /// Candidate set for the selection, e.g. 6,12,24.
        #[arg(long, value_delimiter = ',')]
        candidates: Option<Vec<usize>>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cut an equirectangular frame into one rectilinear tile per partition.
    Rectify {
        #[arg(long)]
        layout: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        side: Option<u32>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Write a marker image.
    Marker {
        #[arg(long)]
        id: u16,
        #[arg(long, default_value_t = 256)]
        px: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a ground-truth feed directory.
    Simulate(SimulateArgs),
    /// Run the partition-search tracker over a feed.
    Track(TrackArgs),
    /// Summarize result tables against ground truth.
    Report {
        /// Results CSV; repeat for several runs, optionally as label=path.
        #[arg(long, required = true)]
        results: Vec<String>,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Distance-vs-time PNG (needs --truth).
        #[arg(long)]
        plot: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    out_dir: PathBuf,
    /// standard, close or circle.
    #[arg(long)]
    trajectory: Option<String>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    rate: Option<f64>,
    /// Source frame height; width is twice this.
    #[arg(long)]
    height: Option<u32>,
    /// Also render every frame to frames/frame_NNNNN.png.
    #[arg(long)]
    frames: bool,
    /// Body file to use instead of the configured one.
    #[arg(long)]
    body: Option<PathBuf>,
}

#[derive(Args)]
struct TrackArgs {
    #[arg(long)]
    layout: PathBuf,
    /// Feed directory from `simulate`, or gen:<preset>[:<duration>[:<rate>]].
    #[arg(long)]
    feed: String,
    #[arg(long)]
    algo: Option<Algo>,
    /// Detector calls per frame.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    detector: Option<DetectorKind>,
    /// Seed of the geometric detector's draws.
    #[arg(long)]
    seed: Option<u64>,
    /// Drop frames that arrive while the previous one is still processing.
    #[arg(long)]
    realtime: bool,
    #[arg(long)]
    out: PathBuf,
}

/// Feed description stored next to the ground truth.
#[derive(Serialize, Deserialize)]
struct FeedMeta {
    trajectory: Trajectory,
    src_height: u32,
    frames: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = Config::load_or_default(cli.config.as_deref())?;
    match cli.cmd {
        Cmd::Partition { n, seed, out } => {
            let layout = solve_layout(n, seed, &cfg.solver)?;
            layout.save(&out)?;
            println!("n={} theta={:.3} deg -> {}", layout.n(), layout.theta_deg(), out.display());
            Ok(())
        }
        Cmd::SweepN { min, max, candidates, seed, out } => sweep(&cfg, min, max, candidates, seed, out.as_deref()),
        Cmd::Rectify { layout, input, side, out_dir } => {
            let layout = PartitionLayout::load(&layout)?;
            let src = EquirectImage::load(&input)?;
            std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
            let views = layout_views(&layout, side.unwrap_or(cfg.rectifier.tile_side))?;
            views.into_par_iter().try_for_each(|g| {
                let tile = rectify_view(&src, g, cfg.rectifier.interpolation)?;
                save_rgb(tile.image(), &out_dir.join(format!("part_{}.png", g.partition_index)))
            })?;
            println!("{} tiles -> {}", layout.n(), out_dir.display());
            Ok(())
        }
        Cmd::Marker { id, px, out } => {
            let img = render_marker_image(Dictionary::standard(), id, px)?;
            let out = out.unwrap_or_else(|| PathBuf::from(format!("marker_{id}.png")));
            save_rgb(&img, &out)?;
            println!("{}", out.display());
            Ok(())
        }
        Cmd::Simulate(a) => simulate(&cfg, a),
        Cmd::Track(a) => track(&cfg, a),
        Cmd::Report { results, truth, out, plot } => report(results, truth, out, plot),
    }
}

fn sweep(cfg: &Config, min: Option<usize>, max: Option<usize>, candidates: Option<Vec<usize>>, seed: u64, out: Option<&Path>) -> Result<()> {
    let sel = &cfg.selection;
    let (lo, hi) = (min.unwrap_or(sel.sweep_min), max.unwrap_or(sel.sweep_max));
    if lo < 1 || lo > hi {
        return Err(Error::InvalidArgument(format!("empty sweep range {lo}..={hi}")));
    }
    let candidates = candidates.unwrap_or_else(|| sel.candidates.clone());
    let mut ns: Vec<usize> = (lo..=hi).chain(candidates.iter().copied()).collect();
    ns.sort_unstable();
    ns.dedup();
    let layouts = ns.par_iter().map(|&n| solve_layout(n, seed, &cfg.solver)).collect::<Result<Vec<_>>>()?;
    let mut table = String::from("n,theta_deg,pixel_cost,distortion\n");
    for l in layouts.iter().filter(|l| (lo..=hi).contains(&l.n())) {
        let p = pixel_cost_with(l.n(), l.theta_deg(), sel.height, sel.width, sel.pixel_form);
        table.push_str(&format!("{},{:.4},{:.1},{:.6}\n", l.n(), l.theta_deg(), p, distortion_metric(l.theta_deg())));
    }
    let chosen: Vec<PartitionLayout> = layouts.into_iter().filter(|l| candidates.contains(&l.n())).collect();
    let selection = select_from_layouts(&chosen, sel.height, sel.width, &sel.weights, sel.pixel_form)?;
    match out {
        Some(p) => std::fs::write(p, &table).map_err(|e| Error::io(p, e))?,
        None => print!("{table}"),
    }
    for row in &selection.table {
        println!("candidate n={} theta={:.2} total={:.4}", row.n, row.theta_deg, row.total);
    }
    println!("selected n={}", selection.best_n);
    Ok(())
}

fn simulate(cfg: &Config, a: SimulateArgs) -> Result<()> {
    let e = &cfg.experiment;
    let traj = Trajectory::preset(
        a.trajectory.as_deref().unwrap_or(&e.trajectory),
        a.duration.unwrap_or(e.duration_s),
        a.rate.unwrap_or(e.rate_hz),
    )?;
    let body = match &a.body {
        Some(p) => BodyModel::load(p)?,
        None => cfg.body()?,
    };
    let height = a.height.unwrap_or(e.src_height);
    let dir = &a.out_dir;
    std::fs::create_dir_all(dir).map_err(|err| Error::io(dir, err))?;
    let rows: Vec<(usize, f64, Pose)> =
        (0..traj.frame_count()).map(|k| (k, traj.frame_time(k), traj.pose(traj.frame_time(k)))).collect();
    write(&dir.join("truth.csv"), truth_csv(&rows))?;
    body.save(&dir.join("body.json"))?;
    let meta = FeedMeta { trajectory: traj.clone(), src_height: height, frames: rows.len() };
    write(&dir.join("meta.json"), serde_json::to_string_pretty(&meta).expect("meta serializes"))?;
    if a.frames {
        let fdir = dir.join("frames");
        std::fs::create_dir_all(&fdir).map_err(|err| Error::io(&fdir, err))?;
        rows.par_iter().try_for_each(|(k, _, pose)| {
            let img = render_frame(pose, &body, Dictionary::standard(), height, e.supersample)?;
            img.save(&fdir.join(frame_name(*k)))
        })?;
    }
    println!("{} frames -> {}", rows.len(), dir.display());
    Ok(())
}

fn frame_name(k: usize) -> String {
    format!("frame_{k:05}.png")
}

fn write(path: &Path, text: String) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn pose_of(q: [f64; 4], t: [f64; 3]) -> Pose {
    let q = nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]));
    Pose::new(Rotation::from_quaternion(&q), nalgebra::Vector3::from(t))
}

fn track(cfg: &Config, a: TrackArgs) -> Result<()> {
    let layout = PartitionLayout::load(&a.layout)?;
    let mut ecfg = cfg.experiment_config();
    if let Some(algo) = a.algo {
        ecfg.algo = algo;
    }
    if a.budget.is_some() {
        ecfg.tracker.budget = a.budget;
    }
    if let Some(d) = a.detector {
        ecfg.detector = d;
    }
    if let Some(s) = a.seed {
        ecfg.geometric.seed = s;
    }
    ecfg.realtime.enabled |= a.realtime;
    let started = Instant::now();
    let report = if let Some(spec) = a.feed.strip_prefix("gen:") {
        let mut parts = spec.split(':');
        let name = parts.next().unwrap_or("standard");
        let num = |s: Option<&str>, d: f64| -> Result<f64> {
            s.map_or(Ok(d), |v| v.parse().map_err(|_| Error::InvalidArgument(format!("bad number '{v}' in feed spec"))))
        };
        let duration = num(parts.next(), cfg.experiment.duration_s)?;
        let rate = num(parts.next(), cfg.experiment.rate_hz)?;
        let traj = Trajectory::preset(name, duration, rate)?;
        sphereloc::sim::run_experiment(&traj, &layout, &cfg.body()?, &ecfg)?
    } else {
        let dir = PathBuf::from(&a.feed);
        let meta_path = dir.join("meta.json");
        let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: FeedMeta = serde_json::from_str(&text).map_err(|e| Error::format(&meta_path, e))?;
        let body = BodyModel::load(&dir.join("body.json"))?;
        let truth = read_truth(&dir.join("truth.csv"))?;
        ecfg.src_height = meta.src_height;
        let poses: Vec<Pose> = truth.iter().map(|r| pose_of([r.qw, r.qx, r.qy, r.qz], [r.x, r.y, r.z])).collect();
        let fdir = dir.join("frames");
        let image_of = |k: usize| -> Result<EquirectImage> {
            let p = fdir.join(frame_name(k));
            if p.exists() {
                EquirectImage::load(&p)
            } else {
                render_frame(&poses[k], &body, Dictionary::standard(), meta.src_height, ecfg.supersample)
            }
        };
        replay(truth.len(), |k| truth[k].t, |k| poses[k], &image_of, &layout, &body, &ecfg)?
    };
    write(&a.out, results_csv(&report.rows))?;
    let s = report.summary;
    println!(
        "frames={} processed={} localizations={} mean_calls={:.3} mean_abs_distance_error_m={:.4} pixels={} wall_clock_s={:.2}",
        s.frames,
        s.processed,
        s.detections,
        s.mean_detector_calls,
        s.mean_abs_distance_error_m,
        s.pixels_processed,
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

fn report(results: Vec<String>, truth: Option<PathBuf>, out: Option<PathBuf>, plot: Option<PathBuf>) -> Result<()> {
    let truth = truth.as_deref().map(read_truth).transpose()?;
    let mut runs = Vec::new();
    for spec in &results {
        let (label, path) = match spec.split_once('=') {
            Some((l, p)) => (l.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(spec);
                (p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| spec.clone()), p)
            }
        };
        runs.push((label, read_results(&path)?));
    }
    let summaries: Vec<_> = runs.iter().map(|(l, rows)| summarize_run(l, rows, truth.as_deref())).collect();
    let table = summary_csv(&summaries);
    match &out {
        Some(p) => write(p, table)?,
        None => print!("{table}"),
    }
    if let Some(p) = plot {
        let truth = truth.ok_or_else(|| Error::InvalidArgument("--plot needs --truth".into()))?;
        save_rgb(&distance_plot(&truth, &runs, 960, 400), &p)?;
    }
    Ok(())
}
