//! Subcommand implementations: scenario execution, artifact writing, and
//! the latency benchmark. Sweep runs fan out over a worker pool; every
//! artifact embeds the fully resolved config so results are reproducible
//! from their own files.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{Context, Result};
use gmppi::engine::GmppiController;
use gmppi::perception::{write_pfm, BodyPose};
use gmppi::se3::flat_reference;
use gmppi::sim::forest::{generate_forest, Forest};
use gmppi::sim::metrics::RunMetrics;
use gmppi::sim::render::render_depth;
use gmppi::sim::runner::{run_closed_loop, ControllerKind, RunOutcome};
use gmppi::sim::scenario::{tilt_for_speed, ScenarioConfig};
use gmppi::trajectory::ReferenceTrajectory;
use gmppi::{State, Vec3};

pub const AGGREGATE_HEADER: &str = "seed,speed,success,pos_rmse,heading_rmse,max_v,max_a";

/// Replaces the file only after the full content is on disk.
pub fn write_atomic(path: &Path, content: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, content).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// Runs `jobs` closures over `workers` OS threads, preserving job order in
/// the results regardless of completion order.
pub fn run_pool<J, T, F>(jobs: Vec<J>, workers: usize, f: F) -> Vec<T>
where
    J: Sync,
    T: Send,
    F: Fn(&J) -> T + Sync,
{
    let n = jobs.len();
    let workers = workers.clamp(1, n.max(1));
    let results: Vec<Mutex<Option<T>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let out = f(&jobs[i]);
                *results[i].lock().unwrap() = Some(out);
            });
        }
    });
    results
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("worker completed the job"))
        .collect()
}

/// Sweep-facing speed of a trajectory (0 for hover).
fn trajectory_speed(t: &ReferenceTrajectory) -> f64 {
    match *t {
        ReferenceTrajectory::Hover { .. } => 0.0,
        ReferenceTrajectory::Figure8 { peak_speed, .. } => peak_speed,
        ReferenceTrajectory::Hypotrochoid { peak_speed, .. } => peak_speed,
        ReferenceTrajectory::Line { speed, .. } => speed,
    }
}

fn aggregate_row(seed: u64, speed: f64, m: &RunMetrics) -> String {
    format!(
        "{seed},{speed},{},{},{},{},{}\n",
        m.success as u8, m.pos_rmse, m.heading_rmse, m.max_speed, m.max_accel
    )
}

/// Writes one run's artifacts: the log CSV and a metrics JSON embedding
/// the resolved config.
fn write_run_artifacts(
    out_dir: &Path,
    stem: &str,
    cfg: &ScenarioConfig,
    label: &str,
    seed: u64,
    outcome: &RunOutcome,
) -> Result<()> {
    let csv_path = out_dir.join(format!("{stem}.csv"));
    write_atomic(&csv_path, outcome.log.to_csv().as_bytes())?;
    let report = serde_json::json!({
        "label": label,
        "seed": seed,
        "speed": trajectory_speed(&cfg.trajectory),
        "metrics": outcome.metrics,
        "failure": outcome.log.failure,
        "config": cfg,
    });
    let json_path = out_dir.join(format!("{stem}.metrics.json"));
    write_atomic(&json_path, serde_json::to_string_pretty(&report)?.as_bytes())?;
    Ok(())
}

fn print_run_line(label: &str, seed: u64, m: &RunMetrics) {
    println!(
        "{label} seed={seed} success={} pos_rmse={:.4} heading_rmse={:.4} max_v={:.3} max_a={:.3}",
        m.success, m.pos_rmse, m.heading_rmse, m.max_speed, m.max_accel
    );
}

/// One track/ablation variant: which controller runs and under which
/// ablation switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Gmppi,
    Se3,
    NoSe3,
    ConstDt,
    ConstNoise,
}

impl Variant {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "gmppi" => Self::Gmppi,
            "se3" => Self::Se3,
            "no_se3" => Self::NoSe3,
            "const_dt" => Self::ConstDt,
            "const_noise" => Self::ConstNoise,
            _ => anyhow::bail!(
                "unknown variant '{s}' (expected gmppi, se3, no_se3, const_dt, const_noise)"
            ),
        })
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Gmppi => "gmppi",
            Self::Se3 => "se3",
            Self::NoSe3 => "no_se3",
            Self::ConstDt => "const_dt",
            Self::ConstNoise => "const_noise",
        }
    }

    fn apply(self, cfg: &mut ScenarioConfig) -> ControllerKind {
        match self {
            Self::Gmppi => ControllerKind::Gmppi,
            Self::Se3 => ControllerKind::Se3,
            Self::NoSe3 => {
                cfg.controller.ablation.no_se3 = true;
                ControllerKind::Gmppi
            }
            Self::ConstDt => {
                cfg.controller.ablation.const_dt = true;
                ControllerKind::Gmppi
            }
            Self::ConstNoise => {
                cfg.controller.ablation.const_noise_cost = true;
                ControllerKind::Gmppi
            }
        }
    }
}

/// Replaces the configured trajectory when `--traj` names a different
/// kind; parameters of the new kind are its defaults (tune via --set).
pub fn select_trajectory(cfg: &mut ScenarioConfig, traj: Option<&str>) -> Result<()> {
    let Some(name) = traj else { return Ok(()) };
    let same = matches!(
        (&cfg.trajectory, name),
        (ReferenceTrajectory::Hover { .. }, "hover")
            | (ReferenceTrajectory::Figure8 { .. }, "fig8")
            | (ReferenceTrajectory::Hypotrochoid { .. }, "hypotrochoid")
            | (ReferenceTrajectory::Line { .. }, "line")
    );
    if same {
        return Ok(());
    }
    cfg.trajectory = match name {
        "hover" => ReferenceTrajectory::default(),
        "fig8" => toml::from_str("kind = \"figure8\"")?,
        "hypotrochoid" => toml::from_str("kind = \"hypotrochoid\"")?,
        // The default line sits on the ground; fly it at hover altitude.
        "line" => ReferenceTrajectory::Line {
            start: Vec3::new(0.0, 0.0, 1.5),
            end: Vec3::new(40.0, 0.0, 1.5),
            speed: 5.0,
        },
        other => anyhow::bail!("unknown trajectory '{other}'"),
    };
    Ok(())
}

pub struct TrackArgs {
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
    pub traj: Option<String>,
}

pub fn cmd_track(
    base: &ScenarioConfig,
    args: &TrackArgs,
    out_dir: &Path,
    workers: usize,
) -> Result<()> {
    let mut cfg = base.clone();
    select_trajectory(&mut cfg, args.traj.as_deref())?;
    std::fs::create_dir_all(out_dir)?;

    let traj_name = match &cfg.trajectory {
        ReferenceTrajectory::Hover { .. } => "hover",
        ReferenceTrajectory::Figure8 { .. } => "fig8",
        ReferenceTrajectory::Hypotrochoid { .. } => "hypotrochoid",
        ReferenceTrajectory::Line { .. } => "line",
    };

    let jobs: Vec<(Variant, u64)> = args
        .variants
        .iter()
        .flat_map(|v| args.seeds.iter().map(move |s| (*v, *s)))
        .collect();
    let speed = trajectory_speed(&cfg.trajectory);

    let results = run_pool(jobs, workers, |(variant, seed)| {
        let mut run_cfg = cfg.clone();
        run_cfg.run.seed = *seed;
        let kind = variant.apply(&mut run_cfg);
        let outcome = run_closed_loop(&run_cfg, kind, None);
        (run_cfg, *variant, *seed, outcome)
    });

    let mut aggregate = String::from(AGGREGATE_HEADER);
    aggregate.push('\n');
    for (run_cfg, variant, seed, outcome) in &results {
        let stem = format!("track_{traj_name}_{}_seed{seed}", variant.label());
        write_run_artifacts(out_dir, &stem, run_cfg, variant.label(), *seed, outcome)?;
        aggregate.push_str(&aggregate_row(*seed, speed, &outcome.metrics));
        print_run_line(variant.label(), *seed, &outcome.metrics);
    }
    write_atomic(&out_dir.join("track_aggregate.csv"), aggregate.as_bytes())?;
    Ok(())
}

pub struct ForestArgs {
    pub speeds: Vec<f64>,
    pub seeds: Vec<u64>,
}

pub fn cmd_forest(
    base: &ScenarioConfig,
    args: &ForestArgs,
    out_dir: &Path,
    workers: usize,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;

    // The sweep flies the straight corridor; a configured line keeps its
    // geometry and takes the swept speed.
    let (start, end) = match base.trajectory {
        ReferenceTrajectory::Line { start, end, .. } => (start, end),
        _ => (Vec3::new(0.0, 0.0, 1.5), Vec3::new(40.0, 0.0, 1.5)),
    };

    let forests: Vec<Forest> = args
        .seeds
        .iter()
        .map(|&seed| generate_forest(base.forest.density, base.forest.bounds, seed, [start.x, start.y]))
        .collect();
    for (seed, forest) in args.seeds.iter().zip(&forests) {
        let path = out_dir.join(format!("forest_seed{seed}.json"));
        write_atomic(&path, serde_json::to_string_pretty(forest)?.as_bytes())?;
    }

    let jobs: Vec<(f64, usize)> = args
        .speeds
        .iter()
        .flat_map(|sp| (0..args.seeds.len()).map(move |si| (*sp, si)))
        .collect();

    let results = run_pool(jobs, workers, |(speed, seed_idx)| {
        let seed = args.seeds[*seed_idx];
        let mut cfg = base.clone();
        cfg.trajectory = ReferenceTrajectory::Line {
            start,
            end,
            speed: *speed,
        };
        cfg.camera.tilt_deg = tilt_for_speed(*speed);
        cfg.run.seed = seed;
        let outcome = run_closed_loop(&cfg, ControllerKind::Gmppi, Some(&forests[*seed_idx]));
        (cfg, *speed, seed, outcome)
    });

    let mut aggregate = String::from(AGGREGATE_HEADER);
    aggregate.push('\n');
    let mut by_speed: Vec<(f64, usize, usize)> = Vec::new();
    for (cfg, speed, seed, outcome) in &results {
        let stem = format!("forest_v{speed}_seed{seed}");
        write_run_artifacts(out_dir, &stem, cfg, "gmppi", *seed, outcome)?;
        aggregate.push_str(&aggregate_row(*seed, *speed, &outcome.metrics));
        print_run_line(&format!("forest v={speed}"), *seed, &outcome.metrics);
        match by_speed.iter_mut().find(|(s, _, _)| s == speed) {
            Some((_, ok, total)) => {
                *ok += outcome.metrics.success as usize;
                *total += 1;
            }
            None => by_speed.push((*speed, outcome.metrics.success as usize, 1)),
        }
    }
    write_atomic(&out_dir.join("forest_aggregate.csv"), aggregate.as_bytes())?;

    let summary: Vec<_> = by_speed
        .iter()
        .map(|(speed, ok, total)| {
            serde_json::json!({
                "speed": speed,
                "successes": ok,
                "runs": total,
                "success_rate": *ok as f64 / *total as f64,
            })
        })
        .collect();
    write_atomic(
        &out_dir.join("forest_summary.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "config": base,
            "by_speed": summary,
        }))?
        .as_bytes(),
    )?;
    for (speed, ok, total) in &by_speed {
        println!("speed {speed}: {ok}/{total} success");
    }
    Ok(())
}

fn percentile(sorted: &[u64], p: f64) -> u64 {
    let idx = ((sorted.len() as f64 - 1.0) * p).round() as usize;
    sorted[idx]
}

type PhaseGetter = fn(&gmppi::engine::PhaseTimings) -> u64;

/// Phase accessors, in execution order, for per-phase latency stats.
const PHASES: [(&str, PhaseGetter); 9] = [
    ("schedule", |t| t.schedule_ns),
    ("resample", |t| t.resample_ns),
    ("reference", |t| t.reference_ns),
    ("nominal", |t| t.nominal_ns),
    ("rollouts", |t| t.rollouts_ns),
    ("cost", |t| t.cost_ns),
    ("weights", |t| t.weights_ns),
    ("update", |t| t.update_ns),
    ("total", |t| t.total_ns),
];

fn phase_stats(timings: &[gmppi::engine::PhaseTimings]) -> serde_json::Value {
    let mut out = serde_json::Map::new();
    for (name, get) in PHASES {
        let mut ns: Vec<u64> = timings.iter().map(get).collect();
        ns.sort_unstable();
        out.insert(
            name.to_string(),
            serde_json::json!({
                "median_ns": percentile(&ns, 0.5),
                "p95_ns": percentile(&ns, 0.95),
            }),
        );
    }
    serde_json::Value::Object(out)
}

/// Latency benchmark on a synthetic mid-flight scene: repeated controller
/// iterations against a rendered forest frame, swept over thread counts,
/// with outputs asserted identical across the sweep.
pub fn cmd_bench(base: &ScenarioConfig, iterations: usize, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let forest = generate_forest(base.forest.density, base.forest.bounds, 0, [0.0, 0.0]);
    let traj = ReferenceTrajectory::Line {
        start: Vec3::new(0.0, 0.0, 1.5),
        end: Vec3::new(40.0, 0.0, 1.5),
        speed: 5.0,
    };
    let params = base.vehicle;
    let (r0, _) = flat_reference(&traj, 1.0, &params);
    let x = State {
        p: r0.p_ref,
        v: r0.v_ref,
        q: r0.q_ref,
        w: r0.w_ref,
    };
    let frame = render_depth(
        &BodyPose { p: x.p, q: x.q },
        &base.camera,
        &forest,
        base.run.sensor_range,
    );

    let mut sweeps = Vec::new();
    let mut reference_outputs: Option<Vec<gmppi::Command>> = None;
    let mut outputs_identical = true;
    for threads in [1usize, 2, 4, 8] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .context("building bench pool")?;
        let mut ctrl = GmppiController::new(base.controller, params, base.run.seed)
            .map_err(|e| anyhow::anyhow!(e.to_string()))?;
        let mut timings = Vec::with_capacity(iterations);
        let mut outputs = Vec::with_capacity(iterations);
        pool.install(|| {
            for _ in 0..iterations {
                let provider = |dt_rel: f64| flat_reference(&traj, 1.0 + dt_rel, &params).0;
                let (u, diag) = ctrl
                    .step(&x, &provider, &frame)
                    .expect("bench state is finite");
                timings.push(diag.timings);
                outputs.push(u);
            }
        });
        let mut totals: Vec<u64> = timings.iter().map(|t| t.total_ns).collect();
        totals.sort_unstable();
        let median = percentile(&totals, 0.5);
        match &reference_outputs {
            None => reference_outputs = Some(outputs),
            Some(r) => outputs_identical &= r == &outputs,
        }
        println!(
            "threads {threads}: median {:.3} ms p95 {:.3} ms ({} iterations)",
            median as f64 / 1e6,
            percentile(&totals, 0.95) as f64 / 1e6,
            iterations
        );
        sweeps.push(serde_json::json!({
            "threads": threads,
            "iterations": iterations,
            "phases": phase_stats(&timings),
            "rollouts_per_sec": base.controller.k_rollouts as f64 / (median as f64 / 1e9),
        }));
    }
    anyhow::ensure!(
        outputs_identical,
        "controller outputs differ across thread counts"
    );
    let report = serde_json::json!({
        "k_rollouts": base.controller.k_rollouts,
        "n_steps": base.controller.timesteps.n_steps,
        "frame": format!("{}x{}", base.camera.width, base.camera.height),
        "outputs_identical_across_threads": outputs_identical,
        "sweeps": sweeps,
        "config": base,
    });
    write_atomic(
        &out_dir.join("bench.json"),
        serde_json::to_string_pretty(&report)?.as_bytes(),
    )?;
    Ok(())
}

/// Renders one frame from the trajectory start pose and dumps it as
/// PFM + JSON sidecar.
pub fn cmd_render_debug(base: &ScenarioConfig, out_dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let params = base.vehicle;
    let (r0, _) = flat_reference(&base.trajectory, 0.0, &params);
    let forest = generate_forest(
        base.forest.density,
        base.forest.bounds,
        base.run.seed,
        [r0.p_ref.x, r0.p_ref.y],
    );
    let frame = render_depth(
        &BodyPose {
            p: r0.p_ref,
            q: r0.q_ref,
        },
        &base.camera,
        &forest,
        base.run.sensor_range,
    );
    let path = out_dir.join("frame.pfm");
    write_pfm(&frame, &path)?;
    let finite: Vec<f64> = frame
        .depths
        .iter()
        .filter(|d| d.is_finite())
        .map(|d| *d as f64)
        .collect();
    let near = finite.iter().copied().fold(f64::INFINITY, f64::min);
    println!(
        "wrote {} ({} trees, {}/{} pixels returned, nearest {:.2} m)",
        path.display(),
        forest.trees.len(),
        finite.len(),
        frame.depths.len(),
        near
    );
    Ok(path)
}
