//! The `carvebot` command line.

use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use carvebot_contact::data::{ingest_replicates, write_replicate, Replicate};
use carvebot_contact::eval::{format_table, TableRow};
use carvebot_contact::forest::{train_forest, tune_mtry, ForestParams};
use carvebot_contact::label::{label_approaching, ApproachWindow};
use carvebot_contact::preprocess::{preprocess, PreprocessConfig};
use carvebot_contact::protocol::{run_protocol, ProtocolConfig, Task};
use carvebot_contact::split::{Dataset, SplitKind, SplitScheme};
use carvebot_contact::synth::synth_corpus;
use carvebot_core::calib::{format_marker_pairs, parse_marker_pairs, CalibrationParams, CalibrationSolver};
use carvebot_core::control::simulate_tracking;
use carvebot_core::planner::{format_waypoints, lift_to_3d, parse_waypoints, plan_from_segmentation, PlanSpec};
use carvebot_core::vision::{segment_scene, Scene};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::HarnessConfig;
use crate::metrics::{consistency_report, trim_accuracy};
use crate::pipeline::{conservation_error, edge_segmentation, run_pipeline, survey_markers, Rig};
use crate::runlog::RunStore;
use crate::scene::generate_scene;

#[derive(Debug, Parser)]
#[command(name = "carvebot", version, about = "Simulated vision-guided meat cutting cell")]
pub struct Cli {
    /// TOML configuration; defaults apply to anything left out.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file, or directory for `demo`. Standard output when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Slice,
    Trim,
    Cube,
    PointToPoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ContactTask {
    Contact,
    Approaching,
}

impl From<ContactTask> for Task {
    fn from(t: ContactTask) -> Task {
        match t {
            ContactTask::Contact => Task::Contact,
            ContactTask::Approaching => Task::Approaching,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the camera-to-robot transform and print it as key=value lines.
    Calibrate {
        /// Marker pairs, `robot_x robot_y camera_x camera_y` per line. A
        /// simulated survey is used when omitted.
        #[arg(long)]
        markers: Option<PathBuf>,
    },
    /// Segment a PPM scene and print the contours as JSON.
    Segment {
        /// Defaults to the configured loin.
        #[arg(long)]
        scene: Option<PathBuf>,
    },
    /// Plan cuts on a scene and print timed waypoints.
    Plan {
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "slice")]
        task: TaskArg,
        #[arg(long)]
        pieces: Option<usize>,
        /// Calibration in key=value form; a fresh survey fit otherwise.
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
    /// Track a waypoint file with the simulated arm and print error stats.
    Simulate {
        #[arg(long)]
        waypoints: PathBuf,
    },
    /// Run the full slice, trim and cube pipeline and store the run.
    Pipeline {
        /// Run store directory; the configured one otherwise.
        #[arg(long)]
        runs: Option<PathBuf>,
    },
    /// Train a contact forest on replicate CSV files, or on the synthetic
    /// corpus when none are given, and write the model as JSON.
    ContactTrain {
        files: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "contact")]
        task: ContactTask,
        #[arg(long)]
        trees: Option<usize>,
    },
    /// Error-rate table over every task and split protocol.
    ContactEval {
        files: Vec<PathBuf>,
        #[arg(long)]
        trees: Option<usize>,
    },
    /// Serve the interactive session over HTTP.
    Serve {
        #[arg(long)]
        addr: Option<String>,
    },
    /// Write sample inputs for the other commands into `--out`.
    Demo,
}

pub fn load_config(cli: &Cli) -> Result<HarnessConfig> {
    let mut cfg = match &cli.config {
        Some(p) => HarnessConfig::load(p)?,
        None => HarnessConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn load_scene(path: Option<&Path>, cfg: &HarnessConfig) -> Result<Scene> {
    match path {
        Some(p) => {
            let f = fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
            Ok(Scene::read_ppm(BufReader::new(f))?)
        }
        None => Ok(generate_scene(&cfg.loin, &cfg.board)?.scene),
    }
}

fn replicates(files: &[PathBuf], cfg: &HarnessConfig) -> Result<Vec<Replicate>> {
    if files.is_empty() {
        Ok(synth_corpus(&cfg.contact.corpus, cfg.contact.seed)?)
    } else {
        Ok(ingest_replicates(files)?)
    }
}

#[derive(Serialize)]
struct TrackingOutput {
    waypoints: usize,
    executed_steps: usize,
    mean_error_m: f64,
    max_error_m: f64,
    mean_heading_error_rad: f64,
    held_steps: usize,
}

#[derive(Serialize)]
struct PipelineSummary {
    run_id: String,
    slices: usize,
    chops: usize,
    cubes: usize,
    conservation_error: f64,
    consistency: crate::metrics::ConsistencyReport,
    trim: crate::metrics::TrimAccuracy,
}

#[derive(Serialize)]
struct TrainSummary {
    task: &'static str,
    samples: usize,
    mtry: usize,
    n_trees: usize,
    oob_error: f64,
}

/// Runs one command. `serve` blocks until the server stops.
pub fn execute(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Calibrate { markers } => {
            let pairs = match markers {
                Some(p) => parse_marker_pairs(&fs::read_to_string(p)?)?,
                None => survey_markers(&cfg.calibration, &cfg.board, cfg.seed),
            };
            let fit = CalibrationSolver::default().solve(&pairs)?;
            log::info!("fit after {} iterations, residual {:.3e}", fit.iterations, fit.params.residual);
            emit(out, &fit.params.to_kv_text())
        }
        Command::Segment { scene } => {
            let scene = load_scene(scene.as_deref(), &cfg)?;
            let rig = Rig::from_config(&cfg)?;
            emit(out, &json(&segment_scene(&scene, &rig.colors, &rig.segment)?)?)
        }
        Command::Plan { scene, task, pieces, calibration } => {
            let scene = load_scene(scene.as_deref(), &cfg)?;
            let rig = Rig::from_config(&cfg)?;
            let calib = match calibration {
                Some(p) => CalibrationParams::from_kv_text(&fs::read_to_string(p)?)?,
                None => rig.calib_fit,
            };
            let seg = edge_segmentation(&segment_scene(&scene, &rig.colors, &rig.segment)?);
            let spec = match task {
                TaskArg::Slice => PlanSpec::slice(pieces.unwrap_or(cfg.pipeline.n_slices)),
                TaskArg::Trim => PlanSpec::trim(cfg.pipeline.squish_bound_px),
                TaskArg::Cube => PlanSpec::cube(cfg.pipeline.cube_side_cm),
                TaskArg::PointToPoint => PlanSpec::point_to_point(),
            };
            let plan = plan_from_segmentation(&seg, &calib, &spec, &cfg.planner)?;
            let waypoints = lift_to_3d(&plan, &cfg.motion, &cfg.safety)?;
            emit(out, &format_waypoints(&waypoints))
        }
        Command::Simulate { waypoints } => {
            let wps = parse_waypoints(&fs::read_to_string(waypoints)?)?;
            let plant = carvebot_core::control::PlantModel { seed: cfg.seed, ..cfg.plant };
            let r = simulate_tracking(&wps, &cfg.control, &plant, &cfg.safety)?;
            emit(
                out,
                &json(&TrackingOutput {
                    waypoints: wps.len(),
                    executed_steps: r.executed.len() - 1,
                    mean_error_m: r.mean_error,
                    max_error_m: r.max_error,
                    mean_heading_error_rad: r.mean_heading_error,
                    held_steps: r.held_steps,
                })?,
            )
        }
        Command::Pipeline { runs } => {
            let output = run_pipeline(&cfg)?;
            let store = RunStore::open(runs.clone().unwrap_or_else(|| cfg.service.runs_dir.clone()))?;
            let mut log = output.log;
            let shots: Vec<(&str, &Scene)> = output.snapshots.iter().map(|(n, s)| (n.as_str(), s)).collect();
            let run_id = store.save(&mut log, &shots)?;
            log::info!("stored {} under {}", run_id, store.root().display());
            emit(
                out,
                &json(&PipelineSummary {
                    run_id,
                    slices: log.slices.len(),
                    chops: log.chops.len(),
                    cubes: log.cubes.len(),
                    conservation_error: conservation_error(&log),
                    consistency: consistency_report(&log, &cfg.pipeline.bands),
                    trim: trim_accuracy(&log),
                })?,
            )
        }
        Command::ContactTrain { files, task, trees } => {
            let reps = replicates(files, &cfg)?;
            let reps: Vec<Replicate> = match task {
                ContactTask::Contact => reps,
                ContactTask::Approaching => reps.iter().map(|r| label_approaching(r, &ApproachWindow::default())).collect(),
            };
            let pre = preprocess(&reps, &PreprocessConfig::default())?;
            for w in &pre.warnings {
                log::warn!("{w}");
            }
            let data = Dataset::from_replicates(&pre.replicates);
            let mtry = tune_mtry(&data, &(2..=8).collect::<Vec<_>>(), 100, cfg.contact.seed)?.best;
            let n_trees = trees.unwrap_or(cfg.contact.n_trees);
            let model = train_forest(&data, &ForestParams { n_trees, mtry, seed: cfg.contact.seed })?;
            let summary = TrainSummary { task: Task::from(*task).as_str(), samples: data.len(), mtry, n_trees, oob_error: model.oob_error };
            match out {
                Some(p) => {
                    model.save(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?)?;
                    eprint!("{}", json(&summary)?);
                    Ok(())
                }
                None => emit(None, &json(&summary)?),
            }
        }
        Command::ContactEval { files, trees } => {
            let reps = replicates(files, &cfg)?;
            let mut rows: Vec<TableRow> = Vec::new();
            for task in [Task::Contact, Task::Approaching] {
                for kind in [SplitKind::Swt, SplitKind::Rwt, SplitKind::Sat] {
                    let mut pc = ProtocolConfig::new(task, SplitScheme::new(kind, cfg.contact.seed));
                    pc.n_trees = trees.unwrap_or(cfg.contact.n_trees);
                    let r = run_protocol(&reps, &pc)?;
                    rows.extend(r.groups.into_iter().map(|g| g.row));
                }
            }
            emit(out, &format_table(&rows))
        }
        Command::Serve { addr } => {
            let mut cfg = cfg;
            if let Some(a) = addr {
                cfg.service.addr = a.clone();
            }
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(crate::service::serve(&cfg))
        }
        Command::Demo => {
            let Some(dir) = out else { bail!("demo needs --out DIR") };
            write_demo(dir, &cfg)
        }
    }
}

fn write_demo(dir: &Path, cfg: &HarnessConfig) -> Result<()> {
    fs::create_dir_all(dir.join("contact"))?;
    let loin = generate_scene(&cfg.loin, &cfg.board)?;
    fs::write(dir.join("loin.ppm"), loin.scene.to_ppm_bytes())?;
    let chop = generate_scene(&cfg.service.chop, &cfg.board)?;
    fs::write(dir.join("chop.ppm"), chop.scene.to_ppm_bytes())?;
    fs::write(dir.join("markers.txt"), format_marker_pairs(&survey_markers(&cfg.calibration, &cfg.board, cfg.seed)))?;
    fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
    for rep in synth_corpus(&cfg.contact.corpus, cfg.contact.seed)? {
        let f = fs::File::create(dir.join("contact").join(format!("{}.csv", rep.id)))?;
        write_replicate(&rep, std::io::BufWriter::new(f))?;
    }
    Ok(())
}
