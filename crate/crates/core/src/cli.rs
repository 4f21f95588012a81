//! The `ocr` command line. Every subcommand reads and writes the file formats
//! of the owning modules and embeds the merged config in what it writes.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{RunConfig, SeedList};
use crate::dataset::{build_recovery_dataset, Episode, RecEpisode};
use crate::error::{Error, Result};
use crate::harness::{collect_aug_demos, eval_suite, retrain_augmented, EvalReport};
use crate::io::{load_episodes, read_document, save_episodes, write_document};
use crate::joint::{load_trace, rollout, save_trace, BaseController, Controller, JointPolicy};
use crate::manifold::{calibrate, fit_manifold, ManifoldModel};
use crate::policy::{train_base, KnnBasePolicy, KnnInversePolicy};
use crate::sim::Region;
use crate::{pipeline, report};

pub const BASE_KIND: &str = "base_policy";
pub const INVERSE_KIND: &str = "inverse_policy";
pub const MANIFOLD_FIT_KIND: &str = "manifold_fit";
pub const MANIFOLD_KIND: &str = "manifold";
pub const REPORT_KIND: &str = "eval_report";
pub const AUGMENT_KIND: &str = "augment_summary";

#[derive(Debug, Parser)]
#[command(name = "ocr", version, about = "Object-centric recovery on a planar push task")]
struct Cli {
    /// TOML config file; every key is optional and unknown keys are errors.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set plan.alpha=2.5`. Applied after
    /// the config file, in order.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads for per-seed and per-keypoint work. Results do not
    /// depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyKind {
    Base,
    Joint,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Record scripted-expert demonstrations from in-distribution resets.
    DemoCollect {
        #[arg(long)]
        out: PathBuf,
        /// Overrides `seeds.demos`, e.g. `0..99` or `3,5,8`.
        #[arg(long)]
        seeds: Option<String>,
    },
    /// Strip actions and proprioception, keeping keypoints per frame.
    BuildRec {
        #[arg(long)]
        demos: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit one Gaussian mixture per keypoint.
    FitManifold {
        #[arg(long)]
        rec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Set the gradient shaping constants and the switching threshold.
    Calibrate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        rec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Index the base policy over one or more episode files.
    TrainBase {
        #[arg(long, required = true, num_args = 1..)]
        demos: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Index the keypoint inverse policy over demonstration windows.
    TrainInverse {
        #[arg(long)]
        rec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// One seeded rollout with a full decision trace.
    Rollout {
        #[command(flatten)]
        models: Models,
        #[arg(long, default_value = "ood")]
        region: Region,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a policy over a seed list.
    Eval {
        #[command(flatten)]
        models: Models,
        #[arg(long, default_value = "ood")]
        region: Region,
        /// Overrides `seeds.eval_id` or `seeds.eval_ood`.
        #[arg(long)]
        seeds: Option<String>,
        /// Report document; the CSV files are written beside it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Record joint-policy recoveries from OOD resets and re-index the base
    /// policy over demonstrations plus recoveries.
    Augment {
        #[arg(long)]
        demos: PathBuf,
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        inverse: PathBuf,
        #[arg(long)]
        manifold: PathBuf,
        /// Overrides `seeds.augment`.
        #[arg(long)]
        seeds: Option<String>,
        /// Receives `aug_episodes.jsonl`, `base_aug.json` and `augment.json`.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Print the merged config as TOML.
    ShowConfig,
    /// CSV tables and SVG plots from reports and traces.
    Report {
        #[arg(long = "reports", num_args = 1..)]
        reports: Vec<PathBuf>,
        #[arg(long = "traces", num_args = 1..)]
        traces: Vec<PathBuf>,
        /// Calibrated model: adds the threshold line and a gradient quiver.
        #[arg(long)]
        manifold: Option<PathBuf>,
        /// Keypoint drawn in the quiver plot.
        #[arg(long, default_value_t = 0)]
        keypoint: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Debug, clap::Args)]
struct Models {
    #[arg(long, value_enum)]
    policy: PolicyKind,
    #[arg(long)]
    base: PathBuf,
    /// Required for `--policy joint`.
    #[arg(long)]
    inverse: Option<PathBuf>,
    /// Calibrated model; required for `--policy joint`.
    #[arg(long)]
    manifold: Option<PathBuf>,
}

struct Loaded {
    policy: PolicyKind,
    base: KnnBasePolicy,
    inverse: Option<KnnInversePolicy>,
    manifold: Option<ManifoldModel>,
}

impl Models {
    fn load(&self) -> Result<Loaded> {
        let (_, base) = read_document(&self.base, BASE_KIND)?;
        let (inverse, manifold) = match self.policy {
            PolicyKind::Base => (None, None),
            PolicyKind::Joint => {
                let need = |p: &Option<PathBuf>, what: &str| {
                    p.clone()
                        .ok_or_else(|| Error::config(format!("--policy joint needs --{what}")))
                };
                let (_, inv) = read_document(&need(&self.inverse, "inverse")?, INVERSE_KIND)?;
                let (_, m) = read_document(&need(&self.manifold, "manifold")?, MANIFOLD_KIND)?;
                (Some(inv), Some(m))
            }
        };
        Ok(Loaded {
            policy: self.policy,
            base,
            inverse,
            manifold,
        })
    }
}

impl Loaded {
    fn with_controller<T>(&self, cfg: &RunConfig, f: impl FnOnce(&str, &dyn Controller) -> Result<T>) -> Result<T> {
        match (self.policy, &self.inverse, &self.manifold) {
            (PolicyKind::Joint, Some(inv), Some(m)) => {
                let jp = JointPolicy::new(&self.base, inv, m, cfg.plan.clone(), cfg.joint.clone())?;
                f("joint", &jp)
            }
            _ => {
                let bc = BaseController {
                    base: &self.base,
                    exec_per_cycle: cfg.joint.exec_per_cycle,
                };
                f("base", &bc)
            }
        }
    }
}

/// Runs the command line and returns the process exit code. Failures print
/// one JSON line on stderr: `{"error":KIND,"exit":CODE,"message":TEXT}`.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            if code == 0 {
                let _ = e.print();
                return 0;
            }
            let msg = e.to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ")
                .to_string();
            print_error("usage", 2, &first);
            return 2;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            let (kind, code) = classify(&e);
            print_error(kind, code, &e.to_string());
            code
        }
    }
}

fn print_error(kind: &str, code: i32, msg: &str) {
    eprintln!("{}", serde_json::json!({ "error": kind, "exit": code, "message": msg }));
}

/// Error class and exit code: 2 for configuration, 3 for missing or empty
/// input files, 1 for everything else.
pub fn classify(e: &Error) -> (&'static str, i32) {
    match e {
        Error::Config(_) => ("config", 2),
        Error::NoRecords { .. } => ("no_records", 3),
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => ("missing_file", 3),
        Error::Io { .. } => ("io", 1),
        Error::Parse { .. } => ("parse", 1),
        Error::Schema { .. } => ("schema", 1),
        Error::EmptyResetRegion => ("empty_reset_region", 1),
        Error::InvalidInput(_) => ("invalid_input", 1),
    }
}

/// Defaults, then the config file, then `--set` overrides.
pub fn merge_config(file: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let mut table = match file {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            toml::from_str::<toml::Table>(&text)
                .map_err(|e| Error::config(format!("{}: {}", p.display(), e.message())))?
        }
        None => toml::Table::new(),
    };
    for o in overrides {
        let (key, raw) = o
            .split_once('=')
            .ok_or_else(|| Error::config(format!("override {o:?} is not KEY=VALUE")))?;
        let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        set_path(&mut table, key.trim(), value)?;
    }
    let cfg: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::config(e.message().to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts
        .pop()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::config(format!("empty override key {key:?}")))?;
    let mut t = table;
    for p in parts {
        let entry = t
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        t = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(format!("override {key:?}: {p} is not a table")))?;
    }
    t.insert(last.to_string(), value);
    Ok(())
}

fn seeds_override(list: &mut SeedList, flag: &Option<String>) -> Result<()> {
    if let Some(s) = flag {
        *list = s.parse()?;
    }
    Ok(())
}

fn with_ext(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_rec(path: &Path) -> Result<Vec<RecEpisode>> {
    Ok(load_episodes::<RecEpisode>(path)?.1)
}

fn load_demos(path: &Path) -> Result<Vec<Episode>> {
    Ok(load_episodes::<Episode>(path)?.1)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = merge_config(cli.config.as_deref(), &cli.overrides)?;
    let jobs = cli.jobs.max(1);
    match cli.cmd {
        Cmd::ShowConfig => {
            print!("{}", toml::to_string(&cfg).map_err(|e| Error::invalid(e.to_string()))?);
            Ok(())
        }
        Cmd::DemoCollect { out, seeds } => {
            seeds_override(&mut cfg.seeds.demos, &seeds)?;
            let demos = pipeline::demos(&cfg, jobs)?;
            save_episodes(&out, &demos, &cfg.to_value())
        }
        Cmd::BuildRec { demos, out } => {
            let rec = build_recovery_dataset(&load_demos(&demos)?, &cfg.template())?;
            save_episodes(&out, &rec, &cfg.to_value())
        }
        Cmd::FitManifold { rec, out } => {
            let frames = pipeline::frames(&load_rec(&rec)?);
            let model = fit_manifold(&frames, &cfg.manifold, jobs)?;
            write_document(&out, MANIFOLD_FIT_KIND, &cfg.to_value(), &model)
        }
        Cmd::Calibrate { model, rec, out } => {
            let (_, fitted): (_, ManifoldModel) = read_document(&model, MANIFOLD_FIT_KIND)?;
            let frames = pipeline::frames(&load_rec(&rec)?);
            let m = calibrate(&fitted, &frames, &cfg.manifold)?;
            write_document(&out, MANIFOLD_KIND, &cfg.to_value(), &m)
        }
        Cmd::TrainBase { demos, out } => {
            let mut all = Vec::new();
            for p in &demos {
                all.extend(load_demos(p)?);
            }
            let base = train_base(&all, &cfg.base)?;
            write_document(&out, BASE_KIND, &cfg.to_value(), &base)
        }
        Cmd::TrainInverse { rec, out } => {
            let inv = pipeline::inverse(&cfg, &load_rec(&rec)?)?;
            write_document(&out, INVERSE_KIND, &cfg.to_value(), &inv)
        }
        Cmd::Rollout {
            models,
            region,
            seed,
            out,
        } => {
            let loaded = models.load()?;
            let env = pipeline::env(&cfg)?;
            let trace = loaded.with_controller(&cfg, |_, c| {
                rollout(&env, c, &cfg.template(), seed, region, env.cfg.max_steps)
            })?;
            save_trace(&out, &trace, &cfg.to_value())
        }
        Cmd::Eval {
            models,
            region,
            seeds,
            out,
        } => {
            let list = match region {
                Region::Ood => &mut cfg.seeds.eval_ood,
                _ => &mut cfg.seeds.eval_id,
            };
            seeds_override(list, &seeds)?;
            let list = list.0.clone();
            let loaded = models.load()?;
            let env = pipeline::env(&cfg)?;
            let rep = loaded.with_controller(&cfg, |id, c| {
                eval_suite(id, c, &env, &cfg.template(), region, &list, jobs)
            })?;
            write_document(&out, REPORT_KIND, &cfg.to_value(), &rep)?;
            write_text(
                &with_ext(&out, ".csv"),
                &report::summary_csv(std::slice::from_ref(&rep)),
            )?;
            write_text(&with_ext(&out, ".seeds.csv"), &report::outcomes_csv(&rep))
        }
        Cmd::Augment {
            demos,
            base,
            inverse,
            manifold,
            seeds,
            out_dir,
        } => {
            seeds_override(&mut cfg.seeds.augment, &seeds)?;
            let demos = load_demos(&demos)?;
            let (_, base): (_, KnnBasePolicy) = read_document(&base, BASE_KIND)?;
            let (_, inv): (_, KnnInversePolicy) = read_document(&inverse, INVERSE_KIND)?;
            let (_, m): (_, ManifoldModel) = read_document(&manifold, MANIFOLD_KIND)?;
            let jp = JointPolicy::new(&base, &inv, &m, cfg.plan.clone(), cfg.joint.clone())?;
            let env = pipeline::env(&cfg)?;
            let aug = collect_aug_demos(&jp, &env, &cfg.template(), &cfg.seeds.augment.0, jobs)?;
            let retrained = retrain_augmented(&demos, &aug, &cfg.base)?;
            let c = cfg.to_value();
            std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
            if !aug.episodes.is_empty() {
                save_episodes(&out_dir.join("aug_episodes.jsonl"), &aug.episodes, &c)?;
            }
            write_document(&out_dir.join("base_aug.json"), BASE_KIND, &c, &retrained)?;
            let summary = serde_json::json!({
                "kept_seeds": aug.seeds,
                "timed_out": aug.timed_out,
                "stop_criterion": aug.stop_criterion,
                "steps_recorded": aug.episodes.iter().map(|e| e.steps.len()).sum::<usize>(),
            });
            write_document(&out_dir.join("augment.json"), AUGMENT_KIND, &c, &summary)
        }
        Cmd::Report {
            reports,
            traces,
            manifold,
            keypoint,
            out_dir,
        } => {
            let mut reps: Vec<EvalReport> = Vec::new();
            for p in &reports {
                reps.push(read_document(p, REPORT_KIND)?.1);
            }
            let model: Option<ManifoldModel> = match &manifold {
                Some(p) => Some(read_document(p, MANIFOLD_KIND)?.1),
                None => None,
            };
            if reports.is_empty() && traces.is_empty() && model.is_none() {
                return Err(Error::config("report needs --reports, --traces or --manifold"));
            }
            if !reps.is_empty() {
                write_text(&out_dir.join("summary.csv"), &report::summary_csv(&reps))?;
                write_text(
                    &out_dir.join("success.svg"),
                    &report::success_bars_svg(&reps, "Success rate"),
                )?;
            }
            let threshold = model.as_ref().map(|m| m.eps_rec);
            let mut snapshot = None;
            for p in &traces {
                let t = load_trace(p)?;
                let stem = p
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                write_text(&out_dir.join(format!("{stem}.csv")), &report::trace_csv(&t))?;
                let title = format!("seed {} ({})", t.seed, t.region);
                write_text(
                    &out_dir.join(format!("{stem}_density.svg")),
                    &report::density_svg(&t, threshold, &title),
                )?;
                if snapshot.is_none() {
                    snapshot = t
                        .steps
                        .first()
                        .map(|s| crate::joint::observe(&s.state, &cfg.template()).keypoints);
                }
            }
            if let Some(m) = &model {
                if keypoint >= m.n_keypoints() {
                    return Err(Error::config(format!(
                        "--keypoint {keypoint} out of range (model has {})",
                        m.n_keypoints()
                    )));
                }
                let w = &cfg.sim.workspace;
                let bounds = (
                    crate::geom::Point2::new(w.x_min, w.y_min),
                    crate::geom::Point2::new(w.x_max, w.y_max),
                );
                let svg = report::quiver_svg(
                    m,
                    keypoint,
                    bounds,
                    24,
                    snapshot.as_ref(),
                    &format!("keypoint {keypoint} recovery field"),
                );
                write_text(&out_dir.join(format!("quiver_k{keypoint}.svg")), &svg)?;
            }
            Ok(())
        }
    }
}
