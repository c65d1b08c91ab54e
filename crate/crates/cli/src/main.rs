//! `spo2cam`: dataset generation, model fitting, prediction and evaluation.

mod config;
mod plot;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spo2cam_core::dataset::{load_dataset, load_session, Dataset, Session};
use spo2cam_core::eval::{
    self, baseline_series, fit_reference_m2, predict_session, prepare_session, subgroup_report, train_on,
    EvalConfig, PreparedSession, Report, SubgroupField,
};
use spo2cam_core::fsutil::{read_json, write_atomic, write_json};
use spo2cam_core::preprocess::smooth_predictions;
use spo2cam_core::synth::{generate_dataset, DatasetSpec, SkinOptics};
use spo2cam_core::tissue::{fit_m1, fit_m2, ColorCheckerSet, TissueModelFile};
use spo2cam_core::vc2s::{Checkpoint, CHECKPOINT_VERSION};
use spo2cam_core::{Error, Result};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "spo2cam", version, about = "SpO2 estimation from RGB face video frames")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (`key = value` lines, `#` comments).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Run directory; created if missing.
    #[arg(long)]
    out: PathBuf,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        for s in &self.set {
            cfg.apply(s)?;
        }
        Ok(cfg)
    }

    /// Resolves the configuration and echoes it into the run directory.
    fn start(&self) -> Result<RunConfig> {
        let cfg = self.resolve()?;
        create_dir(&self.out)?;
        write_atomic(&self.out.join("config.txt"), cfg.echo().as_bytes())?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit the RGB to XYZ matrix from a color checker reading.
    FitColor {
        #[arg(long)]
        checker: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Fit the XYZ to chromophore regression on synthetic skin samples.
    FitM2 {
        #[command(flatten)]
        common: Common,
    },
    /// Write a seeded synthetic dataset.
    SynthGenerate {
        /// JSON dataset spec; missing fields take defaults.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        subjects: Option<usize>,
        #[arg(long)]
        sessions_per_subject: Option<usize>,
        #[arg(long)]
        dataset_id: Option<String>,
        /// Dataset root to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Select frames, track the ROI and write the resized crops.
    Preprocess {
        #[arg(long)]
        session: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Tissue-model StO2 for one session.
    PredictBaseline {
        #[arg(long)]
        session: PathBuf,
        /// Fitted model from `fit-m2`; fitted afresh when absent.
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train VC2S on every session of the configured datasets.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Run a trained checkpoint on one session.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        session: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Leave-one-subject-out evaluation on `dataset`.
    EvalLoso {
        #[command(flatten)]
        common: Common,
    },
    /// Train on `dataset`, test on `test_dataset`.
    EvalCross {
        #[command(flatten)]
        common: Common,
    },
    /// Aggregate a report by a subject metadata field.
    Subgroup {
        #[arg(long)]
        report: PathBuf,
        /// skin_tone, age, gender or covid.
        #[arg(long)]
        field: String,
        #[command(flatten)]
        common: Common,
    },
    /// Render series CSVs (a file or a directory of them) to SVG.
    Plot {
        #[arg(long)]
        series: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn datasets(cfg: &RunConfig, key: &str) -> Result<Vec<Dataset>> {
    let roots = cfg.paths(key);
    if roots.is_empty() {
        return Err(Error::Invalid(format!("config key `{key}` is not set")));
    }
    roots.iter().map(|r| load_dataset(r)).collect()
}

/// A single session together with its dataset's reference checker, read
/// from the parent directory when present.
fn session_with_reference(dir: &Path) -> Result<(Session, Option<ColorCheckerSet>)> {
    let session = load_session(dir)?;
    let reference = dir
        .parent()
        .map(|p| p.join("colorchecker.csv"))
        .filter(|p| p.is_file())
        .map(|p| ColorCheckerSet::read_csv(&p))
        .transpose()?;
    Ok((session, reference))
}

fn prepare_one(dir: &Path, cfg: &EvalConfig) -> Result<PreparedSession> {
    let (session, reference) = session_with_reference(dir)?;
    prepare_session(&session, reference.as_ref(), cfg.frame_policy, cfg.roi_size)
}

/// `t_s,truth,raw,predicted` where `predicted` is smoothed (if configured)
/// and calibrated against the session's own labels. Without calibration
/// the raw series passes through clamped.
fn calibrated_csv(prep: &PreparedSession, raw: &[f64], cfg: &EvalConfig) -> Result<String> {
    let smoothed = if cfg.smooth_predictions { smooth_predictions(raw, prep.rate_hz)? } else { raw.to_vec() };
    let (predicted, _) = cfg.calibration.calibrate(&smoothed, &prep.truth, 0.0);
    let mut out = String::from("t_s,truth,raw,predicted\n");
    for i in 0..raw.len() {
        let _ = writeln!(out, "{},{},{},{}", prep.times[i], prep.truth[i], raw[i], predicted[i]);
    }
    Ok(out)
}

fn write_report(dir: &Path, report: &Report) -> Result<()> {
    write_json(&dir.join("report.json"), report)?;
    write_atomic(&dir.join("per_video.csv"), report.per_video_csv().as_bytes())?;
    write_atomic(&dir.join("aggregate.csv"), report.aggregate_csv().as_bytes())?;
    let series = dir.join("series");
    create_dir(&series)?;
    for r in &report.per_video {
        let csv = report.series_csv(&r.session_id).expect("listed session");
        write_atomic(&series.join(format!("{}.csv", r.session_id)), csv.as_bytes())?;
    }
    Ok(())
}

fn summary(report: &Report) -> String {
    let a = &report.aggregate;
    format!(
        "{} {}: {} videos, MAE {:.3} ± {:.3}, RMSE {:.3}, MAPE {:.3}",
        report.method, report.protocol, a.videos, a.mae.mean, a.mae.stderr, a.rmse.mean, a.mape.mean
    )
}

fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::FitColor { checker, common } => {
            common.start()?;
            let fit = fit_m1(&ColorCheckerSet::read_csv(&checker)?)?;
            let file = TissueModelFile { m1: Some(fit.m1.0), m2: None, fit_residual: Some(fit.residual), r2: None };
            write_json(&common.out.join("tissue_model.json"), &file)?;
            Ok(format!("M1 residual {:.6}", fit.residual))
        }
        Command::FitM2 { common } => {
            let ecfg = common.start()?.eval_config()?;
            let set = spo2cam_core::synth::generate_m2_training_set(
                &SkinOptics::default(),
                &Default::default(),
                ecfg.m2_samples,
                ecfg.m2_seed,
            );
            let fit = fit_m2(&set)?;
            let file = TissueModelFile { m1: None, m2: Some(fit.m2.0), fit_residual: None, r2: Some(fit.r2) };
            write_json(&common.out.join("tissue_model.json"), &file)?;
            Ok(format!("M2 R² {:.4} {:.4} {:.4}", fit.r2[0], fit.r2[1], fit.r2[2]))
        }
        Command::SynthGenerate { spec, seed, subjects, sessions_per_subject, dataset_id, out } => {
            let mut s: DatasetSpec = match spec {
                Some(p) => read_json(&p)?,
                None => DatasetSpec::default(),
            };
            if let Some(v) = seed {
                s.seed = v;
            }
            if let Some(v) = subjects {
                s.subjects = v;
            }
            if let Some(v) = sessions_per_subject {
                s.sessions_per_subject = v;
            }
            if let Some(v) = dataset_id {
                s.dataset_id = v;
            }
            let dataset = generate_dataset(&SkinOptics::default(), &s)?;
            create_dir(&out)?;
            spo2cam_core::dataset::write_dataset(&out, &dataset)?;
            write_json(&out.join("synth_spec.json"), &s)?;
            Ok(format!("{} sessions written to {}", dataset.sessions.len(), out.display()))
        }
        Command::Preprocess { session, common } => {
            let ecfg = common.start()?.eval_config()?;
            let prep = prepare_one(&session, &ecfg)?;
            let dir = common.out.join(&prep.session_id);
            let rois = dir.join("rois");
            create_dir(&rois)?;
            let mut index = String::from("frame,t_s,truth,x,y,w,h\n");
            for (k, &i) in prep.frame_indices.iter().enumerate() {
                write_atomic(&rois.join(format!("{i:06}.png")), &prep.rois[k].encode_png())?;
                let b = &prep.boxes[k];
                let (x, y) = b.top_left();
                let _ = writeln!(index, "{i},{},{},{x},{y},{},{}", prep.times[k], prep.truth[k], b.width, b.height);
            }
            write_atomic(&dir.join("frames.csv"), index.as_bytes())?;
            Ok(format!("{}: {} frames, {} lost", prep.session_id, prep.rois.len(), prep.tracking_lost))
        }
        Command::PredictBaseline { session, model, common } => {
            let ecfg = common.start()?.eval_config()?;
            let m2 = match model {
                Some(p) => TissueModelFile::read(&p)?
                    .m2()
                    .ok_or_else(|| Error::Invalid(format!("{}: no m2 matrix", p.display())))?,
                None => fit_reference_m2(ecfg.m2_samples, ecfg.m2_seed)?,
            };
            let prep = prepare_one(&session, &ecfg)?;
            let raw = baseline_series(&prep, &m2)?;
            let csv = calibrated_csv(&prep, &raw, &ecfg)?;
            write_atomic(&common.out.join(format!("{}.csv", prep.session_id)), csv.as_bytes())?;
            Ok(format!("{}: {} frames", prep.session_id, raw.len()))
        }
        Command::Train { common } => {
            let cfg = common.start()?;
            let ecfg = cfg.eval_config()?;
            let mut prepared = Vec::new();
            for d in datasets(&cfg, "dataset")? {
                prepared.extend(eval::prepare_dataset(&d, ecfg.frame_policy, ecfg.roi_size)?);
            }
            let refs: Vec<&PreparedSession> = prepared.iter().collect();
            let outcome = train_on(&refs, &ecfg)?;
            let ckpt = Checkpoint {
                version: CHECKPOINT_VERSION,
                config: ecfg.train.clone(),
                rng_seed: ecfg.train.rng_seed,
                color_check: ecfg.color_check,
                roi_size: ecfg.roi_size,
                loss_curve: outcome.loss_curve.clone(),
                params: outcome.params,
            };
            ckpt.write(&common.out.join("checkpoint.json"))?;
            let mut loss = String::from("epoch,loss\n");
            for (e, l) in outcome.loss_curve.iter().enumerate() {
                let _ = writeln!(loss, "{e},{l}");
            }
            write_atomic(&common.out.join("loss.csv"), loss.as_bytes())?;
            Ok(format!("trained on {} sessions, final loss {:.4}", refs.len(), outcome.loss_curve.last().unwrap_or(&f64::NAN)))
        }
        Command::Predict { checkpoint, session, common } => {
            let mut ecfg = common.start()?.eval_config()?;
            let ckpt = Checkpoint::read(&checkpoint)?;
            // The network only makes sense on inputs shaped like its training data.
            ecfg.roi_size = ckpt.roi_size;
            ecfg.color_check = ckpt.color_check;
            let prep = prepare_one(&session, &ecfg)?;
            let raw = predict_session(&ckpt.params, &prep, ecfg.color_check)?;
            let csv = calibrated_csv(&prep, &raw, &ecfg)?;
            write_atomic(&common.out.join(format!("{}.csv", prep.session_id)), csv.as_bytes())?;
            Ok(format!("{}: {} frames", prep.session_id, raw.len()))
        }
        Command::EvalLoso { common } => {
            let cfg = common.start()?;
            let ecfg = cfg.eval_config()?;
            let mut all = datasets(&cfg, "dataset")?;
            let dataset = match all.len() {
                1 => all.remove(0),
                n => return Err(Error::Invalid(format!("eval-loso takes one dataset, got {n}"))),
            };
            let report = eval::run_loso(&dataset, &ecfg)?;
            write_report(&common.out, &report)?;
            Ok(summary(&report))
        }
        Command::EvalCross { common } => {
            let cfg = common.start()?;
            let ecfg = cfg.eval_config()?;
            let train = datasets(&cfg, "dataset")?;
            let mut test = datasets(&cfg, "test_dataset")?;
            if test.len() != 1 {
                return Err(Error::Invalid("test_dataset must name exactly one dataset".into()));
            }
            let refs: Vec<&Dataset> = train.iter().collect();
            let report = eval::run_cross(&refs, &test.remove(0), &ecfg)?;
            write_report(&common.out, &report)?;
            Ok(summary(&report))
        }
        Command::Subgroup { report, field, common } => {
            let cfg = common.start()?;
            let field: SubgroupField = field.parse()?;
            let report: Report = read_json(&report)?;
            let mut metadata = BTreeMap::new();
            for d in datasets(&cfg, "dataset")? {
                for s in d.sessions {
                    metadata.insert(s.session_id, s.metadata);
                }
            }
            let table = subgroup_report(&report, &metadata, field)?;
            let name = format!("subgroup_{}", serde_json::to_value(field).expect("enum").as_str().unwrap_or("field"));
            write_json(&common.out.join(format!("{name}.json")), &table)?;
            write_atomic(&common.out.join(format!("{name}.csv")), table.to_csv().as_bytes())?;
            Ok(format!("{} bins", table.rows.len()))
        }
        Command::Plot { series, out } => {
            create_dir(&out)?;
            let mut inputs: Vec<PathBuf> = if series.is_dir() {
                std::fs::read_dir(&series)
                    .map_err(|e| Error::io(&series, e))?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|x| x == "csv"))
                    .collect()
            } else {
                vec![series.clone()]
            };
            inputs.sort();
            for p in &inputs {
                let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("series");
                let svg = plot::render_svg(stem, &plot::read_series(p)?);
                write_atomic(&out.join(format!("{stem}.svg")), svg.as_bytes())?;
            }
            Ok(format!("{} plots written", inputs.len()))
        }
    }
}

fn fail(kind: &str, message: String) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "error": kind, "message": message }));
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("Usage", e.to_string()),
    };
    match run(cli) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.kind(), e.to_string()),
    }
}
