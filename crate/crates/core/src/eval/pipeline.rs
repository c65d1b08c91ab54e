use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationConfig;
use crate::dataset::{Dataset, Session, SubjectMetadata};
use crate::error::{Error, Result};
use crate::frame::RgbFrame;
use crate::preprocess::{
    extract_roi, full_frame_boxes, normalize_labels, select_frames, smooth_predictions, track_roi, FramePolicy,
    LkParams, RoiBox,
};
use crate::series::mean;
use crate::synth::{generate_m2_training_set, ChromophoreRanges, SkinOptics};
use crate::tissue::{estimate_sto2_from_means, fit_m1, fit_m2, ColorCheckerSet, M2Matrix, RgbTriple};
use crate::vc2s::{self, blank_checker, checker_tensor, ModelParams, Sample, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Baseline,
    Vc2s,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Self::Baseline),
            "vc2s" => Ok(Self::Vc2s),
            _ => Err(Error::Invalid(format!("unknown method `{s}`"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Baseline => "baseline",
            Self::Vc2s => "vc2s",
        })
    }
}

/// Everything that shapes an evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub method: Method,
    pub frame_policy: FramePolicy,
    /// `(width, height)` every ROI is resized to.
    pub roi_size: (usize, usize),
    pub color_check: bool,
    pub calibration: CalibrationConfig,
    pub train: TrainConfig,
    /// Use every n-th selected frame of the training videos.
    pub train_stride: usize,
    /// Low-pass the raw predicted series before calibration.
    pub smooth_predictions: bool,
    /// Synthetic samples for the chromophore regression of the baseline.
    pub m2_samples: usize,
    pub m2_seed: u64,
    pub max_lag_s: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            method: Method::Vc2s,
            frame_policy: FramePolicy::Uniform1Hz,
            roi_size: (100, 60),
            color_check: true,
            calibration: CalibrationConfig::default(),
            train: TrainConfig::default(),
            train_stride: 1,
            smooth_predictions: true,
            m2_samples: 300,
            m2_seed: 0,
            max_lag_s: super::MAX_LAG_S,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.train_stride == 0 {
            return Err(Error::Invalid("train_stride must be at least 1".into()));
        }
        let (w, h) = self.roi_size;
        if w < vc2s::MIN_ROI_SIDE || h < vc2s::MIN_ROI_SIDE {
            return Err(Error::Invalid(format!("roi size {w}x{h} is below {0}x{0}", vc2s::MIN_ROI_SIDE)));
        }
        if self.m2_samples < 10 {
            return Err(Error::Invalid("m2_samples must be at least 10".into()));
        }
        Ok(())
    }
}

/// A session reduced to what the estimators consume: selected frames,
/// their normalized labels, resized ROIs and the checker reading.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSession {
    pub session_id: String,
    pub dataset_id: String,
    pub subject: SubjectMetadata,
    pub frame_indices: Vec<usize>,
    pub times: Vec<f64>,
    pub truth: Vec<f64>,
    /// Sampling rate of the selected series.
    pub rate_hz: f64,
    pub boxes: Vec<RoiBox>,
    pub rois: Vec<RgbFrame>,
    pub checker: Option<ColorCheckerSet>,
    pub tracking_lost: usize,
}

/// Selects frames, tracks the ROI (when a seed is given) and extracts
/// resized crops.
pub fn prepare_session(
    session: &Session,
    reference_checker: Option<&ColorCheckerSet>,
    policy: FramePolicy,
    roi_size: (usize, usize),
) -> Result<PreparedSession> {
    session.validate()?;
    let label_rate = session.labels.rate_hz().ok_or(Error::TooFewSamples { needed: 2, got: session.labels.len() })?;
    let normalized = normalize_labels(&session.labels, label_rate)?;
    let per_frame: Vec<f64> = (0..session.frame_count()).map(|i| normalized.sample_at(session.frame_time(i))).collect();
    let frame_indices = select_frames(&per_frame, session.frame_rate_hz, policy)?;
    let last = *frame_indices.last().expect("non-empty selection");

    let first = session.frames.get(0)?;
    let (fw, fh) = (first.width, first.height);
    let (all_boxes, tracking_lost) = match session.roi_seed {
        Some(seed) => {
            let mut gray = Vec::with_capacity(last + 1);
            gray.push(first.to_gray());
            for i in 1..=last {
                gray.push(session.frames.get(i)?.to_gray());
            }
            let t = track_roi(&gray, seed, &LkParams::default());
            let lost = frame_indices.iter().filter(|&&i| t.lost[i]).count();
            (t.boxes, lost)
        }
        None => (full_frame_boxes(last + 1, fw, fh), 0),
    };
    let mut boxes = Vec::with_capacity(frame_indices.len());
    let mut rois = Vec::with_capacity(frame_indices.len());
    for &i in &frame_indices {
        let frame = if i == 0 { first.clone() } else { session.frames.get(i)? };
        let b = all_boxes[i];
        rois.push(extract_roi(&frame, &b, roi_size));
        boxes.push(b);
    }
    let times: Vec<f64> = frame_indices.iter().map(|&i| session.frame_time(i)).collect();
    let span = times[times.len() - 1] - times[0];
    let rate_hz = if span > 0.0 { (times.len() - 1) as f64 / span } else { session.frame_rate_hz };
    Ok(PreparedSession {
        session_id: session.session_id.clone(),
        dataset_id: session.dataset_id.clone(),
        subject: session.metadata.clone(),
        truth: frame_indices.iter().map(|&i| per_frame[i]).collect(),
        frame_indices,
        times,
        rate_hz,
        boxes,
        rois,
        checker: session.colorchecker.clone().or_else(|| reference_checker.cloned()),
        tracking_lost,
    })
}

pub fn prepare_dataset(dataset: &Dataset, policy: FramePolicy, roi_size: (usize, usize)) -> Result<Vec<PreparedSession>> {
    dataset
        .sessions
        .iter()
        .map(|s| prepare_session(s, dataset.reference_checker.as_ref(), policy, roi_size))
        .collect()
}

/// Chromophore regression fitted on synthetic skin.
pub fn fit_reference_m2(samples: usize, seed: u64) -> Result<M2Matrix> {
    let set = generate_m2_training_set(&SkinOptics::default(), &ChromophoreRanges::default(), samples, seed);
    Ok(fit_m2(&set)?.m2)
}

/// Tissue-optics StO2 per selected frame.
pub fn baseline_series(prep: &PreparedSession, m2: &M2Matrix) -> Result<Vec<f64>> {
    let checker = prep.checker.as_ref().ok_or_else(|| Error::MissingColorcheck(prep.session_id.clone()))?;
    let m1 = fit_m1(checker)?.m1;
    let means: Vec<RgbTriple> = prep.rois.iter().map(|r| RgbTriple(r.mean_rgb())).collect();
    Ok(estimate_sto2_from_means(&means, &prep.times, &m1, m2)?.values)
}

/// The checker input of the color branch for this session.
pub fn checker_input(prep: &PreparedSession, color_check: bool) -> Result<Vec<f64>> {
    if !color_check {
        return Ok(blank_checker());
    }
    prep.checker
        .as_ref()
        .map(checker_tensor)
        .ok_or_else(|| Error::MissingColorcheck(prep.session_id.clone()))
}

pub fn session_sample(prep: &PreparedSession, i: usize, checker: &[f64]) -> Result<Sample> {
    vc2s::sample_from_frame(&prep.rois[i], checker.to_vec())
}

pub fn predict_session(params: &ModelParams, prep: &PreparedSession, color_check: bool) -> Result<Vec<f64>> {
    let checker = checker_input(prep, color_check)?;
    (0..prep.rois.len()).map(|i| Ok(vc2s::forward(params, &session_sample(prep, i, &checker)?))).collect()
}

/// Trains on every `stride`-th selected frame of `sessions`.
pub fn train_on(sessions: &[&PreparedSession], cfg: &EvalConfig) -> Result<vc2s::TrainOutcome> {
    let mut index = Vec::new();
    let mut labels = Vec::new();
    let mut checkers = Vec::with_capacity(sessions.len());
    for (s, prep) in sessions.iter().enumerate() {
        checkers.push(checker_input(prep, cfg.color_check)?);
        for i in (0..prep.rois.len()).step_by(cfg.train_stride) {
            index.push((s, i));
            labels.push(prep.truth[i]);
        }
    }
    vc2s::train_with(
        &labels,
        |k| {
            let (s, i) = index[k];
            session_sample(sessions[s], i, &checkers[s])
        },
        &cfg.train,
    )
}

/// Uncalibrated predictions for one test video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSeries {
    pub session_id: String,
    pub subject_id: String,
    pub dataset_id: String,
    pub fold: usize,
    pub truth: Vec<f64>,
    pub raw: Vec<f64>,
    pub rate_hz: f64,
}

/// Raw predictions of a whole protocol run, before per-video calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRun {
    pub method: Method,
    pub protocol: String,
    pub series: Vec<RawSeries>,
    /// Mean training label minus mean training prediction, per fold.
    pub fold_offsets: Vec<f64>,
    pub flags: Vec<String>,
}

/// Subject ids in sorted order.
pub fn subjects(sessions: &[PreparedSession]) -> Vec<String> {
    let mut ids: Vec<String> = sessions.iter().map(|s| s.subject.subject_id.clone()).collect();
    ids.sort();
    ids.dedup();
    ids
}

struct FoldOutput {
    test: Vec<RawSeries>,
    offset: f64,
}

fn run_fold(
    train: &[&PreparedSession],
    test: &[&PreparedSession],
    fold: usize,
    cfg: &EvalConfig,
    m2: Option<&M2Matrix>,
) -> Result<FoldOutput> {
    let smooth = |v: Vec<f64>, rate: f64| if cfg.smooth_predictions { smooth_predictions(&v, rate) } else { Ok(v) };
    let mut train_truth = Vec::new();
    let mut train_pred = Vec::new();
    let predictor: Box<dyn Fn(&PreparedSession) -> Result<Vec<f64>>> = match cfg.method {
        Method::Baseline => {
            let m2 = *m2.expect("baseline needs an M2 matrix");
            for s in train {
                train_truth.extend_from_slice(&s.truth);
                train_pred.extend(smooth(baseline_series(s, &m2)?, s.rate_hz)?);
            }
            Box::new(move |s| baseline_series(s, &m2))
        }
        Method::Vc2s => {
            let outcome = train_on(train, cfg)?;
            let params = outcome.params;
            for s in train {
                let checker = checker_input(s, cfg.color_check)?;
                for i in (0..s.rois.len()).step_by(cfg.train_stride) {
                    train_truth.push(s.truth[i]);
                    train_pred.push(vc2s::forward(&params, &session_sample(s, i, &checker)?));
                }
            }
            let cc = cfg.color_check;
            Box::new(move |s| predict_session(&params, s, cc))
        }
    };
    let offset = if train_truth.is_empty() { 0.0 } else { mean(&train_truth) - mean(&train_pred) };
    let test = test
        .iter()
        .map(|s| {
            Ok(RawSeries {
                session_id: s.session_id.clone(),
                subject_id: s.subject.subject_id.clone(),
                dataset_id: s.dataset_id.clone(),
                fold,
                truth: s.truth.clone(),
                raw: smooth(predictor(s)?, s.rate_hz)?,
                rate_hz: s.rate_hz,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FoldOutput { test, offset })
}

fn tracking_flags(sessions: &[PreparedSession]) -> Vec<String> {
    sessions
        .iter()
        .filter(|s| s.tracking_lost > 0)
        .map(|s| format!("{}: tracking lost in {} selected frames", s.session_id, s.tracking_lost))
        .collect()
}

fn reference_m2(cfg: &EvalConfig) -> Result<Option<M2Matrix>> {
    match cfg.method {
        Method::Baseline => fit_reference_m2(cfg.m2_samples, cfg.m2_seed).map(Some),
        Method::Vc2s => Ok(None),
    }
}

/// Leave-one-subject-out: each fold holds out every video of one subject.
pub fn loso_raw(sessions: &[PreparedSession], cfg: &EvalConfig) -> Result<RawRun> {
    cfg.validate()?;
    let ids = subjects(sessions);
    if ids.len() < 2 {
        return Err(Error::SingleSubject);
    }
    let m2 = reference_m2(cfg)?;
    let mut series = Vec::new();
    let mut fold_offsets = Vec::new();
    for (fold, id) in ids.iter().enumerate() {
        let (test, train): (Vec<&PreparedSession>, Vec<&PreparedSession>) =
            sessions.iter().partition(|s| &s.subject.subject_id == id);
        let out = run_fold(&train, &test, fold, cfg, m2.as_ref())?;
        series.extend(out.test);
        fold_offsets.push(out.offset);
    }
    series.sort_by(|a, b| a.session_id.cmp(&b.session_id));
    Ok(RawRun { method: cfg.method, protocol: "loso".into(), series, fold_offsets, flags: tracking_flags(sessions) })
}

pub fn run_loso(dataset: &Dataset, cfg: &EvalConfig) -> Result<super::Report> {
    let prepared = prepare_dataset(dataset, cfg.frame_policy, cfg.roi_size)?;
    super::evaluate(&loso_raw(&prepared, cfg)?, cfg)
}

/// One model on the training sessions, evaluated on the test sessions.
pub fn cross_raw(train: &[PreparedSession], test: &[PreparedSession], cfg: &EvalConfig) -> Result<RawRun> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let m2 = reference_m2(cfg)?;
    let train_refs: Vec<&PreparedSession> = train.iter().collect();
    let test_refs: Vec<&PreparedSession> = test.iter().collect();
    let out = run_fold(&train_refs, &test_refs, 0, cfg, m2.as_ref())?;
    let mut series = out.test;
    series.sort_by(|a, b| a.session_id.cmp(&b.session_id));
    let mut flags = tracking_flags(train);
    flags.extend(tracking_flags(test));
    Ok(RawRun { method: cfg.method, protocol: "cross".into(), series, fold_offsets: vec![out.offset], flags })
}

pub fn run_cross(train: &[&Dataset], test: &Dataset, cfg: &EvalConfig) -> Result<super::Report> {
    if let Some(d) = train.iter().find(|d| d.id == test.id) {
        return Err(Error::DatasetOverlap(d.id.clone()));
    }
    let mut train_prep = Vec::new();
    for d in train {
        train_prep.extend(prepare_dataset(d, cfg.frame_policy, cfg.roi_size)?);
    }
    let test_prep = prepare_dataset(test, cfg.frame_policy, cfg.roi_size)?;
    super::evaluate(&cross_raw(&train_prep, &test_prep, cfg)?, cfg)
}
