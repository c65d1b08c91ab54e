use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{error_stats, percent_change, ErrorStats};
use super::pipeline::{EvalConfig, Method, RawRun};
use crate::calibration::CalibrationParams;
use crate::dataset::SubjectMetadata;
use crate::error::{Error, Result};
use crate::series::{mean, standard_error};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoResult {
    pub session_id: String,
    pub subject_id: String,
    pub dataset_id: String,
    pub fold: usize,
    pub stats: ErrorStats,
    pub calibration: Option<CalibrationParams>,
    /// Calibrated series, aligned with `truth`.
    pub predicted: Vec<f64>,
    pub truth: Vec<f64>,
    pub rate_hz: f64,
}

/// Mean and standard error of a per-video metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub stderr: f64,
}

impl MeanSe {
    pub fn of(xs: &[f64]) -> Option<Self> {
        (!xs.is_empty()).then(|| Self { mean: mean(xs), stderr: standard_error(xs) })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub videos: usize,
    pub mae: MeanSe,
    pub rmse: MeanSe,
    pub mape: MeanSe,
    /// Over the videos whose correlation is defined.
    pub pearson: Option<MeanSe>,
    pub lag_s: Option<MeanSe>,
}

impl Aggregate {
    pub fn from_rows<'a>(rows: impl IntoIterator<Item = &'a VideoResult>) -> Option<Self> {
        let stats: Vec<&ErrorStats> = rows.into_iter().map(|r| &r.stats).collect();
        let pick = |f: fn(&ErrorStats) -> f64| stats.iter().map(|s| f(s)).collect::<Vec<_>>();
        let pearson: Vec<f64> = stats.iter().filter_map(|s| s.pearson).collect();
        let lag: Vec<f64> = stats.iter().filter_map(|s| s.lag_s).collect();
        Some(Self {
            videos: stats.len(),
            mae: MeanSe::of(&pick(|s| s.mae))?,
            rmse: MeanSe::of(&pick(|s| s.rmse))?,
            mape: MeanSe::of(&pick(|s| s.mape))?,
            pearson: MeanSe::of(&pearson),
            lag_s: MeanSe::of(&lag),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub method: Method,
    pub protocol: String,
    pub folds: usize,
    pub config: EvalConfig,
    pub flags: Vec<String>,
    pub per_video: Vec<VideoResult>,
    pub aggregate: Aggregate,
}

/// Calibrates each raw series per `cfg.calibration` and scores it.
pub fn evaluate(raw: &RawRun, cfg: &EvalConfig) -> Result<Report> {
    let mut flags = raw.flags.clone();
    if cfg.calibration.count == 0 {
        flags.push("no per-video calibration: training-population offset applied".into());
    }
    let mut per_video = Vec::with_capacity(raw.series.len());
    for s in &raw.series {
        let offset = raw.fold_offsets.get(s.fold).copied().unwrap_or(0.0);
        let (predicted, calibration) = cfg.calibration.calibrate(&s.raw, &s.truth, offset);
        if let Some(p) = &calibration {
            if p.window.fell_back {
                flags.push(format!("{}: too little label variation for intelligent sampling; used first frames", s.session_id));
            }
            if p.degenerate {
                flags.push(format!("{}: constant predictions in calibration window", s.session_id));
            }
        }
        let stats = error_stats(&predicted, &s.truth, s.rate_hz, cfg.max_lag_s)?;
        per_video.push(VideoResult {
            session_id: s.session_id.clone(),
            subject_id: s.subject_id.clone(),
            dataset_id: s.dataset_id.clone(),
            fold: s.fold,
            stats,
            calibration,
            predicted,
            truth: s.truth.clone(),
            rate_hz: s.rate_hz,
        });
    }
    let aggregate = Aggregate::from_rows(&per_video).ok_or(Error::EmptySeries)?;
    Ok(Report {
        method: raw.method,
        protocol: raw.protocol.clone(),
        folds: raw.fold_offsets.len(),
        config: cfg.clone(),
        flags,
        per_video,
        aggregate,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl Report {
    /// `session_id,mae,rmse,mape,pearson,lag_s,alpha,beta`
    pub fn per_video_csv(&self) -> String {
        let mut out = String::from("session_id,mae,rmse,mape,pearson,lag_s,alpha,beta\n");
        for r in &self.per_video {
            let (a, b) = r.calibration.as_ref().map(|c| (Some(c.alpha), Some(c.beta))).unwrap_or((None, None));
            let s = &r.stats;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.session_id,
                s.mae,
                s.rmse,
                s.mape,
                opt(s.pearson),
                opt(s.lag_s),
                opt(a),
                opt(b)
            );
        }
        out
    }

    pub fn aggregate_csv(&self) -> String {
        aggregate_table(&[(self.method.to_string(), self.aggregate)])
    }

    /// `t_s,truth,predicted` for one video.
    pub fn series_csv(&self, session_id: &str) -> Option<String> {
        let r = self.per_video.iter().find(|r| r.session_id == session_id)?;
        let mut out = String::from("t_s,truth,predicted\n");
        for (i, (t, p)) in r.truth.iter().zip(&r.predicted).enumerate() {
            let _ = writeln!(out, "{},{t},{p}", i as f64 / r.rate_hz);
        }
        Some(out)
    }
}

/// Rows of `label,videos,mae,mae_se,rmse,rmse_se,mape,mape_se,pearson,pearson_se`.
pub fn aggregate_table(rows: &[(String, Aggregate)]) -> String {
    let mut out = String::from("label,videos,mae,mae_se,rmse,rmse_se,mape,mape_se,pearson,pearson_se\n");
    for (label, a) in rows {
        let _ = writeln!(
            out,
            "{label},{},{},{},{},{},{},{},{},{}",
            a.videos,
            a.mae.mean,
            a.mae.stderr,
            a.rmse.mean,
            a.rmse.stderr,
            a.mape.mean,
            a.mape.stderr,
            opt(a.pearson.map(|p| p.mean)),
            opt(a.pearson.map(|p| p.stderr))
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubgroupField {
    SkinTone,
    Age,
    Gender,
    Covid,
}

impl std::str::FromStr for SubgroupField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "skin_tone" => Ok(Self::SkinTone),
            "age" => Ok(Self::Age),
            "gender" => Ok(Self::Gender),
            "covid" => Ok(Self::Covid),
            _ => Err(Error::Invalid(format!("unknown subgroup field `{s}`"))),
        }
    }
}

/// Bin label and its position in the canonical column order.
fn bin_of(field: SubgroupField, m: &SubjectMetadata) -> (usize, String) {
    match field {
        SubgroupField::SkinTone => match m.skin_tone {
            1 | 2 => (0, "skin 1-2".into()),
            3 | 4 => (1, "skin 3-4".into()),
            _ => (2, "skin 5-6".into()),
        },
        SubgroupField::Age => match m.age {
            0..=17 => (0, "age <18".into()),
            18..=23 => (1, "age 18-23".into()),
            24..=29 => (2, "age 24-29".into()),
            _ => (3, "age >=30".into()),
        },
        SubgroupField::Gender => (0, format!("gender {}", m.gender)),
        SubgroupField::Covid => {
            if m.covid_history {
                (0, "covid yes".into())
            } else {
                (1, "covid no".into())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupRow {
    pub bin: String,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupTable {
    pub field: SubgroupField,
    pub rows: Vec<SubgroupRow>,
}

impl SubgroupTable {
    pub fn to_csv(&self) -> String {
        let rows: Vec<(String, Aggregate)> = self.rows.iter().map(|r| (r.bin.clone(), r.aggregate)).collect();
        aggregate_table(&rows)
    }
}

/// Groups the per-video rows by a metadata field. `metadata` is keyed by
/// session id. Only non-empty bins are emitted, in canonical order.
pub fn subgroup_report(
    report: &Report,
    metadata: &BTreeMap<String, SubjectMetadata>,
    field: SubgroupField,
) -> Result<SubgroupTable> {
    let missing: Vec<String> =
        report.per_video.iter().filter(|r| !metadata.contains_key(&r.session_id)).map(|r| r.session_id.clone()).collect();
    if !missing.is_empty() {
        return Err(Error::MissingMetadata(missing));
    }
    let mut bins: BTreeMap<(usize, String), Vec<&VideoResult>> = BTreeMap::new();
    for r in &report.per_video {
        bins.entry(bin_of(field, &metadata[&r.session_id])).or_default().push(r);
    }
    let rows = bins
        .into_iter()
        .map(|((_, bin), rows)| SubgroupRow { bin, aggregate: Aggregate::from_rows(rows).expect("non-empty bin") })
        .collect();
    Ok(SubgroupTable { field, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub mae: f64,
    pub rmse: f64,
    pub mape: f64,
    pub pearson: Option<f64>,
}

/// Percent change of the aggregate means of `ours` against `baseline`.
pub fn delta(ours: &Report, baseline: &Report) -> Result<Delta> {
    let ids = |r: &Report| r.per_video.iter().map(|v| v.session_id.clone()).collect::<Vec<_>>();
    if ids(ours) != ids(baseline) {
        return Err(Error::Invalid("reports cover different sessions".into()));
    }
    let (a, b) = (&ours.aggregate, &baseline.aggregate);
    Ok(Delta {
        mae: percent_change(a.mae.mean, b.mae.mean),
        rmse: percent_change(a.rmse.mean, b.rmse.mean),
        mape: percent_change(a.mape.mean, b.mape.mean),
        pearson: a.pearson.zip(b.pearson).map(|(x, y)| percent_change(x.mean, y.mean)),
    })
}
