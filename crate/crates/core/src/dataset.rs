//! On-disk session layout and the in-memory `Session`.
//!
//! ```text
//! <session>/frames/000000.png ...
//! <session>/labels.csv          t_s,spo2
//! <session>/colorchecker.csv    optional, 24 patches
//! <session>/roi_seed.json       optional, {"x","y","w","h"} in frame 0
//! <session>/meta.json
//! ```
//!
//! A dataset is a directory of session directories, optionally with a
//! dataset-level `colorchecker.csv` reference reading at its root.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::RgbFrame;
use crate::fsutil::{read_json, write_atomic, write_json};
use crate::preprocess::RoiBox;
use crate::series::LabelSeries;
use crate::tissue::ColorCheckerSet;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectMetadata {
    pub subject_id: String,
    /// Fitzpatrick type, 1–6.
    pub skin_tone: u8,
    pub age: u32,
    pub gender: String,
    pub covid_history: bool,
}

impl SubjectMetadata {
    pub fn validate(&self) -> Result<()> {
        if !(1..=6).contains(&self.skin_tone) {
            return Err(Error::Invalid(format!("skin_tone {} outside 1..=6", self.skin_tone)));
        }
        Ok(())
    }
}

/// Where a session's frames live.
#[derive(Debug, Clone, PartialEq)]
pub enum FrameSource {
    Memory(Vec<RgbFrame>),
    Files(Vec<PathBuf>),
}

impl FrameSource {
    pub fn len(&self) -> usize {
        match self {
            FrameSource::Memory(v) => v.len(),
            FrameSource::Files(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, index: usize) -> Result<RgbFrame> {
        match self {
            FrameSource::Memory(v) => v
                .get(index)
                .cloned()
                .ok_or_else(|| Error::Invalid(format!("frame {index} out of range"))),
            FrameSource::Files(v) => {
                let p = v.get(index).ok_or_else(|| Error::Invalid(format!("frame {index} out of range")))?;
                RgbFrame::load_png(p)
            }
        }
    }
}

/// One recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub session_id: String,
    pub dataset_id: String,
    pub frames: FrameSource,
    pub frame_rate_hz: f64,
    pub labels: LabelSeries,
    pub colorchecker: Option<ColorCheckerSet>,
    pub roi_seed: Option<RoiBox>,
    pub metadata: SubjectMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaFile {
    session_id: String,
    dataset_id: String,
    frame_rate_hz: f64,
    subject: SubjectMetadata,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoiSeedFile {
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
}

impl Session {
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn frame_time(&self, index: usize) -> f64 {
        index as f64 / self.frame_rate_hz
    }

    pub fn validate(&self) -> Result<()> {
        self.metadata.validate()?;
        if !(self.frame_rate_hz > 0.0) {
            return Err(Error::Invalid(format!("{}: frame rate must be positive", self.session_id)));
        }
        if self.labels.is_empty() {
            return Err(Error::Invalid(format!("{}: empty label series", self.session_id)));
        }
        let n = self.frame_count();
        if n == 0 {
            return Err(Error::Invalid(format!("{}: no frames", self.session_id)));
        }
        let slack = 1.0 / self.frame_rate_hz;
        let end = (n - 1) as f64 / self.frame_rate_hz;
        let first = self.labels.timestamps[0];
        let last = *self.labels.timestamps.last().unwrap();
        if first < -slack || last > end + slack {
            return Err(Error::Invalid(format!(
                "{}: label timestamps [{first}, {last}] outside frame span [0, {end}]",
                self.session_id
            )));
        }
        Ok(())
    }

    /// Labels resampled at each frame time.
    pub fn labels_at_frames(&self) -> Vec<f64> {
        (0..self.frame_count()).map(|i| self.labels.sample_at(self.frame_time(i))).collect()
    }
}

fn parse_labels(path: &Path) -> Result<LabelSeries> {
    let bad = |line: u64, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| bad(0, e.to_string()))?;
    let headers = rdr.headers().map_err(|e| bad(1, e.to_string()))?.clone();
    if headers.iter().map(str::trim).ne(["t_s", "spo2"]) {
        return Err(bad(1, "expected header t_s,spo2".into()));
    }
    let mut ts = Vec::new();
    let mut vs = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| bad(line, e.to_string()))?;
        let get = |k: usize| {
            rec.get(k)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(line, format!("bad number in column {}", k + 1)))
        };
        let t = get(0)?;
        if let Some(&prev) = ts.last() {
            if !(t > prev) {
                return Err(bad(line, "timestamps must increase".into()));
            }
        }
        ts.push(t);
        vs.push(get(1)?);
    }
    if ts.is_empty() {
        return Err(bad(2, "no label rows".into()));
    }
    Ok(LabelSeries { timestamps: ts, values: vs })
}

fn labels_csv(labels: &LabelSeries) -> String {
    let mut s = String::from("t_s,spo2\n");
    for (t, v) in labels.timestamps.iter().zip(&labels.values) {
        s.push_str(&format!("{t},{v}\n"));
    }
    s
}

/// Lists `frames/NNNNNN.png`, requiring contiguous numbering from 0.
fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let frames_dir = dir.join("frames");
    let entries = std::fs::read_dir(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
    let mut numbered = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(&frames_dir, e))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some("png") {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
        let idx: usize = stem
            .parse()
            .map_err(|_| Error::Parse { path: path.clone(), line: 0, msg: "frame name must be a number".into() })?;
        numbered.push((idx, path));
    }
    numbered.sort();
    for (expected, (found, _)) in numbered.iter().enumerate() {
        if *found != expected {
            return Err(Error::FrameGap { dir: frames_dir, expected, found: *found });
        }
    }
    Ok(numbered.into_iter().map(|(_, p)| p).collect())
}

pub fn load_session(dir: &Path) -> Result<Session> {
    let labels_path = dir.join("labels.csv");
    if !labels_path.is_file() {
        return Err(Error::MissingLabels(labels_path));
    }
    let meta: MetaFile = read_json(&dir.join("meta.json"))?;
    let labels = parse_labels(&labels_path)?;
    let frames = list_frames(dir)?;
    let checker_path = dir.join("colorchecker.csv");
    let colorchecker = checker_path.is_file().then(|| ColorCheckerSet::read_csv(&checker_path)).transpose()?;
    let seed_path = dir.join("roi_seed.json");
    let roi_seed = if seed_path.is_file() {
        let s: RoiSeedFile = read_json(&seed_path)?;
        if s.w <= 0 || s.h <= 0 {
            return Err(Error::Parse { path: seed_path, line: 0, msg: "roi seed w/h must be positive".into() });
        }
        Some(RoiBox::from_top_left(s.x as f64, s.y as f64, s.w as usize, s.h as usize))
    } else {
        None
    };
    let session = Session {
        session_id: meta.session_id,
        dataset_id: meta.dataset_id,
        frames: FrameSource::Files(frames),
        frame_rate_hz: meta.frame_rate_hz,
        labels,
        colorchecker,
        roi_seed,
        metadata: meta.subject,
    };
    session.validate()?;
    Ok(session)
}

/// Writes a session in the canonical layout. Frames must be in memory or
/// readable from their source files.
pub fn write_session(dir: &Path, session: &Session) -> Result<()> {
    for i in 0..session.frame_count() {
        let frame = session.frames.get(i)?;
        write_atomic(&dir.join("frames").join(format!("{i:06}.png")), &frame.encode_png())?;
    }
    write_atomic(&dir.join("labels.csv"), labels_csv(&session.labels).as_bytes())?;
    if let Some(c) = &session.colorchecker {
        write_atomic(&dir.join("colorchecker.csv"), c.to_csv().as_bytes())?;
    }
    if let Some(b) = &session.roi_seed {
        let (x, y) = b.top_left();
        let seed = RoiSeedFile { x: x.round() as i64, y: y.round() as i64, w: b.width as i64, h: b.height as i64 };
        write_json(&dir.join("roi_seed.json"), &seed)?;
    }
    let meta = MetaFile {
        session_id: session.session_id.clone(),
        dataset_id: session.dataset_id.clone(),
        frame_rate_hz: session.frame_rate_hz,
        subject: session.metadata.clone(),
    };
    write_json(&dir.join("meta.json"), &meta)
}

/// A set of sessions sharing a dataset id.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub id: String,
    pub sessions: Vec<Session>,
    /// Reference reading substituted for sessions without their own checker.
    pub reference_checker: Option<ColorCheckerSet>,
}

impl Dataset {
    pub fn checker_for<'a>(&'a self, session: &'a Session) -> Option<&'a ColorCheckerSet> {
        session.colorchecker.as_ref().or(self.reference_checker.as_ref())
    }
}

pub fn load_dataset(root: &Path) -> Result<Dataset> {
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("meta.json").is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Invalid(format!("{}: no session directories", root.display())));
    }
    let sessions = dirs.iter().map(|d| load_session(d)).collect::<Result<Vec<_>>>()?;
    let id = sessions[0].dataset_id.clone();
    if let Some(s) = sessions.iter().find(|s| s.dataset_id != id) {
        return Err(Error::Invalid(format!(
            "{}: mixed dataset ids {id} and {}",
            root.display(),
            s.dataset_id
        )));
    }
    let ref_path = root.join("colorchecker.csv");
    let reference_checker = ref_path.is_file().then(|| ColorCheckerSet::read_csv(&ref_path)).transpose()?;
    Ok(Dataset { id, sessions, reference_checker })
}

pub fn write_dataset(root: &Path, dataset: &Dataset) -> Result<()> {
    for s in &dataset.sessions {
        write_session(&root.join(&s.session_id), s)?;
    }
    if let Some(c) = &dataset.reference_checker {
        write_atomic(&root.join("colorchecker.csv"), c.to_csv().as_bytes())?;
    }
    Ok(())
}
