//! Skin tissue model: RGB → XYZ (affine, fitted on a color checker), XYZ →
//! chromophore concentrations (quadratic regression), and tissue oxygen
//! saturation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::RgbFrame;
use crate::linalg;
use crate::series::{fill_missing, TimeSeries};

/// Number of patches on the color checker chart.
pub const CHECKER_PATCHES: usize = 24;

/// Camera color value, nominally in [0, 255] per channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RgbTriple(pub [f64; 3]);

/// CIE 1931 tristimulus value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XyzTriple(pub [f64; 3]);

/// Melanin, oxygenated and deoxygenated hemoglobin concentrations.
///
/// Regression outputs can be negative; [`Chromophores::clamped`] stores the
/// non-negative version and records whether anything was cut.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chromophores {
    pub c_m: f64,
    pub c_hbo: f64,
    pub c_hbr: f64,
    #[serde(default)]
    pub clamped: bool,
}

impl Chromophores {
    pub fn new(c_m: f64, c_hbo: f64, c_hbr: f64) -> Self {
        Self { c_m, c_hbo, c_hbr, clamped: false }
    }

    pub fn clamped(c_m: f64, c_hbo: f64, c_hbr: f64) -> Self {
        let clamped = c_m < 0.0 || c_hbo < 0.0 || c_hbr < 0.0;
        Self { c_m: c_m.max(0.0), c_hbo: c_hbo.max(0.0), c_hbr: c_hbr.max(0.0), clamped }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.c_m, self.c_hbo, self.c_hbr]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckerPatch {
    pub rgb: RgbTriple,
    pub reference_xyz: XyzTriple,
}

/// A 24-patch color checker reading in canonical patch order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorCheckerSet {
    patches: Vec<CheckerPatch>,
}

impl ColorCheckerSet {
    pub fn new(patches: Vec<CheckerPatch>) -> Result<Self> {
        if patches.len() != CHECKER_PATCHES {
            return Err(Error::Invalid(format!(
                "color checker needs {CHECKER_PATCHES} patches, got {}",
                patches.len()
            )));
        }
        Ok(Self { patches })
    }

    pub fn patches(&self) -> &[CheckerPatch] {
        &self.patches
    }

    /// Reads `patch_id,r,g,b,ref_x,ref_y,ref_z` with a header row.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
        let expected = ["patch_id", "r", "g", "b", "ref_x", "ref_y", "ref_z"];
        if headers.iter().map(str::trim).ne(expected) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                msg: format!("expected header {}", expected.join(",")),
            });
        }
        let mut patches = Vec::with_capacity(CHECKER_PATCHES);
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            let line = rec.position().map_or(i as u64 + 2, |p| p.line());
            let parse = |k: usize| -> Result<f64> {
                rec.get(k)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        path: path.to_path_buf(),
                        line,
                        msg: format!("bad value in column {}", expected[k]),
                    })
            };
            let id = parse(0)?;
            if id != i as f64 {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    msg: format!("patch_id {id} out of order, expected {i}"),
                });
            }
            patches.push(CheckerPatch {
                rgb: RgbTriple([parse(1)?, parse(2)?, parse(3)?]),
                reference_xyz: XyzTriple([parse(4)?, parse(5)?, parse(6)?]),
            });
        }
        ColorCheckerSet::new(patches).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: e.to_string(),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("patch_id,r,g,b,ref_x,ref_y,ref_z\n");
        for (i, p) in self.patches.iter().enumerate() {
            let [r, g, b] = p.rgb.0;
            let [x, y, z] = p.reference_xyz.0;
            s.push_str(&format!("{i},{r},{g},{b},{x},{y},{z}\n"));
        }
        s
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse { path: path.to_path_buf(), line, msg: e.to_string() }
}

/// RGB → XYZ affine map; rows X, Y, Z; columns (1, R, G, B).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct M1Matrix(pub [[f64; 4]; 3]);

/// XYZ → chromophore quadratic map; rows (C_m, C_HbO, C_HbR); columns
/// (1, X, Y, Z, X², Y², Z², XY, XZ, YZ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct M2Matrix(pub [[f64; 10]; 3]);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct M1Fit {
    pub m1: M1Matrix,
    /// Sum of squared XYZ residuals over all patches and channels.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct M2Fit {
    pub m2: M2Matrix,
    /// In-sample coefficient of determination per row.
    pub r2: [f64; 3],
}

/// One regression sample for [`fit_m2`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct M2Sample {
    pub xyz: XyzTriple,
    pub truth: Chromophores,
}

fn rgb_probe(rgb: RgbTriple) -> [f64; 4] {
    [1.0, rgb.0[0], rgb.0[1], rgb.0[2]]
}

/// Quadratic feature vector (1, X, Y, Z, X², Y², Z², XY, XZ, YZ).
pub fn quadratic_features(xyz: XyzTriple) -> [f64; 10] {
    let [x, y, z] = xyz.0;
    [1.0, x, y, z, x * x, y * y, z * z, x * y, x * z, y * z]
}

pub fn fit_m1(checker: &ColorCheckerSet) -> Result<M1Fit> {
    let pairs: Vec<_> = checker.patches().iter().map(|p| (p.rgb, p.reference_xyz)).collect();
    fit_m1_pairs(&pairs)
}

/// Least-squares M1 over arbitrary (RGB, XYZ) pairs.
pub fn fit_m1_pairs(pairs: &[(RgbTriple, XyzTriple)]) -> Result<M1Fit> {
    let design: Vec<Vec<f64>> = pairs.iter().map(|(rgb, _)| rgb_probe(*rgb).to_vec()).collect();
    let targets: Vec<Vec<f64>> = pairs.iter().map(|(_, xyz)| xyz.0.to_vec()).collect();
    let coef = linalg::least_squares(&design, &targets, 4, 3).ok_or(Error::SingularDesign("M1"))?;
    let mut m = [[0.0; 4]; 3];
    for (row, c) in m.iter_mut().zip(&coef) {
        row.copy_from_slice(c);
    }
    let m1 = M1Matrix(m);
    let residual = pairs
        .iter()
        .map(|(rgb, xyz)| {
            let p = rgb_to_xyz(&m1, *rgb).0;
            (0..3).map(|k| (p[k] - xyz.0[k]).powi(2)).sum::<f64>()
        })
        .sum();
    Ok(M1Fit { m1, residual })
}

pub fn rgb_to_xyz(m1: &M1Matrix, rgb: RgbTriple) -> XyzTriple {
    let v = rgb_probe(rgb);
    let mut out = [0.0; 3];
    for (o, row) in out.iter_mut().zip(&m1.0) {
        *o = row.iter().zip(&v).map(|(a, b)| a * b).sum();
    }
    XyzTriple(out)
}

pub fn fit_m2(samples: &[M2Sample]) -> Result<M2Fit> {
    let design: Vec<Vec<f64>> = samples.iter().map(|s| quadratic_features(s.xyz).to_vec()).collect();
    let targets: Vec<Vec<f64>> = samples.iter().map(|s| s.truth.as_array().to_vec()).collect();
    let coef = linalg::least_squares(&design, &targets, 10, 3).ok_or(Error::SingularDesign("M2"))?;
    let mut m = [[0.0; 10]; 3];
    for (row, c) in m.iter_mut().zip(&coef) {
        row.copy_from_slice(c);
    }
    let m2 = M2Matrix(m);
    let raw: Vec<[f64; 3]> = samples.iter().map(|s| apply_m2(&m2, s.xyz)).collect();
    let mut r2 = [0.0; 3];
    for (k, r) in r2.iter_mut().enumerate() {
        let pred: Vec<f64> = raw.iter().map(|p| p[k]).collect();
        let truth: Vec<f64> = samples.iter().map(|s| s.truth.as_array()[k]).collect();
        *r = r_squared(&pred, &truth);
    }
    Ok(M2Fit { m2, r2 })
}

/// Unclamped regression output of M2.
pub fn apply_m2(m2: &M2Matrix, xyz: XyzTriple) -> [f64; 3] {
    let f = quadratic_features(xyz);
    let mut out = [0.0; 3];
    for (o, row) in out.iter_mut().zip(&m2.0) {
        *o = row.iter().zip(&f).map(|(a, b)| a * b).sum();
    }
    out
}

pub fn xyz_to_chromophores(m2: &M2Matrix, xyz: XyzTriple) -> Chromophores {
    let [c_m, c_hbo, c_hbr] = apply_m2(m2, xyz);
    Chromophores::clamped(c_m, c_hbo, c_hbr)
}

/// Hemoglobin sums at or below this are treated as zero.
pub const HEMOGLOBIN_EPS: f64 = 1e-12;

/// Tissue oxygen saturation in percent.
pub fn sto2(c: &Chromophores) -> Result<f64> {
    let hbo = c.c_hbo.max(0.0);
    let hbr = c.c_hbr.max(0.0);
    let total = hbo + hbr;
    if total <= HEMOGLOBIN_EPS {
        return Err(Error::ZeroHemoglobin);
    }
    Ok((100.0 * hbo / total).clamp(0.0, 100.0))
}

pub fn rgb_to_sto2(m1: &M1Matrix, m2: &M2Matrix, rgb: RgbTriple) -> Result<f64> {
    sto2(&xyz_to_chromophores(m2, rgb_to_xyz(m1, rgb)))
}

/// StO2 per ROI frame from the spatial-mean RGB. Frames whose hemoglobin
/// estimate vanishes are filled by linear interpolation (held at the ends).
pub fn estimate_sto2_series(
    roi_frames: &[RgbFrame],
    timestamps: &[f64],
    m1: &M1Matrix,
    m2: &M2Matrix,
) -> Result<TimeSeries> {
    let means: Vec<RgbTriple> = roi_frames.iter().map(|f| RgbTriple(f.mean_rgb())).collect();
    estimate_sto2_from_means(&means, timestamps, m1, m2)
}

pub fn estimate_sto2_from_means(
    means: &[RgbTriple],
    timestamps: &[f64],
    m1: &M1Matrix,
    m2: &M2Matrix,
) -> Result<TimeSeries> {
    if means.len() != timestamps.len() {
        return Err(Error::LengthMismatch(means.len(), timestamps.len()));
    }
    let raw: Vec<Option<f64>> = means.iter().map(|rgb| rgb_to_sto2(m1, m2, *rgb).ok()).collect();
    let values = fill_missing(&raw).ok_or(Error::ZeroHemoglobin)?;
    Ok(TimeSeries { timestamps: timestamps.to_vec(), values })
}

/// Coefficient of determination of `pred` against `truth`.
pub fn r_squared(pred: &[f64], truth: &[f64]) -> f64 {
    let m = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_res: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum();
    let ss_tot: f64 = truth.iter().map(|t| (t - m).powi(2)).sum();
    if ss_tot == 0.0 {
        return if ss_res == 0.0 { 1.0 } else { f64::NEG_INFINITY };
    }
    1.0 - ss_res / ss_tot
}

/// Persisted fitted matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TissueModelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m1: Option<[[f64; 4]; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m2: Option<[[f64; 10]; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r2: Option<[f64; 3]>,
}

impl TissueModelFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json { path: path.to_path_buf(), source })
    }

    pub fn m1(&self) -> Option<M1Matrix> {
        self.m1.map(M1Matrix)
    }

    pub fn m2(&self) -> Option<M2Matrix> {
        self.m2.map(M2Matrix)
    }
}
