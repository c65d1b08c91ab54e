//! Synthetic skin-optics world used as ground truth.
//!
//! Reflectance follows a modified Beer–Lambert law with fixed effective path
//! lengths, XYZ comes from the CIE 1931 observer under D65, and camera RGB
//! from Gaussian channel sensitivities. Hemoglobin concentrations are in µM,
//! melanin is a volume fraction.

pub mod tables;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{FrameSource, Session, SubjectMetadata};
use crate::error::{Error, Result};
use crate::frame::RgbFrame;
use crate::series::LabelSeries;
use crate::tissue::{CheckerPatch, Chromophores, ColorCheckerSet, M2Sample, RgbTriple, XyzTriple};

pub use tables::{ExtinctionTable, BANDS};

/// Diffuse reflectance on the 400–700 nm grid, values in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spectrum(pub [f64; BANDS]);

impl Spectrum {
    pub fn flat(v: f64) -> Self {
        Spectrum([v; BANDS])
    }
}

/// Modified Beer–Lambert skin model.
#[derive(Debug, Clone, PartialEq)]
pub struct SkinOptics {
    pub extinction: ExtinctionTable,
    pub baseline_reflectance: f64,
    /// Effective epidermal path for melanin, cm.
    pub epidermis_path_cm: f64,
    /// Effective dermal path for hemoglobin, cm.
    pub dermis_path_cm: f64,
}

impl Default for SkinOptics {
    fn default() -> Self {
        Self {
            extinction: ExtinctionTable::default(),
            baseline_reflectance: 0.6,
            epidermis_path_cm: 0.05,
            dermis_path_cm: 0.10,
        }
    }
}

/// µM → M and decadic → natural absorbance.
const HB_SCALE: f64 = std::f64::consts::LN_10 * 1e-6;

impl SkinOptics {
    pub fn reflectance_spectrum(&self, c: &Chromophores) -> Spectrum {
        let e = &self.extinction;
        Spectrum(std::array::from_fn(|i| {
            let melanin = c.c_m * e.melanin[i] * self.epidermis_path_cm;
            let blood = (c.c_hbo * e.hbo[i] + c.c_hbr * e.hbr[i]) * HB_SCALE * self.dermis_path_cm;
            (self.baseline_reflectance * (-(melanin + blood)).exp()).clamp(0.0, 1.0)
        }))
    }
}

/// Tristimulus under D65, scaled so a perfect reflector has Y = 100.
pub fn spectrum_to_xyz(s: &Spectrum) -> XyzTriple {
    let mut acc = [0.0; 3];
    let mut white = 0.0;
    for i in 0..BANDS {
        let e = tables::D65[i];
        for k in 0..3 {
            acc[k] += s.0[i] * e * tables::CIE1931[i][k];
        }
        white += e * tables::CIE1931[i][1];
    }
    XyzTriple(acc.map(|a| 100.0 * (a / white)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub sensitivities: [[f64; BANDS]; 3],
    pub illuminant: [f64; BANDS],
    pub gain: f64,
    /// White-balance multipliers on top of `gain`.
    #[serde(default = "unit_gains")]
    pub channel_gains: [f64; 3],
    /// Per-pixel Gaussian noise, counts.
    pub noise_sigma: f64,
}

fn unit_gains() -> [f64; 3] {
    [1.0; 3]
}

/// Unit reflectance maps to this many counts per channel at gain 1.
pub const CAMERA_WHITE_LEVEL: f64 = 235.0;

impl CameraModel {
    /// Gaussian R/G/B sensitivities under D65, white-balanced so a unit
    /// reflector reads [`CAMERA_WHITE_LEVEL`] in every channel at gain 1.
    pub fn gaussian(gain: f64, noise_sigma: f64) -> Self {
        Self::with_peaks([600.0, 540.0, 455.0], [35.0, 40.0, 30.0], tables::D65, gain, noise_sigma)
    }

    pub fn with_peaks(
        peaks_nm: [f64; 3],
        widths_nm: [f64; 3],
        illuminant: [f64; BANDS],
        gain: f64,
        noise_sigma: f64,
    ) -> Self {
        let wl = tables::wavelengths();
        let mut sensitivities = [[0.0; BANDS]; 3];
        for c in 0..3 {
            let mut row: [f64; BANDS] =
                std::array::from_fn(|i| (-0.5 * ((wl[i] - peaks_nm[c]) / widths_nm[c]).powi(2)).exp());
            let total: f64 = (0..BANDS).map(|i| row[i] * illuminant[i] * tables::STEP_NM).sum();
            for v in row.iter_mut() {
                *v *= CAMERA_WHITE_LEVEL / total;
            }
            sensitivities[c] = row;
        }
        Self { sensitivities, illuminant, gain, channel_gains: unit_gains(), noise_sigma }
    }

    /// Noise-free channel response.
    pub fn expose(&self, s: &Spectrum) -> [f64; 3] {
        std::array::from_fn(|c| {
            let v: f64 = (0..BANDS)
                .map(|i| s.0[i] * self.illuminant[i] * self.sensitivities[c][i] * tables::STEP_NM)
                .sum();
            self.gain * self.channel_gains[c] * v
        })
    }
}

pub fn spectrum_to_rgb<R: Rng>(s: &Spectrum, cam: &CameraModel, rng: &mut R) -> RgbTriple {
    let clean = cam.expose(s);
    RgbTriple(clean.map(|v| (v + gaussian(rng, cam.noise_sigma)).clamp(0.0, 255.0)))
}

fn gaussian<R: Rng>(rng: &mut R, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).unwrap().sample(rng)
    } else {
        0.0
    }
}

/// Sampling ranges for the chromophore regression set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChromophoreRanges {
    pub melanin: (f64, f64),
    /// Total hemoglobin, µM.
    pub total_hb: (f64, f64),
    /// Oxygenated fraction of hemoglobin.
    pub saturation: (f64, f64),
}

impl Default for ChromophoreRanges {
    fn default() -> Self {
        Self { melanin: (0.005, 0.02), total_hb: (40.0, 80.0), saturation: (0.6, 1.0) }
    }
}

impl ChromophoreRanges {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Chromophores {
        let c_m = rng.random_range(self.melanin.0..=self.melanin.1);
        let h = rng.random_range(self.total_hb.0..=self.total_hb.1);
        let sat = rng.random_range(self.saturation.0..=self.saturation.1);
        Chromophores::new(c_m, h * sat, h * (1.0 - sat))
    }

    pub fn contains(&self, c: &Chromophores) -> bool {
        let h = c.c_hbo + c.c_hbr;
        let sat = c.c_hbo / h;
        let within = |v: f64, r: (f64, f64)| v >= r.0 - 1e-12 && v <= r.1 + 1e-12;
        within(c.c_m, self.melanin) && within(h, self.total_hb) && within(sat, self.saturation)
    }
}

/// Chromophore/XYZ pairs for fitting M2. Deterministic in `seed`.
pub fn generate_m2_training_set(
    optics: &SkinOptics,
    ranges: &ChromophoreRanges,
    n: usize,
    seed: u64,
) -> Vec<M2Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let truth = ranges.sample(&mut rng);
            M2Sample { xyz: spectrum_to_xyz(&optics.reflectance_spectrum(&truth)), truth }
        })
        .collect()
}

/// Reflectance spectra of the 24 chart patches: two skin tones, sixteen
/// chromatic patches, six neutrals.
pub fn checker_spectra(optics: &SkinOptics) -> Vec<Spectrum> {
    let wl = tables::wavelengths();
    let mut out = vec![
        optics.reflectance_spectrum(&Chromophores::new(0.02, 58.0, 2.0)),
        optics.reflectance_spectrum(&Chromophores::new(0.006, 44.0, 2.0)),
    ];
    // (base, bump amplitude, bump center, bump width, step amplitude, step edge)
    const CHROMATIC: [(f64, f64, f64, f64, f64, f64); 16] = [
        (0.05, 0.25, 470.0, 50.0, 0.0, 600.0),
        (0.05, 0.12, 550.0, 40.0, 0.05, 680.0),
        (0.15, 0.35, 450.0, 40.0, 0.15, 650.0),
        (0.05, 0.35, 500.0, 35.0, 0.0, 600.0),
        (0.04, 0.0, 500.0, 40.0, 0.55, 590.0),
        (0.05, 0.30, 440.0, 30.0, 0.0, 600.0),
        (0.06, 0.0, 500.0, 40.0, 0.55, 610.0),
        (0.10, 0.30, 430.0, 30.0, 0.25, 640.0),
        (0.05, 0.45, 545.0, 35.0, 0.0, 600.0),
        (0.04, 0.0, 500.0, 40.0, 0.80, 560.0),
        (0.05, 0.40, 460.0, 35.0, 0.0, 600.0),
        (0.05, 0.40, 530.0, 30.0, 0.0, 600.0),
        (0.04, 0.0, 500.0, 40.0, 0.60, 620.0),
        (0.05, 0.0, 500.0, 40.0, 0.80, 530.0),
        (0.10, 0.35, 420.0, 30.0, 0.45, 630.0),
        (0.05, 0.50, 490.0, 30.0, 0.0, 600.0),
    ];
    for &(base, amp, center, width, step, edge) in &CHROMATIC {
        out.push(Spectrum(std::array::from_fn(|i| {
            let bump = amp * (-0.5 * ((wl[i] - center) / width).powi(2)).exp();
            let rise = step / (1.0 + (-(wl[i] - edge) / 12.0).exp());
            (base + bump + rise).clamp(0.0, 1.0)
        })));
    }
    for v in [0.90, 0.59, 0.36, 0.19, 0.09, 0.031] {
        out.push(Spectrum::flat(v));
    }
    out
}

/// Checker reading through `cam`: patch-mean RGB (noise reduced by
/// averaging over a 10×10 patch) and reference XYZ under D65.
pub fn render_checker<R: Rng>(optics: &SkinOptics, cam: &CameraModel, rng: &mut R) -> ColorCheckerSet {
    let patch_cam = CameraModel { noise_sigma: cam.noise_sigma / 10.0, ..cam.clone() };
    let patches = checker_spectra(optics)
        .iter()
        .map(|s| CheckerPatch { rgb: spectrum_to_rgb(s, &patch_cam, rng), reference_xyz: spectrum_to_xyz(s) })
        .collect();
    ColorCheckerSet::new(patches).expect("24 patches")
}

/// Piecewise-linear SpO2 profile over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spo2Profile {
    /// (t seconds, SpO2 percent), strictly increasing in t.
    pub knots: Vec<(f64, f64)>,
}

impl Spo2Profile {
    pub fn constant(v: f64) -> Self {
        Self { knots: vec![(0.0, v)] }
    }

    /// Hypoxia-style dip: 98 % at rest, 85 % at 240 s, recovery to 97 % by 540 s.
    pub fn hypoxia() -> Self {
        Self { knots: vec![(0.0, 98.0), (240.0, 85.0), (540.0, 97.0)] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.knots.is_empty() {
            return Err(Error::Invalid("SpO2 profile needs at least one knot".into()));
        }
        if self.knots.iter().any(|&(_, v)| !(70.0..=100.0).contains(&v)) {
            return Err(Error::Invalid("SpO2 knots must lie in [70, 100]".into()));
        }
        if self.knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::Invalid("SpO2 knot times must increase".into()));
        }
        Ok(())
    }

    pub fn at(&self, t: f64) -> f64 {
        let k = &self.knots;
        if t <= k[0].0 {
            return k[0].1;
        }
        for w in k.windows(2) {
            let ((t0, v0), (t1, v1)) = (w[0], w[1]);
            if t <= t1 {
                return v0 + (t - t0) / (t1 - t0) * (v1 - v0);
            }
        }
        k[k.len() - 1].1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub session_id: String,
    pub dataset_id: String,
    pub subject: SubjectMetadata,
    pub duration_s: f64,
    pub frame_rate_hz: f64,
    pub spo2_profile: Spo2Profile,
    /// Supplies the subject's total hemoglobin (c_hbo + c_hbr).
    pub chromophore_base: Chromophores,
    /// Melanin volume fraction rendered for this subject.
    pub skin_tone_melanin: f64,
    pub frame_width: usize,
    pub frame_height: usize,
    pub rng_seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.spo2_profile.validate()?;
        if !(self.duration_s > 0.0 && self.frame_rate_hz > 0.0) {
            return Err(Error::Invalid("duration and frame rate must be positive".into()));
        }
        if self.frame_width == 0 || self.frame_height == 0 {
            return Err(Error::Invalid("frame size must be positive".into()));
        }
        if self.chromophore_base.c_hbo + self.chromophore_base.c_hbr <= 0.0 || self.skin_tone_melanin < 0.0 {
            return Err(Error::Invalid("chromophore levels must be positive".into()));
        }
        Ok(())
    }

    pub fn frame_count(&self) -> usize {
        (self.duration_s * self.frame_rate_hz).round() as usize
    }

    /// Chromophores at time `t`: constant total hemoglobin split by SpO2.
    pub fn chromophores_at(&self, t: f64) -> Chromophores {
        let h = self.chromophore_base.c_hbo + self.chromophore_base.c_hbr;
        let s = self.spo2_profile.at(t) / 100.0;
        Chromophores::new(self.skin_tone_melanin, h * s, h * (1.0 - s))
    }
}

/// Renders flat-color frames with per-pixel noise, a checker reading and
/// frame-rate labels.
pub fn generate_session(optics: &SkinOptics, scenario: &Scenario, cam: &CameraModel) -> Result<Session> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.rng_seed);
    let colorchecker = render_checker(optics, cam, &mut rng);
    let n = scenario.frame_count();
    let (w, h) = (scenario.frame_width, scenario.frame_height);
    let noise = (cam.noise_sigma > 0.0).then(|| Normal::new(0.0, cam.noise_sigma).unwrap());
    let mut frames = Vec::with_capacity(n);
    let mut times = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / scenario.frame_rate_hz;
        let c = scenario.chromophores_at(t);
        let clean = cam.expose(&optics.reflectance_spectrum(&c));
        let mut data = Vec::with_capacity(w * h * 3);
        for _ in 0..w * h {
            for v in clean {
                let e = noise.map_or(0.0, |d| d.sample(&mut rng));
                data.push((v + e).round().clamp(0.0, 255.0) as u8);
            }
        }
        frames.push(RgbFrame::new(w, h, data));
        times.push(t);
        labels.push(scenario.spo2_profile.at(t));
    }
    let session = Session {
        session_id: scenario.session_id.clone(),
        dataset_id: scenario.dataset_id.clone(),
        frames: FrameSource::Memory(frames),
        frame_rate_hz: scenario.frame_rate_hz,
        labels: LabelSeries { timestamps: times, values: labels },
        colorchecker: Some(colorchecker),
        roi_seed: None,
        metadata: scenario.subject.clone(),
    };
    session.validate()?;
    Ok(session)
}

/// Layout of a synthetic multi-subject dataset. Missing fields in a
/// serialized spec take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub dataset_id: String,
    pub subjects: usize,
    pub sessions_per_subject: usize,
    pub duration_s: f64,
    pub frame_rate_hz: f64,
    pub frame_width: usize,
    pub frame_height: usize,
    pub profile: Spo2Profile,
    /// Camera gain per subject is drawn uniformly from this range.
    pub gain_range: (f64, f64),
    /// Each channel's white-balance multiplier is drawn per subject from
    /// `1 ± white_balance_jitter`.
    pub white_balance_jitter: f64,
    /// Fitzpatrick tones are drawn uniformly from this inclusive range.
    pub skin_tones: (u8, u8),
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            dataset_id: "SYN".into(),
            subjects: 6,
            sessions_per_subject: 2,
            duration_s: 540.0,
            frame_rate_hz: 1.0,
            frame_width: 24,
            frame_height: 24,
            profile: Spo2Profile::hypoxia(),
            gain_range: (1.0, 1.0),
            white_balance_jitter: 0.0,
            skin_tones: (1, 6),
            noise_sigma: 2.0,
            seed: 7,
        }
    }
}

/// Generates every session of a synthetic dataset. Subject traits (skin
/// tone, hemoglobin, demographics, camera gain) come from one seeded stream;
/// each session gets its own derived render seed.
pub fn generate_dataset(optics: &SkinOptics, spec: &DatasetSpec) -> Result<crate::dataset::Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut sessions = Vec::new();
    let reference_checker = render_checker(optics, &CameraModel::gaussian(1.0, 0.0), &mut rng);
    for s in 0..spec.subjects {
        let skin_tone: u8 = rng.random_range(spec.skin_tones.0..=spec.skin_tones.1);
        let melanin = 0.005 + (skin_tone as f64 - 1.0) / 5.0 * 0.014 + rng.random_range(0.0..0.001);
        let total_hb = rng.random_range(45.0..75.0);
        let age = rng.random_range(18..45);
        let gender = if rng.random_bool(0.5) { "female" } else { "male" };
        let covid_history = rng.random_bool(0.5);
        let gain = if spec.gain_range.1 > spec.gain_range.0 {
            rng.random_range(spec.gain_range.0..=spec.gain_range.1)
        } else {
            spec.gain_range.0
        };
        let subject = SubjectMetadata {
            subject_id: format!("{}-S{:02}", spec.dataset_id, s),
            skin_tone,
            age,
            gender: gender.into(),
            covid_history,
        };
        let mut cam = CameraModel::gaussian(gain, spec.noise_sigma);
        if spec.white_balance_jitter > 0.0 {
            let j = spec.white_balance_jitter;
            cam.channel_gains = std::array::from_fn(|_| rng.random_range(1.0 - j..=1.0 + j));
        }
        for v in 0..spec.sessions_per_subject {
            let scenario = Scenario {
                session_id: format!("{}-S{:02}-V{}", spec.dataset_id, s, v),
                dataset_id: spec.dataset_id.clone(),
                subject: subject.clone(),
                duration_s: spec.duration_s,
                frame_rate_hz: spec.frame_rate_hz,
                spo2_profile: spec.profile.clone(),
                chromophore_base: Chromophores::new(melanin, total_hb, 0.0),
                skin_tone_melanin: melanin,
                frame_width: spec.frame_width,
                frame_height: spec.frame_height,
                rng_seed: rng.random(),
            };
            sessions.push(generate_session(optics, &scenario, &cam)?);
        }
    }
    Ok(crate::dataset::Dataset { id: spec.dataset_id.clone(), sessions, reference_checker: Some(reference_checker) })
}
