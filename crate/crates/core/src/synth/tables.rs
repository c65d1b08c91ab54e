//! Bundled spectral tables on the 400–700 nm, 10 nm grid.

use crate::error::{Error, Result};

pub const BANDS: usize = 31;
pub const STEP_NM: f64 = 10.0;

pub fn wavelengths() -> [f64; BANDS] {
    std::array::from_fn(|i| 400.0 + STEP_NM * i as f64)
}

/// CIE 1931 2° standard observer (x̄, ȳ, z̄).
pub const CIE1931: [[f64; 3]; BANDS] = [
    [0.01431, 0.000396, 0.06785],
    [0.04351, 0.00121, 0.2074],
    [0.13438, 0.0040, 0.6456],
    [0.28390, 0.0116, 1.3856],
    [0.34828, 0.0230, 1.74706],
    [0.33620, 0.0380, 1.77211],
    [0.29080, 0.0600, 1.6692],
    [0.19536, 0.09098, 1.28764],
    [0.09564, 0.13902, 0.81295],
    [0.03201, 0.20802, 0.46518],
    [0.00490, 0.3230, 0.272],
    [0.00930, 0.5030, 0.1582],
    [0.06327, 0.7100, 0.07825],
    [0.16550, 0.8620, 0.04216],
    [0.29040, 0.9540, 0.0203],
    [0.43345, 0.99495, 0.00875],
    [0.59450, 0.9950, 0.0039],
    [0.7621, 0.9520, 0.0021],
    [0.9163, 0.8700, 0.00165],
    [1.0263, 0.7570, 0.0011],
    [1.0622, 0.6310, 0.0008],
    [1.0026, 0.5030, 0.00034],
    [0.85445, 0.3810, 0.00019],
    [0.6424, 0.2650, 0.00005],
    [0.4479, 0.1750, 0.00002],
    [0.2835, 0.1070, 0.0],
    [0.1649, 0.0610, 0.0],
    [0.0874, 0.0320, 0.0],
    [0.04677, 0.0170, 0.0],
    [0.0227, 0.00821, 0.0],
    [0.011359, 0.004102, 0.0],
];

/// CIE standard illuminant D65, relative spectral power.
pub const D65: [f64; BANDS] = [
    82.7549, 91.486, 93.4318, 86.6823, 104.865, 117.008, 117.812, 114.861, 115.923, 108.811, 109.354,
    107.802, 104.790, 107.689, 104.405, 104.046, 100.0, 96.3342, 95.788, 88.6856, 90.0062, 89.5991,
    87.6987, 83.6992, 83.6987, 80.2146, 80.2923, 82.2778, 78.2842, 69.7213, 71.6091,
];

const EXTINCTION_CSV: &str = include_str!("../../assets/extinction.csv");

/// Absorption tables: hemoglobin as decadic molar extinction (cm⁻¹/M),
/// melanin as absorption coefficient (cm⁻¹) at unit volume fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtinctionTable {
    pub hbo: [f64; BANDS],
    pub hbr: [f64; BANDS],
    pub melanin: [f64; BANDS],
}

impl Default for ExtinctionTable {
    fn default() -> Self {
        Self::parse(EXTINCTION_CSV, "assets/extinction.csv").expect("bundled extinction table")
    }
}

impl ExtinctionTable {
    /// Parses `wavelength_nm,eps_hbo,eps_hbr,eps_melanin`, one row per band.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mut hbo = [0.0; BANDS];
        let mut hbr = [0.0; BANDS];
        let mut melanin = [0.0; BANDS];
        let grid = wavelengths();
        let mut rows = 0;
        for (i, rec) in rdr.records().enumerate() {
            let bad = |msg: String| Error::Parse { path: origin.into(), line: i as u64 + 2, msg };
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            if i >= BANDS {
                return Err(bad(format!("more than {BANDS} rows")));
            }
            let v: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| bad(e.to_string()))?;
            if v.len() != 4 || v[0] != grid[i] {
                return Err(bad(format!("expected 4 columns at {} nm", grid[i])));
            }
            hbo[i] = v[1];
            hbr[i] = v[2];
            melanin[i] = v[3];
            rows += 1;
        }
        if rows != BANDS {
            return Err(Error::Parse { path: origin.into(), line: 0, msg: format!("{rows} rows, need {BANDS}") });
        }
        Ok(Self { hbo, hbr, melanin })
    }
}
