use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::psd::{Psd, Welch, WelchOptions};
use crate::error::{Error, Result};
use crate::transduction::VoltageTrace;

pub const AXIS_LABELS: [&str; 3] = ["x", "y", "z"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo_hz: f64,
    pub hi_hz: f64,
}

/// Search windows for the three fundamentals and their second harmonics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeBands {
    pub fundamentals: [Band; 3],
    pub harmonics: [Band; 3],
}

impl ModeBands {
    /// Windows of `±half_width[i]` about predicted fundamentals and
    /// `±2·half_width[i]` about their doubles.
    pub fn around(frequencies_hz: [f64; 3], half_width_hz: [f64; 3]) -> Result<Self> {
        let b = |f: f64, w: f64| Band { lo_hz: f - w, hi_hz: f + w };
        let bands = Self {
            fundamentals: std::array::from_fn(|i| b(frequencies_hz[i], half_width_hz[i])),
            harmonics: std::array::from_fn(|i| b(2.0 * frequencies_hz[i], 2.0 * half_width_hz[i])),
        };
        bands.validate()?;
        Ok(bands)
    }

    pub fn all(&self) -> impl Iterator<Item = &Band> {
        self.fundamentals.iter().chain(&self.harmonics)
    }

    pub fn validate(&self) -> Result<()> {
        let all: Vec<&Band> = self.all().collect();
        for (k, a) in all.iter().enumerate() {
            if !(a.lo_hz >= 0.0 && a.hi_hz > a.lo_hz) {
                return Err(Error::InvalidParameter(format!("band {k} is empty or negative")));
            }
            for b in &all[k + 1..] {
                if a.lo_hz < b.hi_hz && b.lo_hz < a.hi_hz {
                    return Err(Error::InvalidParameter(format!(
                        "bands [{}, {}] and [{}, {}] Hz overlap",
                        a.lo_hz, a.hi_hz, b.lo_hz, b.hi_hz
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakOptions {
    /// Fraction of the band on each side used for the baseline.
    pub flank_fraction: f64,
    /// A peak is present when its largest bin exceeds the baseline by this factor.
    pub detection_factor: f64,
}

impl Default for PeakOptions {
    fn default() -> Self {
        Self { flank_fraction: 0.2, detection_factor: 20.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakEstimate {
    pub present: bool,
    /// Power-weighted centroid above baseline; `None` when absent.
    pub center_hz: Option<f64>,
    /// Baseline-subtracted area (V²), clipped at zero.
    pub area_v2: f64,
    /// Area without baseline subtraction (V²).
    pub area_raw_v2: f64,
    pub baseline_v2_hz: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

pub fn find_peak(psd: &Psd, band: &Band, opts: &PeakOptions) -> PeakEstimate {
    let range = psd.band(band.lo_hz, band.hi_hz);
    let absent = PeakEstimate { present: false, center_hz: None, area_v2: 0.0, area_raw_v2: 0.0, baseline_v2_hz: 0.0 };
    if range.is_empty() {
        return absent;
    }
    let d = &psd.density[range.clone()];
    let f = &psd.frequencies_hz[range];
    let flank = ((d.len() as f64 * opts.flank_fraction).ceil() as usize).max(1).min(d.len() / 2).max(1);
    let flanks: Vec<f64> = d[..flank].iter().chain(&d[d.len() - flank..]).copied().collect();
    let baseline = median(flanks);
    let df = psd.resolution_hz;
    let area_raw = d.iter().sum::<f64>() * df;
    let (mut w, mut wf, mut peak) = (0.0, 0.0, 0.0f64);
    for (x, fk) in d.iter().zip(f) {
        let e = (x - baseline).max(0.0);
        w += e;
        wf += e * fk;
        peak = peak.max(x - baseline);
    }
    let area = (d.iter().map(|x| x - baseline).sum::<f64>() * df).max(0.0);
    let present = w > 0.0 && peak > opts.detection_factor * baseline;
    PeakEstimate {
        present,
        center_hz: present.then(|| wf / w),
        area_v2: area,
        area_raw_v2: area_raw,
        baseline_v2_hz: baseline,
    }
}

/// Peaks for every band, in band order.
pub fn find_peaks(psd: &Psd, bands: &[Band], opts: &PeakOptions) -> Result<Vec<PeakEstimate>> {
    for (k, a) in bands.iter().enumerate() {
        for b in &bands[k + 1..] {
            if a.lo_hz < b.hi_hz && b.lo_hz < a.hi_hz {
                return Err(Error::InvalidParameter("bands must be disjoint".into()));
            }
        }
    }
    Ok(bands.iter().map(|b| find_peak(psd, b, opts)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChunkRecord {
    pub start_s: f64,
    pub fundamentals: [PeakEstimate; 3],
    pub harmonics: [PeakEstimate; 3],
}

impl ChunkRecord {
    /// True when any fundamental is missing.
    pub fn flagged(&self) -> bool {
        self.fundamentals.iter().any(|p| !p.present)
    }

    pub fn frequency_hz(&self, axis: usize) -> Option<f64> {
        self.fundamentals[axis].center_hz
    }

    pub fn area(&self, axis: usize) -> f64 {
        self.fundamentals[axis].area_v2
    }

    /// `ω_i² A_fi`, proportional to the mode energy.
    pub fn energy_proxy(&self, axis: usize) -> f64 {
        self.frequency_hz(axis).map_or(0.0, |f| (2.0 * PI * f).powi(2) * self.area(axis))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChunkOptions {
    pub chunk_s: f64,
    pub welch: WelchOptions,
    pub peaks: PeakOptions,
}

impl Default for ChunkOptions {
    fn default() -> Self {
        Self { chunk_s: 10.0, welch: WelchOptions::default(), peaks: PeakOptions::default() }
    }
}

/// Per-chunk spectral analysis; usable on streamed data one chunk at a time.
pub struct ChunkAnalyzer {
    welch: Welch,
    chunk_len: usize,
    bands: ModeBands,
    peaks: PeakOptions,
}

impl ChunkAnalyzer {
    pub fn new(sample_rate_hz: f64, bands: ModeBands, opts: &ChunkOptions) -> Result<Self> {
        bands.validate()?;
        let chunk_len = (opts.chunk_s * sample_rate_hz).round() as usize;
        let welch_opts = WelchOptions { segment_s: opts.welch.segment_s.min(opts.chunk_s), ..opts.welch };
        let welch = Welch::new(sample_rate_hz, welch_opts)?;
        let top = bands.all().fold(0.0f64, |a, b| a.max(b.hi_hz));
        if top > 0.5 * sample_rate_hz {
            return Err(Error::InvalidParameter(format!("band edge {top} Hz exceeds Nyquist")));
        }
        Ok(Self { welch, chunk_len, bands, peaks: opts.peaks })
    }

    pub fn chunk_len(&self) -> usize {
        self.chunk_len
    }

    pub fn analyze(&self, start_s: f64, volts: &[f64]) -> Result<ChunkRecord> {
        let psd = self.welch.estimate(volts)?;
        Ok(ChunkRecord {
            start_s,
            fundamentals: self.bands.fundamentals.map(|b| find_peak(&psd, &b, &self.peaks)),
            harmonics: self.bands.harmonics.map(|b| find_peak(&psd, &b, &self.peaks)),
        })
    }
}

/// Splits a trace into whole chunks and analyses them in parallel.
pub fn chunk_analysis(trace: &VoltageTrace, bands: ModeBands, opts: &ChunkOptions) -> Result<Vec<ChunkRecord>> {
    let an = ChunkAnalyzer::new(trace.sample_rate_hz, bands, opts)?;
    let n = an.chunk_len();
    if trace.len() < 2 * n {
        return Err(Error::TooShort { needed: 2 * n, have: trace.len() });
    }
    trace
        .volts
        .par_chunks_exact(n)
        .enumerate()
        .map(|(k, c)| an.analyze(trace.start_time_s + (k * n) as f64 / trace.sample_rate_hz, c))
        .collect()
}

/// Chunks in which every mode other than `active` is quiet: each other
/// mode's area lies at or below the `percentile` of its own distribution.
pub fn filter_chunks(records: &[ChunkRecord], active: usize, percentile: f64) -> Result<Vec<ChunkRecord>> {
    if records.is_empty() {
        return Err(Error::Insufficient("no chunk records".into()));
    }
    if !(0.0..=100.0).contains(&percentile) {
        return Err(Error::InvalidParameter("percentile must lie in [0, 100]".into()));
    }
    let n = records.len();
    let mut rank_max = vec![0.0f64; n];
    for axis in (0..3).filter(|&a| a != active) {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| records[a].area(axis).total_cmp(&records[b].area(axis)));
        // ties share the highest rank of their group
        let mut k = 0;
        while k < n {
            let mut e = k;
            while e + 1 < n && records[idx[e + 1]].area(axis) == records[idx[k]].area(axis) {
                e += 1;
            }
            for &i in &idx[k..=e] {
                rank_max[i] = rank_max[i].max((e + 1) as f64 / n as f64);
            }
            k = e + 1;
        }
    }
    let kept: Vec<ChunkRecord> = records
        .iter()
        .zip(&rank_max)
        .filter(|(_, r)| **r <= percentile / 100.0 + 1e-12)
        .map(|(c, _)| *c)
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyFilter(percentile));
    }
    Ok(kept)
}

pub fn write_records_csv<W: std::io::Write>(records: &[ChunkRecord], mut w: W) -> Result<()> {
    write!(w, "start_s")?;
    for kind in ["f", "h"] {
        for a in AXIS_LABELS {
            write!(w, ",{kind}{a}_present,{kind}{a}_center_hz,{kind}{a}_area_v2,{kind}{a}_area_raw_v2,{kind}{a}_baseline_v2_hz")?;
        }
    }
    writeln!(w)?;
    for r in records {
        write!(w, "{}", r.start_s)?;
        for p in r.fundamentals.iter().chain(&r.harmonics) {
            let c = p.center_hz.map_or(String::new(), |c| format!("{c:.6}"));
            write!(w, ",{},{c},{:e},{:e},{:e}", u8::from(p.present), p.area_v2, p.area_raw_v2, p.baseline_v2_hz)?;
        }
        writeln!(w)?;
    }
    Ok(())
}
