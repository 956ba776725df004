//! Spectral analysis of the readout voltage: Welch spectra, per-chunk peak
//! tracking, pulling regression, harmonic fits, energy correlation and
//! histogram comparison.

mod energy;
mod peaks;
mod psd;
mod pulling;

pub use energy::{
    autocorrelation, calibrate_q_constant, energy_autocorrelation, known_q_measurement, windowed_energy,
    AutocorrelationFit, Q_CALIBRATION,
};
pub use peaks::{
    chunk_analysis, filter_chunks, find_peak, find_peaks, write_records_csv, Band, ChunkAnalyzer, ChunkOptions,
    ChunkRecord, ModeBands, PeakEstimate, PeakOptions, AXIS_LABELS,
};
pub use psd::{welch_psd, Psd, Welch, WelchOptions, Window};
pub use pulling::{
    fit_pulling, frequency_histograms, harmonic_quadratic_fit, ks_distance, line_fit, mode_energy_report,
    model_frequencies, model_slopes, observed_frequencies, skewness, EnergyReport, HarmonicFit, Histograms, LineFit,
    PullingFit, PullingOptions, MIN_CHUNKS,
};
