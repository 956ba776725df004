//! Physical constants in SI units.

/// Vacuum permeability (T·m/A).
pub const MU_0: f64 = 1.256_637_062_12e-6;

/// Magnetic flux quantum (Wb).
pub const FLUX_QUANTUM: f64 = 2.067_833_848e-15;

/// Standard gravitational acceleration (m/s²).
pub const STANDARD_GRAVITY: f64 = 9.806_65;

/// Density of lead (kg/m³).
pub const LEAD_DENSITY: f64 = 11_340.0;

/// Density of eutectic tin-lead solder (kg/m³).
pub const TIN_LEAD_DENSITY: f64 = 8_400.0;
