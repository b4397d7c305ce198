//! Conversions between datasheet units and the SI values used internally.
//!
//! Everything below the configuration layer works in W, Hz, s and m. These
//! helpers are the only place where dBm, ps/nm/km and friends appear.

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub fn dbm_to_watt(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

pub fn watt_to_dbm(w: f64) -> f64 {
    10.0 * (w / 1e-3).log10()
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Power attenuation in dB/km to the power loss rate in 1/m.
pub fn db_per_km_to_power_per_m(db_km: f64) -> f64 {
    db_km * std::f64::consts::LN_10 / 10.0 / 1e3
}

/// ps/(nm km) to s/m².
pub fn ps_nm_km_to_si(d: f64) -> f64 {
    d * 1e-12 / (1e-9 * 1e3)
}

/// Accumulated dispersion in ps/nm to s/m.
pub fn ps_nm_to_si(d: f64) -> f64 {
    d * 1e-12 / 1e-9
}

/// ps/√km to s/√m.
pub fn ps_sqrt_km_to_si(pmd: f64) -> f64 {
    pmd * 1e-12 / 1e3f64.sqrt()
}

/// s²/m to ps²/km.
pub fn beta2_to_ps2_km(beta2: f64) -> f64 {
    beta2 * 1e24 * 1e3
}

pub fn frequency_to_wavelength(f: f64) -> f64 {
    SPEED_OF_LIGHT / f
}
