//! Interdigital transducer (IDT) pair and the focused SAW beam it launches.
//!
//! The transducer is an ideal array of `N` finger pairs: its impulse response
//! is a rectangle of duration `N / f0`, so its frequency response is a sinc
//! with first nulls at `f0 (1 ± 1/N)`. The strain at the defect is anchored
//! by a single calibration point (Rabi frequency at a known input power)
//! rather than computed from first principles.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::Envelope;
use crate::error::{Error, Result};
use crate::C64;

/// Floor for S-parameter magnitudes, dB.
pub const DB_FLOOR: f64 = -120.0;

/// Intensity FWHM over Gaussian σ, 2√(2 ln 2).
const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

/// Transducer geometry and response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdtSpec {
    /// Hz.
    pub center_freq: f64,
    /// m.
    pub saw_wavelength: f64,
    pub finger_pairs: u32,
    /// Gaussian beam waist scale at the transducer, m.
    pub aperture: f64,
    /// Transducer-to-focus distance, m.
    pub focal_length: f64,
    /// |S11|² at the center frequency, dB.
    pub insertion_s11_db: f64,
    /// Pair |S21|² at the center frequency, dB.
    pub transmission_s21_db: f64,
    /// |S11|² far from resonance, dB.
    pub s11_background_db: f64,
    /// Transducer-to-defect distance used for timing correction, m.
    pub defect_distance: f64,
}

impl Default for IdtSpec {
    fn default() -> Self {
        Self {
            center_freq: 3.37e9,
            saw_wavelength: 3e-6,
            finger_pairs: 32,
            aperture: 30e-6,
            focal_length: 150e-6,
            insertion_s11_db: -0.4,
            transmission_s21_db: -31.0,
            s11_background_db: -0.1,
            defect_distance: 300e-6,
        }
    }
}

impl IdtSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("center_freq", self.center_freq),
            ("saw_wavelength", self.saw_wavelength),
            ("aperture", self.aperture),
            ("focal_length", self.focal_length),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, "must be positive and finite"));
            }
        }
        if self.finger_pairs == 0 {
            return Err(Error::invalid("finger_pairs", "must be at least 1"));
        }
        for (name, v) in [
            ("insertion_s11_db", self.insertion_s11_db),
            ("transmission_s21_db", self.transmission_s21_db),
            ("s11_background_db", self.s11_background_db),
        ] {
            if v > 0.0 || v.is_nan() {
                return Err(Error::invalid(name, "must be ≤ 0 dB"));
            }
        }
        if !(self.defect_distance >= 0.0) || !self.defect_distance.is_finite() {
            return Err(Error::invalid("defect_distance", "must be finite and non-negative"));
        }
        Ok(())
    }

    /// SAW phase velocity, m/s.
    pub fn saw_velocity(&self) -> f64 {
        self.center_freq * self.saw_wavelength
    }

    /// Duration of the transducer impulse response, `N / f0`.
    pub fn impulse_duration(&self) -> f64 {
        self.finger_pairs as f64 / self.center_freq
    }

    pub fn with_finger_pairs(&self, finger_pairs: u32) -> Self {
        Self {
            finger_pairs,
            ..self.clone()
        }
    }
}

/// Rabi frequency measured at one input power and frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationPoint {
    /// W.
    pub input_power: f64,
    /// Hz.
    pub rabi_freq: f64,
    /// Hz.
    pub at_freq: f64,
}

impl Default for CalibrationPoint {
    fn default() -> Self {
        Self {
            input_power: 4e-3,
            rabi_freq: 48e6,
            at_freq: 3.43e9,
        }
    }
}

impl CalibrationPoint {
    pub fn validate(&self) -> Result<()> {
        if !(self.input_power > 0.0) || !self.input_power.is_finite() {
            return Err(Error::invalid("input_power", "must be positive"));
        }
        if !(self.rabi_freq >= 0.0) || !self.rabi_freq.is_finite() {
            return Err(Error::invalid("rabi_freq", "must be non-negative"));
        }
        if !(self.at_freq > 0.0) || !self.at_freq.is_finite() {
            return Err(Error::invalid("at_freq", "must be positive"));
        }
        Ok(())
    }
}

fn sinc(u: f64) -> f64 {
    if u.abs() < 1e-8 {
        1.0 - u * u / 6.0
    } else {
        u.sin() / u
    }
}

/// Single-transducer amplitude response, 1 at the center frequency.
///
/// `sinc(Nπ(f − f0)/f0)` times the linear phase of the group delay `N/(2 f0)`.
pub fn frequency_response(spec: &IdtSpec, f: f64) -> C64 {
    let n = spec.finger_pairs as f64;
    let f0 = spec.center_freq;
    let magnitude = sinc(n * std::f64::consts::PI * (f - f0) / f0);
    let group_delay = 0.5 * spec.impulse_duration();
    C64::from_polar(1.0, -crate::TWO_PI * (f - f0) * group_delay) * magnitude
}

/// FWHM of |frequency_response|, found by bisecting the upper half-amplitude
/// point between the center and the first null.
pub fn amplitude_fwhm(spec: &IdtSpec) -> f64 {
    let f0 = spec.center_freq;
    let (mut lo, mut hi) = (f0, f0 * (1.0 + 1.0 / spec.finger_pairs as f64));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if frequency_response(spec, mid).norm() > 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-9 {
            break;
        }
    }
    // The sinc is symmetric about f0.
    2.0 * (0.5 * (lo + hi) - f0)
}

/// Finger-pair count whose amplitude FWHM is closest to `target_fwhm`.
pub fn derive_finger_pairs(spec: &IdtSpec, target_fwhm: f64) -> Result<u32> {
    if !(target_fwhm > 0.0 && target_fwhm < spec.center_freq) {
        return Err(Error::invalid("target_fwhm", "must lie in (0, center_freq)"));
    }
    let mut best = (1u32, f64::INFINITY);
    for n in 1..=u32::MAX {
        let fwhm = amplitude_fwhm(&spec.with_finger_pairs(n));
        let miss = (fwhm - target_fwhm).abs();
        if miss < best.1 {
            best = (n, miss);
        }
        // FWHM falls monotonically with N.
        if fwhm < target_fwhm {
            break;
        }
    }
    Ok(best.0)
}

/// Output of [`pulse_response`].
#[derive(Debug, Clone)]
pub struct PulseResponse {
    pub envelope: Envelope,
    /// Full width at half maximum of the output envelope, s.
    pub fwhm: f64,
}

/// Impulse response of the transducer: a unit-area rectangle of duration `N/f0`.
pub fn impulse_response(spec: &IdtSpec) -> PulseResponse {
    let tau = spec.impulse_duration();
    PulseResponse {
        envelope: Envelope::Rect {
            start: 0.0,
            end: tau,
            amplitude: 1.0 / tau,
        },
        fwhm: tau,
    }
}

/// Convolves `input` with the unit-area transducer impulse response.
///
/// Rectangular inputs are handled in closed form (the output is a
/// trapezoid); other bounded envelopes are convolved numerically.
pub fn pulse_response(spec: &IdtSpec, input: &Envelope) -> Result<PulseResponse> {
    let tau = spec.impulse_duration();
    let envelope = match input {
        Envelope::Rect { start, end, amplitude } => {
            let width = end - start;
            if !(width > 0.0) {
                return Err(Error::invalid("input", "rectangle must have positive width"));
            }
            let (short, long) = if width < tau { (width, tau) } else { (tau, width) };
            let peak = amplitude * short / tau;
            let knots = if (long - short).abs() <= 1e-15 * long {
                vec![(*start, 0.0), (start + short, peak), (start + short + long, 0.0)]
            } else {
                vec![
                    (*start, 0.0),
                    (start + short, peak),
                    (start + long, peak),
                    (start + short + long, 0.0),
                ]
            };
            Envelope::piecewise(knots)?
        }
        other => {
            let (a, b) = other
                .support()
                .ok_or_else(|| Error::invalid("input", "envelope must have bounded support"))?;
            let (t_start, t_end) = (a, b + tau);
            let n_out = 2000usize;
            let n_kernel = 400usize;
            let ds = tau / n_kernel as f64;
            let knots = (0..=n_out)
                .map(|i| {
                    let t = t_start + (t_end - t_start) * i as f64 / n_out as f64;
                    // Trapezoid rule over the kernel support [0, τ].
                    let mut acc = 0.0;
                    for k in 0..=n_kernel {
                        let w = if k == 0 || k == n_kernel { 0.5 } else { 1.0 };
                        acc += w * other.value(t - k as f64 * ds);
                    }
                    (t, acc * ds / tau)
                })
                .collect();
            Envelope::piecewise(knots)?
        }
    };
    let fwhm = envelope_fwhm(&envelope);
    Ok(PulseResponse { envelope, fwhm })
}

/// FWHM of a piecewise-linear or rectangular envelope.
pub fn envelope_fwhm(envelope: &Envelope) -> f64 {
    match envelope {
        Envelope::Rect { start, end, .. } => end - start,
        Envelope::Piecewise(knots) => {
            let half = 0.5 * envelope.peak();
            let crossing = |a: (f64, f64), b: (f64, f64)| a.0 + (half - a.1) * (b.0 - a.0) / (b.1 - a.1);
            let rise = knots
                .windows(2)
                .find(|w| w[0].1.abs() < half && w[1].1.abs() >= half)
                .map(|w| crossing(w[0], w[1]))
                .unwrap_or(knots[0].0);
            let fall = knots
                .windows(2)
                .rev()
                .find(|w| w[0].1.abs() >= half && w[1].1.abs() < half)
                .map(|w| crossing(w[0], w[1]))
                .unwrap_or(knots[knots.len() - 1].0);
            fall - rise
        }
        other => {
            let (a, b) = other.support().unwrap_or((0.0, 0.0));
            b - a
        }
    }
}

fn to_db(power_ratio: f64) -> f64 {
    if power_ratio <= 0.0 {
        DB_FLOOR
    } else {
        (10.0 * power_ratio.log10()).max(DB_FLOOR)
    }
}

/// `(|S11|², |S21|²)` in dB at frequency `f`.
pub fn s_parameters(spec: &IdtSpec, f: f64) -> (f64, f64) {
    let amplitude_sq = frequency_response(spec, f).norm_sqr();
    // Two transducer passes: amplitude response enters twice.
    let s21 = if amplitude_sq <= 0.0 {
        DB_FLOOR
    } else {
        (spec.transmission_s21_db + 20.0 * amplitude_sq.log10()).max(DB_FLOOR)
    };
    let bg = 10f64.powf(spec.s11_background_db / 10.0);
    let dip = 10f64.powf(spec.insertion_s11_db / 10.0);
    let s11 = to_db(bg + (dip - bg) * amplitude_sq);
    (s11, s21)
}

/// Bracket on the on-chip acoustic power, `(lower, upper)` in W.
///
/// Upper: everything not reflected becomes acoustic. Lower: only what is
/// transmitted through the transducer pair.
pub fn onchip_power_bounds(p_in: f64, s11_db: f64, s21_db: f64) -> Result<(f64, f64)> {
    if !(p_in > 0.0) || !p_in.is_finite() {
        return Err(Error::invalid("p_in", "must be positive"));
    }
    if s11_db > 0.0 || s11_db.is_nan() {
        return Err(Error::invalid("s11_db", "must be ≤ 0 dB"));
    }
    if s21_db > 0.0 || s21_db.is_nan() {
        return Err(Error::invalid("s21_db", "must be ≤ 0 dB"));
    }
    let upper = p_in * (1.0 - 10f64.powf(s11_db / 10.0));
    let lower = p_in * 10f64.powf(s21_db / 10.0);
    if lower > upper {
        return Err(Error::InconsistentBounds { lower, upper });
    }
    Ok((lower, upper))
}

/// Rabi frequency (Hz) driven by `p_in` watts at frequency `f`.
pub fn power_to_rabi(p_in: f64, f: f64, spec: &IdtSpec, cal: &CalibrationPoint) -> Result<f64> {
    if !(p_in >= 0.0) || !p_in.is_finite() {
        return Err(Error::invalid("p_in", "must be finite and non-negative"));
    }
    cal.validate()?;
    let reference = frequency_response(spec, cal.at_freq).norm();
    if reference == 0.0 {
        return Err(Error::invalid("at_freq", "calibration frequency sits on a transducer null"));
    }
    Ok(cal.rabi_freq * (p_in / cal.input_power).sqrt() * frequency_response(spec, f).norm() / reference)
}

/// Peak strain amplitude at `depth` below the surface and `lateral_offset`
/// from the beam axis, for `coefficient` strain per √W.
///
/// Depth: single exponential with 1/e length λ. Lateral: Gaussian whose
/// intensity FWHM is λ.
pub fn focal_strain_amplitude(p_acoustic: f64, spec: &IdtSpec, depth: f64, lateral_offset: f64, coefficient: f64) -> Result<f64> {
    if !(p_acoustic >= 0.0) || !p_acoustic.is_finite() {
        return Err(Error::invalid("p_acoustic", "must be finite and non-negative"));
    }
    if !(depth >= 0.0) || !depth.is_finite() {
        return Err(Error::invalid("depth", "must be finite and non-negative"));
    }
    let lambda = spec.saw_wavelength;
    let sigma = lambda / FWHM_PER_SIGMA;
    // Intensity exp(−x²/2σ²), so amplitude exp(−x²/4σ²).
    let lateral = (-lateral_offset * lateral_offset / (4.0 * sigma * sigma)).exp();
    Ok(coefficient * p_acoustic.sqrt() * lateral * (-depth / lambda).exp())
}

/// Strain coefficient (strain/√W) consistent with the calibration point.
///
/// The defect is taken at the focus, `depth` below the surface, and the
/// on-chip acoustic power at calibration is the upper bound of
/// [`onchip_power_bounds`]. `spin_strain_rate` converts strain into Rabi
/// frequency.
pub fn solve_strain_coefficient(spec: &IdtSpec, cal: &CalibrationPoint, spin_strain_rate: f64, depth: f64) -> Result<f64> {
    if !(spin_strain_rate > 0.0) {
        return Err(Error::invalid("spin_strain_rate", "must be positive to calibrate strain"));
    }
    let (_, p_acoustic) = onchip_power_bounds(cal.input_power, spec.insertion_s11_db, spec.transmission_s21_db)?;
    let strain = cal.rabi_freq / spin_strain_rate;
    let unit = focal_strain_amplitude(p_acoustic, spec, depth, 0.0, 1.0)?;
    Ok(strain / unit)
}

/// Transit time of the SAW over `distance`, s.
pub fn propagation_delay(distance: f64, spec: &IdtSpec) -> Result<f64> {
    if !(distance >= 0.0) || !distance.is_finite() {
        return Err(Error::invalid("distance", "must be finite and non-negative"));
    }
    Ok(distance / spec.saw_velocity())
}

/// One row of an S-parameter sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SParameterPoint {
    pub freq: f64,
    pub s11_db: f64,
    pub s21_db: f64,
}

pub fn s_parameter_sweep(spec: &IdtSpec, freqs: &[f64]) -> Vec<SParameterPoint> {
    freqs
        .iter()
        .map(|&freq| {
            let (s11_db, s21_db) = s_parameters(spec, freq);
            SParameterPoint { freq, s11_db, s21_db }
        })
        .collect()
}

/// Writes one S-parameter as two-column CSV: `frequency (Hz),<name> (dB)`.
pub fn write_sparam_csv<W: Write>(out: W, name: &str, points: &[SParameterPoint], pick: impl Fn(&SParameterPoint) -> f64) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Serialization(e.to_string());
    w.write_record(["frequency (Hz)", &format!("{name} (dB)")]).map_err(err)?;
    for p in points {
        w.write_record([p.freq.to_string(), pick(p).to_string()]).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(Path::new("<csv>"), e))?;
    Ok(())
}
