//! ODAR, Rabi and Ramsey drivers and the photon-histogram observable.
//!
//! Each measurement is: thermal start, C1 initialization, acoustic pulse(s),
//! C1 readout. The observable is the ratio of photons detected in the first
//! window of the readout pulse to those in the first window of the
//! initialization pulse.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{evolve, DensityMatrix, EvolveOptions, MasterEquation};
use crate::error::{Error, Result};
use crate::saw_device::{self, CalibrationPoint, IdtSpec};
use crate::sequence::{self, CompileOptions, CompiledSchedule, Pulse, PulseKind, PulseSequence, LEVELS};
use crate::siv_model::{self, Decoherence, SivModelParams};

/// Qubit frequency of the default operating point, Hz.
pub const DEFAULT_QUBIT_FREQ: f64 = 3.43e9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Timings {
    /// s.
    pub init: f64,
    pub readout: f64,
    /// Gap between the init pulse end and the acoustic arrival, and between
    /// the last acoustic pulse end and the readout.
    pub gap: f64,
    /// ODAR acoustic pulse length.
    pub acoustic: f64,
}

impl Default for Timings {
    fn default() -> Self {
        Self {
            init: 150e-9,
            readout: 100e-9,
            gap: 50e-9,
            acoustic: 20e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThermalStart {
    /// 50/50 mixture of ↓ and ↑.
    #[default]
    Equal,
    /// Boltzmann weights at the model temperature.
    Boltzmann,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShotNoise {
    pub enabled: bool,
    /// Sequence repetitions summed into each histogram.
    pub repetitions: f64,
}

impl Default for ShotNoise {
    fn default() -> Self {
        Self {
            enabled: false,
            repetitions: 1e5,
        }
    }
}

/// Everything a measurement needs besides its swept variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentContext {
    pub model: SivModelParams,
    pub device: IdtSpec,
    pub calibration: CalibrationPoint,
    pub timings: Timings,
    /// C1 pumping rate during optical pulses, 1/s.
    pub pump_rate: f64,
    pub compile: CompileOptions,
    pub thermal_start: ThermalStart,
    /// Histogram bin width, s.
    pub bin_width: f64,
    pub tol: f64,
    /// Sweep parallelism; 0 uses every available core.
    pub workers: usize,
    pub shot_noise: ShotNoise,
    pub seed: u64,
    /// Check density-matrix invariants at every sample.
    pub check_invariants: bool,
}

impl Default for ExperimentContext {
    fn default() -> Self {
        let model = SivModelParams::default()
            .tuned(
                DEFAULT_QUBIT_FREQ,
                &siv_model::field_direction(siv_model::default_field_angle()),
            )
            .expect("default operating point is reachable");
        Self {
            model,
            device: IdtSpec::default(),
            calibration: CalibrationPoint::default(),
            timings: Timings::default(),
            pump_rate: 3.7e7,
            compile: CompileOptions {
                decoherence: Decoherence::from_t2_star(33e-9),
                ..CompileOptions::default()
            },
            thermal_start: ThermalStart::Equal,
            bin_width: 1e-9,
            tol: 1e-8,
            workers: 0,
            shot_noise: ShotNoise::default(),
            seed: 0,
            check_invariants: false,
        }
    }
}

impl ExperimentContext {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.device.validate()?;
        self.calibration.validate()?;
        let t = &self.timings;
        for (name, v) in [("init", t.init), ("readout", t.readout), ("acoustic", t.acoustic)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, "duration must be positive"));
            }
        }
        if !(t.gap >= 0.0) || !t.gap.is_finite() {
            return Err(Error::invalid("gap", "must be finite and non-negative"));
        }
        if !(self.pump_rate >= 0.0) || !self.pump_rate.is_finite() {
            return Err(Error::invalid("pump_rate", "must be finite and non-negative"));
        }
        if !(self.bin_width > 0.0) || !self.bin_width.is_finite() {
            return Err(Error::invalid("bin_width", "must be positive"));
        }
        if self.shot_noise.enabled && !(self.shot_noise.repetitions > 0.0) {
            return Err(Error::invalid("repetitions", "must be positive"));
        }
        Ok(())
    }

    /// Qubit splitting of the configured model, Hz.
    pub fn qubit_freq(&self) -> Result<f64> {
        let h = siv_model::build_ground_hamiltonian(&self.model, &Default::default())?;
        Ok(siv_model::qubit_reduction(&h, &self.model)?.qubit_freq)
    }

    fn evolve_options(&self) -> EvolveOptions {
        EvolveOptions {
            check_invariants: self.check_invariants,
            ..EvolveOptions::with_tol(self.tol)
        }
    }

    fn initial_state(&self, qubit_freq: f64) -> Result<DensityMatrix> {
        let p_down = match self.thermal_start {
            ThermalStart::Equal => 0.5,
            ThermalStart::Boltzmann => siv_model::thermal_lower_population(qubit_freq, self.model.temperature),
        };
        DensityMatrix::from_populations(&[p_down, 1.0 - p_down, 0.0])
    }

    fn snap_to_bin(&self, t: f64) -> f64 {
        let k = (t / self.bin_width - 1e-9).ceil();
        k * self.bin_width
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::invalid("workers", e.to_string()))
    }
}

/// Photon-detection histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionHistogram {
    /// s.
    pub t0: f64,
    /// s.
    pub bin_width: f64,
    /// Mean detected rate per bin (1/s), or sampled counts when `sampled`.
    pub bins: Vec<f64>,
    pub sampled: bool,
}

impl DetectionHistogram {
    pub fn end(&self) -> f64 {
        self.t0 + self.bin_width * self.bins.len() as f64
    }

    /// Bin-overlap-weighted integral over `[a, b)`.
    pub fn integral(&self, a: f64, b: f64) -> Result<f64> {
        let slack = 1e-9 * self.bin_width;
        if !(a < b) || a < self.t0 - slack || b > self.end() + slack {
            return Err(Error::WindowOutOfRange { start: a, end: b });
        }
        let mut sum = 0.0;
        for (k, v) in self.bins.iter().enumerate() {
            let lo = self.t0 + k as f64 * self.bin_width;
            let hi = lo + self.bin_width;
            let overlap = (hi.min(b) - lo.max(a)).max(0.0);
            sum += v * overlap / self.bin_width;
        }
        Ok(sum)
    }
}

/// Readout integral over init integral.
pub fn normalized_population(h: &DetectionHistogram, init_window: (f64, f64), readout_window: (f64, f64)) -> Result<f64> {
    let init = h.integral(init_window.0, init_window.1)?;
    if !(init > 0.0) {
        return Err(Error::UndefinedNormalization);
    }
    Ok(h.integral(readout_window.0, readout_window.1)? / init)
}

/// Evolves the thermal start through `schedule` and bins the emission rate.
///
/// The rate is sampled at bin edges and midpoints and each bin holds its
/// Simpson mean.
fn histogram_of(schedule: &CompiledSchedule, ctx: &ExperimentContext, rng_stream: u64) -> Result<DetectionHistogram> {
    let bw = ctx.bin_width;
    let n_bins = ((schedule.total_duration / bw) - 1e-9).ceil().max(1.0) as usize;
    let grid_end = n_bins as f64 * bw;
    let grid: Vec<f64> = (0..=2 * n_bins).map(|k| 0.5 * k as f64 * bw).collect();

    let mut rho = ctx.initial_state(schedule.qubit_freq)?;
    let opts = ctx.evolve_options();
    let mut rates = Vec::with_capacity(grid.len());
    rates.push(emission_rate(schedule, &rho));
    let mut next = 1usize;
    let last = schedule.segments.len() - 1;
    for (i, seg) in schedule.segments.iter().enumerate() {
        let end = if i == last { grid_end.max(seg.end) } else { seg.end };
        let start = next;
        while next < grid.len() && grid[next] <= end + 1e-12 * bw {
            next += 1;
        }
        let samples: Vec<f64> = grid[start..next].iter().map(|t| t.min(end)).collect();
        let eq = MasterEquation {
            h0: seg.h0.clone(),
            drives: seg.drives.clone(),
            collapses: seg.collapses.clone(),
        };
        let mut samples_with_end = samples.clone();
        let ends_on_sample = samples.last().is_some_and(|&t| t >= end);
        if !ends_on_sample {
            samples_with_end.push(end);
        }
        let res = evolve(&rho, &eq, (seg.start, end), &samples_with_end, &opts)?;
        for s in res.states.iter().take(samples.len()) {
            rates.push(emission_rate(schedule, s));
        }
        rho = res.states.last().cloned().unwrap_or(rho);
    }
    debug_assert_eq!(rates.len(), grid.len());

    let bins: Vec<f64> = (0..n_bins)
        .map(|k| ((rates[2 * k] + 4.0 * rates[2 * k + 1] + rates[2 * k + 2]) / 6.0).max(0.0))
        .collect();
    let expected = DetectionHistogram {
        t0: 0.0,
        bin_width: bw,
        bins,
        sampled: false,
    };
    if ctx.shot_noise.enabled {
        sample_shot_noise(&expected, ctx.shot_noise.repetitions, ctx.seed, rng_stream)
    } else {
        Ok(expected)
    }
}

/// Poisson counts for `repetitions` summed shots of an expected-rate
/// histogram. `stream` selects an independent generator stream under `seed`.
pub fn sample_shot_noise(
    expected: &DetectionHistogram,
    repetitions: f64,
    seed: u64,
    stream: u64,
) -> Result<DetectionHistogram> {
    if expected.sampled {
        return Err(Error::invalid("histogram", "already holds sampled counts"));
    }
    if !(repetitions > 0.0) || !repetitions.is_finite() {
        return Err(Error::invalid("repetitions", "must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let scale = expected.bin_width * repetitions;
    let bins = expected
        .bins
        .iter()
        .map(|v| {
            let mean = v * scale;
            if mean > 0.0 {
                Poisson::new(mean)
                    .map(|d| d.sample(&mut rng))
                    .map_err(|e| Error::invalid("shot_noise", e.to_string()))
            } else {
                Ok(0.0)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(DetectionHistogram {
        bins,
        sampled: true,
        ..expected.clone()
    })
}

fn emission_rate(schedule: &CompiledSchedule, rho: &DensityMatrix) -> f64 {
    (0..LEVELS)
        .map(|k| schedule.emission_op[(k, k)].re * rho.population(k))
        .sum()
}

/// Compiles `seq` with the context settings and returns its histogram.
pub fn run_histogram(seq: &PulseSequence, ctx: &ExperimentContext) -> Result<DetectionHistogram> {
    ctx.validate()?;
    let schedule = compile_in(seq, ctx)?;
    histogram_of(&schedule, ctx, 0)
}

pub fn compile_in(seq: &PulseSequence, ctx: &ExperimentContext) -> Result<CompiledSchedule> {
    let schedule = sequence::compile(seq, &ctx.model, &ctx.device, &ctx.calibration, &ctx.compile)?;
    log::debug!("compiled schedule:\n{schedule}");
    Ok(schedule)
}

fn windows(schedule: &CompiledSchedule) -> Result<((f64, f64), (f64, f64))> {
    let init = schedule.window("init").ok_or(Error::UndefinedNormalization)?;
    let readout = schedule.window("readout").ok_or(Error::UndefinedNormalization)?;
    Ok(((init.start, init.end), (readout.start, readout.end)))
}

/// Normalized population produced by one sequence.
pub fn measure(seq: &PulseSequence, ctx: &ExperimentContext, rng_stream: u64) -> Result<(f64, DetectionHistogram)> {
    let schedule = compile_in(seq, ctx)?;
    let h = histogram_of(&schedule, ctx, rng_stream)?;
    let (init, readout) = windows(&schedule)?;
    Ok((normalized_population(&h, init, readout)?, h))
}

/// Init, acoustic pulses arriving at the given `(offset, duration, freq, power, phase)`
/// relative to the first arrival, readout. Returns the timing-corrected sequence.
fn build_sequence(ctx: &ExperimentContext, acoustic: &[(f64, f64, f64, f64, f64)]) -> Result<PulseSequence> {
    let t = &ctx.timings;
    let arrival = t.init + t.gap;
    let delay = saw_device::propagation_delay(ctx.device.defect_distance, &ctx.device)?;
    let mut pulses = vec![Pulse::optical(PulseKind::OpticalC1, 0.0, t.init, ctx.pump_rate)];
    let mut last_end = arrival;
    for &(offset, duration, freq, power, phase) in acoustic {
        if duration > 0.0 {
            let launch = arrival + offset - delay;
            if launch < 0.0 {
                return Err(Error::invalid(
                    "defect_distance",
                    "acoustic launch would precede the sequence start",
                ));
            }
            pulses.push(Pulse::acoustic(launch, duration, freq, power, phase));
        }
        last_end = last_end.max(arrival + offset + duration);
    }
    let readout_start = ctx.snap_to_bin(last_end + t.gap);
    pulses.push(Pulse::optical(PulseKind::OpticalC1, readout_start, t.readout, ctx.pump_rate));
    let seq = PulseSequence::new(pulses, readout_start + t.readout)?;
    sequence::correct_timing(&seq, ctx.device.defect_distance, &ctx.device)
}

/// ODAR sequence for one carrier frequency.
pub fn odar_sequence(ctx: &ExperimentContext, freq: f64, pulse_duration: f64, power: f64) -> Result<PulseSequence> {
    build_sequence(ctx, &[(0.0, pulse_duration, freq, power, 0.0)])
}

/// Rabi sequence; a zero duration leaves out the acoustic pulse.
pub fn rabi_sequence(ctx: &ExperimentContext, duration: f64, power: f64, freq: f64) -> Result<PulseSequence> {
    build_sequence(ctx, &[(0.0, duration, freq, power, 0.0)])
}

/// π/2 duration at `power` for the configured qubit.
pub fn half_pi_duration(ctx: &ExperimentContext, power: f64) -> Result<f64> {
    let rabi = saw_device::power_to_rabi(power, ctx.qubit_freq()?, &ctx.device, &ctx.calibration)?;
    Ok(0.5 * sequence::pi_pulse_duration(rabi)?)
}

/// Two π/2 pulses at `qubit_freq + detuning` separated by `delay`.
pub fn ramsey_sequence(ctx: &ExperimentContext, delay: f64, detuning: f64, power: f64) -> Result<PulseSequence> {
    let half_pi = half_pi_duration(ctx, power)?;
    let freq = ctx.qubit_freq()? + detuning;
    build_sequence(
        ctx,
        &[
            (0.0, half_pi, freq, power, 0.0),
            (half_pi + delay, half_pi, freq, power, 0.0),
        ],
    )
}

/// A swept measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub variable_name: String,
    /// Unit of `values`.
    pub unit: String,
    pub values: Vec<f64>,
    /// Normalized ↓ population.
    pub population: Vec<f64>,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl ScanResult {
    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.population.len() {
            return Err(Error::DimensionMismatch {
                expected: self.values.len(),
                got: self.population.len(),
            });
        }
        Ok(())
    }
}

fn scan<F>(ctx: &ExperimentContext, values: &[f64], build: F) -> Result<Vec<f64>>
where
    F: Fn(f64) -> Result<PulseSequence> + Sync,
{
    ctx.validate()?;
    if values.is_empty() {
        return Err(Error::invalid("sweep", "must not be empty"));
    }
    let pool = ctx.pool()?;
    pool.install(|| {
        values
            .par_iter()
            .enumerate()
            .map(|(i, &v)| measure(&build(v)?, ctx, i as u64).map(|(p, _)| p))
            .collect()
    })
}

fn metadata(ctx: &ExperimentContext, extra: &[(&str, f64)]) -> Result<BTreeMap<String, serde_json::Value>> {
    let mut m = BTreeMap::new();
    m.insert(
        "context".to_string(),
        serde_json::to_value(ctx).map_err(|e| Error::Serialization(e.to_string()))?,
    );
    m.insert("qubit_freq".to_string(), ctx.qubit_freq()?.into());
    for (k, v) in extra {
        m.insert(k.to_string(), (*v).into());
    }
    Ok(m)
}

/// Sweeps the acoustic carrier frequency.
pub fn run_odar(freqs: &[f64], pulse_duration: f64, power: f64, ctx: &ExperimentContext) -> Result<ScanResult> {
    if freqs.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("freqs", "must be sorted"));
    }
    let population = scan(ctx, freqs, |f| odar_sequence(ctx, f, pulse_duration, power))?;
    Ok(ScanResult {
        variable_name: "frequency".into(),
        unit: "Hz".into(),
        values: freqs.to_vec(),
        population,
        metadata: metadata(ctx, &[("pulse_duration", pulse_duration), ("power", power)])?,
    })
}

/// Sweeps the acoustic pulse duration.
pub fn run_rabi(durations: &[f64], power: f64, freq: f64, ctx: &ExperimentContext) -> Result<ScanResult> {
    if durations.iter().any(|d| !(*d >= 0.0)) {
        return Err(Error::invalid("durations", "must be non-negative"));
    }
    let population = scan(ctx, durations, |d| rabi_sequence(ctx, d, power, freq))?;
    Ok(ScanResult {
        variable_name: "pulse duration".into(),
        unit: "s".into(),
        values: durations.to_vec(),
        population,
        metadata: metadata(ctx, &[("power", power), ("freq", freq)])?,
    })
}

/// Sweeps the free-precession delay between two π/2 pulses.
pub fn run_ramsey(delays: &[f64], detuning: f64, power: f64, ctx: &ExperimentContext) -> Result<ScanResult> {
    if delays.iter().any(|d| !(*d >= 0.0)) {
        return Err(Error::invalid("delays", "must be non-negative"));
    }
    let population = scan(ctx, delays, |d| ramsey_sequence(ctx, d, detuning, power))?;
    Ok(ScanResult {
        variable_name: "free precession time".into(),
        unit: "s".into(),
        values: delays.to_vec(),
        population,
        metadata: metadata(
            ctx,
            &[
                ("detuning", detuning),
                ("power", power),
                ("half_pi_duration", half_pi_duration(ctx, power)?),
            ],
        )?,
    })
}
