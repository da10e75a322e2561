//! Experiment configs, result files and plots.
//!
//! A config is a TOML file with the blocks `model`, `device`, `calibration`,
//! `simulation`, `experiment` and `output`; only `experiment` is required.
//! Outputs are written atomically under the output directory, which the
//! `SIVSAW_OUTPUT_DIR` environment variable overrides.

pub mod plot;

use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{
    self, DetectionHistogram, ExperimentContext, ScanResult, ShotNoise, ThermalStart, Timings,
};
use crate::fitting::{self, FitResult, Lineshape};
use crate::saw_device::{self, CalibrationPoint, IdtSpec, SParameterPoint};
use crate::sequence::{CompileOptions, CompiledSchedule};
use crate::siv_model::{self, SivModelParams};

pub use plot::{Figure, LineStyle, Series};

/// Environment variable that replaces `output.dir`.
pub const OUTPUT_DIR_ENV: &str = "SIVSAW_OUTPUT_DIR";

/// Swept values: an explicit list, `{start, stop, step}` or `{start, stop, num}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sweep {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
    Linspace { start: f64, stop: f64, num: usize },
}

impl Sweep {
    pub fn values(&self) -> std::result::Result<Vec<f64>, String> {
        let v = match *self {
            Sweep::List(ref v) => v.clone(),
            Sweep::Range { start, stop, step } => {
                if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
                    return Err("range needs step > 0 and stop >= start".into());
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
                (0..n).map(|i| start + i as f64 * step).collect()
            }
            Sweep::Linspace { start, stop, num } => match num {
                0 => Vec::new(),
                1 => vec![start],
                _ => (0..num)
                    .map(|i| start + (stop - start) * i as f64 / (num - 1) as f64)
                    .collect(),
            },
        };
        if v.is_empty() {
            return Err("sweep is empty".into());
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err("sweep contains non-finite values".into());
        }
        Ok(v)
    }
}

fn default_qubit_freq() -> Option<f64> {
    Some(experiments::DEFAULT_QUBIT_FREQ)
}

fn default_field_angle_deg() -> f64 {
    siv_model::default_field_angle().to_degrees()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    #[serde(default)]
    pub params: SivModelParams,
    /// Tune the field magnitude to this qubit splitting (Hz). Unset keeps
    /// `params.b_field` as given.
    #[serde(default = "default_qubit_freq")]
    pub qubit_freq: Option<f64>,
    /// Field angle from the SiV axis in the x–z plane, degrees.
    #[serde(default = "default_field_angle_deg")]
    pub field_angle_deg: f64,
}

impl Default for ModelBlock {
    fn default() -> Self {
        Self {
            params: SivModelParams::default(),
            qubit_freq: default_qubit_freq(),
            field_angle_deg: default_field_angle_deg(),
        }
    }
}

impl ModelBlock {
    pub fn resolve(&self) -> Result<SivModelParams> {
        match self.qubit_freq {
            Some(f) => self
                .params
                .tuned(f, &siv_model::field_direction(self.field_angle_deg.to_radians())),
            None => {
                self.params.validate()?;
                Ok(self.params.clone())
            }
        }
    }
}

/// Simulation settings; the defaults are those of [`ExperimentContext`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationBlock {
    pub timings: Timings,
    pub pump_rate: f64,
    pub compile: CompileOptions,
    /// Overrides `compile.decoherence.pure_dephasing_rate` with 1/t2_star.
    pub t2_star: Option<f64>,
    pub thermal_start: ThermalStart,
    pub bin_width: f64,
    pub tol: f64,
    pub shot_noise: ShotNoise,
    pub check_invariants: bool,
}

impl Default for SimulationBlock {
    fn default() -> Self {
        let ctx = ExperimentContext::default();
        Self {
            timings: ctx.timings,
            pump_rate: ctx.pump_rate,
            compile: ctx.compile,
            t2_star: None,
            thermal_start: ctx.thermal_start,
            bin_width: ctx.bin_width,
            tol: ctx.tol,
            shot_noise: ctx.shot_noise,
            check_invariants: ctx.check_invariants,
        }
    }
}

fn d20ns() -> f64 {
    20e-9
}
fn p2mw() -> f64 {
    2e-3
}
fn p4mw() -> f64 {
    4e-3
}
fn d50mhz() -> f64 {
    50e6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExperimentSpec {
    Odar {
        freqs: Sweep,
        #[serde(default = "d20ns")]
        pulse_duration: f64,
        #[serde(default = "p2mw")]
        power: f64,
        #[serde(default)]
        lineshape: Lineshape,
    },
    Rabi {
        durations: Sweep,
        #[serde(default = "p4mw")]
        power: f64,
        /// Carrier, Hz; defaults to the qubit frequency.
        #[serde(default)]
        freq: Option<f64>,
        /// Extra powers for the Rabi-frequency-vs-√power fit.
        #[serde(default)]
        scaling_powers: Vec<f64>,
    },
    Ramsey {
        delays: Sweep,
        #[serde(default = "d50mhz")]
        detuning: f64,
        #[serde(default = "p4mw")]
        power: f64,
    },
    Histogram {
        #[serde(default)]
        freq: Option<f64>,
        #[serde(default = "d20ns")]
        pulse_duration: f64,
        #[serde(default = "p2mw")]
        power: f64,
    },
    Sparams {
        freqs: Sweep,
        /// When set, `device.finger_pairs` is derived from this bandwidth.
        #[serde(default)]
        target_fwhm: Option<f64>,
    },
}

impl ExperimentSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentSpec::Odar { .. } => "odar",
            ExperimentSpec::Rabi { .. } => "rabi",
            ExperimentSpec::Ramsey { .. } => "ramsey",
            ExperimentSpec::Histogram { .. } => "histogram",
            ExperimentSpec::Sparams { .. } => "sparams",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: PathBuf,
    /// File stem; defaults to the config file stem.
    pub stem: Option<String>,
    pub plot: bool,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("output"),
            stem: None,
            plot: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Sweep parallelism; 0 uses every available core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub model: ModelBlock,
    #[serde(default)]
    pub device: IdtSpec,
    #[serde(default)]
    pub calibration: CalibrationPoint,
    #[serde(default)]
    pub simulation: SimulationBlock,
    pub experiment: ExperimentSpec,
    #[serde(default)]
    pub output: OutputBlock,
}

impl ExperimentConfig {
    /// Builds the experiment context, tuning the field if requested.
    pub fn context(&self) -> Result<ExperimentContext> {
        let s = &self.simulation;
        let mut compile = s.compile.clone();
        if let Some(t2) = s.t2_star {
            if !(t2 > 0.0) {
                return Err(Error::invalid("t2_star", "must be positive"));
            }
            compile.decoherence.pure_dephasing_rate = if t2.is_finite() { 1.0 / t2 } else { 0.0 };
        }
        let ctx = ExperimentContext {
            model: self.model.resolve()?,
            device: self.device.clone(),
            calibration: self.calibration.clone(),
            timings: s.timings.clone(),
            pump_rate: s.pump_rate,
            compile,
            thermal_start: s.thermal_start,
            bin_width: s.bin_width,
            tol: s.tol,
            workers: self.workers,
            shot_noise: s.shot_noise.clone(),
            seed: self.seed,
            check_invariants: s.check_invariants,
        };
        ctx.validate()?;
        Ok(ctx)
    }
}

/// Parses a config from TOML text; errors carry the path of the offending field.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let de = toml::Deserializer::parse(text).map_err(|e| Error::Config {
        path: String::new(),
        message: e.to_string(),
    })?;
    serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
        path: e.path().to_string(),
        message: e.inner().to_string().trim().to_string(),
    })
}

/// Problems found in a config without running it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }
}

fn field_error(block: &str, e: &Error) -> String {
    match e {
        Error::InvalidParameter { name, reason } => format!("{block}.{name}: {reason}"),
        Error::Config { path, message } if path.is_empty() => message.clone(),
        Error::Config { path, message } => format!("{path}: {message}"),
        other => format!("{block}: {other}"),
    }
}

/// Schema and physics-sanity checks of a parsed config.
pub fn check_config(cfg: &ExperimentConfig) -> ValidationReport {
    let mut r = ValidationReport::default();
    if let Err(e) = cfg.device.validate() {
        r.errors.push(field_error("device", &e));
    }
    if let Err(e) = cfg.calibration.validate() {
        r.errors.push(field_error("calibration", &e));
    }
    let ctx = cfg.context();
    if let Err(e) = &ctx {
        r.errors.push(field_error("simulation", e));
    }

    let non_negative = |r: &mut ValidationReport, name: &str, v: f64| {
        if !(v >= 0.0) || !v.is_finite() {
            r.errors.push(format!("experiment.{name}: must be finite and non-negative (got {v})"));
        }
    };
    let positive = |r: &mut ValidationReport, name: &str, v: f64| {
        if !(v > 0.0) || !v.is_finite() {
            r.errors.push(format!("experiment.{name}: must be positive (got {v})"));
        }
    };
    let sweep = |r: &mut ValidationReport, name: &str, s: &Sweep| -> Vec<f64> {
        match s.values() {
            Ok(v) => v,
            Err(m) => {
                r.errors.push(format!("experiment.{name}: {m}"));
                Vec::new()
            }
        }
    };
    let bandwidth = saw_device::amplitude_fwhm(&cfg.device);
    let band_check = |r: &mut ValidationReport, name: &str, f: f64| {
        if (f - cfg.device.center_freq).abs() > 3.0 * bandwidth {
            r.warnings.push(format!(
                "experiment.{name}: acoustic frequency {f:.4e} Hz lies outside 3x the transducer bandwidth around {:.4e} Hz",
                cfg.device.center_freq
            ));
        }
    };
    let qubit = ctx.as_ref().ok().and_then(|c| c.qubit_freq().ok());

    match &cfg.experiment {
        ExperimentSpec::Odar {
            freqs,
            pulse_duration,
            power,
            ..
        } => {
            let f = sweep(&mut r, "freqs", freqs);
            if f.windows(2).any(|w| w[1] < w[0]) {
                r.errors.push("experiment.freqs: must be sorted".into());
            }
            if f.len() < 10 && !f.is_empty() {
                r.warnings.push("experiment.freqs: fewer than 10 points; the lineshape fit will be skipped".into());
            }
            for (name, v) in [("freqs", f.first()), ("freqs", f.last())] {
                if let Some(&v) = v {
                    band_check(&mut r, name, v);
                }
            }
            positive(&mut r, "pulse_duration", *pulse_duration);
            non_negative(&mut r, "power", *power);
        }
        ExperimentSpec::Rabi {
            durations,
            power,
            freq,
            scaling_powers,
        } => {
            let d = sweep(&mut r, "durations", durations);
            if d.iter().any(|v| *v < 0.0) {
                r.errors.push("experiment.durations: must be non-negative".into());
            }
            non_negative(&mut r, "power", *power);
            for p in scaling_powers {
                non_negative(&mut r, "scaling_powers", *p);
            }
            if let Some(f) = freq.or(qubit) {
                positive(&mut r, "freq", f);
                band_check(&mut r, "freq", f);
            }
        }
        ExperimentSpec::Ramsey { delays, detuning, power } => {
            let d = sweep(&mut r, "delays", delays);
            if d.iter().any(|v| *v < 0.0) {
                r.errors.push("experiment.delays: must be non-negative".into());
            }
            positive(&mut r, "power", *power);
            if !detuning.is_finite() {
                r.errors.push("experiment.detuning: must be finite".into());
            } else if let Some(q) = qubit {
                band_check(&mut r, "detuning", q + detuning);
            }
        }
        ExperimentSpec::Histogram {
            freq,
            pulse_duration,
            power,
        } => {
            positive(&mut r, "pulse_duration", *pulse_duration);
            non_negative(&mut r, "power", *power);
            if let Some(f) = freq.or(qubit) {
                positive(&mut r, "freq", f);
                band_check(&mut r, "freq", f);
            }
        }
        ExperimentSpec::Sparams { freqs, target_fwhm } => {
            let f = sweep(&mut r, "freqs", freqs);
            if f.iter().any(|v| *v <= 0.0) {
                r.errors.push("experiment.freqs: must be positive".into());
            }
            if let Some(t) = target_fwhm {
                if !(*t > 0.0 && *t < cfg.device.center_freq) {
                    r.errors.push("experiment.target_fwhm: must lie in (0, device.center_freq)".into());
                }
            }
        }
    }
    r
}

/// Reads and checks a config without running it. Never fails; problems
/// are listed in the report.
pub fn validate(config_path: &Path) -> ValidationReport {
    match std::fs::read_to_string(config_path) {
        Err(e) => ValidationReport {
            errors: vec![format!("{}: {e}", config_path.display())],
            warnings: Vec::new(),
        },
        Ok(text) => match parse_config(&text) {
            Err(e) => ValidationReport {
                errors: vec![field_error("config", &e)],
                warnings: Vec::new(),
            },
            Ok(cfg) => check_config(&cfg),
        },
    }
}

/// Reads, parses and checks a config. Every failure is an [`Error::Config`].
pub fn load_config(config_path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(config_path).map_err(|e| Error::Config {
        path: config_path.display().to_string(),
        message: e.to_string(),
    })?;
    let cfg = parse_config(&text)?;
    let report = check_config(&cfg);
    for w in &report.warnings {
        log::warn!("{w}");
    }
    if let Some(first) = report.errors.first() {
        let (path, message) = first.split_once(": ").unwrap_or(("", first));
        return Err(Error::Config {
            path: path.to_string(),
            message: message.to_string(),
        });
    }
    Ok(cfg)
}

/// Writes `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Serialization(e.to_string());
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::Serialization(e.to_string()))
}

/// CSV of a scan: `<variable> (<unit>),normalized population (1)`.
pub fn scan_csv(scan: &ScanResult) -> Result<Vec<u8>> {
    scan.validate()?;
    let x = format!("{} ({})", scan.variable_name, scan.unit);
    csv_bytes(
        &[&x, "normalized population (1)"],
        scan.values.iter().zip(&scan.population).map(|(a, b)| vec![*a, *b]),
    )
}

/// CSV of a histogram: bin start time and rate (or counts).
pub fn histogram_csv(h: &DetectionHistogram) -> Result<Vec<u8>> {
    let y = if h.sampled { "counts (1)" } else { "detected rate (1/s)" };
    csv_bytes(
        &["time (s)", y],
        h.bins
            .iter()
            .enumerate()
            .map(|(k, v)| vec![h.t0 + k as f64 * h.bin_width, *v]),
    )
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value).map_err(|e| Error::Serialization(e.to_string()))?;
    v.push(b'\n');
    Ok(v)
}

/// Something [`emit_plot_data`] can draw.
#[derive(Debug, Clone, Copy)]
pub enum PlotData<'a> {
    Scan(&'a ScanResult),
    Histogram(&'a DetectionHistogram),
}

/// Writes an SVG plot at `path` and the plotted data as CSV next to it.
pub fn emit_plot_data(data: PlotData<'_>, path: &Path) -> Result<()> {
    let (figure, csv) = match data {
        PlotData::Scan(scan) => (
            Figure {
                x_label: scan.variable_name.clone(),
                x_unit: scan.unit.clone(),
                y_label: "normalized population".into(),
                style: LineStyle::Straight,
                series: vec![Series {
                    label: scan.variable_name.clone(),
                    x: scan.values.clone(),
                    y: scan.population.clone(),
                }],
            },
            scan_csv(scan)?,
        ),
        PlotData::Histogram(h) => (
            Figure {
                x_label: "time".into(),
                x_unit: "s".into(),
                y_label: if h.sampled { "counts" } else { "detected rate (1/s)" }.into(),
                style: LineStyle::Stepped,
                series: vec![Series {
                    label: "histogram".into(),
                    x: (0..h.bins.len()).map(|k| h.t0 + k as f64 * h.bin_width).collect(),
                    y: h.bins.clone(),
                }],
            },
            histogram_csv(h)?,
        ),
    };
    write_atomic(path, plot::render_svg(&figure).as_bytes())?;
    write_atomic(&path.with_extension("csv"), &csv)
}

/// Rabi frequencies versus √power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerScaling {
    pub powers: Vec<f64>,
    pub rabi_freqs: Vec<f64>,
    pub rabi_freq_std_errors: Vec<f64>,
    /// Linear fit of Rabi frequency against √power.
    pub fit: FitResult,
}

/// Contents of a result JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResultFile {
    Odar {
        scan: ScanResult,
        fit: Option<FitResult>,
    },
    Rabi {
        scan: ScanResult,
        fit: Option<FitResult>,
        scaling: Option<PowerScaling>,
    },
    Ramsey {
        scan: ScanResult,
        fit: Option<FitResult>,
    },
    Histogram {
        histogram: DetectionHistogram,
        normalized_population: f64,
    },
    Sparams {
        finger_pairs: u32,
        amplitude_fwhm: f64,
        impulse_duration: f64,
        power_bounds: (f64, f64),
        points: Vec<SParameterPoint>,
    },
}

/// Paths written by a run and its one-line summary.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: String,
    pub files: Vec<PathBuf>,
    pub result: ResultFile,
}

/// Output directory after the environment override.
pub fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(d) if !d.is_empty() => PathBuf::from(d),
        _ => cfg.output.dir.clone(),
    }
}

fn fit_or_warn(name: &str, r: Result<FitResult>) -> Option<FitResult> {
    match r {
        Ok(f) => Some(f),
        Err(e) => {
            log::warn!("{name} fit failed: {e}");
            None
        }
    }
}

/// Runs the experiment described by `cfg` and computes its result.
pub fn execute(cfg: &ExperimentConfig) -> Result<(ResultFile, String)> {
    let ctx = cfg.context()?;
    let sweep = |s: &Sweep| {
        s.values().map_err(|m| Error::Config {
            path: "experiment".into(),
            message: m,
        })
    };
    Ok(match &cfg.experiment {
        ExperimentSpec::Odar {
            freqs,
            pulse_duration,
            power,
            lineshape,
        } => {
            let scan = experiments::run_odar(&sweep(freqs)?, *pulse_duration, *power, &ctx)?;
            let fit = fit_or_warn("lineshape", fitting::fit_lineshape(&scan.values, &scan.population, *lineshape));
            let summary = match &fit {
                Some(f) => format!(
                    "odar: center {:.6e} Hz, fwhm {:.4e} Hz ({} points)",
                    f.get("center"),
                    f.get("fwhm"),
                    scan.values.len()
                ),
                None => format!("odar: {} points, no lineshape fit", scan.values.len()),
            };
            (ResultFile::Odar { scan, fit }, summary)
        }
        ExperimentSpec::Rabi {
            durations,
            power,
            freq,
            scaling_powers,
        } => {
            let d = sweep(durations)?;
            let f = match freq {
                Some(f) => *f,
                None => ctx.qubit_freq()?,
            };
            let scan = experiments::run_rabi(&d, *power, f, &ctx)?;
            let fit = fit_or_warn("damped sinusoid", fitting::fit_damped_sinusoid(&scan.values, &scan.population));
            let scaling = if scaling_powers.is_empty() {
                None
            } else {
                let mut rabi_freqs = Vec::new();
                let mut errs = Vec::new();
                for &p in scaling_powers {
                    let s = experiments::run_rabi(&d, p, f, &ctx)?;
                    let fr = fitting::fit_damped_sinusoid(&s.values, &s.population)?;
                    rabi_freqs.push(fr.get("freq"));
                    errs.push(fr.std_error("freq"));
                }
                let roots: Vec<f64> = scaling_powers.iter().map(|p| p.sqrt()).collect();
                let fit = fitting::fit_linear(&roots, &rabi_freqs)?;
                Some(PowerScaling {
                    powers: scaling_powers.clone(),
                    rabi_freqs,
                    rabi_freq_std_errors: errs,
                    fit,
                })
            };
            let mut summary = match &fit {
                Some(fr) => format!("rabi: frequency {:.6e} Hz at {:.3e} W", fr.get("freq"), power),
                None => "rabi: no oscillation fit".to_string(),
            };
            if let Some(s) = &scaling {
                summary.push_str(&format!(
                    "; sqrt-power fit r^2 {:.6}, intercept {:.3e} ± {:.3e} Hz",
                    s.fit.get("r_squared"),
                    s.fit.get("intercept"),
                    s.fit.std_error("intercept")
                ));
            }
            (ResultFile::Rabi { scan, fit, scaling }, summary)
        }
        ExperimentSpec::Ramsey { delays, detuning, power } => {
            let scan = experiments::run_ramsey(&sweep(delays)?, *detuning, *power, &ctx)?;
            let fit = fit_or_warn("ramsey", fitting::fit_ramsey(&scan.values, &scan.population));
            let summary = match &fit {
                Some(f) => format!(
                    "ramsey: fringe {:.5e} Hz, t2_star {:.4e} s",
                    f.get("fringe_freq"),
                    f.get("t2_star")
                ),
                None => "ramsey: no fringe fit".to_string(),
            };
            (ResultFile::Ramsey { scan, fit }, summary)
        }
        ExperimentSpec::Histogram {
            freq,
            pulse_duration,
            power,
        } => {
            let f = match freq {
                Some(f) => *f,
                None => ctx.qubit_freq()?,
            };
            let seq = experiments::odar_sequence(&ctx, f, *pulse_duration, *power)?;
            let (p, histogram) = experiments::measure(&seq, &ctx, 0)?;
            let summary = format!(
                "histogram: {} bins of {:.3e} s, normalized population {:.6}",
                histogram.bins.len(),
                histogram.bin_width,
                p
            );
            (
                ResultFile::Histogram {
                    histogram,
                    normalized_population: p,
                },
                summary,
            )
        }
        ExperimentSpec::Sparams { freqs, target_fwhm } => {
            let mut device = cfg.device.clone();
            if let Some(t) = target_fwhm {
                device.finger_pairs = saw_device::derive_finger_pairs(&device, *t)?;
            }
            let points = saw_device::s_parameter_sweep(&device, &sweep(freqs)?);
            let power_bounds = saw_device::onchip_power_bounds(
                cfg.calibration.input_power,
                device.insertion_s11_db,
                device.transmission_s21_db,
            )?;
            let fwhm = saw_device::amplitude_fwhm(&device);
            let summary = format!(
                "sparams: N = {}, amplitude fwhm {:.4e} Hz, on-chip power {:.4e}..{:.4e} W",
                device.finger_pairs, fwhm, power_bounds.0, power_bounds.1
            );
            (
                ResultFile::Sparams {
                    finger_pairs: device.finger_pairs,
                    amplitude_fwhm: fwhm,
                    impulse_duration: device.impulse_duration(),
                    power_bounds,
                    points,
                },
                summary,
            )
        }
    })
}

/// Writes `result` under `dir` with file stem `stem`; returns the paths.
pub fn write_outputs(result: &ResultFile, dir: &Path, stem: &str, plot: bool) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let json = dir.join(format!("{stem}.json"));
    write_atomic(&json, &json_bytes(result)?)?;
    files.push(json);
    let csv = dir.join(format!("{stem}.csv"));
    let svg = dir.join(format!("{stem}.svg"));
    match result {
        ResultFile::Odar { scan, .. } | ResultFile::Rabi { scan, .. } | ResultFile::Ramsey { scan, .. } => {
            if plot {
                emit_plot_data(PlotData::Scan(scan), &svg)?;
                files.push(svg);
            } else {
                write_atomic(&csv, &scan_csv(scan)?)?;
            }
            files.push(csv);
            if let ResultFile::Rabi { scaling: Some(s), .. } = result {
                let path = dir.join(format!("{stem}_scaling.csv"));
                let bytes = csv_bytes(
                    &["power (W)", "sqrt power (W^0.5)", "rabi frequency (Hz)", "rabi frequency std error (Hz)"],
                    s.powers
                        .iter()
                        .zip(&s.rabi_freqs)
                        .zip(&s.rabi_freq_std_errors)
                        .map(|((p, f), e)| vec![*p, p.sqrt(), *f, *e]),
                )?;
                write_atomic(&path, &bytes)?;
                files.push(path);
            }
        }
        ResultFile::Histogram { histogram, .. } => {
            if plot {
                emit_plot_data(PlotData::Histogram(histogram), &svg)?;
                files.push(svg);
            } else {
                write_atomic(&csv, &histogram_csv(histogram)?)?;
            }
            files.push(csv);
        }
        ResultFile::Sparams { points, .. } => {
            for (name, pick) in [
                ("s11", (|p: &SParameterPoint| p.s11_db) as fn(&SParameterPoint) -> f64),
                ("s21", |p: &SParameterPoint| p.s21_db),
            ] {
                let path = dir.join(format!("{stem}_{name}.csv"));
                let mut buf = Vec::new();
                saw_device::write_sparam_csv(&mut buf, name, points, pick)?;
                write_atomic(&path, &buf)?;
                files.push(path);
            }
            if plot {
                let figure = Figure {
                    x_label: "frequency".into(),
                    x_unit: "Hz".into(),
                    y_label: "power ratio (dB)".into(),
                    style: LineStyle::Straight,
                    series: vec![
                        Series {
                            label: "|S11|^2".into(),
                            x: points.iter().map(|p| p.freq).collect(),
                            y: points.iter().map(|p| p.s11_db).collect(),
                        },
                        Series {
                            label: "|S21|^2".into(),
                            x: points.iter().map(|p| p.freq).collect(),
                            y: points.iter().map(|p| p.s21_db).collect(),
                        },
                    ],
                };
                write_atomic(&svg, plot::render_svg(&figure).as_bytes())?;
                files.push(svg);
            }
        }
    }
    Ok(files)
}

/// Runs an already loaded config and writes its outputs. `config_path`
/// supplies the default file stem.
pub fn run_loaded(cfg: &ExperimentConfig, config_path: &Path) -> Result<RunOutcome> {
    let (result, summary) = execute(cfg)?;
    let stem = cfg.output.stem.clone().unwrap_or_else(|| {
        config_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| cfg.experiment.name().to_string())
    });
    let files = write_outputs(&result, &output_dir(cfg), &stem, cfg.output.plot)?;
    Ok(RunOutcome { summary, files, result })
}

/// Loads, runs and writes the config at `config_path`.
pub fn run_config(config_path: &Path) -> Result<RunOutcome> {
    run_loaded(&load_config(config_path)?, config_path)
}

/// Compiled schedule of the first sweep point, for inspection. `None` for
/// experiments without a pulse sequence.
pub fn preview_schedule(cfg: &ExperimentConfig) -> Result<Option<CompiledSchedule>> {
    let ctx = cfg.context()?;
    let first = |s: &Sweep| {
        s.values().map(|v| v[0]).map_err(|m| Error::Config {
            path: "experiment".into(),
            message: m,
        })
    };
    let seq = match &cfg.experiment {
        ExperimentSpec::Odar {
            freqs,
            pulse_duration,
            power,
            ..
        } => experiments::odar_sequence(&ctx, first(freqs)?, *pulse_duration, *power)?,
        ExperimentSpec::Rabi {
            durations, power, freq, ..
        } => {
            let f = match freq {
                Some(f) => *f,
                None => ctx.qubit_freq()?,
            };
            experiments::rabi_sequence(&ctx, first(durations)?, *power, f)?
        }
        ExperimentSpec::Ramsey { delays, detuning, power } => {
            experiments::ramsey_sequence(&ctx, first(delays)?, *detuning, *power)?
        }
        ExperimentSpec::Histogram {
            freq,
            pulse_duration,
            power,
        } => {
            let f = match freq {
                Some(f) => *f,
                None => ctx.qubit_freq()?,
            };
            experiments::odar_sequence(&ctx, f, *pulse_duration, *power)?
        }
        ExperimentSpec::Sparams { .. } => return Ok(None),
    };
    experiments::compile_in(&seq, &ctx).map(Some)
}

/// Reads a result JSON file written by [`run_config`].
pub fn read_result(path: &Path) -> Result<ResultFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))
}

/// Plots a result file to `out` (SVG plus sidecar CSV).
pub fn plot_result(result: &ResultFile, out: &Path) -> Result<()> {
    match result {
        ResultFile::Odar { scan, .. } | ResultFile::Rabi { scan, .. } | ResultFile::Ramsey { scan, .. } => {
            emit_plot_data(PlotData::Scan(scan), out)
        }
        ResultFile::Histogram { histogram, .. } => emit_plot_data(PlotData::Histogram(histogram), out),
        ResultFile::Sparams { .. } => {
            let dir = out.parent().unwrap_or(Path::new("."));
            let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            write_outputs(result, dir, &stem, true).map(|_| ())
        }
    }
}
