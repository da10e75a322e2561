//! Pulse sequences and their compilation into piecewise master equations.
//!
//! The compiled model lives on three levels, `{↓, ↑, E}`: the qubit pair plus
//! one optically excited level. Acoustic pulses drive ↓ ↔ ↑ coherently;
//! optical pulses pump incoherently through `E`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dynamics::{ket_bra, DriveTerm, Envelope, Frame, Operator};
use crate::error::{Error, Result};
use crate::saw_device::{self, CalibrationPoint, IdtSpec};
use crate::siv_model::{self, Decoherence, SivModelParams, StrainInput};
use crate::{C64, TWO_PI};

/// Level indices of the compiled model.
pub const DOWN: usize = 0;
pub const UP: usize = 1;
pub const EXCITED: usize = 2;
pub const LEVELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseKind {
    OpticalC1,
    OpticalC3,
    Acoustic,
}

impl PulseKind {
    pub fn is_optical(self) -> bool {
        !matches!(self, PulseKind::Acoustic)
    }

    fn label(self) -> &'static str {
        match self {
            PulseKind::OpticalC1 => "optical_c1",
            PulseKind::OpticalC3 => "optical_c3",
            PulseKind::Acoustic => "acoustic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pulse {
    pub kind: PulseKind,
    /// s.
    pub start: f64,
    /// s.
    pub duration: f64,
    /// Acoustic carrier, Hz. Ignored for optical pulses.
    #[serde(default)]
    pub freq: f64,
    /// Microwave input power (W) for acoustic pulses, pumping rate (1/s) for optical ones.
    pub power_or_rate: f64,
    /// Carrier phase, rad. Acoustic only.
    #[serde(default)]
    pub phase: f64,
}

impl Pulse {
    pub fn optical(kind: PulseKind, start: f64, duration: f64, rate: f64) -> Self {
        Self {
            kind,
            start,
            duration,
            freq: 0.0,
            power_or_rate: rate,
            phase: 0.0,
        }
    }

    pub fn acoustic(start: f64, duration: f64, freq: f64, power: f64, phase: f64) -> Self {
        Self {
            kind: PulseKind::Acoustic,
            start,
            duration,
            freq,
            power_or_rate: power,
            phase,
        }
    }

    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(Error::invalid("duration", "must be positive and finite"));
        }
        if !(self.start >= 0.0) || !self.start.is_finite() {
            return Err(Error::invalid("start", "must be finite and non-negative"));
        }
        if !(self.power_or_rate >= 0.0) || !self.power_or_rate.is_finite() {
            return Err(Error::invalid("power_or_rate", "must be finite and non-negative"));
        }
        if self.kind == PulseKind::Acoustic && (!(self.freq > 0.0) || !self.freq.is_finite()) {
            return Err(Error::invalid("freq", "acoustic carrier must be positive"));
        }
        if !self.phase.is_finite() {
            return Err(Error::invalid("phase", "must be finite"));
        }
        Ok(())
    }

    fn overlaps(&self, other: &Pulse) -> bool {
        self.start < other.end() && other.start < self.end()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSequence {
    pulses: Vec<Pulse>,
    total_duration: f64,
    #[serde(default)]
    delay_corrected: bool,
    /// Permits optical pulses to overlap acoustic ones.
    #[serde(default)]
    allow_overlap: bool,
}

impl PulseSequence {
    /// Sorts `pulses` by start and validates the result.
    pub fn new(mut pulses: Vec<Pulse>, total_duration: f64) -> Result<Self> {
        pulses.sort_by(|a, b| a.start.total_cmp(&b.start));
        let seq = Self {
            pulses,
            total_duration,
            delay_corrected: false,
            allow_overlap: false,
        };
        seq.validate()?;
        Ok(seq)
    }

    /// An empty sequence lasting `total_duration`.
    pub fn empty(total_duration: f64) -> Result<Self> {
        Self::new(Vec::new(), total_duration)
    }

    pub fn with_overlap_allowed(mut self) -> Result<Self> {
        self.allow_overlap = true;
        self.validate()?;
        Ok(self)
    }

    pub fn pulses(&self) -> &[Pulse] {
        &self.pulses
    }

    pub fn total_duration(&self) -> f64 {
        self.total_duration
    }

    pub fn delay_corrected(&self) -> bool {
        self.delay_corrected
    }

    pub fn overlap_allowed(&self) -> bool {
        self.allow_overlap
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.total_duration > 0.0) || !self.total_duration.is_finite() {
            return Err(Error::invalid("total_duration", "must be positive and finite"));
        }
        for p in &self.pulses {
            p.validate()?;
        }
        if self.pulses.windows(2).any(|w| w[1].start < w[0].start) {
            return Err(Error::invalid("pulses", "must be sorted by start"));
        }
        let latest = self.pulses.iter().map(Pulse::end).fold(0.0, f64::max);
        if latest > self.total_duration * (1.0 + 1e-12) {
            return Err(Error::invalid(
                "total_duration",
                format!("{:e} s is shorter than the last pulse end {latest:e} s", self.total_duration),
            ));
        }
        for (i, a) in self.pulses.iter().enumerate() {
            for b in &self.pulses[i + 1..] {
                if !a.overlaps(b) {
                    continue;
                }
                match (a.kind.is_optical(), b.kind.is_optical()) {
                    (true, true) => return Err(Error::UnsupportedOverlap { at: b.start }),
                    (true, false) | (false, true) if !self.allow_overlap => {
                        return Err(Error::UnflaggedOverlap { at: b.start })
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// Time-reversed copy: a pulse on `[s, e)` moves to `[T − e, T − s)`.
    pub fn mirrored(&self) -> Self {
        let t = self.total_duration;
        let mut pulses: Vec<Pulse> = self
            .pulses
            .iter()
            .map(|p| Pulse {
                start: (t - p.end()).max(0.0),
                ..p.clone()
            })
            .collect();
        pulses.sort_by(|a, b| a.start.total_cmp(&b.start));
        Self { pulses, ..self.clone() }
    }
}

/// Shifts every acoustic pulse later by the SAW transit time over `distance`.
///
/// Declared acoustic starts are launch times at the transducer; afterwards
/// they are arrival times at the defect. Optical pulses are not moved.
pub fn correct_timing(seq: &PulseSequence, distance: f64, device: &IdtSpec) -> Result<PulseSequence> {
    if seq.delay_corrected {
        return Err(Error::AlreadyCorrected);
    }
    let delay = saw_device::propagation_delay(distance, device)?;
    let pulses: Vec<Pulse> = seq
        .pulses
        .iter()
        .map(|p| match p.kind {
            PulseKind::Acoustic => Pulse {
                start: p.start + delay,
                ..p.clone()
            },
            _ => p.clone(),
        })
        .collect();
    let latest = pulses.iter().map(Pulse::end).fold(0.0, f64::max);
    let mut out = PulseSequence {
        pulses,
        total_duration: seq.total_duration.max(latest),
        delay_corrected: true,
        allow_overlap: seq.allow_overlap,
    };
    out.pulses.sort_by(|a, b| a.start.total_cmp(&b.start));
    out.validate()?;
    Ok(out)
}

/// Duration of a π rotation at Rabi frequency `omega` (Hz).
pub fn pi_pulse_duration(omega: f64) -> Result<f64> {
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::invalid("omega", "Rabi frequency must be positive"));
    }
    Ok(1.0 / (2.0 * omega))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeMode {
    /// Input rectangle convolved with the transducer impulse response.
    #[default]
    Shaped,
    /// Ideal rectangle at the declared times.
    Rect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameMode {
    /// Frame at the qubit frequency, counter-rotating terms dropped.
    #[default]
    Rwa,
    /// Frame at the qubit frequency, all terms kept.
    Rotating,
    /// No frame.
    Lab,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompileOptions {
    pub envelope: EnvelopeMode,
    pub frame: FrameMode,
    /// Reject acoustic pulses that have not passed through [`correct_timing`].
    pub require_timing_correction: bool,
    pub decoherence: Decoherence,
    /// Width of the photon-integration windows at optical pulse starts, s.
    pub window_width: f64,
    /// Fraction of emitted photons detected.
    pub collection_efficiency: f64,
}

impl Default for CompileOptions {
    fn default() -> Self {
        Self {
            envelope: EnvelopeMode::Shaped,
            frame: FrameMode::Rwa,
            require_timing_correction: true,
            decoherence: Decoherence::default(),
            window_width: 10e-9,
            collection_efficiency: 1.0,
        }
    }
}

/// One constant-structure stretch of the schedule.
#[derive(Debug, Clone)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub label: String,
    /// Static Hamiltonian in the working frame, rad/s.
    pub h0: Operator,
    pub drives: Vec<DriveTerm>,
    pub collapses: Vec<Operator>,
}

impl Segment {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutWindow {
    pub start: f64,
    pub end: f64,
    pub label: String,
}

#[derive(Debug, Clone)]
pub struct CompiledSchedule {
    pub segments: Vec<Segment>,
    pub readout_windows: Vec<ReadoutWindow>,
    pub total_duration: f64,
    /// Qubit splitting of the model, Hz.
    pub qubit_freq: f64,
    /// Working frame; `None` for lab-frame compilation.
    pub frame: Option<Frame>,
    /// Acoustic drives before any frame transformation, rad/s.
    pub lab_drives: Vec<DriveTerm>,
    /// `Γ η |E⟩⟨E|`: its expectation is the detected photon rate, 1/s.
    pub emission_op: Operator,
}

impl CompiledSchedule {
    pub fn window(&self, label: &str) -> Option<&ReadoutWindow> {
        self.readout_windows.iter().find(|w| w.label == label)
    }
}

impl fmt::Display for CompiledSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.segments {
            writeln!(
                f,
                "[{:9.3} ns, {:9.3} ns) {:<22} drives={} collapses={}",
                s.start * 1e9,
                s.end * 1e9,
                s.label,
                s.drives.len(),
                s.collapses.len()
            )?;
        }
        for w in &self.readout_windows {
            writeln!(f, "window {:<8} [{:9.3} ns, {:9.3} ns)", w.label, w.start * 1e9, w.end * 1e9)?;
        }
        Ok(())
    }
}

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Embeds a `{↓, ↑}` operator into the three-level space.
fn embed_qubit(op: &Operator) -> Operator {
    let mut out = Operator::zeros(LEVELS, LEVELS);
    out.view_mut((0, 0), (2, 2)).copy_from(op);
    out
}

fn qubit_freq_of(model: &SivModelParams) -> Result<(f64, siv_model::QubitReduction)> {
    let h = siv_model::build_ground_hamiltonian(model, &StrainInput::default())?;
    let reduction = siv_model::qubit_reduction(&h, model)?;
    Ok((reduction.qubit_freq, reduction))
}

fn supports_overlap(envelope: &Envelope, a: f64, b: f64) -> bool {
    match envelope.support() {
        Some((s, e)) => s < b && e > a,
        None => true,
    }
}

/// Compiles `seq` into a segmented schedule on `{↓, ↑, E}`.
///
/// Acoustic amplitudes come from [`saw_device::power_to_rabi`] evaluated at
/// the qubit transition frequency: the transducer passband is applied once,
/// through the time-domain envelope shaping, rather than a second time as a
/// carrier-dependent scale factor.
pub fn compile(
    seq: &PulseSequence,
    model: &SivModelParams,
    device: &IdtSpec,
    cal: &CalibrationPoint,
    opts: &CompileOptions,
) -> Result<CompiledSchedule> {
    seq.validate()?;
    device.validate()?;
    cal.validate()?;
    if !(opts.window_width > 0.0) {
        return Err(Error::invalid("window_width", "must be positive"));
    }
    if !(0.0..=1.0).contains(&opts.collection_efficiency) {
        return Err(Error::invalid("collection_efficiency", "must lie in [0, 1]"));
    }
    let has_acoustic = seq.pulses.iter().any(|p| p.kind == PulseKind::Acoustic);
    if has_acoustic && opts.require_timing_correction && !seq.delay_corrected {
        return Err(Error::TimingNotCorrected);
    }

    let (qubit_freq, reduction) = qubit_freq_of(model)?;
    let bandwidth = saw_device::amplitude_fwhm(device);

    // Lab-frame drives.
    let sigma_x = ket_bra(LEVELS, DOWN, UP) + ket_bra(LEVELS, UP, DOWN);
    let mut lab_drives = Vec::new();
    for p in seq.pulses.iter().filter(|p| p.kind == PulseKind::Acoustic) {
        if (p.freq - device.center_freq).abs() > 3.0 * bandwidth {
            log::warn!(
                "acoustic carrier {:.4e} Hz is outside 3x the transducer bandwidth; amplitude is near zero",
                p.freq
            );
        }
        let rabi = saw_device::power_to_rabi(p.power_or_rate, qubit_freq, device, cal)?;
        let rect = Envelope::Rect {
            start: p.start,
            end: p.end(),
            amplitude: 1.0,
        };
        let shape = match opts.envelope {
            EnvelopeMode::Rect => rect,
            EnvelopeMode::Shaped => saw_device::pulse_response(device, &rect)?.envelope,
        };
        lab_drives.push(DriveTerm {
            operator: sigma_x.clone(),
            envelope: shape.scaled(TWO_PI * rabi),
            carrier_freq: p.freq,
            carrier_phase: p.phase,
        });
    }

    let frame = match opts.frame {
        FrameMode::Lab => None,
        FrameMode::Rwa | FrameMode::Rotating => Some(Frame::new(qubit_freq, vec![-0.5, 0.5, 0.0])?),
    };
    let mut h_lab = Operator::zeros(LEVELS, LEVELS);
    h_lab[(DOWN, DOWN)] = c(-0.5 * TWO_PI * qubit_freq);
    h_lab[(UP, UP)] = c(0.5 * TWO_PI * qubit_freq);
    let (h0, frame_drives) = match &frame {
        None => (h_lab, lab_drives.clone()),
        Some(fr) => {
            let rwa = opts.frame == FrameMode::Rwa;
            let mut drives = Vec::new();
            for d in &lab_drives {
                drives.extend(fr.transform_drive(d, rwa)?);
            }
            (fr.transform_static(&h_lab)?, drives)
        }
    };

    // Ambient collapse set.
    let mut ambient: Vec<Operator> = siv_model::collapse_operators(model, &reduction, &opts.decoherence)?
        .iter()
        .map(embed_qubit)
        .collect();
    let gamma = model.es_decay_rate;
    let b = model.branching_spin_conserving;
    if gamma > 0.0 {
        if b > 0.0 {
            ambient.push(ket_bra(LEVELS, UP, EXCITED) * c((gamma * b).sqrt()));
        }
        if b < 1.0 {
            ambient.push(ket_bra(LEVELS, DOWN, EXCITED) * c((gamma * (1.0 - b)).sqrt()));
        }
    }

    // Segment boundaries from the declared pulse edges.
    let t_end = seq.total_duration;
    let mut edges = vec![0.0, t_end];
    for p in &seq.pulses {
        edges.push(p.start);
        edges.push(p.end().min(t_end));
    }
    edges.sort_by(f64::total_cmp);
    edges.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * t_end);

    let mut segments = Vec::with_capacity(edges.len());
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mid = 0.5 * (a + b);
        let active: Vec<&Pulse> = seq.pulses.iter().filter(|p| p.start <= mid && mid < p.end()).collect();
        let label = if active.is_empty() {
            "gap".to_string()
        } else {
            active.iter().map(|p| p.kind.label()).collect::<Vec<_>>().join("+")
        };
        let mut collapses = ambient.clone();
        for p in active.iter().filter(|p| p.kind.is_optical() && p.power_or_rate > 0.0) {
            let from = if p.kind == PulseKind::OpticalC1 { DOWN } else { UP };
            collapses.push(ket_bra(LEVELS, EXCITED, from) * c(p.power_or_rate.sqrt()));
        }
        let drives = frame_drives
            .iter()
            .filter(|d| supports_overlap(&d.envelope, a, b))
            .cloned()
            .collect();
        segments.push(Segment {
            start: a,
            end: b,
            label,
            h0: h0.clone(),
            drives,
            collapses,
        });
    }
    if let Some(last) = segments.last_mut() {
        last.end = t_end;
    }

    let mut readout_windows = Vec::new();
    for (i, p) in seq.pulses.iter().filter(|p| p.kind.is_optical()).enumerate() {
        let label = match i {
            0 => "init".to_string(),
            1 => "readout".to_string(),
            n => format!("readout_{n}"),
        };
        readout_windows.push(ReadoutWindow {
            start: p.start,
            end: (p.start + opts.window_width).min(p.end()),
            label,
        });
    }

    let emission_op = ket_bra(LEVELS, EXCITED, EXCITED) * c(gamma * opts.collection_efficiency);
    Ok(CompiledSchedule {
        segments,
        readout_windows,
        total_duration: t_end,
        qubit_freq,
        frame,
        lab_drives,
        emission_op,
    })
}
