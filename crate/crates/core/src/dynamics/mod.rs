//! Lindblad master-equation engine.
//!
//! Operators passed to this module are expressed in angular units (rad/s for
//! Hamiltonians, √(1/s) for collapse operators). The equation of motion is
//!
//! ```text
//! dρ/dt = −i[H(t), ρ] + Σ_k (L_k ρ L_k† − ½{L_k† L_k, ρ})
//! H(t)  = H_0 + Σ_d e_d(t) cos(2π f_d t + φ_d) O_d
//! ```

mod frame;
mod integrator;
mod state;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::{C64, TWO_PI};

pub use frame::{rotating_frame, Frame};
pub use integrator::{evolve, EvolveOptions};
pub use state::DensityMatrix;

/// Dense complex operator.
pub type Operator = DMatrix<C64>;

/// Real time-dependent amplitude with bounded support.
#[derive(Clone)]
pub enum Envelope {
    /// Always on.
    Constant(f64),
    /// `amplitude` on `[start, end)`, zero elsewhere.
    Rect { start: f64, end: f64, amplitude: f64 },
    /// Linear interpolation through `(t, value)` knots, zero outside them.
    Piecewise(Arc<[(f64, f64)]>),
    /// Arbitrary continuous function that vanishes outside `support`.
    Custom {
        func: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        support: (f64, f64),
    },
}

impl fmt::Debug for Envelope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Envelope::Constant(a) => write!(f, "Constant({a})"),
            Envelope::Rect { start, end, amplitude } => {
                write!(f, "Rect {{ start: {start}, end: {end}, amplitude: {amplitude} }}")
            }
            Envelope::Piecewise(k) => write!(f, "Piecewise({} knots)", k.len()),
            Envelope::Custom { support, .. } => write!(f, "Custom {{ support: {support:?} }}"),
        }
    }
}

impl Envelope {
    pub fn piecewise(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::invalid("knots", "need at least two knots"));
        }
        if knots.windows(2).any(|w| !(w[1].0 > w[0].0)) || knots.iter().any(|k| !k.1.is_finite()) {
            return Err(Error::invalid("knots", "times must be strictly increasing and values finite"));
        }
        Ok(Envelope::Piecewise(knots.into()))
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            Envelope::Constant(a) => *a,
            Envelope::Rect { start, end, amplitude } => {
                if t >= *start && t < *end {
                    *amplitude
                } else {
                    0.0
                }
            }
            Envelope::Piecewise(knots) => interpolate(knots, t),
            Envelope::Custom { func, support } => {
                if t < support.0 || t > support.1 {
                    0.0
                } else {
                    func(t)
                }
            }
        }
    }

    /// Value at `t` on the integration piece whose midpoint is `mid`.
    ///
    /// Pieces never straddle a breakpoint, so discontinuous envelopes are
    /// evaluated by their one-sided limit from inside the piece.
    pub(crate) fn value_on_piece(&self, t: f64, mid: f64) -> f64 {
        match self {
            Envelope::Rect { start, end, amplitude } => {
                if mid >= *start && mid < *end {
                    *amplitude
                } else {
                    0.0
                }
            }
            Envelope::Piecewise(knots) => {
                let (first, last) = (knots[0].0, knots[knots.len() - 1].0);
                if mid < first || mid > last {
                    0.0
                } else {
                    interpolate(knots, t.clamp(first, last))
                }
            }
            _ => self.value(t),
        }
    }

    /// Interval outside which the envelope vanishes; `None` when unbounded.
    pub fn support(&self) -> Option<(f64, f64)> {
        match self {
            Envelope::Constant(_) => None,
            Envelope::Rect { start, end, .. } => Some((*start, *end)),
            Envelope::Piecewise(knots) => Some((knots[0].0, knots[knots.len() - 1].0)),
            Envelope::Custom { support, .. } => Some(*support),
        }
    }

    /// Times at which the envelope or its derivative may be discontinuous.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Envelope::Constant(_) => Vec::new(),
            Envelope::Rect { start, end, .. } => vec![*start, *end],
            Envelope::Piecewise(knots) => knots.iter().map(|k| k.0).collect(),
            Envelope::Custom { support, .. } => vec![support.0, support.1],
        }
    }

    /// Largest absolute value.
    pub fn peak(&self) -> f64 {
        match self {
            Envelope::Constant(a) => a.abs(),
            Envelope::Rect { amplitude, .. } => amplitude.abs(),
            Envelope::Piecewise(knots) => knots.iter().fold(0.0, |m, k| m.max(k.1.abs())),
            Envelope::Custom { func, support } => {
                let n = 2000;
                (0..=n)
                    .map(|i| func(support.0 + (support.1 - support.0) * i as f64 / n as f64).abs())
                    .fold(0.0, f64::max)
            }
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        match self {
            Envelope::Constant(a) => Envelope::Constant(a * k),
            Envelope::Rect { start, end, amplitude } => Envelope::Rect {
                start: *start,
                end: *end,
                amplitude: amplitude * k,
            },
            Envelope::Piecewise(knots) => Envelope::Piecewise(knots.iter().map(|&(t, v)| (t, v * k)).collect()),
            Envelope::Custom { func, support } => {
                let func = Arc::clone(func);
                Envelope::Custom {
                    func: Arc::new(move |t| k * func(t)),
                    support: *support,
                }
            }
        }
    }

    pub fn shifted(&self, dt: f64) -> Self {
        match self {
            Envelope::Constant(a) => Envelope::Constant(*a),
            Envelope::Rect { start, end, amplitude } => Envelope::Rect {
                start: start + dt,
                end: end + dt,
                amplitude: *amplitude,
            },
            Envelope::Piecewise(knots) => Envelope::Piecewise(knots.iter().map(|&(t, v)| (t + dt, v)).collect()),
            Envelope::Custom { func, support } => {
                let func = Arc::clone(func);
                Envelope::Custom {
                    func: Arc::new(move |t| func(t - dt)),
                    support: (support.0 + dt, support.1 + dt),
                }
            }
        }
    }
}

fn interpolate(knots: &[(f64, f64)], t: f64) -> f64 {
    let n = knots.len();
    if t < knots[0].0 || t > knots[n - 1].0 {
        return 0.0;
    }
    let i = knots.partition_point(|k| k.0 <= t);
    if i == 0 {
        return knots[0].1;
    }
    if i >= n {
        return knots[n - 1].1;
    }
    let (t0, v0) = knots[i - 1];
    let (t1, v1) = knots[i];
    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
}

/// `envelope(t) · cos(2π carrier_freq t + carrier_phase) · operator`.
#[derive(Debug, Clone)]
pub struct DriveTerm {
    pub operator: Operator,
    /// Amplitude in rad/s.
    pub envelope: Envelope,
    /// Hz.
    pub carrier_freq: f64,
    /// rad.
    pub carrier_phase: f64,
}

impl DriveTerm {
    pub fn coefficient(&self, t: f64) -> f64 {
        self.envelope.value(t) * self.carrier(t)
    }

    pub(crate) fn coefficient_on_piece(&self, t: f64, mid: f64) -> f64 {
        let e = self.envelope.value_on_piece(t, mid);
        if e == 0.0 {
            0.0
        } else {
            e * self.carrier(t)
        }
    }

    fn carrier(&self, t: f64) -> f64 {
        if self.carrier_freq == 0.0 {
            self.carrier_phase.cos()
        } else {
            (TWO_PI * self.carrier_freq * t + self.carrier_phase).cos()
        }
    }
}

/// Time-dependent Hamiltonian plus time-independent collapse operators.
#[derive(Debug, Clone)]
pub struct MasterEquation {
    pub h0: Operator,
    pub drives: Vec<DriveTerm>,
    pub collapses: Vec<Operator>,
}

impl MasterEquation {
    pub fn new(h0: Operator) -> Self {
        Self {
            h0,
            drives: Vec::new(),
            collapses: Vec::new(),
        }
    }

    pub fn with_drive(mut self, drive: DriveTerm) -> Self {
        self.drives.push(drive);
        self
    }

    pub fn with_collapse(mut self, op: Operator) -> Self {
        self.collapses.push(op);
        self
    }

    pub fn dim(&self) -> usize {
        self.h0.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if self.h0.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.h0.ncols(),
            });
        }
        let ops = self.drives.iter().map(|d| &d.operator).chain(&self.collapses);
        for op in ops {
            if op.nrows() != n || op.ncols() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: op.nrows().max(op.ncols()),
                });
            }
        }
        if max_abs(&(&self.h0 - self.h0.adjoint())) > 1e-9 * (1.0 + max_abs(&self.h0)) {
            return Err(Error::invalid("h0", "Hamiltonian is not Hermitian"));
        }
        Ok(())
    }
}

/// Samples produced by [`evolve`].
#[derive(Debug, Clone)]
pub struct EvolutionResult {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub expectations: BTreeMap<String, Vec<f64>>,
}

impl EvolutionResult {
    pub fn final_state(&self) -> Option<&DensityMatrix> {
        self.states.last()
    }
}

/// Probability of transfer between the two levels of a driven qubit.
///
/// `omega` is the Rabi frequency and `delta` the detuning, both in Hz.
pub fn rabi_analytic(omega: f64, delta: f64, t: f64) -> f64 {
    let generalized_sq = omega * omega + delta * delta;
    if generalized_sq == 0.0 {
        return 0.0;
    }
    let s = (std::f64::consts::PI * generalized_sq.sqrt() * t).sin();
    omega * omega / generalized_sq * s * s
}

/// `tr(ρ · op)`; fails if the imaginary part exceeds 1e-10.
pub fn expectation(rho: &DensityMatrix, op: &Operator) -> Result<f64> {
    let m = rho.matrix();
    if op.nrows() != m.nrows() || op.ncols() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            got: op.nrows(),
        });
    }
    let value = trace_of_product(m, op);
    if value.im.abs() > 1e-10 {
        return Err(Error::invalid(
            "op",
            format!("expectation has imaginary part {:e}; operator is not Hermitian", value.im),
        ));
    }
    Ok(value.re)
}

pub(crate) fn trace_of_product(a: &Operator, b: &Operator) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

pub(crate) fn max_abs(m: &Operator) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// `|i⟩⟨j|` in dimension `n`.
pub fn ket_bra(n: usize, i: usize, j: usize) -> Operator {
    let mut m = Operator::zeros(n, n);
    m[(i, j)] = C64::new(1.0, 0.0);
    m
}
