//! Dormand–Prince 5(4) integration of the master equation.
//!
//! The time span is cut into pieces at every envelope breakpoint so that no
//! step straddles a discontinuity, and steps are clipped to land exactly on
//! the requested sample times.

use std::collections::BTreeMap;

use super::{max_abs, trace_of_product, DensityMatrix, EvolutionResult, MasterEquation, Operator};
use crate::error::{Error, Result};
use crate::C64;

/// Allowed range for the local error tolerance.
pub const TOL_RANGE: (f64, f64) = (1e-12, 1e-4);

const TRACE_DRIFT_LIMIT: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct EvolveOptions {
    /// Local error target per step (max-abs over matrix entries).
    pub tol: f64,
    /// Named operators whose expectation is recorded at every sample.
    pub expectations: Vec<(String, Operator)>,
    /// Verify [`DensityMatrix`] invariants at every sample.
    pub check_invariants: bool,
    pub max_steps: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            expectations: Vec::new(),
            check_invariants: false,
            max_steps: 5_000_000,
        }
    }
}

impl EvolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }

    pub fn expect(mut self, name: impl Into<String>, op: Operator) -> Self {
        self.expectations.push((name.into(), op));
        self
    }
}

// Dormand–Prince tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct Rhs<'a> {
    eq: &'a MasterEquation,
    collapses_dag: Vec<Operator>,
    anticommutator: Operator,
    minus_i: C64,
}

impl<'a> Rhs<'a> {
    fn new(eq: &'a MasterEquation) -> Self {
        let n = eq.dim();
        let collapses_dag: Vec<Operator> = eq.collapses.iter().map(|l| l.adjoint()).collect();
        let mut anticommutator = Operator::zeros(n, n);
        for (l, ld) in eq.collapses.iter().zip(&collapses_dag) {
            anticommutator += ld * l;
        }
        anticommutator *= C64::new(0.5, 0.0);
        Self {
            eq,
            collapses_dag,
            anticommutator,
            minus_i: C64::new(0.0, -1.0),
        }
    }

    fn hamiltonian(&self, t: f64, mid: f64) -> Operator {
        let mut h = self.eq.h0.clone();
        for d in &self.eq.drives {
            let c = d.coefficient_on_piece(t, mid);
            if c != 0.0 {
                h += &d.operator * C64::new(c, 0.0);
            }
        }
        h
    }

    fn eval(&self, t: f64, mid: f64, rho: &Operator) -> Operator {
        let h = self.hamiltonian(t, mid);
        let mut out = (&h * rho - rho * &h) * self.minus_i;
        if !self.eq.collapses.is_empty() {
            out -= &self.anticommutator * rho + rho * &self.anticommutator;
            for (l, ld) in self.eq.collapses.iter().zip(&self.collapses_dag) {
                out += l * rho * ld;
            }
        }
        out
    }
}

fn hermitize(m: &mut Operator) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)].im = 0.0;
        for j in (i + 1)..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

/// Integrates the master equation from `t_span.0` to `t_span.1`.
///
/// `rho0` is the state at `t_span.0`. States are recorded at every entry of
/// `samples` (strictly increasing, inside the span); with no samples only the
/// final state is recorded.
pub fn evolve(
    rho0: &DensityMatrix,
    eq: &MasterEquation,
    t_span: (f64, f64),
    samples: &[f64],
    opts: &EvolveOptions,
) -> Result<EvolutionResult> {
    let (t0, t1) = t_span;
    if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
        return Err(Error::invalid("t_span", format!("empty or non-finite interval [{t0}, {t1}]")));
    }
    if !(opts.tol >= TOL_RANGE.0 && opts.tol <= TOL_RANGE.1) {
        return Err(Error::invalid("tol", format!("{} outside [1e-12, 1e-4]", opts.tol)));
    }
    eq.validate()?;
    if rho0.dim() != eq.dim() {
        return Err(Error::DimensionMismatch {
            expected: eq.dim(),
            got: rho0.dim(),
        });
    }
    for (_, op) in &opts.expectations {
        if op.nrows() != eq.dim() || op.ncols() != eq.dim() {
            return Err(Error::DimensionMismatch {
                expected: eq.dim(),
                got: op.nrows(),
            });
        }
    }
    if samples.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("samples", "must be strictly increasing"));
    }
    // Rounding slack for sample grids built as `i * dt`.
    let slack = 1e-12 * t0.abs().max(t1.abs()).max(t1 - t0);
    if samples.iter().any(|&s| s < t0 - slack || s > t1 + slack) {
        return Err(Error::invalid("samples", "must lie inside t_span"));
    }
    let targets: Vec<f64> = if samples.is_empty() {
        vec![t1]
    } else {
        samples.iter().map(|s| s.clamp(t0, t1)).collect()
    };

    // Piece boundaries: span ends plus every breakpoint strictly inside.
    let mut bounds = vec![t0, t1];
    for d in &eq.drives {
        bounds.extend(d.envelope.breakpoints().into_iter().filter(|&b| b > t0 && b < t1));
    }
    bounds.sort_by(f64::total_cmp);
    bounds.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * t1.abs().max(1e-30));

    let rhs = Rhs::new(eq);
    let trace0 = rho0.trace();
    let mut result = EvolutionResult {
        times: Vec::with_capacity(targets.len()),
        states: Vec::with_capacity(targets.len()),
        expectations: opts
            .expectations
            .iter()
            .map(|(name, _)| (name.clone(), Vec::with_capacity(targets.len())))
            .collect::<BTreeMap<_, _>>(),
    };

    let mut y = rho0.matrix().clone();
    let mut t = t0;
    let mut next_target = 0;
    let mut h_prev: Option<f64> = None;
    let mut steps = 0usize;

    let record = |t: f64, y: &Operator, result: &mut EvolutionResult| -> Result<()> {
        let state = DensityMatrix::from_raw(y.clone());
        if opts.check_invariants {
            state.check_invariants().map_err(|e| Error::IntegratorFailure {
                time: t,
                reason: e.to_string(),
            })?;
        }
        for (name, op) in &opts.expectations {
            let v = trace_of_product(y, op).re;
            result.expectations.get_mut(name).expect("registered").push(v);
        }
        result.times.push(t);
        result.states.push(state);
        Ok(())
    };

    // A sample at t0 itself is just the initial state.
    while next_target < targets.len() && targets[next_target] <= t0 {
        record(t0, &y, &mut result)?;
        next_target += 1;
    }

    for piece in bounds.windows(2) {
        let (a, b) = (piece[0], piece[1]);
        let mid = 0.5 * (a + b);
        let span = b - a;
        let min_step = 1e-13 * span.max(b.abs());
        let mut k1 = rhs.eval(t, mid, &y);
        let mut h = match h_prev {
            Some(h) => h.min(span),
            None => {
                let rate = max_abs(&k1) / max_abs(&y).max(1e-300);
                if rate > 0.0 {
                    (0.01 / rate).min(span)
                } else {
                    span
                }
            }
        };

        while t < b {
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::IntegratorFailure {
                    time: t,
                    reason: format!("exceeded {} steps", opts.max_steps),
                });
            }
            // Land exactly on the next sample or piece end.
            let mut stop = b;
            if next_target < targets.len() && targets[next_target] < stop {
                stop = targets[next_target];
            }
            let mut landing = false;
            if t + h >= stop || stop - (t + h) < 1e-12 * h {
                h = stop - t;
                landing = true;
            }
            if h < min_step && !landing {
                return Err(Error::Stiffness { time: t, step: h });
            }

            let (y_new, err) = dp_step(&rhs, t, mid, &y, &k1, h);
            let err_ratio = err / opts.tol;
            if err_ratio <= 1.0 {
                t = if landing { stop } else { t + h };
                y = y_new;
                hermitize(&mut y);
                let drift = (y.trace().re - trace0).abs();
                if drift > TRACE_DRIFT_LIMIT {
                    return Err(Error::IntegratorFailure {
                        time: t,
                        reason: format!("trace drifted by {drift:e}"),
                    });
                }
                if y.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                    return Err(Error::IntegratorFailure {
                        time: t,
                        reason: "non-finite state".into(),
                    });
                }
                while next_target < targets.len() && targets[next_target] <= t {
                    record(t, &y, &mut result)?;
                    next_target += 1;
                }
                k1 = rhs.eval(t, mid, &y);
                let factor = if err_ratio == 0.0 {
                    5.0
                } else {
                    (0.9 * err_ratio.powf(-0.2)).clamp(0.2, 5.0)
                };
                // Clipped landing steps say little about the natural step size.
                let natural = if landing { h.max(h_prev.unwrap_or(h)) } else { h };
                h = natural * factor;
                h_prev = Some(h);
            } else {
                if !err_ratio.is_finite() {
                    h *= 0.1;
                } else {
                    h *= (0.9 * err_ratio.powf(-0.2)).clamp(0.1, 0.9);
                }
                if h < min_step {
                    return Err(Error::Stiffness { time: t, step: h });
                }
            }
        }
        t = b;
    }

    Ok(result)
}

fn dp_step(rhs: &Rhs<'_>, t: f64, mid: f64, y: &Operator, k1: &Operator, h: f64) -> (Operator, f64) {
    let mut k: Vec<Operator> = Vec::with_capacity(7);
    k.push(k1.clone());
    for stage in 1..7 {
        let mut yi = y.clone();
        for (j, kj) in k.iter().enumerate() {
            let a = A[stage][j];
            if a != 0.0 {
                yi += kj * C64::new(h * a, 0.0);
            }
        }
        if stage == 6 {
            // Row 7 of the tableau is the fifth-order solution itself.
            let err = error_norm(&k, &rhs.eval(t + C[stage] * h, mid, &yi), h);
            return (yi, err);
        }
        k.push(rhs.eval(t + C[stage] * h, mid, &yi));
    }
    unreachable!()
}

fn error_norm(k: &[Operator], k7: &Operator, h: f64) -> f64 {
    let mut e = k7 * C64::new(E[6], 0.0);
    for (kj, &ej) in k.iter().zip(E.iter()) {
        if ej != 0.0 {
            e += kj * C64::new(ej, 0.0);
        }
    }
    h * max_abs(&e)
}
