//! Rotating-frame transformation `U(t) = exp(i 2π f t G)`, `G = diag(charges)`.
//!
//! In the frame the state is `ρ_r = U ρ U†` and the Hamiltonian becomes
//! `U H U† − 2π f G`. A drive element between levels `j` and `k` picks up the
//! phase `exp(i 2π f (n_j − n_k) t)`; with the rotating-wave approximation
//! only the component co-rotating with the carrier is kept.

use nalgebra::DVector;

use super::{DensityMatrix, DriveTerm, Operator};
use crate::error::{Error, Result};
use crate::{C64, TWO_PI};

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    /// Frame frequency, Hz.
    pub freq: f64,
    /// Diagonal generator `G`, one charge per level.
    pub charges: Vec<f64>,
}

impl Frame {
    pub fn new(freq: f64, charges: Vec<f64>) -> Result<Self> {
        if !(freq > 0.0) || !freq.is_finite() {
            return Err(Error::invalid("frame_freq", "must be positive and finite"));
        }
        Ok(Self { freq, charges })
    }

    fn unitary(&self, t: f64) -> Operator {
        let phases = DVector::from_iterator(
            self.charges.len(),
            self.charges
                .iter()
                .map(|n| C64::from_polar(1.0, TWO_PI * self.freq * n * t)),
        );
        Operator::from_diagonal(&phases)
    }

    fn check_dim(&self, op: &Operator) -> Result<()> {
        if op.nrows() != self.charges.len() || op.ncols() != self.charges.len() {
            return Err(Error::DimensionMismatch {
                expected: self.charges.len(),
                got: op.nrows(),
            });
        }
        Ok(())
    }

    /// Static Hamiltonian in the frame; `h0` must commute with the generator.
    pub fn transform_static(&self, h0: &Operator) -> Result<Operator> {
        self.check_dim(h0)?;
        let n = self.charges.len();
        for j in 0..n {
            for k in 0..n {
                if self.charges[j] != self.charges[k] && h0[(j, k)].norm() != 0.0 {
                    return Err(Error::invalid(
                        "h0",
                        format!("element ({j}, {k}) does not commute with the frame generator"),
                    ));
                }
            }
        }
        let mut out = h0.clone();
        for (j, n) in self.charges.iter().enumerate() {
            out[(j, j)] -= C64::new(TWO_PI * self.freq * n, 0.0);
        }
        Ok(out)
    }

    /// Drive terms equivalent to `drive` in the frame.
    ///
    /// Elements must connect levels whose charges differ by 0 or ±1. Under
    /// `rwa`, only the co-rotating part of the ±1 elements survives; without
    /// it the counter-rotating part and the charge-conserving elements are
    /// kept as separate terms, so the transformation is exact.
    pub fn transform_drive(&self, drive: &DriveTerm, rwa: bool) -> Result<Vec<DriveTerm>> {
        self.check_dim(&drive.operator)?;
        let n = self.charges.len();
        let mut raising = Operator::zeros(n, n);
        let mut diagonal = Operator::zeros(n, n);
        for j in 0..n {
            for k in 0..n {
                let v = drive.operator[(j, k)];
                if v.norm() == 0.0 {
                    continue;
                }
                let dn = self.charges[j] - self.charges[k];
                if dn == 1.0 {
                    raising[(j, k)] = v;
                } else if dn == 0.0 {
                    diagonal[(j, k)] = v;
                } else if dn != -1.0 {
                    return Err(Error::invalid(
                        "drive",
                        format!("element ({j}, {k}) changes the frame charge by {dn}"),
                    ));
                }
            }
        }

        let half = C64::new(0.5, 0.0);
        let in_phase = (&raising + raising.adjoint()) * half;
        // −i(R − R†)/2
        let quadrature = (&raising - raising.adjoint()) * C64::new(0.0, -0.5);
        let quarter_turn = std::f64::consts::FRAC_PI_2;

        let mut out = Vec::new();
        let mut push = |operator: Operator, carrier_freq: f64, carrier_phase: f64| {
            if operator.iter().any(|z| z.norm() != 0.0) {
                out.push(DriveTerm {
                    operator,
                    envelope: drive.envelope.clone(),
                    carrier_freq,
                    carrier_phase,
                });
            }
        };

        // R e^{−iθ}/2 + h.c. = cos θ (R + R†)/2 + sin θ [−i(R − R†)/2],
        // θ = 2π(f_c − f)t + φ; sin θ = cos(θ − π/2).
        let co = drive.carrier_freq - self.freq;
        push(in_phase.clone(), co, drive.carrier_phase);
        push(quadrature.clone(), co, drive.carrier_phase - quarter_turn);
        if !rwa {
            // R e^{iθ'}/2 + h.c. with θ' = 2π(f_c + f)t + φ.
            let counter = drive.carrier_freq + self.freq;
            push(in_phase, counter, drive.carrier_phase);
            push(-quadrature, counter, drive.carrier_phase - quarter_turn);
            push(diagonal, drive.carrier_freq, drive.carrier_phase);
        }
        Ok(out)
    }

    /// Maps a frame state back to the lab frame at time `t`.
    pub fn to_lab(&self, rho: &DensityMatrix, t: f64) -> DensityMatrix {
        rho.conjugated(&self.unitary(t).adjoint())
    }

    /// Maps a lab state into the frame at time `t`.
    pub fn from_lab(&self, rho: &DensityMatrix, t: f64) -> DensityMatrix {
        rho.conjugated(&self.unitary(t))
    }
}

/// Transforms `h0` and `drive` into `frame`.
///
/// Populations are unchanged by the transformation; coherences map back via
/// [`Frame::to_lab`].
pub fn rotating_frame(
    h0: &Operator,
    drive: &DriveTerm,
    frame: &Frame,
    rwa: bool,
) -> Result<(Operator, Vec<DriveTerm>)> {
    Ok((frame.transform_static(h0)?, frame.transform_drive(drive, rwa)?))
}
