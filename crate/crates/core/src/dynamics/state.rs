use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{max_abs, trace_of_product, Operator};
use crate::error::{Error, Result};
use crate::C64;

const HERMITICITY_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-9;
const POSITIVITY_TOL: f64 = 1e-8;

/// Trace-one, positive, Hermitian state.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(Operator);

impl DensityMatrix {
    pub fn new(m: Operator) -> Result<Self> {
        let rho = Self(m);
        rho.check_invariants()?;
        Ok(rho)
    }

    pub(crate) fn from_raw(m: Operator) -> Self {
        Self(m)
    }

    /// Diagonal (incoherent) state with the given populations.
    pub fn from_populations(populations: &[f64]) -> Result<Self> {
        let diag = DVector::from_iterator(populations.len(), populations.iter().map(|&p| C64::new(p, 0.0)));
        Self::new(DMatrix::from_diagonal(&diag))
    }

    /// `|ψ⟩⟨ψ|` for the normalized `psi`.
    pub fn pure(psi: &DVector<C64>) -> Result<Self> {
        let norm = psi.norm();
        if !(norm > 0.0) {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let v = psi / C64::new(norm, 0.0);
        Self::new(&v * v.adjoint())
    }

    pub fn matrix(&self) -> &Operator {
        &self.0
    }

    pub fn into_matrix(self) -> Operator {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn population(&self, k: usize) -> f64 {
        self.0[(k, k)].re
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn purity(&self) -> f64 {
        trace_of_product(&self.0, &self.0).re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.0 + self.0.adjoint()) * C64::new(0.5, 0.0);
        SymmetricEigen::new(h).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn check_invariants(&self) -> Result<()> {
        let m = &self.0;
        if m.nrows() == 0 || m.nrows() != m.ncols() {
            return Err(Error::InvalidState(format!("shape {}x{}", m.nrows(), m.ncols())));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidState("non-finite entry".into()));
        }
        let asym = max_abs(&(m - m.adjoint()));
        if asym > HERMITICITY_TOL {
            return Err(Error::InvalidState(format!("Hermiticity deviation {asym:e}")));
        }
        let trace = self.trace();
        if (trace - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {trace}")));
        }
        let min = self.min_eigenvalue();
        if min < -POSITIVITY_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }

    /// Unitary conjugation `U ρ U†`.
    pub fn conjugated(&self, u: &Operator) -> Self {
        Self(u * &self.0 * u.adjoint())
    }
}
