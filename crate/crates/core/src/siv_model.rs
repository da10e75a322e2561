//! Ground-state model of the negatively charged silicon-vacancy center.
//!
//! The ground manifold is the product of the orbital doublet {e_g+, e_g−} and
//! the electron spin {↑, ↓}. All matrices in this module use the basis
//!
//! ```text
//! index 0: |e_g+ ↑⟩    index 1: |e_g+ ↓⟩    index 2: |e_g− ↑⟩    index 3: |e_g− ↓⟩
//! ```
//!
//! i.e. `index = 2 * orbital + spin` with orbital 0 = e_g+ (L_z = +1) and
//! spin 0 = ↑ (σ_z = +1). The Hamiltonian is assembled as
//!
//! ```text
//! H = (λ/2) L_z σ_z                          spin-orbit
//!   + (γ_s/2) B · σ                          spin Zeeman
//!   + q (γ_s/2) B_z L_z                      quenched orbital Zeeman (γ_L = γ_s/2)
//!   + f_A1g ε_A1g 1                          A1g strain: global shift
//!   + d [(ε_x + iε_y) |e+⟩⟨e−| + h.c.] ⊗ 1    Eg strain: orbital mixing
//! ```
//!
//! and is expressed in Hz. With this sign of the spin-orbit term the lower
//! branch holds |e_g+ ↓⟩ and |e_g− ↑⟩, which form the spin qubit.

use nalgebra::{DMatrix, Matrix4, SymmetricEigen, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// Planck constant over Boltzmann constant, K/Hz.
const H_OVER_KB: f64 = 6.626_070_15e-34 / 1.380_649e-23;

/// Largest field considered by [`tune_field_to_qubit_freq`].
pub const MAX_FIELD_T: f64 = 10.0;

/// Minimum splitting for the lowest pair to count as a qubit.
pub const DEGENERACY_THRESHOLD_HZ: f64 = 1e3;

const MIN_SPIN_PURITY: f64 = 0.501;

/// Optical fine-structure transitions of the C line.
///
/// Only C1 (spin-flipping pump) and C3 (spin-conserving) enter the pumping
/// model; C2 and C4 are kept as labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpticalTransition {
    C1,
    C2,
    C3,
    C4,
}

impl OpticalTransition {
    pub fn is_spin_conserving(self) -> bool {
        matches!(self, OpticalTransition::C2 | OpticalTransition::C3)
    }
}

/// Physical constants of the defect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SivModelParams {
    /// Ground-state spin-orbit splitting, Hz.
    pub lambda_so: f64,
    /// Eg orbital strain susceptibility, Hz/strain.
    pub d_orbital: f64,
    /// A1g common-mode strain susceptibility, Hz/strain.
    pub f_a1g: f64,
    /// Spin gyromagnetic ratio, Hz/T.
    pub gamma_s: f64,
    /// Orbital g-factor quenching.
    pub q_orbital: f64,
    /// Magnetic field in the SiV frame (z along the symmetry axis), T.
    pub b_field: [f64; 3],
    /// Excited-state optical decay rate, 1/s.
    pub es_decay_rate: f64,
    /// Probability that an optical decay conserves spin.
    pub branching_spin_conserving: f64,
    /// Bath temperature, K.
    pub temperature: f64,
    /// Phonon-limited orbital relaxation time, s.
    pub orbital_t1: f64,
}

impl Default for SivModelParams {
    fn default() -> Self {
        Self {
            lambda_so: 50e9,
            d_orbital: 1e15,
            f_a1g: 1e15,
            gamma_s: 27.992e9,
            q_orbital: 0.1,
            b_field: [0.0; 3],
            es_decay_rate: 1.0 / 1.7e-9,
            branching_spin_conserving: 0.9,
            temperature: 5.8,
            orbital_t1: 10e-9,
        }
    }
}

impl SivModelParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("lambda_so", self.lambda_so),
            ("d_orbital", self.d_orbital),
            ("f_a1g", self.f_a1g),
            ("gamma_s", self.gamma_s),
            ("q_orbital", self.q_orbital),
            ("b_field", self.b_field[0]),
            ("b_field", self.b_field[1]),
            ("b_field", self.b_field[2]),
            ("es_decay_rate", self.es_decay_rate),
            ("branching_spin_conserving", self.branching_spin_conserving),
            ("temperature", self.temperature),
            ("orbital_t1", self.orbital_t1),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::invalid(name, format!("non-finite value {v}")));
            }
        }
        if self.lambda_so <= 0.0 {
            return Err(Error::invalid("lambda_so", "must be positive"));
        }
        if self.d_orbital <= 0.0 {
            return Err(Error::invalid("d_orbital", "must be positive"));
        }
        if self.temperature <= 0.0 {
            return Err(Error::invalid("temperature", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.branching_spin_conserving) {
            return Err(Error::invalid("branching_spin_conserving", "must lie in [0, 1]"));
        }
        if self.es_decay_rate < 0.0 {
            return Err(Error::invalid("es_decay_rate", "must be non-negative"));
        }
        if self.orbital_t1 <= 0.0 {
            return Err(Error::invalid("orbital_t1", "must be positive"));
        }
        Ok(())
    }

    pub fn field(&self) -> Vector3<f64> {
        Vector3::from(self.b_field)
    }

    /// Copy of `self` with the field set to `magnitude` along `direction`.
    pub fn with_field(&self, direction: &Vector3<f64>, magnitude: f64) -> Self {
        let b = direction.normalize() * magnitude;
        Self {
            b_field: [b.x, b.y, b.z],
            ..self.clone()
        }
    }

    /// Copy of `self` with the field tuned so the qubit splitting equals `target`.
    pub fn tuned(&self, target: f64, direction: &Vector3<f64>) -> Result<Self> {
        let magnitude = tune_field_to_qubit_freq(self, target, direction)?;
        Ok(self.with_field(direction, magnitude))
    }
}

/// Field direction at `angle` (radians) from the SiV axis, in the x–z plane.
pub fn field_direction(angle: f64) -> Vector3<f64> {
    Vector3::new(angle.sin(), 0.0, angle.cos())
}

/// Angle between a ⟨111⟩ SiV axis and the [100] surface normal.
pub fn default_field_angle() -> f64 {
    (1.0 / 3f64.sqrt()).acos()
}

/// Strain components projected onto the D3d irreducible representations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StrainInput {
    pub eps_a1g: f64,
    pub eps_egx: f64,
    pub eps_egy: f64,
}

impl StrainInput {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eps_a1g", self.eps_a1g),
            ("eps_egx", self.eps_egx),
            ("eps_egy", self.eps_egy),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(name, format!("non-finite value {v}")));
            }
            if v.abs() > 1e-2 {
                log::warn!("{name} = {v:e} is beyond the linear-response regime");
            }
        }
        Ok(())
    }
}

/// Effective two-level description of the lowest pair of eigenstates.
#[derive(Debug, Clone)]
pub struct QubitReduction {
    /// Splitting of the lowest pair, Hz.
    pub qubit_freq: f64,
    /// |⟨↑|H_Eg(ε_x = 1)|↓⟩|, Hz per unit strain.
    pub spin_strain_rate: f64,
    /// Projectors onto the ↓-labeled and ↑-labeled qubit eigenstates.
    pub projectors: [Matrix4<C64>; 2],
    /// The corresponding eigenvectors (↓ first).
    pub states: [Vector4<C64>; 2],
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Ground-state Hamiltonian in Hz.
pub fn build_ground_hamiltonian(params: &SivModelParams, strain: &StrainInput) -> Result<Matrix4<C64>> {
    params.validate()?;
    strain.validate()?;

    let mut h = Matrix4::<C64>::zeros();
    let half_lambda = 0.5 * params.lambda_so;
    let [bx, by, bz] = params.b_field;
    let gs = 0.5 * params.gamma_s;
    let orbital_zeeman = params.q_orbital * gs * bz;
    let shift = params.f_a1g * strain.eps_a1g;

    for orbital in 0..2 {
        let lz = if orbital == 0 { 1.0 } else { -1.0 };
        let up = 2 * orbital;
        let down = up + 1;
        h[(up, up)] = c(half_lambda * lz + gs * bz + orbital_zeeman * lz + shift);
        h[(down, down)] = c(-half_lambda * lz - gs * bz + orbital_zeeman * lz + shift);
        // ⟨↑|σ·B|↓⟩ = Bx − iBy
        h[(up, down)] = C64::new(gs * bx, -gs * by);
        h[(down, up)] = C64::new(gs * bx, gs * by);
    }

    let mixing = eg_operator(params.d_orbital, strain.eps_egx, strain.eps_egy);
    Ok(h + mixing)
}

/// Eg strain term `d [(εx + iεy)|e+⟩⟨e−| + h.c.] ⊗ 1`.
fn eg_operator(d: f64, eps_x: f64, eps_y: f64) -> Matrix4<C64> {
    let coupling = C64::new(d * eps_x, d * eps_y);
    let mut m = Matrix4::<C64>::zeros();
    for spin in 0..2 {
        m[(spin, 2 + spin)] = coupling;
        m[(2 + spin, spin)] = coupling.conj();
    }
    m
}

/// Weight of the spin-↓ component of a state.
fn down_weight(v: &Vector4<C64>) -> f64 {
    v[1].norm_sqr() + v[3].norm_sqr()
}

/// Eigenpairs sorted by eigenvalue, ties broken by descending ↓ weight.
fn sorted_eigenpairs(h: &Matrix4<C64>, down: impl Fn(&Vector4<C64>) -> f64) -> Vec<(f64, Vector4<C64>)> {
    let eig = SymmetricEigen::new(*h);
    let mut pairs: Vec<(f64, Vector4<C64>)> = (0..4)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors.column(k).into_owned()))
        .collect();
    pairs.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then_with(|| down(&b.1).total_cmp(&down(&a.1)))
    });
    pairs
}

/// Splitting of the two lowest eigenvalues, Hz.
pub fn lowest_splitting(h: &Matrix4<C64>) -> f64 {
    let eig = SymmetricEigen::new(*h);
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values[1] - values[0]
}

/// Identifies the spin qubit inside `h` (built at zero Eg strain).
pub fn qubit_reduction(h: &Matrix4<C64>, params: &SivModelParams) -> Result<QubitReduction> {
    let unit_strain = eg_operator(params.d_orbital, 1.0, 0.0);
    reduce_with(h, &unit_strain, down_weight)
}

/// Core of [`qubit_reduction`] with the strain operator and spin labeling supplied.
pub(crate) fn reduce_with(
    h: &Matrix4<C64>,
    strain_op: &Matrix4<C64>,
    down: impl Fn(&Vector4<C64>) -> f64,
) -> Result<QubitReduction> {
    let pairs = sorted_eigenpairs(h, &down);
    let splitting = pairs[1].0 - pairs[0].0;
    if splitting < DEGENERACY_THRESHOLD_HZ {
        return Err(Error::Degeneracy { splitting });
    }

    let (lo, hi) = (&pairs[0].1, &pairs[1].1);
    let (w_lo, w_hi) = (down(lo), down(hi));
    let purity = w_lo.max(1.0 - w_lo).min(w_hi.max(1.0 - w_hi));
    if purity < MIN_SPIN_PURITY {
        return Err(Error::AmbiguousLabeling { purity });
    }
    let (down_state, up_state) = match (w_lo > 0.5, w_hi > 0.5) {
        (true, false) => (lo.clone(), hi.clone()),
        (false, true) => (hi.clone(), lo.clone()),
        // Both states carry the same spin label: no spin qubit here.
        _ => return Err(Error::AmbiguousLabeling { purity: 0.5 }),
    };

    let element = (up_state.adjoint() * strain_op * &down_state)[(0, 0)];
    let projectors = [
        &down_state * down_state.adjoint(),
        &up_state * up_state.adjoint(),
    ];
    Ok(QubitReduction {
        qubit_freq: splitting,
        spin_strain_rate: element.norm(),
        projectors,
        states: [down_state, up_state],
    })
}

fn splitting_at(params: &SivModelParams, direction: &Vector3<f64>, magnitude: f64) -> Result<f64> {
    let h = build_ground_hamiltonian(&params.with_field(direction, magnitude), &StrainInput::default())?;
    Ok(lowest_splitting(&h))
}

/// Field magnitude (T) along `direction` whose qubit splitting equals `target`.
///
/// Scans upward from zero field for the first bracket containing the target
/// (the splitting of the lowest pair is not monotonic past the level
/// anticrossing near λ/γ_s), then bisects it.
pub fn tune_field_to_qubit_freq(params: &SivModelParams, target: f64, direction: &Vector3<f64>) -> Result<f64> {
    if !target.is_finite() || target < 0.0 {
        return Err(Error::invalid("target", "must be a finite non-negative frequency"));
    }
    if !(direction.norm() > 0.0) || !direction.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("direction", "must be a finite non-zero vector"));
    }
    if target == 0.0 {
        return Ok(0.0);
    }
    if direction.normalize().z.abs() == 1.0 {
        log::warn!("field along the SiV axis: the qubit has no spin-strain coupling");
    }

    const SCAN_STEPS: usize = 2000;
    let step = MAX_FIELD_T / SCAN_STEPS as f64;
    let mut lo = 0.0;
    let mut hi = None;
    for k in 1..=SCAN_STEPS {
        let b = k as f64 * step;
        if splitting_at(params, direction, b)? >= target {
            hi = Some(b);
            break;
        }
        lo = b;
    }
    let mut hi = hi.ok_or(Error::OutOfRange {
        target,
        max_field: MAX_FIELD_T,
    })?;

    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let s = splitting_at(params, direction, mid)?;
        if (s - target).abs() < 1e-3 {
            return Ok(mid);
        }
        if s < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Upward and downward spin relaxation rates in detailed balance.
///
/// `total` is Γ↑ + Γ↓; the ratio Γ↑/Γ↓ is the Boltzmann factor of the qubit
/// splitting at `temperature`.
pub fn thermal_relaxation_rates(total: f64, qubit_freq: f64, temperature: f64) -> (f64, f64) {
    let boltzmann = (-qubit_freq * H_OVER_KB / temperature).exp();
    let down = total / (1.0 + boltzmann);
    (total - down, down)
}

/// Equilibrium population of the lower (↓) qubit level.
pub fn thermal_lower_population(qubit_freq: f64, temperature: f64) -> f64 {
    1.0 / (1.0 + (-qubit_freq * H_OVER_KB / temperature).exp())
}

/// Decoherence knobs for the qubit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Decoherence {
    /// Coherence decay rate, 1/s: off-diagonals decay as exp(−γt).
    pub pure_dephasing_rate: f64,
    /// Γ↑ + Γ↓ for thermal spin relaxation, 1/s. Zero disables it.
    pub spin_relaxation_rate: f64,
}

impl Decoherence {
    /// Pure dephasing giving a free-induction decay time of `t2_star`.
    pub fn from_t2_star(t2_star: f64) -> Self {
        Self {
            pure_dephasing_rate: 1.0 / t2_star,
            spin_relaxation_rate: 0.0,
        }
    }
}

/// Lindblad operators on the qubit subspace, basis {↓, ↑}, in √(1/s).
///
/// Zero-rate channels are omitted.
pub fn collapse_operators(
    params: &SivModelParams,
    reduction: &QubitReduction,
    decoherence: &Decoherence,
) -> Result<Vec<DMatrix<C64>>> {
    let Decoherence {
        pure_dephasing_rate,
        spin_relaxation_rate,
    } = *decoherence;
    if !(pure_dephasing_rate >= 0.0) || !pure_dephasing_rate.is_finite() {
        return Err(Error::invalid("pure_dephasing_rate", "must be finite and non-negative"));
    }
    if !(spin_relaxation_rate >= 0.0) || !spin_relaxation_rate.is_finite() {
        return Err(Error::invalid("spin_relaxation_rate", "must be finite and non-negative"));
    }

    let mut ops = Vec::new();
    if pure_dephasing_rate > 0.0 {
        // L = √(γ/2) σ_z gives dρ↓↑/dt = −γ ρ↓↑.
        let a = (0.5 * pure_dephasing_rate).sqrt();
        ops.push(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(-a), c(a)])));
    }
    if spin_relaxation_rate > 0.0 {
        let (up, down) = thermal_relaxation_rates(spin_relaxation_rate, reduction.qubit_freq, params.temperature);
        let mut lower = DMatrix::zeros(2, 2);
        lower[(0, 1)] = c(down.sqrt());
        ops.push(lower);
        if up > 0.0 {
            let mut raise = DMatrix::zeros(2, 2);
            raise[(1, 0)] = c(up.sqrt());
            ops.push(raise);
        }
    }
    Ok(ops)
}
