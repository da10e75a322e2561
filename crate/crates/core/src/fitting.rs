//! Levenberg–Marquardt fits for the scan reductions.
//!
//! Every model is fitted in normalized coordinates (x divided by its span,
//! y centered and divided by its spread) and mapped back, so the fits are
//! equivariant under rescaling of the data.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::TWO_PI;

const MAX_ITERATIONS: usize = 200;
const STEP_TOL: f64 = 1e-10;

/// Outcome of a fit. Parameter names are stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: BTreeMap<String, f64>,
    pub std_errors: BTreeMap<String, f64>,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl FitResult {
    /// Parameter value; panics on unknown names.
    pub fn get(&self, name: &str) -> f64 {
        self.params[name]
    }

    pub fn std_error(&self, name: &str) -> f64 {
        self.std_errors[name]
    }
}

/// A model `y = f(x; p)` with its analytic gradient in `p`.
pub trait Model {
    fn n_params(&self) -> usize;
    fn eval(&self, x: f64, p: &[f64]) -> f64;
    fn gradient(&self, x: f64, p: &[f64], out: &mut [f64]);
}

/// Raw LM outcome in the model's own parametrization.
#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    /// `s² (JᵀJ)⁻¹` at the optimum.
    pub covariance: DMatrix<f64>,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn residuals(model: &dyn Model, x: &[f64], y: &[f64], p: &[f64]) -> DVector<f64> {
    DVector::from_iterator(x.len(), x.iter().zip(y).map(|(&xi, &yi)| model.eval(xi, p) - yi))
}

pub fn jacobian(model: &dyn Model, x: &[f64], p: &[f64]) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(x.len(), model.n_params());
    let mut row = vec![0.0; model.n_params()];
    for (i, &xi) in x.iter().enumerate() {
        model.gradient(xi, p, &mut row);
        for (k, v) in row.iter().enumerate() {
            j[(i, k)] = *v;
        }
    }
    j
}

/// Central-difference Jacobian.
pub fn jacobian_fd(model: &dyn Model, x: &[f64], p: &[f64]) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(x.len(), model.n_params());
    let mut q = p.to_vec();
    for k in 0..p.len() {
        let h = 1e-6 * p[k].abs().max(1e-3);
        q[k] = p[k] + h;
        let up: Vec<f64> = x.iter().map(|&xi| model.eval(xi, &q)).collect();
        q[k] = p[k] - h;
        let down: Vec<f64> = x.iter().map(|&xi| model.eval(xi, &q)).collect();
        q[k] = p[k];
        for i in 0..x.len() {
            j[(i, k)] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    j
}

/// Minimizes `Σ (f(x_i; p) − y_i)²` from `p0`.
pub fn levenberg_marquardt(model: &dyn Model, x: &[f64], y: &[f64], p0: &[f64]) -> Result<LmOutcome> {
    let n_p = model.n_params();
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() <= n_p {
        return Err(Error::DegenerateFit(format!("{} points for {n_p} parameters", x.len())));
    }
    if x.iter().chain(y).chain(p0).any(|v| !v.is_finite()) {
        return Err(Error::DegenerateFit("non-finite input".into()));
    }

    let mut p = p0.to_vec();
    let mut r = residuals(model, x, y, &p);
    let mut cost = r.norm_squared();
    let mut mu = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let j = jacobian(model, x, &p);
        let jtj = j.transpose() * &j;
        let g = j.transpose() * &r;
        if g.amax() <= 1e-15 * (1.0 + cost) {
            converged = true;
            break;
        }
        let mut accepted = false;
        while mu < 1e20 {
            let mut a = jtj.clone();
            for k in 0..n_p {
                a[(k, k)] += mu * jtj[(k, k)].max(1e-12);
            }
            let Some(chol) = a.cholesky() else {
                mu *= 10.0;
                continue;
            };
            let step = chol.solve(&(-&g));
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let r_trial = residuals(model, x, y, &trial);
            let cost_trial = r_trial.norm_squared();
            if cost_trial.is_finite() && cost_trial <= cost {
                let p_norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                let small = step.norm() <= STEP_TOL * (p_norm + STEP_TOL);
                p = trial;
                r = r_trial;
                cost = cost_trial;
                mu = (mu / 10.0).max(1e-12);
                accepted = true;
                if small {
                    converged = true;
                }
                break;
            }
            mu *= 10.0;
        }
        if converged {
            break;
        }
        if !accepted {
            // No descent direction left at machine precision.
            converged = true;
            break;
        }
    }

    let j = jacobian(model, x, &p);
    let jtj = j.transpose() * &j;
    let dof = (x.len() - n_p) as f64;
    let s2 = cost / dof;
    let inverse = jtj
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::DegenerateFit("singular Jacobian at the optimum".into()))?;
    if inverse.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateFit("singular Jacobian at the optimum".into()));
    }
    Ok(LmOutcome {
        params: p,
        covariance: inverse * s2,
        residual_norm: cost.sqrt(),
        converged,
        iterations,
    })
}

/// Data mapped to `x' = x / sx`, `y' = (y − y0) / sy`.
struct Normalized {
    x: Vec<f64>,
    y: Vec<f64>,
    sx: f64,
    y0: f64,
    sy: f64,
}

impl Normalized {
    fn new(x: &[f64], y: &[f64], center_x: bool) -> Result<(Self, f64)> {
        let (lo, hi) = min_max(x);
        let sx = hi - lo;
        if !(sx > 0.0) {
            return Err(Error::DegenerateFit("x values are all identical".into()));
        }
        let x0 = if center_x { 0.5 * (lo + hi) } else { 0.0 };
        let y0 = y.iter().sum::<f64>() / y.len() as f64;
        let sy = y.iter().map(|v| (v - y0).abs()).fold(0.0, f64::max);
        let sy = if sy > 0.0 { sy } else { 1.0 };
        Ok((
            Self {
                x: x.iter().map(|v| (v - x0) / sx).collect(),
                y: y.iter().map(|v| (v - y0) / sy).collect(),
                sx,
                y0,
                sy,
            },
            x0,
        ))
    }
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

fn check_xy(x: &[f64], y: &[f64], min_points: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < min_points {
        return Err(Error::DegenerateFit(format!("need at least {min_points} points, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::DegenerateFit("non-finite data".into()));
    }
    Ok(())
}

fn wrap_phase(phi: f64) -> f64 {
    let w = phi.rem_euclid(TWO_PI);
    if w > std::f64::consts::PI {
        w - TWO_PI
    } else {
        w
    }
}

/// `offset + amplitude · exp(−rate · x) · cos(2π freq x + phase)`.
///
/// Parameters: `[offset, amplitude, freq, phase, rate]`.
pub struct DampedSinusoid;

impl Model for DampedSinusoid {
    fn n_params(&self) -> usize {
        5
    }

    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        p[0] + p[1] * (-p[4] * x).exp() * (TWO_PI * p[2] * x + p[3]).cos()
    }

    fn gradient(&self, x: f64, p: &[f64], out: &mut [f64]) {
        let env = (-p[4] * x).exp();
        let theta = TWO_PI * p[2] * x + p[3];
        let (s, c) = theta.sin_cos();
        out[0] = 1.0;
        out[1] = env * c;
        out[2] = -p[1] * env * s * TWO_PI * x;
        out[3] = -p[1] * env * s;
        out[4] = -x * p[1] * env * c;
    }
}

/// Frequency of the largest periodogram peak, zero-padded and refined by a
/// parabola through the three highest grid points.
fn periodogram_peak(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = x.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let (lo, hi) = min_max(x);
    let span = hi - lo;
    let nyquist = 0.5 * (n - 1) as f64 / span;
    let df = 1.0 / (8.0 * span);
    let m = (nyquist / df).floor() as usize;
    if m < 2 {
        return None;
    }
    let power = |f: f64| {
        let (mut re, mut im) = (0.0, 0.0);
        for (&xi, &yi) in x.iter().zip(y) {
            let (s, c) = (TWO_PI * f * (xi - lo)).sin_cos();
            re += (yi - mean) * c;
            im -= (yi - mean) * s;
        }
        re * re + im * im
    };
    let spectrum: Vec<f64> = (0..=m).map(|k| power(k as f64 * df)).collect();
    // Skip the DC lobe.
    let start = 4.min(m);
    let (k, &peak) = spectrum
        .iter()
        .enumerate()
        .skip(start)
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    let mut sorted = spectrum[start..].to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let mut f = k as f64 * df;
    if k > 0 && k < m {
        let (a, b, c) = (spectrum[k - 1], spectrum[k], spectrum[k + 1]);
        let denom = a - 2.0 * b + c;
        if denom < 0.0 {
            f += 0.5 * (a - c) / denom * df;
        }
    }
    Some((f, peak, median))
}

/// Linear least squares for `offset + env(x)(C cos θ + S sin θ)`.
fn linear_sinusoid(x: &[f64], y: &[f64], freq: f64, rate: f64) -> Option<(f64, f64, f64)> {
    let a = DMatrix::from_fn(x.len(), 3, |i, k| {
        let env = (-rate * x[i]).exp();
        let theta = TWO_PI * freq * x[i];
        match k {
            0 => 1.0,
            1 => env * theta.cos(),
            _ => env * theta.sin(),
        }
    });
    let b = DVector::from_column_slice(y);
    let sol = (a.transpose() * &a).cholesky()?.solve(&(a.transpose() * b));
    Some((sol[0], sol[1], sol[2]))
}

/// Initial `[offset, amplitude, freq, phase, rate]` for normalized data.
fn sinusoid_guess(x: &[f64], y: &[f64]) -> Result<[f64; 5]> {
    let (f, peak, median) = periodogram_peak(x, y).ok_or(Error::NoOscillation)?;
    let variance = y.iter().map(|v| v * v).sum::<f64>();
    if !(variance > 1e-20) || !(peak > 4.0 * median) || !(f > 0.0) {
        return Err(Error::NoOscillation);
    }

    // Log-envelope slope from per-chunk amplitudes, one chunk per period or more.
    let (lo, hi) = min_max(x);
    let chunks = (((hi - lo) * f).floor() as usize).clamp(1, 6);
    let mut rate = 0.0;
    if chunks >= 2 {
        let width = (hi - lo) / chunks as f64;
        let mut pts = Vec::new();
        for c in 0..chunks {
            let a = lo + c as f64 * width;
            let b = a + width;
            let idx: Vec<usize> = (0..x.len()).filter(|&i| x[i] >= a && (x[i] < b || c == chunks - 1)).collect();
            if idx.len() < 4 {
                continue;
            }
            let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
            let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            if let Some((_, cc, ss)) = linear_sinusoid(&xs, &ys, f, 0.0) {
                let amp = cc.hypot(ss);
                if amp > 0.0 {
                    pts.push((0.5 * (a + b), amp.ln()));
                }
            }
        }
        if pts.len() >= 2 {
            let n = pts.len() as f64;
            let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
            let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
            if sxx > 0.0 {
                rate = (-sxy / sxx).max(0.0);
            }
        }
    }
    let (offset, c, s) = linear_sinusoid(x, y, f, rate).ok_or(Error::NoOscillation)?;
    Ok([offset, c.hypot(s), f, (-s).atan2(c), rate])
}

/// Damped-sinusoid fit; parameters `amplitude`, `freq`, `phase`,
/// `decay_time` (and `decay_rate`), `offset`.
pub fn fit_damped_sinusoid(x: &[f64], y: &[f64]) -> Result<FitResult> {
    check_xy(x, y, 8)?;
    let (norm, _) = Normalized::new(x, y, false)?;
    let guess = sinusoid_guess(&norm.x, &norm.y)?;
    let (lo, hi) = min_max(x);
    let out = levenberg_marquardt(&DampedSinusoid, &norm.x, &norm.y, &guess)?;
    let mut p = out.params.clone();
    let cov = &out.covariance;
    // Keep the amplitude positive.
    if p[1] < 0.0 {
        p[1] = -p[1];
        p[3] += std::f64::consts::PI;
    }
    // A negative frequency is the same curve with the phase negated.
    if p[2] < 0.0 {
        p[2] = -p[2];
        p[3] = -p[3];
    }
    let se = |k: usize| cov[(k, k)].max(0.0).sqrt();
    let (sx, sy) = (norm.sx, norm.sy);
    let rate = p[4] / sx;
    let rate_se = se(4) / sx;

    let mut params = BTreeMap::new();
    let mut errs = BTreeMap::new();
    let mut warnings = Vec::new();
    params.insert("offset".to_string(), norm.y0 + sy * p[0]);
    errs.insert("offset".to_string(), sy * se(0));
    params.insert("amplitude".to_string(), sy * p[1]);
    errs.insert("amplitude".to_string(), sy * se(1));
    params.insert("freq".to_string(), p[2] / sx);
    errs.insert("freq".to_string(), se(2) / sx);
    params.insert("phase".to_string(), wrap_phase(p[3]));
    errs.insert("phase".to_string(), se(3));
    params.insert("decay_rate".to_string(), rate);
    errs.insert("decay_rate".to_string(), rate_se);
    let span = hi - lo;
    let decay_time = if rate > 0.0 { 1.0 / rate } else { f64::INFINITY };
    if decay_time > 10.0 * span {
        warnings.push("unbounded_decay".to_string());
    }
    params.insert("decay_time".to_string(), decay_time);
    errs.insert(
        "decay_time".to_string(),
        if rate > 0.0 { rate_se / (rate * rate) } else { f64::INFINITY },
    );
    Ok(FitResult {
        params,
        std_errors: errs,
        residual_norm: out.residual_norm * sy,
        converged: out.converged,
        iterations: out.iterations,
        warnings,
    })
}

/// Ramsey fit: a damped sinusoid with names `fringe_freq` and `t2_star`.
pub fn fit_ramsey(x: &[f64], y: &[f64]) -> Result<FitResult> {
    let mut fit = fit_damped_sinusoid(x, y)?;
    for (from, to) in [("freq", "fringe_freq"), ("decay_time", "t2_star")] {
        let v = fit.params.remove(from).expect("present");
        fit.params.insert(to.to_string(), v);
        let e = fit.std_errors.remove(from).expect("present");
        fit.std_errors.insert(to.to_string(), e);
    }
    Ok(fit)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lineshape {
    #[default]
    Gaussian,
    Lorentzian,
    SincSquared,
}

/// Half-maximum point of sinc²(x) = (sin x / x)², x > 0.
const SINC2_HALF: f64 = 1.391_557_377_256_16;

impl Lineshape {
    /// Unit-height profile in `u = (f − center)/fwhm`, with half maximum at |u| = ½.
    pub fn profile(self, u: f64) -> f64 {
        match self {
            Lineshape::Gaussian => (-4.0 * std::f64::consts::LN_2 * u * u).exp(),
            Lineshape::Lorentzian => 1.0 / (1.0 + 4.0 * u * u),
            Lineshape::SincSquared => {
                let z = 2.0 * SINC2_HALF * u;
                if z.abs() < 1e-6 {
                    1.0 - z * z / 3.0
                } else {
                    (z.sin() / z).powi(2)
                }
            }
        }
    }

    /// d profile / du.
    fn derivative(self, u: f64) -> f64 {
        match self {
            Lineshape::Gaussian => {
                let k = 4.0 * std::f64::consts::LN_2;
                -2.0 * k * u * (-k * u * u).exp()
            }
            Lineshape::Lorentzian => -8.0 * u / (1.0 + 4.0 * u * u).powi(2),
            Lineshape::SincSquared => {
                let a = 2.0 * SINC2_HALF;
                let z = a * u;
                if z.abs() < 1e-4 {
                    // sinc² ≈ 1 − z²/3 + 2z⁴/45
                    a * (-2.0 * z / 3.0 + 8.0 * z.powi(3) / 45.0)
                } else {
                    let (s, c) = z.sin_cos();
                    a * 2.0 * (s / z) * (c / z - s / (z * z))
                }
            }
        }
    }
}

/// `baseline + height · profile((x − center)/fwhm)`.
///
/// Parameters: `[center, fwhm, height, baseline]`.
pub struct Peak(pub Lineshape);

impl Model for Peak {
    fn n_params(&self) -> usize {
        4
    }

    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        p[3] + p[2] * self.0.profile((x - p[0]) / p[1])
    }

    fn gradient(&self, x: f64, p: &[f64], out: &mut [f64]) {
        let u = (x - p[0]) / p[1];
        let d = self.0.derivative(u);
        out[0] = -p[2] * d / p[1];
        out[1] = -p[2] * d * u / p[1];
        out[2] = self.0.profile(u);
        out[3] = 1.0;
    }
}

/// Symmetric-peak fit; parameters `center`, `fwhm`, `height`, `baseline`.
pub fn fit_lineshape(f: &[f64], y: &[f64], shape: Lineshape) -> Result<FitResult> {
    check_xy(f, y, 10)?;
    let (imax, _) = y
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    if imax == 0 || imax == y.len() - 1 {
        return Err(Error::EdgePeak { index: imax });
    }
    let (norm, x0) = Normalized::new(f, y, true)?;
    let (x, yn) = (&norm.x, &norm.y);

    let edge = (yn.len() / 10).max(1);
    let mut tails: Vec<f64> = yn[..edge].iter().chain(&yn[yn.len() - edge..]).copied().collect();
    tails.sort_by(f64::total_cmp);
    let baseline = tails[tails.len() / 2];
    let height = yn[imax] - baseline;
    let half = baseline + 0.5 * height;
    let mut left = imax;
    while left > 0 && yn[left] > half {
        left -= 1;
    }
    let mut right = imax;
    while right < yn.len() - 1 && yn[right] > half {
        right += 1;
    }
    let width = (x[right] - x[left]).max(x[imax + 1] - x[imax - 1]);
    let guess = [x[imax], width, height, baseline];

    let out = levenberg_marquardt(&Peak(shape), x, yn, &guess)?;
    let p = &out.params;
    let se = |k: usize| out.covariance[(k, k)].max(0.0).sqrt();
    let (sx, sy) = (norm.sx, norm.sy);
    let mut params = BTreeMap::new();
    let mut errs = BTreeMap::new();
    params.insert("center".to_string(), x0 + sx * p[0]);
    errs.insert("center".to_string(), sx * se(0));
    params.insert("fwhm".to_string(), sx * p[1].abs());
    errs.insert("fwhm".to_string(), sx * se(1));
    params.insert("height".to_string(), sy * p[2]);
    errs.insert("height".to_string(), sy * se(2));
    params.insert("baseline".to_string(), norm.y0 + sy * p[3]);
    errs.insert("baseline".to_string(), sy * se(3));
    Ok(FitResult {
        params,
        std_errors: errs,
        residual_norm: out.residual_norm * sy,
        converged: out.converged,
        iterations: out.iterations,
        warnings: Vec::new(),
    })
}

/// Ordinary least squares; parameters `slope`, `intercept`, `r_squared`.
pub fn fit_linear(x: &[f64], y: &[f64]) -> Result<FitResult> {
    check_xy(x, y, 3)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::DegenerateFit("x values are all identical".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let tss: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };
    let s2 = rss / (n - 2.0);
    let slope_se = (s2 / sxx).sqrt();
    let intercept_se = (s2 * (1.0 / n + mx * mx / sxx)).sqrt();
    let params = BTreeMap::from([
        ("slope".to_string(), slope),
        ("intercept".to_string(), intercept),
        ("r_squared".to_string(), r_squared),
    ]);
    let std_errors = BTreeMap::from([
        ("slope".to_string(), slope_se),
        ("intercept".to_string(), intercept_se),
        ("r_squared".to_string(), 0.0),
    ]);
    Ok(FitResult {
        params,
        std_errors,
        residual_norm: rss.sqrt(),
        converged: true,
        iterations: 1,
        warnings: Vec::new(),
    })
}
