//! Cascade ISS-Lyapunov certificates.
//!
//! Per mode, the observer-side function `V_o` and the plant-side function
//! `V_c` are combined into
//!
//! ```text
//! V_p(x, e) = ℓ_p(V_o(e)) + V_c(x),    ℓ_p(s) = ∫_0^s ν_p(r) dr,
//! ```
//!
//! where `ν_p` is four times the running supremum of `γ_c/α_o`. The module
//! also derives the decay rate `α_p`, the disturbance gain `γ_p`, the
//! sandwich bounds of `V_p` and the cross-mode jump gains `χ` and `ρ`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::kfun::{self, ComparisonFunction as CF, KfunError, ScalarFn};
use crate::linear_synth::{self, lambda_max, lambda_min, LinearCascadeMode, QuadraticCertificate};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertError {
    #[error("assumption violated: {0}")]
    AssumptionViolation(String),
    #[error("mode {mode}: {source}")]
    Kfun { mode: usize, source: KfunError },
    #[error(transparent)]
    Linear(#[from] linear_synth::LinearError),
    #[error("inconsistent certificate: {0}")]
    Inconsistent(String),
}

pub type Result<T> = std::result::Result<T, CertError>;

/// A differentiable nonnegative function of a state vector.
pub trait StateFunction: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, v: &[f64]) -> f64;
    fn gradient(&self, v: &[f64]) -> Vec<f64>;
}

/// `vᵀ P v` with symmetric `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    pub p: DMatrix<f64>,
}

impl QuadraticForm {
    pub fn new(p: DMatrix<f64>) -> Self {
        let p = 0.5 * (&p + p.transpose());
        Self { p }
    }
}

impl StateFunction for QuadraticForm {
    fn dim(&self) -> usize {
        self.p.nrows()
    }

    fn value(&self, v: &[f64]) -> f64 {
        let n = self.p.nrows();
        let mut acc = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += self.p[(i, j)] * v[j];
            }
            acc += v[i] * row;
        }
        acc
    }

    fn gradient(&self, v: &[f64]) -> Vec<f64> {
        let n = self.p.nrows();
        (0..n)
            .map(|i| 2.0 * (0..n).map(|j| self.p[(i, j)] * v[j]).sum::<f64>())
            .collect()
    }
}

/// Per-mode ISS data of the two cascade stages.
#[derive(Debug, Clone)]
pub struct SubsystemCertificate {
    pub v_o: Arc<dyn StateFunction>,
    pub v_c: Arc<dyn StateFunction>,
    pub alpha_o_lower: CF,
    pub alpha_o_upper: CF,
    /// decay of `V_o` as a function of `V_o`
    pub alpha_o: CF,
    /// disturbance gain of `V_o` as a function of `|d|`
    pub gamma_o: CF,
    pub alpha_c_lower: CF,
    pub alpha_c_upper: CF,
    /// decay of `V_c` as a function of `V_c`
    pub alpha_c: CF,
    /// coupling gain of `V_c` as a function of `V_o`
    pub gamma_c: CF,
}

/// Jump maps at switching instants and their growth bounds.
#[derive(Clone)]
pub enum JumpMaps {
    Identity,
    Custom {
        g_c: Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>,
        g_o: Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>,
    },
}

impl fmt::Debug for JumpMaps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JumpMaps::Identity => f.write_str("Identity"),
            JumpMaps::Custom { .. } => f.write_str("Custom(..)"),
        }
    }
}

impl JumpMaps {
    /// `x⁺ = g_c(x, e)`
    pub fn apply_c(&self, x: &[f64], e: &[f64]) -> Vec<f64> {
        match self {
            JumpMaps::Identity => x.to_vec(),
            JumpMaps::Custom { g_c, .. } => g_c(x, e),
        }
    }

    /// `e⁺ = g_o(e, d)`
    pub fn apply_o(&self, e: &[f64], d: &[f64]) -> Vec<f64> {
        match self {
            JumpMaps::Identity => e.to_vec(),
            JumpMaps::Custom { g_o, .. } => g_o(e, d),
        }
    }
}

#[derive(Debug, Clone)]
pub struct JumpBounds {
    pub alpha_hat_c: CF,
    pub alpha_hat_o: CF,
    pub rho_hat_o: CF,
    pub maps: JumpMaps,
}

impl JumpBounds {
    /// States are left untouched at switches.
    pub fn identity() -> Self {
        Self {
            alpha_hat_c: CF::identity(),
            alpha_hat_o: CF::identity(),
            rho_hat_o: CF::zero(),
            maps: JumpMaps::Identity,
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.maps, JumpMaps::Identity)
    }
}

/// Composed certificate data for one mode.
#[derive(Debug, Clone)]
pub struct ModeCertificate {
    pub sub: SubsystemCertificate,
    pub nu_bar: ScalarFn,
    pub nu: ScalarFn,
    pub ell: CF,
    pub alpha: CF,
    pub gamma: CF,
    pub theta: CF,
    pub alpha_lower: CF,
    pub alpha_upper: CF,
}

impl ModeCertificate {
    pub fn value(&self, x: &[f64], e: &[f64]) -> f64 {
        let vo = self.sub.v_o.value(e).max(0.0);
        self.ell.eval(vo).unwrap_or(f64::NAN) + self.sub.v_c.value(x)
    }

    /// `(∇_x V_p, ∇_e V_p)` by the chain rule.
    pub fn gradient(&self, x: &[f64], e: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let vo = self.sub.v_o.value(e).max(0.0);
        let w = self.nu.eval(vo).unwrap_or(f64::NAN);
        let ge = self.sub.v_o.gradient(e).into_iter().map(|g| w * g).collect();
        (self.sub.v_c.gradient(x), ge)
    }
}

/// Composed certificates for every mode plus the shared jump gains.
#[derive(Debug, Clone)]
pub struct CascadeCertificate {
    pub modes: Vec<ModeCertificate>,
    pub chi: CF,
    pub rho: CF,
}

impl CascadeCertificate {
    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn value(&self, mode: usize, x: &[f64], e: &[f64]) -> f64 {
        self.modes[mode].value(x, e)
    }

    pub fn gradient(&self, mode: usize, x: &[f64], e: &[f64]) -> (Vec<f64>, Vec<f64>) {
        self.modes[mode].gradient(x, e)
    }
}

/// Right-hand sides of the two cascade stages.
pub trait CascadeDynamics: Send + Sync {
    /// `(n_c, n_o, n_d)`
    fn dims(&self) -> (usize, usize, usize);
    fn n_modes(&self) -> usize;
    /// Writes `ẋ` into `out`.
    fn f_c(&self, mode: usize, x: &[f64], e: &[f64], out: &mut [f64]);
    /// Writes `ė` into `out`.
    fn f_o(&self, mode: usize, e: &[f64], d: &[f64], out: &mut [f64]);
}

/// Switched linear cascade `ẋ = A_p x + B_p e`, `ė = F_p e + G_p d`.
#[derive(Debug, Clone)]
pub struct LinearCascade {
    pub modes: Vec<LinearCascadeMode>,
}

fn mat_vec(m: &DMatrix<f64>, v: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o += (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum::<f64>();
    }
}

impl CascadeDynamics for LinearCascade {
    fn dims(&self) -> (usize, usize, usize) {
        self.modes[0].dims()
    }

    fn n_modes(&self) -> usize {
        self.modes.len()
    }

    fn f_c(&self, mode: usize, x: &[f64], e: &[f64], out: &mut [f64]) {
        let m = &self.modes[mode];
        out.fill(0.0);
        mat_vec(&m.a, x, out);
        mat_vec(&m.b, e, out);
    }

    fn f_o(&self, mode: usize, e: &[f64], d: &[f64], out: &mut [f64]) {
        let m = &self.modes[mode];
        out.fill(0.0);
        mat_vec(&m.f, e, out);
        mat_vec(&m.g, d, out);
    }
}

/// Smallest admissible cap on `ν̄` near the origin; values beyond it are
/// treated as unbounded.
const L3_CAP: f64 = 1e12;

/// `ν̄(s) = γ_c(s)/α_o(s)`, with a numeric check that it stays bounded as
/// `s → 0⁺`.
pub fn build_nu_bar(sub: &SubsystemCertificate) -> Result<ScalarFn> {
    let nu_bar = ScalarFn::ratio(sub.gamma_c.clone(), sub.alpha_o.clone());
    check_bounded_near_origin(&nu_bar)?;
    Ok(nu_bar)
}

/// Evaluates `f` on `10^-1, …, 10^-8` and rejects non-finite values,
/// values above a fixed cap, or steady growth over the last decades.
pub fn check_bounded_near_origin(f: &ScalarFn) -> Result<()> {
    if let Some((_, k)) = f.as_power() {
        if k < 0.0 {
            return Err(CertError::AssumptionViolation(format!(
                "coupling ratio behaves like s^{k} near the origin"
            )));
        }
        return Ok(());
    }
    let mut vals = Vec::with_capacity(8);
    for i in 1..=8 {
        let s = 10f64.powi(-i);
        let v = f
            .eval(s)
            .map_err(|e| CertError::AssumptionViolation(format!("ratio at {s}: {e}")))?;
        if !v.is_finite() || v > L3_CAP {
            return Err(CertError::AssumptionViolation(format!(
                "coupling ratio is {v} at s = {s}"
            )));
        }
        vals.push(v);
    }
    let growing = vals[3..].windows(2).all(|w| w[1] >= 1.05 * w[0] && w[1] > 0.0);
    if growing {
        return Err(CertError::AssumptionViolation(
            "coupling ratio keeps growing towards the origin".into(),
        ));
    }
    Ok(())
}

/// `ν = 4·sup ν̄` and `ℓ = ∫ν`.
pub fn compose_vp(nu_bar: &ScalarFn) -> std::result::Result<(ScalarFn, CF), KfunError> {
    let nu = kfun::nondecreasing_majorant(nu_bar, 4.0, None)?;
    let ell = kfun::integral_primitive(&nu);
    Ok((nu, ell))
}

/// `(α_p, γ_p, θ_p)` of the composed decay inequality.
pub fn build_rates(sub: &SubsystemCertificate, nu: &ScalarFn, ell: &CF) -> (CF, CF, CF) {
    let alpha = CF::min_of(vec![
        CF::rescaled_argument(sub.alpha_c.clone(), 0.5),
        CF::compose(
            sub.gamma_c.clone(),
            CF::scaled(0.5, CF::inverse(ell.clone())),
        ),
    ]);
    let theta = CF::compose(
        CF::inverse(sub.alpha_o.clone()),
        CF::scaled(2.0, sub.gamma_o.clone()),
    );
    let gamma = CF::weighted(nu.clone(), theta.clone(), sub.gamma_o.clone());
    (alpha, gamma, theta)
}

/// Lower and upper bounds of `V_p` in terms of `|(x, e)|`.
pub fn sandwich(sub: &SubsystemCertificate, ell: &CF) -> (CF, CF) {
    let half = std::f64::consts::FRAC_1_SQRT_2;
    let lower = CF::min_of(vec![
        CF::compose(ell.clone(), CF::rescaled_argument(sub.alpha_o_lower.clone(), half)),
        CF::rescaled_argument(sub.alpha_c_lower.clone(), half),
    ]);
    let upper = CF::sum_of(vec![
        CF::compose(ell.clone(), sub.alpha_o_upper.clone()),
        sub.alpha_c_upper.clone(),
    ]);
    (lower, upper)
}

fn compose_mode(idx: usize, sub: SubsystemCertificate) -> Result<ModeCertificate> {
    let nu_bar = build_nu_bar(&sub)?;
    let (nu, ell) = compose_vp(&nu_bar).map_err(|source| CertError::Kfun { mode: idx, source })?;
    if matches!(ell, CF::Zero) {
        return Err(CertError::AssumptionViolation(format!(
            "mode {idx}: vanishing coupling leaves V_p without an observer term"
        )));
    }
    let (alpha, gamma, theta) = build_rates(&sub, &nu, &ell);
    let (alpha_lower, alpha_upper) = sandwich(&sub, &ell);
    Ok(ModeCertificate {
        sub,
        nu_bar,
        nu,
        ell,
        alpha,
        gamma,
        theta,
        alpha_lower,
        alpha_upper,
    })
}

/// `s ↦ k1(s) ⊕ k2(s)` for identity jumps: the maximum when both are power
/// laws of a common exponent `m ≥ 1` (superadditivity), the sum otherwise.
fn combine_identity_terms(k1: CF, k2: CF) -> CF {
    match (k1.as_power_law(), k2.as_power_law()) {
        (Some((a1, m1)), Some((a2, m2))) if m1 == m2 && m1 >= 1.0 => CF::power(a1.max(a2), m1),
        _ => CF::sum_of(vec![k1, k2]),
    }
}

/// Cross-mode jump gains `(χ, ρ)`.
///
/// For identity jump maps the bound uses the separate lower bounds
/// `ℓ_p(α̲_{o,p}(|e|))` and `α̲_{c,p}(|x|)` of `V_p`, which for quadratic data
/// recovers the eigenvalue-ratio gain. Otherwise the generic composition
/// through `α̲_p⁻¹` and the jump growth bounds is used.
pub fn build_jump_gains(modes: &[ModeCertificate], jumps: &JumpBounds) -> (CF, CF) {
    let mut chis = Vec::new();
    for p in modes {
        for q in modes {
            let term = if jumps.is_identity() {
                let k1 = CF::compose(
                    CF::compose(q.ell.clone(), q.sub.alpha_o_upper.clone()),
                    CF::inverse(CF::compose(p.ell.clone(), p.sub.alpha_o_lower.clone())),
                );
                let k2 = CF::compose(
                    q.sub.alpha_c_upper.clone(),
                    CF::inverse(p.sub.alpha_c_lower.clone()),
                );
                combine_identity_terms(k1, k2)
            } else {
                let back = CF::inverse(p.alpha_lower.clone());
                CF::sum_of(vec![
                    CF::compose(
                        CF::compose(q.ell.clone(), q.sub.alpha_o_upper.clone()),
                        CF::compose(CF::scaled(2.0, jumps.alpha_hat_o.clone()), back.clone()),
                    ),
                    CF::compose(
                        q.sub.alpha_c_upper.clone(),
                        CF::compose(jumps.alpha_hat_c.clone(), back),
                    ),
                ])
            };
            chis.push(term);
        }
    }
    let rhos = modes
        .iter()
        .map(|q| {
            CF::compose(
                CF::compose(q.ell.clone(), q.sub.alpha_o_upper.clone()),
                CF::scaled(2.0, jumps.rho_hat_o.clone()),
            )
        })
        .collect();
    (CF::max_of(chis), CF::max_of(rhos))
}

/// Full composition for a family of subsystem certificates.
pub fn compose_cascade(subs: Vec<SubsystemCertificate>, jumps: &JumpBounds) -> Result<CascadeCertificate> {
    if subs.is_empty() {
        return Err(CertError::Inconsistent("no modes".into()));
    }
    let modes: Vec<ModeCertificate> = subs
        .into_iter()
        .enumerate()
        .map(|(i, s)| compose_mode(i, s))
        .collect::<Result<_>>()?;
    let (chi, rho) = build_jump_gains(&modes, jumps);
    Ok(CascadeCertificate { modes, chi, rho })
}

/// Subsystem data carried by a quadratic certificate.
pub fn quadratic_subsystem(cert: &QuadraticCertificate) -> SubsystemCertificate {
    SubsystemCertificate {
        v_o: Arc::new(QuadraticForm::new(cert.p_o.clone())),
        v_c: Arc::new(QuadraticForm::new(cert.p_c.clone())),
        alpha_o_lower: CF::power(lambda_min(&cert.p_o), 2.0),
        alpha_o_upper: CF::power(lambda_max(&cert.p_o), 2.0),
        alpha_o: CF::linear(cert.a_o),
        gamma_o: CF::power(cert.gbar_o, 2.0),
        alpha_c_lower: CF::power(lambda_min(&cert.p_c), 2.0),
        alpha_c_upper: CF::power(lambda_max(&cert.p_c), 2.0),
        alpha_c: CF::linear(cert.a_c),
        gamma_c: if cert.gbar_c > 0.0 {
            CF::linear(cert.gbar_c)
        } else {
            CF::zero()
        },
    }
}

/// Cascade certificate of a linear family with identity jumps, using the
/// sharper quadratic decay rate `min{a_c, 0.75·a_o}` and the linear jump
/// gain computed from eigenvalue ratios.
pub fn linear_cascade_certificate(certs: &[QuadraticCertificate]) -> Result<CascadeCertificate> {
    let chibar = linear_synth::chibar(certs)?;
    let modes = certs
        .iter()
        .map(|c| {
            let sub = quadratic_subsystem(c);
            let nu = ScalarFn::constant(c.nu());
            let ell = CF::linear(c.nu());
            let theta = CF::power(2.0 * c.gbar_o / c.a_o, 2.0);
            let (alpha_lower, alpha_upper) = sandwich(&sub, &ell);
            ModeCertificate {
                sub,
                nu_bar: ScalarFn::constant(c.nu_bar),
                nu,
                ell,
                alpha: CF::linear(c.a_p()),
                gamma: CF::power(c.gamma_p(), 2.0),
                theta,
                alpha_lower,
                alpha_upper,
            }
        })
        .collect();
    Ok(CascadeCertificate {
        modes,
        chi: CF::linear(chibar),
        rho: CF::zero(),
    })
}

/// Shipped example systems.
pub mod builtin {
    use super::*;
    use nalgebra::dmatrix;

    /// `ẋ = −x + e`, `ė = −2e + d`.
    #[derive(Debug, Clone, Copy, Default)]
    pub struct ScalarCascade;

    impl CascadeDynamics for ScalarCascade {
        fn dims(&self) -> (usize, usize, usize) {
            (1, 1, 1)
        }

        fn n_modes(&self) -> usize {
            1
        }

        fn f_c(&self, _mode: usize, x: &[f64], e: &[f64], out: &mut [f64]) {
            out[0] = -x[0] + e[0];
        }

        fn f_o(&self, _mode: usize, e: &[f64], d: &[f64], out: &mut [f64]) {
            out[0] = -2.0 * e[0] + d[0];
        }
    }

    /// `V_c = x²`, `V_o = e²` with `α_o = 2s`, `γ_o = s²`, `α_c = s`, `γ_c = s`.
    pub fn scalar_cascade_subsystem() -> SubsystemCertificate {
        let unit = || Arc::new(QuadraticForm::new(dmatrix![1.0]));
        SubsystemCertificate {
            v_o: unit(),
            v_c: unit(),
            alpha_o_lower: CF::power(1.0, 2.0),
            alpha_o_upper: CF::power(1.0, 2.0),
            alpha_o: CF::linear(2.0),
            gamma_o: CF::power(1.0, 2.0),
            alpha_c_lower: CF::power(1.0, 2.0),
            alpha_c_upper: CF::power(1.0, 2.0),
            alpha_c: CF::linear(1.0),
            gamma_c: CF::linear(1.0),
        }
    }

    pub fn scalar_cascade_certificate() -> Result<CascadeCertificate> {
        compose_cascade(vec![scalar_cascade_subsystem()], &JumpBounds::identity())
    }

    /// Two-mode linear cascade with `n_c = n_o = 2`, `n_d = 1`.
    pub fn linear_two_mode() -> LinearCascade {
        LinearCascade {
            modes: vec![
                LinearCascadeMode {
                    a: dmatrix![-1.0, 1.0; 0.0, -2.0],
                    b: dmatrix![1.0, 0.0; 0.0, 1.0],
                    f: dmatrix![-2.0, 1.0; 0.0, -3.0],
                    g: dmatrix![0.0; 1.0],
                },
                LinearCascadeMode {
                    a: dmatrix![-2.0, 0.0; 1.0, -1.0],
                    b: dmatrix![0.0, 0.5; 0.5, 0.0],
                    f: dmatrix![-3.0, 0.0; 1.0, -2.0],
                    g: dmatrix![1.0; 0.0],
                },
            ],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::builtin::*;
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn scalar_cascade_weight_is_constant() {
        let nb = build_nu_bar(&scalar_cascade_subsystem()).unwrap();
        assert_eq!(nb.as_constant(), Some(0.5));
    }

    #[test]
    fn identical_gain_and_decay_give_unit_ratio() {
        let mut sub = scalar_cascade_subsystem();
        sub.gamma_c = sub.alpha_o.clone();
        assert_eq!(build_nu_bar(&sub).unwrap().as_constant(), Some(1.0));
    }

    #[test]
    fn vanishing_ratio_passes_origin_check() {
        let mut sub = scalar_cascade_subsystem();
        sub.gamma_c = CF::power(1.0, 2.0);
        sub.alpha_o = CF::linear(1.0);
        let nb = build_nu_bar(&sub).unwrap();
        for i in 1..=6 {
            let s = 10f64.powi(-i);
            assert!(close(nb.eval(s).unwrap(), s, 1e-15));
        }
    }

    #[test]
    fn blowing_up_ratio_fails_origin_check() {
        let mut sub = scalar_cascade_subsystem();
        sub.gamma_c = CF::power(1.0, 0.5);
        assert!(matches!(
            build_nu_bar(&sub),
            Err(CertError::AssumptionViolation(_))
        ));
        let tabled = ScalarFn::custom(|s: f64| 1.0 / s.sqrt());
        assert!(check_bounded_near_origin(&tabled).is_err());
    }

    #[test]
    fn scalar_cascade_composition() {
        let cert = scalar_cascade_certificate().unwrap();
        let m = &cert.modes[0];
        assert_eq!(m.nu.as_constant(), Some(2.0));
        assert_eq!(m.ell, CF::linear(2.0));
        for &(x, e) in &[(1.0, 1.0), (0.3, -2.0), (-4.0, 0.5)] {
            assert!(close(m.value(&[x], &[e]), 2.0 * e * e + x * x, 1e-15));
        }
        assert_eq!(m.value(&[0.0], &[0.0]), 0.0);
    }

    #[test]
    fn scalar_cascade_gradient_matches_differences() {
        let cert = scalar_cascade_certificate().unwrap();
        let m = &cert.modes[0];
        let (gx, ge) = m.gradient(&[1.0], &[1.0]);
        let h = 1e-6;
        let fd_x = (m.value(&[1.0 + h], &[1.0]) - m.value(&[1.0 - h], &[1.0])) / (2.0 * h);
        let fd_e = (m.value(&[1.0], &[1.0 + h]) - m.value(&[1.0], &[1.0 - h])) / (2.0 * h);
        assert!(close(gx[0], fd_x, 1e-5) && close(ge[0], fd_e, 1e-5));
        assert!(close(gx[0], 2.0, 1e-15) && close(ge[0], 4.0, 1e-15));
    }

    #[test]
    fn scalar_cascade_rates() {
        let cert = scalar_cascade_certificate().unwrap();
        let m = &cert.modes[0];
        let grid = kfun::log_grid(1e-3, 1e3, 5);
        for &s in &grid {
            assert!(close(m.alpha.eval(s).unwrap(), s / 4.0, 1e-14));
        }
        for &s in &[0.5, 1.0, 2.0] {
            assert!(close(m.theta.eval(s).unwrap(), s * s, 1e-14));
            assert!(close(m.gamma.eval(s).unwrap(), 2.0 * s * s, 1e-14));
        }
        assert_eq!(m.alpha.eval(0.0).unwrap(), 0.0);
        assert_eq!(m.gamma.eval(0.0).unwrap(), 0.0);
    }

    #[test]
    fn identity_jumps_of_a_single_tight_mode() {
        let cert = scalar_cascade_certificate().unwrap();
        let (a, k) = cert.chi.as_power_law().unwrap();
        assert!(close(a, 1.0, 1e-15) && k == 1.0);
        assert_eq!(cert.rho, CF::zero());
    }

    #[test]
    fn generic_jump_gain_dominates_identity_gain() {
        let mut jumps = JumpBounds::identity();
        jumps.maps = JumpMaps::Custom {
            g_c: Arc::new(|x, _| x.to_vec()),
            g_o: Arc::new(|e, _| e.to_vec()),
        };
        let cert = compose_cascade(vec![scalar_cascade_subsystem()], &jumps).unwrap();
        for &s in &[0.1, 1.0, 10.0] {
            assert!(close(cert.chi.eval(s).unwrap(), 18.0 * s, 1e-12));
        }
    }

    #[test]
    fn linear_family_identity_gain_matches_eigenvalue_ratios() {
        let sys = linear_two_mode();
        let certs: Vec<_> = sys
            .modes
            .iter()
            .map(|m| linear_synth::quad_cert_rates(m, None, None).unwrap())
            .collect();
        let lin = linear_cascade_certificate(&certs).unwrap();
        let generic = compose_cascade(
            certs.iter().map(quadratic_subsystem).collect(),
            &JumpBounds::identity(),
        )
        .unwrap();
        let (a, _) = lin.chi.as_power_law().unwrap();
        let (b, k) = generic.chi.as_power_law().unwrap();
        assert_eq!(k, 1.0);
        assert!(close(a, b, 1e-12), "{a} vs {b}");
        assert!(a > 1.0);
    }

    #[test]
    fn symmetric_pair_attains_same_gain() {
        let sys = linear_two_mode();
        let c = linear_synth::quad_cert_rates(&sys.modes[0], None, None).unwrap();
        let one = compose_cascade(vec![quadratic_subsystem(&c)], &JumpBounds::identity()).unwrap();
        let two = compose_cascade(
            vec![quadratic_subsystem(&c), quadratic_subsystem(&c)],
            &JumpBounds::identity(),
        )
        .unwrap();
        assert_eq!(one.chi, two.chi);
    }
}
