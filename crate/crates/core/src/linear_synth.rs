//! Quadratic certificates for linear cascades.
//!
//! Lyapunov equations `AᵀP + PA = −Q` are solved densely through the
//! Kronecker form `(I ⊗ Aᵀ + Aᵀ ⊗ I) vec(P) = −vec(Q)` with one step of
//! iterative refinement. Matrix norms in gain formulas are spectral norms.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinearError {
    #[error("matrix is not Hurwitz (spectral abscissa {abscissa})")]
    NotHurwitz { abscissa: f64 },
    #[error("Lyapunov solve is ill-conditioned (relative residual {residual:e})")]
    IllConditioned { residual: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("weight matrix must be symmetric positive definite")]
    NotPositiveDefinite,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("mode {mode} has no coupling from the estimation error; its cascade weight vanishes")]
    DegenerateCoupling { mode: usize },
}

pub type Result<T> = std::result::Result<T, LinearError>;

/// Row-major serialization for dense matrices.
pub mod matrix_rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
        (0..m.nrows())
            .map(|i| m.row(i).iter().copied().collect())
            .collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err("ragged matrix rows".into());
        }
        Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
    }

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Largest real part among the eigenvalues.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn is_hurwitz(a: &DMatrix<f64>) -> bool {
    spectral_abscissa(a) < 0.0
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

fn sym_eigen_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = m.clone().symmetric_eigen();
    let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

pub fn lambda_min(m: &DMatrix<f64>) -> f64 {
    sym_eigen_extremes(m).0
}

pub fn lambda_max(m: &DMatrix<f64>) -> f64 {
    sym_eigen_extremes(m).1
}

/// `‖AᵀP + PA + Q‖_F`.
pub fn lyapunov_residual(a: &DMatrix<f64>, p: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    (a.transpose() * p + p * a + q).norm()
}

fn check_spd(q: &DMatrix<f64>) -> Result<()> {
    if !q.is_square() || (q - q.transpose()).norm() > 1e-12 * (1.0 + q.norm()) {
        return Err(LinearError::NotPositiveDefinite);
    }
    if lambda_min(q) <= 0.0 {
        return Err(LinearError::NotPositiveDefinite);
    }
    Ok(())
}

/// Solve `AᵀP + PA = −Q` for symmetric positive-definite `P`.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if !a.is_square() || q.shape() != (n, n) {
        return Err(LinearError::Dimension(format!(
            "A is {:?}, Q is {:?}",
            a.shape(),
            q.shape()
        )));
    }
    check_spd(q)?;
    let abscissa = spectral_abscissa(a);
    if abscissa.is_nan() || abscissa >= 0.0 {
        return Err(LinearError::NotHurwitz { abscissa });
    }
    let at = a.transpose();
    let eye = DMatrix::<f64>::identity(n, n);
    let k = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = -nalgebra::DVector::from_column_slice(q.as_slice());
    let lu = k.clone().lu();
    let mut x = lu.solve(&rhs).ok_or(LinearError::IllConditioned {
        residual: f64::INFINITY,
    })?;
    let r = &rhs - &k * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    let p = DMatrix::from_column_slice(n, n, x.as_slice());
    let p = 0.5 * (&p + p.transpose());
    let residual = lyapunov_residual(a, &p, q) / q.norm();
    if !(residual <= 1e-10) {
        return Err(LinearError::IllConditioned { residual });
    }
    if lambda_min(&p) <= 0.0 {
        return Err(LinearError::IllConditioned { residual });
    }
    Ok(p)
}

/// One mode of `ẋ = A x + B e`, `ė = F e + G d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearCascadeMode {
    #[serde(with = "matrix_rows")]
    pub a: DMatrix<f64>,
    #[serde(with = "matrix_rows")]
    pub b: DMatrix<f64>,
    #[serde(with = "matrix_rows")]
    pub f: DMatrix<f64>,
    #[serde(with = "matrix_rows")]
    pub g: DMatrix<f64>,
}

impl LinearCascadeMode {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, f: DMatrix<f64>, g: DMatrix<f64>) -> Result<Self> {
        let mode = Self { a, b, f, g };
        mode.check_dims()?;
        Ok(mode)
    }

    pub fn check_dims(&self) -> Result<()> {
        let (nc, no) = (self.a.nrows(), self.f.nrows());
        let ok = self.a.is_square()
            && self.f.is_square()
            && self.b.shape() == (nc, no)
            && self.g.nrows() == no;
        if ok {
            Ok(())
        } else {
            Err(LinearError::Dimension(format!(
                "A {:?}, B {:?}, F {:?}, G {:?}",
                self.a.shape(),
                self.b.shape(),
                self.f.shape(),
                self.g.shape()
            )))
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.a.nrows(), self.f.nrows(), self.g.ncols())
    }
}

/// Quadratic ISS data `V_c = xᵀP_c x`, `V_o = eᵀP_o e` for one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticCertificate {
    #[serde(with = "matrix_rows")]
    pub p_c: DMatrix<f64>,
    #[serde(with = "matrix_rows")]
    pub p_o: DMatrix<f64>,
    #[serde(with = "matrix_rows")]
    pub q_c: DMatrix<f64>,
    #[serde(with = "matrix_rows")]
    pub q_o: DMatrix<f64>,
    /// decay rate of `V_c`
    pub a_c: f64,
    /// decay rate of `V_o`
    pub a_o: f64,
    /// gain of `V_o` in the `V_c` inequality
    pub gbar_c: f64,
    /// gain of `|d|²` in the `V_o` inequality
    pub gbar_o: f64,
    /// `gbar_c / a_o`
    pub nu_bar: f64,
}

impl QuadraticCertificate {
    /// Weight of `V_o` inside the composed function, `4·nu_bar`.
    pub fn nu(&self) -> f64 {
        4.0 * self.nu_bar
    }

    /// Decay rate of the composed quadratic function.
    pub fn a_p(&self) -> f64 {
        self.a_c.min(0.75 * self.a_o)
    }

    /// Coefficient of `|d|²` in the composed decay inequality.
    pub fn gamma_p(&self) -> f64 {
        self.nu() * self.gbar_o
    }
}

fn default_weight(q: Option<&DMatrix<f64>>, n: usize) -> DMatrix<f64> {
    q.cloned().unwrap_or_else(|| DMatrix::identity(n, n))
}

/// Certificate rates of one mode; `None` weights default to the identity.
pub fn quad_cert_rates(
    mode: &LinearCascadeMode,
    q_c: Option<&DMatrix<f64>>,
    q_o: Option<&DMatrix<f64>>,
) -> Result<QuadraticCertificate> {
    mode.check_dims()?;
    let (nc, no, _) = mode.dims();
    let q_c = default_weight(q_c, nc);
    let q_o = default_weight(q_o, no);
    let p_c = solve_lyapunov(&mode.a, &q_c)?;
    let p_o = solve_lyapunov(&mode.f, &q_o)?;
    let (lq_c, lq_o) = (lambda_min(&q_c), lambda_min(&q_o));
    let a_c = lq_c / (2.0 * lambda_max(&p_c));
    let a_o = lq_o / (2.0 * lambda_max(&p_o));
    let gbar_o = 2.0 * spectral_norm(&(&p_o * &mode.g)).powi(2) / lq_o;
    // the 1/λ_min(P_o) factor converts |e|² into V_o(e)
    let gbar_c = 2.0 * spectral_norm(&(&p_c * &mode.b)).powi(2) / (lq_c * lambda_min(&p_o));
    Ok(QuadraticCertificate {
        p_c,
        p_o,
        q_c,
        q_o,
        a_c,
        a_o,
        gbar_c,
        gbar_o,
        nu_bar: gbar_c / a_o,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorollaryBound {
    /// common decay rate `min_p a_p`
    pub a: f64,
    /// linear jump gain
    pub chibar: f64,
    /// `ln(chibar)/a`
    pub tau_a_min: f64,
}

/// Jump gain of the quadratic cascade under identity jump maps.
pub fn chibar(certs: &[QuadraticCertificate]) -> Result<f64> {
    if let Some(mode) = certs.iter().position(|c| c.nu_bar <= 0.0) {
        return Err(LinearError::DegenerateCoupling { mode });
    }
    let mut best = f64::NEG_INFINITY;
    for p in certs {
        for q in certs {
            let o = (q.nu() * lambda_max(&q.p_o)) / (p.nu() * lambda_min(&p.p_o));
            let c = lambda_max(&q.p_c) / lambda_min(&p.p_c);
            best = best.max(o.max(c));
        }
    }
    Ok(best)
}

pub fn corollary_bound(certs: &[QuadraticCertificate]) -> Result<CorollaryBound> {
    if certs.is_empty() {
        return Err(LinearError::Config("no modes".into()));
    }
    let a = certs
        .iter()
        .map(QuadraticCertificate::a_p)
        .fold(f64::INFINITY, f64::min);
    let chibar = chibar(certs)?;
    Ok(CorollaryBound {
        a,
        chibar,
        tau_a_min: chibar.ln().max(0.0) / a,
    })
}

/// Linearized data of one observer-based output-feedback mode:
/// `ẋ = A_cl x − BK (e + d_z)`, `ė = F e + L d_y`, `y = C x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledLinearMode {
    #[serde(with = "matrix_rows")]
    pub a_cl: DMatrix<f64>,
    #[serde(with = "matrix_rows")]
    pub f: DMatrix<f64>,
    #[serde(with = "matrix_rows")]
    pub l: DMatrix<f64>,
    #[serde(with = "matrix_rows")]
    pub bk: DMatrix<f64>,
    #[serde(with = "matrix_rows")]
    pub c: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledModeCertificate {
    #[serde(with = "matrix_rows")]
    pub p_c: DMatrix<f64>,
    #[serde(with = "matrix_rows")]
    pub p_o: DMatrix<f64>,
    pub a_c: f64,
    pub a_o: f64,
    pub gbar_o: f64,
    pub gbar_c: f64,
    pub c_norm: f64,
}

impl SampledModeCertificate {
    pub fn lambda_min_pc(&self) -> f64 {
        lambda_min(&self.p_c)
    }

    pub fn lambda_min_po(&self) -> f64 {
        lambda_min(&self.p_o)
    }
}

pub fn sampled_mode_certificate(
    mode: &SampledLinearMode,
    q_c: Option<&DMatrix<f64>>,
    q_o: Option<&DMatrix<f64>>,
) -> Result<SampledModeCertificate> {
    let (n, no) = (mode.a_cl.nrows(), mode.f.nrows());
    if mode.bk.shape() != (n, no) || mode.l.nrows() != no || mode.c.ncols() != n {
        return Err(LinearError::Dimension("sampled-loop matrices".into()));
    }
    let q_c = default_weight(q_c, n);
    let q_o = default_weight(q_o, no);
    let p_c = solve_lyapunov(&mode.a_cl, &q_c)?;
    let p_o = solve_lyapunov(&mode.f, &q_o)?;
    let (lq_c, lq_o) = (lambda_min(&q_c), lambda_min(&q_o));
    let lpo = lambda_min(&p_o);
    Ok(SampledModeCertificate {
        a_c: lq_c / (2.0 * lambda_max(&p_c)),
        a_o: lq_o / (2.0 * lambda_max(&p_o)),
        gbar_o: 2.0 * spectral_norm(&(&p_o * &mode.l)).powi(2) / lq_o,
        gbar_c: 4.0 * spectral_norm(&(&p_c * &mode.bk)).powi(2) / lq_c * (1.0f64).max(1.0 / lpo),
        c_norm: spectral_norm(&mode.c),
        p_c,
        p_o,
    })
}

/// How the filter and trigger gains are derived from the certificates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainRecipe {
    /// The closed-form expressions with their nominal constants.
    Nominal,
    /// Gains that satisfy the design inequalities for quadratic filters with
    /// square-root triggers: the trigger coefficients sit on the boundary of
    /// the inequality at `λ = ε`, the output injection is bounded by the
    /// plant decay, and the cascade weight dominates `4·gbar_c/a_o`.
    #[default]
    Consistent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledModeGains {
    pub a_o: f64,
    pub a_c: f64,
    pub gbar_o: f64,
    pub gbar_c: f64,
    /// weight of `V_o` in the composed certificate
    pub nu: f64,
    pub rho_o: f64,
    pub rho_c: f64,
    pub mu_o: f64,
    pub mu_c: f64,
    pub lambda_min_pc: f64,
    pub lambda_max_pc: f64,
    pub lambda_min_po: f64,
    pub lambda_max_po: f64,
    pub c_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledGainPack {
    pub epsilon: f64,
    pub recipe: GainRecipe,
    pub modes: Vec<SampledModeGains>,
    pub chibar: f64,
    /// `ln(chibar)/ε`
    pub tau_a_min: f64,
}

/// Filter, trigger and dwell-time data for the event-triggered loop.
pub fn synth_sampled_gains(
    certs: &[SampledModeCertificate],
    epsilon: f64,
    recipe: GainRecipe,
) -> Result<SampledGainPack> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(LinearError::Config(format!(
            "epsilon must lie in (0, 0.5), got {epsilon}"
        )));
    }
    if certs.is_empty() {
        return Err(LinearError::Config("no modes".into()));
    }
    let eps = epsilon;
    let modes: Vec<SampledModeGains> = certs
        .iter()
        .map(|c| {
            let (lpc, lpo) = (lambda_min(&c.p_c), lambda_min(&c.p_o));
            let nominal_nu = 4.0 * c.gbar_c / lpo;
            let nu = match recipe {
                GainRecipe::Nominal => nominal_nu,
                GainRecipe::Consistent => nominal_nu.max(4.0 * c.gbar_c / c.a_o),
            };
            let mu_o_nominal = (1.0 - eps) * c.a_o / ((1.0 + nu) * c.gbar_o);
            let mu_c_nominal = (1.0 - eps) * c.a_c / (2.0 * c.gbar_c);
            let c2 = c.c_norm * c.c_norm;
            let (rho_o, mu_o, mu_c) = match recipe {
                GainRecipe::Nominal => ((1.0 - 2.0 * eps) * lpo / c2, mu_o_nominal, mu_c_nominal),
                GainRecipe::Consistent => (
                    (1.0 - 2.0 * eps) * c.a_c * lpc / (2.0 * c2),
                    mu_o_nominal.sqrt(),
                    mu_c_nominal.sqrt(),
                ),
            };
            SampledModeGains {
                a_o: c.a_o,
                a_c: c.a_c,
                gbar_o: c.gbar_o,
                gbar_c: c.gbar_c,
                nu,
                rho_o,
                rho_c: ((1.0 - eps) * c.gbar_c).min(eps * c.a_c * lpc),
                mu_o,
                mu_c,
                lambda_min_pc: lpc,
                lambda_max_pc: lambda_max(&c.p_c),
                lambda_min_po: lpo,
                lambda_max_po: lambda_max(&c.p_o),
                c_norm: c.c_norm,
            }
        })
        .collect();
    let mut chibar = f64::NEG_INFINITY;
    for p in &modes {
        for q in &modes {
            let num = p.nu * p.lambda_max_po + p.lambda_max_pc;
            let den = q.nu * q.lambda_min_po + q.lambda_min_pc;
            chibar = chibar.max(num / den);
        }
    }
    Ok(SampledGainPack {
        epsilon,
        recipe,
        tau_a_min: chibar.ln().max(0.0) / epsilon,
        modes,
        chibar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use proptest::prelude::*;

    #[test]
    fn diagonal_balance() {
        let a = -DMatrix::<f64>::identity(2, 2);
        let q = 2.0 * DMatrix::<f64>::identity(2, 2);
        let p = solve_lyapunov(&a, &q).unwrap();
        assert!((p - DMatrix::<f64>::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn companion_matrix_solution() {
        let a = dmatrix![0.0, 1.0; -2.0, -3.0];
        let q = DMatrix::<f64>::identity(2, 2);
        let p = solve_lyapunov(&a, &q).unwrap();
        // oracle: substitute back
        let back = a.transpose() * &p + &p * &a;
        for (x, y) in back.iter().zip((-q).iter()) {
            assert!((x - y).abs() < 1e-10);
        }
        let expected = dmatrix![1.25, 0.25; 0.25, 0.25];
        assert!((p - expected).norm() < 1e-12);
    }

    #[test]
    fn unstable_matrix_is_rejected() {
        let a = dmatrix![0.1, 0.0; 0.0, -1.0];
        let q = DMatrix::<f64>::identity(2, 2);
        assert!(matches!(
            solve_lyapunov(&a, &q),
            Err(LinearError::NotHurwitz { .. })
        ));
    }

    fn scalar_mode() -> LinearCascadeMode {
        LinearCascadeMode::new(
            dmatrix![-1.0],
            dmatrix![1.0],
            dmatrix![-2.0],
            dmatrix![1.0],
        )
        .unwrap()
    }

    #[test]
    fn scalar_rates_by_hand() {
        let cert = quad_cert_rates(&scalar_mode(), Some(&dmatrix![2.0]), Some(&dmatrix![4.0])).unwrap();
        assert!((cert.p_c[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((cert.p_o[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((cert.a_c - 1.0).abs() < 1e-14);
        assert!((cert.a_o - 2.0).abs() < 1e-14);
        assert!((cert.gbar_o - 0.5).abs() < 1e-14);
        assert!((cert.gbar_c - 1.0).abs() < 1e-14);
        assert!((cert.nu_bar - 0.5).abs() < 1e-14);
    }

    #[test]
    fn uncoupled_mode_has_zero_weight() {
        let mut m = scalar_mode();
        m.b = dmatrix![0.0];
        let cert = quad_cert_rates(&m, None, None).unwrap();
        assert_eq!(cert.gbar_c, 0.0);
        assert_eq!(cert.nu_bar, 0.0);
        assert!(matches!(
            corollary_bound(&[cert]),
            Err(LinearError::DegenerateCoupling { mode: 0 })
        ));
    }

    #[test]
    fn single_scalar_mode_needs_no_dwell_time() {
        let cert = quad_cert_rates(&scalar_mode(), None, None).unwrap();
        let bound = corollary_bound(&[cert.clone()]).unwrap();
        assert!((bound.chibar - 1.0).abs() < 1e-14);
        assert_eq!(bound.tau_a_min, 0.0);
        let twin = corollary_bound(&[cert.clone(), cert]).unwrap();
        assert_eq!(twin.chibar, bound.chibar);
    }

    #[test]
    fn doubled_certificate_pair() {
        let one = quad_cert_rates(&scalar_mode(), Some(&dmatrix![2.0]), Some(&dmatrix![4.0])).unwrap();
        let mut two = one.clone();
        two.p_c *= 2.0;
        two.p_o *= 2.0;
        // oracle: the four ordered pairs by hand
        let ratio = |p: &QuadraticCertificate, q: &QuadraticCertificate| {
            let o = q.nu() * q.p_o[(0, 0)] / (p.nu() * p.p_o[(0, 0)]);
            let c = q.p_c[(0, 0)] / p.p_c[(0, 0)];
            o.max(c)
        };
        let pairs = [(&one, &one), (&one, &two), (&two, &one), (&two, &two)];
        let expected = pairs.iter().map(|(p, q)| ratio(p, q)).fold(0.0, f64::max);
        let bound = corollary_bound(&[one.clone(), two]).unwrap();
        assert!((bound.chibar - 2.0).abs() < 1e-14);
        assert_eq!(bound.chibar, expected);
        assert!((bound.tau_a_min - 2f64.ln() / one.a_p()).abs() < 1e-14);
    }

    #[test]
    fn nominal_output_injection_gain() {
        let cert = SampledModeCertificate {
            p_c: dmatrix![1.0],
            p_o: dmatrix![1.0],
            a_c: 1.0,
            a_o: 1.0,
            gbar_o: 1.0,
            gbar_c: 1.0,
            c_norm: 1.0,
        };
        let pack = synth_sampled_gains(&[cert.clone()], 0.25, GainRecipe::Nominal).unwrap();
        assert!((pack.modes[0].rho_o - 0.5).abs() < 1e-15);
        let near_half = synth_sampled_gains(&[cert.clone()], 0.5 - 1e-9, GainRecipe::Nominal).unwrap();
        assert!(near_half.modes[0].rho_o < 1e-8);
        assert!(synth_sampled_gains(&[cert], 0.5, GainRecipe::Nominal).is_err());
    }

    fn random_hurwitz(n: usize, entries: &[f64]) -> DMatrix<f64> {
        let m = DMatrix::from_iterator(n, n, entries.iter().copied().take(n * n));
        let shift = spectral_abscissa(&m).max(0.0) + 0.5;
        m - shift * DMatrix::<f64>::identity(n, n)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn residual_meets_target(n in 1usize..=6, entries in prop::collection::vec(-2.0f64..2.0, 36)) {
            let a = random_hurwitz(n, &entries);
            let q = DMatrix::<f64>::identity(n, n);
            let p = solve_lyapunov(&a, &q).unwrap();
            prop_assert!(lyapunov_residual(&a, &p, &q) <= 1e-10 * q.norm());
            prop_assert!(lambda_min(&p) > 0.0);
        }

        #[test]
        fn bound_is_scale_invariant(c in 0.1f64..10.0, e in prop::collection::vec(-1.0f64..1.0, 8)) {
            let mk = |shift: f64| LinearCascadeMode::new(
                random_hurwitz(2, &e[..4]) - shift * DMatrix::<f64>::identity(2, 2),
                dmatrix![1.0, 0.0; 0.5, 1.0],
                random_hurwitz(2, &e[4..]),
                dmatrix![1.0; 0.0],
            ).unwrap();
            let modes = [mk(0.0), mk(0.7)];
            let base: Vec<_> = modes.iter().map(|m| quad_cert_rates(m, None, None).unwrap()).collect();
            let q = c * DMatrix::<f64>::identity(2, 2);
            let scaled: Vec<_> = modes.iter().map(|m| quad_cert_rates(m, Some(&q), Some(&q)).unwrap()).collect();
            let (b0, b1) = (corollary_bound(&base).unwrap(), corollary_bound(&scaled).unwrap());
            prop_assert!((b0.chibar - b1.chibar).abs() <= 1e-8 * b0.chibar);
            prop_assert!((b0.a - b1.a).abs() <= 1e-8 * b0.a);
        }
    }
}
