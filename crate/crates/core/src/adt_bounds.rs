//! Dwell-time thresholds and the hybrid Lyapunov function.
//!
//! With `ψ ≤ min{c0·s, α_p(s)}` and `I(s) = ∫_1^s dr/ψ(r)`, the threshold is
//!
//! ```text
//! ζ* = sup_{s>0} I((1+ε)·χ(s)) − I(s)
//! ```
//!
//! and `W = exp(2·c0·ζ·τ)·φ(V)` with `φ(s) = exp(2·c0·I(s))`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kfun::{self, ComparisonFunction as CF, KfunError};
use crate::quad::{self, QuadError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdtError {
    #[error("cannot build ψ: {0}")]
    Construction(String),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error(transparent)]
    Kfun(#[from] KfunError),
    #[error("dwell-time bound diverges towards s = {towards}")]
    DivergentBound { towards: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, AdtError>;

const REL_TOL: f64 = 1e-13;
const CACHE_LO: f64 = 1e-12;
const CACHE_HI: f64 = 1e12;
const CACHE_PER_DECADE: usize = 40;

/// Lower envelope `min_i a_i·s^{k_i}` stored as consecutive pieces
/// `(start, a, k)`, the first starting at 0.
#[derive(Debug, Clone, PartialEq)]
struct PowerEnvelope {
    pieces: Vec<(f64, f64, f64)>,
}

impl PowerEnvelope {
    fn from_laws(mut laws: Vec<(f64, f64)>) -> Option<Self> {
        if laws.is_empty() || laws.iter().any(|&(a, k)| !(a > 0.0 && k > 0.0)) {
            return None;
        }
        // one line per exponent, ordered by decreasing exponent
        laws.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.total_cmp(&y.0)));
        laws.dedup_by(|x, y| x.1 == y.1);
        let mut pieces = vec![(0.0, laws[0].0, laws[0].1)];
        let mut cur = 0usize;
        let mut start_u = f64::NEG_INFINITY;
        loop {
            let (ac, kc) = laws[cur];
            let next = laws
                .iter()
                .enumerate()
                .skip(cur + 1)
                .map(|(j, &(aj, kj))| (j, (aj.ln() - ac.ln()) / (kc - kj)))
                .filter(|&(_, u)| u > start_u)
                .min_by(|x, y| x.1.total_cmp(&y.1).then(y.0.cmp(&x.0)));
            match next {
                Some((j, u)) => {
                    pieces.push((u.exp(), laws[j].0, laws[j].1));
                    cur = j;
                    start_u = u;
                }
                None => break,
            }
        }
        Some(Self { pieces })
    }

    fn eval(&self, s: f64) -> f64 {
        let i = self.pieces.partition_point(|p| p.0 <= s).max(1) - 1;
        let (_, a, k) = self.pieces[i];
        a * s.powf(k)
    }

    /// `∫_lo^hi dr/ψ(r)` for `0 < lo ≤ hi`.
    fn reciprocal_integral(&self, lo: f64, hi: f64) -> f64 {
        let mut total = 0.0;
        for (i, &(start, a, k)) in self.pieces.iter().enumerate() {
            let end = self.pieces.get(i + 1).map_or(f64::INFINITY, |p| p.0);
            let (l, h) = (lo.max(start), hi.min(end));
            if h <= l {
                continue;
            }
            total += if k == 1.0 {
                (h / l).ln() / a
            } else {
                (h.powf(1.0 - k) - l.powf(1.0 - k)) / (a * (1.0 - k))
            };
        }
        total
    }
}

fn power_laws_of(f: &CF) -> Option<Vec<(f64, f64)>> {
    if let Some(law) = f.as_power_law() {
        return Some(vec![law]);
    }
    match f {
        CF::PointwiseMin { parts } => parts.iter().map(CF::as_power_law).collect(),
        _ => None,
    }
}

/// Cumulative `∫ dr/ψ` on a fixed log grid.
#[derive(Debug, Clone, PartialEq)]
struct IntegralTable {
    grid: Vec<f64>,
    cum: Vec<f64>,
}

/// Rate function `ψ` together with the machinery for `∫ dr/ψ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiFunction {
    pub psi: CF,
    pub c0: f64,
    envelope: Option<PowerEnvelope>,
    table: Option<IntegralTable>,
}

/// How `∫ dr/ψ` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegralMode {
    /// Exact piecewise-power formula when available, cached quadrature otherwise.
    #[default]
    Auto,
    /// Cached quadrature on a log grid.
    Tabulated,
    /// Adaptive quadrature for every call.
    Direct,
}

/// `ψ = min{c0·s, α_1, …, α_P}`.
pub fn build_psi(alphas: &[CF], c0: f64) -> Result<PsiFunction> {
    let mut parts = vec![CF::linear(c0)];
    parts.extend(alphas.iter().cloned());
    PsiFunction::new(CF::min_of(parts), c0)
}

impl PsiFunction {
    /// Explicit `ψ`; only strict monotonicity is checked.
    pub fn new(psi: CF, c0: f64) -> Result<Self> {
        if !(c0 > 0.0 && c0.is_finite()) {
            return Err(AdtError::Construction(format!("c0 must be positive, got {c0}")));
        }
        psi.validate()?;
        let envelope = power_laws_of(&psi).and_then(PowerEnvelope::from_laws);
        if envelope.is_none() {
            let grid = kfun::log_grid(1e-8, 1e8, 20);
            let mut prev = 0.0;
            for &s in &grid {
                let v = psi
                    .eval(s)
                    .map_err(|e| AdtError::Construction(format!("ψ({s}): {e}")))?;
                if !(v > prev) || !v.is_finite() {
                    return Err(AdtError::Construction(format!(
                        "ψ is not strictly increasing near s = {s}"
                    )));
                }
                prev = v;
            }
        }
        let mut out = PsiFunction {
            psi,
            c0,
            envelope,
            table: None,
        };
        out.table = Some(out.build_table()?);
        Ok(out)
    }

    pub fn eval(&self, s: f64) -> Result<f64> {
        match &self.envelope {
            Some(env) if s >= 0.0 => Ok(env.eval(s)),
            _ => Ok(self.psi.eval(s)?),
        }
    }

    /// `(a, k)` when `ψ(s) = a·s^k` on all of `[0, ∞)`.
    pub fn as_power_law(&self) -> Option<(f64, f64)> {
        self.psi.as_power_law()
    }

    fn direct(&self, lo: f64, hi: f64) -> Result<f64> {
        Ok(quad::integrate_log(
            |r| 1.0 / self.psi.eval(r).unwrap_or(f64::NAN),
            lo,
            hi,
            REL_TOL,
            0.0,
        )?)
    }

    fn build_table(&self) -> Result<IntegralTable> {
        let grid = kfun::log_grid(CACHE_LO, CACHE_HI, CACHE_PER_DECADE);
        let cells: Vec<f64> = grid
            .par_windows(2)
            .map(|w| self.direct(w[0], w[1]))
            .collect::<Result<_>>()?;
        // anchored at s = 1 so that moderate arguments avoid cancellation
        let one = grid.partition_point(|&g| g < 1.0);
        let mut cum = vec![0.0; grid.len()];
        for i in one + 1..grid.len() {
            cum[i] = cum[i - 1] + cells[i - 1];
        }
        for i in (0..one).rev() {
            cum[i] = cum[i + 1] - cells[i];
        }
        let shift = if (grid[one] - 1.0).abs() > 0.0 { self.direct(1.0, grid[one])? } else { 0.0 };
        cum.iter_mut().for_each(|c| *c += shift);
        Ok(IntegralTable { grid, cum })
    }

    /// `∫_lo^hi dr/ψ` for `0 < lo < hi` through the cache: partial cells at
    /// both ends, whole cells in between.
    fn tabulated(&self, lo: f64, hi: f64) -> Result<f64> {
        let t = self.table.as_ref().expect("table built at construction");
        let n = t.grid.len();
        let i = t.grid.partition_point(|&g| g <= lo);
        let j = t.grid.partition_point(|&g| g < hi);
        if i >= j || i == 0 || j == n {
            return self.direct(lo, hi);
        }
        // lo < grid[i] ≤ grid[j-1] < hi
        let inner = t.cum[j - 1] - t.cum[i];
        Ok(self.direct(lo, t.grid[i])? + inner + self.direct(t.grid[j - 1], hi)?)
    }

    /// `∫_lo^hi dr/ψ(r)` for positive limits (signed when `hi < lo`).
    pub fn reciprocal_integral(&self, lo: f64, hi: f64, mode: IntegralMode) -> Result<f64> {
        if !(lo > 0.0 && hi > 0.0) {
            return Err(AdtError::Config(format!(
                "integration limits must be positive, got [{lo}, {hi}]"
            )));
        }
        if lo == hi {
            return Ok(0.0);
        }
        if hi < lo {
            return self.reciprocal_integral(hi, lo, mode).map(|v| -v);
        }
        match (mode, &self.envelope) {
            (IntegralMode::Auto, Some(env)) => Ok(env.reciprocal_integral(lo, hi)),
            (IntegralMode::Direct, _) => self.direct(lo, hi),
            _ => self.tabulated(lo, hi),
        }
    }

    /// Checks `ψ ≤ α_p` for every supplied rate on a log grid.
    pub fn is_below(&self, alphas: &[CF]) -> bool {
        kfun::log_grid(1e-8, 1e8, 10).iter().all(|&s| {
            let v = self.eval(s).unwrap_or(f64::INFINITY);
            v <= self.c0 * s * (1.0 + 1e-14)
                && alphas
                    .iter()
                    .all(|a| a.eval(s).is_ok_and(|av| v <= av * (1.0 + 1e-14)))
        })
    }
}

/// `φ(s) = exp(2·c0·∫_1^s dr/ψ)`, `φ(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Phi {
    pub psi: PsiFunction,
    pub mode: IntegralMode,
}

pub fn build_phi(psi: PsiFunction) -> Phi {
    Phi {
        psi,
        mode: IntegralMode::Auto,
    }
}

impl Phi {
    pub fn with_mode(mut self, mode: IntegralMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn eval(&self, s: f64) -> Result<f64> {
        if s.is_nan() || s < 0.0 {
            return Err(KfunError::Domain {
                s,
                reason: "negative argument",
            }
            .into());
        }
        if s == 0.0 {
            return Ok(0.0);
        }
        if self.mode == IntegralMode::Auto {
            if let Some((a, k)) = self.psi.as_power_law() {
                if k == 1.0 {
                    return Ok(s.powf(2.0 * self.psi.c0 / a));
                }
            }
        }
        let i = self.psi.reciprocal_integral(1.0, s, self.mode)?;
        Ok((2.0 * self.psi.c0 * i).exp())
    }

    /// `φ(10^-k)` is finite, decreasing in `k` until it reaches 0, and below
    /// `tol` at `k = 12`.
    pub fn vanishes_at_origin(&self, tol: f64) -> bool {
        let vals: Vec<f64> = (0..=12)
            .map(|k| self.eval(10f64.powi(-k)).unwrap_or(f64::NAN))
            .collect();
        vals.iter().all(|v| v.is_finite())
            && vals.windows(2).all(|w| w[1] < w[0] || w[1] == 0.0)
            && vals[12] <= tol
    }
}

/// Controls for the `ζ*` search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZetaOptions {
    /// Use `ln((1+ε)μ)/a` when `χ` and `ψ` are both linear.
    pub closed_form: bool,
    pub integrals: IntegralMode,
    pub seeds: usize,
    pub lo: f64,
    pub hi: f64,
    /// Tail increments above this count towards divergence.
    pub tail_tol: f64,
}

impl Default for ZetaOptions {
    fn default() -> Self {
        Self {
            closed_form: true,
            integrals: IntegralMode::Auto,
            seeds: 400,
            lo: 1e-8,
            hi: 1e8,
            tail_tol: 1e-9,
        }
    }
}

impl ZetaOptions {
    /// Purely numeric search through the quadrature cache.
    pub fn numeric() -> Self {
        Self {
            closed_form: false,
            integrals: IntegralMode::Tabulated,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZetaStar {
    pub value: f64,
    /// maximizer of the objective (`0` when the supremum is the trivial one)
    pub argmax_s: f64,
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// `sup_{s>0} ∫_s^{(1+ε)χ(s)} dr/ψ(r)`.
pub fn compute_zeta_star(chi: &CF, psi: &PsiFunction, epsilon: f64, opts: &ZetaOptions) -> Result<ZetaStar> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(AdtError::Config(format!("epsilon must be nonnegative, got {epsilon}")));
    }
    if matches!(chi, CF::Zero) {
        return Ok(ZetaStar { value: 0.0, argmax_s: 0.0 });
    }
    if opts.closed_form {
        if let (Some((mu, 1.0)), Some((a, 1.0))) = (chi.as_power_law(), psi.as_power_law()) {
            let v = ((1.0 + epsilon) * mu).ln() / a;
            return Ok(ZetaStar {
                value: v.max(0.0),
                argmax_s: if v > 0.0 { 1.0 } else { 0.0 },
            });
        }
    }
    let objective = |s: f64| -> Result<f64> {
        let top = (1.0 + epsilon) * chi.eval(s)?;
        psi.reciprocal_integral(s, top, opts.integrals)
    };
    let n = opts.seeds.max(3);
    let (ul, uh) = (opts.lo.ln(), opts.hi.ln());
    let seeds: Vec<f64> = (0..n)
        .map(|i| (ul + (uh - ul) * i as f64 / (n - 1) as f64).exp())
        .collect();
    let values: Vec<f64> = seeds.par_iter().map(|&s| objective(s)).collect::<Result<_>>()?;

    for (edge, step) in [(opts.hi, 10.0), (opts.lo, 0.1)] {
        let mut prev_val = objective(edge)?;
        let mut prev_inc = f64::NAN;
        let mut growing = true;
        let mut s = edge;
        for _ in 0..3 {
            s *= step;
            let v = objective(s)?;
            let inc = v - prev_val;
            let sustained = prev_inc.is_nan() || inc >= 0.5 * prev_inc;
            growing &= inc > opts.tail_tol && sustained;
            prev_inc = inc;
            prev_val = v;
        }
        if growing {
            return Err(AdtError::DivergentBound { towards: if step > 1.0 { f64::INFINITY } else { 0.0 } });
        }
    }

    let (best_i, best_v) = values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let (mut lo, mut hi) = (
        seeds[best_i.saturating_sub(1)].ln(),
        seeds[(best_i + 1).min(n - 1)].ln(),
    );
    let f = |u: f64| objective(u.exp());
    let mut x1 = hi - GOLDEN * (hi - lo);
    let mut x2 = lo + GOLDEN * (hi - lo);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    for _ in 0..100 {
        if hi - lo <= 1e-12 * (1.0 + lo.abs()) {
            break;
        }
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN * (hi - lo);
            f2 = f(x2)?;
        }
    }
    let (mut arg, mut val) = (seeds[best_i], best_v);
    for (u, v) in [(x1, f1), (x2, f2)] {
        if v > val {
            val = v;
            arg = u.exp();
        }
    }
    if val <= 0.0 {
        return Ok(ZetaStar { value: 0.0, argmax_s: 0.0 });
    }
    Ok(ZetaStar { value: val, argmax_s: arg })
}

/// `exp(2·c0·(ζ* − ζ))`, the contraction of `W` across a switch.
pub fn jump_contraction(c0: f64, zeta_star: f64, zeta: f64) -> f64 {
    (2.0 * c0 * (zeta_star - zeta)).exp()
}

/// `W(p, τ, x, e[, η]) = exp(2·c0·ζ·τ)·φ(V_p(x, e) [+ η_o + η_c])`.
#[derive(Debug, Clone, PartialEq)]
pub struct WFunction {
    pub zeta: f64,
    pub zeta_star: f64,
    pub c0: f64,
    pub phi: Phi,
    pub eta_terms: bool,
}

impl WFunction {
    /// Requires `ζ* < ζ < τ_a`, or `ζ* < ζ < λ·τ_a` when `lambda` is given.
    pub fn new(
        phi: Phi,
        zeta: f64,
        zeta_star: f64,
        tau_a: f64,
        lambda: Option<f64>,
        eta_terms: bool,
    ) -> Result<Self> {
        let upper = lambda.map_or(tau_a, |l| l * tau_a);
        if !(zeta > zeta_star && zeta < upper) {
            return Err(AdtError::Config(format!(
                "zeta = {zeta} must lie in ({zeta_star}, {upper})"
            )));
        }
        Ok(Self {
            zeta,
            zeta_star,
            c0: phi.psi.c0,
            phi,
            eta_terms,
        })
    }

    /// `v` is the certificate value `V_p(x, e)`; `eta` the filter sum (ignored
    /// unless `eta_terms`).
    pub fn eval(&self, tau: f64, v: f64, eta: f64) -> Result<f64> {
        let arg = if self.eta_terms { v + eta } else { v };
        Ok((2.0 * self.c0 * self.zeta * tau).exp() * self.phi.eval(arg.max(0.0))?)
    }

    pub fn jump_contraction(&self) -> f64 {
        jump_contraction(self.c0, self.zeta_star, self.zeta)
    }
}

/// Structured summary of a dwell-time bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DwellBound {
    pub zeta_star: Option<f64>,
    pub tau_a_min: Option<f64>,
    pub divergent: bool,
    pub argmax_s: Option<f64>,
}

impl DwellBound {
    /// `lambda` turns the threshold into `ζ*/λ` for the sampled-data loop.
    pub fn from_result(res: Result<ZetaStar>, lambda: Option<f64>) -> Result<Self> {
        match res {
            Ok(z) => Ok(Self {
                zeta_star: Some(z.value),
                tau_a_min: Some(z.value / lambda.unwrap_or(1.0)),
                divergent: false,
                argmax_s: Some(z.argmax_s),
            }),
            Err(AdtError::DivergentBound { .. }) => Ok(Self {
                zeta_star: None,
                tau_a_min: None,
                divergent: true,
                argmax_s: None,
            }),
            Err(e) => Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn linear_rates_give_linear_psi() {
        let p = build_psi(&[CF::linear(2.0), CF::linear(3.0)], 2.0).unwrap();
        assert_eq!(p.psi, CF::linear(2.0));
        assert!(p.is_below(&[CF::linear(2.0), CF::linear(3.0)]));
    }

    #[test]
    fn superlinear_rate_gives_piecewise_psi() {
        let p = build_psi(&[CF::power(1.5, 2.0)], 1.5).unwrap();
        for &s in &[0.01, 0.5, 0.999] {
            assert!(rel(p.eval(s).unwrap(), 1.5 * s * s) < 1e-15);
        }
        for &s in &[1.001, 3.0, 100.0] {
            assert!(rel(p.eval(s).unwrap(), 1.5 * s) < 1e-15);
        }
    }

    #[test]
    fn saturating_rate_is_rejected() {
        let saturating = CF::tabulated(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 2.0], false).unwrap();
        assert!(matches!(build_psi(&[saturating], 1.0), Err(AdtError::Construction(_))));
    }

    #[test]
    fn phi_of_linear_psi_is_square() {
        let phi = build_phi(build_psi(&[CF::linear(0.7)], 0.7).unwrap());
        let tab = phi.clone().with_mode(IntegralMode::Tabulated);
        for &s in &kfun::log_grid(1e-3, 1e3, 3) {
            assert!(rel(phi.eval(s).unwrap(), s * s) < 1e-14);
            assert!(rel(tab.eval(s).unwrap(), s * s) < 1e-10);
        }
        assert_eq!(phi.eval(1.0).unwrap(), 1.0);
        assert_eq!(phi.eval(0.0).unwrap(), 0.0);
        assert!(phi.vanishes_at_origin(1e-20));
    }

    #[test]
    fn phi_of_square_rate() {
        // ψ = 3s² throughout: ∫_1^2 2·3/(3r²) dr = 1
        let psi = PsiFunction::new(CF::power(3.0, 2.0), 3.0).unwrap();
        for mode in [IntegralMode::Auto, IntegralMode::Tabulated, IntegralMode::Direct] {
            let phi = build_phi(psi.clone()).with_mode(mode);
            assert!(rel(phi.eval(2.0).unwrap(), 1f64.exp()) < 1e-12, "{mode:?}");
        }
    }

    #[test]
    fn phi_of_piecewise_psi() {
        // ψ = s² on [0, 1] and s beyond
        let phi = build_phi(build_psi(&[CF::power(1.0, 2.0)], 1.0).unwrap());
        assert!(rel(phi.eval(2.0).unwrap(), 4.0) < 1e-14);
        assert!(rel(phi.eval(0.5).unwrap(), (-2.0f64).exp()) < 1e-14);
        let direct = phi.clone().with_mode(IntegralMode::Direct);
        assert!(rel(direct.eval(0.5).unwrap(), (-2.0f64).exp()) < 1e-12);
        assert!(phi.vanishes_at_origin(1e-100));
    }

    #[test]
    fn envelope_of_three_laws() {
        let env = PowerEnvelope::from_laws(vec![(1.0, 1.0), (1.0, 0.5), (1.0, 3.0)]).unwrap();
        for &s in &[1e-3f64, 0.5, 2.0, 1e3] {
            let truth = s.min(s.sqrt()).min(s.powi(3));
            assert!(rel(env.eval(s), truth) < 1e-15);
        }
        let n = 200_000;
        let (lo, hi) = (0.1f64, 10.0f64);
        let du = (hi / lo).ln() / n as f64;
        let quad: f64 = (0..n)
            .map(|i| {
                let r = lo * ((i as f64 + 0.5) * du).exp();
                r / env.eval(r) * du
            })
            .sum();
        assert!(rel(env.reciprocal_integral(lo, hi), quad) < 1e-8);
    }

    #[test]
    fn linear_zeta_star_closed_and_numeric() {
        let psi = build_psi(&[CF::linear(1.0)], 1.0).unwrap();
        let chi = CF::linear(2.0);
        let closed = compute_zeta_star(&chi, &psi, 0.1, &ZetaOptions::default()).unwrap();
        let numeric = compute_zeta_star(&chi, &psi, 0.1, &ZetaOptions::numeric()).unwrap();
        assert!((closed.value - 2.2f64.ln()).abs() < 1e-15);
        assert!((numeric.value - 2.2f64.ln()).abs() < 1e-9);
        assert!((closed.value - 0.78846).abs() < 1e-5);
    }

    #[test]
    fn identity_gain_without_margin_is_zero() {
        let psi = build_psi(&[CF::linear(1.0)], 1.0).unwrap();
        let z = compute_zeta_star(&CF::identity(), &psi, 0.0, &ZetaOptions::numeric()).unwrap();
        assert_eq!(z.value, 0.0);
    }

    #[test]
    fn sublinear_psi_with_linear_gain_diverges() {
        let psi = build_psi(&[CF::power(1.0, 0.5)], 1.0).unwrap();
        let r = compute_zeta_star(&CF::linear(2.0), &psi, 0.1, &ZetaOptions::default());
        assert!(matches!(r, Err(AdtError::DivergentBound { .. })), "{r:?}");
    }

    #[test]
    fn superlinear_psi_with_linear_gain_diverges_at_origin() {
        let psi = build_psi(&[CF::power(1.0, 2.0)], 1.0).unwrap();
        let r = compute_zeta_star(&CF::linear(2.0), &psi, 0.1, &ZetaOptions::default());
        assert_eq!(r, Err(AdtError::DivergentBound { towards: 0.0 }));
    }

    #[test]
    fn sublinear_psi_with_sublinear_gain_is_finite() {
        let psi = build_psi(&[CF::power(1.0, 0.5)], 1.0).unwrap();
        let chi = CF::min_of(vec![CF::linear(2.0), CF::power(2.0, 0.5)]);
        let eps = 0.1;
        let z = compute_zeta_star(&chi, &psi, eps, &ZetaOptions::numeric()).unwrap();
        // dense-grid oracle: 10⁶-point midpoint rule in ln r
        let dense = |s: f64| {
            let top = (1.0 + eps) * chi.eval(s).unwrap();
            let n = 1_000_000;
            let du = (top / s).ln() / n as f64;
            (0..n)
                .map(|i| {
                    let r = s * ((i as f64 + 0.5) * du).exp();
                    r / r.min(r.sqrt()) * du
                })
                .sum::<f64>()
        };
        assert!(rel(z.value, dense(z.argmax_s)) < 1e-5);
        for &s in &kfun::log_grid(0.1, 10.0, 5) {
            assert!(dense(s) <= z.value * (1.0 + 1e-5));
        }
        assert!(z.value.is_finite() && z.value > 0.0);
    }

    #[test]
    fn w_function_linear_case() {
        let phi = build_phi(build_psi(&[CF::linear(0.5)], 0.5).unwrap());
        let w = WFunction::new(phi.clone(), 1.2, 1.0, 2.0, None, false).unwrap();
        assert_eq!(w.eval(0.7, 0.0, 0.0).unwrap(), 0.0);
        let v = 3.0;
        let expected = (2.0 * 0.5 * 1.2 * 0.7f64).exp() * v * v;
        assert!(rel(w.eval(0.7, v, 5.0).unwrap(), expected) < 1e-14);
        assert!(rel(w.eval(0.0, v, 0.0).unwrap(), v * v) < 1e-14);
        assert!(w.jump_contraction() < 1.0);
        assert!(WFunction::new(phi.clone(), 0.9, 1.0, 2.0, None, false).is_err());
        assert!(WFunction::new(phi.clone(), 1.2, 1.0, 2.0, Some(0.5), true).is_err());
        let with_eta = WFunction::new(phi, 0.5, 0.1, 2.0, Some(0.5), true).unwrap();
        assert!(rel(with_eta.eval(0.0, 1.0, 1.0).unwrap(), 4.0) < 1e-14);
    }

    #[test]
    fn divergence_is_reported_structurally() {
        let b = DwellBound::from_result(Err(AdtError::DivergentBound { towards: 0.0 }), None).unwrap();
        assert!(b.divergent && b.tau_a_min.is_none());
        let b = DwellBound::from_result(Ok(ZetaStar { value: 1.0, argmax_s: 1.0 }), Some(0.2)).unwrap();
        assert!((b.tau_a_min.unwrap() - 5.0).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn larger_gain_never_lowers_threshold(a in 0.3f64..3.0, mu in 1.2f64..8.0, k in 1.05f64..1.6) {
            let psi = build_psi(&[CF::linear(a)], a).unwrap();
            let chi = CF::min_of(vec![CF::linear(mu), CF::power(mu, k)]);
            let base = compute_zeta_star(&chi, &psi, 0.05, &ZetaOptions::default()).unwrap();
            let bigger = compute_zeta_star(&CF::scaled(1.1, chi), &psi, 0.05, &ZetaOptions::default()).unwrap();
            prop_assert!(bigger.value >= base.value);
        }

        #[test]
        fn contraction_below_one_above_threshold(c0 in 0.01f64..10.0, zs in 0.0f64..10.0, gap in 1e-6f64..5.0) {
            prop_assert!(jump_contraction(c0, zs, zs + gap) < 1.0);
        }
    }
}
