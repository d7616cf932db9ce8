//! Class-K and class-K∞ comparison functions.
//!
//! A [`ComparisonFunction`] is an immutable expression tree over closed-form
//! leaves (power laws, linear maps, monotone tables) combined by composition,
//! pointwise min/max, sums, positive scaling, inversion and integration.
//! Power-law subtrees collapse to a single leaf at construction time so that
//! downstream code can recognise closed forms with [`ComparisonFunction::as_power_law`].
//!
//! [`ScalarFn`] covers the positive but not necessarily class-K weights such
//! as `s ↦ γ(s)/α(s)` and their nondecreasing majorants.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad::{self, QuadError};

/// Maximum number of bisection steps used by numeric inversion.
pub const MAX_INVERSION_STEPS: usize = 200;
/// Relative bracket width at which numeric inversion stops.
pub const INVERSION_REL_TOL: f64 = 1e-14;
/// Relative tolerance for numerically integrated primitives.
pub const PRIMITIVE_REL_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KfunError {
    #[error("argument {s} is outside the domain: {reason}")]
    Domain { s: f64, reason: &'static str },
    #[error("value {r} is not in the range of the function (supremum {sup})")]
    Range { r: f64, sup: f64 },
    #[error("invalid comparison function: {0}")]
    Invalid(String),
    #[error("majorant is unbounded near the origin")]
    UnboundedMajorant,
    #[error("quadrature failed: {0}")]
    Quadrature(#[from] QuadError),
}

pub type Result<T> = std::result::Result<T, KfunError>;

/// Scalar comparison function `[0, ∞) → [0, ∞)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ComparisonFunction {
    /// The identically zero map (used for vanishing gains such as ρ ≡ 0).
    Zero,
    /// `a·s^k`
    PowerLaw { a: f64, k: f64 },
    /// `a·s`
    Linear { a: f64 },
    /// Monotone piecewise-linear interpolation through `(grid, values)`.
    /// With `unbounded = true` the last segment is extended linearly.
    Tabulated {
        grid: Vec<f64>,
        values: Vec<f64>,
        #[serde(default)]
        unbounded: bool,
    },
    /// `outer(inner(s))`
    Composition {
        outer: Box<ComparisonFunction>,
        inner: Box<ComparisonFunction>,
    },
    PointwiseMin { parts: Vec<ComparisonFunction> },
    PointwiseMax { parts: Vec<ComparisonFunction> },
    Sum { parts: Vec<ComparisonFunction> },
    /// `c·base(s)`
    ScalarMultiple { c: f64, base: Box<ComparisonFunction> },
    /// `base⁻¹(s)`
    Inverse { base: Box<ComparisonFunction> },
    /// `∫_0^s integrand(r) dr`
    Primitive { integrand: ScalarFn },
    /// `weight(at(s))·base(s)`
    Weighted {
        weight: ScalarFn,
        at: Box<ComparisonFunction>,
        base: Box<ComparisonFunction>,
    },
}

use ComparisonFunction as CF;

fn check_arg(s: f64) -> Result<()> {
    if s.is_nan() {
        return Err(KfunError::Domain { s, reason: "not a number" });
    }
    if s < 0.0 {
        return Err(KfunError::Domain { s, reason: "negative argument" });
    }
    Ok(())
}

impl ComparisonFunction {
    pub fn zero() -> Self {
        CF::Zero
    }

    pub fn linear(a: f64) -> Self {
        CF::Linear { a }
    }

    pub fn power(a: f64, k: f64) -> Self {
        if k == 1.0 {
            CF::Linear { a }
        } else {
            CF::PowerLaw { a, k }
        }
    }

    pub fn identity() -> Self {
        CF::Linear { a: 1.0 }
    }

    /// Validated monotone table.
    pub fn tabulated(grid: Vec<f64>, values: Vec<f64>, unbounded: bool) -> Result<Self> {
        let f = CF::Tabulated {
            grid,
            values,
            unbounded,
        };
        f.validate()?;
        Ok(f)
    }

    /// `outer ∘ inner`, collapsed to a single power law when possible.
    pub fn compose(outer: CF, inner: CF) -> Self {
        if matches!(outer, CF::Zero) || matches!(inner, CF::Zero) {
            return CF::Zero;
        }
        match (outer.as_power_law(), inner.as_power_law()) {
            (Some((a1, k1)), Some((a2, k2))) => CF::power(a1 * a2.powf(k1), k1 * k2),
            _ => CF::Composition {
                outer: Box::new(outer),
                inner: Box::new(inner),
            },
        }
    }

    /// `c·f` for `c > 0`.
    pub fn scaled(c: f64, base: CF) -> Self {
        if matches!(base, CF::Zero) {
            return CF::Zero;
        }
        match base.as_power_law() {
            Some((a, k)) => CF::power(c * a, k),
            None => CF::ScalarMultiple {
                c,
                base: Box::new(base),
            },
        }
    }

    /// `s ↦ f(c·s)` for `c > 0`.
    pub fn rescaled_argument(base: CF, c: f64) -> Self {
        CF::compose(base, CF::linear(c))
    }

    pub fn inverse(base: CF) -> Self {
        match base.as_power_law() {
            Some((a, k)) => CF::power(a.powf(-1.0 / k), 1.0 / k),
            None => match base {
                CF::Inverse { base } => *base,
                other => CF::Inverse {
                    base: Box::new(other),
                },
            },
        }
    }

    pub fn min_of(parts: Vec<CF>) -> Self {
        Self::fold_family(parts, true)
    }

    pub fn max_of(parts: Vec<CF>) -> Self {
        Self::fold_family(parts, false)
    }

    fn fold_family(parts: Vec<CF>, is_min: bool) -> Self {
        let mut parts: Vec<CF> = parts
            .into_iter()
            .flat_map(|p| match (p, is_min) {
                (CF::PointwiseMin { parts }, true) | (CF::PointwiseMax { parts }, false) => parts,
                (p, _) => vec![p],
            })
            .collect();
        if is_min && parts.iter().any(|p| matches!(p, CF::Zero)) {
            return CF::Zero;
        }
        if !is_min {
            parts.retain(|p| !matches!(p, CF::Zero));
        }
        // merge power laws sharing an exponent
        let mut merged: Vec<CF> = Vec::with_capacity(parts.len());
        for p in parts {
            if let Some((a, k)) = p.as_power_law() {
                if let Some(slot) = merged
                    .iter_mut()
                    .find(|q| q.as_power_law().is_some_and(|(_, kq)| kq == k))
                {
                    let (aq, _) = slot.as_power_law().expect("checked");
                    let a_new = if is_min { aq.min(a) } else { aq.max(a) };
                    *slot = CF::power(a_new, k);
                    continue;
                }
            }
            merged.push(p);
        }
        match merged.len() {
            0 => CF::Zero,
            1 => merged.pop().expect("one element"),
            _ if is_min => CF::PointwiseMin { parts: merged },
            _ => CF::PointwiseMax { parts: merged },
        }
    }

    pub fn sum_of(parts: Vec<CF>) -> Self {
        let mut merged: Vec<CF> = Vec::new();
        for p in parts {
            if matches!(p, CF::Zero) {
                continue;
            }
            if let Some((a, k)) = p.as_power_law() {
                if let Some(slot) = merged
                    .iter_mut()
                    .find(|q| q.as_power_law().is_some_and(|(_, kq)| kq == k))
                {
                    let (aq, _) = slot.as_power_law().expect("checked");
                    *slot = CF::power(aq + a, k);
                    continue;
                }
            }
            merged.push(p);
        }
        match merged.len() {
            0 => CF::Zero,
            1 => merged.pop().expect("one element"),
            _ => CF::Sum { parts: merged },
        }
    }

    pub fn weighted(weight: ScalarFn, at: CF, base: CF) -> Self {
        if let Some(c) = weight.as_constant() {
            return CF::scaled(c, base);
        }
        if matches!(base, CF::Zero) {
            return CF::Zero;
        }
        CF::Weighted {
            weight,
            at: Box::new(at),
            base: Box::new(base),
        }
    }

    /// Returns `(a, k)` when the function equals `a·s^k` exactly.
    pub fn as_power_law(&self) -> Option<(f64, f64)> {
        match self {
            CF::PowerLaw { a, k } => Some((*a, *k)),
            CF::Linear { a } => Some((*a, 1.0)),
            CF::ScalarMultiple { c, base } => base.as_power_law().map(|(a, k)| (c * a, k)),
            CF::Composition { outer, inner } => {
                let (a1, k1) = outer.as_power_law()?;
                let (a2, k2) = inner.as_power_law()?;
                Some((a1 * a2.powf(k1), k1 * k2))
            }
            CF::Inverse { base } => base
                .as_power_law()
                .map(|(a, k)| (a.powf(-1.0 / k), 1.0 / k)),
            CF::PointwiseMin { parts } | CF::PointwiseMax { parts } | CF::Sum { parts } => {
                let laws: Option<Vec<_>> = parts.iter().map(|p| p.as_power_law()).collect();
                let laws = laws?;
                let k = laws.first()?.1;
                if laws.iter().any(|&(_, kk)| kk != k) {
                    return None;
                }
                let coeffs = laws.iter().map(|&(a, _)| a);
                let a = match self {
                    CF::PointwiseMin { .. } => coeffs.fold(f64::INFINITY, f64::min),
                    CF::PointwiseMax { .. } => coeffs.fold(0.0, f64::max),
                    _ => coeffs.sum(),
                };
                Some((a, k))
            }
            CF::Primitive { integrand } => integrand
                .as_power()
                .filter(|&(_, k)| k > -1.0)
                .map(|(a, k)| (a / (k + 1.0), k + 1.0)),
            CF::Weighted { weight, at, base } => {
                let (wa, wk) = weight.as_power()?;
                let (ta, tk) = at.as_power_law()?;
                let (ba, bk) = base.as_power_law()?;
                Some((wa * ta.powf(wk) * ba, wk * tk + bk))
            }
            CF::Zero | CF::Tabulated { .. } => None,
        }
    }

    /// Structural checks on parameters (positivity, table monotonicity).
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64, what: &str| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(KfunError::Invalid(format!("{what} must be positive and finite, got {x}")))
            }
        };
        match self {
            CF::Zero => Ok(()),
            CF::PowerLaw { a, k } => {
                positive(*a, "coefficient")?;
                positive(*k, "exponent")
            }
            CF::Linear { a } => positive(*a, "slope"),
            CF::Tabulated { grid, values, .. } => {
                if grid.len() < 2 || grid.len() != values.len() {
                    return Err(KfunError::Invalid(
                        "table needs at least two points and matching lengths".into(),
                    ));
                }
                if grid[0] != 0.0 || values[0] != 0.0 {
                    return Err(KfunError::Invalid("table must start at (0, 0)".into()));
                }
                let increasing = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0] && w[1].is_finite());
                if !increasing(grid) || !increasing(values) {
                    return Err(KfunError::Invalid(
                        "table abscissae and ordinates must be strictly increasing".into(),
                    ));
                }
                Ok(())
            }
            CF::Composition { outer, inner } => {
                outer.validate()?;
                inner.validate()
            }
            CF::PointwiseMin { parts } | CF::PointwiseMax { parts } | CF::Sum { parts } => {
                if parts.is_empty() {
                    return Err(KfunError::Invalid("empty family".into()));
                }
                parts.iter().try_for_each(CF::validate)
            }
            CF::ScalarMultiple { c, base } => {
                positive(*c, "multiplier")?;
                base.validate()
            }
            CF::Inverse { base } => base.validate(),
            CF::Primitive { .. } => Ok(()),
            CF::Weighted { at, base, .. } => {
                at.validate()?;
                base.validate()
            }
        }
    }

    /// Whether the function is claimed to be unbounded (class K∞).
    pub fn is_unbounded(&self) -> bool {
        match self {
            CF::Zero => false,
            CF::PowerLaw { .. } | CF::Linear { .. } => true,
            CF::Tabulated { unbounded, .. } => *unbounded,
            CF::Composition { outer, inner } => outer.is_unbounded() && inner.is_unbounded(),
            CF::PointwiseMin { parts } => parts.iter().all(CF::is_unbounded),
            CF::PointwiseMax { parts } | CF::Sum { parts } => parts.iter().any(CF::is_unbounded),
            CF::ScalarMultiple { base, .. } => base.is_unbounded(),
            CF::Inverse { base } => base.is_unbounded(),
            CF::Primitive { integrand } => integrand.as_constant() != Some(0.0),
            CF::Weighted { base, .. } => base.is_unbounded(),
        }
    }

    /// Supremum of the function over `[0, ∞)` (infinite for K∞ functions).
    pub fn supremum(&self) -> f64 {
        match self {
            CF::Zero => 0.0,
            _ if self.is_unbounded() => f64::INFINITY,
            CF::Tabulated { values, .. } => *values.last().unwrap_or(&0.0),
            CF::Inverse { base } => base.domain_end(),
            CF::Composition { outer, inner } => {
                let inner_sup = inner.supremum();
                let cap = inner_sup.min(outer.domain_end());
                outer.eval(cap).unwrap_or(f64::INFINITY)
            }
            CF::PointwiseMin { parts } => parts.iter().map(CF::supremum).fold(f64::INFINITY, f64::min),
            CF::ScalarMultiple { c, base } => c * base.supremum(),
            _ => self.eval(self.domain_end().min(1e300)).unwrap_or(f64::INFINITY),
        }
    }

    /// Right end of the evaluation domain.
    fn domain_end(&self) -> f64 {
        match self {
            CF::Tabulated {
                grid, unbounded, ..
            } => {
                if *unbounded {
                    f64::INFINITY
                } else {
                    *grid.last().unwrap_or(&0.0)
                }
            }
            CF::Inverse { base } => base.supremum(),
            CF::Composition { outer, inner } => {
                let end = outer.domain_end();
                if end.is_infinite() {
                    inner.domain_end()
                } else {
                    inner.inverse_eval(end).unwrap_or(0.0).min(inner.domain_end())
                }
            }
            CF::PointwiseMin { parts } | CF::PointwiseMax { parts } | CF::Sum { parts } => {
                parts.iter().map(CF::domain_end).fold(f64::INFINITY, f64::min)
            }
            CF::ScalarMultiple { base, .. } => base.domain_end(),
            CF::Weighted { at, base, .. } => at.domain_end().min(base.domain_end()),
            _ => f64::INFINITY,
        }
    }

    /// Evaluate `f(s)`.
    pub fn eval(&self, s: f64) -> Result<f64> {
        check_arg(s)?;
        if s == 0.0 {
            return Ok(0.0);
        }
        match self {
            CF::Zero => Ok(0.0),
            CF::PowerLaw { a, k } => Ok(a * s.powf(*k)),
            CF::Linear { a } => Ok(a * s),
            CF::Tabulated {
                grid,
                values,
                unbounded,
            } => eval_table(grid, values, *unbounded, s),
            CF::Composition { outer, inner } => outer.eval(inner.eval(s)?),
            CF::PointwiseMin { parts } => parts
                .iter()
                .try_fold(f64::INFINITY, |m, p| Ok(m.min(p.eval(s)?))),
            CF::PointwiseMax { parts } => parts.iter().try_fold(0.0, |m: f64, p| Ok(m.max(p.eval(s)?))),
            CF::Sum { parts } => parts.iter().try_fold(0.0, |m, p| Ok(m + p.eval(s)?)),
            CF::ScalarMultiple { c, base } => Ok(c * base.eval(s)?),
            CF::Inverse { base } => base.inverse_eval(s),
            CF::Primitive { integrand } => integrand.integral(0.0, s),
            CF::Weighted { weight, at, base } => Ok(weight.eval(at.eval(s)?)? * base.eval(s)?),
        }
    }

    /// Solve `f(s) = r` for `s`.
    pub fn inverse_eval(&self, r: f64) -> Result<f64> {
        check_arg(r)?;
        if r == 0.0 {
            return Ok(0.0);
        }
        if let Some((a, k)) = self.as_power_law() {
            return Ok((r / a).powf(1.0 / k));
        }
        match self {
            CF::Zero => Err(KfunError::Range { r, sup: 0.0 }),
            CF::Tabulated {
                grid,
                values,
                unbounded,
            } => eval_table(values, grid, *unbounded, r).map_err(|_| KfunError::Range {
                r,
                sup: *values.last().unwrap_or(&0.0),
            }),
            CF::Composition { outer, inner } => inner.inverse_eval(outer.inverse_eval(r)?),
            CF::ScalarMultiple { c, base } => base.inverse_eval(r / c),
            CF::Inverse { base } => base.eval(r).map_err(|_| KfunError::Range {
                r,
                sup: base.domain_end(),
            }),
            CF::PointwiseMin { parts } => parts
                .iter()
                .try_fold(0.0, |m: f64, p| Ok(m.max(p.inverse_eval(r)?))),
            CF::PointwiseMax { parts } => {
                let mut best: Option<f64> = None;
                for p in parts {
                    match p.inverse_eval(r) {
                        Ok(s) => best = Some(best.map_or(s, |b: f64| b.min(s))),
                        Err(KfunError::Range { .. }) => {}
                        Err(e) => return Err(e),
                    }
                }
                best.ok_or(KfunError::Range {
                    r,
                    sup: self.supremum(),
                })
            }
            _ => self.bisect_inverse(r),
        }
    }

    fn bisect_inverse(&self, r: f64) -> Result<f64> {
        let end = self.domain_end();
        let mut hi = 1.0f64.max(r).min(end);
        while self.eval(hi)? < r {
            if hi >= end || hi > 1e300 {
                return Err(KfunError::Range {
                    r,
                    sup: self.supremum(),
                });
            }
            hi = (hi * 4.0).min(end);
        }
        let mut lo = 0.0;
        for _ in 0..MAX_INVERSION_STEPS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.eval(mid)? < r {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= INVERSION_REL_TOL * hi {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

fn eval_table(grid: &[f64], values: &[f64], unbounded: bool, s: f64) -> Result<f64> {
    let n = grid.len();
    if n < 2 {
        return Err(KfunError::Invalid("table needs at least two points".into()));
    }
    let last = grid[n - 1];
    if s > last {
        if !unbounded {
            return Err(KfunError::Domain {
                s,
                reason: "beyond the tabulated grid",
            });
        }
        let slope = (values[n - 1] - values[n - 2]) / (grid[n - 1] - grid[n - 2]);
        return Ok(values[n - 1] + slope * (s - last));
    }
    let i = grid.partition_point(|&g| g <= s).clamp(1, n - 1);
    let (g0, g1) = (grid[i - 1], grid[i]);
    let (v0, v1) = (values[i - 1], values[i]);
    Ok(v0 + (v1 - v0) * (s - g0) / (g1 - g0))
}

/// Opaque user-supplied scalar map, excluded from serialization.
#[derive(Clone)]
pub struct CustomFn(pub Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl fmt::Debug for CustomFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomFn(..)")
    }
}

impl PartialEq for CustomFn {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}

/// Nonnegative scalar function on `(0, ∞)` that need not vanish at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarFn {
    Constant { value: f64 },
    /// `a·s^k`, any real `k`
    Power { a: f64, k: f64 },
    /// `num(s)/den(s)`; at `s = 0` the value at the smallest positive float is used.
    Ratio { num: Box<CF>, den: Box<CF> },
    Scaled { c: f64, base: Box<ScalarFn> },
    /// `factor` times the running supremum of `source`, tabulated on `grid`.
    /// Below the grid the first value is used; beyond it the value is
    /// `max(last, factor·source(s))`.
    RunningSup {
        grid: Vec<f64>,
        values: Vec<f64>,
        prefix: Vec<f64>,
        factor: f64,
        source: Box<ScalarFn>,
    },
    #[serde(skip)]
    Custom(CustomFn),
}

impl ScalarFn {
    pub fn constant(value: f64) -> Self {
        ScalarFn::Constant { value }
    }

    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        ScalarFn::Custom(CustomFn(Arc::new(f)))
    }

    /// `num/den`, collapsed to a power when both are power laws.
    pub fn ratio(num: CF, den: CF) -> Self {
        match (num.as_power_law(), den.as_power_law()) {
            (Some((a1, k1)), Some((a2, k2))) => {
                if k1 == k2 {
                    ScalarFn::Constant { value: a1 / a2 }
                } else {
                    ScalarFn::Power { a: a1 / a2, k: k1 - k2 }
                }
            }
            _ if matches!(num, CF::Zero) => ScalarFn::Constant { value: 0.0 },
            _ => ScalarFn::Ratio {
                num: Box::new(num),
                den: Box::new(den),
            },
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            ScalarFn::Constant { value } => Some(*value),
            ScalarFn::Power { a, k } if *k == 0.0 => Some(*a),
            ScalarFn::Scaled { c, base } => base.as_constant().map(|v| c * v),
            _ => None,
        }
    }

    /// `(a, k)` when the function is `a·s^k` (constants have `k = 0`).
    pub fn as_power(&self) -> Option<(f64, f64)> {
        match self {
            ScalarFn::Constant { value } => Some((*value, 0.0)),
            ScalarFn::Power { a, k } => Some((*a, *k)),
            ScalarFn::Scaled { c, base } => base.as_power().map(|(a, k)| (c * a, k)),
            ScalarFn::Ratio { num, den } => {
                let (a1, k1) = num.as_power_law()?;
                let (a2, k2) = den.as_power_law()?;
                Some((a1 / a2, k1 - k2))
            }
            _ => None,
        }
    }

    pub fn eval(&self, s: f64) -> Result<f64> {
        check_arg(s)?;
        match self {
            ScalarFn::Constant { value } => Ok(*value),
            ScalarFn::Power { a, k } => {
                if *k == 0.0 {
                    Ok(*a)
                } else if s == 0.0 && *k < 0.0 {
                    Err(KfunError::Domain {
                        s,
                        reason: "negative power at the origin",
                    })
                } else {
                    Ok(a * s.powf(*k))
                }
            }
            ScalarFn::Ratio { num, den } => {
                let s = s.max(f64::MIN_POSITIVE);
                let d = den.eval(s)?;
                if d <= 0.0 {
                    return Err(KfunError::Domain {
                        s,
                        reason: "denominator vanishes",
                    });
                }
                Ok(num.eval(s)? / d)
            }
            ScalarFn::Scaled { c, base } => Ok(c * base.eval(s)?),
            ScalarFn::RunningSup {
                grid,
                values,
                factor,
                source,
                ..
            } => {
                let n = grid.len();
                if s <= grid[0] {
                    Ok(values[0])
                } else if s >= grid[n - 1] {
                    Ok(values[n - 1].max(factor * source.eval(s)?))
                } else {
                    let i = grid.partition_point(|&g| g <= s).clamp(1, n - 1);
                    let w = (s - grid[i - 1]) / (grid[i] - grid[i - 1]);
                    Ok(values[i - 1] + w * (values[i] - values[i - 1]))
                }
            }
            ScalarFn::Custom(f) => Ok((f.0)(s)),
        }
    }

    /// `∫_lo^hi f(r) dr` for `0 ≤ lo ≤ hi`.
    pub fn integral(&self, lo: f64, hi: f64) -> Result<f64> {
        check_arg(lo)?;
        check_arg(hi)?;
        if hi <= lo {
            return Ok(0.0);
        }
        if let Some((a, k)) = self.as_power() {
            if k == -1.0 {
                if lo == 0.0 {
                    return Ok(f64::INFINITY);
                }
                return Ok(a * (hi / lo).ln());
            }
            if k < -1.0 && lo == 0.0 {
                return Ok(f64::INFINITY);
            }
            return Ok(a * (hi.powf(k + 1.0) - lo.powf(k + 1.0)) / (k + 1.0));
        }
        match self {
            ScalarFn::Scaled { c, base } => Ok(c * base.integral(lo, hi)?),
            ScalarFn::RunningSup {
                grid,
                values,
                prefix,
                ..
            } => {
                let n = grid.len();
                let in_table = |x: f64| -> f64 {
                    // ∫_0^x of the table with constant extension below grid[0]
                    if x <= grid[0] {
                        return values[0] * x;
                    }
                    let x = x.min(grid[n - 1]);
                    let i = grid.partition_point(|&g| g <= x).clamp(1, n - 1);
                    let dx = x - grid[i - 1];
                    let w = dx / (grid[i] - grid[i - 1]);
                    let v = values[i - 1] + w * (values[i] - values[i - 1]);
                    prefix[i - 1] + 0.5 * (values[i - 1] + v) * dx
                };
                let mut total = in_table(hi) - in_table(lo);
                let tail_lo = lo.max(grid[n - 1]);
                if hi > tail_lo {
                    total += quad::integrate(
                        |r| self.eval(r).unwrap_or(f64::NAN),
                        tail_lo,
                        hi,
                        PRIMITIVE_REL_TOL,
                        0.0,
                    )?;
                }
                Ok(total)
            }
            _ => Ok(quad::integrate(
                |r| self.eval(r).unwrap_or(f64::NAN),
                lo,
                hi,
                PRIMITIVE_REL_TOL,
                0.0,
            )?),
        }
    }
}

/// Log-spaced grid on `[lo, hi]` with `per_decade` points per decade.
pub fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let decades = (hi / lo).log10();
    let n = ((decades * per_decade as f64).round() as usize).max(1);
    (0..=n)
        .map(|i| lo * 10f64.powf(decades * i as f64 / n as f64))
        .collect()
}

/// Default grid used for tabulated majorants.
pub fn default_majorant_grid() -> Vec<f64> {
    log_grid(1e-8, 1e8, 20)
}

/// `factor` times the running supremum of `f` over `(0, s]`.
///
/// Power-type inputs produce closed forms; everything else is tabulated on
/// `grid` (or [`default_majorant_grid`]).
pub fn nondecreasing_majorant(f: &ScalarFn, factor: f64, grid: Option<&[f64]>) -> Result<ScalarFn> {
    if let Some((a, k)) = f.as_power() {
        if k == 0.0 {
            return Ok(ScalarFn::Constant { value: factor * a });
        }
        if k > 0.0 {
            return Ok(ScalarFn::Power { a: factor * a, k });
        }
        return Err(KfunError::UnboundedMajorant);
    }
    let owned;
    let grid = match grid {
        Some(g) => g,
        None => {
            owned = default_majorant_grid();
            &owned
        }
    };
    if grid.is_empty() || grid.windows(2).any(|w| w[1] <= w[0]) || grid[0] <= 0.0 {
        return Err(KfunError::Invalid(
            "majorant grid must be positive and strictly increasing".into(),
        ));
    }
    let mut values = Vec::with_capacity(grid.len());
    let mut running = 0.0f64;
    for &s in grid {
        let v = f.eval(s)?;
        if !v.is_finite() {
            return Err(KfunError::UnboundedMajorant);
        }
        running = running.max(v);
        values.push(factor * running);
    }
    let mut prefix = Vec::with_capacity(grid.len());
    let mut acc = values[0] * grid[0];
    prefix.push(acc);
    for i in 1..grid.len() {
        acc += 0.5 * (values[i] + values[i - 1]) * (grid[i] - grid[i - 1]);
        prefix.push(acc);
    }
    Ok(ScalarFn::RunningSup {
        grid: grid.to_vec(),
        values,
        prefix,
        factor,
        source: Box::new(f.clone()),
    })
}

/// `ℓ(s) = ∫_0^s ν(r) dr` as a comparison function.
pub fn integral_primitive(nu: &ScalarFn) -> CF {
    match nu.as_power() {
        Some((a, _)) if a == 0.0 => CF::Zero,
        Some((a, k)) if k > -1.0 => CF::power(a / (k + 1.0), k + 1.0),
        _ => CF::Primitive {
            integrand: nu.clone(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn closed_form_evaluation() {
        assert_eq!(CF::power(1.0, 2.0).eval(0.0).unwrap(), 0.0);
        assert_eq!(CF::linear(0.5).eval(4.0).unwrap(), 2.0);
        let f = CF::power(2.0, 0.5);
        assert!(close(f.eval(9.0).unwrap(), 2.0 * 9f64.sqrt(), 1e-15));
    }

    #[test]
    fn negative_argument_is_rejected() {
        assert!(matches!(
            CF::linear(1.0).eval(-1.0),
            Err(KfunError::Domain { .. })
        ));
    }

    #[test]
    fn closed_form_inversion() {
        let f = CF::power(1.0, 2.0);
        let s = f.inverse_eval(9.0).unwrap();
        assert!(close(f.eval(s).unwrap(), 9.0, 1e-14));
        assert!(close(s, 3.0, 1e-14));
        assert_eq!(CF::linear(2.0).inverse_eval(5.0).unwrap(), 2.5);
        assert_eq!(CF::linear(2.0).inverse_eval(0.0).unwrap(), 0.0);
    }

    #[test]
    fn table_interpolates_and_refuses_extrapolation() {
        let f = CF::tabulated(vec![0.0, 1.0, 2.0], vec![0.0, 2.0, 3.0], false).unwrap();
        assert_eq!(f.eval(0.5).unwrap(), 1.0);
        assert_eq!(f.eval(1.5).unwrap(), 2.5);
        assert!(matches!(f.eval(2.5), Err(KfunError::Domain { .. })));
        assert!(matches!(f.inverse_eval(3.5), Err(KfunError::Range { .. })));
        assert!(close(f.inverse_eval(2.5).unwrap(), 1.5, 1e-15));
        let g = CF::tabulated(vec![0.0, 1.0, 2.0], vec![0.0, 2.0, 3.0], true).unwrap();
        assert_eq!(g.eval(3.0).unwrap(), 4.0);
        assert!(g.eval(20.0).unwrap() > g.eval(2.0).unwrap());
    }

    #[test]
    fn malformed_tables_are_rejected() {
        assert!(CF::tabulated(vec![0.0, 1.0], vec![0.0, 0.0], false).is_err());
        assert!(CF::tabulated(vec![0.1, 1.0], vec![0.0, 1.0], false).is_err());
        assert!(CF::tabulated(vec![0.0], vec![0.0], false).is_err());
    }

    #[test]
    fn power_laws_collapse() {
        let f = CF::compose(CF::power(2.0, 2.0), CF::linear(3.0));
        assert_eq!(f.as_power_law(), Some((18.0, 2.0)));
        let g = CF::inverse(CF::power(4.0, 2.0));
        let (a, k) = g.as_power_law().unwrap();
        assert!(close(a, 0.5, 1e-15) && close(k, 0.5, 1e-15));
        let m = CF::min_of(vec![CF::linear(0.5), CF::linear(0.25)]);
        assert_eq!(m, CF::linear(0.25));
    }

    #[test]
    fn mixed_min_inverts_by_max_of_inverses() {
        let f = CF::min_of(vec![CF::linear(1.0), CF::power(1.0, 2.0)]);
        for &r in &[0.25, 1.0, 4.0] {
            let s = f.inverse_eval(r).unwrap();
            assert!(close(f.eval(s).unwrap(), r, 1e-13), "r={r}");
        }
    }

    #[test]
    fn bounded_inverse_reports_range() {
        let f = CF::sum_of(vec![
            CF::tabulated(vec![0.0, 1.0], vec![0.0, 1.0], false).unwrap(),
            CF::tabulated(vec![0.0, 1.0], vec![0.0, 1.0], false).unwrap(),
        ]);
        assert!(matches!(f.inverse_eval(5.0), Err(KfunError::Range { .. })));
    }

    #[test]
    fn majorant_of_constant_and_nondecreasing_inputs() {
        let g = nondecreasing_majorant(&ScalarFn::constant(0.5), 4.0, None).unwrap();
        assert_eq!(g.as_constant(), Some(2.0));
        let grid = log_grid(0.01, 100.0, 5);
        let f = ScalarFn::custom(|s| s * s + 1.0);
        let g = nondecreasing_majorant(&f, 4.0, Some(&grid)).unwrap();
        for &s in &grid {
            assert!(close(g.eval(s).unwrap(), 4.0 * f.eval(s).unwrap(), 1e-14));
        }
    }

    #[test]
    fn majorant_takes_running_maximum() {
        let grid: Vec<f64> = (1..=20).map(|i| 0.1 * i as f64).collect();
        let f = ScalarFn::custom(|s: f64| (1.0 - s).max(0.1));
        let g = nondecreasing_majorant(&f, 4.0, Some(&grid)).unwrap();
        // oracle: explicit running max over the grid
        let mut run = 0.0f64;
        for &s in &grid {
            run = run.max(f.eval(s).unwrap());
            assert!(close(g.eval(s).unwrap(), 4.0 * run, 1e-14));
        }
        assert!(close(g.eval(2.0).unwrap(), 3.6, 1e-14));
    }

    #[test]
    fn negative_power_has_no_majorant() {
        let f = ScalarFn::Power { a: 1.0, k: -0.5 };
        assert_eq!(
            nondecreasing_majorant(&f, 4.0, None),
            Err(KfunError::UnboundedMajorant)
        );
    }

    #[test]
    fn primitives_match_closed_forms() {
        let ell = integral_primitive(&ScalarFn::constant(2.0));
        assert_eq!(ell, CF::linear(2.0));
        let cube = integral_primitive(&ScalarFn::Power { a: 3.0, k: 2.0 });
        assert_eq!(cube.as_power_law(), Some((1.0, 3.0)));
        // numeric quadrature of the same integrand
        let numeric = CF::Primitive {
            integrand: ScalarFn::custom(|r| 3.0 * r * r),
        };
        for &s in &[0.1, 1.0, 2.5, 10.0] {
            let (a, b) = (numeric.eval(s).unwrap(), cube.eval(s).unwrap());
            assert!((a - b).abs() <= 1e-10 * b, "s={s}: {a} vs {b}");
        }
        assert_eq!(numeric.eval(0.0).unwrap(), 0.0);
    }

    #[test]
    fn tabulated_primitive_is_exact_on_the_table() {
        let grid = vec![1.0, 2.0, 3.0];
        let f = ScalarFn::custom(|s| s);
        let g = nondecreasing_majorant(&f, 1.0, Some(&grid)).unwrap();
        let ell = integral_primitive(&g);
        // constant 1 on [0,1], then r on [1,3]
        assert!(close(ell.eval(3.0).unwrap(), 1.0 + 4.0, 1e-12));
        assert!(close(ell.eval(0.5).unwrap(), 0.5, 1e-15));
    }

    #[test]
    fn serde_round_trip() {
        let f = CF::min_of(vec![
            CF::linear(2.0),
            CF::compose(CF::tabulated(vec![0.0, 1.0], vec![0.0, 3.0], true).unwrap(), CF::power(1.0, 0.5)),
        ]);
        let text = serde_json::to_string(&f).unwrap();
        let back: CF = serde_json::from_str(&text).unwrap();
        assert_eq!(f, back);
    }

    fn arb_leaf() -> impl Strategy<Value = CF> {
        prop_oneof![
            (0.1f64..5.0).prop_map(CF::linear),
            (0.1f64..5.0, 0.3f64..3.0).prop_map(|(a, k)| CF::power(a, k)),
        ]
    }

    fn arb_cf() -> impl Strategy<Value = CF> {
        arb_leaf().prop_recursive(3, 12, 3, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| CF::compose(a, b)),
                prop::collection::vec(inner.clone(), 2..4).prop_map(CF::min_of),
                prop::collection::vec(inner.clone(), 2..4).prop_map(CF::max_of),
                prop::collection::vec(inner.clone(), 2..4).prop_map(CF::sum_of),
                (0.2f64..4.0, inner.clone()).prop_map(|(c, f)| CF::scaled(c, f)),
                inner.prop_map(CF::inverse),
            ]
        })
    }

    proptest! {
        #[test]
        fn class_k_properties_hold(f in arb_cf(), s1 in 1e-3f64..30.0, s2 in 1e-3f64..30.0) {
            prop_assert_eq!(f.eval(0.0).unwrap(), 0.0);
            let (lo, hi) = if s1 < s2 { (s1, s2) } else { (s2, s1) };
            prop_assume!(hi - lo > 1e-9 * hi);
            let (a, b) = (f.eval(lo).unwrap(), f.eval(hi).unwrap());
            prop_assume!(a.is_finite() && b.is_finite() && b < 1e200);
            prop_assert!(a < b, "f({lo}) = {a} !< f({hi}) = {b}");
        }

        #[test]
        fn inversion_round_trips(f in arb_cf(), s in 1e-4f64..50.0) {
            let r = f.eval(s).unwrap();
            prop_assume!(r.is_finite() && r > 1e-250 && r < 1e250);
            let back = f.inverse_eval(r).unwrap();
            prop_assert!((back - s).abs() <= 1e-8 * (1.0 + s), "s={s} back={back}");
        }

        #[test]
        fn majorant_dominates_and_is_monotone(c in 0.1f64..3.0, w in 0.5f64..5.0) {
            let f = ScalarFn::custom(move |s: f64| c + (w * s).sin().abs());
            let grid = log_grid(1e-3, 1e3, 10);
            let g = nondecreasing_majorant(&f, 4.0, Some(&grid)).unwrap();
            let mut prev = 0.0;
            for &s in &grid {
                let v = g.eval(s).unwrap();
                prop_assert!(v >= 4.0 * f.eval(s).unwrap() - 1e-12);
                prop_assert!(v >= prev);
                prev = v;
            }
        }

        #[test]
        fn primitive_is_strictly_increasing(c in 0.1f64..3.0) {
            let nu = ScalarFn::custom(move |s: f64| c + s / (1.0 + s));
            let ell = integral_primitive(&nu);
            let grid = log_grid(1e-3, 1e3, 4);
            let vals: Vec<f64> = grid.iter().map(|&s| ell.eval(s).unwrap()).collect();
            prop_assert!(vals.windows(2).all(|w| w[1] > w[0]));
        }
    }
}
