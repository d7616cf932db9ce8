//! Event-triggered observer-based output feedback for switched plants.
//!
//! The closed loop carries the plant state `x`, the observer state `z`, the
//! last sampled copies `x_d`, `z_d` (held outputs `y_d = h(x_d)` and inputs
//! `u_d = k(z_d)`), two dynamic filters `η_o`, `η_c` and the dwell-time
//! budget `τ`. A new output sample is taken when `|y − y_d| ≥ μ_o(η_o)`, a
//! new input sample when `|z − z_d| ≥ μ_c(η_c)`; both are refreshed at
//! switches.

pub mod section5;

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hybrid_sim::{AdtParams, HybridSystem, JumpEvent, JumpKind, Observer, SimError, SwitchingSignal};
use crate::kfun::{self, ComparisonFunction as CF, ScalarFn};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LoopError {
    #[error("inconsistent closed-loop definition: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Linear(#[from] crate::linear_synth::LinearError),
    #[error(transparent)]
    Adt(#[from] crate::adt_bounds::AdtError),
}

pub type Result<T> = std::result::Result<T, LoopError>;

/// Switched plant `ẋ = f_p(x, u)`, `y = h_p(x)`.
pub trait Plant: Send + Sync {
    fn n_modes(&self) -> usize;
    fn n_x(&self) -> usize;
    fn n_u(&self) -> usize;
    fn n_y(&self) -> usize;
    fn flow(&self, mode: usize, x: &[f64], u: &[f64], dx: &mut [f64]);
    fn output(&self, mode: usize, x: &[f64], y: &mut [f64]);
}

/// Switched observer-based controller `ż = f_p(z, u, y)`, `u = k_p(z)`.
pub trait Controller: Send + Sync {
    fn n_modes(&self) -> usize;
    fn n_z(&self) -> usize;
    fn flow(&self, mode: usize, z: &[f64], u: &[f64], y: &[f64], dz: &mut [f64]);
    fn control(&self, mode: usize, z: &[f64], u: &mut [f64]);
}

/// Filter data of one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterDef {
    pub beta_o: CF,
    pub beta_c: CF,
    pub rho_o: CF,
    pub rho_c: CF,
    pub gamma_o: CF,
    pub gamma_c: CF,
}

/// Trigger thresholds of one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerDef {
    pub mu_o: CF,
    pub mu_c: CF,
}

const MAX_IO: usize = 16;

/// `f(s)` for `s ≥ 0`, extended oddly to negative arguments.
fn odd(f: &CF, s: f64) -> f64 {
    let v = f.eval(s.abs()).unwrap_or(f64::NAN);
    if s < 0.0 {
        -v
    } else {
        v
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

/// Index ranges of the closed-loop state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n: usize,
    pub nz: usize,
}

impl Layout {
    pub fn x(&self) -> std::ops::Range<usize> {
        0..self.n
    }
    pub fn z(&self) -> std::ops::Range<usize> {
        self.n..self.n + self.nz
    }
    pub fn x_d(&self) -> std::ops::Range<usize> {
        self.n + self.nz..2 * self.n + self.nz
    }
    pub fn z_d(&self) -> std::ops::Range<usize> {
        2 * self.n + self.nz..2 * self.n + 2 * self.nz
    }
    pub fn eta_o(&self) -> usize {
        2 * self.n + 2 * self.nz
    }
    pub fn eta_c(&self) -> usize {
        self.eta_o() + 1
    }
    pub fn tau(&self) -> usize {
        self.eta_o() + 2
    }
    pub fn switch_index(&self) -> usize {
        self.eta_o() + 3
    }
    pub fn dim(&self) -> usize {
        self.eta_o() + 4
    }
}

/// Guard indices.
pub const GUARD_Y: usize = 0;
pub const GUARD_U: usize = 1;
pub const GUARD_SWITCH: usize = 2;

pub struct ClosedLoop {
    pub plant: Arc<dyn Plant>,
    pub controller: Arc<dyn Controller>,
    pub filters: Vec<FilterDef>,
    pub triggers: Vec<TriggerDef>,
    pub adt: AdtParams,
    pub schedule: SwitchingSignal,
    pub layout: Layout,
}

/// Instantaneous sampling errors and thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingErrors {
    pub y_err: f64,
    pub mu_o: f64,
    pub z_err: f64,
    pub mu_c: f64,
    pub y_norm: f64,
    pub z_norm: f64,
}

pub fn build_closed_loop(
    plant: Arc<dyn Plant>,
    controller: Arc<dyn Controller>,
    filters: Vec<FilterDef>,
    triggers: Vec<TriggerDef>,
    adt: AdtParams,
    schedule: SwitchingSignal,
) -> Result<ClosedLoop> {
    let p = plant.n_modes();
    if controller.n_modes() != p || filters.len() != p || triggers.len() != p {
        return Err(LoopError::Config(format!(
            "mode counts differ: plant {p}, controller {}, filters {}, triggers {}",
            controller.n_modes(),
            filters.len(),
            triggers.len()
        )));
    }
    if plant.n_u() > MAX_IO || plant.n_y() > MAX_IO {
        return Err(LoopError::Config(format!("at most {MAX_IO} inputs and outputs are supported")));
    }
    if schedule.initial_mode >= p || schedule.switches.iter().any(|s| s.mode >= p) {
        return Err(LoopError::Config("switching signal uses an unknown mode".into()));
    }
    if !(adt.tau_a > 0.0 && adt.n0 >= 1.0) {
        return Err(LoopError::Config("dwell-time parameters need tau_a > 0 and N0 >= 1".into()));
    }
    let layout = Layout {
        n: plant.n_x(),
        nz: controller.n_z(),
    };
    Ok(ClosedLoop {
        plant,
        controller,
        filters,
        triggers,
        adt,
        schedule,
        layout,
    })
}

impl ClosedLoop {
    /// `[x0, z0, x0, z0, η_o0, η_c0, τ0, 0]`: samples start equal to the states.
    pub fn initial_state(&self, x0: &[f64], z0: &[f64], eta0: (f64, f64), tau0: f64) -> Vec<f64> {
        let mut s = Vec::with_capacity(self.layout.dim());
        s.extend_from_slice(x0);
        s.extend_from_slice(z0);
        s.extend_from_slice(x0);
        s.extend_from_slice(z0);
        s.extend([eta0.0, eta0.1, tau0.min(self.adt.n0), 0.0]);
        s
    }

    pub fn sampling_errors(&self, mode: usize, s: &[f64]) -> SamplingErrors {
        let l = self.layout;
        let ny = self.plant.n_y();
        let (mut y, mut yd) = ([0.0; MAX_IO], [0.0; MAX_IO]);
        self.plant.output(mode, &s[l.x()], &mut y[..ny]);
        self.plant.output(mode, &s[l.x_d()], &mut yd[..ny]);
        let tr = &self.triggers[mode];
        SamplingErrors {
            y_err: dist(&y[..ny], &yd[..ny]),
            mu_o: odd(&tr.mu_o, s[l.eta_o()]),
            z_err: dist(&s[l.z()], &s[l.z_d()]),
            mu_c: odd(&tr.mu_c, s[l.eta_c()]),
            y_norm: norm(&y[..ny]),
            z_norm: norm(&s[l.z()]),
        }
    }

    fn next_switch(&self, s: &[f64]) -> Option<usize> {
        let k = s[self.layout.switch_index()] as usize;
        (k < self.schedule.switches.len()).then_some(k)
    }
}

impl HybridSystem for ClosedLoop {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn n_guards(&self) -> usize {
        3
    }

    fn flow(&self, _t: f64, mode: usize, s: &[f64], ds: &mut [f64]) {
        let l = self.layout;
        let (nu, ny) = (self.plant.n_u(), self.plant.n_y());
        let (mut u, mut y, mut yd) = ([0.0; MAX_IO], [0.0; MAX_IO], [0.0; MAX_IO]);
        self.controller.control(mode, &s[l.z_d()], &mut u[..nu]);
        self.plant.output(mode, &s[l.x()], &mut y[..ny]);
        self.plant.output(mode, &s[l.x_d()], &mut yd[..ny]);
        self.plant.flow(mode, &s[l.x()], &u[..nu], &mut ds[l.x()]);
        self.controller.flow(mode, &s[l.z()], &u[..nu], &yd[..ny], &mut ds[l.z()]);
        ds[l.x_d()].fill(0.0);
        ds[l.z_d()].fill(0.0);
        let f = &self.filters[mode];
        let (eo, ec) = (s[l.eta_o()], s[l.eta_c()]);
        let y_err = dist(&y[..ny], &yd[..ny]);
        let z_err = dist(&s[l.z()], &s[l.z_d()]);
        ds[l.eta_o()] = -odd(&f.beta_o, eo) + odd(&f.rho_o, norm(&y[..ny])) + odd(&f.gamma_o, y_err);
        ds[l.eta_c()] = -odd(&f.beta_c, ec) + odd(&f.rho_c, 0.5 * norm(&s[l.z()])) + odd(&f.gamma_c, z_err);
        ds[l.tau()] = if s[l.tau()] < self.adt.n0 { 1.0 / self.adt.tau_a } else { 0.0 };
        ds[l.switch_index()] = 0.0;
    }

    fn guards(&self, t: f64, mode: usize, s: &[f64], out: &mut [f64]) {
        let e = self.sampling_errors(mode, s);
        out[GUARD_Y] = e.y_err - e.mu_o;
        out[GUARD_U] = e.z_err - e.mu_c;
        out[GUARD_SWITCH] = match self.next_switch(s) {
            Some(k) => t - self.schedule.switches[k].t,
            None => -1.0,
        };
    }

    fn guard_kind(&self, idx: usize) -> JumpKind {
        match idx {
            GUARD_Y => JumpKind::SampleY,
            GUARD_U => JumpKind::SampleU,
            _ => JumpKind::Switch,
        }
    }

    fn jump(&self, idx: usize, _t: f64, mode: usize, s: &mut [f64], _rng: &mut ChaCha8Rng) -> usize {
        let l = self.layout;
        match idx {
            GUARD_Y => {
                s.copy_within(l.x(), l.x_d().start);
                mode
            }
            GUARD_U => {
                s.copy_within(l.z(), l.z_d().start);
                mode
            }
            _ => {
                let Some(k) = self.next_switch(s) else {
                    return mode;
                };
                s.copy_within(l.x(), l.x_d().start);
                s.copy_within(l.z(), l.z_d().start);
                s[l.tau()] -= 1.0;
                s[l.switch_index()] += 1.0;
                self.schedule.switches[k].mode
            }
        }
    }

    fn project(&self, s: &mut [f64]) {
        let i = self.layout.tau();
        s[i] = s[i].min(self.adt.n0);
    }

    fn state_names(&self) -> Vec<String> {
        let l = self.layout;
        let idx = |p: &'static str, n: usize| (0..n).map(move |i| format!("{p}{i}"));
        idx("x", l.n)
            .chain(idx("z", l.nz))
            .chain(idx("x_d", l.n))
            .chain(idx("z_d", l.nz))
            .chain(["eta_o", "eta_c", "tau", "switch_index"].map(String::from))
            .collect()
    }

    fn diagnostic_names(&self) -> Vec<String> {
        ["abs_y_minus_y_d", "mu_o_of_eta_o", "abs_z_minus_z_d", "mu_c_of_eta_c"]
            .map(String::from)
            .to_vec()
    }

    fn diagnostics(&self, _t: f64, mode: usize, s: &[f64], out: &mut Vec<f64>) {
        let e = self.sampling_errors(mode, s);
        out.extend([e.y_err, e.mu_o, e.z_err, e.mu_c]);
    }
}

/// Streaming checks on a closed-loop run: flow-set membership at every
/// reported point, filter positivity, post-jump resets and the size of
/// `(y, z, η_o, η_c)`.
pub struct LoopMonitor<'a> {
    pub sys: &'a ClosedLoop,
    pub event_tol: f64,
    pub points: usize,
    pub flow_set_violations: usize,
    pub worst_flow_set_excess: f64,
    pub min_eta: f64,
    pub reset_violations: usize,
    pub timer_violations: usize,
    pub initial_norm: Option<f64>,
    pub last_norm: f64,
    pub last_time: f64,
}

impl<'a> LoopMonitor<'a> {
    pub fn new(sys: &'a ClosedLoop, event_tol: f64) -> Self {
        Self {
            sys,
            event_tol,
            points: 0,
            flow_set_violations: 0,
            worst_flow_set_excess: f64::NEG_INFINITY,
            min_eta: f64::INFINITY,
            reset_violations: 0,
            timer_violations: 0,
            initial_norm: None,
            last_norm: f64::NAN,
            last_time: 0.0,
        }
    }

    /// `|(y, z, η_o, η_c)|`.
    pub fn output_norm(&self, mode: usize, s: &[f64]) -> f64 {
        let e = self.sys.sampling_errors(mode, s);
        let l = self.sys.layout;
        (e.y_norm.powi(2) + e.z_norm.powi(2) + s[l.eta_o()].powi(2) + s[l.eta_c()].powi(2)).sqrt()
    }
}

impl Observer for LoopMonitor<'_> {
    fn on_flow(&mut self, t: f64, _j: usize, mode: usize, s: &[f64], _boundary: bool) {
        let l = self.sys.layout;
        let e = self.sys.sampling_errors(mode, s);
        let excess = (e.y_err - e.mu_o).max(e.z_err - e.mu_c);
        self.worst_flow_set_excess = self.worst_flow_set_excess.max(excess);
        let (eo, ec) = (s[l.eta_o()], s[l.eta_c()]);
        self.min_eta = self.min_eta.min(eo).min(ec);
        if excess > self.event_tol || eo < -self.event_tol || ec < -self.event_tol {
            self.flow_set_violations += 1;
        }
        self.points += 1;
        let n = self.output_norm(mode, s);
        self.initial_norm.get_or_insert(n);
        self.last_norm = n;
        self.last_time = t;
    }

    fn on_jump(&mut self, ev: &JumpEvent<'_>) {
        let l = self.sys.layout;
        let e = self.sys.sampling_errors(ev.mode_after, ev.after);
        let ok = match ev.kind {
            JumpKind::SampleY => e.y_err == 0.0,
            JumpKind::SampleU => e.z_err == 0.0,
            _ => e.y_err == 0.0 && e.z_err == 0.0,
        };
        if !ok {
            self.reset_violations += 1;
        }
        if ev.kind == JumpKind::Switch && ev.before[l.tau()] < 1.0 - 1e-9 {
            self.timer_violations += 1;
        }
    }
}

/// Per-mode data of the composed certificate needed by the design
/// inequalities.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignCertificate {
    /// decay of `V_c` in terms of `V_c`
    pub alpha_c: CF,
    /// lower bound of `V_c` in terms of `|x|`
    pub alpha_c_lower: CF,
    /// bound `|h(x)| ≤ α_h(|x|)`
    pub alpha_h: CF,
    /// weight of `V_o` in the composed certificate
    pub nu: ScalarFn,
    pub theta: CF,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub criterion: String,
    pub mode: usize,
    pub pass: bool,
    /// `min (rhs − lhs)/rhs` over the grid
    pub worst_margin: f64,
    pub worst_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub lambda: f64,
    pub pass: bool,
    pub results: Vec<CriterionResult>,
}

/// Relative slack accepted on inequalities that hold with equality by
/// construction.
const DESIGN_REL_TOL: f64 = 1e-12;

fn check_pair<L, R>(name: &str, mode: usize, grid: &[f64], lhs: L, rhs: R) -> CriterionResult
where
    L: Fn(f64) -> f64,
    R: Fn(f64) -> f64,
{
    let mut worst = (f64::INFINITY, f64::NAN);
    for &s in grid {
        let (a, b) = (lhs(s), rhs(s));
        let margin = if b > 0.0 { (b - a) / b } else if a <= 0.0 { 0.0 } else { f64::NEG_INFINITY };
        let margin = if margin.is_nan() { f64::NEG_INFINITY } else { margin };
        if margin < worst.0 {
            worst = (margin, s);
        }
    }
    CriterionResult {
        criterion: name.to_string(),
        mode,
        pass: worst.0 >= -DESIGN_REL_TOL,
        worst_margin: worst.0,
        worst_s: worst.1,
    }
}

/// D1: `β` vanishes at 0, increases strictly and has finite difference
/// quotients on the grid.
fn check_differentiable_class_k(name: &str, mode: usize, beta: &CF, grid: &[f64]) -> CriterionResult {
    let at_zero = beta.eval(0.0).map_or(false, |v| v == 0.0);
    let mut worst = (f64::INFINITY, f64::NAN);
    for &s in grid {
        let h = 1e-6 * s;
        let slope = match (beta.eval(s + h), beta.eval(s - h)) {
            (Ok(a), Ok(b)) => (a - b) / (2.0 * h),
            _ => f64::NAN,
        };
        let m = if slope.is_finite() { slope } else { f64::NEG_INFINITY };
        if m < worst.0 {
            worst = (m, s);
        }
    }
    CriterionResult {
        criterion: name.to_string(),
        mode,
        pass: at_zero && worst.0 > 0.0,
        worst_margin: worst.0,
        worst_s: worst.1,
    }
}

/// Default grid for the design inequalities.
pub fn design_grid() -> Vec<f64> {
    let (lo, hi, n) = (1e-6f64, 1e6f64, 200usize);
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}

/// Evaluates D1–D3 for every mode on `grid`.
pub fn check_design_criteria(
    filters: &[FilterDef],
    triggers: &[TriggerDef],
    certs: &[DesignCertificate],
    lambda: f64,
    grid: &[f64],
) -> DesignReport {
    let ev = |f: &CF, s: f64| f.eval(s).unwrap_or(f64::NAN);
    let mut results = Vec::new();
    for (p, ((f, tr), c)) in filters.iter().zip(triggers).zip(certs).enumerate() {
        results.push(check_differentiable_class_k("D1-o", p, &f.beta_o, grid));
        results.push(check_differentiable_class_k("D1-c", p, &f.beta_c, grid));
        results.push(check_pair(
            "D2-o",
            p,
            grid,
            |s| {
                let m = ev(&tr.mu_o, s);
                ev(&f.gamma_o, m) * (1.0 + c.nu.eval(ev(&c.theta, m)).unwrap_or(f64::NAN))
            },
            |s| (1.0 - lambda) * ev(&f.beta_o, s),
        ));
        results.push(check_pair(
            "D2-c",
            p,
            grid,
            |s| 2.0 * ev(&f.gamma_c, ev(&tr.mu_c, s)),
            |s| (1.0 - lambda) * ev(&f.beta_c, s),
        ));
        let inv_lower = CF::inverse(c.alpha_c_lower.clone());
        results.push(check_pair(
            "D3-o",
            p,
            grid,
            |s| ev(&f.rho_o, ev(&c.alpha_h, inv_lower.eval(s).unwrap_or(f64::NAN))),
            |s| 0.5 * (1.0 - lambda) * ev(&c.alpha_c, s),
        ));
        results.push(check_pair(
            "D3-c",
            p,
            grid,
            |s| ev(&f.rho_c, s),
            |s| (1.0 - lambda) * ev(&f.gamma_c, s).min(0.5 * ev(&c.alpha_c, ev(&c.alpha_c_lower, s))),
        ));
    }
    DesignReport {
        lambda,
        pass: !results.is_empty() && results.iter().all(|r| r.pass),
        results,
    }
}

/// Quadratic filters with square-root triggers built from scalar gains.
pub fn quadratic_filter(a_o: f64, a_c: f64, rho_o: f64, rho_c: f64, gbar_o: f64, gbar_c: f64) -> FilterDef {
    FilterDef {
        beta_o: CF::linear(a_o),
        beta_c: CF::linear(a_c),
        rho_o: CF::power(rho_o, 2.0),
        rho_c: CF::power(rho_c, 2.0),
        gamma_o: CF::power(gbar_o, 2.0),
        gamma_c: CF::power(gbar_c, 2.0),
    }
}

pub fn sqrt_trigger(mu_o: f64, mu_c: f64) -> TriggerDef {
    TriggerDef {
        mu_o: CF::power(mu_o, 0.5),
        mu_c: CF::power(mu_c, 0.5),
    }
}

/// Log-spaced helper re-exported for callers assembling custom grids.
pub fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    kfun::log_grid(lo, hi, per_decade)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hybrid_sim::{simulate, SimConfig};

    /// Scalar plant `ẋ = −x + u`, `y = x`, observer with `L = 1`, `u = −z`.
    struct Scalar;

    impl Plant for Scalar {
        fn n_modes(&self) -> usize {
            1
        }
        fn n_x(&self) -> usize {
            1
        }
        fn n_u(&self) -> usize {
            1
        }
        fn n_y(&self) -> usize {
            1
        }
        fn flow(&self, _m: usize, x: &[f64], u: &[f64], dx: &mut [f64]) {
            dx[0] = -x[0] + u[0];
        }
        fn output(&self, _m: usize, x: &[f64], y: &mut [f64]) {
            y[0] = x[0];
        }
    }

    impl Controller for Scalar {
        fn n_modes(&self) -> usize {
            1
        }
        fn n_z(&self) -> usize {
            1
        }
        fn flow(&self, _m: usize, z: &[f64], u: &[f64], y: &[f64], dz: &mut [f64]) {
            dz[0] = -z[0] + u[0] + (y[0] - z[0]);
        }
        fn control(&self, _m: usize, z: &[f64], u: &mut [f64]) {
            u[0] = -z[0];
        }
    }

    fn scalar_loop() -> ClosedLoop {
        build_closed_loop(
            Arc::new(Scalar),
            Arc::new(Scalar),
            vec![quadratic_filter(1.0, 1.0, 0.1, 0.1, 1.0, 1.0)],
            vec![sqrt_trigger(0.3, 0.3)],
            AdtParams { tau_a: 1.0, n0: 1.0 },
            SwitchingSignal::constant(0),
        )
        .unwrap()
    }

    #[test]
    fn mode_mismatch_is_rejected() {
        let r = build_closed_loop(
            Arc::new(Scalar),
            Arc::new(Scalar),
            vec![],
            vec![sqrt_trigger(0.3, 0.3)],
            AdtParams { tau_a: 1.0, n0: 1.0 },
            SwitchingSignal::constant(0),
        );
        assert!(matches!(r, Err(LoopError::Config(_))));
    }

    #[test]
    fn origin_is_an_equilibrium() {
        let cl = scalar_loop();
        let s = cl.initial_state(&[0.0], &[0.0], (0.0, 0.0), 1.0);
        let mut ds = vec![1.0; cl.dim()];
        cl.flow(0.0, 0, &s, &mut ds);
        assert!(ds.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn no_event_at_start() {
        let cl = scalar_loop();
        let s = cl.initial_state(&[2.0], &[-1.0], (1.0, 1.0), 1.0);
        let mut g = [0.0; 3];
        cl.guards(0.0, 0, &s, &mut g);
        assert!(g[GUARD_Y] < 0.0 && g[GUARD_U] < 0.0 && g[GUARD_SWITCH] < 0.0);
    }

    #[test]
    fn sampling_resets_and_flow_set() {
        let cl = scalar_loop();
        let s = cl.initial_state(&[2.0], &[-1.0], (1.0, 1.0), 1.0);
        let cfg = SimConfig {
            dt_base: 1e-3,
            t_max: 8.0,
            ..SimConfig::default()
        };
        let mut mon = LoopMonitor::new(&cl, cfg.event_tol);
        let mut stats = crate::hybrid_sim::EventStats::default();
        let mut obs = (&mut mon, &mut stats);
        simulate(&cl, &s, 0, &cfg, &mut obs).unwrap();
        assert!(stats.count(JumpKind::SampleY) > 0 && stats.count(JumpKind::SampleU) > 0);
        assert_eq!(mon.flow_set_violations, 0, "excess {}", mon.worst_flow_set_excess);
        assert_eq!(mon.reset_violations, 0);
        assert!(mon.min_eta > 0.0);
        assert!(mon.last_norm < 1e-2 * mon.initial_norm.unwrap());
        assert!(stats.min_gap_or(JumpKind::SampleY, 8.0) > 0.0);
    }

    fn quad_cert(a_c: f64, lpc: f64, c_norm: f64, nu: f64) -> DesignCertificate {
        DesignCertificate {
            alpha_c: CF::linear(a_c),
            alpha_c_lower: CF::power(lpc, 2.0),
            alpha_h: CF::linear(c_norm),
            nu: ScalarFn::constant(nu),
            theta: CF::identity(),
        }
    }

    #[test]
    fn vanishing_triggers_pass_d2() {
        let f = quadratic_filter(1.0, 1.0, 0.0, 0.0, 1.0, 1.0);
        let tr = TriggerDef {
            mu_o: CF::zero(),
            mu_c: CF::zero(),
        };
        let rep = check_design_criteria(&[f], &[tr], &[quad_cert(1.0, 1.0, 1.0, 1.0)], 0.5, &design_grid());
        assert!(rep.results.iter().filter(|r| r.criterion.starts_with("D2")).all(|r| r.pass));
    }

    #[test]
    fn boundary_triggers_pass_and_halved_decay_fails() {
        let (lambda, nu, g) = (0.2, 3.0, 2.0);
        let mu_sq = (1.0 - lambda) * 1.0 / ((1.0 + nu) * g);
        let f = quadratic_filter(1.0, 1.0, 0.01, 0.01, g, g);
        let tr = sqrt_trigger(mu_sq.sqrt(), ((1.0 - lambda) / (2.0 * g)).sqrt());
        let cert = quad_cert(1.0, 1.0, 1.0, nu);
        let rep = check_design_criteria(&[f.clone()], &[tr.clone()], &[cert.clone()], lambda, &design_grid());
        assert!(rep.pass, "{rep:?}");
        let mut weak = f;
        weak.beta_o = CF::linear(0.5);
        let rep = check_design_criteria(&[weak], &[tr], &[cert], lambda, &design_grid());
        let d2 = rep.results.iter().find(|r| r.criterion == "D2-o").unwrap();
        assert!(!d2.pass && !rep.pass);
        assert!((d2.worst_margin + 1.0).abs() < 1e-12);
        assert!(d2.worst_s.is_finite());
    }
}
