//! Fixed-step simulation of hybrid systems on hybrid time domains.
//!
//! Flows are integrated with classical RK4. After every step each guard is
//! checked for a sign change into the jump set (`g ≥ 0`); the earliest
//! crossing is located by bisection on the step length and exactly one jump
//! is applied per hybrid instant, following a fixed kind priority.

pub mod adt;
pub mod cascade;
pub mod csv;
pub mod events;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adt::{generate_adt_signal, validate_adt, AdtGenerator, AdtParams, AdtValidation, SwitchEvent, SwitchingSignal};
pub use events::{EventStats, KindStats};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("jump budget exhausted at t = {t} after a flow of {last_flow} s (Zeno suspected)")]
    ZenoSuspected { t: f64, last_flow: f64 },
    #[error("non-finite state at t = {t}, j = {j}")]
    StepFailure { t: f64, j: usize },
    #[error("invalid simulation setup: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, SimError>;

/// Category of a jump.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpKind {
    SampleY,
    SampleU,
    Switch,
    /// Any other reset.
    Reset,
}

impl JumpKind {
    pub fn as_str(self) -> &'static str {
        match self {
            JumpKind::SampleY => "sample_y",
            JumpKind::SampleU => "sample_u",
            JumpKind::Switch => "switch",
            JumpKind::Reset => "reset",
        }
    }
}

/// Flow map, guards and jump maps of a hybrid system with a finite mode set.
///
/// A jump through guard `i` is enabled when `g_i ≥ 0`.
pub trait HybridSystem: Sync {
    fn dim(&self) -> usize;
    fn n_guards(&self) -> usize;
    fn flow(&self, t: f64, mode: usize, x: &[f64], dx: &mut [f64]);
    fn guards(&self, t: f64, mode: usize, x: &[f64], out: &mut [f64]);
    fn guard_kind(&self, idx: usize) -> JumpKind;
    /// Applies the reset of guard `idx` in place and returns the new mode.
    fn jump(&self, idx: usize, t: f64, mode: usize, x: &mut [f64], rng: &mut ChaCha8Rng) -> usize;
    /// Maps a state back onto the flow set after an integration step.
    fn project(&self, _x: &mut [f64]) {}

    fn state_names(&self) -> Vec<String> {
        (0..self.dim()).map(|i| format!("x{i}")).collect()
    }

    fn guard_names(&self) -> Vec<String> {
        (0..self.n_guards()).map(|i| format!("g_{}", self.guard_kind(i).as_str())).collect()
    }

    /// Extra per-row quantities for export.
    fn diagnostic_names(&self) -> Vec<String> {
        Vec::new()
    }

    fn diagnostics(&self, _t: f64, _mode: usize, _x: &[f64], _out: &mut Vec<f64>) {}
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt_base: f64,
    pub event_tol: f64,
    pub t_max: f64,
    pub j_max: usize,
    pub seed: u64,
    /// Jump kinds in firing order when several guards are enabled.
    pub priority: Vec<JumpKind>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt_base: 1e-3,
            event_tol: 1e-9,
            t_max: 10.0,
            j_max: 1_000_000,
            seed: 0,
            priority: vec![JumpKind::SampleY, JumpKind::SampleU, JumpKind::Switch, JumpKind::Reset],
        }
    }
}

/// A jump as seen by observers.
#[derive(Debug, Clone, Copy)]
pub struct JumpEvent<'a> {
    pub t: f64,
    /// jump counter after the jump
    pub j: usize,
    pub kind: JumpKind,
    pub guard: usize,
    pub mode_before: usize,
    pub mode_after: usize,
    pub before: &'a [f64],
    pub after: &'a [f64],
}

/// Receives the simulated arc as it is produced.
pub trait Observer {
    /// Called after every integration step, at the start of every flow
    /// interval and right before every jump (`boundary = true` for the
    /// latter two and for the final point).
    fn on_flow(&mut self, _t: f64, _j: usize, _mode: usize, _x: &[f64], _boundary: bool) {}
    fn on_jump(&mut self, _ev: &JumpEvent<'_>) {}
}

impl Observer for () {}

impl<O: Observer + ?Sized> Observer for &mut O {
    fn on_flow(&mut self, t: f64, j: usize, mode: usize, x: &[f64], boundary: bool) {
        (**self).on_flow(t, j, mode, x, boundary);
    }

    fn on_jump(&mut self, ev: &JumpEvent<'_>) {
        (**self).on_jump(ev);
    }
}

impl<A: Observer, B: Observer> Observer for (A, B) {
    fn on_flow(&mut self, t: f64, j: usize, mode: usize, x: &[f64], boundary: bool) {
        self.0.on_flow(t, j, mode, x, boundary);
        self.1.on_flow(t, j, mode, x, boundary);
    }

    fn on_jump(&mut self, ev: &JumpEvent<'_>) {
        self.0.on_jump(ev);
        self.1.on_jump(ev);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub j: usize,
    pub mode: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    pub t: f64,
    pub j: usize,
    pub kind: JumpKind,
    pub guard: usize,
    pub mode_before: usize,
    pub mode_after: usize,
    pub state_before: Vec<f64>,
    pub state_after: Vec<f64>,
}

/// Stored hybrid arc: flow segments indexed by the jump counter plus the
/// jump log.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HybridArc {
    pub segments: Vec<Segment>,
    pub jump_log: Vec<JumpRecord>,
}

impl HybridArc {
    pub fn final_state(&self) -> Option<&[f64]> {
        self.segments.last().and_then(|s| s.states.last()).map(Vec::as_slice)
    }

    pub fn final_time(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.t_end)
    }

    pub fn n_points(&self) -> usize {
        self.segments.iter().map(|s| s.times.len()).sum()
    }

    /// Segments chain in time, `j` increases by one per jump, times are
    /// nondecreasing inside segments, and the log agrees with the segments.
    pub fn is_valid_time_domain(&self) -> bool {
        let chain = self.segments.windows(2).all(|w| w[0].t_end == w[1].t_start && w[1].j == w[0].j + 1);
        let inner = self.segments.iter().enumerate().all(|(i, s)| {
            s.j == i
                && s.times.windows(2).all(|w| w[0] <= w[1])
                && s.times.first() == Some(&s.t_start)
                && s.times.last() == Some(&s.t_end)
        });
        let log = self.jump_log.len() + 1 == self.segments.len()
            && self
                .jump_log
                .iter()
                .zip(self.segments.iter().skip(1))
                .all(|(r, s)| r.j == s.j && r.t == s.t_start && r.mode_after == s.mode);
        chain && inner && log
    }
}

/// Observer that stores the arc, keeping every `stride`-th step plus all
/// boundary points.
#[derive(Debug, Clone, Default)]
pub struct ArcRecorder {
    pub stride: usize,
    pub arc: HybridArc,
    counter: usize,
}

impl ArcRecorder {
    pub fn new(stride: usize) -> Self {
        Self {
            stride: stride.max(1),
            arc: HybridArc::default(),
            counter: 0,
        }
    }
}

impl Observer for ArcRecorder {
    fn on_flow(&mut self, t: f64, j: usize, mode: usize, x: &[f64], boundary: bool) {
        if self.arc.segments.len() <= j {
            self.arc.segments.push(Segment {
                j,
                mode,
                t_start: t,
                t_end: t,
                times: Vec::new(),
                states: Vec::new(),
            });
            self.counter = 0;
        }
        let seg = self.arc.segments.last_mut().expect("segment exists");
        seg.t_end = t;
        let keep = boundary || self.counter % self.stride == 0;
        self.counter += 1;
        if keep && seg.times.last() != Some(&t) {
            seg.times.push(t);
            seg.states.push(x.to_vec());
        } else if keep {
            // same instant reported twice: keep the latest value
            *seg.states.last_mut().expect("non-empty") = x.to_vec();
        }
    }

    fn on_jump(&mut self, ev: &JumpEvent<'_>) {
        self.arc.jump_log.push(JumpRecord {
            t: ev.t,
            j: ev.j,
            kind: ev.kind,
            guard: ev.guard,
            mode_before: ev.mode_before,
            mode_after: ev.mode_after,
            state_before: ev.before.to_vec(),
            state_after: ev.after.to_vec(),
        });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub t_end: f64,
    pub jumps: usize,
    pub steps: usize,
    pub mode: usize,
    pub state: Vec<f64>,
    /// Shortest flow interval between two consecutive jumps.
    pub min_flow_between_jumps: Option<f64>,
}

/// Scratch space for RK4 so that stepping never allocates.
struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    fn step<S: HybridSystem + ?Sized>(&mut self, sys: &S, t: f64, mode: usize, x: &[f64], h: f64, out: &mut [f64]) {
        let n = x.len();
        sys.flow(t, mode, x, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k1[i];
        }
        sys.flow(t + 0.5 * h, mode, &self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k2[i];
        }
        sys.flow(t + 0.5 * h, mode, &self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = x[i] + h * self.k3[i];
        }
        sys.flow(t + h, mode, &self.tmp, &mut self.k4);
        for i in 0..n {
            out[i] = x[i] + h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        sys.project(out);
    }
}

fn crossed(before: f64, after: f64) -> bool {
    (before < 0.0 && after >= 0.0) || (before == 0.0 && after > 0.0)
}

fn ordered_guards<S: HybridSystem + ?Sized>(sys: &S, priority: &[JumpKind]) -> Vec<usize> {
    let rank = |k: JumpKind| priority.iter().position(|&p| p == k).unwrap_or(priority.len());
    let mut idx: Vec<usize> = (0..sys.n_guards()).collect();
    idx.sort_by_key(|&i| rank(sys.guard_kind(i)));
    idx
}

/// Simulates from `(x0, mode0)` until `t_max` or `j_max` and streams the arc
/// to `obs`.
pub fn simulate<S, O>(sys: &S, x0: &[f64], mode0: usize, cfg: &SimConfig, obs: &mut O) -> Result<SimSummary>
where
    S: HybridSystem + ?Sized,
    O: Observer + ?Sized,
{
    let n = sys.dim();
    if x0.len() != n {
        return Err(SimError::Config(format!("initial state has {} entries, expected {n}", x0.len())));
    }
    if !(cfg.dt_base > 0.0 && cfg.event_tol > 0.0 && cfg.t_max >= 0.0) {
        return Err(SimError::Config("dt_base and event_tol must be positive, t_max nonnegative".into()));
    }
    let order = ordered_guards(sys, &cfg.priority);
    let ng = sys.n_guards();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rk = Rk4::new(n);
    let mut x = x0.to_vec();
    let mut x_new = vec![0.0; n];
    let mut x_trial = vec![0.0; n];
    let mut before = vec![0.0; n];
    let mut g = vec![0.0; ng];
    let mut g_new = vec![0.0; ng];
    let mut g_mid = vec![0.0; ng];
    let (mut t, mut j, mut mode) = (0.0f64, 0usize, mode0);
    let mut steps = 0usize;
    let mut last_jump_t: Option<f64> = None;
    let mut min_flow: Option<f64> = None;
    let mut pending: Option<usize> = None;
    let end_eps = 1e-12 * cfg.t_max.max(1.0);

    obs.on_flow(t, j, mode, &x, true);
    loop {
        // at most one jump per hybrid instant
        let fire = pending.take().or_else(|| {
            sys.guards(t, mode, &x, &mut g);
            order.iter().copied().find(|&i| g[i] > 0.0)
        });
        if let Some(idx) = fire {
            if j >= cfg.j_max {
                let last_flow = last_jump_t.map_or(t, |lt| t - lt);
                if last_flow < 10.0 * cfg.event_tol {
                    return Err(SimError::ZenoSuspected { t, last_flow });
                }
                break;
            }
            before.copy_from_slice(&x);
            let new_mode = sys.jump(idx, t, mode, &mut x, &mut rng);
            if x.iter().any(|v| !v.is_finite()) {
                return Err(SimError::StepFailure { t, j });
            }
            if let Some(lt) = last_jump_t {
                let gap = t - lt;
                min_flow = Some(min_flow.map_or(gap, |m: f64| m.min(gap)));
            }
            last_jump_t = Some(t);
            j += 1;
            obs.on_jump(&JumpEvent {
                t,
                j,
                kind: sys.guard_kind(idx),
                guard: idx,
                mode_before: mode,
                mode_after: new_mode,
                before: &before,
                after: &x,
            });
            mode = new_mode;
            obs.on_flow(t, j, mode, &x, true);
            continue;
        }
        if cfg.t_max - t <= end_eps {
            break;
        }
        // absorb a remainder below end_eps into this step so the arc ends
        // exactly at t_max
        let rest = cfg.t_max - t;
        let h = if rest - cfg.dt_base <= end_eps { rest } else { cfg.dt_base };
        sys.guards(t, mode, &x, &mut g);
        rk.step(sys, t, mode, &x, h, &mut x_new);
        steps += 1;
        if x_new.iter().any(|v| !v.is_finite()) {
            return Err(SimError::StepFailure { t: t + h, j });
        }
        sys.guards(t + h, mode, &x_new, &mut g_new);
        if !(0..ng).any(|i| crossed(g[i], g_new[i])) {
            t = if h == rest { cfg.t_max } else { t + h };
            std::mem::swap(&mut x, &mut x_new);
            obs.on_flow(t, j, mode, &x, t >= cfg.t_max);
            continue;
        }
        // bisect on the step length for the earliest crossing
        let (mut lo, mut hi) = (0.0f64, h);
        for _ in 0..200 {
            let g_hi_max = (0..ng)
                .filter(|&i| crossed(g[i], g_new[i]))
                .map(|i| g_new[i])
                .fold(f64::NEG_INFINITY, f64::max);
            if hi - lo <= cfg.event_tol && g_hi_max <= cfg.event_tol {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            rk.step(sys, t, mode, &x, mid, &mut x_trial);
            sys.guards(t + mid, mode, &x_trial, &mut g_mid);
            if (0..ng).any(|i| crossed(g[i], g_mid[i])) {
                hi = mid;
                std::mem::swap(&mut x_new, &mut x_trial);
                std::mem::swap(&mut g_new, &mut g_mid);
            } else {
                lo = mid;
            }
        }
        t += hi;
        std::mem::swap(&mut x, &mut x_new);
        pending = order.iter().copied().find(|&i| crossed(g[i], g_new[i]));
        obs.on_flow(t, j, mode, &x, true);
    }
    Ok(SimSummary {
        t_end: t,
        jumps: j,
        steps,
        mode,
        state: x,
        min_flow_between_jumps: min_flow,
    })
}

/// Convenience wrapper storing the full arc.
pub fn simulate_arc<S: HybridSystem + ?Sized>(sys: &S, x0: &[f64], mode0: usize, cfg: &SimConfig) -> Result<HybridArc> {
    let mut rec = ArcRecorder::new(1);
    simulate(sys, x0, mode0, cfg, &mut rec)?;
    Ok(rec.arc)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `ẋ = −x` with an optional reset `x⁺ = 1` when `x` falls to 0.5.
    struct Decay {
        with_guard: bool,
    }

    impl HybridSystem for Decay {
        fn dim(&self) -> usize {
            1
        }
        fn n_guards(&self) -> usize {
            usize::from(self.with_guard)
        }
        fn flow(&self, _t: f64, _m: usize, x: &[f64], dx: &mut [f64]) {
            dx[0] = -x[0];
        }
        fn guards(&self, _t: f64, _m: usize, x: &[f64], out: &mut [f64]) {
            if self.with_guard {
                out[0] = 0.5 - x[0];
            }
        }
        fn guard_kind(&self, _idx: usize) -> JumpKind {
            JumpKind::Reset
        }
        fn jump(&self, _idx: usize, _t: f64, mode: usize, x: &mut [f64], _rng: &mut ChaCha8Rng) -> usize {
            x[0] = 1.0;
            mode
        }
    }

    fn cfg(dt: f64, t_max: f64) -> SimConfig {
        SimConfig {
            dt_base: dt,
            t_max,
            ..SimConfig::default()
        }
    }

    #[test]
    fn exponential_flow() {
        let arc = simulate_arc(&Decay { with_guard: false }, &[1.0], 0, &cfg(1e-3, 1.0)).unwrap();
        let x = arc.final_state().unwrap()[0];
        assert!((x - (-1f64).exp()).abs() <= 1e-8);
        assert_eq!(arc.final_time(), 1.0);
        assert!(arc.is_valid_time_domain());
    }

    #[test]
    fn fourth_order_convergence() {
        let err = |dt: f64| {
            let s = simulate(&Decay { with_guard: false }, &[1.0], 0, &cfg(dt, 1.0), &mut ()).unwrap();
            (s.state[0] - (-1f64).exp()).abs()
        };
        let (e1, e2) = (err(0.1), err(0.05));
        assert!(e1 / e2 >= 8.0, "{e1} {e2}");
    }

    #[test]
    fn first_crossing_time() {
        let arc = simulate_arc(&Decay { with_guard: true }, &[1.0], 0, &cfg(1e-2, 2.0)).unwrap();
        let first = &arc.jump_log[0];
        assert!((first.t - 2f64.ln()).abs() <= 1e-6, "{}", first.t);
        assert_eq!(first.state_after, vec![1.0]);
        assert_eq!(arc.jump_log.len(), 2);
        assert!((arc.jump_log[1].t - 2.0 * 2f64.ln()).abs() <= 1e-6);
        assert!(arc.is_valid_time_domain());
    }

    #[test]
    fn empty_horizon() {
        let arc = simulate_arc(&Decay { with_guard: true }, &[1.0], 0, &cfg(1e-2, 0.0)).unwrap();
        assert_eq!(arc.n_points(), 1);
        assert_eq!(arc.final_state().unwrap(), &[1.0]);
        assert!(arc.jump_log.is_empty());
    }

    struct Chatter;

    impl HybridSystem for Chatter {
        fn dim(&self) -> usize {
            1
        }
        fn n_guards(&self) -> usize {
            1
        }
        fn flow(&self, _t: f64, _m: usize, _x: &[f64], dx: &mut [f64]) {
            dx[0] = 0.0;
        }
        fn guards(&self, _t: f64, _m: usize, _x: &[f64], out: &mut [f64]) {
            out[0] = 1.0;
        }
        fn guard_kind(&self, _idx: usize) -> JumpKind {
            JumpKind::Reset
        }
        fn jump(&self, _idx: usize, _t: f64, mode: usize, _x: &mut [f64], _rng: &mut ChaCha8Rng) -> usize {
            mode
        }
    }

    #[test]
    fn permanent_jump_set_is_zeno() {
        let c = SimConfig {
            j_max: 50,
            ..cfg(1e-2, 1.0)
        };
        let r = simulate(&Chatter, &[0.0], 0, &c, &mut ());
        assert!(matches!(r, Err(SimError::ZenoSuspected { .. })));
    }

    struct Blowup;

    impl HybridSystem for Blowup {
        fn dim(&self) -> usize {
            1
        }
        fn n_guards(&self) -> usize {
            0
        }
        fn flow(&self, _t: f64, _m: usize, x: &[f64], dx: &mut [f64]) {
            dx[0] = x[0] * x[0];
        }
        fn guards(&self, _t: f64, _m: usize, _x: &[f64], _out: &mut [f64]) {}
        fn guard_kind(&self, _idx: usize) -> JumpKind {
            JumpKind::Reset
        }
        fn jump(&self, _idx: usize, _t: f64, mode: usize, _x: &mut [f64], _rng: &mut ChaCha8Rng) -> usize {
            mode
        }
    }

    #[test]
    fn finite_escape_is_a_step_failure() {
        let r = simulate(&Blowup, &[1.0], 0, &cfg(0.01, 2.0), &mut ());
        assert!(matches!(r, Err(SimError::StepFailure { .. })));
    }

    #[test]
    fn strided_recording_keeps_boundaries() {
        let mut rec = ArcRecorder::new(10);
        simulate(&Decay { with_guard: true }, &[1.0], 0, &cfg(1e-3, 1.0), &mut rec).unwrap();
        let arc = rec.arc;
        assert!(arc.is_valid_time_domain());
        assert!(arc.n_points() < 200);
        assert_eq!(arc.segments[0].t_end, arc.jump_log[0].t);
    }
}
