//! Switched cascades as hybrid systems, switching along a precomputed
//! schedule with a dwell-time budget `τ` carried in the state.
//!
//! State layout: `[x (n_c), e (n_o), τ, k]` where `k` counts the schedule
//! entries already consumed.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AdtParams, HybridSystem, JumpKind, SwitchingSignal};
use crate::cascade_cert::{CascadeDynamics, JumpMaps};

/// External input `d(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Disturbance {
    Zero { dim: usize },
    /// `values[i]` on `[i·period, (i+1)·period)`; the last value persists.
    PiecewiseConstant { period: f64, values: Vec<Vec<f64>> },
}

impl Disturbance {
    pub fn zero(dim: usize) -> Self {
        Disturbance::Zero { dim }
    }

    /// Random piecewise-constant input with every component in
    /// `[−level/√n, level/√n]`, so that `|d| ≤ level`.
    pub fn random(dim: usize, level: f64, period: f64, horizon: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = (horizon / period).ceil() as usize + 1;
        let half = level / (dim.max(1) as f64).sqrt();
        let values = (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..=1.0) * half).collect())
            .collect();
        Disturbance::PiecewiseConstant { period, values }
    }

    pub fn dim(&self) -> usize {
        match self {
            Disturbance::Zero { dim } => *dim,
            Disturbance::PiecewiseConstant { values, .. } => values.first().map_or(0, Vec::len),
        }
    }

    /// Writes `d(t)` into `out`.
    pub fn eval(&self, t: f64, out: &mut [f64]) {
        match self {
            Disturbance::Zero { .. } => out.fill(0.0),
            Disturbance::PiecewiseConstant { period, values } => {
                let i = ((t / period).floor().max(0.0) as usize).min(values.len() - 1);
                out.copy_from_slice(&values[i]);
            }
        }
    }

    pub fn sup_norm(&self) -> f64 {
        match self {
            Disturbance::Zero { .. } => 0.0,
            Disturbance::PiecewiseConstant { values, .. } => values
                .iter()
                .map(|v| v.iter().map(|c| c * c).sum::<f64>().sqrt())
                .fold(0.0, f64::max),
        }
    }
}

const MAX_INPUT_DIM: usize = 16;

pub struct CascadeHybrid {
    pub dynamics: Arc<dyn CascadeDynamics>,
    pub jumps: JumpMaps,
    pub schedule: SwitchingSignal,
    pub adt: AdtParams,
    pub disturbance: Disturbance,
}

impl CascadeHybrid {
    pub fn new(
        dynamics: Arc<dyn CascadeDynamics>,
        schedule: SwitchingSignal,
        adt: AdtParams,
        disturbance: Disturbance,
    ) -> Self {
        Self {
            dynamics,
            jumps: JumpMaps::Identity,
            schedule,
            adt,
            disturbance,
        }
    }

    fn split(&self) -> (usize, usize, usize) {
        self.dynamics.dims()
    }

    /// Initial hybrid state `[x0, e0, τ0, 0]`.
    pub fn initial_state(&self, x0: &[f64], e0: &[f64], tau0: f64) -> Vec<f64> {
        let mut s = Vec::with_capacity(x0.len() + e0.len() + 2);
        s.extend_from_slice(x0);
        s.extend_from_slice(e0);
        s.push(tau0.min(self.adt.n0));
        s.push(0.0);
        s
    }

    /// `(x, e, τ)` views of a hybrid state.
    pub fn parts<'a>(&self, state: &'a [f64]) -> (&'a [f64], &'a [f64], f64) {
        let (nc, no, _) = self.split();
        (&state[..nc], &state[nc..nc + no], state[nc + no])
    }

    fn next_switch(&self, state: &[f64]) -> Option<usize> {
        let (nc, no, _) = self.split();
        let k = state[nc + no + 1] as usize;
        (k < self.schedule.switches.len()).then_some(k)
    }
}

impl HybridSystem for CascadeHybrid {
    fn dim(&self) -> usize {
        let (nc, no, _) = self.split();
        nc + no + 2
    }

    fn n_guards(&self) -> usize {
        1
    }

    fn flow(&self, t: f64, mode: usize, s: &[f64], ds: &mut [f64]) {
        let (nc, no, nd) = self.split();
        let mut d = [0.0; MAX_INPUT_DIM];
        self.disturbance.eval(t, &mut d[..nd]);
        let (x, e) = (&s[..nc], &s[nc..nc + no]);
        let (dx, rest) = ds.split_at_mut(nc);
        let (de, timer) = rest.split_at_mut(no);
        self.dynamics.f_c(mode, x, e, dx);
        self.dynamics.f_o(mode, e, &d[..nd], de);
        timer[0] = if s[nc + no] < self.adt.n0 { 1.0 / self.adt.tau_a } else { 0.0 };
        timer[1] = 0.0;
    }

    fn guards(&self, t: f64, _mode: usize, s: &[f64], out: &mut [f64]) {
        out[0] = match self.next_switch(s) {
            Some(k) => t - self.schedule.switches[k].t,
            None => -1.0,
        };
    }

    fn guard_kind(&self, _idx: usize) -> JumpKind {
        JumpKind::Switch
    }

    fn jump(&self, _idx: usize, t: f64, mode: usize, s: &mut [f64], _rng: &mut ChaCha8Rng) -> usize {
        let Some(k) = self.next_switch(s) else {
            return mode;
        };
        let (nc, no, nd) = self.split();
        let mut d = [0.0; MAX_INPUT_DIM];
        self.disturbance.eval(t, &mut d[..nd]);
        if !matches!(self.jumps, JumpMaps::Identity) {
            let (x, e) = (s[..nc].to_vec(), s[nc..nc + no].to_vec());
            let xp = self.jumps.apply_c(&x, &e);
            let ep = self.jumps.apply_o(&e, &d[..nd]);
            s[..nc].copy_from_slice(&xp);
            s[nc..nc + no].copy_from_slice(&ep);
        }
        s[nc + no] -= 1.0;
        s[nc + no + 1] += 1.0;
        self.schedule.switches[k].mode
    }

    fn project(&self, s: &mut [f64]) {
        let (nc, no, _) = self.split();
        s[nc + no] = s[nc + no].min(self.adt.n0);
    }

    fn state_names(&self) -> Vec<String> {
        let (nc, no, _) = self.split();
        (0..nc)
            .map(|i| format!("x{i}"))
            .chain((0..no).map(|i| format!("e{i}")))
            .chain(["tau".to_string(), "switch_index".to_string()])
            .collect()
    }
}
