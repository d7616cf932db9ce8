//! Streaming statistics on jump times.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{JumpEvent, JumpKind, Observer};

/// Number of decades in the gap histogram, starting at `1e-9` s.
const HIST_DECADES: usize = 13;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct KindStats {
    pub count: usize,
    /// smallest gap between consecutive events of this kind
    pub min_gap: Option<f64>,
    /// gaps per decade: bin `i` covers `[10^(i−9), 10^(i−8))`, with the
    /// first and last bins open-ended
    pub histogram: Vec<usize>,
    /// consecutive events of this kind at the same instant
    pub zero_gaps: usize,
    #[serde(skip)]
    last: Option<f64>,
}

/// Observer collecting per-kind counts and inter-event gaps.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EventStats {
    pub kinds: BTreeMap<String, KindStats>,
}

impl EventStats {
    pub fn record(&mut self, kind: JumpKind, t: f64) {
        let k = self.kinds.entry(kind.as_str().to_string()).or_insert_with(|| KindStats {
            histogram: vec![0; HIST_DECADES],
            ..KindStats::default()
        });
        k.count += 1;
        if let Some(prev) = k.last {
            let gap = t - prev;
            if gap <= 0.0 {
                k.zero_gaps += 1;
            }
            k.min_gap = Some(k.min_gap.map_or(gap, |m| m.min(gap)));
            let bin = if gap > 0.0 { (gap.log10() + 9.0).floor() } else { 0.0 };
            k.histogram[bin.clamp(0.0, (HIST_DECADES - 1) as f64) as usize] += 1;
        }
        k.last = Some(t);
    }

    pub fn get(&self, kind: JumpKind) -> Option<&KindStats> {
        self.kinds.get(kind.as_str())
    }

    pub fn count(&self, kind: JumpKind) -> usize {
        self.get(kind).map_or(0, |k| k.count)
    }

    /// Minimum same-kind gap, or `sentinel` when fewer than two events occurred.
    pub fn min_gap_or(&self, kind: JumpKind, sentinel: f64) -> f64 {
        self.get(kind).and_then(|k| k.min_gap).unwrap_or(sentinel)
    }
}

impl Observer for EventStats {
    fn on_jump(&mut self, ev: &JumpEvent<'_>) {
        self.record(ev.kind, ev.t);
    }
}
