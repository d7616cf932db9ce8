//! CSV export of stored arcs.
//!
//! Columns: `t, j, mode`, the state components, the guard values, any
//! system diagnostics, and `jump_kind`, which is filled on the first row
//! after a jump. Reals are written with 17 significant digits.

use std::io::{self, Write};

use super::{HybridArc, HybridSystem, JumpEvent, JumpKind, Observer};

pub fn header<S: HybridSystem + ?Sized>(sys: &S) -> Vec<String> {
    let mut cols = vec!["t".to_string(), "j".to_string(), "mode".to_string()];
    cols.extend(sys.state_names());
    cols.extend(sys.guard_names());
    cols.extend(sys.diagnostic_names());
    cols.push("jump_kind".to_string());
    cols
}

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn push_row<S: HybridSystem + ?Sized>(
    sys: &S,
    line: &mut String,
    g: &mut [f64],
    diag: &mut Vec<f64>,
    (t, j, mode): (f64, usize, usize),
    x: &[f64],
    kind: Option<JumpKind>,
) {
    line.clear();
    line.push_str(&format!("{},{},{}", real(t), j, mode));
    sys.guards(t, mode, x, g);
    diag.clear();
    sys.diagnostics(t, mode, x, diag);
    for v in x.iter().chain(g.iter()).chain(diag.iter()) {
        line.push(',');
        line.push_str(&real(*v));
    }
    line.push(',');
    if let Some(k) = kind {
        line.push_str(k.as_str());
    }
}

pub fn write_arc<S: HybridSystem + ?Sized, W: Write>(sys: &S, arc: &HybridArc, mut out: W) -> io::Result<()> {
    writeln!(out, "{}", header(sys).join(","))?;
    let mut g = vec![0.0; sys.n_guards()];
    let mut diag = Vec::new();
    let mut line = String::new();
    for seg in &arc.segments {
        for (row, (&t, x)) in seg.times.iter().zip(&seg.states).enumerate() {
            let kind = (row == 0 && seg.j > 0)
                .then(|| arc.jump_log.get(seg.j - 1).map(|r| r.kind))
                .flatten();
            push_row(sys, &mut line, &mut g, &mut diag, (t, seg.j, seg.mode), x, kind);
            writeln!(out, "{line}")?;
        }
    }
    out.flush()
}

/// Observer writing rows while the simulation runs: every `stride`-th
/// integration step plus the first row after each jump. The first I/O
/// error stops further output and is kept in `error`.
pub struct CsvStream<'a, S: HybridSystem + ?Sized, W: Write> {
    sys: &'a S,
    out: W,
    stride: usize,
    counter: usize,
    pending: Option<JumpKind>,
    g: Vec<f64>,
    diag: Vec<f64>,
    line: String,
    pub rows: usize,
    pub error: Option<io::Error>,
}

impl<'a, S: HybridSystem + ?Sized, W: Write> CsvStream<'a, S, W> {
    pub fn new(sys: &'a S, mut out: W, stride: usize) -> Self {
        let error = writeln!(out, "{}", header(sys).join(",")).err();
        Self {
            sys,
            out,
            stride: stride.max(1),
            counter: 0,
            pending: None,
            g: vec![0.0; sys.n_guards()],
            diag: Vec::new(),
            line: String::new(),
            rows: 0,
            error,
        }
    }

    pub fn finish(mut self) -> io::Result<usize> {
        match self.error.take() {
            Some(e) => Err(e),
            None => self.out.flush().map(|_| self.rows),
        }
    }
}

impl<S: HybridSystem + ?Sized, W: Write> Observer for CsvStream<'_, S, W> {
    fn on_flow(&mut self, t: f64, j: usize, mode: usize, x: &[f64], _boundary: bool) {
        let due = self.counter % self.stride == 0;
        self.counter += 1;
        if self.error.is_some() || !(due || self.pending.is_some()) {
            return;
        }
        let kind = self.pending.take();
        push_row(self.sys, &mut self.line, &mut self.g, &mut self.diag, (t, j, mode), x, kind);
        match writeln!(self.out, "{}", self.line) {
            Ok(()) => self.rows += 1,
            Err(e) => self.error = Some(e),
        }
    }

    fn on_jump(&mut self, ev: &JumpEvent<'_>) {
        self.pending = Some(ev.kind);
    }
}
