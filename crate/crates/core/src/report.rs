//! Human-readable text and TOML renderings of check reports.

use std::fmt::Write as _;

use serde::Serialize;

use crate::assumptions::{CheckEntry, ValidationReport, Witness};
use crate::error::{Error, Result};
use crate::verify::{BracketReport, ComparisonReport, ResidualReport, Site};

pub trait Report: Serialize {
    fn to_text(&self) -> String;

    fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialize(e.to_string()))
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn point(x: &[f64]) -> String {
    let parts: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
    format!("({})", parts.join(", "))
}

pub fn describe_witness(w: &Witness) -> String {
    match w {
        Witness::Location { mode, t, x } => format!("mode {mode} at t={t}, x={}", point(x)),
        Witness::Cycle { cycle, t, x } => {
            let c: Vec<String> = cycle.iter().map(|v| v.to_string()).collect();
            format!("cycle ({}) at t={t}, x={}", c.join(","), point(x))
        }
        Witness::Triple { i, j, k, t, x } => format!("triple ({i},{j},{k}) at t={t}, x={}", point(x)),
        Witness::Pair { i, j, x } => format!("pair ({i},{j}) at x={}", point(x)),
        Witness::Sample { mode, t, x, r, s } => {
            format!("mode {mode} at t={t}, x={}, r={r}, s={s}", point(x))
        }
        Witness::Message { message } => message.clone(),
    }
}

fn describe_site(s: &Site) -> String {
    format!(
        "{:?} node {} mode {} level {} (t={}, x={})",
        s.kind,
        s.node,
        s.mode,
        s.level,
        s.t,
        point(&s.x)
    )
    .to_lowercase()
}

fn entry_line(c: &CheckEntry) -> String {
    let mut line = format!("[{}] {:<22} worst = {}", verdict(c.passed), c.name, c.worst);
    if let Some(w) = &c.witness {
        let _ = write!(line, "  witness: {}", describe_witness(w));
    }
    line
}

impl Report for ValidationReport {
    fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "comparison_ok: {}", self.comparison_ok);
        let _ = writeln!(s, "existence_ok: {}", self.existence_ok);
        for c in &self.checks {
            let _ = writeln!(s, "{}", entry_line(c));
        }
        let _ = writeln!(s, "note: {}", self.note);
        s
    }
}

impl Report for ResidualReport {
    fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[{}] {:?} residual check", verdict(self.passed), self.role);
        let _ = writeln!(s, "tolerance: {}", self.tolerance);
        let _ = writeln!(s, "worst violation: {}", self.worst_violation);
        if let Some(site) = &self.worst_site {
            let _ = writeln!(s, "at: {}", describe_site(site));
        }
        let _ = writeln!(
            s,
            "interior {} / boundary {} / initial {}",
            self.interior_worst, self.boundary_worst, self.initial_worst
        );
        s
    }
}

impl Report for ComparisonReport {
    fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[{}] comparison ({:?})", verdict(self.passed), self.mode);
        let _ = writeln!(s, "sup (u - v): {}", self.sup_difference);
        if let Some(b) = self.boundary_bound {
            let _ = writeln!(s, "parabolic boundary bound: {b}");
        }
        if let Some(r) = self.region_difference {
            let _ = writeln!(s, "sup (u - v) off region: {r}");
        }
        if let Some(site) = &self.worst_site {
            let _ = writeln!(s, "at: {}", describe_site(site));
        }
        let _ = writeln!(s, "tolerance: {}", self.tolerance);
        s
    }
}

impl Report for BracketReport {
    fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[{}] barrier bracketing, min margin {}", verdict(self.passed), self.min_margin);
        if !self.reliable {
            let _ = writeln!(s, "warning: a barrier table failed its residual check; bracketing is unreliable");
        }
        for a in &self.anchors {
            let _ = writeln!(
                s,
                "anchor {} mode {} eps {}: lower {} upper {}{}",
                point(&a.anchor),
                a.mode,
                a.eps,
                a.lower,
                a.upper,
                if a.reliable { "" } else { " (unreliable)" }
            );
        }
        s
    }
}
