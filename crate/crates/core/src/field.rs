//! Scalar coefficient fields.
//!
//! Every piece of problem data (costs, sources, boundary and initial data) is a
//! [`Field`]: a pure function of `(t, x, r)`. Fields built from expression
//! strings remember their source text so a problem can be written back out.
//!
//! Expression strings accept `+ - * / ^`, `exp`, `sin`, `cos`, `min`, `max`,
//! the constant `pi` and the variables `t`, `x1..xn` and (for boundary data)
//! `r`. Note that unary minus binds tighter than `^`, so `-x1^2` is `(-x1)^2`.

use std::fmt;
use std::sync::Arc;

use fasteval::{Compiler, Evaler, Instruction, Parser, Slab};

use crate::error::{Error, Result};

type Eval = dyn Fn(f64, &[f64], f64) -> f64 + Send + Sync;

#[derive(Clone)]
pub struct Field {
    eval: Arc<Eval>,
    source: Option<String>,
    uses_r: bool,
}

impl Field {
    pub fn constant(c: f64) -> Self {
        Self {
            eval: Arc::new(move |_, _, _| c),
            source: Some(format!("{c:?}")),
            uses_r: false,
        }
    }

    /// Field of `(t, x)`.
    pub fn tx(f: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            eval: Arc::new(move |t, x, _| f(t, x)),
            source: None,
            uses_r: false,
        }
    }

    /// Field of `(t, x, r)`.
    pub fn txr(f: impl Fn(f64, &[f64], f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            eval: Arc::new(f),
            source: None,
            uses_r: true,
        }
    }

    /// Time-independent field of `x`.
    pub fn space(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self::tx(move |_, x| f(x))
    }

    /// Compiles an expression over `t`, `x1..x{dim}` and, if `allow_r`, `r`.
    pub fn parse(source: &str, dim: usize, allow_r: bool) -> Result<Self> {
        let expr = CompiledExpr::compile(source, dim, allow_r)?;
        let uses_r = expr.uses_r;
        let expr = Arc::new(expr);
        Ok(Self {
            eval: Arc::new(move |t, x, r| expr.eval(t, x, r)),
            source: Some(source.trim().to_string()),
            uses_r,
        })
    }

    #[inline]
    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        (self.eval)(t, x, 0.0)
    }

    #[inline]
    pub fn eval_r(&self, t: f64, x: &[f64], r: f64) -> f64 {
        (self.eval)(t, x, r)
    }

    pub fn source(&self) -> Option<&str> {
        self.source.as_deref()
    }

    /// Whether the value can change with the state argument `r`.
    pub fn depends_on_r(&self) -> bool {
        self.uses_r
    }
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.source {
            Some(s) => write!(f, "Field({s:?})"),
            None => write!(f, "Field(<closure>)"),
        }
    }
}

struct CompiledExpr {
    instruction: Instruction,
    slab: Slab,
    uses_r: bool,
}

impl CompiledExpr {
    fn compile(source: &str, dim: usize, allow_r: bool) -> Result<Self> {
        let err = |message: String| Error::Expression {
            source_text: source.to_string(),
            message,
        };
        if source.trim().is_empty() {
            return Err(err("empty expression".into()));
        }
        let mut slab = Slab::new();
        let instruction = Parser::new()
            .parse(source, &mut slab.ps)
            .map_err(|e| err(e.to_string()))?
            .from(&slab.ps)
            .compile(&slab.ps, &mut slab.cs);

        // Resolve every name once so unknown variables fail at parse time.
        let mut unknown: Option<String> = None;
        let mut uses_r = false;
        let x = vec![0.25; dim];
        let mut ns = |name: &str, args: Vec<f64>| -> Option<f64> {
            if name == "r" {
                uses_r = true;
            }
            match lookup(name, &args, 0.5, &x, 0.5) {
                Some(v) if name != "r" || allow_r => Some(v),
                _ => {
                    unknown.get_or_insert_with(|| name.to_string());
                    Some(0.0)
                }
            }
        };
        instruction
            .eval(&slab, &mut ns)
            .map_err(|e| err(e.to_string()))?;
        if let Some(name) = unknown {
            return Err(err(format!(
                "unknown name `{name}` (allowed: t, x1..x{dim}{}, pi, exp, sin, cos, min, max)",
                if allow_r { ", r" } else { "" }
            )));
        }
        Ok(Self {
            instruction,
            slab,
            uses_r,
        })
    }

    fn eval(&self, t: f64, x: &[f64], r: f64) -> f64 {
        let mut ns = |name: &str, args: Vec<f64>| lookup(name, &args, t, x, r);
        self.instruction.eval(&self.slab, &mut ns).unwrap_or(f64::NAN)
    }
}

fn lookup(name: &str, args: &[f64], t: f64, x: &[f64], r: f64) -> Option<f64> {
    match (name, args) {
        ("t", []) => Some(t),
        ("r", []) => Some(r),
        ("pi", []) => Some(std::f64::consts::PI),
        ("exp", [a]) => Some(a.exp()),
        _ => {
            let idx: usize = name.strip_prefix('x')?.parse().ok()?;
            if args.is_empty() && (1..=x.len()).contains(&idx) {
                Some(x[idx - 1])
            } else {
                None
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expression_operators_and_functions() {
        let f = Field::parse("exp(x1) * 2^3 - max(t, 1) + sin(0) + cos(0)", 1, false).unwrap();
        let expected = 1.0f64.exp() * 8.0 - 1.0 + 1.0;
        assert!((f.eval(0.5, &[1.0]) - expected).abs() < 1e-14);
        let g = Field::parse("min(x1, x2) / 2 - pi", 2, false).unwrap();
        assert!((g.eval(0.0, &[3.0, -4.0]) - (-2.0 - std::f64::consts::PI)).abs() < 1e-14);
    }

    #[test]
    fn state_variable_only_where_allowed() {
        assert!(Field::parse("r + 1", 1, false).is_err());
        let f = Field::parse("r + t", 1, true).unwrap();
        assert!(f.depends_on_r());
        assert_eq!(f.eval_r(1.0, &[0.0], 2.0), 3.0);
        assert!(!Field::parse("t", 1, true).unwrap().depends_on_r());
    }

    #[test]
    fn rejects_unknown_names_and_dimension_overflow() {
        assert!(Field::parse("y + 1", 1, false).is_err());
        assert!(Field::parse("x2", 1, false).is_err());
        assert!(Field::parse("x2", 2, false).is_ok());
        assert!(Field::parse("", 1, false).is_err());
        assert!(Field::parse("1 +", 1, false).is_err());
    }

    #[test]
    fn constant_source_round_trips() {
        for c in [0.1, -3.0, 1e-7, 12345.678] {
            let f = Field::constant(c);
            let g = Field::parse(f.source().unwrap(), 1, false).unwrap();
            assert_eq!(g.eval(0.3, &[0.2]), c);
        }
    }
}
