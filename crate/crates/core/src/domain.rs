use crate::error::{Error, Result};

/// Tolerance used to decide whether a point sits on the boundary.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// Spatial domain. Only families whose boundary is C^1 with Lipschitz
/// derivative are representable; boxes are rejected when a config is parsed.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Interval { lower: f64, upper: f64 },
    Ball { center: Vec<f64>, radius: f64 },
}

impl Domain {
    pub fn interval(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite()) || lower >= upper {
            return Err(Error::Domain(format!(
                "interval needs finite lower < upper, got [{lower}, {upper}]"
            )));
        }
        Ok(Domain::Interval { lower, upper })
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::Domain("ball center must have dimension >= 1".into()));
        }
        if !(radius.is_finite() && radius > 0.0) || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain(format!(
                "ball needs finite center and radius > 0, got radius {radius}"
            )));
        }
        Ok(Domain::Ball { center, radius })
    }

    pub fn family(&self) -> &'static str {
        match self {
            Domain::Interval { .. } => "interval",
            Domain::Ball { .. } => "ball",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Interval { .. } => 1,
            Domain::Ball { center, .. } => center.len(),
        }
    }

    /// Radius of the interior (and exterior) ball touching every boundary point.
    pub fn ball_radius(&self) -> f64 {
        match self {
            Domain::Interval { lower, upper } => 0.5 * (upper - lower),
            Domain::Ball { radius, .. } => *radius,
        }
    }

    pub fn center(&self) -> Vec<f64> {
        match self {
            Domain::Interval { lower, upper } => vec![0.5 * (lower + upper)],
            Domain::Ball { center, .. } => center.clone(),
        }
    }

    /// Signed distance to the boundary, negative inside.
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        let c = self.center();
        let d = x
            .iter()
            .zip(&c)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        d - self.ball_radius()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && self.signed_distance(x) <= BOUNDARY_TOL
    }

    pub fn is_boundary(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && self.signed_distance(x).abs() <= BOUNDARY_TOL
    }

    /// Unit outward normal at a boundary point.
    pub fn normal(&self, x: &[f64]) -> Result<Vec<f64>> {
        if !self.is_boundary(x) {
            return Err(Error::InteriorBoundaryEval);
        }
        let c = self.center();
        let mut n: Vec<f64> = x.iter().zip(&c).map(|(a, b)| a - b).collect();
        let len = n.iter().map(|v| v * v).sum::<f64>().sqrt();
        n.iter_mut().for_each(|v| *v /= len);
        Ok(n)
    }
}
