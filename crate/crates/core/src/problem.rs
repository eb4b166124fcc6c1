use serde::Serialize;

use crate::error::{Error, Result};
use crate::mesh::Domain;
use crate::nonlinearity::NonlinearitySpec;

/// Parameters of `-Δ_N u = λ(a1 u^{r1} + a2 |∇u|^{r2}) + f(u)` on a domain.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub dim: usize,
    pub domain: Domain,
    pub lambda: f64,
    pub a1: f64,
    pub a2: f64,
    pub r1: f64,
    pub r2: f64,
    pub nonlinearity: NonlinearitySpec,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct HypothesisNotes {
    /// Parameters lie in the range covered by the existence theorem.
    pub within_theorem: bool,
    pub notes: Vec<String>,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.dim) {
            return Err(Error::config("N", "only N = 2 and N = 3 are supported"));
        }
        if self.domain.dim() != self.dim {
            return Err(Error::config(
                "domain",
                format!("{} is {}-dimensional but N = {}", self.domain, self.domain.dim(), self.dim),
            ));
        }
        if self.nonlinearity.dim != self.dim {
            return Err(Error::config("N", "nonlinearity certificate was built for another N"));
        }
        let n1 = self.dim as f64 - 1.0;
        for (field, v) in [
            ("lambda", self.lambda),
            ("a1", self.a1),
            ("a2", self.a2),
            ("r1", self.r1),
            ("r2", self.r2),
        ] {
            if !v.is_finite() {
                return Err(Error::config(field, "must be finite"));
            }
        }
        for (field, v) in [("lambda", self.lambda), ("a1", self.a1), ("a2", self.a2)] {
            if v < 0.0 {
                return Err(Error::config(field, "must be nonnegative"));
            }
        }
        for (field, v) in [("r1", self.r1), ("r2", self.r2)] {
            if !(v > 0.0 && v < n1) {
                return Err(Error::config(field, format!("must lie in (0, {n1})")));
            }
        }
        self.nonlinearity.validate()
    }

    /// Admissible but degenerate choices that fall outside the theorem.
    pub fn hypothesis_notes(&self) -> HypothesisNotes {
        let mut notes = Vec::new();
        if self.lambda == 0.0 {
            notes.push("lambda = 0: the sublinear term is switched off".to_string());
        }
        if self.a1 == 0.0 {
            notes.push("a1 = 0: no positive subsolution is available".to_string());
        }
        HypothesisNotes {
            within_theorem: notes.is_empty(),
            notes,
        }
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            lambda,
            ..self.clone()
        }
    }
}
