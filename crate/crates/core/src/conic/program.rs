use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Affine cone constraint `a x + c ∈ K` with K = {ν : ν₁ ≥ μ‖ν₂:d‖} (d = rows of `a`).
///
/// For d = 1 the cone is the half-line ν ≥ 0 and `mu` is ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct Cone {
    pub a: DMatrix<f64>,
    pub c: DVector<f64>,
    pub mu: f64,
}

impl Cone {
    pub fn new(a: DMatrix<f64>, c: DVector<f64>, mu: f64) -> Self {
        Cone { a, c, mu }
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn slack(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.c
    }

    /// Signed margin ν₁ − μ‖ν₂:d‖ (ν₁ for d = 1).
    pub fn margin(&self, nu: &DVector<f64>) -> f64 {
        cone_margin(nu, self.mu)
    }
}

pub fn tail_norm(v: &DVector<f64>) -> f64 {
    v.rows(1, v.len() - 1).norm()
}

/// ν₁ − μ‖ν₂:d‖, or ν₁ when d = 1.
pub fn cone_margin(nu: &DVector<f64>, mu: f64) -> f64 {
    if nu.len() == 1 {
        nu[0]
    } else {
        nu[0] - mu * tail_norm(nu)
    }
}

/// Margin in the dual cone K* = {λ : μλ₁ ≥ ‖λ₂:d‖}.
pub fn dual_cone_margin(lambda: &DVector<f64>, mu: f64) -> f64 {
    if lambda.len() == 1 {
        lambda[0]
    } else {
        mu * lambda[0] - tail_norm(lambda)
    }
}

/// min ½xᵀPx + qᵀx  s.t.  E x = f,  Aᵢx + cᵢ ∈ Kᵢ.
#[derive(Clone, Debug, PartialEq)]
pub struct ConicProgram {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub eq: Option<(DMatrix<f64>, DVector<f64>)>,
    pub cones: Vec<Cone>,
}

impl ConicProgram {
    /// Builds and validates a program; P must be symmetric PSD.
    pub fn new(p: DMatrix<f64>, q: DVector<f64>, eq: Option<(DMatrix<f64>, DVector<f64>)>, cones: Vec<Cone>) -> Result<Self> {
        let prog = ConicProgram { p, q, eq, cones };
        prog.validate()?;
        Ok(prog)
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.p.nrows() != n || self.p.ncols() != n {
            return Err(Error::Dimension(format!("P is {}x{}, expected {n}x{n}", self.p.nrows(), self.p.ncols())));
        }
        if let Some((e, f)) = &self.eq {
            if e.ncols() != n || e.nrows() != f.len() {
                return Err(Error::Dimension("equality block".into()));
            }
        }
        for (k, c) in self.cones.iter().enumerate() {
            if c.a.ncols() != n || c.a.nrows() != c.c.len() || c.a.nrows() == 0 {
                return Err(Error::Dimension(format!("cone {k}")));
            }
            if c.dim() > 1 && !(c.mu > 0.0) {
                return Err(Error::InvalidModel(format!("cone {k}: d >= 2 needs mu > 0")));
            }
        }
        let scale = self.p.abs().max().max(1.0);
        if (&self.p - self.p.transpose()).abs().max() > 1e-9 * scale {
            return Err(Error::InvalidModel("cost matrix not symmetric".into()));
        }
        if n > 0 {
            let eig = SymmetricEigen::new(self.p.clone());
            if eig.eigenvalues.min() < -1e-9 * scale {
                return Err(Error::InvalidModel("cost matrix not positive semidefinite".into()));
            }
        }
        Ok(())
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.p * x)) + self.q.dot(x)
    }

    /// ‖Px + q − Eᵀy − Σ Aᵢᵀλᵢ‖ for duals reported with the force-balance sign.
    pub fn stationarity(&self, x: &DVector<f64>, lambdas: &[DVector<f64>], y: Option<&DVector<f64>>) -> f64 {
        let mut r = &self.p * x + &self.q;
        for (c, l) in self.cones.iter().zip(lambdas) {
            r -= c.a.transpose() * l;
        }
        if let (Some((e, _)), Some(y)) = (&self.eq, y) {
            r -= e.transpose() * y;
        }
        r.norm()
    }
}
