//! Upper-bound recursion for the synchronous update on a strongly convex
//! objective: spatial-average error `a`, mean local error `b`, center error `c`.

use crate::error::{Error, Result};
use crate::linalg::{mat_inverse, Matrix};

/// Strong convexity `μ`, smoothness `L`, step `η`, moving rates `α`, `β`,
/// per-worker noise bound `σ²` and worker count `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem2Params {
    pub mu: f64,
    pub ell: f64,
    pub eta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub sigma2: f64,
    pub p: usize,
}

impl Theorem2Params {
    /// Checks the parameter conditions, naming the first one that fails.
    pub fn check(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.ell >= self.mu && self.ell.is_finite()) {
            return Err(Error::ConditionViolated { condition: "0 < mu <= L" });
        }
        if self.p == 0 {
            return Err(Error::param("p", "need at least one worker"));
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(Error::param("sigma2", "must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::ConditionViolated { condition: "0 <= alpha < 1" });
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::ConditionViolated { condition: "0 <= beta <= 1" });
        }
        let eta_max = 2.0 / (self.mu + self.ell) * (1.0 - self.alpha);
        if !(self.eta >= 0.0 && self.eta <= eta_max) {
            return Err(Error::ConditionViolated {
                condition: "0 <= eta <= 2(1 - alpha)/(mu + L)",
            });
        }
        Ok(())
    }

    /// `γ₁ = 2ημL/(μ + L)`.
    pub fn gamma1(&self) -> f64 {
        2.0 * self.eta * self.mu * self.ell / (self.mu + self.ell)
    }

    /// `γ₂ = 2ηL(1 − 2√(μL)/(μ + L))`.
    pub fn gamma2(&self) -> f64 {
        2.0 * self.eta * self.ell * (1.0 - 2.0 * (self.mu * self.ell).sqrt() / (self.mu + self.ell))
    }
}

/// The 3×3 recursion matrix and forcing vector.
pub fn theorem2_recursion(params: &Theorem2Params) -> Result<(Matrix, [f64; 3])> {
    params.check()?;
    let (g1, g2) = (params.gamma1(), params.gamma2());
    let (alpha, beta) = (params.alpha, params.beta);
    let t = Matrix::from_rows(&[
        vec![1.0 - g1 - g2 - alpha, g2, alpha],
        vec![0.0, 1.0 - g1 - alpha, alpha],
        vec![beta, 0.0, 1.0 - beta],
    ])?;
    let e2s = params.eta * params.eta * params.sigma2;
    Ok((t, [e2s / params.p as f64, e2s, 0.0]))
}

/// `(a_t, b_t, c_t)` after `t` iterations from `start`.
pub fn theorem2_bound(params: &Theorem2Params, start: [f64; 3], t: u64) -> Result<[f64; 3]> {
    Ok(*theorem2_trajectory(params, start, t)?.last().expect("trajectory holds the start"))
}

/// Every iterate `0..=t` of the bound recursion.
pub fn theorem2_trajectory(params: &Theorem2Params, start: [f64; 3], t: u64) -> Result<Vec<[f64; 3]>> {
    if start.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::param("a0/b0/c0", "must be non-negative and finite"));
    }
    let (m, forcing) = theorem2_recursion(params)?;
    let mut out = Vec::with_capacity(t as usize + 1);
    let mut cur = start;
    out.push(cur);
    for _ in 0..t {
        let mut next = forcing;
        for (i, slot) in next.iter_mut().enumerate() {
            *slot += (0..3).map(|j| m[(i, j)] * cur[j]).sum::<f64>();
        }
        cur = next;
        out.push(cur);
    }
    Ok(out)
}

/// `(I − T)⁻¹ · forcing`, the limit of the recursion when it contracts.
pub fn theorem2_fixed_point(params: &Theorem2Params) -> Result<[f64; 3]> {
    let (m, forcing) = theorem2_recursion(params)?;
    let inv = mat_inverse(&Matrix::identity(3).sub(&m)?)?;
    let v = inv.mat_vec(&forcing)?;
    Ok([v[0], v[1], v[2]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::spectral_radius;

    fn base() -> Theorem2Params {
        Theorem2Params {
            mu: 1.0,
            ell: 2.0,
            eta: 0.1,
            alpha: 0.05,
            beta: 0.2,
            sigma2: 1.0,
            p: 4,
        }
    }

    #[test]
    fn noiseless_optimum_is_fixed() {
        let params = Theorem2Params { sigma2: 0.0, ..base() };
        assert_eq!(theorem2_bound(&params, [0.0; 3], 500).unwrap(), [0.0; 3]);
    }

    #[test]
    fn equal_curvatures_decouple() {
        let params = Theorem2Params { ell: 1.0, ..base() };
        assert!(params.gamma2().abs() < 1e-15);
        let (m, _) = theorem2_recursion(&params).unwrap();
        assert!(m[(0, 1)].abs() < 1e-15 && m[(1, 0)] == 0.0);
    }

    #[test]
    fn converges_to_fixed_point() {
        let params = base();
        let (m, _) = theorem2_recursion(&params).unwrap();
        assert!(spectral_radius(&m, 1e-12).unwrap().value < 1.0);
        let fixed = theorem2_fixed_point(&params).unwrap();
        let far = theorem2_bound(&params, [3.0, 5.0, 7.0], 20_000).unwrap();
        for k in 0..3 {
            assert!((far[k] - fixed[k]).abs() < 1e-8, "{k}: {far:?} vs {fixed:?}");
        }
        // fixed point satisfies v = T v + f
        let (m, f) = theorem2_recursion(&params).unwrap();
        let tv = m.mat_vec(&fixed).unwrap();
        for k in 0..3 {
            assert!((tv[k] + f[k] - fixed[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn preconditions_name_the_failure() {
        let cases = [
            (Theorem2Params { alpha: 1.0, ..base() }, "0 <= alpha < 1"),
            (Theorem2Params { beta: 1.5, ..base() }, "0 <= beta <= 1"),
            (Theorem2Params { eta: 0.7, ..base() }, "0 <= eta <= 2(1 - alpha)/(mu + L)"),
        ];
        for (params, name) in cases {
            assert_eq!(params.check(), Err(Error::ConditionViolated { condition: name }));
            assert!(theorem2_bound(&params, [0.0; 3], 1).is_err());
        }
    }

    #[test]
    fn trajectory_length_and_start() {
        let traj = theorem2_trajectory(&base(), [1.0, 1.0, 1.0], 10).unwrap();
        assert_eq!(traj.len(), 11);
        assert_eq!(traj[0], [1.0; 3]);
    }
}
