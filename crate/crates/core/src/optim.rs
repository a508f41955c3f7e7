//! Sequential baselines: SGD, Nesterov momentum, iterate averaging and the
//! learning-rate decay schedule.

use crate::error::{Error, Result};
use crate::linalg::norm_sq;

/// States whose norm exceeds this are treated as diverged.
pub const DIVERGENCE_NORM: f64 = 1e12;

/// Iterate, momentum buffer, averaged iterate and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub z: Vec<f64>,
    pub t: u64,
}

impl SeqState {
    pub fn new(x0: Vec<f64>) -> Self {
        let d = x0.len();
        Self {
            z: x0.clone(),
            x: x0,
            v: vec![0.0; d],
            t: 0,
        }
    }
}

/// Moving rate used by the averaging sequences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Averaging {
    /// `1/(t+1)`: running arithmetic mean.
    TimeDecay,
    /// Fixed exponential moving-average rate.
    Constant(f64),
}

impl Averaging {
    /// Weight on the new sample at clock `t`.
    pub fn rate(self, t: u64) -> f64 {
        match self {
            Averaging::TimeDecay => 1.0 / (t as f64 + 1.0),
            Averaging::Constant(rate) => rate,
        }
    }
}

/// `η_t = η / (1 + γ t)^½`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecaySchedule {
    eta0: f64,
    decay_gamma: f64,
}

impl DecaySchedule {
    pub fn new(eta0: f64, decay_gamma: f64) -> Result<Self> {
        if !(eta0 > 0.0 && eta0.is_finite()) {
            return Err(Error::param("eta", "must be positive and finite"));
        }
        if !(decay_gamma >= 0.0 && decay_gamma.is_finite()) {
            return Err(Error::param("decay_gamma", "must be non-negative and finite"));
        }
        Ok(Self { eta0, decay_gamma })
    }

    pub fn constant(eta0: f64) -> Result<Self> {
        Self::new(eta0, 0.0)
    }

    pub fn eta0(&self) -> f64 {
        self.eta0
    }

    pub fn decay_gamma(&self) -> f64 {
        self.decay_gamma
    }
}

pub fn decayed_eta(schedule: &DecaySchedule, t: u64) -> f64 {
    if schedule.decay_gamma == 0.0 {
        return schedule.eta0;
    }
    schedule.eta0 / (1.0 + schedule.decay_gamma * t as f64).sqrt()
}

/// `x ← x − η g`.
pub fn sgd_step(mut s: SeqState, g: &[f64], eta: f64) -> Result<SeqState> {
    check_len(&s.x, g)?;
    for (x, gi) in s.x.iter_mut().zip(g) {
        *x -= eta * gi;
    }
    finish(s)
}

/// Nesterov step: `v ← δv − η g(x + δv)`, `x ← x + v`.
pub fn msgd_step<G>(mut s: SeqState, mut grad_at: G, eta: f64, delta: f64) -> Result<SeqState>
where
    G: FnMut(&[f64]) -> Vec<f64>,
{
    let lookahead: Vec<f64> = s.x.iter().zip(&s.v).map(|(x, v)| x + delta * v).collect();
    let g = grad_at(&lookahead);
    check_len(&s.x, &g)?;
    for ((x, v), gi) in s.x.iter_mut().zip(s.v.iter_mut()).zip(&g) {
        *v = delta * *v - eta * gi;
        *x += *v;
    }
    finish(s)
}

/// Folds the current iterate into `z` with the rate for clock `t`.
pub fn polyak_average(mut s: SeqState, mode: Averaging) -> SeqState {
    let rate = mode.rate(s.t);
    blend(&mut s.z, &s.x, rate);
    s
}

/// Averaging that only begins at step `start`; before that `z` tracks `x`.
pub fn polyak_average_from(mut s: SeqState, mode: Averaging, start: u64) -> SeqState {
    if s.t < start {
        s.z.clone_from(&s.x);
        return s;
    }
    let rate = mode.rate(s.t - start);
    blend(&mut s.z, &s.x, rate);
    s
}

/// `z ← (1 − r) z + r x`.
pub(crate) fn blend(z: &mut [f64], x: &[f64], rate: f64) {
    for (zi, xi) in z.iter_mut().zip(x) {
        *zi = (1.0 - rate) * *zi + rate * xi;
    }
}

/// True when any coordinate is non-finite or the norm exceeds `cap`.
pub fn exceeds(x: &[f64], cap: f64) -> bool {
    let n = norm_sq(x);
    !n.is_finite() || n > cap * cap
}

fn finish(mut s: SeqState) -> Result<SeqState> {
    if exceeds(&s.x, DIVERGENCE_NORM) {
        return Err(Error::Divergence { step: s.t });
    }
    s.t += 1;
    Ok(s)
}

fn check_len(x: &[f64], g: &[f64]) -> Result<()> {
    if x.len() != g.len() {
        return Err(Error::Dimension {
            context: "gradient",
            expected: x.len(),
            actual: g.len(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_hand_values() {
        let s = sgd_step(SeqState::new(vec![1.0]), &[1.0], 0.1).unwrap();
        assert_eq!(s.x, vec![0.9]);
        assert_eq!(s.t, 1);
        let s = sgd_step(s, &[0.0], 0.1).unwrap();
        assert_eq!(s.x, vec![0.9]);
    }

    #[test]
    fn sgd_geometric_contraction() {
        let mut s = SeqState::new(vec![1.0]);
        for _ in 0..100 {
            let g = s.x.clone();
            s = sgd_step(s, &g, 0.1).unwrap();
        }
        assert!((s.x[0] - 0.9_f64.powi(100)).abs() < 1e-15);
    }

    #[test]
    fn sgd_reports_divergence() {
        let s = SeqState::new(vec![1.0]);
        assert_eq!(sgd_step(s.clone(), &[f64::NAN], 0.1), Err(Error::Divergence { step: 0 }));
        assert!(matches!(sgd_step(s, &[-1e13], 1.0), Err(Error::Divergence { .. })));
    }

    #[test]
    fn msgd_zero_momentum_matches_sgd() {
        let grad = |x: &[f64]| vec![1.7 * x[0] - 0.3];
        let mut a = SeqState::new(vec![2.5]);
        let mut b = a.clone();
        for _ in 0..50 {
            a = msgd_step(a, grad, 0.07, 0.0).unwrap();
            let g = grad(&b.x);
            b = sgd_step(b, &g, 0.07).unwrap();
            assert_eq!(a.x, b.x);
        }
    }

    #[test]
    fn msgd_lookahead_equals_x_without_momentum() {
        let s = SeqState::new(vec![0.4, -2.0]);
        let mut seen = Vec::new();
        msgd_step(
            s.clone(),
            |x: &[f64]| {
                seen = x.to_vec();
                vec![0.0; 2]
            },
            0.1,
            0.99,
        )
        .unwrap();
        assert_eq!(seen, s.x);
    }

    #[test]
    fn msgd_two_step_unroll() {
        // h=1, b=0: v1 = -0.1, x1 = 0.9; lookahead 0.85, v2 = -0.05 - 0.085, x2 = 0.765
        let grad = |x: &[f64]| x.to_vec();
        let s = msgd_step(SeqState::new(vec![1.0]), grad, 0.1, 0.5).unwrap();
        assert!((s.v[0] + 0.1).abs() < 1e-15 && (s.x[0] - 0.9).abs() < 1e-15);
        let s = msgd_step(s, grad, 0.1, 0.5).unwrap();
        assert!((s.v[0] + 0.135).abs() < 1e-15);
        assert!((s.x[0] - 0.765).abs() < 1e-15);
    }

    fn average_over(xs: &[f64], mode: Averaging, z0: f64) -> f64 {
        let mut s = SeqState::new(vec![xs[0]]);
        s.z = vec![z0];
        for (t, &x) in xs.iter().enumerate() {
            s.x = vec![x];
            s.t = t as u64;
            s = polyak_average(s, mode);
        }
        s.z[0]
    }

    #[test]
    fn time_decay_is_arithmetic_mean() {
        assert_eq!(average_over(&[1.0, 2.0, 3.0], Averaging::TimeDecay, 1.0), 2.0);
    }

    #[test]
    fn constant_rates() {
        assert_eq!(average_over(&[5.0, -1.0], Averaging::Constant(1.0), 0.0), -1.0);
        assert_eq!(average_over(&[0.0, 1.0, 1.0, 1.0], Averaging::Constant(0.5), 0.0), 0.875);
    }

    #[test]
    fn deferred_averaging() {
        let mut s = SeqState::new(vec![0.0]);
        for (t, x) in [10.0, 20.0, 1.0, 3.0].into_iter().enumerate() {
            s.x = vec![x];
            s.t = t as u64;
            s = polyak_average_from(s, Averaging::TimeDecay, 2);
        }
        assert_eq!(s.z, vec![2.0]);
    }

    #[test]
    fn decay_schedule_values() {
        let flat = DecaySchedule::new(0.3, 0.0).unwrap();
        assert!((0..1000).all(|t| decayed_eta(&flat, t) == 0.3));
        let d = DecaySchedule::new(0.01, 1.0).unwrap();
        assert!((decayed_eta(&d, 3) - 0.005).abs() < 1e-18);
        let d = DecaySchedule::new(0.01, 0.1).unwrap();
        assert!((decayed_eta(&d, 990) - 0.001).abs() < 1e-17);
        assert!(DecaySchedule::new(0.0, 0.1).is_err());
        assert!(DecaySchedule::new(0.1, -1.0).is_err());
    }
}
