//! Worker and master update rules for the elastic-averaging family, the
//! DOWNPOUR family and round-robin linearised ADMM.

use crate::error::{Error, Result};
use crate::optim::{blend, Averaging};

/// A worker's local variable, auxiliary buffer and local clock.
///
/// `v` is the momentum buffer for momentum methods, the accumulated update
/// for DOWNPOUR and the multiplier for ADMM.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub t_local: u64,
}

impl WorkerState {
    pub fn new(x0: Vec<f64>) -> Self {
        let d = x0.len();
        Self {
            x: x0,
            v: vec![0.0; d],
            t_local: 0,
        }
    }
}

/// The center variable, its running average and the master clock.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterState {
    pub x_center: Vec<f64>,
    pub z_avg: Vec<f64>,
    pub t_master: u64,
    pub averaging: Averaging,
}

impl MasterState {
    pub fn new(x0: Vec<f64>, averaging: Averaging) -> Self {
        Self {
            z_avg: x0.clone(),
            x_center: x0,
            t_master: 0,
            averaging,
        }
    }
}

/// Folds the current center into `z_avg` at the current master clock.
///
/// Called once per center update, before the update is applied.
pub fn center_average_step(master: &mut MasterState) {
    let rate = master.averaging.rate(master.t_master);
    blend(&mut master.z_avg, &master.x_center, rate);
}

/// Elastic-averaging hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticParams {
    eta: f64,
    alpha: f64,
    p: usize,
    tau: u64,
    delta: f64,
}

impl ElasticParams {
    /// Parameters from the per-exchange moving rate `α`.
    pub fn from_alpha(eta: f64, alpha: f64, p: usize, tau: u64, delta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::param("eta", "must be positive and finite"));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::param("alpha", "must lie in [0, 1]"));
        }
        if p == 0 {
            return Err(Error::param("p", "need at least one worker"));
        }
        if tau == 0 {
            return Err(Error::param("tau", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::param("delta", "must lie in [0, 1)"));
        }
        if p as f64 * alpha > 1.0 {
            return Err(Error::param("beta", "p * alpha must not exceed 1"));
        }
        Ok(Self {
            eta,
            alpha,
            p,
            tau,
            delta,
        })
    }

    /// Parameters from the aggregate rate `β = p α`.
    pub fn from_beta(eta: f64, beta: f64, p: usize, tau: u64, delta: f64) -> Result<Self> {
        if p == 0 {
            return Err(Error::param("p", "need at least one worker"));
        }
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::param("beta", "must lie in [0, 1]"));
        }
        Self::from_alpha(eta, beta / p as f64, p, tau, delta)
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.p as f64 * self.alpha
    }

    /// Penalty coefficient `ρ = α / η`.
    pub fn rho(&self) -> f64 {
        self.alpha / self.eta
    }

    /// `β / (τ p η)`: penalty per local step once the period is accounted for.
    pub fn rho_effective(&self) -> f64 {
        self.beta() / (self.tau as f64 * self.p as f64 * self.eta)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn tau(&self) -> u64 {
        self.tau
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Same parameters with a different learning rate; `α` is kept.
    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }
}

/// Elastic exchange: the worker moves by `−d`, the center by `+d`, with the
/// single value `d = α (xⁱ − x̃)` applied to both sides.
fn elastic_exchange(w: &mut WorkerState, master: &mut MasterState, alpha: f64) {
    center_average_step(master);
    for (x, c) in w.x.iter_mut().zip(master.x_center.iter_mut()) {
        let d = alpha * (*x - *c);
        *x -= d;
        *c += d;
    }
    master.t_master += 1;
}

/// One synchronous round: every worker uses the same time-t center.
///
/// `xⁱ ← xⁱ − α(xⁱ − x̃) − η gⁱ`, `x̃ ← x̃ + Σᵢ α(xⁱ − x̃)`.
pub fn sync_easgd_round(
    workers: &mut [WorkerState],
    master: &mut MasterState,
    params: &ElasticParams,
    grads: &[Vec<f64>],
) -> Result<()> {
    check_round(workers, grads, params.p)?;
    let alpha = params.alpha;
    let eta = params.eta;
    let mut pull: Option<Vec<f64>> = None;
    for (w, g) in workers.iter_mut().zip(grads) {
        let mut diff = Vec::with_capacity(w.x.len());
        for ((x, c), gi) in w.x.iter_mut().zip(&master.x_center).zip(g) {
            let d = alpha * (*x - c);
            *x = (*x - d) - eta * gi;
            diff.push(d);
        }
        accumulate(&mut pull, diff);
        w.t_local += 1;
    }
    apply_pull(master, pull);
    Ok(())
}

/// Penalty form of the synchronous round:
/// `xⁱ ← xⁱ − η(gⁱ + ρ(xⁱ − x̃))`, `x̃ ← x̃ + η Σᵢ ρ(xⁱ − x̃)`.
pub fn sync_easgd_round_penalty(
    workers: &mut [WorkerState],
    master: &mut MasterState,
    params: &ElasticParams,
    grads: &[Vec<f64>],
) -> Result<()> {
    check_round(workers, grads, params.p)?;
    let (eta, rho) = (params.eta, params.rho());
    let mut sum = vec![0.0; master.x_center.len()];
    for (w, g) in workers.iter_mut().zip(grads) {
        for (((x, c), gi), s) in w.x.iter_mut().zip(&master.x_center).zip(g).zip(sum.iter_mut()) {
            let spring = rho * (*x - c);
            *x -= eta * (gi + spring);
            *s += spring;
        }
        w.t_local += 1;
    }
    center_average_step(master);
    for (c, s) in master.x_center.iter_mut().zip(&sum) {
        *c += eta * s;
    }
    master.t_master += 1;
    Ok(())
}

/// Moving-average form of the synchronous round:
/// `x̃ ← (1 − β) x̃ + β · mean(xⁱ)`.
pub fn sync_easgd_round_moving_average(
    workers: &mut [WorkerState],
    master: &mut MasterState,
    params: &ElasticParams,
    grads: &[Vec<f64>],
) -> Result<()> {
    check_round(workers, grads, params.p)?;
    let (eta, alpha, beta) = (params.eta, params.alpha, params.beta());
    let p = workers.len() as f64;
    let mut mean = vec![0.0; master.x_center.len()];
    for w in workers.iter() {
        for (m, x) in mean.iter_mut().zip(&w.x) {
            *m += x / p;
        }
    }
    for (w, g) in workers.iter_mut().zip(grads) {
        for ((x, c), gi) in w.x.iter_mut().zip(&master.x_center).zip(g) {
            *x = *x - eta * gi - alpha * (*x - c);
        }
        w.t_local += 1;
    }
    center_average_step(master);
    for (c, m) in master.x_center.iter_mut().zip(&mean) {
        *c = (1.0 - beta) * *c + beta * m;
    }
    master.t_master += 1;
    Ok(())
}

/// Synchronous elastic momentum round; exchanges happen when the shared
/// local clock is a multiple of `τ`. With `δ = 0` this performs the same
/// floating-point operations as [`sync_easgd_round`].
pub fn sync_eamsgd_round<G>(
    workers: &mut [WorkerState],
    master: &mut MasterState,
    params: &ElasticParams,
    mut grad_at: G,
) -> Result<()>
where
    G: FnMut(usize, &[f64]) -> Vec<f64>,
{
    if workers.len() != params.p {
        return Err(Error::Dimension {
            context: "sync_eamsgd_round workers",
            expected: params.p,
            actual: workers.len(),
        });
    }
    let (eta, alpha, delta) = (params.eta, params.alpha, params.delta);
    let mut pull: Option<Vec<f64>> = None;
    for (i, w) in workers.iter_mut().enumerate() {
        let snapshot = w.x.clone();
        if w.t_local % params.tau == 0 {
            let mut diff = Vec::with_capacity(w.x.len());
            for (x, c) in w.x.iter_mut().zip(&master.x_center) {
                let d = alpha * (*x - c);
                *x -= d;
                diff.push(d);
            }
            accumulate(&mut pull, diff);
        }
        momentum_update(w, &snapshot, eta, delta, |look| grad_at(i, look));
    }
    apply_pull(master, pull);
    Ok(())
}

/// Asynchronous elastic step for one worker.
///
/// The gradient is taken at the pre-exchange snapshot of the local variable.
pub fn async_easgd_step<G>(w: &mut WorkerState, master: &mut MasterState, params: &ElasticParams, mut grad_at: G)
where
    G: FnMut(&[f64]) -> Vec<f64>,
{
    let snapshot = w.x.clone();
    if w.t_local.is_multiple_of(params.tau) {
        elastic_exchange(w, master, params.alpha);
    }
    let g = grad_at(&snapshot);
    for (x, gi) in w.x.iter_mut().zip(&g) {
        *x -= params.eta * gi;
    }
    w.t_local += 1;
}

/// Asynchronous elastic momentum step for one worker.
pub fn eamsgd_step<G>(w: &mut WorkerState, master: &mut MasterState, params: &ElasticParams, grad_at: G)
where
    G: FnMut(&[f64]) -> Vec<f64>,
{
    let snapshot = w.x.clone();
    if w.t_local.is_multiple_of(params.tau) {
        elastic_exchange(w, master, params.alpha);
    }
    momentum_update(w, &snapshot, params.eta, params.delta, grad_at);
}

/// `v ← δv − η g(snapshot + δv)`, `x ← x + v`, clock advanced.
fn momentum_update<G>(w: &mut WorkerState, snapshot: &[f64], eta: f64, delta: f64, mut grad_at: G)
where
    G: FnMut(&[f64]) -> Vec<f64>,
{
    let lookahead: Vec<f64> = snapshot.iter().zip(&w.v).map(|(x, v)| x + delta * v).collect();
    let g = grad_at(&lookahead);
    for ((x, v), gi) in w.x.iter_mut().zip(w.v.iter_mut()).zip(&g) {
        *v = delta * *v - eta * gi;
        *x += *v;
    }
    w.t_local += 1;
}

/// DOWNPOUR worker step. Returns true when the worker pushed to the master.
pub fn downpour_step<G>(w: &mut WorkerState, master: &mut MasterState, eta: f64, tau: u64, mut grad_at: G) -> bool
where
    G: FnMut(&[f64]) -> Vec<f64>,
{
    let synced = w.t_local.is_multiple_of(tau);
    if synced {
        center_average_step(master);
        for (c, v) in master.x_center.iter_mut().zip(&w.v) {
            *c += v;
        }
        master.t_master += 1;
        w.x.clone_from(&master.x_center);
        w.v.iter_mut().for_each(|v| *v = 0.0);
    }
    let g = grad_at(&w.x);
    for ((x, v), gi) in w.x.iter_mut().zip(w.v.iter_mut()).zip(&g) {
        let step = eta * gi;
        *x -= step;
        *v -= step;
    }
    w.t_local += 1;
    synced
}

/// How the momentum master moves the center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MdownpourVariant {
    /// `x̃ ← x̃ + δ v` after `v ← δ v − η g`.
    #[default]
    AsPrinted,
    /// `x̃ ← x̃ + v`.
    Conventional,
}

/// Momentum master update for a gradient received from one worker.
pub fn mdownpour_round(
    master: &mut MasterState,
    v: &mut [f64],
    g: &[f64],
    eta: f64,
    delta: f64,
    variant: MdownpourVariant,
) {
    center_average_step(master);
    for ((c, vi), gi) in master.x_center.iter_mut().zip(v.iter_mut()).zip(g) {
        *vi = delta * *vi - eta * gi;
        *c += match variant {
            MdownpourVariant::AsPrinted => delta * *vi,
            MdownpourVariant::Conventional => *vi,
        };
    }
    master.t_master += 1;
}

/// Round-robin linearised ADMM update for worker `i` (multiplier in `v`):
/// `λ ← λ − (x − x̃)`, `x ← (x − η g(x) + ηρ(λ + x̃)) / (1 + ηρ)`,
/// then `x̃ ← (1/p) Σⱼ (xʲ − λʲ)`.
pub fn admm_rr_update<G>(
    workers: &mut [WorkerState],
    master: &mut MasterState,
    i: usize,
    eta: f64,
    rho: f64,
    mut grad_at: G,
) where
    G: FnMut(&[f64]) -> Vec<f64>,
{
    let w = &mut workers[i];
    for ((lam, x), c) in w.v.iter_mut().zip(&w.x).zip(&master.x_center) {
        *lam -= x - c;
    }
    let g = grad_at(&w.x);
    let er = eta * rho;
    let denom = 1.0 + er;
    for (((x, lam), c), gi) in w.x.iter_mut().zip(&w.v).zip(&master.x_center).zip(&g) {
        *x = (*x - eta * gi + er * (lam + c)) / denom;
    }
    w.t_local += 1;

    center_average_step(master);
    let p = workers.len() as f64;
    for (k, c) in master.x_center.iter_mut().enumerate() {
        *c = workers.iter().map(|w| w.x[k] - w.v[k]).sum::<f64>() / p;
    }
    master.t_master += 1;
}

fn accumulate(pull: &mut Option<Vec<f64>>, diff: Vec<f64>) {
    match pull {
        None => *pull = Some(diff),
        Some(total) => total.iter_mut().zip(&diff).for_each(|(t, d)| *t += d),
    }
}

fn apply_pull(master: &mut MasterState, pull: Option<Vec<f64>>) {
    if let Some(total) = pull {
        center_average_step(master);
        for (c, d) in master.x_center.iter_mut().zip(&total) {
            *c += d;
        }
        master.t_master += 1;
    }
}

fn check_round(workers: &[WorkerState], grads: &[Vec<f64>], p: usize) -> Result<()> {
    if workers.len() != p || grads.len() != p {
        return Err(Error::Dimension {
            context: "synchronous round",
            expected: p,
            actual: workers.len().min(grads.len()),
        });
    }
    Ok(())
}
