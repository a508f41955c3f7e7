//! Deterministic simulator of `p` workers and a master under synchronous,
//! seeded-asynchronous and round-robin schedules, with Monte-Carlo
//! replication.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::distributed::{
    admm_rr_update, async_easgd_step, center_average_step, downpour_step, eamsgd_step, mdownpour_round,
    sync_easgd_round, sync_eamsgd_round, ElasticParams, MasterState, MdownpourVariant, WorkerState,
};
use crate::error::{Error, Result};
use crate::linalg::{dist_sq, norm_sq};
use crate::optim::{decayed_eta, exceeds, msgd_step, polyak_average, sgd_step, Averaging, DecaySchedule, SeqState};
use crate::problems::{NoiseStream, Problem, StreamId};

/// Domain separator between the noise key and the arrival-order key.
const ORDER_KEY: u64 = 0x5bd1_e995_7f4a_7c15;

/// Algorithm driven by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Sgd,
    Msgd,
    Asgd,
    Mvasgd,
    Easgd,
    Eamsgd,
    Downpour,
    Mdownpour,
    Adownpour,
    Mvadownpour,
    AdmmRr,
}

impl Method {
    pub const ALL: [Method; 11] = [
        Method::Sgd,
        Method::Msgd,
        Method::Asgd,
        Method::Mvasgd,
        Method::Easgd,
        Method::Eamsgd,
        Method::Downpour,
        Method::Mdownpour,
        Method::Adownpour,
        Method::Mvadownpour,
        Method::AdmmRr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Sgd => "sgd",
            Method::Msgd => "msgd",
            Method::Asgd => "asgd",
            Method::Mvasgd => "mvasgd",
            Method::Easgd => "easgd",
            Method::Eamsgd => "eamsgd",
            Method::Downpour => "downpour",
            Method::Mdownpour => "mdownpour",
            Method::Adownpour => "adownpour",
            Method::Mvadownpour => "mvadownpour",
            Method::AdmmRr => "admm-rr",
        }
    }

    /// Single-worker baselines.
    pub fn is_sequential(self) -> bool {
        matches!(self, Method::Sgd | Method::Msgd | Method::Asgd | Method::Mvasgd)
    }

    /// Methods coupled to the center through the elastic moving rate.
    pub fn is_elastic(self) -> bool {
        matches!(self, Method::Easgd | Method::Eamsgd)
    }

    /// Methods whose second rate is a constant averaging rate.
    pub fn uses_average_rate(self) -> bool {
        matches!(self, Method::Mvasgd | Method::Mvadownpour)
    }

    fn averaging(self, average_rate: f64) -> Averaging {
        if self.uses_average_rate() {
            Averaging::Constant(average_rate)
        } else {
            Averaging::TimeDecay
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::param("method", format!("unknown method `{s}`")))
    }
}

/// Order in which workers reach the master.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Schedule {
    /// Every worker steps on the same snapshot, then the master updates.
    #[default]
    Sync,
    /// Each tick visits all workers in a seeded random permutation.
    AsyncInterleaved,
    /// Global clock `t` activates worker `t mod p`.
    RoundRobin,
}

impl Schedule {
    pub fn name(self) -> &'static str {
        match self {
            Schedule::Sync => "sync",
            Schedule::AsyncInterleaved => "async-interleaved",
            Schedule::RoundRobin => "round-robin",
        }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Schedule::Sync, Schedule::AsyncInterleaved, Schedule::RoundRobin]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::param("schedule", format!("unknown schedule `{s}`")))
    }
}

/// Everything a run depends on. `run_*` are pure functions of this value.
#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub method: Method,
    pub schedule: Schedule,
    pub p: usize,
    pub eta: f64,
    /// Elastic moving rate per exchange; for `admm-rr` it is `η ρ`.
    pub alpha: f64,
    /// Constant averaging rate for `mvasgd` / `mvadownpour`.
    pub average_rate: f64,
    pub delta: f64,
    pub tau: u64,
    pub decay_gamma: f64,
    pub mdownpour_variant: MdownpourVariant,
    pub problem: Problem,
    pub x0: Vec<f64>,
    /// Ticks per replica; a tick is one local step of every worker.
    pub steps: u64,
    pub replicas: usize,
    pub seed: u64,
    pub record_every: u64,
    pub divergence_cap: f64,
}

impl SimulationConfig {
    /// Configuration with the remaining fields at their defaults:
    /// one worker, synchronous, `x0 = 0`, one replica, seed 0.
    pub fn new(method: Method, problem: Problem, eta: f64) -> Self {
        let d = problem.dim();
        Self {
            method,
            schedule: Schedule::Sync,
            p: 1,
            eta,
            alpha: 0.0,
            average_rate: 0.001,
            delta: 0.0,
            tau: 1,
            decay_gamma: 0.0,
            mdownpour_variant: MdownpourVariant::AsPrinted,
            problem,
            x0: vec![0.0; d],
            steps: 1,
            replicas: 1,
            seed: 0,
            record_every: 1,
            divergence_cap: 1e12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::param("p", "need at least one worker"));
        }
        if self.steps == 0 {
            return Err(Error::param("steps", "must be at least 1"));
        }
        if self.replicas == 0 {
            return Err(Error::param("replicas", "must be at least 1"));
        }
        if self.record_every == 0 {
            return Err(Error::param("record_every", "must be at least 1"));
        }
        if !(self.divergence_cap > 0.0) {
            return Err(Error::param("divergence_cap", "must be positive"));
        }
        if self.x0.len() != self.problem.dim() {
            return Err(Error::Dimension {
                context: "x0",
                expected: self.problem.dim(),
                actual: self.x0.len(),
            });
        }
        crate::linalg::check_finite("x0", &self.x0)?;
        self.decay()?;
        if self.method.is_sequential() && self.p != 1 {
            return Err(Error::param("p", format!("{} is a single-worker method", self.method)));
        }
        if self.method == Method::Mdownpour && self.tau != 1 {
            return Err(Error::param("tau", "mdownpour requires tau = 1"));
        }
        if self.method == Method::AdmmRr && self.schedule != Schedule::RoundRobin {
            return Err(Error::param("schedule", "admm-rr runs only under round-robin"));
        }
        if self.method.uses_average_rate() && !(0.0..=1.0).contains(&self.average_rate) {
            return Err(Error::param("average_rate", "must lie in [0, 1]"));
        }
        if self.tau == 0 {
            return Err(Error::param("tau", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.delta) {
            return Err(Error::param("delta", "must lie in [0, 1)"));
        }
        if self.method.is_elastic() {
            self.elastic_params()?;
        }
        if self.method == Method::AdmmRr && !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::param("alpha", "admm-rr needs eta * rho > 0"));
        }
        Ok(())
    }

    pub fn elastic_params(&self) -> Result<ElasticParams> {
        ElasticParams::from_alpha(self.eta, self.alpha, self.p, self.tau, self.delta)
    }

    pub fn decay(&self) -> Result<DecaySchedule> {
        DecaySchedule::new(self.eta, self.decay_gamma)
    }
}

/// Metrics at one recorded tick of one replica.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub step: u64,
    pub master_clock: u64,
    /// `‖x̃ − x*‖²`.
    pub center_err: f64,
    /// `(1/p) Σ ‖xⁱ − x*‖²`.
    pub local_err: f64,
    /// `‖mean(xⁱ) − x*‖²`.
    pub spatial_err: f64,
    /// `‖z − x*‖²` for the running average of the center.
    pub double_err: f64,
    pub objective: f64,
    pub center_dev: Vec<f64>,
    pub double_dev: Vec<f64>,
}

/// Oldest master information a worker has carried into a write.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Staleness {
    /// Master updates between the read and the write.
    pub updates: u64,
    /// Ticks between the read and the write.
    pub ticks: u64,
}

/// One replica's recorded history.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaTrajectory {
    pub replica: u64,
    pub records: Vec<Record>,
    /// Tick at which the state crossed the divergence cap.
    pub diverged_at: Option<u64>,
    pub max_staleness: Staleness,
    /// Gradient steps taken by each worker.
    pub worker_steps: Vec<u64>,
}

/// Mean, unbiased variance and standard error of a replica sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub var: f64,
    pub se: f64,
}

impl Summary {
    /// Accumulates in slice order. Variance is NaN for fewer than two values.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        if values.len() < 2 {
            return Self {
                mean,
                var: f64::NAN,
                se: f64::NAN,
            };
        }
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        Self {
            mean,
            var,
            se: (var / n).sqrt(),
        }
    }
}

/// Replica statistics at one recorded tick.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRecord {
    pub step: u64,
    /// Replicas still finite at this tick.
    pub alive: usize,
    /// Some replica diverged at or before this tick.
    pub partial: bool,
    pub center_err: Summary,
    pub local_err: Summary,
    pub spatial_err: Summary,
    pub double_err: Summary,
    pub objective: Summary,
}

/// All replicas of a run, in replica order, plus their aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub replicas: Vec<ReplicaTrajectory>,
    pub aggregate: Vec<AggregateRecord>,
}

impl Trajectory {
    pub fn diverged_replicas(&self) -> usize {
        self.replicas.iter().filter(|r| r.diverged_at.is_some()).count()
    }

    pub fn all_diverged(&self) -> bool {
        self.diverged_replicas() == self.replicas.len()
    }

    /// Center deviations `x̃ − x*` of every surviving replica at record `k`.
    pub fn center_devs(&self, k: usize) -> Vec<&[f64]> {
        self.replicas
            .iter()
            .filter_map(|r| r.records.get(k).map(|rec| rec.center_dev.as_slice()))
            .collect()
    }
}

/// A single replica in progress.
#[derive(Debug, Clone)]
pub struct Simulation<'a> {
    cfg: &'a SimulationConfig,
    replica: u64,
    noise: NoiseStream,
    decay: DecaySchedule,
    elastic: Option<ElasticParams>,
    workers: Vec<WorkerState>,
    master: MasterState,
    seq: Option<SeqState>,
    master_momentum: Vec<f64>,
    order: ChaCha8Rng,
    perm: Vec<usize>,
    clock: u64,
    tick: u64,
    last_read: Vec<(u64, u64)>,
    staleness: Staleness,
}

impl<'a> Simulation<'a> {
    pub fn new(cfg: &'a SimulationConfig, replica: u64) -> Result<Self> {
        cfg.validate()?;
        let p = cfg.p;
        let mut order = ChaCha8Rng::seed_from_u64(cfg.seed ^ ORDER_KEY);
        order.set_stream(replica);
        let elastic = if cfg.method.is_elastic() {
            Some(cfg.elastic_params()?)
        } else {
            None
        };
        Ok(Self {
            cfg,
            replica,
            noise: NoiseStream::new(cfg.seed),
            decay: cfg.decay()?,
            elastic,
            workers: vec![WorkerState::new(cfg.x0.clone()); p],
            master: MasterState::new(cfg.x0.clone(), cfg.method.averaging(cfg.average_rate)),
            seq: cfg.method.is_sequential().then(|| SeqState::new(cfg.x0.clone())),
            master_momentum: vec![0.0; cfg.x0.len()],
            order,
            perm: (0..p).collect(),
            clock: 0,
            tick: 0,
            last_read: vec![(0, 0); p],
            staleness: Staleness::default(),
        })
    }

    pub fn workers(&self) -> &[WorkerState] {
        &self.workers
    }

    pub fn master(&self) -> &MasterState {
        &self.master
    }

    pub fn seq_state(&self) -> Option<&SeqState> {
        self.seq.as_ref()
    }

    pub fn ticks(&self) -> u64 {
        self.tick
    }

    /// Global clock; advances once per worker activation.
    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn max_staleness(&self) -> Staleness {
        self.staleness
    }

    /// One tick: every worker takes one local step.
    pub fn step_tick(&mut self) {
        match self.cfg.schedule {
            Schedule::Sync => self.sync_tick(),
            Schedule::AsyncInterleaved => {
                self.perm.shuffle(&mut self.order);
                for k in 0..self.perm.len() {
                    let i = self.perm[k];
                    self.worker_action(i);
                }
            }
            Schedule::RoundRobin => {
                for _ in 0..self.cfg.p {
                    self.step_clock();
                }
                return;
            }
        }
        self.clock += self.cfg.p as u64;
        self.tick += 1;
    }

    /// One round-robin clock: worker `clock mod p` acts.
    pub fn step_clock(&mut self) {
        let i = (self.clock % self.cfg.p as u64) as usize;
        self.worker_action(i);
        self.clock += 1;
        if self.clock.is_multiple_of(self.cfg.p as u64) {
            self.tick += 1;
        }
    }

    /// True once any state vector is non-finite or beyond the cap.
    pub fn diverged(&self) -> bool {
        let cap = self.cfg.divergence_cap;
        if let Some(s) = &self.seq {
            return exceeds(&s.x, cap) || exceeds(&s.v, cap);
        }
        exceeds(&self.master.x_center, cap)
            || exceeds(&self.master_momentum, cap)
            || self.workers.iter().any(|w| exceeds(&w.x, cap) || exceeds(&w.v, cap))
    }

    pub fn record(&self) -> Record {
        let reference = self.cfg.problem.reference_point();
        let (center, locals, z): (&[f64], Vec<&[f64]>, &[f64]) = match &self.seq {
            Some(s) => (&s.x, vec![&s.x], &s.z),
            None => (
                &self.master.x_center,
                self.workers.iter().map(|w| w.x.as_slice()).collect(),
                &self.master.z_avg,
            ),
        };
        let p = locals.len() as f64;
        let d = reference.len();
        let mut spatial = vec![0.0; d];
        for x in &locals {
            for (s, xi) in spatial.iter_mut().zip(*x) {
                *s += xi / p;
            }
        }
        let center_dev: Vec<f64> = center.iter().zip(reference).map(|(c, r)| c - r).collect();
        let double_dev: Vec<f64> = z.iter().zip(reference).map(|(c, r)| c - r).collect();
        Record {
            step: self.tick,
            master_clock: match &self.seq {
                Some(s) => s.t,
                None => self.master.t_master,
            },
            center_err: norm_sq(&center_dev),
            local_err: locals.iter().map(|x| dist_sq(x, reference)).sum::<f64>() / p,
            spatial_err: dist_sq(&spatial, reference),
            double_err: norm_sq(&double_dev),
            objective: self.cfg.problem.objective(center),
            center_dev,
            double_dev,
        }
    }

    fn note_read(&mut self, i: usize) {
        self.last_read[i] = (self.master.t_master, self.tick);
    }

    fn note_write(&mut self, i: usize) {
        let (version, tick) = self.last_read[i];
        self.staleness.updates = self.staleness.updates.max(self.master.t_master - version);
        self.staleness.ticks = self.staleness.ticks.max(self.tick - tick);
    }

    fn eta_for(&self, t_local: u64) -> f64 {
        decayed_eta(&self.decay, t_local)
    }

    fn worker_action(&mut self, i: usize) {
        if self.seq.is_some() {
            self.sequential_step();
            return;
        }
        let cfg = self.cfg;
        let eta = self.eta_for(self.workers[i].t_local);
        let step = self.workers[i].t_local;
        let exchanging = step.is_multiple_of(cfg.tau);
        if exchanging || cfg.method == Method::Mdownpour || cfg.method == Method::AdmmRr {
            self.note_write(i);
        }
        let (problem, noise, replica) = (&cfg.problem, &self.noise, self.replica);
        let grad = |x: &[f64]| {
            problem.sample_gradient(
                x,
                noise,
                StreamId {
                    replica,
                    worker: i as u64,
                    step,
                },
            )
        };
        match cfg.method {
            Method::Easgd => {
                let params = self.elastic.expect("elastic params").with_eta(eta);
                async_easgd_step(&mut self.workers[i], &mut self.master, &params, grad);
            }
            Method::Eamsgd => {
                let params = self.elastic.expect("elastic params").with_eta(eta);
                eamsgd_step(&mut self.workers[i], &mut self.master, &params, grad);
            }
            Method::Downpour | Method::Adownpour | Method::Mvadownpour => {
                downpour_step(&mut self.workers[i], &mut self.master, eta, cfg.tau, grad);
            }
            Method::Mdownpour => {
                let w = &mut self.workers[i];
                w.x.clone_from(&self.master.x_center);
                let g = grad(&w.x);
                mdownpour_round(
                    &mut self.master,
                    &mut self.master_momentum,
                    &g,
                    eta,
                    cfg.delta,
                    cfg.mdownpour_variant,
                );
                w.t_local += 1;
            }
            Method::AdmmRr => {
                let rho = cfg.alpha / cfg.eta;
                admm_rr_update(&mut self.workers, &mut self.master, i, eta, rho, grad);
            }
            Method::Sgd | Method::Msgd | Method::Asgd | Method::Mvasgd => unreachable!("sequential handled above"),
        }
        if exchanging || cfg.method == Method::Mdownpour || cfg.method == Method::AdmmRr {
            self.note_read(i);
        }
    }

    fn sequential_step(&mut self) {
        let cfg = self.cfg;
        let state = self.seq.take().expect("sequential state");
        let eta = self.eta_for(state.t);
        let (problem, noise, replica, step) = (&cfg.problem, &self.noise, self.replica, state.t);
        let grad = |x: &[f64]| {
            problem.sample_gradient(
                x,
                noise,
                StreamId {
                    replica,
                    worker: 0,
                    step,
                },
            )
        };
        let averaged = match cfg.method {
            Method::Asgd | Method::Mvasgd => polyak_average(state, cfg.method.averaging(cfg.average_rate)),
            _ => state,
        };
        let next = match cfg.method {
            Method::Msgd => msgd_step(averaged.clone(), grad, eta, cfg.delta),
            _ => {
                let g = grad(&averaged.x);
                sgd_step(averaged.clone(), &g, eta)
            }
        };
        // Divergence here is data: keep the raw state and let the cap check flag it.
        self.seq = Some(next.unwrap_or_else(|_| raw_step(averaged, cfg, eta, grad)));
        self.workers[0].t_local += 1;
    }

    fn sync_tick(&mut self) {
        if self.seq.is_some() {
            self.sequential_step();
            return;
        }
        let cfg = self.cfg;
        let p = cfg.p;
        let step = self.workers[0].t_local;
        let eta = self.eta_for(step);
        let (problem, noise, replica) = (&cfg.problem, &self.noise, self.replica);
        let grad = |i: usize, x: &[f64]| {
            problem.sample_gradient(
                x,
                noise,
                StreamId {
                    replica,
                    worker: i as u64,
                    step,
                },
            )
        };
        let exchanging = step.is_multiple_of(cfg.tau);
        match cfg.method {
            Method::Easgd => {
                if exchanging {
                    let grads: Vec<Vec<f64>> = (0..p).map(|i| grad(i, &self.workers[i].x)).collect();
                    let params = self.elastic.expect("elastic params").with_eta(eta);
                    sync_easgd_round(&mut self.workers, &mut self.master, &params, &grads)
                        .expect("validated worker count");
                } else {
                    for (i, w) in self.workers.iter_mut().enumerate() {
                        let g = grad(i, &w.x);
                        w.x.iter_mut().zip(&g).for_each(|(x, gi)| *x -= eta * gi);
                        w.t_local += 1;
                    }
                }
            }
            Method::Eamsgd => {
                let params = self.elastic.expect("elastic params").with_eta(eta);
                sync_eamsgd_round(&mut self.workers, &mut self.master, &params, grad)
                    .expect("validated worker count");
            }
            Method::Downpour | Method::Adownpour | Method::Mvadownpour => {
                if exchanging {
                    center_average_step(&mut self.master);
                    for w in &self.workers {
                        for (c, v) in self.master.x_center.iter_mut().zip(&w.v) {
                            *c += v;
                        }
                    }
                    self.master.t_master += 1;
                    for w in &mut self.workers {
                        w.x.clone_from(&self.master.x_center);
                        w.v.iter_mut().for_each(|v| *v = 0.0);
                    }
                }
                for (i, w) in self.workers.iter_mut().enumerate() {
                    let g = grad(i, &w.x);
                    for ((x, v), gi) in w.x.iter_mut().zip(w.v.iter_mut()).zip(&g) {
                        let delta = eta * gi;
                        *x -= delta;
                        *v -= delta;
                    }
                    w.t_local += 1;
                }
            }
            Method::Mdownpour => {
                let grads: Vec<Vec<f64>> = (0..p).map(|i| grad(i, &self.master.x_center)).collect();
                for w in &mut self.workers {
                    w.x.clone_from(&self.master.x_center);
                    w.t_local += 1;
                }
                for (i, g) in grads.iter().enumerate() {
                    self.staleness.updates = self.staleness.updates.max(i as u64);
                    mdownpour_round(
                        &mut self.master,
                        &mut self.master_momentum,
                        g,
                        eta,
                        cfg.delta,
                        cfg.mdownpour_variant,
                    );
                }
                return;
            }
            Method::AdmmRr | Method::Sgd | Method::Msgd | Method::Asgd | Method::Mvasgd => {
                unreachable!("rejected by validation or handled above")
            }
        }
        if exchanging {
            for i in 0..p {
                self.note_write(i);
                self.last_read[i] = (self.master.t_master, self.tick + 1);
            }
        }
    }
}

/// Sequential update without the divergence guard, used once the guard
/// has already fired so that the cap check sees the offending state.
fn raw_step<G>(mut s: SeqState, cfg: &SimulationConfig, eta: f64, mut grad: G) -> SeqState
where
    G: FnMut(&[f64]) -> Vec<f64>,
{
    if cfg.method == Method::Msgd {
        let look: Vec<f64> = s.x.iter().zip(&s.v).map(|(x, v)| x + cfg.delta * v).collect();
        let g = grad(&look);
        for ((x, v), gi) in s.x.iter_mut().zip(s.v.iter_mut()).zip(&g) {
            *v = cfg.delta * *v - eta * gi;
            *x += *v;
        }
    } else {
        let g = grad(&s.x);
        s.x.iter_mut().zip(&g).for_each(|(x, gi)| *x -= eta * gi);
    }
    s.t += 1;
    s
}

fn is_record_step(step: u64, cfg: &SimulationConfig) -> bool {
    step.is_multiple_of(cfg.record_every) || step == cfg.steps
}

/// Runs one replica to `cfg.steps` ticks or to divergence.
pub fn run_replica(cfg: &SimulationConfig, replica: u64) -> Result<ReplicaTrajectory> {
    let mut sim = Simulation::new(cfg, replica)?;
    let mut records = vec![sim.record()];
    let mut diverged_at = None;
    for tick in 1..=cfg.steps {
        sim.step_tick();
        if sim.diverged() {
            diverged_at = Some(tick);
            break;
        }
        if is_record_step(tick, cfg) {
            records.push(sim.record());
        }
    }
    Ok(ReplicaTrajectory {
        replica,
        records,
        diverged_at,
        max_staleness: sim.max_staleness(),
        worker_steps: sim.workers().iter().map(|w| w.t_local).collect(),
    })
}

/// Replica 0 of `cfg`.
pub fn run_simulation(cfg: &SimulationConfig) -> Result<ReplicaTrajectory> {
    run_replica(cfg, 0)
}

/// Runs `cfg.replicas` replicas on independent noise streams and aggregates
/// them in replica order.
pub fn run_replicas(cfg: &SimulationConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let replicas = run_all(cfg)?;
    let aggregate = aggregate(&replicas);
    Ok(Trajectory { replicas, aggregate })
}

#[cfg(feature = "parallel")]
fn run_all(cfg: &SimulationConfig) -> Result<Vec<ReplicaTrajectory>> {
    use rayon::prelude::*;
    (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|r| run_replica(cfg, r))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn run_all(cfg: &SimulationConfig) -> Result<Vec<ReplicaTrajectory>> {
    (0..cfg.replicas as u64).map(|r| run_replica(cfg, r)).collect()
}

/// Per-record replica statistics over the replicas alive at that record.
pub fn aggregate(replicas: &[ReplicaTrajectory]) -> Vec<AggregateRecord> {
    let longest = replicas.iter().map(|r| r.records.len()).max().unwrap_or(0);
    let mut out = Vec::with_capacity(longest);
    for k in 0..longest {
        let alive: Vec<&Record> = replicas.iter().filter_map(|r| r.records.get(k)).collect();
        let step = alive[0].step;
        let partial = replicas.iter().any(|r| r.diverged_at.is_some_and(|d| d <= step));
        let column = |f: fn(&Record) -> f64| Summary::of(&alive.iter().map(|r| f(r)).collect::<Vec<_>>());
        out.push(AggregateRecord {
            step,
            alive: alive.len(),
            partial,
            center_err: column(|r| r.center_err),
            local_err: column(|r| r.local_err),
            spatial_err: column(|r| r.spatial_err),
            double_err: column(|r| r.double_err),
            objective: column(|r| r.objective),
        });
    }
    out
}

/// History of a round-robin ADMM run on `F(x) = x²/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmTrajectory {
    /// `‖s_t‖` for every clock `t = 0..=last`.
    pub norms: Vec<f64>,
    /// State `(λ¹, x¹, …, λᵖ, xᵖ, x̃)` at the last clock.
    pub final_state: Vec<f64>,
    pub diverged_at: Option<u64>,
}

/// Iterates the round-robin linearised ADMM updates on the scalar quadratic
/// from the stacked state `s0 = (λ¹, x¹, …, λᵖ, xᵖ, x̃)`.
pub fn run_admm_roundrobin(p: usize, eta: f64, rho: f64, s0: &[f64], steps: u64) -> Result<AdmmTrajectory> {
    run_admm_roundrobin_capped(p, eta, rho, s0, steps, 1e12)
}

pub fn run_admm_roundrobin_capped(
    p: usize,
    eta: f64,
    rho: f64,
    s0: &[f64],
    steps: u64,
    cap: f64,
) -> Result<AdmmTrajectory> {
    if p == 0 {
        return Err(Error::param("p", "need at least one worker"));
    }
    if s0.len() != 2 * p + 1 {
        return Err(Error::Dimension {
            context: "ADMM state",
            expected: 2 * p + 1,
            actual: s0.len(),
        });
    }
    if !(eta > 0.0 && rho > 0.0) {
        return Err(Error::param("eta/rho", "must be positive"));
    }
    let mut workers: Vec<WorkerState> = (0..p)
        .map(|i| WorkerState {
            x: vec![s0[2 * i + 1]],
            v: vec![s0[2 * i]],
            t_local: 0,
        })
        .collect();
    let mut master = MasterState::new(vec![s0[2 * p]], Averaging::TimeDecay);
    let mut norms = vec![norm_sq(s0).sqrt()];
    let mut diverged_at = None;
    for t in 0..steps {
        admm_rr_update(&mut workers, &mut master, (t % p as u64) as usize, eta, rho, |x| x.to_vec());
        let state = admm_state(&workers, &master);
        let norm = norm_sq(&state).sqrt();
        norms.push(norm);
        if !(norm <= cap) {
            diverged_at = Some(t + 1);
            break;
        }
    }
    Ok(AdmmTrajectory {
        norms,
        final_state: admm_state(&workers, &master),
        diverged_at,
    })
}

fn admm_state(workers: &[WorkerState], master: &MasterState) -> Vec<f64> {
    let mut s = Vec::with_capacity(2 * workers.len() + 1);
    for w in workers {
        s.push(w.v[0]);
        s.push(w.x[0]);
    }
    s.push(master.x_center[0]);
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::QuadraticProblem;

    fn scalar(sigma2: f64) -> Problem {
        QuadraticProblem::scalar(1.0, 0.0, sigma2).unwrap().into()
    }

    fn base(method: Method, p: usize) -> SimulationConfig {
        let mut cfg = SimulationConfig::new(method, scalar(4.0), 0.1);
        cfg.p = p;
        cfg.alpha = if method.is_elastic() { 0.5 / p as f64 } else { 0.0 };
        cfg.x0 = vec![2.0];
        cfg.steps = 50;
        cfg.seed = 11;
        cfg
    }

    #[test]
    fn names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        for s in [Schedule::Sync, Schedule::AsyncInterleaved, Schedule::RoundRobin] {
            assert_eq!(s.name().parse::<Schedule>().unwrap(), s);
        }
        assert!("sdg".parse::<Method>().is_err());
    }

    #[test]
    fn validation_rejects_inconsistent_configs() {
        let mut cfg = base(Method::Sgd, 2);
        assert!(cfg.validate().is_err());
        cfg.p = 1;
        cfg.validate().unwrap();
        cfg.record_every = 0;
        assert!(cfg.validate().is_err());

        let mut cfg = base(Method::Mdownpour, 2);
        cfg.tau = 2;
        assert!(cfg.validate().is_err());

        let cfg = base(Method::AdmmRr, 2);
        assert!(cfg.validate().is_err());

        let mut cfg = base(Method::Easgd, 2);
        cfg.alpha = 0.6;
        assert!(cfg.validate().is_err(), "beta above one");

        let mut cfg = base(Method::Easgd, 2);
        cfg.x0 = vec![0.0, 1.0];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn single_worker_sgd_matches_sequential_loop() {
        let cfg = base(Method::Sgd, 1);
        let run = run_simulation(&cfg).unwrap();
        let noise = NoiseStream::new(cfg.seed);
        let mut s = SeqState::new(cfg.x0.clone());
        for t in 0..cfg.steps {
            let id = StreamId {
                replica: 0,
                worker: 0,
                step: t,
            };
            let g = cfg.problem.sample_gradient(&s.x, &noise, id);
            s = sgd_step(s, &g, cfg.eta).unwrap();
        }
        assert_eq!(run.records.last().unwrap().center_dev, s.x);
    }

    #[test]
    fn single_worker_elastic_without_coupling_is_sgd() {
        let mut sgd = base(Method::Sgd, 1);
        sgd.x0 = vec![3.0];
        for (method, schedule) in [
            (Method::Easgd, Schedule::Sync),
            (Method::Easgd, Schedule::AsyncInterleaved),
            (Method::Eamsgd, Schedule::RoundRobin),
        ] {
            let mut cfg = sgd.clone();
            cfg.method = method;
            cfg.schedule = schedule;
            cfg.alpha = 0.0;
            let a = run_simulation(&sgd).unwrap();
            let b = run_simulation(&cfg).unwrap();
            let xa: Vec<_> = a.records.iter().map(|r| r.center_err).collect();
            let xb: Vec<_> = b.records.iter().map(|r| r.local_err).collect();
            assert_eq!(xa, xb, "{method} {schedule}");
        }
    }

    #[test]
    fn sync_and_round_robin_agree_for_one_worker() {
        for method in [Method::Easgd, Method::Eamsgd, Method::Downpour, Method::Mdownpour] {
            let mut cfg = base(method, 1);
            cfg.alpha = if method.is_elastic() { 0.3 } else { 0.0 };
            cfg.delta = if method == Method::Eamsgd { 0.5 } else { 0.0 };
            let a = run_simulation(&cfg).unwrap();
            cfg.schedule = Schedule::RoundRobin;
            let b = run_simulation(&cfg).unwrap();
            assert_eq!(a.records, b.records, "{method}");
            assert_eq!(a.worker_steps, b.worker_steps);
        }
    }

    #[test]
    fn eamsgd_without_momentum_is_easgd_for_every_schedule() {
        for schedule in [Schedule::Sync, Schedule::AsyncInterleaved, Schedule::RoundRobin] {
            let mut cfg = base(Method::Easgd, 4);
            cfg.schedule = schedule;
            cfg.tau = 3;
            let a = run_simulation(&cfg).unwrap();
            cfg.method = Method::Eamsgd;
            let b = run_simulation(&cfg).unwrap();
            assert_eq!(a, b, "{schedule}");
        }
    }

    #[test]
    fn runs_are_deterministic() {
        for method in Method::ALL {
            let mut cfg = base(method, if method.is_sequential() { 1 } else { 3 });
            if method == Method::AdmmRr {
                cfg.schedule = Schedule::RoundRobin;
                cfg.alpha = 0.01;
            } else if !method.is_sequential() {
                cfg.schedule = Schedule::AsyncInterleaved;
            }
            cfg.replicas = 3;
            let a = run_replicas(&cfg).unwrap();
            let b = run_replicas(&cfg).unwrap();
            assert_eq!(a, b, "{method}");
        }
    }

    #[test]
    fn consensus_at_optimum_is_fixed_for_every_method() {
        for method in Method::ALL {
            let mut cfg = SimulationConfig::new(method, scalar(0.0), 0.1);
            cfg.p = if method.is_sequential() { 1 } else { 3 };
            cfg.alpha = if method.is_elastic() || method == Method::AdmmRr { 0.1 } else { 0.0 };
            cfg.delta = 0.9;
            cfg.steps = 20;
            if method == Method::AdmmRr {
                cfg.schedule = Schedule::RoundRobin;
            }
            let run = run_simulation(&cfg).unwrap();
            for r in &run.records {
                assert_eq!((r.center_err, r.local_err, r.double_err), (0.0, 0.0, 0.0), "{method}");
            }
        }
    }

    #[test]
    fn noiseless_replicas_have_zero_variance() {
        let mut cfg = base(Method::Easgd, 3);
        cfg.problem = scalar(0.0);
        cfg.replicas = 4;
        let traj = run_replicas(&cfg).unwrap();
        assert!(traj.aggregate.iter().all(|a| a.center_err.var == 0.0));
    }

    #[test]
    fn aggregates_match_replica_values() {
        let mut cfg = base(Method::Downpour, 3);
        cfg.schedule = Schedule::AsyncInterleaved;
        cfg.replicas = 5;
        cfg.record_every = 7;
        let traj = run_replicas(&cfg).unwrap();
        for (k, agg) in traj.aggregate.iter().enumerate() {
            let vals: Vec<f64> = traj.replicas.iter().map(|r| r.records[k].local_err).collect();
            let mean = vals.iter().sum::<f64>() / 5.0;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
            assert!((agg.local_err.mean - mean).abs() <= 1e-12 * (1.0 + mean.abs()));
            assert!((agg.local_err.var - var).abs() <= 1e-12 * (1.0 + var));
        }
        let steps: Vec<u64> = traj.aggregate.iter().map(|a| a.step).collect();
        assert_eq!(steps, vec![0, 7, 14, 21, 28, 35, 42, 49, 50]);
    }

    #[test]
    fn round_robin_step_counts() {
        let cfg = base(Method::Easgd, 3);
        let mut cfg = cfg;
        cfg.schedule = Schedule::RoundRobin;
        let mut sim = Simulation::new(&cfg, 0).unwrap();
        for big_t in 1..=20u64 {
            sim.step_clock();
            for (idx, w) in sim.workers().iter().enumerate() {
                let i = idx as u64 + 1;
                let expected = (big_t + 1).saturating_sub(i).div_ceil(3);
                assert_eq!(w.t_local, expected, "T={big_t} worker {i}");
            }
        }
    }

    #[test]
    fn staleness_within_one_tick() {
        for method in [
            Method::Easgd,
            Method::Eamsgd,
            Method::Downpour,
            Method::Mdownpour,
            Method::Adownpour,
            Method::Mvadownpour,
        ] {
            for schedule in [Schedule::Sync, Schedule::AsyncInterleaved, Schedule::RoundRobin] {
                let mut cfg = base(method, 5);
                cfg.schedule = schedule;
                cfg.steps = 40;
                let run = run_simulation(&cfg).unwrap();
                assert!(run.max_staleness.ticks <= 1, "{method} {schedule}: {:?}", run.max_staleness);
                assert!(run.max_staleness.updates <= 2 * 5, "{method} {schedule}");
            }
        }
    }

    #[test]
    fn divergence_truncates_instead_of_failing() {
        let mut cfg = base(Method::Sgd, 1);
        cfg.eta = 2.5;
        cfg.steps = 10_000;
        let run = run_simulation(&cfg).unwrap();
        let at = run.diverged_at.expect("must diverge");
        assert!(at < 200);
        assert!(run.records.iter().all(|r| r.center_err.is_finite()));

        let mut cfg = base(Method::Easgd, 2);
        cfg.eta = 2.5;
        cfg.steps = 10_000;
        cfg.replicas = 2;
        let traj = run_replicas(&cfg).unwrap();
        assert!(traj.all_diverged());
        assert!(traj.aggregate.last().unwrap().partial || traj.aggregate.len() == 1);
    }

    #[test]
    fn round_robin_easgd_stays_bounded_inside_region() {
        let mut cfg = SimulationConfig::new(Method::Easgd, scalar(0.0), 0.5);
        cfg.p = 4;
        cfg.alpha = 0.2;
        cfg.schedule = Schedule::RoundRobin;
        cfg.x0 = vec![1000.0];
        cfg.steps = 25_000;
        cfg.record_every = 5_000;
        let run = run_simulation(&cfg).unwrap();
        assert!(run.diverged_at.is_none());
        assert!(run.records.last().unwrap().center_err < 1e-6);
    }

    #[test]
    fn admm_stable_region_decays() {
        let mut s0 = vec![0.0; 7];
        s0.iter_mut().skip(1).step_by(2).for_each(|x| *x = 1.0);
        let run = run_admm_roundrobin(3, 0.1, 1.0, &s0, 3_000).unwrap();
        assert!(run.diverged_at.is_none());
        assert!(*run.norms.last().unwrap() < 1e-6);
    }

    #[test]
    fn admm_rejects_bad_state() {
        assert!(run_admm_roundrobin(3, 0.1, 1.0, &[0.0; 6], 10).is_err());
    }

    #[test]
    fn decay_uses_local_clock() {
        let mut cfg = base(Method::Sgd, 1);
        cfg.problem = scalar(0.0);
        cfg.x0 = vec![1.0];
        cfg.decay_gamma = 1.0;
        cfg.steps = 3;
        let run = run_simulation(&cfg).unwrap();
        let expected = (1.0 - 0.1) * (1.0 - 0.1 / 2f64.sqrt()) * (1.0 - 0.1 / 3f64.sqrt());
        assert!((run.records.last().unwrap().center_dev[0] - expected).abs() < 1e-15);
    }
}
