//! Birth/death/change Metropolis-Hastings kernel for the Hug density, the
//! Metropolis-within-Gibbs sweep over (theta, plane, sources) and the
//! simulated-annealing driver.
//!
//! The chain's stationary target couples all projection planes: a move is
//! accepted on the energy summed over the active planes (the product of the
//! per-plane densities), while the Gibbs-sampled plane selects the
//! coordinate pair that change proposals refine. Acceptance on a single
//! plane's energy lets every plane visit undo the others' fits, so the
//! annealer never stabilizes; the summed field has the jointly consistent
//! patterns as its minima. On bidimensional data (one plane) the two
//! formulations coincide.
//!
//! Tempering applies to the density ratio only: at temperature `T` a move is
//! accepted with `min{1, exp(-dU/T) * proposal_ratio}`, so the chain targets
//! the tempered field exactly. Proposals leaving the unit window are
//! rejected rather than reflected.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{HugError, Result};
use crate::model::{
    energy, interaction_energy, sample_theta_tempered, stats_flat, HugStatistics, ModelParams,
    PlaneIndex, PlaneTable, SourceConfig, StatScratch, ThetaPrior, WINDOW_VOLUME,
};
use crate::trace::{ChainTrace, TraceHeader, TraceRecord};

/// The three transition types of the kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MoveKind {
    Birth,
    Death,
    Change,
}

/// Kernel configuration: move probabilities, the change-ball radius, the
/// number of MH steps per Gibbs inner call and the minimum source count
/// enforced by rejecting deaths (0 disables the rule).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub p_birth: f64,
    pub p_death: f64,
    pub p_change: f64,
    pub change_radius: f64,
    pub mh_steps: usize,
    pub min_sources: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            p_birth: 0.2,
            p_death: 0.2,
            p_change: 0.6,
            change_radius: 0.3,
            mh_steps: 200,
            min_sources: 3,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let probs = [self.p_birth, self.p_death, self.p_change];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(HugError::config(format!(
                "move probabilities must lie in [0,1], got {probs:?}"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if sum > 1.0 + 1e-12 {
            return Err(HugError::config(format!(
                "move probabilities sum to {sum} > 1"
            )));
        }
        if !self.change_radius.is_finite() || self.change_radius <= 0.0 {
            return Err(HugError::config(format!(
                "change radius must be positive, got {}",
                self.change_radius
            )));
        }
        Ok(())
    }
}

/// Cooling scheme and bookkeeping of the annealing run. The temperature
/// follows `T_{k+1} = max(c * T_k, T_min)`, so it is nonincreasing, reaches
/// exactly `T_min` and then stays constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnealingSchedule {
    pub initial_temperature: f64,
    pub cooling: f64,
    pub min_temperature: f64,
    pub iterations: u64,
    /// Gibbs applications per outer iteration; `None` means one per plane.
    pub gibbs_per_iteration: Option<usize>,
    pub save_every: u64,
    pub keep_last: usize,
}

impl Default for AnnealingSchedule {
    fn default() -> Self {
        AnnealingSchedule {
            initial_temperature: 1e4,
            cooling: 0.99999,
            min_temperature: 1e-6,
            iterations: 3_500_000,
            gibbs_per_iteration: None,
            save_every: 1000,
            keep_last: 500,
        }
    }
}

impl AnnealingSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_temperature.is_finite() && self.initial_temperature > 0.0) {
            return Err(HugError::config("initial temperature must be positive"));
        }
        if !(self.cooling > 0.0 && self.cooling < 1.0) {
            return Err(HugError::config(format!(
                "cooling coefficient must lie in (0,1), got {}",
                self.cooling
            )));
        }
        if !(self.min_temperature > 0.0 && self.min_temperature <= self.initial_temperature) {
            return Err(HugError::config(
                "temperature floor must satisfy 0 < T_min <= T_initial",
            ));
        }
        if self.save_every == 0 {
            return Err(HugError::config("save_every must be at least 1"));
        }
        if self.keep_last == 0 {
            return Err(HugError::config("keep_last must be at least 1"));
        }
        Ok(())
    }

    /// Temperatures `T_1, T_2, ...` for the outer iterations.
    pub fn temperatures(&self) -> impl Iterator<Item = f64> + '_ {
        let mut t = self.initial_temperature;
        (0..self.iterations).map(move |_| {
            let current = t;
            t = (self.cooling * t).max(self.min_temperature);
            current
        })
    }
}

/// Outcome of a single kernel application.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    /// The proposed transition; `None` when no move was selected
    /// (possible when the move probabilities sum to less than one).
    pub kind: Option<MoveKind>,
    pub accepted: bool,
}

/// One MH chain over source patterns, bound to a prepared dataset.
pub struct Chain<'a> {
    table: &'a PlaneTable,
    prior: ThetaPrior,
    cfg: SamplerConfig,
    params: ModelParams,
    dims: usize,
    sources: Vec<f64>,
    plane: PlaneIndex,
    /// Statistics of the current pattern, one entry per active plane.
    stats: Vec<HugStatistics>,
    active: Vec<PlaneIndex>,
    rng: ChaCha8Rng,
    scratch: StatScratch,
    proposal: Vec<f64>,
    proposal_stats: Vec<HugStatistics>,
}

impl<'a> Chain<'a> {
    /// Builds a chain with the initial pattern of 4 sources distributed
    /// uniformly in the window and the weights at their prior means.
    pub fn new(
        table: &'a PlaneTable,
        prior: ThetaPrior,
        interaction_radius: f64,
        cfg: SamplerConfig,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        prior.validate()?;
        let params = ModelParams::with_theta(prior.means, interaction_radius);
        params.validate()?;
        let active = table.active_planes();
        if active.is_empty() {
            return Err(HugError::domain(
                "every projection plane has a degenerate data hull; nothing to sample on",
            ));
        }
        let dims = table.dims();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sources = Vec::with_capacity(4 * dims);
        for _ in 0..4 * dims {
            sources.push(rng.gen::<f64>());
        }
        let plane = active[0];
        let mut scratch = StatScratch::default();
        let stats = active
            .iter()
            .map(|&p| stats_flat(&sources, dims, table, p, params.r, &mut scratch))
            .collect();
        Ok(Chain {
            table,
            prior,
            cfg,
            params,
            dims,
            sources,
            plane,
            stats,
            active,
            rng,
            scratch,
            proposal: Vec::new(),
            proposal_stats: Vec::new(),
        })
    }

    pub fn source_count(&self) -> usize {
        self.sources.len() / self.dims
    }

    pub fn sources(&self) -> Vec<Vec<f64>> {
        self.sources
            .chunks_exact(self.dims)
            .map(|row| row.to_vec())
            .collect()
    }

    pub fn plane(&self) -> PlaneIndex {
        self.plane
    }

    pub fn params(&self) -> ModelParams {
        self.params
    }

    /// Statistics of the current pattern on the active plane.
    pub fn statistics(&self) -> HugStatistics {
        self.stats[self.active_index()]
    }

    fn active_index(&self) -> usize {
        self.active
            .iter()
            .position(|&p| p == self.plane)
            .expect("active plane is tracked")
    }

    /// Replaces the weights without touching the pattern (statistics do not
    /// depend on theta).
    pub fn set_params(&mut self, params: ModelParams) -> Result<()> {
        params.validate()?;
        self.params = params;
        Ok(())
    }

    /// Switches the active plane (the coordinate pair change proposals act
    /// on).
    pub fn set_plane(&mut self, plane: PlaneIndex) -> Result<()> {
        if plane.zero_based() >= self.table.plane_count() || !self.table.is_active(plane) {
            return Err(HugError::domain(format!(
                "plane {} is not an active plane",
                plane.one_based()
            )));
        }
        self.plane = plane;
        Ok(())
    }

    /// Replaces the pattern, recomputing the cached statistics.
    pub fn set_sources(&mut self, sources: &SourceConfig) -> Result<()> {
        let flat = sources.flatten(self.dims);
        if flat.len() != sources.len() * self.dims {
            return Err(HugError::domain("source dimensions do not match dataset"));
        }
        self.sources = flat;
        self.refresh_stats();
        Ok(())
    }

    fn refresh_stats(&mut self) {
        self.stats.clear();
        for &plane in &self.active {
            self.stats.push(stats_flat(
                &self.sources,
                self.dims,
                self.table,
                plane,
                self.params.r,
                &mut self.scratch,
            ));
        }
    }

    fn current_energy(&self) -> f64 {
        self.stats.iter().map(|s| energy(s, &self.params)).sum()
    }

    /// Evaluates the proposal buffer on every active plane and returns its
    /// summed energy.
    fn evaluate_proposal(&mut self) -> f64 {
        self.proposal_stats.clear();
        let mut total = 0.0;
        for &plane in &self.active {
            let stats = stats_flat(
                &self.proposal,
                self.dims,
                self.table,
                plane,
                self.params.r,
                &mut self.scratch,
            );
            total += energy(&stats, &self.params);
            self.proposal_stats.push(stats);
        }
        total
    }

    fn commit_proposal(&mut self) {
        std::mem::swap(&mut self.sources, &mut self.proposal);
        std::mem::swap(&mut self.stats, &mut self.proposal_stats);
    }

    fn accept(&mut self, ratio: f64) -> bool {
        self.rng.gen::<f64>() < ratio
    }

    /// One kernel application targeting `p(s | theta, v)^{1/T}` on the
    /// current plane.
    pub fn mh_step(&mut self, temperature: f64) -> StepOutcome {
        debug_assert!(temperature > 0.0);
        let draw: f64 = self.rng.gen();
        if draw < self.cfg.p_birth {
            StepOutcome {
                kind: Some(MoveKind::Birth),
                accepted: self.birth(temperature),
            }
        } else if draw < self.cfg.p_birth + self.cfg.p_death {
            StepOutcome {
                kind: Some(MoveKind::Death),
                accepted: self.death(temperature),
            }
        } else if draw < self.cfg.p_birth + self.cfg.p_death + self.cfg.p_change {
            StepOutcome {
                kind: Some(MoveKind::Change),
                accepted: self.change(temperature),
            }
        } else {
            StepOutcome {
                kind: None,
                accepted: false,
            }
        }
    }

    fn birth(&mut self, temperature: f64) -> bool {
        let n = self.source_count();
        self.proposal.clear();
        self.proposal.extend_from_slice(&self.sources);
        for _ in 0..self.dims {
            self.proposal.push(self.rng.gen::<f64>());
        }
        let current = self.current_energy();
        let new = self.evaluate_proposal();
        // Local stability: on every plane the interaction-only birth ratio
        // is dominated by exp(-theta3), so the summed field is dominated by
        // exp(-L * theta3).
        debug_assert!(
            {
                let before: f64 = self
                    .stats
                    .iter()
                    .map(|s| interaction_energy(s, &self.params))
                    .sum();
                let after: f64 = self
                    .proposal_stats
                    .iter()
                    .map(|s| interaction_energy(s, &self.params))
                    .sum();
                (before - after).exp()
                    <= (-self.params.theta3 * self.active.len() as f64).exp() * (1.0 + 1e-12)
            },
            "local stability bound violated on birth"
        );
        let proposal_ratio =
            self.cfg.p_death * WINDOW_VOLUME / (self.cfg.p_birth * (n as f64 + 1.0));
        let ratio = (-(new - current) / temperature).exp() * proposal_ratio;
        if self.accept(ratio) {
            self.commit_proposal();
            true
        } else {
            false
        }
    }

    fn death(&mut self, temperature: f64) -> bool {
        let n = self.source_count();
        if n == 0 {
            return false;
        }
        // Min-source rule: deaths below the floor are rejected outright.
        if self.cfg.min_sources > 0 && n <= self.cfg.min_sources {
            return false;
        }
        let victim = self.rng.gen_range(0..n);
        self.proposal.clear();
        self.proposal
            .extend_from_slice(&self.sources[..victim * self.dims]);
        self.proposal
            .extend_from_slice(&self.sources[(victim + 1) * self.dims..]);
        let current = self.current_energy();
        let new = self.evaluate_proposal();
        let proposal_ratio = self.cfg.p_birth * n as f64 / (self.cfg.p_death * WINDOW_VOLUME);
        let ratio = (-(new - current) / temperature).exp() * proposal_ratio;
        if self.accept(ratio) {
            self.commit_proposal();
            true
        } else {
            false
        }
    }

    fn change(&mut self, temperature: f64) -> bool {
        let n = self.source_count();
        if n == 0 {
            return false;
        }
        let moved = self.rng.gen_range(0..n);
        // The proposal refines the active plane's coordinate pair only,
        // uniformly in the disk of the change radius.
        let (dx, dy) = self.disk_offset();
        let (da, db) = self.table.pair(self.plane);
        self.proposal.clear();
        self.proposal.extend_from_slice(&self.sources);
        let row = &mut self.proposal[moved * self.dims..(moved + 1) * self.dims];
        row[da] += dx;
        row[db] += dy;
        // Proposals leaving the window are rejected, not reflected.
        if !(0.0..=1.0).contains(&row[da]) || !(0.0..=1.0).contains(&row[db]) {
            return false;
        }
        let current = self.current_energy();
        let new = self.evaluate_proposal();
        // Uniform pick and uniform disk proposal cancel in the ratio.
        let ratio = (-(new - current) / temperature).exp();
        if self.accept(ratio) {
            self.commit_proposal();
            true
        } else {
            false
        }
    }

    /// Uniform draw in the disk of the change radius.
    fn disk_offset(&mut self) -> (f64, f64) {
        let (dx, dy, norm) = loop {
            let dx: f64 = self.rng.sample(StandardNormal);
            let dy: f64 = self.rng.sample(StandardNormal);
            let norm = (dx * dx + dy * dy).sqrt();
            if norm > 0.0 {
                break (dx, dy, norm);
            }
        };
        let u: f64 = self.rng.gen();
        let scale = self.cfg.change_radius * u.sqrt() / norm;
        (dx * scale, dy * scale)
    }

    /// One outer Gibbs iteration: resample the weights from the tempered
    /// prior, then `applications` times select a plane uniformly (tempering
    /// keeps the uniform prior uniform) and run the configured number of MH
    /// steps refining it.
    pub fn gibbs_sweep(&mut self, temperature: f64, applications: usize) {
        self.params =
            sample_theta_tempered(&self.prior, temperature, self.params.r, &mut self.rng);
        for _ in 0..applications {
            let pick = self.rng.gen_range(0..self.active.len());
            self.plane = self.active[pick];
            for _ in 0..self.cfg.mh_steps {
                self.mh_step(temperature);
            }
        }
    }

    /// Statistics of the current pattern on every plane (`None` on planes
    /// with a degenerate data hull).
    pub fn stats_all_planes(&self) -> Vec<Option<HugStatistics>> {
        let mut out = vec![None; self.table.plane_count()];
        for (&plane, &stats) in self.active.iter().zip(&self.stats) {
            out[plane.zero_based()] = Some(stats);
        }
        out
    }

    fn record(&self, iter: u64, temperature: f64) -> TraceRecord {
        TraceRecord {
            iter,
            temperature,
            theta: self.params.theta(),
            plane: self.plane.one_based(),
            sources: self.sources(),
            stats_per_plane: self.stats_all_planes(),
        }
    }
}

/// Runs the full annealing loop and returns the trace. Deterministic given
/// the seed: identical seeds yield bit-identical traces.
pub fn simulated_annealing(
    table: &PlaneTable,
    prior: ThetaPrior,
    interaction_radius: f64,
    cfg: SamplerConfig,
    schedule: AnnealingSchedule,
    seed: u64,
) -> Result<ChainTrace> {
    schedule.validate()?;
    let mut chain = Chain::new(table, prior, interaction_radius, cfg, seed)?;
    let applications = schedule
        .gibbs_per_iteration
        .unwrap_or_else(|| table.plane_count());
    let mut records = Vec::with_capacity(1 + (schedule.iterations / schedule.save_every) as usize);
    records.push(chain.record(0, schedule.initial_temperature));
    for (k, temperature) in (1..=schedule.iterations).zip(schedule.temperatures()) {
        chain.gibbs_sweep(temperature, applications);
        if k % schedule.save_every == 0 {
            records.push(chain.record(k, temperature));
        }
    }
    Ok(ChainTrace {
        header: TraceHeader {
            seed,
            dims: table.dims(),
            names: table.names().to_vec(),
            interaction_radius,
            prior,
            sampler: cfg,
            schedule,
        },
        records,
    })
}
