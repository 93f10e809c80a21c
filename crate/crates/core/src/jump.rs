//! Mean-field particle simulation of the best-reply jump process.
//!
//! A particle at `x` jumps to `y ∈ N_i(x)` at rate
//! `[ū_i(x) − ū_i(y)]_+` with noisy cost `ū_i(z) = u_i(z) + β log ρ̂(z)`,
//! where `ρ̂` is the smoothed empirical law of the ensemble. Time is
//! discretized with step `h`; within a step `ρ̂` is frozen at its pre-step
//! value and every particle moves independently.
//!
//! Particles are exchangeable, so the ensemble is stored as occupation
//! counts. The independent moves of the `n_x` particles at `x` are drawn
//! together as one multinomial, which has the same law.

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::density::Density;
use crate::error::{Error, Result};
use crate::fpe::check_beta;
use crate::game::{check_compatible, Game};
use crate::graph::StrategyGraph;
use crate::solver::TrajectorySample;

/// Largest total jump probability allowed for any state in one step.
pub const MAX_EXIT_PROBABILITY: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub particles: u64,
    /// Time step `h`.
    pub step: f64,
    /// Additive smoothing `α` of the empirical density.
    pub smoothing: f64,
    pub horizon: f64,
    pub seed: u64,
    /// Record at multiples of this spacing; `None` records every step.
    pub sample_interval: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            particles: 100_000,
            step: 1e-3,
            smoothing: 1.0,
            horizon: 20.0,
            seed: 0,
            sample_interval: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::InvalidParameter("particle count must be positive".into()));
        }
        for (name, v) in [("step", self.step), ("smoothing", self.smoothing)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "horizon must be >= 0, got {}",
                self.horizon
            )));
        }
        if let Some(s) = self.sample_interval {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "sample interval must be positive, got {s}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Ensemble {
    counts: Vec<u64>,
    particles: u64,
    smoothing: f64,
    time: f64,
    rng: ChaCha8Rng,
}

impl Ensemble {
    /// Ensemble with the given occupation counts at time 0.
    pub fn from_counts(counts: Vec<u64>, smoothing: f64, seed: u64) -> Result<Self> {
        let particles: u64 = counts.iter().sum();
        if counts.is_empty() || particles == 0 {
            return Err(Error::InvalidParameter("ensemble needs at least one particle".into()));
        }
        if !(smoothing > 0.0 && smoothing.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "smoothing must be positive, got {smoothing}"
            )));
        }
        Ok(Self {
            counts,
            particles,
            smoothing,
            time: 0.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// One particle per entry of `profiles`.
    pub fn from_profiles(profiles: &[usize], size: usize, smoothing: f64, seed: u64) -> Result<Self> {
        let mut counts = vec![0u64; size];
        for &x in profiles {
            if x >= size {
                return Err(Error::IndexOutOfRange { index: x, size });
            }
            counts[x] += 1;
        }
        Self::from_counts(counts, smoothing, seed)
    }

    /// `particles` independent draws from `rho0`.
    pub fn sample(rho0: &Density, particles: u64, smoothing: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts = vec![0u64; rho0.len()];
        let mut remaining = particles;
        let mut mass_left = 1.0;
        for (x, &p) in rho0.iter().enumerate() {
            if remaining == 0 {
                break;
            }
            let k = draw_binomial(&mut rng, remaining, p / mass_left);
            counts[x] = k;
            remaining -= k;
            mass_left -= p;
        }
        // rounding in mass_left can leave a few particles undrawn
        if remaining > 0 {
            let last = rho0.iter().rposition(|&p| p > 0.0).unwrap_or(0);
            counts[last] += remaining;
        }
        let mut e = Self::from_counts(counts, smoothing, seed)?;
        e.rng = rng;
        Ok(e)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn particles(&self) -> u64 {
        self.particles
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// `ρ̂(x) = (count(x) + α) / (M + α|S|)`.
    pub fn empirical(&self) -> Density {
        let denom = self.particles as f64 + self.smoothing * self.counts.len() as f64;
        Density::from_vec_unchecked(
            self.counts
                .iter()
                .map(|&c| (c as f64 + self.smoothing) / denom)
                .collect(),
        )
    }
}

fn draw_binomial(rng: &mut ChaCha8Rng, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("probability in (0, 1)").sample(rng)
}

/// Jump rates out of every state under the frozen empirical law, as
/// `(target, rate)` lists.
fn rates(game: &Game, graph: &StrategyGraph, log_rho: &[f64], beta: f64) -> Vec<Vec<(usize, f64)>> {
    (0..graph.size())
        .map(|x| {
            let mut out = Vec::new();
            for i in 0..graph.num_players() {
                for &y in graph.neighbors_of_player(x, i) {
                    let d = game.cost(i, x) - game.cost(i, y) + beta * (log_rho[x] - log_rho[y]);
                    if d > 0.0 {
                        out.push((y, d));
                    }
                }
            }
            out
        })
        .collect()
}

/// Advances the ensemble by one step of size `h`, halving `h` (with a
/// warning) until no state's total jump probability exceeds
/// [`MAX_EXIT_PROBABILITY`]. The step actually taken shows in the change of
/// [`Ensemble::time`].
pub fn step_ensemble(
    game: &Game,
    graph: &StrategyGraph,
    mut ensemble: Ensemble,
    beta: f64,
    h: f64,
) -> Result<Ensemble> {
    check_compatible(game, graph)?;
    check_beta(beta)?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter(format!("step must be positive, got {h}")));
    }
    if ensemble.counts.len() != graph.size() {
        return Err(Error::InvalidDensity(format!(
            "ensemble has {} states, graph has {} profiles",
            ensemble.counts.len(),
            graph.size()
        )));
    }
    let log_rho: Vec<f64> = ensemble.empirical().iter().map(|p| p.ln()).collect();
    let rates = rates(game, graph, &log_rho, beta);
    let max_exit = rates
        .iter()
        .map(|r| r.iter().map(|(_, q)| q).sum::<f64>())
        .fold(0.0, f64::max);
    let mut h_eff = h;
    while max_exit * h_eff > MAX_EXIT_PROBABILITY {
        h_eff *= 0.5;
    }
    if h_eff < h {
        warn!(
            "jump step {h:e} exceeds exit probability {MAX_EXIT_PROBABILITY} at t = {}; using {h_eff:e}",
            ensemble.time
        );
    }

    let mut next = ensemble.counts.clone();
    for (x, out) in rates.iter().enumerate() {
        let mut remaining = ensemble.counts[x];
        if remaining == 0 || out.is_empty() {
            continue;
        }
        let mut prob_left = 1.0;
        for &(y, q) in out {
            let p = q * h_eff;
            let k = draw_binomial(&mut ensemble.rng, remaining, p / prob_left);
            next[x] -= k;
            next[y] += k;
            remaining -= k;
            prob_left -= p;
            if remaining == 0 {
                break;
            }
        }
    }
    ensemble.counts = next;
    ensemble.time += h_eff;
    Ok(ensemble)
}

/// Empirical densities of a simulated ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrajectory {
    pub samples: Vec<TrajectorySample>,
    pub steps: usize,
}

impl SimTrajectory {
    /// Sample at time `t`, if recorded.
    pub fn at(&self, t: f64) -> Option<&Density> {
        self.samples
            .iter()
            .find(|s| (s.t - t).abs() <= 1e-9 * t.max(1.0))
            .map(|s| &s.density)
    }
}

/// Simulates `config.particles` particles drawn from `rho0` up to
/// `config.horizon`. Deterministic given `config.seed`.
pub fn simulate(
    game: &Game,
    graph: &StrategyGraph,
    rho0: &Density,
    config: &SimConfig,
    beta: f64,
) -> Result<SimTrajectory> {
    check_compatible(game, graph)?;
    check_beta(beta)?;
    config.validate()?;
    if rho0.len() != graph.size() {
        return Err(Error::InvalidDensity(format!(
            "initial density has {} entries, graph has {} profiles",
            rho0.len(),
            graph.size()
        )));
    }
    let mut ensemble = Ensemble::sample(rho0, config.particles, config.smoothing, config.seed)?;
    let mut samples = vec![TrajectorySample {
        t: 0.0,
        density: ensemble.empirical(),
    }];
    let mut steps = 0;
    let mut next_sample = 1usize;
    while ensemble.time < config.horizon {
        let target = match config.sample_interval {
            Some(s) => config.horizon.min(next_sample as f64 * s),
            None => config.horizon,
        };
        let h = config.step.min(target - ensemble.time);
        ensemble = step_ensemble(game, graph, ensemble, beta, h)?;
        steps += 1;
        let hit = target - ensemble.time <= 1e-9 * target.max(1.0);
        if hit {
            ensemble.time = target;
        }
        if hit || config.sample_interval.is_none() {
            next_sample += usize::from(hit);
            samples.push(TrajectorySample {
                t: ensemble.time,
                density: ensemble.empirical(),
            });
        }
    }
    Ok(SimTrajectory { samples, steps })
}
