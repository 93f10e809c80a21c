//! Annealing `β → 0` through stationary measures and ranking the pure Nash
//! equilibria by their limit mass.

use log::{debug, warn};
use serde::Serialize;

use crate::density::{max_abs_diff, Density};
use crate::error::{Error, Result};
use crate::game::{check_compatible, enumerate_pure_ne, Game};
use crate::graph::StrategyGraph;
use crate::solver::{stationary_from, SolverConfig, StationaryMethod};

/// Profiles below this limit mass are left out of the ranking when the game
/// has no pure equilibrium.
pub const SUPPORT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct AnnealingSchedule {
    pub beta_start: f64,
    /// Ratio between consecutive noise levels.
    pub decay: f64,
    pub beta_min: f64,
    /// Stop once consecutive stationary measures differ by less than this in
    /// `‖·‖_∞`.
    pub tol_lim: f64,
    /// Warm start each level from the previous stationary measure. When
    /// false every level starts from the uniform density.
    pub warm_start: bool,
    /// Integration step budget for warm-started levels.
    pub warm_steps: usize,
}

impl Default for AnnealingSchedule {
    fn default() -> Self {
        Self {
            beta_start: 1.0,
            decay: 0.5,
            beta_min: 1e-4,
            tol_lim: 1e-4,
            warm_start: true,
            warm_steps: 2_000,
        }
    }
}

impl AnnealingSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_min > 0.0 && self.beta_start > self.beta_min && self.beta_start.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "schedule needs beta_start > beta_min > 0, got {} and {}",
                self.beta_start, self.beta_min
            )));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "decay must lie in (0, 1), got {}",
                self.decay
            )));
        }
        if !(self.tol_lim > 0.0 && self.tol_lim.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "tol_lim must be positive, got {}",
                self.tol_lim
            )));
        }
        if self.warm_steps == 0 {
            return Err(Error::InvalidParameter("warm_steps must be positive".into()));
        }
        Ok(())
    }

    /// `beta_start · decay^k` while above `beta_min`, then `beta_min`.
    pub fn betas(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut beta = self.beta_start;
        while beta > self.beta_min {
            out.push(beta);
            beta *= self.decay;
        }
        out.push(self.beta_min);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub beta: f64,
    pub density: Density,
    pub log_density: Vec<f64>,
    pub residual: f64,
    pub method: StationaryMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NashMass {
    pub profile: usize,
    pub mass: f64,
}

/// Why the schedule ended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum StopReason {
    /// The last two measures differ by less than `tol_lim`.
    Converged,
    BetaMin,
    /// The stationary measure at `beta` is not determined in double
    /// precision; the limit is the measure of the previous level.
    Unresolved {
        beta: f64,
        spread: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedEquilibria {
    /// Last stationary measure of the schedule.
    pub limit: Density,
    pub limit_beta: f64,
    /// Pure equilibria with their limit masses, in profile order.
    pub nash: Vec<NashMass>,
    /// Equivalence classes by descending limit mass; members of a class
    /// differ by at most `tol_lim`.
    pub order: Vec<Vec<usize>>,
    /// Limit mass outside the equilibrium set.
    pub residual_mass: f64,
    pub history: Vec<HistoryEntry>,
    pub stop: StopReason,
    /// Linear extrapolation of the last two measures to `β = 0`.
    pub extrapolated: Option<Vec<f64>>,
}

/// Runs the annealing schedule from the uniform density.
pub fn select_equilibria(
    game: &Game,
    graph: &StrategyGraph,
    schedule: &AnnealingSchedule,
    config: &SolverConfig,
) -> Result<RankedEquilibria> {
    check_compatible(game, graph)?;
    schedule.validate()?;
    if !graph.is_connected() {
        warn!(
            "strategy graph has {} components; each keeps its initial mass",
            graph.num_components()
        );
    }
    let nash = enumerate_pure_ne(game, graph)?;
    let n = graph.size();
    let uniform = Density::uniform(n);
    let mut history: Vec<HistoryEntry> = Vec::new();
    let mut stop = StopReason::BetaMin;

    for beta in schedule.betas() {
        let mut cfg = config.clone();
        cfg.beta = beta;
        let solved = match history.last().filter(|_| schedule.warm_start) {
            Some(prev) => {
                cfg.max_steps = cfg.max_steps.min(schedule.warm_steps);
                let ratio = prev.beta / beta;
                let scaled: Vec<f64> = prev.log_density.iter().map(|z| z * ratio).collect();
                let warm = [scaled, prev.log_density.clone()];
                let start = interior(&prev.log_density);
                stationary_from(game, graph, beta, &start, Some(&warm), &cfg)
            }
            None => stationary_from(game, graph, beta, &uniform, None, &cfg),
        };
        let measure = match solved {
            Err(Error::Unresolved { beta, spread }) if !history.is_empty() => {
                warn!("stationary measure unresolved at beta {beta:e} (spread {spread:e}); stopping");
                stop = StopReason::Unresolved { beta, spread };
                break;
            }
            other => other?,
        };
        debug!(
            "beta {beta:e}: residual {:e} via {:?}",
            measure.residual, measure.method
        );
        let entry = HistoryEntry {
            beta,
            density: measure.density,
            log_density: measure.log_density,
            residual: measure.residual,
            method: measure.method,
        };
        let delta = history.last().map(|prev| entry.density.max_abs_diff(&prev.density));
        history.push(entry);
        if delta.is_some_and(|d| d < schedule.tol_lim) {
            stop = StopReason::Converged;
            break;
        }
    }

    let last = history.last().expect("schedule has at least one level");
    let limit = last.density.clone();
    let limit_beta = last.beta;
    let extrapolated = (history.len() >= 2).then(|| {
        let prev = &history[history.len() - 2];
        let d = last.beta / prev.beta;
        last.density
            .iter()
            .zip(prev.density.iter())
            .map(|(a, b)| (a - d * b) / (1.0 - d))
            .collect()
    });

    let nash_masses: Vec<NashMass> = nash
        .profiles
        .iter()
        .map(|&x| NashMass {
            profile: x,
            mass: limit[x],
        })
        .collect();
    let ranked: Vec<(usize, f64)> = if nash.is_empty() {
        (0..n)
            .filter(|&x| limit[x] > SUPPORT_FLOOR)
            .map(|x| (x, limit[x]))
            .collect()
    } else {
        nash_masses.iter().map(|m| (m.profile, m.mass)).collect()
    };
    let order = equivalence_classes(ranked, schedule.tol_lim);
    let residual_mass = (0..n).filter(|&x| !nash.contains(x)).map(|x| limit[x]).sum();

    Ok(RankedEquilibria {
        limit,
        limit_beta,
        nash: nash_masses,
        order,
        residual_mass,
        history,
        stop,
        extrapolated,
    })
}

fn interior(log_density: &[f64]) -> Density {
    let floored: Vec<f64> = log_density.iter().map(|z| z.exp().max(f64::MIN_POSITIVE)).collect();
    let mass: f64 = floored.iter().sum();
    Density::from_vec_unchecked(floored.into_iter().map(|v| v / mass).collect())
}

/// Sorts by descending mass and chains entries within `tol` of their
/// predecessor into one class.
fn equivalence_classes(mut ranked: Vec<(usize, f64)>, tol: f64) -> Vec<Vec<usize>> {
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut classes: Vec<Vec<usize>> = Vec::new();
    let mut prev = f64::NAN;
    for (x, mass) in ranked {
        match classes.last_mut() {
            Some(class) if prev - mass <= tol => class.push(x),
            _ => classes.push(vec![x]),
        }
        prev = mass;
    }
    classes
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitEntry {
    pub beta: f64,
    /// Shannon entropy `−Σ ρ log ρ`.
    pub support_entropy: f64,
    pub nash_mass: f64,
    /// `‖ρ_k − ρ_{k−1}‖_∞`; absent for the first level.
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitReport {
    pub entries: Vec<LimitEntry>,
    /// Set when some consecutive difference grows instead of shrinking.
    pub non_cauchy: bool,
}

/// Per-level summary of an annealing history. `nash` lists the equilibrium
/// profiles whose mass is tracked.
pub fn limit_diagnostics(history: &[HistoryEntry], nash: &[usize]) -> LimitReport {
    let entries: Vec<LimitEntry> = history
        .iter()
        .enumerate()
        .map(|(k, h)| LimitEntry {
            beta: h.beta,
            support_entropy: -h.density.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>(),
            nash_mass: nash.iter().map(|&x| h.density[x]).sum(),
            delta: (k > 0).then(|| max_abs_diff(h.density.as_slice(), history[k - 1].density.as_slice())),
        })
        .collect();
    let deltas: Vec<f64> = entries.iter().filter_map(|e| e.delta).collect();
    let non_cauchy = deltas.windows(2).any(|w| w[1] > w[0] + 1e-15);
    LimitReport { entries, non_cauchy }
}
