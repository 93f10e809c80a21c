//! Damped Newton solve of the stationary equations in log-density
//! coordinates.
//!
//! With `z = log ρ`, row `x` of the system is `dρ(x)/dt / ρ(x)`, which only
//! involves density ratios `e^{z_y − z_x}` across edges and stays finite for
//! masses far below the `f64` range. One row per connected component is
//! replaced by the mass constraint `log Σ_{x ∈ c} e^{z_x} = log m_c`.

use nalgebra::{DMatrix, DVector};

use crate::game::Game;
use crate::graph::StrategyGraph;

/// Largest profile space for which the dense Newton polish is attempted.
pub(crate) const MAX_DENSE_SIZE: usize = 2048;

const MAX_ITER: usize = 500;
const MAX_EXP: f64 = 700.0;
/// Largest change of any log-density in one Newton step.
const MAX_STEP: f64 = 4.0;

pub(crate) struct SteadyProblem<'a> {
    game: &'a Game,
    graph: &'a StrategyGraph,
    beta: f64,
    components: Vec<Vec<usize>>,
    log_mass: Vec<f64>,
}

impl<'a> SteadyProblem<'a> {
    /// `mass[c]` is the conserved mass of component `c` (as numbered by the
    /// graph).
    pub(crate) fn new(game: &'a Game, graph: &'a StrategyGraph, beta: f64, mass: &[f64]) -> Self {
        Self {
            game,
            graph,
            beta,
            components: graph.components(),
            log_mass: mass.iter().map(|m| m.ln()).collect(),
        }
    }

    fn pivots(&self, z: &[f64]) -> Vec<usize> {
        self.components
            .iter()
            .map(|c| {
                *c.iter()
                    .max_by(|&&a, &&b| z[a].total_cmp(&z[b]))
                    .expect("components are non-empty")
            })
            .collect()
    }

    fn residual(&self, z: &[f64], pivots: &[usize]) -> DVector<f64> {
        let n = self.graph.size();
        let mut f = DVector::zeros(n);
        for e in self.graph.edges() {
            let d = self.game.cost(e.player, e.x) - self.game.cost(e.player, e.y) + self.beta * (z[e.x] - z[e.y]);
            if d > 0.0 {
                f[e.x] -= d;
                f[e.y] += d * (z[e.x] - z[e.y]).min(MAX_EXP).exp();
            } else if d < 0.0 {
                f[e.x] -= d * (z[e.y] - z[e.x]).min(MAX_EXP).exp();
                f[e.y] += d;
            }
        }
        for (c, &p) in pivots.iter().enumerate() {
            f[p] = log_sum_exp(self.components[c].iter().map(|&x| z[x])) - self.log_mass[c];
        }
        f
    }

    fn jacobian(&self, z: &[f64], pivots: &[usize]) -> DMatrix<f64> {
        let n = self.graph.size();
        let beta = self.beta;
        let mut j = DMatrix::zeros(n, n);
        for e in self.graph.edges() {
            let (x, y) = (e.x, e.y);
            let d = self.game.cost(e.player, x) - self.game.cost(e.player, y) + beta * (z[x] - z[y]);
            let into_x = (z[y] - z[x]).min(MAX_EXP).exp();
            let into_y = (z[x] - z[y]).min(MAX_EXP).exp();
            // one-sided derivatives of the two edge terms; averaged on the kink
            let pos = [-beta, beta, into_y * (beta + d), -into_y * (beta + d)];
            let neg = [into_x * (d - beta), into_x * (beta - d), beta, -beta];
            let w = if d > 0.0 {
                pos
            } else if d < 0.0 {
                neg
            } else {
                [
                    0.5 * (pos[0] + neg[0]),
                    0.5 * (pos[1] + neg[1]),
                    0.5 * (pos[2] + neg[2]),
                    0.5 * (pos[3] + neg[3]),
                ]
            };
            j[(x, x)] += w[0];
            j[(x, y)] += w[1];
            j[(y, x)] += w[2];
            j[(y, y)] += w[3];
        }
        for (c, &p) in pivots.iter().enumerate() {
            j.row_mut(p).fill(0.0);
            let lse = log_sum_exp(self.components[c].iter().map(|&x| z[x]));
            for &x in &self.components[c] {
                j[(p, x)] = (z[x] - lse).exp();
            }
        }
        j
    }

    /// Pseudo-transient continuation from `z0`: each step solves
    /// `(D/τ − J) δ = F` where `D` is the identity off the pivot rows, so
    /// small `τ` follows the log-density flow and large `τ` is Newton's
    /// method. Only decreasing steps are accepted at first, which keeps
    /// Newton from cycling across the kinks of the upwind weights. If that
    /// stalls, a pass that tolerates moderate residual increases is run to
    /// get through the transient, followed by a monotone pass from its best
    /// iterate. Returns the iterate with the smallest residual, or `None` if
    /// no linear solve succeeded.
    pub(crate) fn solve(&self, z0: &[f64]) -> Option<Vec<f64>> {
        let direct = self.continuation(z0.to_vec(), true);
        if direct.as_ref().is_some_and(|(norm, _)| *norm < 1e-13) {
            return direct.map(|(_, z)| z);
        }
        let staged = self
            .continuation(z0.to_vec(), false)
            .and_then(|(_, z)| self.continuation(z, true));
        match (direct, staged) {
            (Some(a), Some(b)) => Some(if a.0 <= b.0 { a.1 } else { b.1 }),
            (a, b) => a.or(b).map(|(_, z)| z),
        }
    }

    fn continuation(&self, z0: Vec<f64>, monotone: bool) -> Option<(f64, Vec<f64>)> {
        let n = self.graph.size();
        let mut z = z0;
        let mut pivots = self.pivots(&z);
        let mut f = self.residual(&z, &pivots);
        let mut norm = f.norm();
        if !norm.is_finite() {
            return None;
        }
        let mut best = (norm, z.clone());
        let mut tau = 1.0;
        let mut solved_once = f.amax() < 1e-15;
        let mut since_best = 0;
        for _ in 0..MAX_ITER {
            if f.amax() < 1e-15 || tau < 1e-12 || since_best > 10 {
                break;
            }
            if std::env::var("DBG").is_ok() {
                eprintln!("mono {monotone} tau {tau:e} norm {norm:e}");
            }
            let mut a = -self.jacobian(&z, &pivots);
            for x in 0..n {
                if !pivots.contains(&x) {
                    a[(x, x)] += 1.0 / tau;
                }
            }
            let mut delta = match a.lu().solve(&f) {
                Some(d) if d.iter().all(|v| v.is_finite()) => d,
                _ => {
                    tau *= 0.25;
                    continue;
                }
            };
            solved_once = true;
            let step = delta.amax();
            if step > MAX_STEP {
                delta *= MAX_STEP / step;
            }
            let (limit, alpha_min) = if monotone { (norm, 1e-10) } else { (2.0 * norm, 1.0) };
            let mut alpha = 1.0;
            let mut accepted = None;
            while alpha >= alpha_min {
                let trial: Vec<f64> = z.iter().zip(delta.iter()).map(|(a, b)| a + alpha * b).collect();
                let trial_pivots = self.pivots(&trial);
                let trial_f = self.residual(&trial, &trial_pivots);
                let trial_norm = trial_f.norm();
                if trial_norm.is_finite() && trial_norm < limit {
                    accepted = Some((trial, trial_pivots, trial_f, trial_norm));
                    break;
                }
                alpha *= 0.5;
            }
            let Some((trial, trial_pivots, trial_f, trial_norm)) = accepted else {
                tau *= 0.25;
                continue;
            };
            let ratio = norm / trial_norm.max(f64::MIN_POSITIVE);
            let growth = if monotone {
                ratio.clamp(2.0, 1e3)
            } else {
                ratio.min(1e3)
            };
            tau = (tau * growth).min(1e300);
            if step > MAX_STEP {
                tau = tau.min(1e12);
            }
            z = trial;
            pivots = trial_pivots;
            f = trial_f;
            norm = trial_norm;
            if norm < best.0 {
                best = (norm, z.clone());
                since_best = 0;
            } else {
                since_best += 1;
            }
            let scale = z.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            if alpha * step <= 1e-14 * scale {
                break;
            }
        }
        solved_once.then_some(best)
    }
}

pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}
