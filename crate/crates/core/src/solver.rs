//! Time integration of the Fokker–Planck flow and stationary measures.
//!
//! [`integrate`] uses classical fourth-order Runge–Kutta with a step-doubling
//! local error estimate. A step is halved when it would push a component
//! below the positivity floor or break mass conservation; mass drift within
//! tolerance is removed by renormalizing after every accepted step.
//!
//! [`stationary_measure`] integrates until `‖dρ/dt‖_∞ < tol_stat` and then
//! polishes the result with a Newton solve in log-density coordinates. At
//! small `β` the flow is stiff (rates scale like `β·e^{Δu/β}` near the
//! boundary of the simplex), so the Newton stage is what reaches
//! stationarity there.

use serde::Serialize;

use crate::density::{max_abs, Density, MASS_TOL};
use crate::error::{Error, Result};
use crate::fpe::{check_beta, fpe_rhs_log, RhsWorkspace};
use crate::game::{check_compatible, Game};
use crate::graph::StrategyGraph;
use crate::steady::{SteadyProblem, MAX_DENSE_SIZE};

/// Largest disagreement tolerated between stationary measures reached from
/// different starting points.
pub const RESOLUTION_TOL: f64 = 1e-6;

const HOMOTOPY_LEVELS: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Noise level `β ≥ 0`.
    pub beta: f64,
    pub dt_init: f64,
    pub dt_max: f64,
    /// Step underflow threshold.
    pub dt_min: f64,
    /// Stationarity tolerance on `‖dρ/dt‖_∞`.
    pub tol_stat: f64,
    pub t_max: f64,
    /// Positivity floor used when `β > 0`.
    pub eps_pos: f64,
    /// Local error tolerances of the step-doubling estimate.
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Record samples at multiples of this spacing; `None` records every
    /// accepted step.
    pub sample_interval: Option<f64>,
    pub max_steps: usize,
}

impl SolverConfig {
    pub fn new(beta: f64) -> Self {
        Self {
            beta,
            dt_init: 1e-2,
            dt_max: 1.0,
            dt_min: 1e-14,
            tol_stat: 1e-10,
            t_max: 1e4,
            eps_pos: 1e-13,
            abs_tol: 1e-14,
            rel_tol: 1e-10,
            sample_interval: None,
            max_steps: 100_000,
        }
    }

    pub fn with_sample_interval(mut self, interval: f64) -> Self {
        self.sample_interval = Some(interval);
        self
    }

    pub fn with_t_max(mut self, t_max: f64) -> Self {
        self.t_max = t_max;
        self
    }

    pub fn with_tol_stat(mut self, tol: f64) -> Self {
        self.tol_stat = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_beta(self.beta)?;
        let positive = [
            ("dt_init", self.dt_init),
            ("dt_max", self.dt_max),
            ("dt_min", self.dt_min),
            ("tol_stat", self.tol_stat),
            ("t_max", self.t_max),
            ("eps_pos", self.eps_pos),
            ("abs_tol", self.abs_tol),
            ("rel_tol", self.rel_tol),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {value}")));
            }
        }
        if let Some(s) = self.sample_interval {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "sample interval must be positive, got {s}"
                )));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidParameter("max_steps must be positive".into()));
        }
        Ok(())
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::new(0.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Stationary,
    TMax,
    MaxSteps,
    StepUnderflow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub density: Density,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Samples in strictly increasing time; the last one is the terminal
    /// state.
    pub samples: Vec<TrajectorySample>,
    pub termination: Termination,
    /// `‖dρ/dt‖_∞` at the terminal state.
    pub residual: f64,
    pub steps: usize,
}

impl Trajectory {
    pub fn terminal(&self) -> &Density {
        &self.samples.last().expect("trajectory has at least one sample").density
    }

    pub fn final_time(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }
}

/// Integrates `dρ/dt` from `rho0` using `config.beta`.
///
/// Returns [`Error::StepUnderflow`] carrying the partial trajectory when the
/// step size falls below `config.dt_min`.
pub fn integrate(game: &Game, graph: &StrategyGraph, rho0: &Density, config: &SolverConfig) -> Result<Trajectory> {
    Integrator::new(game, graph, rho0, config, true)?.run()
}

struct Integrator<'a> {
    game: &'a Game,
    graph: &'a StrategyGraph,
    config: &'a SolverConfig,
    record: bool,
    ws: RhsWorkspace,
    y: Vec<f64>,
    k1: Vec<f64>,
    stage: Vec<f64>,
    k: [Vec<f64>; 3],
    full: Vec<f64>,
    half: Vec<f64>,
    half_k1: Vec<f64>,
    out: Vec<f64>,
}

impl<'a> Integrator<'a> {
    fn new(
        game: &'a Game,
        graph: &'a StrategyGraph,
        rho0: &Density,
        config: &'a SolverConfig,
        record: bool,
    ) -> Result<Self> {
        check_compatible(game, graph)?;
        config.validate()?;
        if rho0.len() != graph.size() {
            return Err(Error::InvalidDensity(format!(
                "initial density has {} entries, graph has {} profiles",
                rho0.len(),
                graph.size()
            )));
        }
        if config.beta > 0.0 && !rho0.is_interior() {
            return Err(Error::InvalidDensity(
                "initial density must be strictly positive when beta > 0".into(),
            ));
        }
        let n = graph.size();
        Ok(Self {
            game,
            graph,
            config,
            record,
            ws: RhsWorkspace::new(n),
            y: rho0.as_slice().to_vec(),
            k1: vec![0.0; n],
            stage: vec![0.0; n],
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            full: vec![0.0; n],
            half: vec![0.0; n],
            half_k1: vec![0.0; n],
            out: vec![0.0; n],
        })
    }

    fn rhs(&mut self, y: &[f64], out: &mut [f64]) -> Result<()> {
        self.ws.eval(self.game, self.graph, y, self.config.beta, out)?;
        if out.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidParameter("non-finite right-hand side".into()))
        }
    }

    /// One RK4 step of size `h` from `y0` with precomputed slope `k1`,
    /// written to `self.out`.
    fn rk4(&mut self, y0: &[f64], k1: &[f64], h: f64) -> Result<()> {
        let mut stage = std::mem::take(&mut self.stage);
        let mut k = std::mem::take(&mut self.k);
        let result = (|| {
            for ((s, &y), &d) in stage.iter_mut().zip(y0).zip(k1) {
                *s = y + 0.5 * h * d;
            }
            self.rhs(&stage, &mut k[0])?;
            for ((s, &y), &d) in stage.iter_mut().zip(y0).zip(&k[0]) {
                *s = y + 0.5 * h * d;
            }
            self.rhs(&stage, &mut k[1])?;
            for ((s, &y), &d) in stage.iter_mut().zip(y0).zip(&k[1]) {
                *s = y + h * d;
            }
            self.rhs(&stage, &mut k[2])?;
            for (i, o) in self.out.iter_mut().enumerate() {
                *o = y0[i] + h / 6.0 * (k1[i] + 2.0 * k[0][i] + 2.0 * k[1][i] + k[2][i]);
            }
            Ok(())
        })();
        self.stage = stage;
        self.k = k;
        result
    }

    /// Full step and two half steps; on success `self.half` holds the
    /// accepted candidate and the return value is the scaled error ratio.
    fn attempt(&mut self, h: f64) -> Result<f64> {
        let y = std::mem::take(&mut self.y);
        let k1 = std::mem::take(&mut self.k1);
        let result = (|| {
            self.rk4(&y, &k1, h)?;
            std::mem::swap(&mut self.full, &mut self.out);
            self.rk4(&y, &k1, 0.5 * h)?;
            std::mem::swap(&mut self.half, &mut self.out);
            let mid = std::mem::take(&mut self.half);
            let mut hk = std::mem::take(&mut self.half_k1);
            let r = self.rhs(&mid, &mut hk).and_then(|_| self.rk4(&mid, &hk, 0.5 * h));
            self.half = mid;
            self.half_k1 = hk;
            r?;
            std::mem::swap(&mut self.half, &mut self.out);
            let ratio = self
                .half
                .iter()
                .zip(&self.full)
                .map(|(a, b)| (a - b).abs() / 15.0 / (self.config.abs_tol + self.config.rel_tol * a.abs()))
                .fold(0.0, f64::max);
            Ok(ratio)
        })();
        self.y = y;
        self.k1 = k1;
        result
    }

    fn admissible(&self) -> bool {
        let beta = self.config.beta;
        let floor = self.config.eps_pos;
        let ok_sign = self.half.iter().zip(&self.y).all(|(&new, &old)| {
            if beta > 0.0 {
                new >= floor.min(0.5 * old)
            } else {
                new >= 0.0
            }
        });
        let mass: f64 = self.half.iter().sum();
        ok_sign && (mass - 1.0).abs() <= MASS_TOL
    }

    fn run(mut self) -> Result<Trajectory> {
        let cfg = self.config;
        let mut t = 0.0;
        let mut steps = 0usize;
        let mut samples = vec![TrajectorySample {
            t,
            density: Density::from_vec_unchecked(self.y.clone()),
        }];
        let y0 = self.y.clone();
        let mut k1 = std::mem::take(&mut self.k1);
        self.rhs(&y0, &mut k1)?;
        self.k1 = k1;
        let mut residual = max_abs(&self.k1);
        let mut next_sample = 1usize;
        let mut dt = cfg.dt_init.min(cfg.dt_max);

        let termination = loop {
            if residual < cfg.tol_stat {
                break Termination::Stationary;
            }
            if t >= cfg.t_max {
                break Termination::TMax;
            }
            if steps >= cfg.max_steps {
                break Termination::MaxSteps;
            }
            let mut target = cfg.t_max;
            if let Some(s) = cfg.sample_interval {
                target = target.min(next_sample as f64 * s);
            }
            let mut h = dt.min(cfg.dt_max);
            let truncated = t + h >= target;
            if truncated {
                h = target - t;
            }

            let ratio = match self.attempt(h) {
                Ok(ratio) if ratio.is_finite() && self.admissible() => ratio,
                Ok(ratio) if ratio.is_finite() && ratio > 1.0 => ratio,
                _ => f64::INFINITY,
            };
            if ratio > 1.0 {
                dt = if ratio.is_finite() {
                    h * (0.9 * ratio.powf(-0.2)).clamp(0.1, 0.5)
                } else {
                    0.5 * h
                };
                if dt < cfg.dt_min {
                    let partial = self.finish(samples, t, Termination::StepUnderflow, residual, steps);
                    return Err(Error::StepUnderflow {
                        t,
                        dt_min: cfg.dt_min,
                        partial: Box::new(partial),
                    });
                }
                continue;
            }

            let mass: f64 = self.half.iter().sum();
            self.half.iter_mut().for_each(|v| *v /= mass);
            std::mem::swap(&mut self.y, &mut self.half);
            t = if truncated { target } else { t + h };
            steps += 1;
            let y = std::mem::take(&mut self.y);
            let mut k1 = std::mem::take(&mut self.k1);
            let r = self.rhs(&y, &mut k1);
            self.y = y;
            self.k1 = k1;
            r?;
            residual = max_abs(&self.k1);

            let growth = (0.9 * ratio.max(1e-10).powf(-0.2)).clamp(0.2, 4.0);
            dt = if truncated { dt.max(h * growth) } else { h * growth };

            let on_grid = match cfg.sample_interval {
                Some(s) => {
                    let hit = truncated && (t - next_sample as f64 * s).abs() <= f64::EPSILON * t.max(1.0) * 4.0;
                    if hit {
                        next_sample += 1;
                    }
                    hit
                }
                None => true,
            };
            if self.record && on_grid {
                samples.push(TrajectorySample {
                    t,
                    density: Density::from_vec_unchecked(self.y.clone()),
                });
            }
        };
        Ok(self.finish(samples, t, termination, residual, steps))
    }

    fn finish(
        &self,
        mut samples: Vec<TrajectorySample>,
        t: f64,
        termination: Termination,
        residual: f64,
        steps: usize,
    ) -> Trajectory {
        if samples.last().map_or(true, |s| s.t < t) {
            samples.push(TrajectorySample {
                t,
                density: Density::from_vec_unchecked(self.y.clone()),
            });
        } else if !self.record {
            samples.last_mut().unwrap().density = Density::from_vec_unchecked(self.y.clone());
        }
        if !self.record && samples.len() > 1 {
            samples.drain(..samples.len() - 1);
        }
        Trajectory {
            samples,
            termination,
            residual,
            steps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StationaryMethod {
    Integration,
    Newton,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryMeasure {
    pub beta: f64,
    /// May contain exact zeros where `e^{log ρ}` underflows.
    pub density: Density,
    pub log_density: Vec<f64>,
    /// `‖dρ/dt‖_∞` at the returned measure.
    pub residual: f64,
    pub method: StationaryMethod,
    /// Time reached by the integration stage.
    pub integration_time: f64,
}

/// Stationary measure of the flow at `beta > 0` reached from `rho0`.
///
/// `beta` overrides `config.beta`. Fails with [`Error::NonConvergence`] when
/// neither integration nor the Newton polish reaches `config.tol_stat`, and
/// with [`Error::Unresolved`] when Newton solves started from `rho0` and from
/// the integrated state both pass the residual test but disagree by more
/// than [`RESOLUTION_TOL`].
pub fn stationary_measure(
    game: &Game,
    graph: &StrategyGraph,
    beta: f64,
    rho0: &Density,
    config: &SolverConfig,
) -> Result<StationaryMeasure> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "stationary measure needs beta > 0, got {beta}"
        )));
    }
    if !rho0.is_interior() {
        return Err(Error::InvalidDensity(
            "initial density must be strictly positive when beta > 0".into(),
        ));
    }
    stationary_from(game, graph, beta, rho0, None, config)
}

/// Shared implementation; `warm_logs` are extra Newton starting points in
/// log coordinates (used by the annealing schedule).
pub(crate) fn stationary_from(
    game: &Game,
    graph: &StrategyGraph,
    beta: f64,
    rho0: &Density,
    warm_logs: Option<&[Vec<f64>]>,
    config: &SolverConfig,
) -> Result<StationaryMeasure> {
    let mut cfg = config.clone();
    cfg.beta = beta;
    cfg.sample_interval = None;

    let traj = match Integrator::new(game, graph, rho0, &cfg, false)?.run() {
        Ok(t) => t,
        Err(Error::StepUnderflow { partial, .. }) => *partial,
        Err(e) => return Err(e),
    };
    let terminal = traj.terminal().clone();
    let integrated = (traj.termination == Termination::Stationary).then(|| {
        let logs: Vec<f64> = terminal.iter().map(|r| r.ln()).collect();
        StationaryMeasure {
            beta,
            density: terminal.clone(),
            log_density: logs,
            residual: traj.residual,
            method: StationaryMethod::Integration,
            integration_time: traj.final_time(),
        }
    });
    let mut best_residual = traj.residual;

    if graph.size() <= MAX_DENSE_SIZE {
        let mass: Vec<f64> = graph
            .components()
            .iter()
            .map(|c| c.iter().map(|&x| rho0[x]).sum())
            .collect();
        let problem = SteadyProblem::new(game, graph, beta, &mass);
        let mut starts: Vec<Vec<f64>> = match warm_logs {
            Some(w) => w.to_vec(),
            None => vec![rho0.iter().map(|r| r.ln()).collect()],
        };
        starts.push(terminal.iter().map(|r| r.ln()).collect());
        let mut solutions: Vec<(f64, Vec<f64>)> = Vec::new();
        for start in starts {
            let Some(z) = problem.solve(&start) else { continue };
            if z.iter().any(|v| !v.is_finite()) {
                continue;
            }
            let residual = max_abs(&fpe_rhs_log(game, graph, &z, beta));
            best_residual = best_residual.min(residual);
            if residual < cfg.tol_stat {
                solutions.push((residual, z));
            }
        }
        if solutions.is_empty() {
            if let Some((residual, z)) = homotopy(game, graph, beta, &mass, cfg.tol_stat) {
                best_residual = best_residual.min(residual);
                solutions.push((residual, z));
            }
        }
        if let Some((residual, z)) = solutions.iter().min_by(|a, b| a.0.total_cmp(&b.0)) {
            let density: Vec<f64> = z.iter().map(|v| v.exp()).collect();
            // distinct starts landing on distinct measures that all pass the
            // residual test: the measure is not determined at this precision
            let spread = solutions
                .iter()
                .map(|(_, other)| {
                    other
                        .iter()
                        .zip(&density)
                        .map(|(o, d)| (o.exp() - d).abs())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            if spread > RESOLUTION_TOL {
                return Err(Error::Unresolved { beta, spread });
            }
            return Ok(StationaryMeasure {
                beta,
                density: Density::from_vec_unchecked(density),
                log_density: z.clone(),
                residual: *residual,
                method: StationaryMethod::Newton,
                integration_time: traj.final_time(),
            });
        }
    }
    integrated.ok_or(Error::NonConvergence {
        beta,
        residual: best_residual,
    })
}

/// Continuation in the noise level: solves at `beta · 2^k` down to `beta`,
/// each level starting from the previous solution rescaled by the ratio of
/// noise levels. Used when no direct start converges.
fn homotopy(game: &Game, graph: &StrategyGraph, beta: f64, mass: &[f64], tol: f64) -> Option<(f64, Vec<f64>)> {
    let mut levels = vec![beta];
    while levels.len() < HOMOTOPY_LEVELS && *levels.last()? < 1.0 {
        levels.push(levels.last()? * 2.0);
    }
    let n = graph.size();
    let mut z: Vec<f64> = vec![-(n as f64).ln(); n];
    let mut prev = *levels.last()?;
    for &b in levels.iter().rev() {
        let start: Vec<f64> = z.iter().map(|v| v * prev / b).collect();
        z = SteadyProblem::new(game, graph, b, mass).solve(&start)?;
        prev = b;
    }
    let residual = max_abs(&fpe_rhs_log(game, graph, &z, beta));
    (residual < tol && z.iter().all(|v| v.is_finite())).then_some((residual, z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fpe::{fpe_rhs, gibbs_measure};
    use crate::game::load_game;

    const PD: &str = include_str!("../../../games/prisoners_dilemma.json");
    const RSP: &str = include_str!("../../../games/rsp.json");

    fn pd() -> (Game, StrategyGraph) {
        let g = load_game(PD).unwrap();
        let graph = g.graph().unwrap();
        (g, graph)
    }

    #[test]
    fn prisoners_dilemma_relaxes_to_gibbs() {
        let (g, graph) = pd();
        let traj = integrate(&g, &graph, &Density::uniform(4), &SolverConfig::new(0.1)).unwrap();
        assert_eq!(traj.termination, Termination::Stationary);
        let gibbs = gibbs_measure(&[2.0, 1.0, 1.0, 0.0], 0.1).unwrap();
        assert!(traj.terminal().max_abs_diff(&gibbs) < 1e-8);
        assert!(traj.samples.windows(2).all(|w| w[0].t < w[1].t));
    }

    #[test]
    fn rsp_uniform_is_constant() {
        let g = load_game(RSP).unwrap();
        let graph = g.graph().unwrap();
        let traj = integrate(&g, &graph, &Density::uniform(9), &SolverConfig::new(0.0)).unwrap();
        assert_eq!(traj.termination, Termination::Stationary);
        assert_eq!(traj.samples.len(), 1);
        assert_eq!(traj.final_time(), 0.0);
    }

    #[test]
    fn strict_ne_vertex_mass_is_constant() {
        let (g, graph) = pd();
        let traj = integrate(&g, &graph, &Density::point_mass(4, 3), &SolverConfig::new(0.0)).unwrap();
        assert_eq!(traj.termination, Termination::Stationary);
        assert_eq!(traj.terminal(), &Density::point_mass(4, 3));
    }

    #[test]
    fn sampling_grid_is_exact() {
        let (g, graph) = pd();
        let cfg = SolverConfig::new(1.0).with_sample_interval(0.25).with_t_max(2.0);
        let traj = integrate(&g, &graph, &Density::uniform(4), &cfg).unwrap();
        assert_eq!(traj.termination, Termination::TMax);
        let times: Vec<f64> = traj.samples.iter().map(|s| s.t).collect();
        let expected: Vec<f64> = (0..=8).map(|k| k as f64 * 0.25).collect();
        assert_eq!(times, expected);
        for s in &traj.samples {
            assert!((s.density.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn interior_start_required_with_noise() {
        let (g, graph) = pd();
        let err = integrate(&g, &graph, &Density::point_mass(4, 0), &SolverConfig::new(0.5));
        assert!(matches!(err, Err(Error::InvalidDensity(_))));
    }

    #[test]
    fn small_beta_stays_positive() {
        let (g, graph) = pd();
        let traj = integrate(&g, &graph, &Density::uniform(4), &SolverConfig::new(0.02)).unwrap();
        for s in &traj.samples {
            assert!(s.density.is_interior());
            assert!((s.density.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn underflow_returns_partial_trajectory() {
        let (g, graph) = pd();
        let mut cfg = SolverConfig::new(1.0);
        cfg.dt_init = 1.0;
        cfg.dt_min = 0.9;
        match integrate(&g, &graph, &Density::uniform(4), &cfg) {
            Err(Error::StepUnderflow { t, partial, .. }) => {
                assert_eq!(partial.termination, Termination::StepUnderflow);
                assert_eq!(partial.final_time(), t);
            }
            other => panic!("expected underflow, got {other:?}"),
        }
    }

    #[test]
    fn stationary_matches_gibbs_at_small_beta() {
        let (g, graph) = pd();
        for beta in [0.05, 0.5, 1.0] {
            let s = stationary_measure(&g, &graph, beta, &Density::uniform(4), &SolverConfig::new(beta)).unwrap();
            let gibbs = gibbs_measure(&[2.0, 1.0, 1.0, 0.0], beta).unwrap();
            assert!(s.density.max_abs_diff(&gibbs) < 1e-8, "beta {beta}");
            assert!(s.residual < 1e-10);
        }
    }

    #[test]
    fn stationary_independent_of_start() {
        let (g, graph) = pd();
        let cfg = SolverConfig::new(0.3);
        let a = stationary_measure(&g, &graph, 0.3, &Density::uniform(4), &cfg).unwrap();
        let b = stationary_measure(&g, &graph, 0.3, &Density::new(vec![0.7, 0.1, 0.1, 0.1]).unwrap(), &cfg).unwrap();
        assert!(a.density.max_abs_diff(&b.density) <= 2.0 * cfg.tol_stat);
    }

    #[test]
    fn stationary_rejects_zero_beta() {
        let (g, graph) = pd();
        assert!(stationary_measure(&g, &graph, 0.0, &Density::uniform(4), &SolverConfig::new(0.0)).is_err());
    }

    #[test]
    fn stationary_residual_is_real() {
        let (g, graph) = pd();
        let s = stationary_measure(&g, &graph, 0.2, &Density::uniform(4), &SolverConfig::new(0.2)).unwrap();
        let v = fpe_rhs(&g, &graph, &s.density, 0.2).unwrap();
        assert!(max_abs(&v) < 1e-10);
    }
}
