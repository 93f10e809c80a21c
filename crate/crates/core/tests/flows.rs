use equiselect::{integrate, load_game, simulate, Density, Game, SimConfig, SolverConfig, StrategyGraph, Trajectory};
use rayon::prelude::*;

const CORPUS: [(&str, &str); 4] = [
    (
        "prisoners_dilemma",
        include_str!("../../../games/prisoners_dilemma.json"),
    ),
    ("asymmetric_2x2", include_str!("../../../games/asymmetric_2x2.json")),
    ("rsp", include_str!("../../../games/rsp.json")),
    ("rsp_constrained", include_str!("../../../games/rsp_constrained.json")),
];

fn game(text: &str) -> (Game, StrategyGraph) {
    let g = load_game(text).unwrap();
    let graph = g.graph().unwrap();
    (g, graph)
}

fn at_time(traj: &Trajectory, t: f64) -> &Density {
    traj.samples
        .iter()
        .find(|s| (s.t - t).abs() <= 1e-9 * t.max(1.0))
        .map(|s| &s.density)
        .unwrap_or_else(|| {
            assert!(traj.final_time() < t);
            traj.terminal()
        })
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>()
}

/// Particle error against the FPE decays like `M^{−1/2}` on every corpus
/// game at both noise levels.
#[test]
fn particle_error_scales_like_inverse_root_m() {
    let times = [1.0, 5.0, 20.0];
    let sizes = [1_000u64, 10_000, 100_000];
    let cases: Vec<(&str, f64)> = CORPUS
        .iter()
        .flat_map(|&(name, _)| [(name, 0.1), (name, 0.5)])
        .collect();
    let slopes: Vec<(String, f64)> = cases
        .par_iter()
        .map(|&(name, beta)| {
            let (g, graph) = game(CORPUS.iter().find(|c| c.0 == name).unwrap().1);
            // a non-uniform start so that RSP moves at all
            let rho0 = Density::normalized((1..=g.size()).map(|k| k as f64).collect()).unwrap();
            let config = SolverConfig::new(beta).with_t_max(20.0).with_sample_interval(1.0);
            let fpe = integrate(&g, &graph, &rho0, &config).unwrap();
            let rms: Vec<f64> = sizes
                .iter()
                .map(|&m| {
                    let mut sq = Vec::new();
                    for seed in 0..10 {
                        let sim = SimConfig {
                            particles: m,
                            seed,
                            sample_interval: Some(1.0),
                            ..SimConfig::default()
                        };
                        let traj = simulate(&g, &graph, &rho0, &sim, beta).unwrap();
                        for &t in &times {
                            sq.push(traj.at(t).unwrap().max_abs_diff(at_time(&fpe, t)).powi(2));
                        }
                    }
                    (sq.iter().sum::<f64>() / sq.len() as f64).sqrt()
                })
                .collect();
            let xs: Vec<f64> = sizes.iter().map(|&m| (m as f64).ln()).collect();
            let ys: Vec<f64> = rms.iter().map(|e| e.ln()).collect();
            (format!("{name} beta {beta}: rms {rms:?}"), slope(&xs, &ys))
        })
        .collect();
    for (label, s) in &slopes {
        assert!((s + 0.5).abs() <= 0.15, "{label}: slope {s}");
    }
}

fn continuity_errors(g: &Game, graph: &StrategyGraph, rho0: &Density) -> Vec<f64> {
    let t = 5.0;
    let run = |beta: f64| {
        let config = SolverConfig::new(beta).with_t_max(t).with_sample_interval(t);
        at_time(&integrate(g, graph, rho0, &config).unwrap(), t).clone()
    };
    let reference = run(0.0);
    [0.1, 0.05, 0.025, 0.0125]
        .iter()
        .map(|&b| run(b).max_abs_diff(&reference))
        .collect()
}

/// `‖ρ^β(T) − ρ^0(T)‖_∞` halves with β on the corpus, from the uniform start.
#[test]
fn noise_vanishes_at_first_order() {
    for (name, text) in CORPUS {
        let (g, graph) = game(text);
        let mut starts = vec![Density::uniform(g.size())];
        if name == "rsp" {
            // uniform is stationary for every β there
            assert!(continuity_errors(&g, &graph, &starts[0]).iter().all(|&e| e <= 1e-15));
            starts = vec![Density::normalized((1..=g.size()).map(|k| k as f64).collect()).unwrap()];
        }
        for rho0 in &starts {
            let errors = continuity_errors(&g, &graph, rho0);
            for w in errors.windows(2) {
                let ratio = w[0] / w[1];
                assert!((ratio - 2.0).abs() <= 0.6, "{name}: errors {errors:?}");
            }
        }
    }
}
