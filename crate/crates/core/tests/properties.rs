use equiselect::{
    build_product, detect_potential, enumerate_pure_ne, fpe_rhs, free_energy, gibbs_measure, integrate,
    rate_matrix_beta0, relative_fisher, step_ensemble, Density, Ensemble, Game, SolverConfig, StrategyGraph,
    SwitchEdges, POTENTIAL_TOL,
};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random connected graph on `m` vertices: a random tree plus each remaining
/// pair with probability one half.
fn connected_edges(rng: &mut ChaCha8Rng, m: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for v in 1..m {
        edges.push((rng.random_range(0..v), v));
    }
    for a in 0..m {
        for b in a + 1..m {
            if !edges.iter().any(|&(x, y)| (x, y) == (a, b) || (x, y) == (b, a)) && rng.random_bool(0.5) {
                edges.push((a, b));
            }
        }
    }
    edges
}

fn random_shape(rng: &mut ChaCha8Rng) -> (Vec<Vec<String>>, SwitchEdges) {
    let n = rng.random_range(1..=3);
    let strategies: Vec<Vec<String>> = (0..n)
        .map(|_| (0..rng.random_range(1..=4)).map(|k| format!("s{k}")).collect())
        .collect();
    let edges = strategies.iter().map(|s| Some(connected_edges(rng, s.len()))).collect();
    (strategies, edges)
}

/// Game with N ≤ 3 players, at most four strategies each, costs uniform in
/// [−2, 2] and random connected player graphs.
fn random_game(seed: u64) -> (Game, StrategyGraph) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (strategies, edges) = random_shape(&mut rng);
    let size: usize = strategies.iter().map(Vec::len).product();
    let costs = (0..strategies.len())
        .map(|_| (0..size).map(|_| rng.random_range(-2.0..=2.0)).collect())
        .collect();
    let game = Game::new(strategies, costs).unwrap().with_switch_edges(edges).unwrap();
    let graph = game.graph().unwrap();
    (game, graph)
}

/// Potential game `u_i = φ + h_i(x_{−i})`, returned with its `φ`.
fn random_potential_game(seed: u64) -> (Game, StrategyGraph, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (strategies, edges) = random_shape(&mut rng);
    let size: usize = strategies.iter().map(Vec::len).product();
    let phi: Vec<f64> = (0..size).map(|_| rng.random_range(-2.0..=2.0)).collect();
    let probe = build_product(
        &Game::new(strategies.clone(), vec![phi.clone(); strategies.len()]).unwrap(),
        None,
    )
    .unwrap();
    let costs = (0..strategies.len())
        .map(|i| {
            // h_i depends on the other players' strategies only
            let others: Vec<f64> = (0..size).map(|_| rng.random_range(-1.0..=1.0)).collect();
            (0..size)
                .map(|x| {
                    let mut profile = probe.index_profile(x).unwrap();
                    profile[i] = 0;
                    phi[x] + others[probe.profile_index(&profile).unwrap()]
                })
                .collect()
        })
        .collect();
    let game = Game::new(strategies, costs).unwrap().with_switch_edges(edges).unwrap();
    let graph = game.graph().unwrap();
    (game, graph, phi)
}

fn random_interior(seed: u64, size: usize) -> Density {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    Density::normalized((0..size).map(|_| rng.random_range(1e-3..1.0)).collect()).unwrap()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| f64::max(m, x.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn rhs_conserves_mass(seed in any::<u64>(), beta in 0.0..2.0f64) {
        let (game, graph) = random_game(seed);
        let rho = random_interior(seed, game.size());
        let rhs = fpe_rhs(&game, &graph, &rho, beta).unwrap();
        prop_assert!(rhs.iter().sum::<f64>().abs() <= 1e-14);
    }

    #[test]
    fn zero_noise_rhs_is_rate_matrix(seed in any::<u64>()) {
        let (game, graph) = random_game(seed);
        let rho = random_interior(seed, game.size());
        let rhs = fpe_rhs(&game, &graph, &rho, 0.0).unwrap();
        let q = rate_matrix_beta0(&game, &graph).unwrap();
        let expected = q * DVector::from_column_slice(rho.as_slice());
        for (a, b) in rhs.iter().zip(expected.iter()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn trajectories_stay_positive_on_the_simplex(seed in any::<u64>(), beta in 0.01..1.0f64) {
        let (game, graph) = random_game(seed);
        let rho0 = random_interior(seed, game.size());
        let config = SolverConfig::new(beta).with_t_max(5.0).with_sample_interval(0.5);
        let traj = integrate(&game, &graph, &rho0, &config).unwrap();
        for s in &traj.samples {
            prop_assert!(s.density.iter().all(|&p| p > 0.0));
            prop_assert!((s.density.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn zero_noise_trajectories_stay_on_the_simplex(seed in any::<u64>()) {
        let (game, graph) = random_game(seed);
        let rho0 = random_interior(seed, game.size());
        let config = SolverConfig::new(0.0).with_t_max(5.0).with_sample_interval(0.5);
        let traj = integrate(&game, &graph, &rho0, &config).unwrap();
        for s in &traj.samples {
            prop_assert!(s.density.iter().all(|&p| p >= 0.0));
            prop_assert!((s.density.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn cost_shifts_change_nothing(seed in any::<u64>(), shifts in proptest::collection::vec(-5.0..5.0f64, 3)) {
        for (game, graph) in [random_game(seed), { let (g, gr, _) = random_potential_game(seed); (g, gr) }] {
            let costs = (0..game.num_players())
                .map(|i| game.costs(i).iter().map(|c| c + shifts[i]).collect())
                .collect();
            let shifted = Game::new(game.strategies().to_vec(), costs).unwrap();
            let a = detect_potential(&game, &graph).unwrap();
            let b = detect_potential(&shifted, &graph).unwrap();
            prop_assert_eq!(a.is_potential, b.is_potential);
            if let (Some(pa), Some(pb)) = (&a.phi, &b.phi) {
                for (x, y) in pa.iter().zip(pb) {
                    prop_assert!((x - y).abs() <= 1e-9);
                }
            }
            prop_assert_eq!(
                enumerate_pure_ne(&game, &graph).unwrap().profiles,
                enumerate_pure_ne(&shifted, &graph).unwrap().profiles
            );
        }
    }

    #[test]
    fn potential_certificates_hold_on_every_edge(seed in any::<u64>()) {
        let (game, graph, phi) = random_potential_game(seed);
        let cert = detect_potential(&game, &graph).unwrap();
        prop_assert!(cert.is_potential);
        prop_assert!(cert.max_residual <= POTENTIAL_TOL);
        let found = cert.phi.unwrap();
        let offset = phi[0] - found[0];
        for e in graph.edges() {
            let r = found[e.x] - found[e.y] - game.cost(e.player, e.x) + game.cost(e.player, e.y);
            prop_assert!(r.abs() <= POTENTIAL_TOL);
        }
        for (x, y) in found.iter().zip(&phi) {
            prop_assert!((x + offset - y).abs() <= 1e-9);
        }
        // arbitrary games: a positive certificate still satisfies the identity
        let (game, graph) = random_game(seed);
        let cert = detect_potential(&game, &graph).unwrap();
        if let Some(phi) = cert.phi {
            for e in graph.edges() {
                let r = phi[e.x] - phi[e.y] - game.cost(e.player, e.x) + game.cost(e.player, e.y);
                prop_assert!(r.abs() <= POTENTIAL_TOL);
            }
        } else {
            prop_assert!(cert.witness.is_some());
        }
    }

    #[test]
    fn nash_equilibria_are_local_minima_of_the_potential(seed in any::<u64>()) {
        let (game, graph, phi) = random_potential_game(seed);
        let ne = enumerate_pure_ne(&game, &graph).unwrap();
        let local_min: Vec<usize> = (0..graph.size())
            .filter(|&x| graph.neighbors(x).iter().all(|&y| phi[y] >= phi[x]))
            .collect();
        prop_assert_eq!(ne.profiles, local_min);
    }

    #[test]
    fn product_graph_counts(seed in any::<u64>()) {
        let (_, graph) = random_game(seed);
        let radices = graph.radices();
        for x in 0..graph.size() {
            let expected: usize = (0..graph.num_players())
                .map(|i| graph.player_graph(i).degree(graph.coordinate(x, i)))
                .sum();
            prop_assert_eq!(graph.degree(x), expected);
            for &y in graph.neighbors(x) {
                prop_assert!(graph.neighbors(y).contains(&x));
            }
        }
        let expected_edges: usize = (0..graph.num_players())
            .map(|i| {
                let others: usize = radices.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, m)| m).product();
                graph.player_graph(i).edges().len() * others
            })
            .sum();
        prop_assert_eq!(graph.edges().len(), expected_edges);
    }

    #[test]
    fn gibbs_is_stationary_and_fisher_vanishes(seed in any::<u64>(), beta in 0.05..1.0f64) {
        let (game, graph, _) = random_potential_game(seed);
        let phi = detect_potential(&game, &graph).unwrap().phi.unwrap();
        let gibbs = gibbs_measure(&phi, beta).unwrap();
        prop_assert!(max_abs(&fpe_rhs(&game, &graph, &gibbs, beta).unwrap()) <= 1e-12);
        prop_assert!(relative_fisher(&gibbs, &gibbs, &graph).unwrap() == 0.0);
        let rho = random_interior(seed, game.size());
        let rhs = max_abs(&fpe_rhs(&game, &graph, &rho, beta).unwrap());
        let fisher = relative_fisher(&rho, &gibbs, &graph).unwrap();
        prop_assert_eq!(rhs > 1e-12, fisher > 1e-20);
    }

    #[test]
    fn free_energy_descends(seed in any::<u64>(), beta in 0.05..1.0f64) {
        let (game, graph, _) = random_potential_game(seed);
        let phi = detect_potential(&game, &graph).unwrap().phi.unwrap();
        let rho0 = random_interior(seed, game.size());
        let config = SolverConfig::new(beta).with_t_max(5.0).with_sample_interval(0.25);
        let traj = integrate(&game, &graph, &rho0, &config).unwrap();
        let f: Vec<f64> = traj.samples.iter().map(|s| free_energy(&s.density, &phi, beta).unwrap()).collect();
        for w in f.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-13, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn nash_measures_are_zero_noise_fixed_points(seed in any::<u64>()) {
        let (game, graph) = random_game(seed);
        let ne = enumerate_pure_ne(&game, &graph).unwrap();
        if !ne.is_empty() {
            let mut measures: Vec<Density> = ne.profiles.iter().map(|&x| Density::point_mass(game.size(), x)).collect();
            measures.push(Density::uniform_on(game.size(), &ne.profiles).unwrap());
            for rho in &measures {
                prop_assert!(max_abs(&fpe_rhs(&game, &graph, rho, 0.0).unwrap()) == 0.0);
            }
            // the particle process is absorbed there as well
            let profiles: Vec<usize> = ne.profiles.iter().cycle().take(50).copied().collect();
            let mut ensemble = Ensemble::from_profiles(&profiles, game.size(), 1.0, seed).unwrap();
            let counts = ensemble.counts().to_vec();
            for _ in 0..20 {
                ensemble = step_ensemble(&game, &graph, ensemble, 0.0, 0.01).unwrap();
            }
            prop_assert_eq!(ensemble.counts(), counts.as_slice());
        }
    }

    #[test]
    fn particle_order_is_irrelevant(seed in any::<u64>()) {
        let (game, graph) = random_game(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut profiles: Vec<usize> = (0..200).map(|_| rng.random_range(0..game.size())).collect();
        let a = Ensemble::from_profiles(&profiles, game.size(), 1.0, seed).unwrap();
        profiles.reverse();
        let b = Ensemble::from_profiles(&profiles, game.size(), 1.0, seed).unwrap();
        let a = step_ensemble(&game, &graph, a, 0.3, 0.01).unwrap();
        let b = step_ensemble(&game, &graph, b, 0.3, 0.01).unwrap();
        prop_assert_eq!(a.counts(), b.counts());
    }
}
