use arl_core::envs::MazeSpec;
use arl_core::rng::stream;
use arl_core::tabular::*;
use proptest::prelude::*;
use rand::Rng;

fn random_maze(rng: &mut arl_core::rng::Stream) -> MazeSpec {
    loop {
        let walls: Vec<bool> = (0..25).map(|_| rng.random::<f64>() < 0.25).collect();
        let Ok(m) = MazeSpec::from_walls("r", 5, 5, walls, false) else { continue };
        let free = m.free_cells();
        if free.len() < 2 {
            continue;
        }
        let d = m.distances_to(free[0]);
        if free.iter().all(|&c| d[m.index(c)].is_some()) {
            return m;
        }
    }
}

#[test]
fn greedy_paths_match_flood_fill() {
    let mut rng = stream(11, 0);
    for _ in 0..10 {
        let maze = random_maze(&mut rng);
        let mdp = FiniteMDP::from_maze(&maze, 0.95).unwrap();
        let cells = mdp.layout.clone().unwrap().cells;
        for (g, &gc) in cells.iter().enumerate() {
            let sol = value_iteration(&mdp, g).unwrap();
            let flood = maze.distances_to(gc);
            for (s, &sc) in cells.iter().enumerate() {
                assert_eq!(greedy_path_length(&mdp, &sol.policy, s, g), flood[maze.index(sc)]);
            }
            assert_eq!(sol.values[g], 0.0);
        }
    }
}

fn random_policy(mdp: &FiniteMDP, rng: &mut arl_core::rng::Stream) -> Policy {
    let mut p = Policy::zeros(mdp.n_states, mdp.n_actions, mdp.goals.len());
    for c in 0..mdp.goals.len() {
        for s in 0..mdp.n_states {
            let w: Vec<f64> = (0..mdp.n_actions).map(|_| rng.random::<f64>() + 0.01).collect();
            let t: f64 = w.iter().sum();
            for (a, x) in w.iter().enumerate() {
                p.row_mut(c, s)[a] = x / t;
            }
        }
    }
    p
}

#[test]
fn solve_matches_series_and_normalises() {
    let mut rng = stream(12, 0);
    for i in 0..20 {
        let mdp = FiniteMDP::random_graph(4 + i, 1 + i % 4, 1 + i % 5, 0.9, &mut rng).unwrap();
        let p = random_policy(&mdp, &mut rng);
        let exact = occupancy(&mdp, &p, mdp.gamma).unwrap();
        let series = series_occupancy(&mdp, &p, mdp.gamma, &uniform_init(&mdp)).unwrap();
        assert!(exact.max_abs_diff(&series) < 1e-10);
        for c in 0..mdp.goals.len() {
            assert!((exact.goal_mass(c) - 1.0).abs() < 1e-9);
        }
        assert!(exact.d.iter().all(|&x| x >= 0.0));
    }
}

#[test]
fn monte_carlo_agrees() {
    let mut rng = stream(13, 0);
    let mdp = FiniteMDP::random_graph(8, 3, 3, 0.8, &mut rng).unwrap();
    let p = random_policy(&mdp, &mut rng);
    let exact = occupancy(&mdp, &p, mdp.gamma).unwrap();
    let mc = monte_carlo_occupancy(&mdp, &p, mdp.gamma, 1_000_000, &mut rng).unwrap();
    assert!(exact.max_abs_diff(&mc) < 0.01, "{}", exact.max_abs_diff(&mc));
}

#[test]
fn kappa_equals_brute_force() {
    let mut rng = stream(14, 0);
    for _ in 0..10 {
        let mdp = FiniteMDP::random_graph(6, 3, 2, 0.9, &mut rng).unwrap();
        let a = occupancy(&mdp, &random_policy(&mdp, &mut rng), 0.9).unwrap();
        let b = occupancy(&mdp, &random_policy(&mdp, &mut rng), 0.9).unwrap();
        let mut best: f64 = 0.0;
        for s in 0..6 {
            for x in 0..3 {
                for c in 0..2 {
                    if a.get(s, x, c) > 0.0 {
                        best = best.max(a.get(s, x, c) / b.get(s, x, c));
                    }
                }
            }
        }
        assert_eq!(concentrability(&a, &b).unwrap().value, best);
    }
}

#[test]
fn aggregation_matches_direct_sums() {
    let mut rng = stream(15, 0);
    let mdp = FiniteMDP::random_graph(10, 3, 4, 0.9, &mut rng).unwrap();
    let d = occupancy(&mdp, &random_policy(&mdp, &mut rng), 0.9).unwrap();
    let p = Partition::single(40).refine_random(7, &mut rng);
    let agg = aggregate_partition(&d, &p).unwrap();
    for c in 0..p.n_classes {
        for x in 0..3 {
            let mut direct = 0.0;
            for g in 0..4 {
                for s in 0..10 {
                    if p.classes[g * 10 + s] == c {
                        direct += d.get(s, x, g);
                    }
                }
            }
            assert!((agg.get(c, x) - direct).abs() < 1e-15);
        }
    }
    assert!((agg.total() - d.d.iter().sum::<f64>()).abs() < 1e-12);
}

#[test]
fn identity_map_with_unit_horizon_is_neutral() {
    let mut rng = stream(16, 0);
    let mdp = FiniteMDP::random_graph(9, 3, 3, 0.9, &mut rng).unwrap();
    let r = verify_motivation_box(&mdp, &Behaviour::Epsilon { eps: 0.3 }, &identity_map(&mdp), 1).unwrap();
    assert_eq!(r.kappa_h_rep.value, r.kappa_h.value);
    assert_eq!(r.kappa_l_rep.value, r.kappa_l.value);
    assert!((r.ratio_rep_hier - 1.0).abs() < 1e-12);
    assert!(r.checks.all());
}

#[test]
fn translated_rooms_shrink_low_level_kappa() {
    let maze = four_rooms(2).unwrap();
    let mdp = FiniteMDP::from_maze(&maze, 0.9).unwrap();
    let expert = first_room_mask(&mdp, 2).unwrap();
    let map = displacement_map(&mdp).unwrap();
    let r = verify_motivation_box(&mdp, &Behaviour::RegionMasked { expert }, &map, 1).unwrap();
    assert!(r.kappa_l.is_infinite(), "{:?}", r.kappa_l);
    assert!(r.kappa_l_rep.value.is_finite());
    assert!(r.kappa_l_rep.value < r.kappa_l.value);
    assert!(r.kappa_l.witness.is_some());
}

#[test]
fn long_horizon_discount() {
    let mut rng = stream(17, 0);
    let mdp = FiniteMDP::random_graph(6, 2, 2, 0.99, &mut rng).unwrap();
    let r = verify_motivation_box(&mdp, &Behaviour::Epsilon { eps: 0.1 }, &identity_map(&mdp), 25).unwrap();
    assert!((r.gamma_h - 0.99f64.powi(25)).abs() < 1e-12);
    assert!((r.gamma_h - 0.7778213593991467).abs() < 1e-12);
    assert!((r.horizon_high - (1.0 - r.gamma_h).powi(-3)).abs() < 1e-9);
}

#[test]
fn equivalence_breaking_map_is_rejected() {
    let mut rng = stream(18, 0);
    let mdp = FiniteMDP::random_grid(4, 4, 0.0, 0.9, &mut rng).unwrap();
    let map = AbstractionMap {
        high: Partition::identity(16 * 16),
        low: Partition::single(16 * 16),
    };
    let err = verify_motivation_box(&mdp, &Behaviour::Epsilon { eps: 0.1 }, &map, 2).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("low-level") && msg.contains("share class"), "{msg}");
}

#[test]
fn sweep_inequalities_hold() {
    let records = sweep(20, 25, 7).unwrap();
    assert_eq!(records.len(), 20);
    for r in &records {
        assert!(r.all_checks(), "instance {} failed", r.instance);
        let id = r.maps.iter().find(|m| m.map == "identity").unwrap();
        assert_eq!(id.report.kappa_h_rep.value, id.report.kappa_h.value);
        for m in &r.maps {
            for k in [&m.report.kappa, &m.report.kappa_h, &m.report.kappa_l] {
                if k.is_infinite() {
                    assert!(k.witness.is_some());
                }
            }
        }
    }
    let csv = records_csv(&records);
    assert_eq!(csv.lines().count(), 1 + records.iter().map(|r| r.maps.len()).sum::<usize>());
    assert_eq!(records_jsonl(&records).unwrap().lines().count(), 20);
    assert_eq!(records_jsonl(&records).unwrap(), records_jsonl(&sweep(20, 25, 7).unwrap()).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn concentrability_never_grows_under_aggregation(seed in 0u64..10_000, k in 1usize..6) {
        let mut rng = stream(seed, 1);
        let mdp = FiniteMDP::random_graph(rng.random_range(3..12), rng.random_range(1..5), 2, 0.9, &mut rng).unwrap();
        let a = occupancy(&mdp, &random_policy(&mdp, &mut rng), 0.9).unwrap();
        let b = occupancy(&mdp, &random_policy(&mdp, &mut rng), 0.9).unwrap();
        let p = Partition::single(mdp.n_states * 2).refine_random(k, &mut rng);
        let full = concentrability(&a, &b).unwrap();
        let rep = aggregated_concentrability(&aggregate_partition(&a, &p).unwrap(), &aggregate_partition(&b, &p).unwrap()).unwrap();
        prop_assert!(kappa_le(&rep, &full));
        prop_assert_eq!(concentrability(&a, &a).unwrap().value, 1.0);
    }
}
