use arl_core::agents::*;
use arl_core::data::{sample_batch, Dataset, Provenance, SampledBatch};
use arl_core::envs::{builtin, generate_dataset, Style};
use arl_core::rng::stream;
use arl_core::tensor_core::Tensor;
use arl_core::Error;
use rand::Rng;

fn small(variant: Variant) -> AgentSpec {
    let mut s = AgentSpec::preset(variant, Profile::Desk);
    s.value_hidden = vec![16, 16];
    s.actor_hidden = vec![16, 16];
    s.rep_hidden = vec![16];
    s.d = 4;
    s.batch_size = 16;
    s
}

fn maze_data() -> Dataset {
    let env = builtin("pointmaze15").unwrap();
    generate_dataset(&env, Style::Stitch, 20, 50, 0.1, 3).unwrap()
}

#[test]
fn net_sets_match_variants() {
    use NetId::*;
    let want: [(Variant, &[NetId]); 6] = [
        (Variant::Iql, &[V, Q, Pi]),
        (Variant::Hiql1vr, &[V, Qh, PiL, PiH, Phi]),
        (Variant::Hiql2v, &[Vl, Ql, Vh, Qh, PiL, PiH]),
        (Variant::Hiql2vr, &[Vl, Ql, Vh, Qh, PiL, PiH, Phi]),
        (Variant::Arli, &[Vl, Ql, Vh, Qh, PiL, PiH, Phi]),
        (Variant::Arle, &[Vl, Ql, Vh, Qh, PiL, PiH, Phi]),
    ];
    for (v, ids) in want {
        let a = Agent::new(small(v), 2, 2, 0).unwrap();
        assert_eq!(a.net_ids(), ids.to_vec(), "{v}");
    }
    let arle = Agent::new(small(Variant::Arle), 2, 2, 0).unwrap();
    assert_eq!(arle.value(Vl).unwrap().input_dim(), 2);
    assert_eq!(arle.value(Phi).unwrap().input_dim(), 2);
    let arli = Agent::new(small(Variant::Arli), 2, 2, 0).unwrap();
    assert_eq!(arli.value(Phi).unwrap().input_dim(), 4);
    let h2v = Agent::new(small(Variant::Hiql2v), 2, 2, 0).unwrap();
    assert_eq!(h2v.policy(PiH).unwrap().output_dim(), 2);
}

#[test]
fn hiql1vr_rejects_low_ddpgbc() {
    let mut s = small(Variant::Hiql1vr);
    s.low_loss = PolicyLoss::Ddpgbc;
    assert!(matches!(s.validate(), Err(Error::Config(_))));
    assert!(matches!(Agent::new(s, 2, 2, 0), Err(Error::Config(_))));
}

#[test]
fn init_depends_only_on_seed() {
    for v in Variant::ALL {
        let a = Agent::new(small(v), 2, 2, 5).unwrap();
        assert_eq!(a, Agent::new(small(v), 2, 2, 5).unwrap());
        assert_ne!(a, Agent::new(small(v), 2, 2, 6).unwrap());
    }
}

#[test]
fn deterministic_act_ignores_rng_and_normalises_options() {
    let ds = maze_data();
    let mut rng = stream(1, 0);
    for v in Variant::ALL {
        let out = train(&small(v), &ds, 20, 1).unwrap();
        let a = &out.agent;
        let s = [3.2, 4.1];
        let g = [9.5, 11.5];
        let x = a.act(&s, &g, true, &mut stream(0, 0)).unwrap();
        let y = a.act(&s, &g, true, &mut rng).unwrap();
        assert_eq!(x, y, "{v}");
        let norm = |o: &[f64]| o.iter().map(|z| z * z).sum::<f64>().sqrt();
        match (v.option_norm(), &x.option) {
            (OptionNorm::Length, Some(o)) => assert!((norm(o) - (o.len() as f64).sqrt()).abs() < 1e-9),
            (OptionNorm::Soft, Some(o)) => assert!(norm(o) < (o.len() as f64).sqrt()),
            (OptionNorm::None, o) => assert_eq!(o.is_some(), v.is_hierarchical()),
            other => panic!("{v}: {other:?}"),
        }
        assert!(a.act(&s[..1], &g, true, &mut rng).is_err());
    }
}

#[test]
fn checkpoints_round_trip() {
    let ds = maze_data();
    let dir = tempfile::tempdir().unwrap();
    for v in Variant::ALL {
        let out = train(&small(v), &ds, 5, 2).unwrap();
        let p = dir.path().join(format!("{v}.bin"));
        out.agent.save(&p).unwrap();
        let back = Agent::load(&p).unwrap();
        for id in out.agent.net_ids() {
            assert_eq!(out.agent.net_params(id).unwrap(), back.net_params(id).unwrap(), "{v} {id:?}");
        }
        let mut r1 = stream(9, 0);
        let mut r2 = stream(9, 0);
        assert_eq!(
            out.agent.act(&[1.5, 1.5], &[7.5, 3.5], false, &mut r1).unwrap(),
            back.act(&[1.5, 1.5], &[7.5, 3.5], false, &mut r2).unwrap()
        );
    }
    std::fs::write(dir.path().join("bad.bin"), b"nope").unwrap();
    assert!(matches!(Agent::load(&dir.path().join("bad.bin")), Err(Error::Format { .. })));
}

#[test]
fn training_is_reproducible() {
    let ds = maze_data();
    for v in [Variant::Iql, Variant::Arle] {
        let a = train(&small(v), &ds, 30, 4).unwrap();
        let b = train(&small(v), &ds, 30, 4).unwrap();
        assert_eq!(a.agent, b.agent);
        assert_eq!(a.log.to_jsonl(), b.log.to_jsonl());
    }
}

#[test]
fn high_updates_leave_phi_untouched() {
    let ds = maze_data();
    for v in [Variant::Hiql1vr, Variant::Hiql2vr, Variant::Arli, Variant::Arle] {
        let spec = small(v);
        let mut agent = train(&spec, &ds, 3, 0).unwrap().agent;
        let mut rng = stream(0, 99);
        let b = sample_batch(&ds, 16, &spec.policy_cfg(), spec.n, &mut rng).unwrap();
        let phi: Vec<Tensor> = agent.net_params(NetId::Phi).unwrap().into_iter().cloned().collect();
        let pih: Vec<Tensor> = agent.net_params(NetId::PiH).unwrap().into_iter().cloned().collect();
        update_high_policy(&mut agent, &b).unwrap();
        fit_high_q(&mut agent, &b).unwrap();
        let after: Vec<Tensor> = agent.net_params(NetId::Phi).unwrap().into_iter().cloned().collect();
        assert_eq!(phi, after, "{v}");
        let pih_after: Vec<Tensor> = agent.net_params(NetId::PiH).unwrap().into_iter().cloned().collect();
        assert_ne!(pih, pih_after, "{v}: high policy did not move");
    }
}

#[test]
fn low_policy_trains_phi_only_for_arl() {
    let ds = maze_data();
    for v in [Variant::Hiql2vr, Variant::Arli, Variant::Arle] {
        let spec = small(v);
        let mut agent = Agent::new(spec.clone(), 2, 2, 0).unwrap();
        let b = sample_batch(&ds, 16, &spec.policy_cfg(), spec.n, &mut stream(0, 5)).unwrap();
        let phi: Vec<Tensor> = agent.net_params(NetId::Phi).unwrap().into_iter().cloned().collect();
        update_low_policy(&mut agent, &b).unwrap();
        let moved = agent.net_params(NetId::Phi).unwrap().into_iter().cloned().collect::<Vec<_>>() != phi;
        assert_eq!(moved, v != Variant::Hiql2vr, "{v}");
    }
}

/// Dyadic offsets keep `x + t - (s + t)` exact in floating point.
fn dyadic(rng: &mut arl_core::rng::Stream) -> f64 {
    rng.random_range(-64i32..64) as f64 / 8.0
}

#[test]
fn arle_is_translation_invariant() {
    let ds = maze_data();
    let agent = train(&small(Variant::Arle), &ds, 10, 0).unwrap().agent;
    let mut rng = stream(3, 0);
    for _ in 0..200 {
        let p: Vec<f64> = (0..6).map(|_| dyadic(&mut rng)).collect();
        let s = Tensor::matrix(1, 2, p[0..2].to_vec()).unwrap();
        let gs = Tensor::matrix(1, 2, p[2..4].to_vec()).unwrap();
        let st = Tensor::matrix(1, 2, vec![p[0] + p[4], p[1] + p[5]]).unwrap();
        let gt = Tensor::matrix(1, 2, vec![p[2] + p[4], p[3] + p[5]]).unwrap();
        assert_eq!(agent.low_value(&s, &gs).unwrap(), agent.low_value(&st, &gt).unwrap());
        assert_eq!(agent.embed(&s, &gs, false).unwrap(), agent.embed(&st, &gt, false).unwrap());
        let a = Tensor::matrix(1, 2, vec![0.25, -0.5]).unwrap();
        let q0 = agent.low_q_input(&s, &gs, &a).unwrap();
        let q1 = agent.low_q_input(&st, &gt, &a).unwrap();
        assert_eq!(q0.row(0)[2..], q1.row(0)[2..]);
    }
    let arli = train(&small(Variant::Arli), &ds, 10, 0).unwrap().agent;
    let s = Tensor::matrix(1, 2, vec![1.0, 1.0]).unwrap();
    let g = Tensor::matrix(1, 2, vec![2.0, 3.0]).unwrap();
    let st = Tensor::matrix(1, 2, vec![5.0, 1.0]).unwrap();
    let gt = Tensor::matrix(1, 2, vec![6.0, 3.0]).unwrap();
    assert_ne!(arli.low_value(&s, &g).unwrap(), arli.low_value(&st, &gt).unwrap());
}

/// Every (s, s', g) triple of a 5-state cycle through `points`, with `r = 0` exactly at the
/// goal.
fn cycle_batch(points: &[[f64; 2]]) -> (SampledBatch, Vec<(usize, usize, usize)>) {
    let k = points.len();
    let mut trip = Vec::new();
    for s in 0..k {
        for g in 0..k {
            trip.push((s, (s + 1) % k, g));
        }
    }
    let m = trip.len();
    let col = |f: &dyn Fn(&(usize, usize, usize)) -> [f64; 2]| {
        Tensor::matrix(m, 2, trip.iter().flat_map(|t| f(t)).collect()).unwrap()
    };
    let batch = SampledBatch {
        s: col(&|t| points[t.0]),
        a: Tensor::zeros(&[m, 2]),
        s_next: col(&|t| points[t.1]),
        waypoint: col(&|t| points[t.1]),
        goal: col(&|t| points[t.2]),
        reward: Tensor::matrix(m, 1, trip.iter().map(|t| if t.0 == t.2 { 0.0 } else { -1.0 }).collect()).unwrap(),
        provenance: vec![Provenance::Random; m],
        anchors: vec![(0, 0); m],
        waypoint_steps: vec![0; m],
        goal_locs: vec![(0, 0); m],
    };
    (batch, trip)
}

/// `V = r + γ P V` on the cycle, solved per goal by Gaussian elimination.
fn td_fixed_point(k: usize, gamma: f64) -> Vec<Vec<f64>> {
    (0..k)
        .map(|g| {
            let mut a = nalgebra::DMatrix::<f64>::identity(k, k);
            let mut b = nalgebra::DVector::<f64>::zeros(k);
            for s in 0..k {
                a[(s, (s + 1) % k)] -= gamma;
                b[s] = if s == g { 0.0 } else { -1.0 };
            }
            a.lu().solve(&b).unwrap().iter().copied().collect()
        })
        .collect()
}

#[test]
fn high_value_reaches_td_fixed_point() {
    let points: Vec<[f64; 2]> = (0..5)
        .map(|i| {
            let a = i as f64 * std::f64::consts::TAU / 5.0;
            [2.0 * a.cos(), 2.0 * a.sin()]
        })
        .collect();
    let (batch, trip) = cycle_batch(&points);
    let mut spec = small(Variant::Hiql2v);
    spec.tau = 0.5;
    spec.gamma = 0.5;
    spec.lr = 1e-3;
    spec.target_rate = 0.05;
    spec.value_hidden = vec![64, 64];
    let mut agent = Agent::new(spec, 2, 2, 0).unwrap();
    for step in 0..5000 {
        if step == 3000 {
            agent.spec.lr = 1e-4;
        }
        update_high_value_ivl(&mut agent, &batch).unwrap();
    }
    let fp = td_fixed_point(5, 0.5);
    let v = agent.high_value(&batch.s, &batch.goal).unwrap();
    let worst = trip
        .iter()
        .enumerate()
        .map(|(i, &(s, _, g))| (v.data()[i] - fp[g][s]).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-2, "max error {worst}");
}

#[test]
fn low_critic_fits_single_transition() {
    let points = [[0.0, 0.0], [1.0, 0.0]];
    let m = 1;
    let t = |p: [f64; 2]| Tensor::matrix(m, 2, p.to_vec()).unwrap();
    let batch = SampledBatch {
        s: t(points[0]),
        a: Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap(),
        s_next: t(points[1]),
        waypoint: t(points[1]),
        goal: t(points[1]),
        reward: Tensor::matrix(1, 1, vec![-1.0]).unwrap(),
        provenance: vec![Provenance::Trajectory],
        anchors: vec![(0, 0)],
        waypoint_steps: vec![1],
        goal_locs: vec![(0, 1)],
    };
    let mut spec = small(Variant::Arli);
    spec.lr = 1e-3;
    let mut agent = Agent::new(spec.clone(), 2, 2, 0).unwrap();
    for _ in 0..1500 {
        update_low_value_iql(&mut agent, &batch).unwrap();
    }
    let v_next = agent.low_value(&batch.s_next, &batch.goal).unwrap().data()[0];
    let q = arl_core::tensor_core::mlp_forward(
        agent.value(NetId::Ql).unwrap(),
        &agent.low_q_input(&batch.s, &batch.goal, &batch.a).unwrap(),
        false,
    )
    .unwrap()
    .data()[0];
    assert!((q - (-1.0 + spec.gamma_l() * v_next)).abs() < 1e-2, "q {q} v' {v_next}");
}

#[test]
fn awr_weights_are_capped_exponentials() {
    let adv = Tensor::matrix(4, 1, vec![-1.0, 0.0, 0.5, 10.0]).unwrap();
    let w = awr_weights(&adv, 2.0, 100.0);
    assert_eq!(w.data()[1], 1.0);
    assert!((w.data()[0] - (-2.0f64).exp()).abs() < 1e-15);
    assert!((w.data()[2] - 1.0f64.exp()).abs() < 1e-15);
    assert_eq!(w.data()[3], 100.0);
}

#[test]
fn high_policy_mean_moves_to_weighted_barycenter() {
    // HIQL2v predicts raw waypoints: with a single (s, g) and two waypoints
    // of equal advantage, the fitted mean is their midpoint.
    let mut spec = small(Variant::Hiql2v);
    spec.lr = 3e-3;
    spec.alpha_h = 0.0;
    let mut agent = Agent::new(spec, 2, 2, 0).unwrap();
    let rep = |p: [f64; 2], k: usize| Tensor::matrix(k, 2, p.iter().cycle().take(2 * k).copied().collect()).unwrap();
    let batch = SampledBatch {
        s: rep([0.5, 0.5], 2),
        a: Tensor::zeros(&[2, 2]),
        s_next: rep([0.5, 0.5], 2),
        waypoint: Tensor::matrix(2, 2, vec![2.0, 0.0, 0.0, 2.0]).unwrap(),
        goal: rep([3.0, 3.0], 2),
        reward: Tensor::filled(&[2, 1], -1.0),
        provenance: vec![Provenance::Trajectory; 2],
        anchors: vec![(0, 0); 2],
        waypoint_steps: vec![1; 2],
        goal_locs: vec![(0, 1); 2],
    };
    for _ in 0..2000 {
        update_high_policy(&mut agent, &batch).unwrap();
    }
    let mean = agent.policy(NetId::PiH).unwrap().mode(&Tensor::concat_cols(&[&rep([0.5, 0.5], 1), &rep([3.0, 3.0], 1)]).unwrap()).unwrap();
    assert!((mean.data()[0] - 1.0).abs() < 0.05 && (mean.data()[1] - 1.0).abs() < 0.05, "{mean:?}");
}

#[test]
fn nan_batch_aborts_without_side_effects() {
    let ds = maze_data();
    let spec = small(Variant::Arli);
    let mut agent = Agent::new(spec.clone(), 2, 2, 0).unwrap();
    let mut b = sample_batch(&ds, 16, &spec.low_value_cfg(), spec.n, &mut stream(0, 1)).unwrap();
    b.s.data_mut()[0] = f64::NAN;
    let before = agent.clone();
    assert!(matches!(update_low_value_iql(&mut agent, &b), Err(Error::Numeric { .. })));
    assert_eq!(agent, before);
}
