//! Acceptance suite: one pass/fail line per criterion.
//!
//! Run `cargo test --test acceptance` for everything, or pass criterion
//! numbers (`cargo test --test acceptance -- 1 5`) to select. Criterion 7
//! reads the cached desk protocol in `tests/fixtures/desk_protocol.json`;
//! regenerate it with `cargo run --release --example desk_protocol` or by
//! setting `ARL_RUN_PROTOCOL=1`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use arl_core::agents::{train, Agent, AgentSpec, NetId, Profile, Variant};
use arl_core::agents::{fit_high_q, update_high_policy, update_high_value_ivl};
use arl_core::cli::{cmd_eval, cmd_train, parse_value, run_dir, RunConfig, METRICS_FILE};
use arl_core::data::{sample_batch, sample_goal, truncated_geometric, Dataset, GoalSampleConfig, Provenance, SampledBatch};
use arl_core::envs::{builtin, generate_dataset, MazeSpec, Style};
use arl_core::harness::{desk_plan, load_report, run_protocol, translated_value_spread, SPREAD_DISPLACEMENTS};
use arl_core::rng::{stream, Stream};
use arl_core::tabular::*;
use arl_core::tensor_core::{Graph, HeadKind, NetBundle, PolicyHead, Tensor, Var};
use arl_core::tensor_core::{length_normalize, soft_normalize, FinalInit};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ChiSquared, ContinuousCDF};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn normal(rng: &mut Stream) -> f64 {
    StandardNormal.sample(rng)
}

fn random_tensor(shape: &[usize], sd: f64, rng: &mut Stream) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| sd * normal(rng)).collect()).unwrap()
}

// ---------------------------------------------------------------- 1

#[derive(Clone, Copy, Debug, PartialEq)]
enum LossKind {
    Expectile,
    AwrGaussian,
    AwrCategorical,
    Ddpgbc,
    OptionValue,
}

/// A small random model whose scalar loss is one of the training
/// objectives. Every tensor listed by `params_mut` is a gradient leaf.
struct Model {
    kind: LossKind,
    net: NetBundle,
    head: Option<PolicyHead>,
    phi: Option<NetBundle>,
    x: Tensor,
    target: Tensor,
    weights: Tensor,
    tau: f64,
    alpha: f64,
    /// Stopgradded critic scale, held fixed.
    scale: f64,
    soft: bool,
}

fn random_net(input: usize, output: usize, rng: &mut Stream) -> NetBundle {
    let mut sizes = vec![input];
    for _ in 0..rng.random_range(1..3) {
        sizes.push(rng.random_range(3..8));
    }
    sizes.push(output);
    let mut net = NetBundle::new(&sizes, rng.random_bool(0.7), FinalInit::Orthogonal, rng).unwrap();
    for t in net.online.iter_mut() {
        for v in t.data_mut() {
            *v += 0.3 * normal(rng);
        }
    }
    net
}

fn random_head(input: usize, output: usize, kind: HeadKind, rng: &mut Stream) -> PolicyHead {
    let hidden: Vec<usize> = (0..rng.random_range(1..3)).map(|_| rng.random_range(3..8)).collect();
    let mut head = PolicyHead::new(input, &hidden, output, kind, rng.random_bool(0.7), rng).unwrap();
    for t in head.params_mut() {
        for v in t.data_mut() {
            *v += 0.5 * normal(rng);
        }
    }
    head
}

impl Model {
    fn random(kind: LossKind, rng: &mut Stream) -> Self {
        let rows = rng.random_range(2..7);
        let din = rng.random_range(1..5);
        let dout = rng.random_range(1..4);
        let x = random_tensor(&[rows, din], 1.0, rng);
        let mut m = Model {
            kind,
            net: random_net(din, 1, rng),
            head: None,
            phi: None,
            x,
            target: random_tensor(&[rows, 1], 1.0, rng),
            weights: Tensor::zeros(&[rows, 1]),
            tau: rng.random_range(0.05..0.95),
            alpha: rng.random_range(0.0..2.0),
            scale: rng.random_range(0.5..2.0),
            soft: rng.random_bool(0.5),
        };
        match kind {
            LossKind::Expectile => {}
            LossKind::AwrGaussian | LossKind::AwrCategorical | LossKind::Ddpgbc => {
                let cat = kind == LossKind::AwrCategorical || (kind == LossKind::Ddpgbc && rng.random_bool(0.3));
                let hk = if cat { HeadKind::Categorical } else { HeadKind::Gaussian };
                let k = if cat { dout + 1 } else { dout };
                m.head = Some(random_head(din, k, hk, rng));
                m.target = if cat {
                    let mut t = Tensor::zeros(&[rows, k]);
                    for r in 0..rows {
                        t.row_mut(r)[rng.random_range(0..k)] = 1.0;
                    }
                    t
                } else {
                    random_tensor(&[rows, k], 1.0, rng)
                };
                let adv = random_tensor(&[rows, 1], 1.0, rng);
                m.weights = arl_core::agents::awr_weights(&adv, rng.random_range(0.5..3.0), 100.0);
                if kind == LossKind::Ddpgbc {
                    m.net = random_net(din + k, 1, rng);
                }
            }
            LossKind::OptionValue => {
                let d = rng.random_range(2..5);
                m.phi = Some(random_net(din, d, rng));
                m.net = random_net(din + d, 1, rng);
            }
        }
        m
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self.net.online.iter_mut().collect();
        if let Some(h) = &mut self.head {
            out.extend(h.params_mut());
        }
        if let Some(p) = &mut self.phi {
            out.extend(p.online.iter_mut());
        }
        out.push(&mut self.x);
        out
    }

    /// Builds the loss; the returned leaves follow `params_mut` order.
    fn loss(&self) -> (Graph, Var, Vec<Var>) {
        let mut g = Graph::new();
        let nb = self.net.bind(&mut g, false, true);
        let mut leaves: Vec<Var> = nb.vars().to_vec();
        let hb = self.head.as_ref().map(|h| h.bind(&mut g, true));
        if let Some(b) = &hb {
            leaves.extend(b.net.vars());
            leaves.extend(b.log_std);
        }
        let pb = self.phi.as_ref().map(|p| p.bind(&mut g, false, true));
        if let Some(b) = &pb {
            leaves.extend(b.vars());
        }
        let x = g.param(self.x.clone(), true);
        leaves.push(x);
        let loss = match self.kind {
            LossKind::Expectile => {
                let v = self.net.forward_graph(&mut g, &nb, x).unwrap();
                let t = g.constant(self.target.clone());
                let diff = g.sub(t, v).unwrap();
                let e = g.expectile(diff, self.tau);
                g.mean_all(e)
            }
            LossKind::AwrGaussian | LossKind::AwrCategorical => {
                let head = self.head.as_ref().unwrap();
                let out = head.forward_graph(&mut g, hb.as_ref().unwrap(), x).unwrap();
                let logp = head.log_prob_graph(&mut g, out, &self.target).unwrap();
                let w = g.constant(self.weights.clone());
                let wl = g.mul(w, logp).unwrap();
                let m = g.mean_all(wl);
                g.scale(m, -1.0)
            }
            LossKind::Ddpgbc => {
                let head = self.head.as_ref().unwrap();
                let out = head.forward_graph(&mut g, hb.as_ref().unwrap(), x).unwrap();
                let logp = head.log_prob_graph(&mut g, out, &self.target).unwrap();
                let mu = head.critic_action_graph(&mut g, out);
                let qin = g.concat(&[x, mu]).unwrap();
                let q = self.net.forward_graph(&mut g, &nb, qin).unwrap();
                let mq = g.mean_all(q);
                let ml = g.mean_all(logp);
                let a = g.scale(mq, -1.0 / self.scale);
                let b = g.scale(ml, -self.alpha);
                g.add(a, b).unwrap()
            }
            LossKind::OptionValue => {
                let phi = self.phi.as_ref().unwrap();
                let e = phi.forward_graph(&mut g, pb.as_ref().unwrap(), x).unwrap();
                let en = if self.soft { g.soft_normalize(e) } else { g.length_normalize(e) };
                let vin = g.concat(&[x, en]).unwrap();
                let v = self.net.forward_graph(&mut g, &nb, vin).unwrap();
                let t = g.constant(self.target.clone());
                let diff = g.sub(v, t).unwrap();
                let sq = g.square(diff);
                g.mean_all(sq)
            }
        };
        (g, loss, leaves)
    }

    fn value(&self) -> f64 {
        let (g, l, _) = self.loss();
        g.value(l).item().unwrap()
    }
}

fn criterion_1() -> Outcome {
    const H: f64 = 1e-5;
    let kinds = [
        LossKind::Expectile,
        LossKind::AwrGaussian,
        LossKind::AwrCategorical,
        LossKind::Ddpgbc,
        LossKind::OptionValue,
    ];
    let mut rng = stream(1, 0);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let draws = 150;
    for i in 0..draws {
        let mut m = Model::random(kinds[i % kinds.len()], &mut rng);
        let (g, loss, leaves) = m.loss();
        let grads = g.backward(loss).unwrap();
        let analytic: Vec<Tensor> = leaves.iter().map(|&v| grads.get(v)).collect();
        for (li, a) in analytic.iter().enumerate() {
            let picks: Vec<usize> = (0..a.len().min(6)).map(|_| rng.random_range(0..a.len())).collect();
            for j in picks {
                let orig = m.params_mut()[li].data()[j];
                m.params_mut()[li].data_mut()[j] = orig + H;
                let up = m.value();
                m.params_mut()[li].data_mut()[j] = orig - H;
                let down = m.value();
                m.params_mut()[li].data_mut()[j] = orig;
                let fd = (up - down) / (2.0 * H);
                let an = a.data()[j];
                let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6);
                worst = worst.max(rel);
                checked += 1;
            }
        }
    }
    outcome(
        worst <= 1e-4,
        format!("{draws} draws, {checked} partials, worst relative error {worst:.2e}"),
    )
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let strategy = (
        prop_oneof![Just(2usize), Just(10usize)],
        proptest::collection::vec(-1.0f64..1.0, 10),
        -6.0f64..0.9,
    );
    let mut runner = TestRunner::new(Config {
        cases: 10_000,
        failure_persistence: None,
        ..Config::default()
    });
    let res = runner.run(&strategy, |(d, dir, log_r)| {
        let raw = &dir[..d];
        let n: f64 = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assume!(n > 1e-3);
        let r = 10f64.powf(log_r);
        let v: Vec<f64> = raw.iter().map(|x| x / n * r).collect();
        let root = (d as f64).sqrt();

        let len = length_normalize(&v, d).unwrap();
        prop_assert!(!len.degenerate);
        let sq: f64 = len.values.iter().map(|x| x * x).sum();
        prop_assert!((sq - d as f64).abs() <= 1e-9, "squared norm {}", sq);

        let soft = soft_normalize(&v, d).unwrap();
        let norm: f64 = soft.iter().map(|x| x * x).sum::<f64>().sqrt();
        let vn: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let want = vn.tanh() * root;
        prop_assert!((norm - want).abs() <= 1e-12 * want.max(1e-300), "soft norm {} vs {}", norm, want);
        prop_assert!(norm < root);

        let mut g = Graph::new();
        let x = g.constant(Tensor::matrix(1, d, v.clone()).unwrap());
        let ln = g.length_normalize(x);
        let sn = g.soft_normalize(x);
        prop_assert_eq!(g.value(ln).data(), &len.values[..]);
        prop_assert_eq!(g.value(sn).data(), &soft[..]);
        Ok(())
    });
    match res {
        Ok(()) => outcome(true, "10000 vectors, d in {2, 10}, norms up to 8"),
        Err(e) => outcome(false, e.to_string()),
    }
}

// ---------------------------------------------------------------- 3

fn small_spec(v: Variant) -> AgentSpec {
    let mut s = AgentSpec::preset(v, Profile::Desk);
    s.batch_size = 32;
    s
}

fn small_data() -> Dataset {
    let env = builtin("pointmaze15").unwrap();
    generate_dataset(&env, Style::Stitch, 40, 50, 0.1, 2).unwrap()
}

fn criterion_3() -> Outcome {
    let ds = small_data();
    let agent = train(&small_spec(Variant::Arle), &ds, 50, 0).unwrap().agent;
    let mut rng = stream(3, 0);
    // Multiples of 1/8 in [-8, 8): sums and differences are exact.
    let mut dy = || rng.random_range(-64i32..64) as f64 / 8.0;
    let mut bad = Vec::new();
    let k = 1000;
    let mut s = Vec::new();
    let mut gs = Vec::new();
    let mut st = Vec::new();
    let mut gt = Vec::new();
    for _ in 0..k {
        let p: Vec<f64> = (0..6).map(|_| dy()).collect();
        s.extend_from_slice(&p[0..2]);
        gs.extend_from_slice(&p[2..4]);
        st.extend_from_slice(&[p[0] + p[4], p[1] + p[5]]);
        gt.extend_from_slice(&[p[2] + p[4], p[3] + p[5]]);
    }
    let m = |v: Vec<f64>| Tensor::matrix(k, 2, v).unwrap();
    let (s, gs, st, gt) = (m(s), m(gs), m(st), m(gt));
    let a = random_tensor(&[k, 2], 1.0, &mut stream(3, 1));
    let v0 = agent.low_value(&s, &gs).unwrap();
    let v1 = agent.low_value(&st, &gt).unwrap();
    let e0 = agent.embed(&s, &gs, false).unwrap();
    let e1 = agent.embed(&st, &gt, false).unwrap();
    let i0 = agent.low_value_input(&s, &gs).unwrap();
    let i1 = agent.low_value_input(&st, &gt).unwrap();
    let q0 = agent.low_q_input(&s, &gs, &a).unwrap();
    let q1 = agent.low_q_input(&st, &gt, &a).unwrap();
    for r in 0..k {
        let same = v0.row(r) == v1.row(r)
            && e0.row(r) == e1.row(r)
            && i0.row(r) == i1.row(r)
            && q0.row(r)[2..] == q1.row(r)[2..];
        if !same {
            bad.push(r);
        }
    }
    outcome(
        bad.is_empty(),
        format!("{k} dyadic triples, {} differ (V_l, V_l input, phi output, Q_l displacement and action columns)", bad.len()),
    )
}

// ---------------------------------------------------------------- 4

fn phi_params(a: &Agent) -> Vec<Tensor> {
    a.net_params(NetId::Phi).unwrap().into_iter().cloned().collect()
}

fn criterion_4() -> Outcome {
    let ds = small_data();
    let mut failures = Vec::new();
    let variants = [Variant::Hiql1vr, Variant::Hiql2vr, Variant::Arli, Variant::Arle];
    for v in variants {
        let spec = small_spec(v);
        let mut agent = train(&spec, &ds, 20, 0).unwrap().agent;
        let b = sample_batch(&ds, spec.batch_size, &spec.policy_cfg(), spec.n, &mut stream(4, 0)).unwrap();
        let before = phi_params(&agent);
        update_high_policy(&mut agent, &b).unwrap();
        let mid = phi_params(&agent);
        fit_high_q(&mut agent, &b).unwrap();
        if before != mid || before != phi_params(&agent) {
            failures.push(v.name());
        }
    }
    outcome(
        failures.is_empty(),
        format!("phi bit-identical after update_high_policy and fit_high_q for {} variants; changed: {failures:?}", variants.len()),
    )
}

// ---------------------------------------------------------------- 5

fn random_policy(mdp: &FiniteMDP, rng: &mut Stream) -> Policy {
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

fn criterion_5() -> Outcome {
    let records = sweep(24, 25, 5).unwrap();
    let masked = records
        .iter()
        .filter(|r| matches!(r.behaviour, Behaviour::RegionMasked { .. }))
        .count();
    let mut violations = Vec::new();
    for r in &records {
        for m in &r.maps {
            let rep = &m.report;
            if !(kappa_le(&rep.kappa_h_rep, &rep.kappa_h) && kappa_le(&rep.kappa_l_rep, &rep.kappa_l)) {
                violations.push(format!("{}:{}", r.instance, m.map));
            }
        }
    }
    let small = records.iter().all(|r| r.mdp.n_states <= 25 && r.mdp.n_actions <= 4);
    let mut rng = stream(5, 1);
    let mut series_err: f64 = 0.0;
    for r in &records {
        let p = random_policy(&r.mdp, &mut rng);
        let exact = occupancy(&r.mdp, &p, r.mdp.gamma).unwrap();
        let series = series_occupancy(&r.mdp, &p, r.mdp.gamma, &uniform_init(&r.mdp)).unwrap();
        series_err = series_err.max(exact.max_abs_diff(&series));
    }
    let mut mc_err: f64 = 0.0;
    for r in records.iter().take(3) {
        let p = random_policy(&r.mdp, &mut rng);
        let exact = occupancy(&r.mdp, &p, r.mdp.gamma).unwrap();
        let mc = monte_carlo_occupancy(&r.mdp, &p, r.mdp.gamma, 1_000_000, &mut rng).unwrap();
        mc_err = mc_err.max(exact.max_abs_diff(&mc));
    }
    outcome(
        violations.is_empty() && small && masked > 0 && masked < records.len() && series_err <= 1e-10 && mc_err <= 0.01,
        format!(
            "{} instances ({masked} region-masked), {} abstraction cases, violations {violations:?}; series error {series_err:.1e}, Monte-Carlo error {mc_err:.2e}",
            records.len(),
            records.iter().map(|r| r.maps.len()).sum::<usize>()
        ),
    )
}

// ---------------------------------------------------------------- 6

fn cycle_batch(points: &[[f64; 2]]) -> (SampledBatch, Vec<(usize, usize)>) {
    let k = points.len();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|s| (0..k).map(move |g| (s, g))).collect();
    let m = pairs.len();
    let col = |f: &dyn Fn(usize, usize) -> [f64; 2]| {
        Tensor::matrix(m, 2, pairs.iter().flat_map(|&(s, g)| f(s, g)).collect()).unwrap()
    };
    let batch = SampledBatch {
        s: col(&|s, _| points[s]),
        a: Tensor::zeros(&[m, 2]),
        s_next: col(&|s, _| points[(s + 1) % k]),
        waypoint: col(&|s, _| points[(s + 1) % k]),
        goal: col(&|_, g| points[g]),
        reward: Tensor::matrix(m, 1, pairs.iter().map(|&(s, g)| if s == g { 0.0 } else { -1.0 }).collect()).unwrap(),
        provenance: vec![Provenance::Random; m],
        anchors: vec![(0, 0); m],
        waypoint_steps: vec![0; m],
        goal_locs: vec![(0, 0); m],
    };
    (batch, pairs)
}

fn random_maze(rng: &mut Stream) -> MazeSpec {
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

fn criterion_6() -> Outcome {
    let k = 5;
    let gamma = 0.5;
    let points: Vec<[f64; 2]> = (0..k)
        .map(|i| {
            let a = i as f64 * std::f64::consts::TAU / k as f64;
            [2.0 * a.cos(), 2.0 * a.sin()]
        })
        .collect();
    let (batch, pairs) = cycle_batch(&points);
    let mut spec = AgentSpec::preset(Variant::Hiql2v, Profile::Desk);
    spec.tau = 0.5;
    spec.gamma = gamma;
    spec.lr = 1e-3;
    spec.target_rate = 0.05;
    let mut agent = Agent::new(spec, 2, 2, 0).unwrap();
    for step in 0..5000 {
        if step == 3000 {
            agent.spec.lr = 1e-4;
        }
        update_high_value_ivl(&mut agent, &batch).unwrap();
    }
    let v = agent.high_value(&batch.s, &batch.goal).unwrap();
    let mut worst: f64 = 0.0;
    for g in 0..k {
        let mut a = nalgebra::DMatrix::<f64>::identity(k, k);
        let mut b = nalgebra::DVector::<f64>::zeros(k);
        for s in 0..k {
            a[(s, (s + 1) % k)] -= gamma;
            b[s] = if s == g { 0.0 } else { -1.0 };
        }
        let fp = a.lu().solve(&b).unwrap();
        for (i, &(s, gg)) in pairs.iter().enumerate() {
            if gg == g {
                worst = worst.max((v.data()[i] - fp[s]).abs());
            }
        }
    }

    let mut rng = stream(6, 0);
    let mut mismatches = 0;
    let mut paths = 0;
    for _ in 0..10 {
        let maze = random_maze(&mut rng);
        let mdp = FiniteMDP::from_maze(&maze, 0.95).unwrap();
        let cells = mdp.layout.clone().unwrap().cells;
        for (g, &gc) in cells.iter().enumerate() {
            let sol = value_iteration(&mdp, g).unwrap();
            let flood = maze.distances_to(gc);
            for (s, &sc) in cells.iter().enumerate() {
                paths += 1;
                if greedy_path_length(&mdp, &sol.policy, s, g) != flood[maze.index(sc)] {
                    mismatches += 1;
                }
            }
        }
    }
    outcome(
        worst <= 1e-2 && mismatches == 0,
        format!("V_h max error {worst:.2e} on the 5-cycle; {mismatches}/{paths} greedy path lengths differ from flood fill"),
    )
}

// ---------------------------------------------------------------- 7

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/desk_protocol.json")
}

fn criterion_7() -> Outcome {
    let plan = desk_plan().unwrap();
    let path = fixture();
    if std::env::var_os("ARL_RUN_PROTOCOL").is_some() {
        run_protocol(&plan, &path, |r| println!("  {} seed {} {:.0}s", r.variant, r.seed, r.wall_secs)).unwrap();
    }
    let report = match load_report(&path, &plan) {
        Ok(Some(r)) if r.is_complete(&plan) => r,
        Ok(Some(r)) => {
            return outcome(false, format!("protocol cache holds {}/{} runs", r.runs.len(), plan.agents.len() * plan.seeds.len()))
        }
        Ok(None) => return outcome(false, format!("no protocol cache for this plan at {}", path.display())),
        Err(e) => return outcome(false, e.to_string()),
    };
    let adj: Vec<(Variant, f64)> = Variant::ALL.iter().map(|&v| (v, report.seed_mean(v, &report.adjacent))).collect();
    let a_ok = adj.iter().all(|(_, m)| *m >= 0.9);
    let far_arli = report.seed_mean(Variant::Arli, &report.far);
    let far_iql = report.seed_mean(Variant::Iql, &report.far);
    let b_ok = !report.far.is_empty() && far_arli >= far_iql;
    let arle_cached = report.runs_of(Variant::Arle).all(|r| r.value_spread == 0.0);
    let h2v_cached = report.runs_of(Variant::Hiql2v).all(|r| r.value_spread > 0.0);

    // The spread contrast again on freshly trained agents.
    let env = plan.environment().unwrap();
    let ds = plan.make_dataset(&env).unwrap();
    let live = |v: Variant| {
        let a = train(&AgentSpec::preset(v, Profile::Desk), &ds, 300, 0).unwrap().agent;
        translated_value_spread(&a, &env, &SPREAD_DISPLACEMENTS).unwrap()
    };
    let (arle_live, h2v_live) = (live(Variant::Arle), live(Variant::Hiql2v));
    let c_ok = arle_cached && h2v_cached && arle_live == 0.0 && h2v_live > 0.0;
    let slowest = report.runs.iter().map(|r| r.wall_secs).fold(0.0, f64::max);
    let t_ok = slowest <= 900.0;
    let fmt_adj: Vec<String> = adj.iter().map(|(v, m)| format!("{v} {m:.2}")).collect();
    outcome(
        a_ok && b_ok && c_ok && t_ok,
        format!(
            "(a) adjacent [{}] {}; (b) far goals {:?}: arli {far_arli:.3} vs iql {far_iql:.3} {}; (c) spread arle {arle_live:e} hiql2v {h2v_live:.2e} (cached all-zero {arle_cached}, all-positive {h2v_cached}) {}; slowest run {slowest:.0}s {}",
            fmt_adj.join(", "),
            ok(a_ok),
            report.far,
            ok(b_ok),
            ok(c_ok),
            ok(t_ok)
        ),
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAILED"
    }
}

// ---------------------------------------------------------------- 8

fn det_config(out: &Path, dataset: &Path) -> RunConfig {
    let set = |k: &str, v: &str| (k.to_string(), parse_value(v));
    RunConfig::build(
        None,
        &[
            set("out", &format!("{:?}", out.display().to_string())),
            set("dataset.path", &format!("{:?}", dataset.display().to_string())),
            set("variants", r#"["iql", "hiql1vr", "arle"]"#),
            set("seeds", "[0, 1]"),
            set("train.steps", "60"),
            set("agent.batch_size", "16"),
            set("agent.log_every", "10"),
            set("eval.runs", &format!("{:?}", out.display().to_string())),
            set("eval.episodes", "2"),
            set("eval.tasks", "[0, 5]"),
        ],
    )
    .unwrap()
}

fn run_outputs(root: &Path, cfg: &RunConfig) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    for &v in &cfg.variants {
        for &s in &cfg.seeds {
            out.push(std::fs::read(run_dir(root, v, s).join(METRICS_FILE)).unwrap());
            out.push(std::fs::read(run_dir(root, v, s).join("checkpoint.bin")).unwrap());
        }
    }
    out
}

fn criterion_8() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let ds_path = tmp.path().join("dataset.bin");
    small_data().save(&ds_path).unwrap();
    let mut outputs = Vec::new();
    for (i, jobs) in [(0, 1usize), (1, 2)] {
        let dir = tmp.path().join(format!("run{i}"));
        let mut cfg = det_config(&dir, &ds_path);
        cfg.jobs = jobs;
        cmd_train(&cfg).unwrap();
        let csv = std::fs::read(cmd_eval(&cfg).unwrap()).unwrap();
        outputs.push((run_outputs(&dir, &cfg), csv));
    }
    let logs_same = outputs[0].0 == outputs[1].0;
    let csv_same = outputs[0].1 == outputs[1].1;
    outcome(
        logs_same && csv_same,
        format!(
            "{} metric logs and checkpoints identical: {logs_same}; results CSV ({} bytes) identical: {csv_same}",
            outputs[0].0.len() / 2,
            outputs[0].1.len()
        ),
    )
}

// ---------------------------------------------------------------- 9

fn chi_square_p(counts: &[u64], probs: &[f64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let mut stat = 0.0;
    let mut bins = 0;
    let (mut oc, mut ep) = (0.0, 0.0);
    // Pool the tail so that every bin expects at least 5 draws.
    for (c, p) in counts.iter().zip(probs) {
        oc += *c as f64;
        ep += p * total as f64;
        if ep >= 5.0 {
            stat += (oc - ep) * (oc - ep) / ep;
            bins += 1;
            oc = 0.0;
            ep = 0.0;
        }
    }
    if ep > 0.0 {
        stat += (oc - ep) * (oc - ep) / ep;
        bins += 1;
    }
    if bins < 2 {
        return 1.0;
    }
    1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(stat)
}

fn criterion_9() -> Outcome {
    let ds = small_data();
    let draws = 100_000u64;
    let gamma = 0.99;
    let presets = [
        ("value", GoalSampleConfig::value(gamma)),
        ("low_value", GoalSampleConfig::low_value(0.8)),
        ("high_value", GoalSampleConfig::high_value(gamma)),
        ("policy", GoalSampleConfig::policy(gamma)),
    ];
    let mut rng = stream(9, 0);
    let mut worst_sigma: f64 = 0.0;
    let mut fails = Vec::new();
    for (name, cfg) in presets {
        let mut counts = [0u64; 3];
        for _ in 0..draws {
            let (traj, t) = ds.transition(rng.random_range(0..ds.num_transitions()));
            let (_, tag) = sample_goal(&ds, traj, t, &cfg, &mut rng);
            counts[tag as usize] += 1;
        }
        for (c, p) in counts.iter().zip([cfg.p_cur, cfg.p_traj, cfg.p_rand]) {
            let mean = draws as f64 * p;
            let sd = (draws as f64 * p * (1.0 - p)).sqrt();
            let dev = (*c as f64 - mean).abs();
            if sd == 0.0 {
                if dev > 0.0 {
                    fails.push(format!("{name}: {c} draws from an empty branch"));
                }
                continue;
            }
            worst_sigma = worst_sigma.max(dev / sd);
            if dev > 3.0 * sd {
                fails.push(format!("{name}: {c} vs {mean}"));
            }
        }
    }
    let mut worst_p: f64 = 1.0;
    for (k, g) in [(50usize, 0.99), (50, 0.8), (10, 0.8), (7, 0.5)] {
        let mut counts = vec![0u64; k];
        for _ in 0..draws {
            counts[truncated_geometric(k, g, &mut rng) - 1] += 1;
        }
        let z = 1.0 - g.powi(k as i32);
        let probs: Vec<f64> = (0..k).map(|j| g.powi(j as i32) * (1.0 - g) / z).collect();
        let p = chi_square_p(&counts, &probs);
        worst_p = worst_p.min(p);
        if p < 1e-3 {
            fails.push(format!("geometric k={k} gamma={g}: p={p:.2e}"));
        }
    }
    // The same offsets through the trajectory branch of the sampler.
    let cfg = GoalSampleConfig::new(0.0, 1.0, 0.0, true, 0.8).unwrap();
    let t0 = ds.horizon - 10;
    let mut counts = vec![0u64; 10];
    for _ in 0..draws {
        let ((_, t), _) = sample_goal(&ds, 3, t0, &cfg, &mut rng);
        counts[t - t0 - 1] += 1;
    }
    let probs: Vec<f64> = (0..10).map(|j| 0.8f64.powi(j) * 0.2 / (1.0 - 0.8f64.powi(10))).collect();
    let p = chi_square_p(&counts, &probs);
    worst_p = worst_p.min(p);
    if p < 1e-3 {
        fails.push(format!("sampler offsets: p={p:.2e}"));
    }
    outcome(
        fails.is_empty(),
        format!("{draws} draws per check; worst provenance deviation {worst_sigma:.2} sigma, smallest chi-square p {worst_p:.3}; {fails:?}"),
    )
}

// ----------------------------------------------------------------

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("gradient correctness", criterion_1),
        ("normalization invariants", criterion_2),
        ("translation invariance", criterion_3),
        ("stopgrad contract", criterion_4),
        ("concentrability inequalities", criterion_5),
        ("tabular fixed points", criterion_6),
        ("desk-scale comparison", criterion_7),
        ("determinism", criterion_8),
        ("sampler distributions", criterion_9),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    if std::env::args().any(|a| a == "--list") {
        for (i, (name, _)) in criteria.iter().enumerate() {
            println!("criterion_{}_{}: test", i + 1, name.replace(' ', "_"));
        }
        return;
    }
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let o = f();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {n} {}: {name} ({:.1}s): {}",
            if o.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            o.detail
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
