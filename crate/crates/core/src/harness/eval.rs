//! Goal-reaching evaluation with binary success.

use serde::{Deserialize, Serialize};

use crate::agents::Agent;
use crate::envs::{expert_action, Cell, EnvState, MazeSpec};
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Anything that maps `(state, goal)` to an action.
pub trait Controller {
    fn action(&mut self, s: &[f64], g: &[f64]) -> Result<Vec<f64>>;
}

/// An agent deployed with mean (or sampled) actions.
pub struct AgentController<'a> {
    pub agent: &'a Agent,
    pub deterministic: bool,
    pub rng: Stream,
}

impl Controller for AgentController<'_> {
    fn action(&mut self, s: &[f64], g: &[f64]) -> Result<Vec<f64>> {
        Ok(self.agent.act(s, g, self.deterministic, &mut self.rng)?.action)
    }
}

/// The noise-free scripted shortest-path expert.
pub struct ExpertController<'a> {
    spec: &'a MazeSpec,
    cached: Option<(Cell, Vec<Option<usize>>)>,
}

impl<'a> ExpertController<'a> {
    pub fn new(spec: &'a MazeSpec) -> Self {
        Self { spec, cached: None }
    }
}

impl Controller for ExpertController<'_> {
    fn action(&mut self, s: &[f64], g: &[f64]) -> Result<Vec<f64>> {
        let goal = [g[0], g[1]];
        let cell = self
            .spec
            .cell_of(goal)
            .ok_or_else(|| Error::usage(format!("goal {goal:?} is outside the maze")))?;
        if self.cached.as_ref().map(|c| c.0) != Some(cell) {
            self.cached = Some((cell, self.spec.distances_to(cell)));
        }
        let field = &self.cached.as_ref().expect("just filled").1;
        Ok(expert_action(self.spec, field, [s[0], s[1]], goal))
    }
}

/// Outcomes for one evaluation task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalOutcome {
    pub start: Cell,
    pub goal: Cell,
    pub max_steps: usize,
    pub outcomes: Vec<bool>,
    /// Steps taken by each successful episode (`None` on failure).
    pub steps: Vec<Option<usize>>,
}

impl GoalOutcome {
    pub fn successes(&self) -> usize {
        self.outcomes.iter().filter(|&&o| o).count()
    }

    pub fn rate(&self) -> f64 {
        if self.outcomes.is_empty() {
            0.0
        } else {
            self.successes() as f64 / self.outcomes.len() as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub goals: Vec<GoalOutcome>,
}

impl EvalResult {
    /// Mean of the per-goal success rates.
    pub fn mean(&self) -> f64 {
        if self.goals.is_empty() {
            return 0.0;
        }
        self.goals.iter().map(GoalOutcome::rate).sum::<f64>() / self.goals.len() as f64
    }
}

/// Episode budget: four times the optimal path length in environment
/// steps. A continuous maze needs `1 / max_step` steps per cell.
pub fn step_budget(env: &MazeSpec, start: Cell, goal: Cell) -> Result<usize> {
    let d = env
        .distance(start, goal)
        .ok_or_else(|| Error::Unreachable(format!("goal {goal:?} from {start:?}")))?;
    let per_cell = if env.continuous {
        (1.0 / env.max_step).ceil() as usize
    } else {
        1
    };
    Ok(4 * d * per_cell)
}

/// Runs one episode; returns the step at which the goal test fired.
pub fn run_episode(
    ctrl: &mut dyn Controller,
    env: &MazeSpec,
    start: [f64; 2],
    goal: [f64; 2],
    max_steps: usize,
    env_rng: &mut Stream,
) -> Result<Option<usize>> {
    let test = env.goal_test(goal);
    let mut s = EnvState::at(start);
    if test.fires(&s.pos) {
        return Ok(Some(0));
    }
    for t in 1..=max_steps {
        let a = ctrl.action(&s.pos, &goal)?;
        s = env.step(&s, &a, env_rng);
        if test.fires(&s.pos) {
            return Ok(Some(t));
        }
    }
    Ok(None)
}

/// Evaluates `ctrl` on `tasks` (start cell, goal cell) with `episodes`
/// episodes each. `max_steps` overrides the default budget of
/// [`step_budget`]. Start points come from `start_rng`, teleport draws from
/// `env_rng`.
pub fn evaluate(
    ctrl: &mut dyn Controller,
    env: &MazeSpec,
    tasks: &[(Cell, Cell)],
    episodes: usize,
    max_steps: Option<usize>,
    start_rng: &mut Stream,
    env_rng: &mut Stream,
) -> Result<EvalResult> {
    let mut goals = Vec::with_capacity(tasks.len());
    for &(start, goal) in tasks {
        let budget = match max_steps {
            Some(m) => m,
            None => step_budget(env, start, goal)?,
        };
        let mut outcomes = Vec::with_capacity(episodes);
        let mut steps = Vec::with_capacity(episodes);
        for _ in 0..episodes {
            let p = env.start_point(start, start_rng);
            let r = run_episode(ctrl, env, p, goal.center(), budget, env_rng)?;
            outcomes.push(r.is_some());
            steps.push(r);
        }
        goals.push(GoalOutcome {
            start,
            goal,
            max_steps: budget,
            outcomes,
            steps,
        });
    }
    Ok(EvalResult { goals })
}
