//! Maze layouts, the text format and flood-fill distances.
//!
//! Text format: `key: value` header lines, a `---` separator, then one grid
//! row per line. Grid symbols: `#` wall, `.` free, `S` start region, `G`
//! goal region, `T` teleport entry pad, `E` teleport exit cell. Every pad
//! sends the agent to one of the `E` cells chosen uniformly at random.
//!
//! Header keys: `id`, `continuous` (true/false), `max_step`, `goal_radius`
//! and any number of `task: r,c r,c` lines (start cell, goal cell).

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A grid cell, `row` counted from the top.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    /// Centre point `(x, y) = (col + 0.5, row + 0.5)`.
    pub fn center(self) -> [f64; 2] {
        [self.col as f64 + 0.5, self.row as f64 + 0.5]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Teleport {
    pub entry: Cell,
    pub exits: Vec<Cell>,
}

/// An immutable maze description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MazeSpec {
    pub id: String,
    pub width: usize,
    pub height: usize,
    walls: Vec<bool>,
    pub starts: Vec<Cell>,
    pub goals: Vec<Cell>,
    pub continuous: bool,
    pub teleports: Vec<Teleport>,
    pub max_step: f64,
    pub goal_radius: f64,
    /// Evaluation tasks as (start cell, goal cell).
    pub tasks: Vec<(Cell, Cell)>,
}

/// Discrete moves in action-index order.
pub const MOVES: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

fn parse_cell(s: &str) -> Option<Cell> {
    let (r, c) = s.trim().split_once(',')?;
    Some(Cell::new(r.trim().parse().ok()?, c.trim().parse().ok()?))
}

impl MazeSpec {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let bad = |detail: String| Error::format(origin, detail);
        let mut lines = text.lines();
        let mut id = String::from("maze");
        let mut continuous = true;
        let mut max_step = 0.2;
        let mut goal_radius = 0.5;
        let mut task_text = Vec::new();
        let mut saw_separator = false;
        for line in lines.by_ref() {
            let line = line.trim();
            if line == "---" {
                saw_separator = true;
                break;
            }
            if line.is_empty() || line.starts_with("//") {
                continue;
            }
            let (key, value) = line
                .split_once(':')
                .ok_or_else(|| bad(format!("header line without ':': {line}")))?;
            let value = value.trim();
            match key.trim() {
                "id" => id = value.to_string(),
                "continuous" => {
                    continuous = value
                        .parse()
                        .map_err(|_| bad(format!("continuous must be true/false, got {value}")))?
                }
                "max_step" => {
                    max_step = value.parse().map_err(|_| bad(format!("bad max_step {value}")))?
                }
                "goal_radius" => {
                    goal_radius = value
                        .parse()
                        .map_err(|_| bad(format!("bad goal_radius {value}")))?
                }
                "task" => task_text.push(value.to_string()),
                other => return Err(bad(format!("unknown header key {other}"))),
            }
        }
        if !saw_separator {
            return Err(bad("missing '---' separator".into()));
        }
        let rows: Vec<&str> = lines.map(str::trim_end).filter(|l| !l.is_empty()).collect();
        if rows.is_empty() {
            return Err(bad("empty grid".into()));
        }
        let width = rows[0].chars().count();
        let height = rows.len();
        let mut walls = Vec::with_capacity(width * height);
        let (mut starts, mut goals, mut entries, mut exits) = (vec![], vec![], vec![], vec![]);
        for (r, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(bad(format!("row {r} has a different width")));
            }
            for (c, ch) in row.chars().enumerate() {
                let cell = Cell::new(r, c);
                match ch {
                    '#' => walls.push(true),
                    '.' => walls.push(false),
                    'S' => {
                        walls.push(false);
                        starts.push(cell);
                    }
                    'G' => {
                        walls.push(false);
                        goals.push(cell);
                    }
                    'T' => {
                        walls.push(false);
                        entries.push(cell);
                    }
                    'E' => {
                        walls.push(false);
                        exits.push(cell);
                    }
                    other => return Err(bad(format!("unknown grid symbol {other:?}"))),
                }
            }
        }
        if !entries.is_empty() && exits.is_empty() {
            return Err(bad("teleport pads without exit cells".into()));
        }
        let teleports = entries
            .into_iter()
            .map(|entry| Teleport {
                entry,
                exits: exits.clone(),
            })
            .collect();
        let mut tasks = Vec::new();
        for t in task_text {
            let mut parts = t.split_whitespace();
            let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(bad(format!("task must be 'r,c r,c', got {t}")));
            };
            let (Some(a), Some(b)) = (parse_cell(a), parse_cell(b)) else {
                return Err(bad(format!("bad task cells {t}")));
            };
            tasks.push((a, b));
        }
        let spec = Self {
            id,
            width,
            height,
            walls,
            starts,
            goals,
            continuous,
            teleports,
            max_step,
            goal_radius: if continuous { goal_radius } else { 0.0 },
            tasks,
        };
        spec.validate().map_err(|e| bad(e.to_string()))?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    /// Structural checks: a free cell exists, listed cells are free and
    /// every goal is reachable from every start.
    pub fn validate(&self) -> Result<()> {
        if !self.walls.iter().any(|w| !w) {
            return Err(Error::config("maze has no free cell"));
        }
        if self.continuous && !(self.max_step > 0.0 && self.max_step < 1.0) {
            return Err(Error::config("max_step must lie in (0, 1)"));
        }
        let listed = self
            .starts
            .iter()
            .chain(&self.goals)
            .chain(self.tasks.iter().flat_map(|(a, b)| [a, b]));
        for c in listed {
            if !self.is_free(*c) {
                return Err(Error::config(format!("cell {c:?} is not free")));
            }
        }
        for &g in &self.goals {
            let field = self.distances_to(g);
            for &s in &self.starts {
                if field[self.index(s)].is_none() {
                    return Err(Error::Unreachable(format!("goal {g:?} from start {s:?}")));
                }
            }
        }
        for &(s, g) in &self.tasks {
            if self.distances_to(g)[self.index(s)].is_none() {
                return Err(Error::Unreachable(format!("task goal {g:?} from {s:?}")));
            }
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.width * self.height
    }

    pub fn index(&self, c: Cell) -> usize {
        c.row * self.width + c.col
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index / self.width, index % self.width)
    }

    pub fn in_bounds(&self, r: isize, c: isize) -> bool {
        r >= 0 && c >= 0 && (r as usize) < self.height && (c as usize) < self.width
    }

    pub fn is_free(&self, c: Cell) -> bool {
        c.row < self.height && c.col < self.width && !self.walls[self.index(c)]
    }

    pub fn free_cells(&self) -> Vec<Cell> {
        (0..self.cell_count())
            .map(|i| self.cell_at(i))
            .filter(|&c| self.is_free(c))
            .collect()
    }

    /// The cell containing a continuous point, if it lies inside the grid.
    pub fn cell_of(&self, p: [f64; 2]) -> Option<Cell> {
        let (x, y) = (p[0].floor(), p[1].floor());
        if x < 0.0 || y < 0.0 {
            return None;
        }
        let c = Cell::new(y as usize, x as usize);
        (c.row < self.height && c.col < self.width).then_some(c)
    }

    pub fn point_is_free(&self, p: [f64; 2]) -> bool {
        self.cell_of(p).is_some_and(|c| self.is_free(c))
    }

    /// Free neighbour reached by discrete move `a`, if any.
    pub fn neighbor(&self, c: Cell, a: usize) -> Option<Cell> {
        let (dr, dc) = MOVES[a];
        let (r, col) = (c.row as isize + dr, c.col as isize + dc);
        if !self.in_bounds(r, col) {
            return None;
        }
        let n = Cell::new(r as usize, col as usize);
        self.is_free(n).then_some(n)
    }

    pub fn teleport_at(&self, c: Cell) -> Option<&Teleport> {
        self.teleports.iter().find(|t| t.entry == c)
    }

    /// Breadth-first flood-fill distances (in moves) from every cell to
    /// `target`, ignoring teleport pads. `None` marks walls and
    /// unreachable cells.
    pub fn distances_to(&self, target: Cell) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.cell_count()];
        if !self.is_free(target) {
            return dist;
        }
        let mut queue = VecDeque::new();
        dist[self.index(target)] = Some(0);
        queue.push_back(target);
        while let Some(c) = queue.pop_front() {
            let d = dist[self.index(c)].expect("queued cells have distances");
            for a in 0..4 {
                if let Some(n) = self.neighbor(c, a) {
                    let i = self.index(n);
                    if dist[i].is_none() {
                        dist[i] = Some(d + 1);
                        queue.push_back(n);
                    }
                }
            }
        }
        dist
    }

    pub fn distance(&self, from: Cell, to: Cell) -> Option<usize> {
        self.distances_to(to)[self.index(from)]
    }

    /// Stable content hash input: the layout and every parameter.
    pub fn canonical_text(&self) -> String {
        let mut out = format!(
            "id={};continuous={};max_step={};goal_radius={};w={};h={}\n",
            self.id, self.continuous, self.max_step, self.goal_radius, self.width, self.height
        );
        for r in 0..self.height {
            for c in 0..self.width {
                let cell = Cell::new(r, c);
                let ch = if !self.is_free(cell) {
                    '#'
                } else if self.starts.contains(&cell) {
                    'S'
                } else if self.goals.contains(&cell) {
                    'G'
                } else if self.teleport_at(cell).is_some() {
                    'T'
                } else if self.teleports.iter().any(|t| t.exits.contains(&cell)) {
                    'E'
                } else {
                    '.'
                };
                out.push(ch);
            }
            out.push('\n');
        }
        for (a, b) in &self.tasks {
            out.push_str(&format!("task {},{} {},{}\n", a.row, a.col, b.row, b.col));
        }
        out
    }

    /// An open `w x h` grid with no walls and no tasks.
    pub fn open_grid(id: &str, width: usize, height: usize, continuous: bool) -> Self {
        Self {
            id: id.to_string(),
            width,
            height,
            walls: vec![false; width * height],
            starts: vec![],
            goals: vec![],
            continuous,
            teleports: vec![],
            max_step: 0.2,
            goal_radius: if continuous { 0.5 } else { 0.0 },
            tasks: vec![],
        }
    }

    /// Builds a discrete maze from a wall mask (row-major).
    pub fn from_walls(id: &str, width: usize, height: usize, walls: Vec<bool>, continuous: bool) -> Result<Self> {
        if walls.len() != width * height {
            return Err(Error::shape("wall mask size does not match grid"));
        }
        let mut spec = Self::open_grid(id, width, height, continuous);
        spec.walls = walls;
        spec.validate()?;
        Ok(spec)
    }
}

const POINTMAZE15: &str = "\
id: pointmaze15
continuous: true
max_step: 0.2
goal_radius: 0.5
task: 1,1 1,2
task: 5,3 5,4
task: 9,5 10,5
task: 13,9 13,8
task: 7,13 8,13
task: 1,1 13,13
task: 13,1 1,13
task: 1,7 13,9
task: 11,13 1,3
task: 13,5 1,11
---
###############
#S....#.......#
#.###.#.#####.#
#.#...#.....#.#
#.#.#######.#.#
#.#.......#...#
#.#######.###.#
#.......#.....#
#.#####.#####.#
#.#...#.....#.#
#.#.#.#####.#.#
#...#.....#.#.#
#####.###.#.#.#
#.........#..G#
###############
";

const GRIDMAZE5: &str = "\
id: gridmaze5
continuous: false
task: 0,0 4,4
task: 4,0 0,4
task: 2,2 0,0
task: 0,2 4,2
task: 1,1 1,2
---
S....
.....
.....
.....
....G
";

const TELEPORT9: &str = "\
id: teleport9
continuous: true
task: 1,1 7,7
task: 1,1 1,2
task: 7,1 1,7
task: 3,3 3,4
task: 1,7 7,1
---
#########
#S..#..E#
#.#.#.#.#
#.#...#.#
#.T.#.T.#
#.#...#.#
#.#.#.#.#
#E..#..G#
#########
";

/// Names of the mazes compiled into the crate.
pub const BUILTIN_MAZES: [&str; 3] = ["pointmaze15", "gridmaze5", "teleport9"];

/// Looks up a built-in maze by id, or loads a maze file when `name` is a
/// path to one.
pub fn builtin(name: &str) -> Result<MazeSpec> {
    let text = match name {
        "pointmaze15" => POINTMAZE15,
        "gridmaze5" => GRIDMAZE5,
        "teleport9" => TELEPORT9,
        other => {
            let path = Path::new(other);
            if path.exists() {
                return MazeSpec::load(path);
            }
            return Err(Error::config(format!(
                "unknown env {other}; built-ins are {}",
                BUILTIN_MAZES.join(", ")
            )));
        }
    };
    MazeSpec::parse(text, Path::new(name))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_parse_and_validate() {
        for name in BUILTIN_MAZES {
            let m = builtin(name).unwrap();
            assert_eq!(m.id, name);
            assert!(!m.tasks.is_empty());
        }
        let m = builtin("pointmaze15").unwrap();
        assert_eq!((m.width, m.height), (15, 15));
        // One connected component.
        let free = m.free_cells();
        let field = m.distances_to(free[0]);
        assert!(free.iter().all(|&c| field[m.index(c)].is_some()));
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = "speed: 3\n---\n...\n";
        assert!(matches!(MazeSpec::parse(text, Path::new("x")), Err(Error::Format { .. })));
    }

    #[test]
    fn unreachable_goal_is_rejected() {
        let text = "continuous: false\n---\nS#G\n";
        assert!(MazeSpec::parse(text, Path::new("x")).is_err());
    }

    #[test]
    fn canonical_text_round_trips() {
        let m = builtin("teleport9").unwrap();
        let reparsed = MazeSpec::parse(
            &format!(
                "id: teleport9\ncontinuous: true\n{}---\n{}",
                m.tasks
                    .iter()
                    .map(|(a, b)| format!("task: {},{} {},{}\n", a.row, a.col, b.row, b.col))
                    .collect::<String>(),
                m.canonical_text().lines().skip(1).take(m.height).collect::<Vec<_>>().join("\n")
            ),
            Path::new("x"),
        )
        .unwrap();
        assert_eq!(reparsed, m);
    }
}
