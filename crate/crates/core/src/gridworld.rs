//! Craft-style grid world.
//!
//! The world is an obstacle-free rectangle surrounded by a one-cell wall
//! ring. Objects are typed landmarks (`a`..`z`) that stay in place when the
//! agent walks over them; task progress is tracked by the reward machine,
//! never by the environment.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while parsing or generating maps.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MapError {
    #[error("map is empty")]
    Empty,
    #[error("row {row} has {found} columns, expected {expected}")]
    NonRectangular {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("illegal character {ch:?} at row {row}, column {col}")]
    IllegalCharacter { row: usize, col: usize, ch: char },
    #[error("no agent start 'A' in map")]
    NoAgent,
    #[error("second agent start 'A' at row {row}, column {col}")]
    MultipleAgents { row: usize, col: usize },
    #[error("border cell at row {row}, column {col} is not a wall")]
    MissingBorderWall { row: usize, col: usize },
    #[error("interior wall at row {row}, column {col}; only the outer ring may be walls")]
    InteriorWall { row: usize, col: usize },
    #[error("map size {0} is too small (minimum 5)")]
    SizeTooSmall(usize),
    #[error("{requested} objects do not fit on {interior} interior cells")]
    TooManyObjects { requested: usize, interior: usize },
    #[error("invalid object setup {0:?}; expected e.g. \"2a2b2c\"")]
    BadSetup(String),
    #[error("object type {0} is not present on the map")]
    UnknownType(ObjectType),
}

/// Object type, one lowercase ASCII letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "char", into = "char")]
pub struct ObjectType(u8);

impl ObjectType {
    pub fn new(ch: char) -> Option<Self> {
        ch.is_ascii_lowercase().then_some(ObjectType(ch as u8))
    }

    pub fn as_char(self) -> char {
        self.0 as char
    }
}

impl TryFrom<char> for ObjectType {
    type Error = String;

    fn try_from(ch: char) -> Result<Self, Self::Error> {
        ObjectType::new(ch).ok_or_else(|| format!("object type must be a-z, got {ch:?}"))
    }
}

impl From<ObjectType> for char {
    fn from(t: ObjectType) -> char {
        t.as_char()
    }
}

impl fmt::Display for ObjectType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pos {
    pub row: usize,
    pub col: usize,
}

impl Pos {
    pub const fn new(row: usize, col: usize) -> Self {
        Pos { row, col }
    }

    pub fn manhattan(self, other: Pos) -> u32 {
        (self.row.abs_diff(other.row) + self.col.abs_diff(other.col)) as u32
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

/// The four moves of a four-connected grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Action {
        Action::ALL[i]
    }

    fn delta(self) -> (isize, isize) {
        match self {
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EnvState {
    pub pos: Pos,
}

/// Per-type features produced by the labeling function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TypeFeatures {
    /// Manhattan distance to the nearest object of this type.
    pub dist: u32,
    /// Nearest-object distance strictly decreased on this step.
    pub decreased: bool,
    /// Distance to at least one object of this type strictly decreased.
    pub any_decreased: bool,
}

impl TypeFeatures {
    pub fn at_target(&self) -> bool {
        self.dist == 0
    }
}

/// Truth values and numeric features for one transition, keyed by type.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FeatureValuation {
    features: Vec<(ObjectType, TypeFeatures)>,
}

impl FeatureValuation {
    /// Builds a valuation from explicit features. Later entries for the same
    /// type replace earlier ones.
    pub fn from_features(items: impl IntoIterator<Item = (ObjectType, TypeFeatures)>) -> Self {
        let mut features: Vec<(ObjectType, TypeFeatures)> = Vec::new();
        for (t, f) in items {
            match features.iter_mut().find(|(k, _)| *k == t) {
                Some(slot) => slot.1 = f,
                None => features.push((t, f)),
            }
        }
        features.sort_by_key(|(t, _)| *t);
        FeatureValuation { features }
    }

    pub fn get(&self, t: ObjectType) -> Option<&TypeFeatures> {
        self.features.iter().find(|(k, _)| *k == t).map(|(_, f)| f)
    }

    pub fn at_target(&self, t: ObjectType) -> Option<bool> {
        self.get(t).map(TypeFeatures::at_target)
    }

    pub fn dist(&self, t: ObjectType) -> Option<u32> {
        self.get(t).map(|f| f.dist)
    }

    pub fn dist_decreased(&self, t: ObjectType) -> Option<bool> {
        self.get(t).map(|f| f.decreased)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ObjectType, &TypeFeatures)> {
        self.features.iter().map(|(t, f)| (*t, f))
    }
}

/// Object-count specification such as `2a2b2c`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Setup(Vec<(ObjectType, usize)>);

impl Setup {
    pub fn counts(&self) -> &[(ObjectType, usize)] {
        &self.0
    }

    pub fn total(&self) -> usize {
        self.0.iter().map(|(_, n)| n).sum()
    }
}

impl FromStr for Setup {
    type Err = MapError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || MapError::BadSetup(s.to_string());
        let mut out = Vec::new();
        let mut digits = String::new();
        for ch in s.trim().chars() {
            if ch.is_ascii_digit() {
                digits.push(ch);
            } else if let Some(t) = ObjectType::new(ch) {
                let n: usize = if digits.is_empty() { 1 } else { digits.parse().map_err(|_| bad())? };
                if n == 0 || out.iter().any(|(k, _)| *k == t) {
                    return Err(bad());
                }
                out.push((t, n));
                digits.clear();
            } else {
                return Err(bad());
            }
        }
        if out.is_empty() || !digits.is_empty() {
            return Err(bad());
        }
        Ok(Setup(out))
    }
}

impl fmt::Display for Setup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (t, n) in &self.0 {
            write!(f, "{n}{t}")?;
        }
        Ok(())
    }
}

/// Static world description. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMap {
    width: usize,
    height: usize,
    objects: BTreeMap<Pos, ObjectType>,
    agent_start: Pos,
    types: Vec<ObjectType>,
    // dist_fields[type index][walkable cell index]
    dist_fields: Vec<Vec<u32>>,
}

impl GridMap {
    /// Builds a map of `width` x `height` cells (wall ring included).
    pub fn new(
        width: usize,
        height: usize,
        objects: BTreeMap<Pos, ObjectType>,
        agent_start: Pos,
    ) -> Result<Self, MapError> {
        if width < 3 || height < 3 {
            return Err(MapError::SizeTooSmall(width.min(height)));
        }
        let interior = |p: Pos| p.row >= 1 && p.row + 1 < height && p.col >= 1 && p.col + 1 < width;
        for &p in objects.keys() {
            if !interior(p) {
                return Err(MapError::MissingBorderWall { row: p.row, col: p.col });
            }
        }
        if !interior(agent_start) {
            return Err(MapError::MissingBorderWall {
                row: agent_start.row,
                col: agent_start.col,
            });
        }
        if objects.contains_key(&agent_start) {
            // Start and object share a cell; the text format cannot express it.
            return Err(MapError::IllegalCharacter {
                row: agent_start.row,
                col: agent_start.col,
                ch: 'A',
            });
        }
        let mut types: Vec<ObjectType> = objects.values().copied().collect();
        types.sort();
        types.dedup();
        let mut map = GridMap {
            width,
            height,
            objects,
            agent_start,
            types,
            dist_fields: Vec::new(),
        };
        map.dist_fields = map
            .types
            .iter()
            .map(|&t| {
                let targets = map.objects_of(t);
                map.walkable_cells()
                    .map(|c| targets.iter().map(|&o| c.manhattan(o)).min().unwrap_or(0))
                    .collect()
            })
            .collect();
        Ok(map)
    }

    /// Parses the text map format: `X` wall, `.` free, `A` agent start,
    /// `a`-`z` objects.
    pub fn parse(text: &str) -> Result<Self, MapError> {
        let rows: Vec<&str> = text.lines().filter(|l| !l.is_empty()).collect();
        if rows.is_empty() {
            return Err(MapError::Empty);
        }
        let width = rows[0].chars().count();
        let height = rows.len();
        let mut objects = BTreeMap::new();
        let mut agent = None;
        for (r, line) in rows.iter().enumerate() {
            let found = line.chars().count();
            if found != width {
                return Err(MapError::NonRectangular { row: r, expected: width, found });
            }
            for (c, ch) in line.chars().enumerate() {
                let border = r == 0 || c == 0 || r + 1 == height || c + 1 == width;
                match ch {
                    'X' if !border => return Err(MapError::InteriorWall { row: r, col: c }),
                    'X' => {}
                    '.' | 'A' | 'a'..='z' if border => {
                        return Err(MapError::MissingBorderWall { row: r, col: c })
                    }
                    '.' => {}
                    'A' => {
                        if agent.is_some() {
                            return Err(MapError::MultipleAgents { row: r, col: c });
                        }
                        agent = Some(Pos::new(r, c));
                    }
                    'a'..='z' => {
                        objects.insert(Pos::new(r, c), ObjectType(ch as u8));
                    }
                    _ => return Err(MapError::IllegalCharacter { row: r, col: c, ch }),
                }
            }
        }
        let agent = agent.ok_or(MapError::NoAgent)?;
        GridMap::new(width, height, objects, agent)
    }

    /// Serializes to the text map format, with a trailing newline.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for r in 0..self.height {
            for c in 0..self.width {
                let p = Pos::new(r, c);
                let ch = if self.is_wall(p) {
                    'X'
                } else if p == self.agent_start {
                    'A'
                } else if let Some(t) = self.objects.get(&p) {
                    t.as_char()
                } else {
                    '.'
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn agent_start(&self) -> Pos {
        self.agent_start
    }

    pub fn start_state(&self) -> EnvState {
        EnvState { pos: self.agent_start }
    }

    pub fn objects(&self) -> &BTreeMap<Pos, ObjectType> {
        &self.objects
    }

    /// Object types present on the map, sorted.
    pub fn object_types(&self) -> &[ObjectType] {
        &self.types
    }

    pub fn objects_of(&self, t: ObjectType) -> Vec<Pos> {
        self.objects.iter().filter(|(_, &k)| k == t).map(|(&p, _)| p).collect()
    }

    pub fn is_wall(&self, p: Pos) -> bool {
        p.row == 0 || p.col == 0 || p.row + 1 >= self.height || p.col + 1 >= self.width
    }

    pub fn num_walkable(&self) -> usize {
        (self.width - 2) * (self.height - 2)
    }

    /// Dense index of a walkable cell, row-major over the interior.
    pub fn cell_index(&self, p: Pos) -> usize {
        debug_assert!(!self.is_wall(p));
        (p.row - 1) * (self.width - 2) + (p.col - 1)
    }

    pub fn cell_at(&self, index: usize) -> Pos {
        let w = self.width - 2;
        Pos::new(index / w + 1, index % w + 1)
    }

    pub fn walkable_cells(&self) -> impl Iterator<Item = Pos> + '_ {
        (1..self.height - 1).flat_map(move |r| (1..self.width - 1).map(move |c| Pos::new(r, c)))
    }

    /// Deterministic move; bumping into a wall leaves the agent in place.
    pub fn step(&self, s: EnvState, a: Action) -> EnvState {
        let (dr, dc) = a.delta();
        let row = s.pos.row as isize + dr;
        let col = s.pos.col as isize + dc;
        if row < 0 || col < 0 {
            return s;
        }
        let next = Pos::new(row as usize, col as usize);
        if next.row >= self.height || next.col >= self.width || self.is_wall(next) {
            s
        } else {
            EnvState { pos: next }
        }
    }

    fn type_index(&self, t: ObjectType) -> Option<usize> {
        self.types.binary_search(&t).ok()
    }

    /// Nearest-object Manhattan distance for one type.
    pub fn distance(&self, s: EnvState, t: ObjectType) -> Result<u32, MapError> {
        let ti = self.type_index(t).ok_or(MapError::UnknownType(t))?;
        Ok(self.dist_fields[ti][self.cell_index(s.pos)])
    }

    /// Nearest-object distance for every type on the map.
    pub fn distances(&self, s: EnvState) -> BTreeMap<ObjectType, u32> {
        let ci = self.cell_index(s.pos);
        self.types
            .iter()
            .zip(&self.dist_fields)
            .map(|(&t, field)| (t, field[ci]))
            .collect()
    }

    /// Labeling function: features of the transition `s --a--> next`.
    pub fn label(&self, s: EnvState, next: EnvState) -> FeatureValuation {
        let before = self.cell_index(s.pos);
        let after = self.cell_index(next.pos);
        let features = self
            .types
            .iter()
            .zip(&self.dist_fields)
            .map(|(&t, field)| {
                let any_decreased = s.pos != next.pos
                    && self
                        .objects
                        .iter()
                        .any(|(&o, &k)| k == t && next.pos.manhattan(o) < s.pos.manhattan(o));
                let f = TypeFeatures {
                    dist: field[after],
                    decreased: field[after] < field[before],
                    any_decreased,
                };
                (t, f)
            })
            .collect();
        FeatureValuation { features }
    }
}

impl fmt::Display for GridMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

impl FromStr for GridMap {
    type Err = MapError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GridMap::parse(s)
    }
}

/// Generates a `size` x `size` map (wall ring included) with the agent at the
/// interior center and objects on distinct uniformly chosen interior cells.
pub fn generate_map(setup: &Setup, size: usize, seed: u64) -> Result<GridMap, MapError> {
    if size < 5 {
        return Err(MapError::SizeTooSmall(size));
    }
    let interior = (size - 2) * (size - 2);
    let requested = setup.total();
    if requested >= interior - 1 {
        return Err(MapError::TooManyObjects { requested, interior });
    }
    let start = Pos::new(size / 2, size / 2);
    let candidates: Vec<Pos> = (1..size - 1)
        .flat_map(|r| (1..size - 1).map(move |c| Pos::new(r, c)))
        .filter(|&p| p != start)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = index::sample(&mut rng, candidates.len(), requested);
    let types = setup
        .counts()
        .iter()
        .flat_map(|&(t, n)| std::iter::repeat_n(t, n));
    let objects = picks.iter().zip(types).map(|(i, t)| (candidates[i], t)).collect();
    GridMap::new(size, size, objects, start)
}
