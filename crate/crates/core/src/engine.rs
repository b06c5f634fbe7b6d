//! Event-driven simulation of the catalytic branching process.
//!
//! Every split happens at the origin, so the genealogy (who is born when) does
//! not depend on where particles are at any other time. A run therefore grows
//! the tree of branch times first and only then draws positions at the
//! requested observation time. Each observation time is decorated on its own:
//! per-time marginals are exact, the joint law across times is not.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analytic::Params;
use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;
use crate::sampler::{sample_branch_threshold, sample_hitting_time, sample_position_given_no_branch};

/// Version of the JSON layout written by [`GenealogyTree::to_json`] and [`SnapshotRecord`].
pub const SCHEMA_VERSION: u32 = 1;

/// Default cap on the number of simultaneously alive particles.
pub const DEFAULT_MAX_POPULATION: usize = 1_000_000;

/// Ulam–Harris label: the sequence of child indices from the root.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ParticleLabel(pub Vec<u8>);

impl ParticleLabel {
    pub fn root() -> Self {
        Self(Vec::new())
    }

    pub fn generation(&self) -> usize {
        self.0.len()
    }

    pub fn child(&self, bit: u8) -> Self {
        let mut v = self.0.clone();
        v.push(bit);
        Self(v)
    }

    pub fn parent(&self) -> Option<Self> {
        let (_, init) = self.0.split_last()?;
        Some(Self(init.to_vec()))
    }

    pub fn is_prefix_of(&self, other: &Self) -> bool {
        other.0.starts_with(&self.0)
    }
}

impl fmt::Display for ParticleLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

impl FromStr for ParticleLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(invalid("label", format!("unexpected character {c:?} in {s:?}"))),
            })
            .collect::<Result<Vec<u8>>>()
            .map(Self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub parent: Option<u32>,
    pub child_bit: u8,
    pub birth: f64,
    /// Time from which this particle accumulates local time. Equal to `birth`
    /// except for a root started away from the origin.
    pub clock_start: f64,
    /// Local-time level `e ~ Exp(β)` at which the particle splits.
    pub threshold: f64,
    /// Time `τ` after `clock_start` at which local time reaches `threshold`.
    pub hitting_offset: f64,
    /// Index of child 0; child 1 sits right after it.
    pub first_child: Option<u32>,
}

impl Node {
    pub fn branch_time(&self) -> f64 {
        self.clock_start + self.hitting_offset
    }

    pub fn children(&self) -> Option<[u32; 2]> {
        self.first_child.map(|c| [c, c + 1])
    }
}

/// Everything the growth stage needs. `observation_times` and `replicates` are
/// carried for the runners that consume the tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: Params,
    pub horizon: f64,
    pub observation_times: Vec<f64>,
    pub max_population: usize,
    pub seed: u64,
    pub replicates: u64,
    /// Starting point of the initial particle; 0 unless explicitly set.
    pub start_position: f64,
}

impl SimConfig {
    pub fn new(params: Params, horizon: f64) -> Self {
        Self {
            params,
            horizon,
            observation_times: vec![horizon],
            max_population: DEFAULT_MAX_POPULATION,
            seed: 0,
            replicates: 1,
            start_position: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon >= 0.0) {
            return Err(invalid(
                "horizon",
                format!("must be finite and >= 0, got {}", self.horizon),
            ));
        }
        if let Some(&bad) = self
            .observation_times
            .iter()
            .find(|&&t| !(t >= 0.0 && t <= self.horizon))
        {
            return Err(invalid(
                "observation_times",
                format!("{bad} lies outside [0, horizon = {}]", self.horizon),
            ));
        }
        if self.max_population < 1 {
            return Err(invalid("max_population", "must be >= 1"));
        }
        if !self.start_position.is_finite() {
            return Err(invalid("start_position", "must be finite"));
        }
        Params::with_gamma(self.params.beta, self.params.gamma)?;
        Ok(())
    }
}

/// Which child of a split draws its randomness first. `Mirrored` exists to test
/// exchangeability of the two children.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChildOrder {
    #[default]
    Natural,
    Mirrored,
}

/// Branch-time genealogy up to a horizon. Immutable once grown.
#[derive(Debug, Clone, PartialEq)]
pub struct GenealogyTree {
    horizon: f64,
    beta: f64,
    start_position: f64,
    nodes: Vec<Node>,
    /// Set on a partial tree returned with [`Error::CapExceeded`]: the tree is
    /// only valid strictly before this time.
    truncated_at: Option<f64>,
}

#[derive(Clone, Copy)]
struct Event {
    time: f64,
    node: u32,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    // reversed: BinaryHeap is a max-heap and we want the earliest event
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// Grow the genealogy of one replicate.
///
/// Splits are processed in time order. Each particle draws its threshold
/// `e ~ Exp(β)` and then the time `τ_e` its local time needs to reach `e`.
/// Fails with [`Error::CapExceeded`] (carrying the partial tree) when a split
/// would push the alive population above `max_population`.
pub fn grow_genealogy(config: &SimConfig, rng: &mut RngStream) -> Result<GenealogyTree> {
    grow_genealogy_ordered(config, rng, ChildOrder::Natural)
}

pub fn grow_genealogy_ordered(config: &SimConfig, rng: &mut RngStream, order: ChildOrder) -> Result<GenealogyTree> {
    config.validate()?;
    let params = &config.params;
    let horizon = config.horizon;
    let start = config.start_position;
    let clock_start = if start == 0.0 {
        0.0
    } else {
        sample_hitting_time(start.abs(), rng)
    };
    let mut tree = GenealogyTree {
        horizon,
        beta: params.beta,
        start_position: start,
        nodes: Vec::new(),
        truncated_at: None,
    };
    let threshold = sample_branch_threshold(params, rng);
    let hitting_offset = sample_hitting_time(threshold, rng);
    tree.nodes.push(Node {
        parent: None,
        child_bit: 0,
        birth: 0.0,
        clock_start,
        threshold,
        hitting_offset,
        first_child: None,
    });
    let mut queue = BinaryHeap::new();
    let first = tree.nodes[0].branch_time();
    if first <= horizon {
        queue.push(Event { time: first, node: 0 });
    }
    let mut alive = 1usize;
    while let Some(Event { time, node }) = queue.pop() {
        if alive + 1 > config.max_population {
            tree.truncated_at = Some(time);
            return Err(Error::CapExceeded {
                cap: config.max_population,
                time,
                partial: Box::new(tree),
            });
        }
        alive += 1;
        let base = tree.nodes.len() as u32;
        tree.nodes[node as usize].first_child = Some(base);
        for bit in 0..2u8 {
            tree.nodes.push(Node {
                parent: Some(node),
                child_bit: bit,
                birth: time,
                clock_start: time,
                threshold: f64::NAN,
                hitting_offset: f64::NAN,
                first_child: None,
            });
        }
        let draw_order = match order {
            ChildOrder::Natural => [base, base + 1],
            ChildOrder::Mirrored => [base + 1, base],
        };
        for idx in draw_order {
            let e = sample_branch_threshold(params, rng);
            let tau = sample_hitting_time(e, rng);
            let child = &mut tree.nodes[idx as usize];
            child.threshold = e;
            child.hitting_offset = tau;
            let at = child.branch_time();
            if at <= horizon {
                queue.push(Event { time: at, node: idx });
            }
        }
    }
    Ok(tree)
}

impl GenealogyTree {
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn start_position(&self) -> f64 {
        self.start_position
    }

    pub fn truncated_at(&self) -> Option<f64> {
        self.truncated_at
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, idx: u32) -> &Node {
        &self.nodes[idx as usize]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn label(&self, idx: u32) -> ParticleLabel {
        let mut bits = Vec::new();
        let mut cur = self.node(idx);
        while let Some(p) = cur.parent {
            bits.push(cur.child_bit);
            cur = self.node(p);
        }
        bits.reverse();
        ParticleLabel(bits)
    }

    pub fn find(&self, label: &ParticleLabel) -> Option<u32> {
        let mut idx = 0u32;
        for &bit in &label.0 {
            let [a, b] = self.node(idx).children()?;
            idx = if self.node(a).child_bit == bit { a } else { b };
        }
        Some(idx)
    }

    fn check_time(&self, s: f64) -> Result<()> {
        if !(s >= 0.0 && s <= self.horizon) {
            return Err(invalid(
                "time",
                format!("{s} lies outside [0, horizon = {}]", self.horizon),
            ));
        }
        if let Some(cut) = self.truncated_at {
            if s >= cut {
                return Err(invalid("time", format!("{s} is past the truncation time {cut}")));
            }
        }
        Ok(())
    }

    /// Alive at `s`: born at or before `s` and not yet split. A split exactly
    /// at `s` counts as done.
    pub fn is_alive(&self, idx: u32, s: f64) -> bool {
        let n = self.node(idx);
        n.birth <= s && (n.first_child.is_none() || n.branch_time() > s)
    }

    /// Indices of the particles alive at `s`, in creation order.
    pub fn alive_at(&self, s: f64) -> Result<Vec<u32>> {
        self.check_time(s)?;
        Ok((0..self.nodes.len() as u32).filter(|&i| self.is_alive(i, s)).collect())
    }

    /// Split times in increasing order.
    pub fn branch_times(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .nodes
            .iter()
            .filter(|n| n.first_child.is_some())
            .map(Node::branch_time)
            .collect();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn to_record(&self) -> TreeRecord {
        TreeRecord {
            schema_version: SCHEMA_VERSION,
            horizon: self.horizon,
            beta: self.beta,
            start_position: self.start_position,
            truncated_at: self.truncated_at,
            nodes: (0..self.nodes.len() as u32)
                .map(|i| {
                    let n = self.node(i);
                    NodeRecord {
                        label: self.label(i).to_string(),
                        birth: n.birth,
                        clock_start: n.clock_start,
                        threshold: n.threshold,
                        hitting_offset: n.hitting_offset,
                        branch_time: n.first_child.map(|_| n.branch_time()),
                    }
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_record())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_record(serde_json::from_str(text)?)
    }

    pub fn from_record(rec: TreeRecord) -> Result<Self> {
        if rec.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: rec.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        let mut index: HashMap<String, u32> = HashMap::with_capacity(rec.nodes.len());
        let mut nodes = Vec::with_capacity(rec.nodes.len());
        for (i, n) in rec.nodes.iter().enumerate() {
            let label: ParticleLabel = n.label.parse()?;
            let (parent, bit) = match label.parent() {
                None => (None, 0),
                Some(p) => {
                    let pi = *index
                        .get(&p.to_string())
                        .ok_or_else(|| invalid("nodes", format!("parent of {:?} missing or listed later", n.label)))?;
                    (Some(pi), *label.0.last().expect("non-root label"))
                }
            };
            if let Some(pi) = parent {
                let pnode: &mut Node = &mut nodes[pi as usize];
                match pnode.first_child {
                    None if bit == 0 => pnode.first_child = Some(i as u32),
                    Some(c) if bit == 1 && c + 1 == i as u32 => {}
                    _ => return Err(invalid("nodes", "children must follow as an adjacent 0/1 pair")),
                }
            }
            index.insert(n.label.clone(), i as u32);
            nodes.push(Node {
                parent,
                child_bit: bit,
                birth: n.birth,
                clock_start: n.clock_start,
                threshold: n.threshold,
                hitting_offset: n.hitting_offset,
                first_child: None,
            });
        }
        Ok(Self {
            horizon: rec.horizon,
            beta: rec.beta,
            start_position: rec.start_position,
            nodes,
            truncated_at: rec.truncated_at,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub label: String,
    pub birth: f64,
    pub clock_start: f64,
    pub threshold: f64,
    pub hitting_offset: f64,
    pub branch_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeRecord {
    pub schema_version: u32,
    pub horizon: f64,
    pub beta: f64,
    pub start_position: f64,
    pub truncated_at: Option<f64>,
    pub nodes: Vec<NodeRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub node: u32,
    pub x: f64,
}

/// Positions of all particles alive at one observation time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub particles: Vec<Particle>,
}

impl Snapshot {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn positions(&self) -> impl Iterator<Item = f64> + '_ {
        self.particles.iter().map(|p| p.x)
    }

    pub fn to_record(&self, tree: &GenealogyTree) -> SnapshotRecord {
        SnapshotRecord {
            schema_version: SCHEMA_VERSION,
            t: self.t,
            particles: self
                .particles
                .iter()
                .map(|p| LabeledPosition {
                    label: tree.label(p.node).to_string(),
                    x: p.x,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPosition {
    pub label: String,
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub schema_version: u32,
    pub t: f64,
    pub particles: Vec<LabeledPosition>,
}

/// Draw positions of every particle alive at `t_obs`.
///
/// A particle born at `b` with threshold `e` has not split by `t_obs`, which
/// is exactly the event that its local time over `[b, t_obs]` is below `e`;
/// its position is drawn from that conditional law, independently of the
/// other particles.
pub fn decorate(tree: &GenealogyTree, t_obs: f64, rng: &mut RngStream) -> Result<Snapshot> {
    let alive = tree.alive_at(t_obs)?;
    let mut particles = Vec::with_capacity(alive.len());
    for idx in alive {
        let n = tree.node(idx);
        let x = if n.parent.is_none() && t_obs < n.clock_start {
            position_before_first_hit(tree.start_position, t_obs, rng)
        } else {
            let s = t_obs - n.clock_start;
            if s <= 0.0 {
                0.0
            } else {
                sample_position_given_no_branch(s, n.threshold, rng)?
            }
        };
        particles.push(Particle { node: idx, x });
    }
    Ok(Snapshot { t: t_obs, particles })
}

/// Brownian motion from `x0 != 0` at time `s`, given it has not reached the origin.
/// Reflection: the killed density is the free one times `1 − exp(−2·x0·y/s)`.
fn position_before_first_hit(x0: f64, s: f64, rng: &mut RngStream) -> f64 {
    if s <= 0.0 {
        return x0;
    }
    let sd = s.sqrt();
    loop {
        let y = x0 + sd * rng.standard_normal();
        if y * x0 <= 0.0 {
            continue;
        }
        let keep = -(-2.0 * x0 * y / s).exp_m1();
        if rng.uniform() < keep {
            return y;
        }
    }
}

/// `|N_s|` at each requested time, read off the split times alone.
pub fn population_curve(tree: &GenealogyTree, times: &[f64]) -> Result<Vec<usize>> {
    let splits = tree.branch_times();
    times
        .iter()
        .map(|&s| {
            tree.check_time(s)?;
            Ok(1 + splits.partition_point(|&b| b <= s))
        })
        .collect()
}

/// `|N_t^{λt}|`: particles strictly above `λ·t`.
pub fn count_above(snapshot: &Snapshot, lambda: f64) -> usize {
    let level = lambda * snapshot.t;
    snapshot.positions().filter(|&x| x > level).count()
}

/// Rightmost position `R_t`.
pub fn rightmost(snapshot: &Snapshot) -> Result<f64> {
    snapshot.positions().reduce(f64::max).ok_or(Error::EmptyPopulation)
}

/// Stream for the genealogy of replicate `index`.
pub fn tree_stream(seed: u64, index: u64) -> RngStream {
    RngStream::new(seed, index)
}

/// Stream for decorating replicate `index` at its `k`-th observation time.
pub fn decoration_stream(seed: u64, index: u64, k: usize) -> RngStream {
    RngStream::new(seed, index).fork(k as u16 + 1)
}

/// One replicate: its genealogy and a snapshot at each observation time.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub index: u64,
    pub tree: GenealogyTree,
    pub snapshots: Vec<Snapshot>,
}

/// Grow replicate `index` of `config` and decorate it at every observation
/// time. Streams depend only on `(seed, index, k)`, never on scheduling.
pub fn run_replicate(config: &SimConfig, index: u64) -> Result<Replicate> {
    let tree = grow_genealogy(config, &mut tree_stream(config.seed, index))?;
    let snapshots = config
        .observation_times
        .iter()
        .enumerate()
        .map(|(k, &t)| decorate(&tree, t, &mut decoration_stream(config.seed, index, k)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Replicate { index, tree, snapshots })
}
