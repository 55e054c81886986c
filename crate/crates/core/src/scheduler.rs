//! Time-division pass scheduling under a per-message crosstalk budget.
//!
//! Each algorithm is a [`PassScheduler`] registered by name in a
//! [`SchedulerRegistry`]; [`schedule`] looks the configured one up and
//! attaches the validity certificate.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::ser::{Serialize, Serializer};

use crate::conflict::{build_conflict_graph, ConflictGraph, ConflictKind};
use crate::error::{Error, Result};
use crate::routing::{trace_unchecked, PermutationMap};
use crate::topology::NetworkSpec;

pub const DEFAULT_EXACT_CAP: usize = 20;

/// Maximum number of stages at which a message may share its switch with
/// other members of its pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Budget {
    Limited(u32),
    Unlimited,
}

impl Budget {
    pub fn allows(self, shared_stages: u32) -> bool {
        match self {
            Budget::Limited(k) => shared_stages <= k,
            Budget::Unlimited => true,
        }
    }
}

impl Default for Budget {
    fn default() -> Self {
        Budget::Limited(0)
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Budget::Limited(k) => write!(f, "{k}"),
            Budget::Unlimited => f.write_str("unlimited"),
        }
    }
}

impl FromStr for Budget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("unlimited") {
            return Ok(Budget::Unlimited);
        }
        s.parse().map(Budget::Limited).map_err(|_| Error::Unknown {
            kind: "budget",
            name: s.to_string(),
        })
    }
}

impl Serialize for Budget {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Budget::Limited(k) => serializer.serialize_u32(*k),
            Budget::Unlimited => serializer.serialize_str("unlimited"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    GreedyOrder,
    WelshPowell,
    Exact,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::GreedyOrder => "greedy",
            Algorithm::WelshPowell => "welsh-powell",
            Algorithm::Exact => "exact",
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Algorithm::GreedyOrder, Algorithm::WelshPowell, Algorithm::Exact]
            .into_iter()
            .find(|a| a.name() == s.trim())
            .ok_or_else(|| Error::Unknown {
                kind: "algorithm",
                name: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum OrderPolicy {
    #[default]
    SourceAscending,
    DegreeDescending,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleConfig {
    pub budget: Budget,
    pub algorithm: Algorithm,
    pub order_policy: OrderPolicy,
    /// Largest message count the exact solver accepts.
    pub exact_cap: usize,
}

impl ScheduleConfig {
    pub fn new(budget: Budget, algorithm: Algorithm) -> Self {
        ScheduleConfig {
            budget,
            algorithm,
            order_policy: OrderPolicy::default(),
            exact_cap: DEFAULT_EXACT_CAP,
        }
    }
}

/// Everything a scheduling strategy may look at.
pub struct Problem<'a> {
    pub net: &'a NetworkSpec,
    pub perm: &'a PermutationMap,
    pub graph: &'a ConflictGraph,
}

pub trait PassScheduler: Send + Sync {
    fn name(&self) -> &'static str;

    /// Partitions message indices into passes, each within `config.budget`.
    fn partition(&self, problem: &Problem<'_>, config: &ScheduleConfig) -> Result<Vec<Vec<usize>>>;
}

pub struct SchedulerRegistry {
    entries: BTreeMap<&'static str, Box<dyn PassScheduler>>,
}

impl SchedulerRegistry {
    pub fn empty() -> Self {
        SchedulerRegistry {
            entries: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, scheduler: Box<dyn PassScheduler>) {
        self.entries.insert(scheduler.name(), scheduler);
    }

    pub fn get(&self, name: &str) -> Result<&dyn PassScheduler> {
        self.entries
            .get(name)
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::Unknown {
                kind: "algorithm",
                name: name.to_string(),
            })
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }
}

impl Default for SchedulerRegistry {
    fn default() -> Self {
        let mut registry = SchedulerRegistry::empty();
        registry.register(Box::new(GreedyScheduler::in_configured_order()));
        registry.register(Box::new(GreedyScheduler::welsh_powell()));
        registry.register(Box::new(ExactScheduler));
        registry
    }
}

/// Incremental pass membership with per-message shared-stage masks.
struct PassBoard<'g> {
    graph: &'g ConflictGraph,
    budget: Budget,
    pass_of: Vec<Option<usize>>,
    masks: Vec<u64>,
    pass_count: usize,
}

type Undo = Vec<(usize, u64)>;

impl<'g> PassBoard<'g> {
    fn new(graph: &'g ConflictGraph, budget: Budget) -> Self {
        PassBoard {
            graph,
            budget,
            pass_of: vec![None; graph.vertex_count()],
            masks: vec![0; graph.vertex_count()],
            pass_count: 0,
        }
    }

    /// Places `v` in `pass` if every member stays within budget; all current
    /// members are rechecked since `v` can push any of them over.
    fn try_place(&mut self, v: usize, pass: usize) -> Option<Undo> {
        let mut own = 0u64;
        let mut touched = Vec::new();
        for e in self.graph.incident(v) {
            let u = if e.a == v { e.b } else { e.a };
            if self.pass_of[u] != Some(pass) {
                continue;
            }
            if e.has_link_conflict() {
                return None;
            }
            let m = e.stage_mask();
            own |= m;
            let grown = self.masks[u] | m;
            if !self.budget.allows(grown.count_ones()) {
                return None;
            }
            touched.push((u, grown));
        }
        if !self.budget.allows(own.count_ones()) {
            return None;
        }
        let mut undo = Vec::with_capacity(touched.len() + 1);
        undo.push((v, self.masks[v]));
        self.masks[v] = own;
        for (u, grown) in touched {
            undo.push((u, self.masks[u]));
            self.masks[u] = grown;
        }
        self.pass_of[v] = Some(pass);
        self.pass_count = self.pass_count.max(pass + 1);
        Some(undo)
    }

    fn remove(&mut self, v: usize, undo: Undo) {
        self.pass_of[v] = None;
        for (u, mask) in undo.into_iter().rev() {
            self.masks[u] = mask;
        }
    }

    fn into_passes(self) -> Vec<Vec<usize>> {
        let mut passes = vec![Vec::new(); self.pass_count];
        for (v, p) in self.pass_of.iter().enumerate() {
            passes[p.expect("every message placed")].push(v);
        }
        passes
    }
}

/// First-fit over an ordered message list.
pub struct GreedyScheduler {
    name: &'static str,
    forced_order: Option<OrderPolicy>,
}

impl GreedyScheduler {
    pub fn in_configured_order() -> Self {
        GreedyScheduler {
            name: Algorithm::GreedyOrder.name(),
            forced_order: None,
        }
    }

    /// Degree-descending order with source-ascending tie-break.
    pub fn welsh_powell() -> Self {
        GreedyScheduler {
            name: Algorithm::WelshPowell.name(),
            forced_order: Some(OrderPolicy::DegreeDescending),
        }
    }
}

fn message_order(problem: &Problem<'_>, policy: OrderPolicy) -> Vec<usize> {
    let messages = problem.perm.messages();
    let mut order: Vec<usize> = (0..messages.len()).collect();
    match policy {
        OrderPolicy::SourceAscending => order.sort_by_key(|&i| messages[i].source),
        OrderPolicy::DegreeDescending => order.sort_by_key(|&i| {
            (std::cmp::Reverse(problem.graph.degree(i)), messages[i].source)
        }),
    }
    order
}

impl PassScheduler for GreedyScheduler {
    fn name(&self) -> &'static str {
        self.name
    }

    fn partition(&self, problem: &Problem<'_>, config: &ScheduleConfig) -> Result<Vec<Vec<usize>>> {
        let policy = self.forced_order.unwrap_or(config.order_policy);
        let mut board = PassBoard::new(problem.graph, config.budget);
        for v in message_order(problem, policy) {
            let opened = board.pass_count;
            let placed = (0..opened).any(|p| board.try_place(v, p).is_some());
            if !placed {
                board
                    .try_place(v, opened)
                    .expect("an empty pass always admits a message");
            }
        }
        Ok(board.into_passes())
    }
}

/// Iterative deepening over the pass count; the first assignment found in
/// index order is the lexicographically smallest optimum.
pub struct ExactScheduler;

impl ExactScheduler {
    fn lower_bound(graph: &ConflictGraph, budget: Budget) -> usize {
        if graph.vertex_count() == 0 {
            0
        } else if graph.edges().iter().any(|e| e.has_link_conflict())
            || (budget == Budget::Limited(0) && !graph.edges().is_empty())
        {
            2
        } else {
            1
        }
    }

    fn search(board: &mut PassBoard<'_>, v: usize, limit: usize) -> bool {
        if v == board.pass_of.len() {
            return true;
        }
        // Passes are opened in order, so v may use at most one new one.
        let reachable = (board.pass_count + 1).min(limit);
        for pass in 0..reachable {
            let before = board.pass_count;
            if let Some(undo) = board.try_place(v, pass) {
                if Self::search(board, v + 1, limit) {
                    return true;
                }
                board.remove(v, undo);
                board.pass_count = before;
            }
        }
        false
    }
}

impl PassScheduler for ExactScheduler {
    fn name(&self) -> &'static str {
        Algorithm::Exact.name()
    }

    fn partition(&self, problem: &Problem<'_>, config: &ScheduleConfig) -> Result<Vec<Vec<usize>>> {
        let count = problem.graph.vertex_count();
        if count > config.exact_cap {
            return Err(Error::TooLarge {
                count,
                cap: config.exact_cap,
            });
        }
        for limit in Self::lower_bound(problem.graph, config.budget)..=count {
            let mut board = PassBoard::new(problem.graph, config.budget);
            if Self::search(&mut board, 0, limit) {
                return Ok(board.into_passes());
            }
        }
        unreachable!("singleton passes are always feasible")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PassMember {
    pub message: usize,
    pub shared_stages: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    /// Message indices per pass, ascending within each pass.
    pub passes: Vec<Vec<usize>>,
    pub config: ScheduleConfig,
    /// Per pass, each member's shared-stage count.
    pub certificate: Vec<Vec<PassMember>>,
}

impl Schedule {
    pub fn pass_count(&self) -> usize {
        self.passes.len()
    }
}

/// Runs the configured algorithm from the default registry.
pub fn schedule(net: &NetworkSpec, perm: &PermutationMap, config: &ScheduleConfig) -> Result<Schedule> {
    schedule_with(&SchedulerRegistry::default(), net, perm, config)
}

pub fn schedule_with(
    registry: &SchedulerRegistry,
    net: &NetworkSpec,
    perm: &PermutationMap,
    config: &ScheduleConfig,
) -> Result<Schedule> {
    let graph = build_conflict_graph(net, perm)?;
    let problem = Problem {
        net,
        perm,
        graph: &graph,
    };
    let mut passes = registry.get(config.algorithm.name())?.partition(&problem, config)?;
    for pass in &mut passes {
        pass.sort_unstable();
    }
    let certificate = passes
        .iter()
        .map(|pass| {
            pass.iter()
                .map(|&v| {
                    let mask = graph
                        .incident(v)
                        .filter(|e| pass.binary_search(&if e.a == v { e.b } else { e.a }).is_ok())
                        .fold(0u64, |m, e| m | e.stage_mask());
                    PassMember {
                        message: v,
                        shared_stages: mask.count_ones(),
                    }
                })
                .collect()
        })
        .collect();
    Ok(Schedule {
        passes,
        config: *config,
        certificate,
    })
}

pub fn schedule_greedy(net: &NetworkSpec, perm: &PermutationMap, config: &ScheduleConfig) -> Result<Schedule> {
    debug_assert_ne!(config.algorithm, Algorithm::Exact);
    schedule(net, perm, config)
}

pub fn schedule_exact(net: &NetworkSpec, perm: &PermutationMap, config: &ScheduleConfig) -> Result<Schedule> {
    let config = ScheduleConfig {
        algorithm: Algorithm::Exact,
        ..*config
    };
    schedule(net, perm, &config)
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct Violation {
    pub pass: usize,
    pub message: usize,
    pub stage: u32,
    pub kind: ConflictKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidityReport {
    pub violations: Vec<Violation>,
    /// Whether each pass is switch-disjoint at every stage.
    pub semi_permutation: Vec<bool>,
}

impl ValidityReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Rechecks a pass partition against `budget` using traced paths only.
pub fn validate_schedule(
    net: &NetworkSpec,
    perm: &PermutationMap,
    passes: &[Vec<usize>],
    budget: Budget,
) -> Result<ValidityReport> {
    let count = perm.len();
    let mut seen = vec![false; count];
    for &v in passes.iter().flatten() {
        if v >= count {
            return Err(Error::IndexOutOfRange { index: v, count });
        }
        if std::mem::replace(&mut seen[v], true) {
            return Err(Error::Coverage(format!("message {v} scheduled more than once")));
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::Coverage(format!("message {missing} is not scheduled")));
    }

    let paths: Vec<_> = perm
        .messages()
        .iter()
        .map(|&m| trace_unchecked(net, m))
        .collect();
    let stages = net.stages() as usize;
    let mut violations = Vec::new();
    let mut semi_permutation = Vec::with_capacity(passes.len());
    for (p, pass) in passes.iter().enumerate() {
        let mut members: Vec<usize> = pass.clone();
        members.sort_unstable();
        // shared[i][stage] = Some(kind) when member i shares that stage.
        let mut shared = vec![vec![None; stages]; members.len()];
        for (i, &a) in members.iter().enumerate() {
            for (j, &b) in members.iter().enumerate().skip(i + 1) {
                for s in 0..stages {
                    let (ha, hb) = (&paths[a].hops[s], &paths[b].hops[s]);
                    if ha.switch != hb.switch {
                        continue;
                    }
                    let kind = if ha.out_port == hb.out_port {
                        ConflictKind::LinkConflict
                    } else {
                        ConflictKind::SwitchCrosstalk
                    };
                    for k in [i, j] {
                        if shared[k][s] != Some(ConflictKind::LinkConflict) {
                            shared[k][s] = Some(kind);
                        }
                    }
                }
            }
        }
        semi_permutation.push(shared.iter().flatten().all(Option::is_none));
        for (i, &v) in members.iter().enumerate() {
            let used = shared[i].iter().filter(|s| s.is_some()).count() as u32;
            let over = !budget.allows(used);
            for (s, kind) in shared[i].iter().enumerate() {
                let kind = match kind {
                    Some(ConflictKind::LinkConflict) => ConflictKind::LinkConflict,
                    Some(ConflictKind::SwitchCrosstalk) if over => ConflictKind::SwitchCrosstalk,
                    _ => continue,
                };
                violations.push(Violation {
                    pass: p,
                    message: v,
                    stage: s as u32 + 1,
                    kind,
                });
            }
        }
    }
    Ok(ValidityReport {
        violations,
        semi_permutation,
    })
}

/// JSON form of a schedule; passes list message sources.
#[derive(Debug, serde::Serialize)]
pub struct ScheduleDocument {
    pub size: usize,
    pub topology: crate::topology::Topology,
    pub budget: Budget,
    pub algorithm: &'static str,
    pub passes: Vec<Vec<usize>>,
    pub violations: Vec<Violation>,
}

impl ScheduleDocument {
    pub fn new(net: &NetworkSpec, perm: &PermutationMap, schedule: &Schedule, report: &ValidityReport) -> Self {
        let messages = perm.messages();
        ScheduleDocument {
            size: net.size(),
            topology: net.topology(),
            budget: schedule.config.budget,
            algorithm: schedule.config.algorithm.name(),
            passes: schedule
                .passes
                .iter()
                .map(|pass| pass.iter().map(|&v| messages[v].source).collect())
                .collect(),
            violations: report.violations.clone(),
        }
    }
}
