//! Hedonic coalition formation for client selection.
//!
//! Agents declare friend lists; everyone else is an enemy. The friendship
//! graph has an arc `i -> j` iff `j` is in `i`'s list, and the coalition
//! structure is its strongly connected components. Components smaller than
//! the minimum size train locally.
//!
//! Preferences are friend-oriented: more friends first, then fewer enemies.
//! [`check_core_stability`] and [`check_strategy_proofness`] verify the two
//! guarantees of the SCC partition by exhaustive enumeration on small games.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::CoalitionError;

pub type AgentId = u32;

/// Largest game [`check_core_stability`] will enumerate.
pub const CORE_CHECK_LIMIT: usize = 20;
/// Largest game [`check_strategy_proofness`] will enumerate.
pub const PROOF_CHECK_LIMIT: usize = 5;

/// `{agent: [friends]}`; serialized as a JSON object.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FriendLists(pub BTreeMap<AgentId, BTreeSet<AgentId>>);

impl FriendLists {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn declare(&mut self, agent: AgentId, friends: impl IntoIterator<Item = AgentId>) {
        self.0.insert(agent, friends.into_iter().collect());
    }

    pub fn agents(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.0.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn friends_of(&self, agent: AgentId) -> Option<&BTreeSet<AgentId>> {
        self.0.get(&agent)
    }
}

/// Directed graph in compressed adjacency form over agents `0..n` (indices
/// into `agents`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FriendshipGraph {
    agents: Vec<AgentId>,
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl FriendshipGraph {
    /// Graph on agents `0..n` from index arcs. Self-loops are dropped.
    pub fn from_arcs(n: usize, arcs: &[(u32, u32)]) -> Self {
        let mut degree = vec![0usize; n + 1];
        for &(from, to) in arcs {
            if from != to {
                degree[from as usize + 1] += 1;
            }
        }
        for i in 0..n {
            degree[i + 1] += degree[i];
        }
        let offsets = degree;
        let mut fill = offsets.clone();
        let mut targets = vec![0u32; offsets[n]];
        for &(from, to) in arcs {
            if from != to {
                targets[fill[from as usize]] = to;
                fill[from as usize] += 1;
            }
        }
        FriendshipGraph {
            agents: (0..n as AgentId).collect(),
            offsets,
            targets,
        }
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn num_arcs(&self) -> usize {
        self.targets.len()
    }

    pub fn agents(&self) -> &[AgentId] {
        &self.agents
    }

    fn successors(&self, v: usize) -> &[u32] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    /// Arcs as agent-id pairs, sorted.
    pub fn arcs(&self) -> Vec<(AgentId, AgentId)> {
        let mut arcs: Vec<_> = (0..self.num_agents())
            .flat_map(|v| {
                self.successors(v)
                    .iter()
                    .map(move |&w| (self.agents[v], self.agents[w as usize]))
            })
            .collect();
        arcs.sort_unstable();
        arcs
    }
}

pub fn build_graph(lists: &FriendLists) -> Result<FriendshipGraph, CoalitionError> {
    let agents: Vec<AgentId> = lists.agents().collect();
    let position: BTreeMap<AgentId, u32> = agents
        .iter()
        .enumerate()
        .map(|(i, &a)| (a, i as u32))
        .collect();
    let mut arcs = Vec::new();
    for (&agent, friends) in &lists.0 {
        for &friend in friends {
            if friend == agent {
                return Err(CoalitionError::SelfFriend(agent));
            }
            let to = *position
                .get(&friend)
                .ok_or(CoalitionError::UnknownAgent(friend))?;
            arcs.push((position[&agent], to));
        }
    }
    let mut graph = FriendshipGraph::from_arcs(agents.len(), &arcs);
    graph.agents = agents;
    Ok(graph)
}

/// Disjoint coalitions covering all agents, with the FL flag per coalition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoalitionPartition {
    pub coalitions: Vec<Vec<AgentId>>,
    pub fl_enabled: Vec<bool>,
}

impl CoalitionPartition {
    /// Sorts members and coalitions (by smallest member); every coalition enabled.
    pub fn from_groups(mut groups: Vec<Vec<AgentId>>) -> Self {
        for g in &mut groups {
            g.sort_unstable();
        }
        groups.sort_unstable_by_key(|g| g.first().copied());
        let fl_enabled = vec![true; groups.len()];
        CoalitionPartition {
            coalitions: groups,
            fl_enabled,
        }
    }

    pub fn with_min_size(mut self, min_size: usize) -> Self {
        self.fl_enabled = self.coalitions.iter().map(|c| c.len() >= min_size).collect();
        self
    }

    pub fn coalition_of(&self, agent: AgentId) -> Option<&[AgentId]> {
        self.coalitions
            .iter()
            .find(|c| c.binary_search(&agent).is_ok())
            .map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.coalitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coalitions.is_empty()
    }
}

/// Raw component labels, one per vertex index; labels are in the order
/// Tarjan completes components (reverse topological order).
pub fn scc_labels(graph: &FriendshipGraph) -> (Vec<u32>, usize) {
    const UNVISITED: u32 = u32::MAX;
    // Per vertex: [index, lowlink, component]. A visited vertex is on the
    // Tarjan stack exactly while its component is unassigned.
    let n = graph.num_agents();
    let mut state = vec![[UNVISITED; 3]; n];
    let mut stack: Vec<u32> = Vec::new();
    // (vertex, next successor offset)
    let mut frames: Vec<(u32, usize)> = Vec::new();
    let mut next_index = 0u32;
    let mut components = 0u32;

    for root in 0..n {
        if state[root][0] != UNVISITED {
            continue;
        }
        frames.push((root as u32, 0));
        state[root] = [next_index, next_index, UNVISITED];
        next_index += 1;
        stack.push(root as u32);

        while let Some(frame) = frames.last_mut() {
            let v = frame.0 as usize;
            let succ = graph.successors(v);
            if frame.1 < succ.len() {
                let w = succ[frame.1] as usize;
                frame.1 += 1;
                let [w_index, _, w_comp] = state[w];
                if w_index == UNVISITED {
                    state[w] = [next_index, next_index, UNVISITED];
                    next_index += 1;
                    stack.push(w as u32);
                    frames.push((w as u32, 0));
                } else if w_comp == UNVISITED {
                    state[v][1] = state[v][1].min(w_index);
                }
                continue;
            }
            frames.pop();
            let [v_index, v_low, _] = state[v];
            if let Some(parent) = frames.last() {
                let p = parent.0 as usize;
                state[p][1] = state[p][1].min(v_low);
            }
            if v_low == v_index {
                loop {
                    let w = stack.pop().expect("root is on the stack") as usize;
                    state[w][2] = components;
                    if w == v {
                        break;
                    }
                }
                components += 1;
            }
        }
    }
    (state.into_iter().map(|s| s[2]).collect(), components as usize)
}

/// Maximal strongly connected components, in presentation order.
pub fn tarjan_scc(graph: &FriendshipGraph) -> CoalitionPartition {
    let (label, count) = scc_labels(graph);
    let mut groups = vec![Vec::new(); count];
    for (v, &l) in label.iter().enumerate() {
        groups[l as usize].push(graph.agents[v]);
    }
    CoalitionPartition::from_groups(groups)
}

/// Builds the graph, partitions it, and marks coalitions of at least
/// `min_size` members for federated training.
pub fn form_coalitions(
    lists: &FriendLists,
    min_size: usize,
) -> Result<CoalitionPartition, CoalitionError> {
    if min_size == 0 {
        return Err(CoalitionError::InvalidMinSize);
    }
    let graph = build_graph(lists)?;
    Ok(tarjan_scc(&graph).with_min_size(min_size))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preference {
    S1Better,
    S2Better,
    Incomparable,
}

fn compare_counts(friends1: usize, enemies1: usize, friends2: usize, enemies2: usize) -> Preference {
    match friends1.cmp(&friends2).then(enemies2.cmp(&enemies1)) {
        Ordering::Greater => Preference::S1Better,
        Ordering::Less => Preference::S2Better,
        Ordering::Equal => Preference::Incomparable,
    }
}

/// Friend-oriented comparison of two coalitions that both contain `agent`.
pub fn prefers(
    agent: AgentId,
    friends: &BTreeSet<AgentId>,
    s1: &BTreeSet<AgentId>,
    s2: &BTreeSet<AgentId>,
) -> Result<Preference, CoalitionError> {
    if !s1.contains(&agent) || !s2.contains(&agent) {
        return Err(CoalitionError::AgentNotInCoalition(agent));
    }
    let count = |s: &BTreeSet<AgentId>| {
        let f = s.intersection(friends).count();
        (f, s.len() - 1 - f)
    };
    let (f1, e1) = count(s1);
    let (f2, e2) = count(s2);
    Ok(compare_counts(f1, e1, f2, e2))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CoreCheck {
    Stable,
    BlockedBy(Vec<AgentId>),
}

/// Bitmask view of a small game: agents re-indexed `0..n`.
struct MaskGame {
    agents: Vec<AgentId>,
    friends: Vec<u32>,
}

impl MaskGame {
    fn new(lists: &FriendLists, limit: usize) -> Result<Self, CoalitionError> {
        let agents: Vec<AgentId> = lists.agents().collect();
        if agents.len() > limit {
            return Err(CoalitionError::TooLarge {
                n: agents.len(),
                limit,
            });
        }
        let mut friends = Vec::with_capacity(agents.len());
        for (i, a) in agents.iter().enumerate() {
            let mut mask = 0u32;
            for f in &lists.0[a] {
                if f == a {
                    return Err(CoalitionError::SelfFriend(*a));
                }
                let j = agents
                    .binary_search(f)
                    .map_err(|_| CoalitionError::UnknownAgent(*f))?;
                mask |= 1 << j;
            }
            debug_assert_eq!(mask & (1 << i), 0);
            friends.push(mask);
        }
        Ok(MaskGame { agents, friends })
    }

    fn mask_of(&self, members: &[AgentId]) -> Result<u32, CoalitionError> {
        members.iter().try_fold(0u32, |m, a| {
            let j = self
                .agents
                .binary_search(a)
                .map_err(|_| CoalitionError::UnknownAgent(*a))?;
            Ok(m | (1 << j))
        })
    }

    fn compare(&self, i: usize, s1: u32, s2: u32) -> Preference {
        let f = self.friends[i];
        let count = |s: u32| {
            let friends = (s & f).count_ones() as usize;
            (friends, s.count_ones() as usize - 1 - friends)
        };
        let (f1, e1) = count(s1);
        let (f2, e2) = count(s2);
        compare_counts(f1, e1, f2, e2)
    }

    fn members(&self, mask: u32) -> Vec<AgentId> {
        (0..self.agents.len())
            .filter(|j| mask & (1 << j) != 0)
            .map(|j| self.agents[j])
            .collect()
    }
}

/// Searches every non-empty coalition for one whose members all strictly
/// prefer it to their current coalition. Exponential; `n <= 20`.
pub fn check_core_stability(
    lists: &FriendLists,
    partition: &CoalitionPartition,
) -> Result<CoreCheck, CoalitionError> {
    let game = MaskGame::new(lists, CORE_CHECK_LIMIT)?;
    let n = game.agents.len();
    let mut current = vec![0u32; n];
    for coalition in &partition.coalitions {
        let mask = game.mask_of(coalition)?;
        for (j, slot) in current.iter_mut().enumerate() {
            if mask & (1 << j) != 0 {
                *slot = mask;
            }
        }
    }
    if let Some(j) = current.iter().position(|&m| m == 0) {
        return Err(CoalitionError::AgentNotInCoalition(game.agents[j]));
    }
    for s in 1u32..(1u32 << n) {
        let blocks = (0..n)
            .filter(|j| s & (1 << j) != 0)
            .all(|j| game.compare(j, s, current[j]) == Preference::S1Better);
        if blocks {
            return Ok(CoreCheck::BlockedBy(game.members(s)));
        }
    }
    Ok(CoreCheck::Stable)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProofCheck {
    Proof,
    CounterexampleAt {
        agent: AgentId,
        misreport: BTreeSet<AgentId>,
    },
}

/// Tries every alternative friend list for every agent and reports the first
/// misreport that lands the agent in a coalition it truly prefers. `n <= 5`.
pub fn check_strategy_proofness(lists: &FriendLists) -> Result<ProofCheck, CoalitionError> {
    let game = MaskGame::new(lists, PROOF_CHECK_LIMIT)?;
    let truthful = form_coalitions(lists, 1)?;
    let n = game.agents.len();
    for (i, &agent) in game.agents.iter().enumerate() {
        let honest = game.mask_of(truthful.coalition_of(agent).expect("partition covers agent"))?;
        let others: Vec<AgentId> = game.agents.iter().copied().filter(|&a| a != agent).collect();
        for bits in 0u32..(1u32 << (n - 1)) {
            let report: BTreeSet<AgentId> = others
                .iter()
                .enumerate()
                .filter(|(k, _)| bits & (1 << k) != 0)
                .map(|(_, &a)| a)
                .collect();
            if &report == lists.friends_of(agent).expect("declared agent") {
                continue;
            }
            let mut altered = lists.clone();
            altered.0.insert(agent, report.clone());
            let outcome = form_coalitions(&altered, 1)?;
            let got = game.mask_of(outcome.coalition_of(agent).expect("partition covers agent"))?;
            if game.compare(i, got, honest) == Preference::S1Better {
                return Ok(ProofCheck::CounterexampleAt {
                    agent,
                    misreport: report,
                });
            }
        }
    }
    Ok(ProofCheck::Proof)
}
