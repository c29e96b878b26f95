//! Routing policies: adaptive mappings from states to next links.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::network::{successor_states, travel_time, LinkId, State, StdNetwork, SupportPointSet};
use crate::recursive::{Aggregation, ValueFunction};
use crate::state_space::StateSpace;
use crate::utility::{dot, Attribute, LinkUtilitySpec};

pub const DEFAULT_POLICY_CAP: usize = 1_000_000;

/// Observed trajectory `((k_i, t_i, EV_i))` from an initial state to the destination.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateSequence {
    states: Vec<State>,
}

impl StateSequence {
    pub fn new(states: Vec<State>) -> Self {
        Self { states }
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn initial(&self) -> Option<&State> {
        self.states.first()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Links traversed after the initial state.
    pub fn path(&self) -> Vec<LinkId> {
        self.states.iter().skip(1).map(|s| s.link).collect()
    }

    pub fn validate(&self, network: &StdNetwork, spp: &SupportPointSet) -> Result<()> {
        let invalid = |step: usize, reason: String| Error::InvalidSequence { step, reason };
        if self.states.is_empty() {
            return Err(invalid(0, "sequence is empty".into()));
        }
        for (i, s) in self.states.iter().enumerate() {
            spp.validate_state(network, s)
                .map_err(|e| invalid(i, e.to_string()))?;
        }
        for (i, pair) in self.states.windows(2).enumerate() {
            let (cur, next) = (&pair[0], &pair[1]);
            if network.is_destination(cur.link) {
                return Err(invalid(
                    i,
                    format!("state {cur} is already at the destination"),
                ));
            }
            if !network.is_adjacent(cur.link, next.link) {
                return Err(invalid(
                    i,
                    format!("link {} does not follow link {}", next.link, cur.link),
                ));
            }
            let tau =
                travel_time(network, spp, next.link, cur).map_err(|e| invalid(i, e.to_string()))?;
            if cur.time + tau != next.time {
                return Err(invalid(
                    i + 1,
                    format!(
                        "arrival time {} but {} + travel time {tau} = {}",
                        next.time,
                        cur.time,
                        cur.time + tau
                    ),
                ));
            }
            if !next.ev.is_subset_of(&cur.ev) {
                return Err(invalid(
                    i + 1,
                    format!("event collection {} is not inside {}", next.ev, cur.ev),
                ));
            }
        }
        let last = self.states.last().expect("non-empty");
        if !network.is_destination(last.link) {
            return Err(invalid(
                self.states.len() - 1,
                format!("final state {last} is not at the destination"),
            ));
        }
        Ok(())
    }
}

impl fmt::Display for StateSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.states.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

/// A mapping from the states reachable under its own decisions to next links.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingPolicy {
    initial_state: State,
    decisions: BTreeMap<State, LinkId>,
}

impl RoutingPolicy {
    pub fn new(initial_state: State, decisions: BTreeMap<State, LinkId>) -> Self {
        Self {
            initial_state,
            decisions,
        }
    }

    pub fn initial_state(&self) -> &State {
        &self.initial_state
    }

    pub fn decisions(&self) -> &BTreeMap<State, LinkId> {
        &self.decisions
    }

    pub fn decision(&self, state: &State) -> Option<LinkId> {
        self.decisions.get(state).copied()
    }

    /// Checks adjacency of every decision and that every reachable state is
    /// either mapped or at the destination, and that nothing else is mapped.
    pub fn validate(&self, network: &StdNetwork, spp: &SupportPointSet) -> Result<()> {
        for (state, &a) in &self.decisions {
            if !network.is_adjacent(state.link, a) {
                return Err(Error::NotAdjacent {
                    from: state.link,
                    next: a,
                });
            }
        }
        let rollouts = self.rollouts(network, spp)?;
        let mut visited = 0usize;
        let mut seen = std::collections::BTreeSet::new();
        for (seq, _) in &rollouts {
            for s in &seq.states()[..seq.len() - 1] {
                if seen.insert(s.clone()) {
                    visited += 1;
                }
            }
        }
        if visited != self.decisions.len() {
            return Err(Error::Validation(format!(
                "policy maps {} states but only {visited} are reachable under it",
                self.decisions.len()
            )));
        }
        Ok(())
    }

    /// Leaves of the policy's state tree: every trajectory the policy can
    /// produce, with its probability under nature's transitions.
    pub fn rollouts(
        &self,
        network: &StdNetwork,
        spp: &SupportPointSet,
    ) -> Result<Vec<(StateSequence, f64)>> {
        let mut out = Vec::new();
        let mut stack = vec![(vec![self.initial_state.clone()], 1.0)];
        while let Some((states, p)) = stack.pop() {
            let last = states.last().expect("non-empty");
            if network.is_destination(last.link) {
                out.push((StateSequence::new(states), p));
                continue;
            }
            let a = self
                .decision(last)
                .ok_or_else(|| Error::IncompletePolicy(last.to_string()))?;
            for (next, q) in successor_states(network, spp, last, a)?.into_iter().rev() {
                let mut extended = states.clone();
                extended.push(next);
                stack.push((extended, p * q));
            }
        }
        Ok(out)
    }

    /// Probability-weighted sum, over the policy's trajectories, of the
    /// accumulated attribute vectors.
    pub fn expected_attributes(
        &self,
        network: &StdNetwork,
        spp: &SupportPointSet,
        attributes: &[Attribute],
    ) -> Result<Vec<f64>> {
        let mut total = vec![0.0; attributes.len()];
        for (seq, p) in self.rollouts(network, spp)? {
            for pair in seq.states().windows(2) {
                let tau = pair[1].time - pair[0].time;
                for (acc, attr) in total.iter_mut().zip(attributes) {
                    *acc += p * attr.value(pair[1].link, tau);
                }
            }
        }
        Ok(total)
    }
}

/// Choice set of routing policies sharing one initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyChoiceSet {
    initial_state: State,
    policies: Vec<RoutingPolicy>,
}

impl PolicyChoiceSet {
    pub fn new(initial_state: State, policies: Vec<RoutingPolicy>) -> Result<Self> {
        for (i, p) in policies.iter().enumerate() {
            if p.initial_state != initial_state {
                return Err(Error::Validation(format!(
                    "policy {i} starts at {} instead of {initial_state}",
                    p.initial_state
                )));
            }
            if policies[..i].iter().any(|q| q.decisions == p.decisions) {
                return Err(Error::Validation(format!("policy {i} is a duplicate")));
            }
        }
        Ok(Self {
            initial_state,
            policies,
        })
    }

    pub fn initial_state(&self) -> &State {
        &self.initial_state
    }

    pub fn policies(&self) -> &[RoutingPolicy] {
        &self.policies
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    pub fn position(&self, policy: &RoutingPolicy) -> Option<usize> {
        self.policies.iter().position(|p| p == policy)
    }
}

type Decisions = Vec<(usize, LinkId)>;

/// Every routing policy from `initial`: one next link per reachable state,
/// combined over the state tree. Ordered by ascending link choices with the
/// earliest decision state varying slowest.
pub fn enumerate_policies(
    network: &StdNetwork,
    spp: &SupportPointSet,
    initial: &State,
    cap: usize,
) -> Result<PolicyChoiceSet> {
    let space = StateSpace::build(network, spp, std::slice::from_ref(initial), &[])?;
    let count = policy_count(&space);
    let root = space.roots()[0];
    if count[root] > cap as u128 {
        return Err(Error::CapExceeded {
            what: "routing policy",
            cap,
        });
    }

    let mut memo: Vec<Option<Arc<Vec<Decisions>>>> = vec![None; space.len()];
    for &idx in space.backward_order() {
        let node = space.node(idx);
        let lists = if node.terminal {
            vec![Vec::new()]
        } else {
            let mut lists = Vec::new();
            for transition in &node.transitions {
                let mut combos: Vec<Decisions> = vec![vec![(idx, transition.link)]];
                for &(next, _) in &transition.successors {
                    let sub = memo[next].as_ref().expect("successors are solved first");
                    combos = combos
                        .iter()
                        .flat_map(|prefix| {
                            sub.iter().map(move |tail| {
                                let mut joined = prefix.clone();
                                joined.extend_from_slice(tail);
                                joined
                            })
                        })
                        .collect();
                }
                lists.extend(combos);
            }
            lists
        };
        memo[idx] = Some(Arc::new(lists));
    }

    let policies = memo[root]
        .as_ref()
        .expect("root solved")
        .iter()
        .map(|decisions| {
            let map = decisions
                .iter()
                .map(|&(idx, a)| (space.node(idx).state.clone(), a))
                .collect();
            RoutingPolicy::new(initial.clone(), map)
        })
        .collect();
    PolicyChoiceSet::new(initial.clone(), policies)
}

fn policy_count(space: &StateSpace) -> Vec<u128> {
    let mut count = vec![0u128; space.len()];
    for &idx in space.backward_order() {
        let node = space.node(idx);
        count[idx] = if node.terminal {
            1
        } else {
            node.transitions
                .iter()
                .map(|t| {
                    t.successors
                        .iter()
                        .fold(1u128, |acc, &(next, _)| acc.saturating_mul(count[next]))
                })
                .fold(0u128, u128::saturating_add)
        };
    }
    count
}

/// Expected total deterministic utility of following `policy`.
pub fn policy_expected_utility(
    network: &StdNetwork,
    spp: &SupportPointSet,
    policy: &RoutingPolicy,
    utility: &LinkUtilitySpec,
) -> Result<f64> {
    let attrs = policy.expected_attributes(network, spp, utility.attributes())?;
    Ok(dot(utility.beta(), &attrs))
}

/// Whether `policy` maps every decision state of `seq` to the next observed link.
pub fn contains(policy: &RoutingPolicy, seq: &StateSequence) -> bool {
    let states = seq.states();
    if states.first() != Some(&policy.initial_state) {
        return false;
    }
    states
        .windows(2)
        .all(|pair| policy.decision(&pair[0]) == Some(pair[1].link))
}

/// Utility-maximizing routing policy by backward induction with `max`; ties go
/// to the lowest link identifier.
pub fn optimal_policy(
    network: &StdNetwork,
    spp: &SupportPointSet,
    initial: &State,
    utility: &LinkUtilitySpec,
) -> Result<(RoutingPolicy, ValueFunction)> {
    let space = Arc::new(StateSpace::build(
        network,
        spp,
        std::slice::from_ref(initial),
        utility.attributes(),
    )?);
    let vf = ValueFunction::solve(space.clone(), utility.beta(), Aggregation::Max);
    let mut decisions = BTreeMap::new();
    let mut stack = vec![space.roots()[0]];
    while let Some(idx) = stack.pop() {
        let node = space.node(idx);
        if node.terminal {
            continue;
        }
        let best = vf.best_transition(idx);
        let transition = &node.transitions[best];
        decisions.insert(node.state.clone(), transition.link);
        stack.extend(transition.successors.iter().map(|&(next, _)| next));
    }
    Ok((RoutingPolicy::new(initial.clone(), decisions), vf))
}
