//! Reachable time-expanded state space.
//!
//! Every transition strictly increases time, so ordering states by decreasing
//! arrival time is a topological order of the successor relation.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::network::{successor_states, travel_time, LinkId, State, StdNetwork, SupportPointSet};
use crate::utility::Attribute;

#[derive(Debug, Clone)]
pub struct Transition {
    pub link: LinkId,
    pub travel_time: u32,
    pub attributes: Vec<f64>,
    /// Successor node indices with their probabilities.
    pub successors: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct StateNode {
    pub state: State,
    pub terminal: bool,
    /// One entry per link in `A(k)` that can reach the destination, ascending.
    pub transitions: Vec<Transition>,
}

#[derive(Debug, Clone)]
pub struct StateSpace {
    nodes: Vec<StateNode>,
    index: HashMap<State, usize>,
    roots: Vec<usize>,
    backward: Vec<usize>,
    attributes: Vec<Attribute>,
}

impl StateSpace {
    /// Explores every state reachable from `roots`, recording the attribute
    /// vector of each transition.
    pub fn build(
        network: &StdNetwork,
        spp: &SupportPointSet,
        roots: &[State],
        attributes: &[Attribute],
    ) -> Result<Self> {
        let mut space = Self {
            nodes: Vec::new(),
            index: HashMap::new(),
            roots: Vec::with_capacity(roots.len()),
            backward: Vec::new(),
            attributes: attributes.to_vec(),
        };
        let mut stack = Vec::new();
        for root in roots {
            spp.validate_state(network, root)?;
            let (idx, fresh) = space.intern(network, root.clone());
            if fresh {
                stack.push(idx);
            }
            space.roots.push(idx);
        }
        while let Some(idx) = stack.pop() {
            if space.nodes[idx].terminal {
                continue;
            }
            let state = space.nodes[idx].state.clone();
            let choices = network.choices(state.link)?;
            if choices.is_empty() {
                return Err(Error::Unreachable(state.link));
            }
            let mut transitions = Vec::with_capacity(choices.len());
            for &a in choices {
                let tau = travel_time(network, spp, a, &state)?;
                let mut successors = Vec::new();
                for (next, p) in successor_states(network, spp, &state, a)? {
                    let (next_idx, fresh) = space.intern(network, next);
                    if fresh {
                        stack.push(next_idx);
                    }
                    successors.push((next_idx, p));
                }
                transitions.push(Transition {
                    link: a,
                    travel_time: tau,
                    attributes: attributes.iter().map(|x| x.value(a, tau)).collect(),
                    successors,
                });
            }
            space.nodes[idx].transitions = transitions;
        }
        let mut backward: Vec<usize> = (0..space.nodes.len()).collect();
        backward.sort_by(|&a, &b| {
            space.nodes[b]
                .state
                .time
                .cmp(&space.nodes[a].state.time)
                .then(a.cmp(&b))
        });
        space.backward = backward;
        Ok(space)
    }

    fn intern(&mut self, network: &StdNetwork, state: State) -> (usize, bool) {
        if let Some(&i) = self.index.get(&state) {
            return (i, false);
        }
        let i = self.nodes.len();
        self.index.insert(state.clone(), i);
        self.nodes.push(StateNode {
            terminal: network.is_destination(state.link),
            state,
            transitions: Vec::new(),
        });
        (i, true)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[StateNode] {
        &self.nodes
    }

    pub fn node(&self, idx: usize) -> &StateNode {
        &self.nodes[idx]
    }

    pub fn roots(&self) -> &[usize] {
        &self.roots
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn index_of(&self, state: &State) -> Option<usize> {
        self.index.get(state).copied()
    }

    pub fn require(&self, state: &State) -> Result<usize> {
        self.index_of(state)
            .ok_or_else(|| Error::UnknownState(state.to_string()))
    }

    /// Node indices in decreasing arrival time.
    pub fn backward_order(&self) -> &[usize] {
        &self.backward
    }

    /// Expands every trajectory from `root` to the destination, weighting each
    /// step with `step_weight(node, transition index, successor probability)`.
    /// Trajectories of zero weight are dropped.
    pub(crate) fn trajectories<F>(
        &self,
        root: usize,
        cap: usize,
        mut step_weight: F,
    ) -> Result<Vec<(Vec<usize>, f64)>>
    where
        F: FnMut(usize, usize, f64) -> f64,
    {
        let mut out = Vec::new();
        let mut stack = vec![(vec![root], 1.0)];
        while let Some((path, weight)) = stack.pop() {
            let last = *path.last().expect("non-empty path");
            let node = &self.nodes[last];
            if node.terminal {
                if out.len() == cap {
                    return Err(Error::CapExceeded {
                        what: "state sequence",
                        cap,
                    });
                }
                out.push((path, weight));
                continue;
            }
            // Reverse push keeps the output in ascending link / collection order.
            for (ti, transition) in node.transitions.iter().enumerate().rev() {
                for &(next, p) in transition.successors.iter().rev() {
                    let w = weight * step_weight(last, ti, p);
                    if w > 0.0 {
                        let mut extended = path.clone();
                        extended.push(next);
                        stack.push((extended, w));
                    }
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::origin_states;

    #[test]
    fn figure_one_has_seven_states() {
        let (net, spp) = crate::io::load_network(include_str!("../fixtures/figure1.json")).unwrap();
        let space = StateSpace::build(
            &net,
            &spp,
            &origin_states(&net, &spp),
            &[Attribute::TravelTime],
        )
        .unwrap();
        // origin, two states at node b, and {2,4,v1},{3,3,v1},{2,3,v2},{3,3,v2}
        assert_eq!(space.len(), 7);
        let order = space.backward_order();
        for w in order.windows(2) {
            assert!(space.node(w[0]).state.time >= space.node(w[1]).state.time);
        }
        let all = space
            .trajectories(space.roots()[0], 100, |_, _, p| p)
            .unwrap();
        assert_eq!(all.len(), 4);
        let total: f64 = all.iter().map(|(_, w)| w).sum();
        assert_eq!(total, 2.0);
    }
}
