//! Stochastic time-dependent networks.
//!
//! Link travel times are described by a finite set of support points, each a
//! complete realization of every link's travel time over the `K` stochastic
//! periods. Under perfect online information the traveler knows the travel
//! times of all links up to the current period, which narrows the support
//! points to an [`EventCollection`]. A decision is taken at a [`State`]: the end
//! of a link, the arrival time there and the current event collection.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PROBABILITY_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkId(pub u32);

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Link {
    pub id: LinkId,
    pub from: String,
    pub to: String,
}

/// Topology of a stochastic time-dependent network.
///
/// The origin link is a dummy with zero travel time: it is never an outgoing
/// link of anything. Every link whose head is the head node of the destination
/// link is absorbing, so trips end as soon as they reach the destination node.
#[derive(Debug, Clone)]
pub struct StdNetwork {
    nodes: Vec<String>,
    links: Vec<Link>,
    index: HashMap<LinkId, usize>,
    outgoing: Vec<Vec<LinkId>>,
    choices: Vec<Vec<LinkId>>,
    horizon: usize,
    origin: LinkId,
    destination: LinkId,
    destination_node: String,
}

impl StdNetwork {
    pub fn new(
        nodes: Vec<String>,
        mut links: Vec<Link>,
        origin: LinkId,
        destination: LinkId,
        horizon: usize,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Validation(
                "horizon must be at least one period".into(),
            ));
        }
        let node_set: HashSet<&str> = nodes.iter().map(String::as_str).collect();
        if node_set.len() != nodes.len() {
            return Err(Error::Validation("node identifiers must be unique".into()));
        }
        links.sort_by_key(|l| l.id);
        let mut index = HashMap::with_capacity(links.len());
        for (i, link) in links.iter().enumerate() {
            if index.insert(link.id, i).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate link identifier {}",
                    link.id
                )));
            }
            for end in [&link.from, &link.to] {
                if !node_set.contains(end.as_str()) {
                    return Err(Error::Validation(format!(
                        "link {} references unknown node {end:?}",
                        link.id
                    )));
                }
            }
        }
        let origin_idx = *index
            .get(&origin)
            .ok_or_else(|| Error::Validation(format!("origin link {origin} does not exist")))?;
        let dest_idx = *index.get(&destination).ok_or_else(|| {
            Error::Validation(format!("destination link {destination} does not exist"))
        })?;
        if origin == destination {
            return Err(Error::Validation(
                "origin and destination links must differ".into(),
            ));
        }
        let destination_node = links[dest_idx].to.clone();
        if links[origin_idx].to == destination_node {
            return Err(Error::Validation(
                "origin link already ends at the destination node".into(),
            ));
        }

        let outgoing: Vec<Vec<LinkId>> = links
            .iter()
            .map(|k| {
                if k.to == destination_node {
                    return Vec::new();
                }
                links
                    .iter()
                    .filter(|a| a.id != origin && a.from == k.to)
                    .map(|a| a.id)
                    .collect()
            })
            .collect();

        // Nodes from which the destination node can be reached.
        let mut reaches: HashSet<&str> = HashSet::new();
        let mut queue = VecDeque::from([destination_node.as_str()]);
        reaches.insert(destination_node.as_str());
        while let Some(node) = queue.pop_front() {
            for link in links.iter().filter(|l| l.id != origin && l.to == node) {
                if reaches.insert(link.from.as_str()) {
                    queue.push_back(link.from.as_str());
                }
            }
        }
        let choices: Vec<Vec<LinkId>> = outgoing
            .iter()
            .map(|out| {
                out.iter()
                    .copied()
                    .filter(|a| {
                        let head = links[index[a]].to.as_str();
                        head == destination_node || reaches.contains(head)
                    })
                    .collect()
            })
            .collect();
        if choices[origin_idx].is_empty() {
            return Err(Error::Validation(format!(
                "destination unreachable from origin link {origin}"
            )));
        }

        Ok(Self {
            nodes,
            links,
            index,
            outgoing,
            choices,
            horizon,
            origin,
            destination,
            destination_node,
        })
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    /// Links in ascending identifier order.
    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn link(&self, id: LinkId) -> Result<&Link> {
        self.index_of(id).map(|i| &self.links[i])
    }

    pub fn index_of(&self, id: LinkId) -> Result<usize> {
        self.index.get(&id).copied().ok_or(Error::UnknownLink(id))
    }

    /// Number of stochastic periods `K`.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn origin(&self) -> LinkId {
        self.origin
    }

    pub fn destination(&self) -> LinkId {
        self.destination
    }

    pub fn destination_node(&self) -> &str {
        &self.destination_node
    }

    pub fn is_destination(&self, link: LinkId) -> bool {
        self.index
            .get(&link)
            .is_some_and(|&i| self.links[i].to == self.destination_node)
    }

    /// The outgoing set `A(k)`, ascending by identifier. Empty for absorbing links.
    pub fn outgoing(&self, link: LinkId) -> Result<&[LinkId]> {
        self.index_of(link).map(|i| self.outgoing[i].as_slice())
    }

    /// `A(k)` restricted to links from which the destination can still be reached.
    pub fn choices(&self, link: LinkId) -> Result<&[LinkId]> {
        self.index_of(link).map(|i| self.choices[i].as_slice())
    }

    /// Adjacency indicator: 1 iff `a` is in `A(k)`.
    pub fn is_adjacent(&self, link: LinkId, next: LinkId) -> bool {
        self.outgoing(link).is_ok_and(|out| out.contains(&next))
    }
}

/// Canonically ordered, non-empty set of support-point indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct EventCollection(Vec<usize>);

impl EventCollection {
    pub fn new(mut members: Vec<usize>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Validation(
                "event collection must be non-empty".into(),
            ));
        }
        members.sort_unstable();
        members.dedup();
        Ok(Self(members))
    }

    pub fn members(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_singleton(&self) -> bool {
        self.0.len() == 1
    }

    pub fn contains(&self, r: usize) -> bool {
        self.0.binary_search(&r).is_ok()
    }

    pub fn intersects(&self, other: &EventCollection) -> bool {
        self.0.iter().any(|&r| other.contains(r))
    }

    pub fn is_subset_of(&self, other: &EventCollection) -> bool {
        self.0.iter().all(|&r| other.contains(r))
    }
}

impl TryFrom<Vec<usize>> for EventCollection {
    type Error = Error;

    fn try_from(members: Vec<usize>) -> Result<Self> {
        Self::new(members)
    }
}

impl From<EventCollection> for Vec<usize> {
    fn from(ev: EventCollection) -> Self {
        ev.0
    }
}

impl fmt::Display for EventCollection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, r) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{r}")?;
        }
        f.write_str("}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct State {
    pub link: LinkId,
    pub time: u32,
    pub ev: EventCollection,
}

impl State {
    pub fn new(link: LinkId, time: u32, ev: EventCollection) -> Self {
        Self { link, time, ev }
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} {} {})", self.link, self.time, self.ev)
    }
}

/// Joint discrete distribution of all link travel times over all periods.
#[derive(Debug, Clone)]
pub struct SupportPointSet {
    probabilities: Vec<f64>,
    // [r][period][link index], flattened
    times: Vec<u32>,
    links: usize,
    periods: usize,
    partitions: Vec<Vec<EventCollection>>,
    class_of: Vec<Vec<usize>>,
    max_tail_time: u32,
}

impl SupportPointSet {
    /// `travel_times[r][period][link index]`, with links in the network's
    /// ascending identifier order. The origin link's entries must be zero.
    pub fn new(
        network: &StdNetwork,
        probabilities: Vec<f64>,
        travel_times: Vec<Vec<Vec<u32>>>,
    ) -> Result<Self> {
        let r_count = probabilities.len();
        if r_count == 0 {
            return Err(Error::Validation(
                "at least one support point is required".into(),
            ));
        }
        if travel_times.len() != r_count {
            return Err(Error::Validation(format!(
                "{} probabilities but {} travel-time tables",
                r_count,
                travel_times.len()
            )));
        }
        for (r, &p) in probabilities.iter().enumerate() {
            if !(p.is_finite() && p > 0.0) {
                return Err(Error::Validation(format!(
                    "support point {r} has non-positive probability {p}"
                )));
            }
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
            return Err(Error::Validation(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }

        let periods = network.horizon();
        let links = network.link_count();
        let origin_idx = network.index_of(network.origin())?;
        let mut times = Vec::with_capacity(r_count * periods * links);
        for (r, table) in travel_times.iter().enumerate() {
            if table.len() != periods {
                return Err(Error::Validation(format!(
                    "support point {r} has {} periods, expected {periods}",
                    table.len()
                )));
            }
            for (t, row) in table.iter().enumerate() {
                if row.len() != links {
                    return Err(Error::Validation(format!(
                        "support point {r} period {t} has {} links, expected {links}",
                        row.len()
                    )));
                }
                for (i, &tau) in row.iter().enumerate() {
                    let id = network.links()[i].id;
                    if i == origin_idx && tau != 0 {
                        return Err(Error::Validation(format!(
                            "origin link {id} must have zero travel time"
                        )));
                    }
                    if i != origin_idx && tau == 0 {
                        return Err(Error::Validation(format!(
                            "zero travel time on link {id} at period {t} in support point {r}"
                        )));
                    }
                }
                times.extend_from_slice(row);
            }
        }

        let mut set = Self {
            probabilities,
            times,
            links,
            periods,
            partitions: Vec::with_capacity(periods),
            class_of: Vec::with_capacity(periods),
            max_tail_time: 0,
        };
        set.max_tail_time = (0..r_count)
            .flat_map(|r| set.row(r, periods - 1).iter().copied())
            .max()
            .unwrap_or(0);
        set.build_partitions();
        Ok(set)
    }

    fn row(&self, r: usize, period: usize) -> &[u32] {
        let start = (r * self.periods + period) * self.links;
        &self.times[start..start + self.links]
    }

    fn build_partitions(&mut self) {
        let r_count = self.probabilities.len();
        let mut previous = vec![0usize; r_count];
        for period in 0..self.periods {
            // Refine the previous classes by this period's full travel-time vector;
            // scanning r ascending keeps classes ordered by smallest member.
            let mut keys: Vec<(usize, &[u32])> = Vec::new();
            let mut class_of = vec![0usize; r_count];
            let mut members: Vec<Vec<usize>> = Vec::new();
            for r in 0..r_count {
                let key = (previous[r], self.row(r, period));
                let class = match keys.iter().position(|k| *k == key) {
                    Some(c) => c,
                    None => {
                        keys.push(key);
                        members.push(Vec::new());
                        keys.len() - 1
                    }
                };
                class_of[r] = class;
                members[class].push(r);
            }
            previous.clone_from(&class_of);
            self.partitions
                .push(members.into_iter().map(EventCollection).collect());
            self.class_of.push(class_of);
        }
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    /// Lookup period for time `t`; the last period covers every later time.
    pub fn period(&self, time: u32) -> usize {
        (time as usize).min(self.periods - 1)
    }

    /// Travel time of the link at position `link_idx` in support point `r`.
    pub fn time_of(&self, r: usize, time: u32, link_idx: usize) -> u32 {
        self.row(r, self.period(time))[link_idx]
    }

    pub fn is_deterministic(&self) -> bool {
        self.probabilities.len() == 1
    }

    /// Largest travel time of any link in the static tail period.
    pub fn max_tail_time(&self) -> u32 {
        self.max_tail_time
    }

    /// Partition of the support points into event collections at time `t`.
    pub fn event_collections_at(&self, time: u32) -> &[EventCollection] {
        &self.partitions[self.period(time)]
    }

    /// Index of the class containing support point `r` at time `t`.
    pub fn class_index(&self, time: u32, r: usize) -> usize {
        self.class_of[self.period(time)][r]
    }

    pub fn mass(&self, ev: &EventCollection) -> f64 {
        ev.members().iter().map(|&r| self.probabilities[r]).sum()
    }

    /// Checks that `ev` is one of the classes of the partition at time `t`.
    pub fn validate_event_collection(&self, time: u32, ev: &EventCollection) -> Result<usize> {
        if let Some(&r) = ev.members().iter().find(|&&r| r >= self.len()) {
            return Err(Error::Validation(format!(
                "event collection {ev} references support point {r}, only {} exist",
                self.len()
            )));
        }
        let class = self.class_index(time, ev.members()[0]);
        if &self.event_collections_at(time)[class] != ev {
            return Err(Error::Validation(format!(
                "{ev} is not an event collection at time {time}"
            )));
        }
        Ok(class)
    }

    pub fn validate_state(&self, network: &StdNetwork, state: &State) -> Result<usize> {
        network.index_of(state.link)?;
        self.validate_event_collection(state.time, &state.ev)
    }
}

/// Partition of `{0..R}` into event collections at time `t`.
pub fn event_collections_at(spp: &SupportPointSet, time: u32) -> Vec<EventCollection> {
    spp.event_collections_at(time).to_vec()
}

/// Probability of moving to `next` given the current collection `ev`.
pub fn transition_prob(spp: &SupportPointSet, next: &EventCollection, ev: &EventCollection) -> f64 {
    let joint: f64 = next
        .members()
        .iter()
        .filter(|&&r| ev.contains(r))
        .map(|&r| spp.probabilities[r])
        .sum();
    joint / spp.mass(ev)
}

/// Latest arrival time a non-absorbing state may have.
pub fn max_trip_time(network: &StdNetwork, spp: &SupportPointSet) -> u32 {
    let k = network.horizon() as u32;
    k + network.link_count() as u32 * spp.max_tail_time()
}

/// Travel time of `next` when entered from `state`; all members of the event
/// collection must agree on it.
pub fn travel_time(
    network: &StdNetwork,
    spp: &SupportPointSet,
    next: LinkId,
    state: &State,
) -> Result<u32> {
    if !network.is_adjacent(state.link, next) {
        return Err(Error::NotAdjacent {
            from: state.link,
            next,
        });
    }
    let idx = network.index_of(next)?;
    let members = state.ev.members();
    if let Some(&r) = members.iter().find(|&&r| r >= spp.len()) {
        return Err(Error::Validation(format!(
            "event collection {} references support point {r}",
            state.ev
        )));
    }
    let tau = spp.time_of(members[0], state.time, idx);
    if members[1..]
        .iter()
        .any(|&r| spp.time_of(r, state.time, idx) != tau)
    {
        return Err(Error::PoiInconsistent {
            link: next,
            time: state.time,
            members: members.to_vec(),
        });
    }
    Ok(tau)
}

/// Markov transition: the possible states at the end of `next` with their probabilities.
pub fn successor_states(
    network: &StdNetwork,
    spp: &SupportPointSet,
    state: &State,
    next: LinkId,
) -> Result<Vec<(State, f64)>> {
    let tau = travel_time(network, spp, next, state)?;
    let arrival = state.time + tau;
    let limit = max_trip_time(network, spp);
    if arrival > limit && !network.is_destination(next) {
        return Err(Error::Horizon {
            link: next,
            time: arrival,
            horizon: limit,
        });
    }
    let partition = spp.event_collections_at(arrival);
    let mut seen: Vec<usize> = Vec::new();
    for &r in state.ev.members() {
        let class = spp.class_index(arrival, r);
        if !seen.contains(&class) {
            seen.push(class);
        }
    }
    seen.sort_unstable();
    Ok(seen
        .into_iter()
        .map(|class| {
            let ev = partition[class].clone();
            let p = transition_prob(spp, &ev, &state.ev);
            (State::new(next, arrival, ev), p)
        })
        .collect())
}

/// Initial states at the origin at time zero, one per event collection of period 0.
pub fn origin_states(network: &StdNetwork, spp: &SupportPointSet) -> Vec<State> {
    spp.event_collections_at(0)
        .iter()
        .map(|ev| State::new(network.origin(), 0, ev.clone()))
        .collect()
}
