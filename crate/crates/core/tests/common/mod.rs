#![allow(dead_code)]

use std::collections::BTreeMap;

use policy_choice::io::{LinkRecord, NetworkDocument, SupportPointRecord};
use policy_choice::{EventCollection, LinkId, State, StdNetwork, SupportPointSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FIGURE1: &str = include_str!("../../fixtures/figure1.json");

pub fn figure1() -> (StdNetwork, SupportPointSet) {
    policy_choice::io::load_network(FIGURE1).unwrap()
}

/// A network kept in plain tables so oracles can be computed without the
/// library's state machinery.
#[derive(Debug, Clone)]
pub struct RawNet {
    pub doc: NetworkDocument,
    /// (id, from, to), origin link first.
    pub links: Vec<(u32, usize, usize)>,
    pub dest_node: usize,
    pub probs: Vec<f64>,
    /// times[r][period][link position]
    pub times: Vec<Vec<Vec<u32>>>,
}

pub struct GenOptions {
    pub max_links: usize,
    pub max_support: usize,
    pub max_periods: usize,
    pub max_time: u32,
}

pub const SMALL: GenOptions = GenOptions {
    max_links: 6,
    max_support: 3,
    max_periods: 3,
    max_time: 3,
};

/// Random acyclic network: a chain n0 -> n1 -> ... -> n_last plus random
/// forward links, with random support points.
pub fn random_network(seed: u64, opts: &GenOptions) -> RawNet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = rng.gen_range(3..=4usize);
    let mut arcs: Vec<(usize, usize)> = (0..nodes - 1).map(|i| (i, i + 1)).collect();
    while arcs.len() < opts.max_links && rng.gen_bool(0.75) {
        let from = rng.gen_range(0..nodes - 1);
        let to = rng.gen_range(from + 1..nodes);
        arcs.push((from, to));
    }
    arcs.sort();
    let mut links = vec![(0u32, 0usize, 0usize)];
    for (i, &(f, t)) in arcs.iter().enumerate() {
        links.push((i as u32 + 1, f, t));
    }
    let dest_node = nodes - 1;
    let destination = links.iter().find(|l| l.2 == dest_node).unwrap().0;

    let support = rng.gen_range(1..=opts.max_support);
    let periods = rng.gen_range(1..=opts.max_periods);
    let weights: Vec<f64> = (0..support).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let mut probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let head: f64 = probs[..support - 1].iter().sum();
    probs[support - 1] = 1.0 - head;

    let times: Vec<Vec<Vec<u32>>> = (0..support)
        .map(|_| {
            (0..periods)
                .map(|_| {
                    links
                        .iter()
                        .map(|l| {
                            if l.0 == 0 {
                                0
                            } else {
                                rng.gen_range(1..=opts.max_time)
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    let doc = NetworkDocument {
        nodes: (0..nodes).map(|i| format!("n{i}")).collect(),
        links: links
            .iter()
            .map(|&(id, f, t)| LinkRecord {
                id,
                from: format!("n{f}"),
                to: format!("n{t}"),
            })
            .collect(),
        origin_link: 0,
        destination_link: destination,
        horizon: periods,
        support_points: (0..support)
            .map(|r| SupportPointRecord {
                probability: probs[r],
                travel_times: links
                    .iter()
                    .enumerate()
                    .skip(1)
                    .map(|(i, l)| {
                        (
                            l.0.to_string(),
                            (0..periods).map(|k| times[r][k][i]).collect(),
                        )
                    })
                    .collect(),
            })
            .collect(),
    };
    RawNet {
        doc,
        links,
        dest_node,
        probs,
        times,
    }
}

impl RawNet {
    pub fn build(&self) -> (StdNetwork, SupportPointSet) {
        self.doc.build().unwrap()
    }

    pub fn periods(&self) -> usize {
        self.times[0].len()
    }

    fn period(&self, t: u32) -> usize {
        (t as usize).min(self.periods() - 1)
    }

    pub fn pos(&self, id: u32) -> usize {
        self.links.iter().position(|l| l.0 == id).unwrap()
    }

    pub fn tau(&self, r: usize, t: u32, id: u32) -> u32 {
        self.times[r][self.period(t)][self.pos(id)]
    }

    /// Support points whose times agree with `r` on every link in every
    /// period up to `t`.
    pub fn class_of(&self, r: usize, t: u32) -> Vec<usize> {
        let last = self.period(t);
        (0..self.probs.len())
            .filter(|&q| (0..=last).all(|k| self.times[q][k] == self.times[r][k]))
            .collect()
    }

    pub fn classes_at(&self, t: u32) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = (0..self.probs.len()).map(|r| self.class_of(r, t)).collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn mass(&self, members: &[usize]) -> f64 {
        members.iter().map(|&r| self.probs[r]).sum()
    }

    pub fn is_terminal(&self, id: u32) -> bool {
        self.links[self.pos(id)].2 == self.dest_node
    }

    /// Links leaving the head of `id`, ascending.
    pub fn choices(&self, id: u32) -> Vec<u32> {
        let head = self.links[self.pos(id)].2;
        self.links
            .iter()
            .filter(|l| l.0 != 0 && l.1 == head)
            .map(|l| l.0)
            .collect()
    }

    pub fn state(&self, link: u32, time: u32, members: Vec<usize>) -> State {
        State::new(LinkId(link), time, EventCollection::new(members).unwrap())
    }

    pub fn origin_states(&self) -> Vec<State> {
        self.classes_at(0)
            .into_iter()
            .map(|c| self.state(0, 0, c))
            .collect()
    }

    /// Successors of taking `next` at (link, t, ev): arrival time and class
    /// with its conditional probability.
    pub fn successors(&self, t: u32, ev: &[usize], next: u32) -> Vec<(u32, Vec<usize>, f64)> {
        let tau = self.tau(ev[0], t, next);
        let arrival = t + tau;
        let mut out: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        for &r in ev {
            let class: Vec<usize> = self
                .class_of(r, arrival)
                .into_iter()
                .filter(|q| ev.contains(q))
                .collect();
            *out.entry(class).or_insert(0.0) += self.probs[r];
        }
        let m = self.mass(ev);
        out.into_iter().map(|(c, p)| (arrival, c, p / m)).collect()
    }

    /// Log-sum value function with travel-time utility `beta * tau`, by plain
    /// memoized recursion.
    pub fn value(
        &self,
        beta: f64,
        mu: f64,
        link: u32,
        t: u32,
        ev: &[usize],
        memo: &mut BTreeMap<(u32, u32, Vec<usize>), f64>,
    ) -> f64 {
        if self.is_terminal(link) {
            return 0.0;
        }
        if let Some(&v) = memo.get(&(link, t, ev.to_vec())) {
            return v;
        }
        let q = self.q_values(beta, mu, link, t, ev, memo);
        let m = q.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
        let v = m + mu * q.iter().map(|x| ((x.1 - m) / mu).exp()).sum::<f64>().ln();
        memo.insert((link, t, ev.to_vec()), v);
        v
    }

    pub fn q_values(
        &self,
        beta: f64,
        mu: f64,
        link: u32,
        t: u32,
        ev: &[usize],
        memo: &mut BTreeMap<(u32, u32, Vec<usize>), f64>,
    ) -> Vec<(u32, f64)> {
        self.choices(link)
            .into_iter()
            .map(|a| {
                let tau = self.tau(ev[0], t, a);
                let downstream: f64 = self
                    .successors(t, ev, a)
                    .into_iter()
                    .map(|(t2, c, p)| p * self.value(beta, mu, a, t2, &c, memo))
                    .sum();
                (a, beta * f64::from(tau) + downstream)
            })
            .collect()
    }

    /// Deterministic trajectory under realization `r` following `decide`.
    pub fn rollout(
        &self,
        r: usize,
        start: &State,
        mut decide: impl FnMut(&State) -> LinkId,
    ) -> (Vec<State>, f64) {
        let mut state = start.clone();
        let mut states = vec![state.clone()];
        let mut total_time = 0.0;
        while !self.is_terminal(state.link.0) {
            let a = decide(&state).0;
            let tau = self.tau(r, state.time, a);
            total_time += f64::from(tau);
            let t = state.time + tau;
            let class: Vec<usize> = self
                .class_of(r, t)
                .into_iter()
                .filter(|q| state.ev.contains(*q))
                .collect();
            state = self.state(a, t, class);
            states.push(state.clone());
        }
        (states, total_time)
    }
}

/// Networks that the library accepts; the generator never produces anything
/// else, but a rejection would be a library bug worth surfacing.
pub fn random_networks(seeds: impl IntoIterator<Item = u64>, opts: &GenOptions) -> Vec<RawNet> {
    seeds.into_iter().map(|s| random_network(s, opts)).collect()
}
