//! Recursive logit: a logit over outgoing links at every state, with expected
//! downstream value functions from a log-sum Bellman recursion.
//!
//! Time strictly increases along every transition, so the value functions are
//! computed exactly by one backward pass over the reachable states in
//! decreasing arrival time; no fixed-point iteration is involved.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::logsum::{log_softmax, scaled_log_sum, softmax};
use crate::network::{origin_states, LinkId, State, StdNetwork, SupportPointSet};
use crate::policy::StateSequence;
use crate::state_space::StateSpace;
use crate::utility::{dot, LinkUtilitySpec};

/// How the per-link values at a state are combined into the state's value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Aggregation {
    /// `mu ln Σ exp(q / mu)`: expected maximum utility under Gumbel noise.
    LogSum { mu: f64 },
    /// `max q`: deterministic choice, the optimal routing policy recursion.
    Max,
}

/// Solved value functions over a reachable state space.
#[derive(Debug, Clone)]
pub struct ValueFunction {
    space: Arc<StateSpace>,
    beta: Vec<f64>,
    aggregation: Aggregation,
    values: Vec<f64>,
}

impl ValueFunction {
    pub fn solve(space: Arc<StateSpace>, beta: &[f64], aggregation: Aggregation) -> Self {
        let mut values = vec![0.0; space.len()];
        for &idx in space.backward_order() {
            let node = space.node(idx);
            if node.terminal {
                continue;
            }
            let q = q_at(&space, beta, &values, idx);
            values[idx] = match aggregation {
                Aggregation::LogSum { mu } => scaled_log_sum(&q, mu),
                Aggregation::Max => q.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            };
        }
        Self {
            space,
            beta: beta.to_vec(),
            aggregation,
            values,
        }
    }

    pub fn space(&self) -> &Arc<StateSpace> {
        &self.space
    }

    pub fn aggregation(&self) -> Aggregation {
        self.aggregation
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn value(&self, state: &State) -> Option<f64> {
        self.space.index_of(state).map(|i| self.values[i])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Deterministic utility plus expected downstream value, per transition of node `idx`.
    pub fn q_at(&self, idx: usize) -> Vec<f64> {
        q_at(&self.space, &self.beta, &self.values, idx)
    }

    pub fn q_values(&self, state: &State) -> Result<Vec<(LinkId, f64)>> {
        let idx = self.space.require(state)?;
        let links = self.space.node(idx).transitions.iter().map(|t| t.link);
        Ok(links.zip(self.q_at(idx)).collect())
    }

    /// Choice probabilities over the transitions of node `idx`.
    pub fn choice_probs_at(&self, idx: usize) -> Vec<f64> {
        let q = self.q_at(idx);
        match self.aggregation {
            Aggregation::LogSum { mu } => softmax(&q, mu),
            Aggregation::Max => {
                let best = self.best_transition(idx);
                (0..q.len())
                    .map(|i| if i == best { 1.0 } else { 0.0 })
                    .collect()
            }
        }
    }

    pub fn log_choice_probs_at(&self, idx: usize) -> Vec<f64> {
        match self.aggregation {
            Aggregation::LogSum { mu } => log_softmax(&self.q_at(idx), mu),
            Aggregation::Max => self.choice_probs_at(idx).into_iter().map(f64::ln).collect(),
        }
    }

    pub fn choice_probabilities(&self, state: &State) -> Result<Vec<(LinkId, f64)>> {
        let idx = self.space.require(state)?;
        let links = self.space.node(idx).transitions.iter().map(|t| t.link);
        Ok(links.zip(self.choice_probs_at(idx)).collect())
    }

    /// Index of the first transition attaining the maximum `q`.
    pub fn best_transition(&self, idx: usize) -> usize {
        let q = self.q_at(idx);
        let mut best = 0;
        for (i, &v) in q.iter().enumerate() {
            if v > q[best] {
                best = i;
            }
        }
        best
    }

    fn transition_index(&self, idx: usize, link: LinkId) -> Option<usize> {
        self.space
            .node(idx)
            .transitions
            .iter()
            .position(|t| t.link == link)
    }

    fn successor_probability(&self, idx: usize, ti: usize, next: &State) -> Option<f64> {
        self.space.node(idx).transitions[ti]
            .successors
            .iter()
            .find(|&&(j, _)| &self.space.node(j).state == next)
            .map(|&(_, p)| p)
    }
}

fn q_at(space: &StateSpace, beta: &[f64], values: &[f64], idx: usize) -> Vec<f64> {
    space
        .node(idx)
        .transitions
        .iter()
        .map(|t| {
            let downstream: f64 = t.successors.iter().map(|&(j, p)| p * values[j]).sum();
            dot(beta, &t.attributes) + downstream
        })
        .collect()
}

/// Value functions for every state reachable from the origin at time zero.
pub fn solve_value_functions(
    network: &StdNetwork,
    spp: &SupportPointSet,
    utility: &LinkUtilitySpec,
) -> Result<ValueFunction> {
    solve_value_functions_from(network, spp, utility, &origin_states(network, spp))
}

pub fn solve_value_functions_from(
    network: &StdNetwork,
    spp: &SupportPointSet,
    utility: &LinkUtilitySpec,
    roots: &[State],
) -> Result<ValueFunction> {
    let space = StateSpace::build(network, spp, roots, utility.attributes())?;
    Ok(ValueFunction::solve(
        Arc::new(space),
        utility.beta(),
        Aggregation::LogSum { mu: utility.mu() },
    ))
}

/// Probability of taking `next` at `state`. `next` must be one of the state's
/// choices: a link of `A(k)` from which the destination is reachable.
pub fn link_choice_prob(vf: &ValueFunction, state: &State, next: LinkId) -> Result<f64> {
    let idx = vf.space.require(state)?;
    match vf.transition_index(idx, next) {
        Some(ti) => Ok(vf.choice_probs_at(idx)[ti]),
        None => Err(Error::NotAdjacent {
            from: state.link,
            next,
        }),
    }
}

/// `ln P(σ)` as the sum over steps of log link-choice and log transition probabilities.
pub fn sequence_log_likelihood(vf: &ValueFunction, seq: &StateSequence) -> Result<f64> {
    let states = seq.states();
    let mut total = 0.0;
    for (i, pair) in states.windows(2).enumerate() {
        let idx = vf.space.require(&pair[0])?;
        let ti = vf
            .transition_index(idx, pair[1].link)
            .ok_or_else(|| Error::InvalidSequence {
                step: i,
                reason: format!("link {} is not a choice at {}", pair[1].link, pair[0]),
            })?;
        let p =
            vf.successor_probability(idx, ti, &pair[1])
                .ok_or_else(|| Error::InvalidSequence {
                    step: i + 1,
                    reason: format!("{} cannot follow {}", pair[1], pair[0]),
                })?;
        total += vf.log_choice_probs_at(idx)[ti] + p.ln();
    }
    Ok(total)
}

/// Likelihood of a state sequence: product over steps of the link choice
/// probability and the event-collection transition probability.
pub fn sequence_likelihood(
    vf: &ValueFunction,
    network: &StdNetwork,
    spp: &SupportPointSet,
    seq: &StateSequence,
) -> Result<f64> {
    seq.validate(network, spp)?;
    sequence_log_likelihood(vf, seq).map(f64::exp)
}

/// The same likelihood written with the state's value function as the
/// normalizer: `Π exp((q(k_{i+1}) - V(k_i, t_i, EV_i)) / mu) Pr(EV_{i+1} | EV_i)`.
pub fn sequence_likelihood_value_form(vf: &ValueFunction, seq: &StateSequence) -> Result<f64> {
    let Aggregation::LogSum { mu } = vf.aggregation else {
        return Err(Error::Utility(
            "value form requires a log-sum value function".into(),
        ));
    };
    let mut product = 1.0;
    for (i, pair) in seq.states().windows(2).enumerate() {
        let idx = vf.space.require(&pair[0])?;
        let invalid = || Error::InvalidSequence {
            step: i,
            reason: format!("{} cannot follow {}", pair[1], pair[0]),
        };
        let ti = vf.transition_index(idx, pair[1].link).ok_or_else(invalid)?;
        let p = vf
            .successor_probability(idx, ti, &pair[1])
            .ok_or_else(invalid)?;
        product *= ((vf.q_at(idx)[ti] - vf.values[idx]) / mu).exp() * p;
    }
    Ok(product)
}

/// Every sequence from `initial` with its likelihood, in ascending link /
/// event-collection order. Zero-probability sequences are omitted.
pub fn sequence_probabilities(
    vf: &ValueFunction,
    initial: &State,
    cap: usize,
) -> Result<Vec<(StateSequence, f64)>> {
    let root = vf.space.require(initial)?;
    let mut probs: Vec<Option<Vec<f64>>> = vec![None; vf.space.len()];
    let trajectories = vf.space.trajectories(root, cap, |idx, ti, p| {
        let choice = probs[idx].get_or_insert_with(|| vf.choice_probs_at(idx));
        choice[ti] * p
    })?;
    Ok(trajectories
        .into_iter()
        .map(|(path, w)| {
            let states = path
                .iter()
                .map(|&i| vf.space.node(i).state.clone())
                .collect();
            (StateSequence::new(states), w)
        })
        .collect())
}

/// Sequence likelihoods aggregated by the traversed link path.
pub fn path_probabilities(
    vf: &ValueFunction,
    initial: &State,
    cap: usize,
) -> Result<BTreeMap<Vec<LinkId>, f64>> {
    let mut out = BTreeMap::new();
    for (seq, p) in sequence_probabilities(vf, initial, cap)? {
        *out.entry(seq.path()).or_insert(0.0) += p;
    }
    Ok(out)
}

/// Draws trajectories by alternately sampling a link from the state's logit
/// and the next event collection from the transition probabilities.
#[derive(Debug, Clone)]
pub struct RecursiveSampler<'a> {
    vf: &'a ValueFunction,
    choice_cdf: Vec<Vec<f64>>,
}

impl<'a> RecursiveSampler<'a> {
    pub fn new(vf: &'a ValueFunction) -> Self {
        let choice_cdf = (0..vf.space.len())
            .map(|idx| cumulative(&vf.choice_probs_at(idx)))
            .collect();
        Self { vf, choice_cdf }
    }

    pub fn sample<R: Rng + ?Sized>(&self, initial: &State, rng: &mut R) -> Result<StateSequence> {
        let space = &self.vf.space;
        let mut idx = space.require(initial)?;
        let mut states = vec![initial.clone()];
        while !space.node(idx).terminal {
            let ti = draw(&self.choice_cdf[idx], rng);
            let transition = &space.node(idx).transitions[ti];
            let probs: Vec<f64> = transition.successors.iter().map(|&(_, p)| p).collect();
            let si = draw(&cumulative(&probs), rng);
            idx = transition.successors[si].0;
            states.push(space.node(idx).state.clone());
        }
        Ok(StateSequence::new(states))
    }
}

/// One trajectory from `initial`, reproducible for a given seed.
pub fn sample_sequence(vf: &ValueFunction, initial: &State, seed: u64) -> Result<StateSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RecursiveSampler::new(vf).sample(initial, &mut rng)
}

pub(crate) fn cumulative(probs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    probs
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect()
}

pub(crate) fn draw<R: Rng + ?Sized>(cdf: &[f64], rng: &mut R) -> usize {
    let total = *cdf.last().expect("non-empty distribution");
    let u: f64 = rng.gen::<f64>() * total;
    cdf.iter()
        .position(|&c| u < c)
        .unwrap_or_else(|| cdf.iter().rposition(|&c| c > 0.0).unwrap_or(cdf.len() - 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::EventCollection;
    use std::f64::consts::E;

    fn figure1() -> (StdNetwork, SupportPointSet) {
        crate::io::load_network(include_str!("../fixtures/figure1.json")).unwrap()
    }

    fn st(link: u32, time: u32, ev: &[usize]) -> State {
        State::new(
            LinkId(link),
            time,
            EventCollection::new(ev.to_vec()).unwrap(),
        )
    }

    fn solved() -> (StdNetwork, SupportPointSet, ValueFunction) {
        let (net, spp) = figure1();
        let vf = solve_value_functions(&net, &spp, &LinkUtilitySpec::default()).unwrap();
        (net, spp, vf)
    }

    #[test]
    fn node_b_values_are_log_sums() {
        let (_, _, vf) = solved();
        let v1 = vf.value(&st(1, 1, &[0])).unwrap();
        assert!((v1 - ((-3f64).exp() + (-2f64).exp()).ln()).abs() < 1e-14);
        assert!((v1 - (-1.686_7)).abs() < 1e-4);
        let v2 = vf.value(&st(1, 1, &[1])).unwrap();
        let origin = vf.value(&st(0, 0, &[0, 1])).unwrap();
        assert!((origin - (-1.0 + 0.5 * v1 + 0.5 * v2)).abs() < 1e-14);
        assert_eq!(vf.value(&st(2, 4, &[0])), Some(0.0));
    }

    #[test]
    fn worked_example_choice_probabilities() {
        let (_, _, vf) = solved();
        let p = link_choice_prob(&vf, &st(1, 1, &[0]), LinkId(2)).unwrap();
        assert!((p - 1.0 / (1.0 + E)).abs() < 1e-12);
        let p = link_choice_prob(&vf, &st(1, 1, &[1]), LinkId(2)).unwrap();
        assert!((p - 0.5).abs() < 1e-12);
        let p = link_choice_prob(&vf, &st(0, 0, &[0, 1]), LinkId(1)).unwrap();
        assert_eq!(p, 1.0);
    }

    #[test]
    fn sequence_likelihoods_match_both_forms() {
        let (net, spp, vf) = solved();
        let seqs = sequence_probabilities(&vf, &st(0, 0, &[0, 1]), 100).unwrap();
        assert_eq!(seqs.len(), 4);
        let expected = [
            1.0 / (2.0 * (1.0 + E)),
            0.25,
            1.0 / (2.0 * (1.0 / E + 1.0)),
            0.25,
        ];
        // Enumeration order: link 2 then 3 within v1 first, so sigma1, sigma3, sigma2, sigma4.
        let by_path_and_ev: Vec<f64> = seqs.iter().map(|(_, p)| *p).collect();
        assert!((by_path_and_ev[0] - expected[0]).abs() < 1e-12);
        assert!((by_path_and_ev[1] - expected[2]).abs() < 1e-12);
        assert!((by_path_and_ev[2] - expected[1]).abs() < 1e-12);
        assert!((by_path_and_ev[3] - expected[3]).abs() < 1e-12);
        for (seq, p) in &seqs {
            let direct = sequence_likelihood(&vf, &net, &spp, seq).unwrap();
            let value_form = sequence_likelihood_value_form(&vf, seq).unwrap();
            assert!((direct - p).abs() < 1e-14);
            assert!((value_form - p).abs() < 1e-14);
        }
    }

    #[test]
    fn path_masses() {
        let (_, _, vf) = solved();
        let paths = path_probabilities(&vf, &st(0, 0, &[0, 1]), 100).unwrap();
        let p1 = paths[&vec![LinkId(1), LinkId(2)]];
        let p2 = paths[&vec![LinkId(1), LinkId(3)]];
        assert!((p1 - 0.3845).abs() < 5e-5);
        assert!((p2 - 0.6155).abs() < 5e-5);
    }

    #[test]
    fn rejects_invalid_sequences() {
        let (net, spp, vf) = solved();
        let bad = StateSequence::new(vec![st(0, 0, &[0, 1]), st(1, 1, &[0]), st(2, 3, &[0])]);
        assert!(sequence_likelihood(&vf, &net, &spp, &bad).is_err());
        assert!(link_choice_prob(&vf, &st(1, 1, &[0]), LinkId(1)).is_err());
        assert!(matches!(
            link_choice_prob(&vf, &st(1, 7, &[0]), LinkId(2)),
            Err(Error::UnknownState(_))
        ));
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let (net, spp, vf) = solved();
        let initial = st(0, 0, &[0, 1]);
        let a = sample_sequence(&vf, &initial, 7).unwrap();
        let b = sample_sequence(&vf, &initial, 7).unwrap();
        assert_eq!(a, b);
        a.validate(&net, &spp).unwrap();
    }

    #[test]
    fn max_aggregation_is_deterministic_choice() {
        let (_, _, vf) = solved();
        let opt = ValueFunction::solve(vf.space().clone(), vf.beta(), Aggregation::Max);
        assert_eq!(opt.value(&st(0, 0, &[0, 1])), Some(-3.0));
        let probs = opt.choice_probabilities(&st(1, 1, &[1])).unwrap();
        assert_eq!(probs, vec![(LinkId(2), 1.0), (LinkId(3), 0.0)]);
    }
}
