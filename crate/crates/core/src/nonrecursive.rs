//! Non-recursive logit: one logit over a choice set of routing policies at the
//! origin, after which the chosen policy is executed deterministically.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::logsum::log_softmax;
use crate::network::{successor_states, transition_prob, LinkId, StdNetwork, SupportPointSet};
use crate::policy::{
    contains, policy_expected_utility, PolicyChoiceSet, RoutingPolicy, StateSequence,
};
use crate::recursive::{cumulative, draw};
use crate::utility::LinkUtilitySpec;

/// A choice set with its policy utilities and logit probabilities evaluated.
#[derive(Debug, Clone)]
pub struct NonRecursiveModel {
    choice_set: PolicyChoiceSet,
    utilities: Vec<f64>,
    log_probs: Vec<f64>,
    mu: f64,
    rollouts: Vec<Vec<(StateSequence, f64)>>,
}

impl NonRecursiveModel {
    pub fn new(
        choice_set: PolicyChoiceSet,
        network: &StdNetwork,
        spp: &SupportPointSet,
        utility: &LinkUtilitySpec,
    ) -> Result<Self> {
        if choice_set.is_empty() {
            return Err(Error::EmptyChoiceSet);
        }
        let utilities = choice_set
            .policies()
            .iter()
            .map(|g| policy_expected_utility(network, spp, g, utility))
            .collect::<Result<Vec<_>>>()?;
        let rollouts = choice_set
            .policies()
            .iter()
            .map(|g| g.rollouts(network, spp))
            .collect::<Result<Vec<_>>>()?;
        let mu = utility.mu();
        Ok(Self {
            log_probs: log_logit(&utilities, mu),
            choice_set,
            utilities,
            mu,
            rollouts,
        })
    }

    pub fn choice_set(&self) -> &PolicyChoiceSet {
        &self.choice_set
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Expected utility of each policy, in choice-set order.
    pub fn policy_utilities(&self) -> &[f64] {
        &self.utilities
    }

    pub fn policy_probabilities(&self) -> Vec<f64> {
        self.log_probs.iter().map(|l| l.exp()).collect()
    }

    /// Trajectories of each policy with their probabilities given the policy.
    pub fn rollouts(&self) -> &[Vec<(StateSequence, f64)>] {
        &self.rollouts
    }

    /// Marginal likelihood of `seq`: sum over policies of the policy's choice
    /// probability times the probability of `seq` given that policy.
    pub fn sequence_likelihood(&self, seq: &StateSequence, spp: &SupportPointSet) -> f64 {
        self.choice_set
            .policies()
            .iter()
            .zip(&self.log_probs)
            .map(|(g, lp)| lp.exp() * sequence_prob_given_policy(seq, g, spp))
            .sum()
    }

    /// Every sequence any policy can produce, with its marginal likelihood.
    pub fn sequence_probabilities(&self) -> Vec<(StateSequence, f64)> {
        let mut acc: BTreeMap<&StateSequence, f64> = BTreeMap::new();
        for (leaves, lp) in self.rollouts.iter().zip(&self.log_probs) {
            let pg = lp.exp();
            for (seq, p) in leaves {
                *acc.entry(seq).or_insert(0.0) += pg * p;
            }
        }
        acc.into_iter().map(|(s, p)| (s.clone(), p)).collect()
    }

    pub fn path_probabilities(&self) -> BTreeMap<Vec<LinkId>, f64> {
        let mut out = BTreeMap::new();
        for (seq, p) in self.sequence_probabilities() {
            *out.entry(seq.path()).or_insert(0.0) += p;
        }
        out
    }

    pub fn sampler<'a>(
        &'a self,
        network: &'a StdNetwork,
        spp: &'a SupportPointSet,
    ) -> NonRecursiveSampler<'a> {
        NonRecursiveSampler {
            model: self,
            network,
            spp,
            policy_cdf: cumulative(&self.policy_probabilities()),
        }
    }
}

/// Log of the logit probabilities `exp(v / mu) / Σ exp(v' / mu)`.
pub(crate) fn log_logit(utilities: &[f64], mu: f64) -> Vec<f64> {
    log_softmax(utilities, mu)
}

/// Samples a policy from the origin logit, then rolls it out drawing each
/// event-collection transition.
#[derive(Debug, Clone)]
pub struct NonRecursiveSampler<'a> {
    model: &'a NonRecursiveModel,
    network: &'a StdNetwork,
    spp: &'a SupportPointSet,
    policy_cdf: Vec<f64>,
}

impl NonRecursiveSampler<'_> {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(usize, StateSequence)> {
        let g = draw(&self.policy_cdf, rng);
        let policy = &self.model.choice_set.policies()[g];
        let mut state = policy.initial_state().clone();
        let mut states = vec![state.clone()];
        while !self.network.is_destination(state.link) {
            let a = policy
                .decision(&state)
                .ok_or_else(|| Error::IncompletePolicy(state.to_string()))?;
            let successors = successor_states(self.network, self.spp, &state, a)?;
            let probs: Vec<f64> = successors.iter().map(|(_, p)| *p).collect();
            let pick = draw(&cumulative(&probs), rng);
            state = successors[pick].0.clone();
            states.push(state.clone());
        }
        Ok((g, StateSequence::new(states)))
    }
}

/// Logit probability of `policy` within the choice set.
pub fn policy_choice_prob(
    choice_set: &PolicyChoiceSet,
    policy: &RoutingPolicy,
    network: &StdNetwork,
    spp: &SupportPointSet,
    utility: &LinkUtilitySpec,
) -> Result<f64> {
    if choice_set.is_empty() {
        return Err(Error::EmptyChoiceSet);
    }
    let pos = choice_set
        .position(policy)
        .ok_or_else(|| Error::Validation("policy is not in the choice set".into()))?;
    let utilities = choice_set
        .policies()
        .iter()
        .map(|g| policy_expected_utility(network, spp, g, utility))
        .collect::<Result<Vec<_>>>()?;
    Ok(log_logit(&utilities, utility.mu())[pos].exp())
}

/// `Pr(EV_I | EV_0)` when the policy contains the sequence, zero otherwise.
pub fn sequence_prob_given_policy(
    seq: &StateSequence,
    policy: &RoutingPolicy,
    spp: &SupportPointSet,
) -> f64 {
    if !contains(policy, seq) {
        return 0.0;
    }
    match (seq.states().first(), seq.states().last()) {
        (Some(first), Some(last)) => transition_prob(spp, &last.ev, &first.ev),
        _ => 0.0,
    }
}

pub fn sequence_likelihood_nr(
    seq: &StateSequence,
    choice_set: &PolicyChoiceSet,
    network: &StdNetwork,
    spp: &SupportPointSet,
    utility: &LinkUtilitySpec,
) -> Result<f64> {
    let model = NonRecursiveModel::new(choice_set.clone(), network, spp, utility)?;
    Ok(model.sequence_likelihood(seq, spp))
}

pub fn sample_sequence_nr(
    choice_set: &PolicyChoiceSet,
    network: &StdNetwork,
    spp: &SupportPointSet,
    utility: &LinkUtilitySpec,
    seed: u64,
) -> Result<StateSequence> {
    let model = NonRecursiveModel::new(choice_set.clone(), network, spp, utility)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    model.sampler(network, spp).sample(&mut rng).map(|(_, s)| s)
}
