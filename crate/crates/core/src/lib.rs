//! Routing-policy choice models on stochastic time-dependent networks with
//! perfect online information.
//!
//! Two models are provided over the same network representation:
//!
//! * [`recursive`]: a logit over outgoing links at every decision state, with
//!   expected downstream utilities from a log-sum Bellman recursion over
//!   (link, time, event collection) states.
//! * [`nonrecursive`]: a single logit at the origin over a choice set of
//!   routing policies, each then executed deterministically.
//!
//! [`estimation`] fits link-utility coefficients by maximum likelihood from
//! observed state sequences, and [`comparison`] contains the two-route
//! analysis used to contrast the models.

pub mod comparison;
pub mod error;
pub mod estimation;
pub mod io;
pub mod logsum;
pub mod network;
pub mod nonrecursive;
pub mod policy;
pub mod recursive;
pub mod state_space;
pub mod utility;

pub use error::{Error, Result};
pub use network::{
    event_collections_at, origin_states, successor_states, transition_prob, travel_time,
    EventCollection, Link, LinkId, State, StdNetwork, SupportPointSet,
};
pub use nonrecursive::NonRecursiveModel;
pub use policy::{
    contains, enumerate_policies, optimal_policy, policy_expected_utility, PolicyChoiceSet,
    RoutingPolicy, StateSequence, DEFAULT_POLICY_CAP,
};
pub use recursive::{solve_value_functions, Aggregation, ValueFunction};
pub use utility::{Attribute, LinkUtilitySpec};
