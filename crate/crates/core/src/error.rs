use thiserror::Error;

use crate::network::LinkId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    /// A type invariant of the network, distribution or a derived object does not hold.
    #[error("validation error: {0}")]
    Validation(String),

    #[error(
        "support points {members:?} disagree on the travel time of link {link} at time {time}"
    )]
    PoiInconsistent {
        link: LinkId,
        time: u32,
        members: Vec<usize>,
    },

    #[error("link {next} is not an outgoing link of link {from}")]
    NotAdjacent { from: LinkId, next: LinkId },

    #[error("link {0} does not exist")]
    UnknownLink(LinkId),

    #[error("state on link {link} at time {time} exceeds the trip horizon {horizon}")]
    Horizon {
        link: LinkId,
        time: u32,
        horizon: u32,
    },

    #[error("destination is unreachable from link {0}")]
    Unreachable(LinkId),

    #[error("{what} count exceeds the cap of {cap}")]
    CapExceeded { what: &'static str, cap: usize },

    #[error("invalid state sequence at step {step}: {reason}")]
    InvalidSequence { step: usize, reason: String },

    #[error("state {0} is not part of the solved state space")]
    UnknownState(String),

    #[error("routing policy has no decision for state {0}")]
    IncompletePolicy(String),

    #[error("observation {index} has zero probability under the {model} model")]
    ZeroLikelihood { index: usize, model: &'static str },

    #[error("non-finite log-likelihood contribution from observation {index}")]
    NonFinite { index: usize },

    #[error("invalid utility specification: {0}")]
    Utility(String),

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("choice set is empty")]
    EmptyChoiceSet,
}

pub type Result<T> = std::result::Result<T, Error>;
