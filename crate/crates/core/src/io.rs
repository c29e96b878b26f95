//! JSON documents for networks, observations and exported policies, plus the
//! fixed-precision number formatting used by every CSV writer.

use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{EventCollection, Link, LinkId, State, StdNetwork, SupportPointSet};
use crate::policy::{RoutingPolicy, StateSequence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDocument {
    pub nodes: Vec<String>,
    pub links: Vec<LinkRecord>,
    pub origin_link: u32,
    pub destination_link: u32,
    pub horizon: usize,
    pub support_points: Vec<SupportPointRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkRecord {
    pub id: u32,
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportPointRecord {
    pub probability: f64,
    /// Link id (as a string key) to one travel time per period. The origin
    /// link may be omitted.
    pub travel_times: BTreeMap<String, Vec<u32>>,
}

fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Parses and validates a network document.
pub fn load_network(text: &str) -> Result<(StdNetwork, SupportPointSet)> {
    let doc: NetworkDocument = parse_json(text)?;
    doc.build()
}

impl NetworkDocument {
    pub fn build(&self) -> Result<(StdNetwork, SupportPointSet)> {
        let links = self
            .links
            .iter()
            .map(|l| Link {
                id: LinkId(l.id),
                from: l.from.clone(),
                to: l.to.clone(),
            })
            .collect();
        let network = StdNetwork::new(
            self.nodes.clone(),
            links,
            LinkId(self.origin_link),
            LinkId(self.destination_link),
            self.horizon,
        )?;

        let mut probabilities = Vec::with_capacity(self.support_points.len());
        let mut tables = Vec::with_capacity(self.support_points.len());
        for (r, point) in self.support_points.iter().enumerate() {
            for key in point.travel_times.keys() {
                let id: u32 = key.parse().map_err(|_| {
                    Error::Validation(format!(
                        "support point {r}: travel-time key {key:?} is not a link id"
                    ))
                })?;
                network.index_of(LinkId(id)).map_err(|_| {
                    Error::Validation(format!("support point {r}: unknown link {id}"))
                })?;
            }
            let mut table = vec![vec![0u32; network.link_count()]; self.horizon];
            for (i, link) in network.links().iter().enumerate() {
                let times = match point.travel_times.get(&link.id.0.to_string()) {
                    Some(times) => times,
                    None if link.id == network.origin() => continue,
                    None => {
                        return Err(Error::Validation(format!(
                            "support point {r} has no travel times for link {}",
                            link.id
                        )))
                    }
                };
                if times.len() != self.horizon {
                    return Err(Error::Validation(format!(
                        "support point {r}, link {}: {} travel times, expected horizon {}",
                        link.id,
                        times.len(),
                        self.horizon
                    )));
                }
                for (t, &tau) in times.iter().enumerate() {
                    table[t][i] = tau;
                }
            }
            probabilities.push(point.probability);
            tables.push(table);
        }
        let spp = SupportPointSet::new(&network, probabilities, tables)?;
        Ok((network, spp))
    }

    pub fn from_parts(network: &StdNetwork, spp: &SupportPointSet) -> Self {
        let support_points = (0..spp.len())
            .map(|r| SupportPointRecord {
                probability: spp.probabilities()[r],
                travel_times: network
                    .links()
                    .iter()
                    .enumerate()
                    .filter(|(_, l)| l.id != network.origin())
                    .map(|(i, l)| {
                        let times = (0..network.horizon() as u32)
                            .map(|t| spp.time_of(r, t, i))
                            .collect();
                        (l.id.0.to_string(), times)
                    })
                    .collect(),
            })
            .collect();
        Self {
            nodes: network.nodes().to_vec(),
            links: network
                .links()
                .iter()
                .map(|l| LinkRecord {
                    id: l.id.0,
                    from: l.from.clone(),
                    to: l.to.clone(),
                })
                .collect(),
            origin_link: network.origin().0,
            destination_link: network.destination().0,
            horizon: network.horizon(),
            support_points,
        }
    }
}

/// One traveler's observed trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationRecord {
    pub traveler_id: String,
    /// Index of the realized support point, when known. Used to reconstruct
    /// event collections that are not recorded explicitly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub realization: Option<usize>,
    pub states: Vec<ObservedState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservedState {
    pub link: u32,
    pub time: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ev_members: Option<Vec<usize>>,
}

pub fn parse_observations(text: &str) -> Result<Vec<ObservationRecord>> {
    parse_json(text)
}

impl ObservationRecord {
    pub fn from_sequence(traveler_id: impl Into<String>, seq: &StateSequence) -> Self {
        Self {
            traveler_id: traveler_id.into(),
            realization: None,
            states: seq
                .states()
                .iter()
                .map(|s| ObservedState {
                    link: s.link.0,
                    time: s.time,
                    ev_members: Some(s.ev.members().to_vec()),
                })
                .collect(),
        }
    }

    /// Resolves the record into a validated state sequence.
    ///
    /// Missing event collections come from the realized support point when
    /// it is given. Otherwise each one is the unique class at the arrival time,
    /// inside the previous collection, that agrees with the observed travel
    /// time of the traversed link; ambiguity is an error.
    pub fn to_sequence(
        &self,
        network: &StdNetwork,
        spp: &SupportPointSet,
    ) -> Result<StateSequence> {
        if let Some(r) = self.realization {
            if r >= spp.len() {
                return Err(Error::Validation(format!(
                    "traveler {}: realization {r} does not exist",
                    self.traveler_id
                )));
            }
        }
        let mut states: Vec<State> = Vec::with_capacity(self.states.len());
        for (i, obs) in self.states.iter().enumerate() {
            let link = LinkId(obs.link);
            let ev = match (&obs.ev_members, self.realization) {
                (Some(members), _) => EventCollection::new(members.clone())?,
                (None, Some(r)) => {
                    let classes = spp.event_collections_at(obs.time);
                    classes[spp.class_index(obs.time, r)].clone()
                }
                (None, None) => self.infer_collection(network, spp, &states, obs, i)?,
            };
            states.push(State::new(link, obs.time, ev));
        }
        let seq = StateSequence::new(states);
        seq.validate(network, spp)?;
        Ok(seq)
    }

    fn infer_collection(
        &self,
        network: &StdNetwork,
        spp: &SupportPointSet,
        previous: &[State],
        obs: &ObservedState,
        step: usize,
    ) -> Result<EventCollection> {
        let classes = spp.event_collections_at(obs.time);
        let candidates: Vec<&EventCollection> = match previous.last() {
            None => classes.iter().collect(),
            Some(prev) => {
                let idx = network.index_of(LinkId(obs.link))?;
                classes
                    .iter()
                    .filter(|c| c.is_subset_of(&prev.ev))
                    .filter(|c| {
                        c.members()
                            .iter()
                            .all(|&r| prev.time + spp.time_of(r, prev.time, idx) == obs.time)
                    })
                    .collect()
            }
        };
        match candidates.as_slice() {
            [only] => Ok((*only).clone()),
            [] => Err(Error::InvalidSequence {
                step,
                reason: "no event collection is consistent with the observed times".into(),
            }),
            _ => Err(Error::InvalidSequence {
                step,
                reason: format!(
                    "traveler {}: event collection is ambiguous; record ev_members or the realization",
                    self.traveler_id
                ),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub link: u32,
    pub time: u32,
    pub ev: Vec<usize>,
}

impl From<&State> for StateRecord {
    fn from(s: &State) -> Self {
        Self {
            link: s.link.0,
            time: s.time,
            ev: s.ev.members().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub state: StateRecord,
    pub next_link: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRecord {
    pub policy: usize,
    pub decisions: Vec<DecisionRecord>,
}

/// Exported form of a routing policy: its decisions in state order.
pub fn policy_records(policies: &[RoutingPolicy]) -> Vec<PolicyRecord> {
    policies
        .iter()
        .enumerate()
        .map(|(i, p)| PolicyRecord {
            policy: i,
            decisions: p
                .decisions()
                .iter()
                .map(|(s, a)| DecisionRecord {
                    state: s.into(),
                    next_link: a.0,
                })
                .collect(),
        })
        .collect()
}

/// Formats `v` with ten significant digits.
pub fn format_sig(v: f64) -> String {
    const DIGITS: i32 = 10;
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let exponent = v.abs().log10().floor() as i32;
    let decimals = DIGITS - 1 - exponent;
    if (0..=17).contains(&decimals) {
        let s = format!("{v:.prec$}", prec = decimals as usize);
        // Rounding may carry into a new digit (9.9999999999 -> 10.000000000).
        if s.trim_start_matches('-')
            .replace('.', "")
            .trim_start_matches('0')
            .len()
            > DIGITS as usize
            && decimals > 0
        {
            return format!("{v:.prec$}", prec = decimals as usize - 1);
        }
        s
    } else {
        format!("{v:.prec$e}", prec = (DIGITS - 1) as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIGURE1: &str = include_str!("../fixtures/figure1.json");

    #[test]
    fn loads_figure_one() {
        let (net, spp) = load_network(FIGURE1).unwrap();
        assert_eq!(net.nodes().len(), 3);
        let ids: Vec<u32> = net.links().iter().map(|l| l.id.0).collect();
        assert_eq!(ids, vec![0, 1, 2, 3]);
        assert_eq!(net.horizon(), 2);
        assert_eq!(spp.len(), 2);
        assert_eq!(spp.probabilities(), &[0.5, 0.5]);
    }

    #[test]
    fn rejects_probabilities_not_summing_to_one() {
        let text = FIGURE1.replacen("\"probability\": 0.5", "\"probability\": 0.6", 1);
        let err = load_network(&text).unwrap_err();
        assert!(err.to_string().contains("probabilities sum"), "{err}");
    }

    #[test]
    fn rejects_zero_travel_time() {
        let text = FIGURE1.replacen("\"2\": [2, 3]", "\"2\": [2, 0]", 1);
        let err = load_network(&text).unwrap_err();
        assert!(err.to_string().contains("zero travel time"), "{err}");
    }

    #[test]
    fn parse_errors_carry_line_context() {
        let text = FIGURE1.replacen("\"horizon\": 2,", "\"horizon\": 2", 1);
        match load_network(&text).unwrap_err() {
            Error::Parse { line, .. } => assert!(line > 1),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn single_support_point_is_deterministic() {
        let mut doc: NetworkDocument = serde_json::from_str(FIGURE1).unwrap();
        doc.support_points.truncate(1);
        doc.support_points[0].probability = 1.0;
        let (_, spp) = doc.build().unwrap();
        assert!(spp.is_deterministic());
        assert_eq!(spp.event_collections_at(3).len(), 1);
    }

    #[test]
    fn document_round_trip() {
        let (net, spp) = load_network(FIGURE1).unwrap();
        let doc = NetworkDocument::from_parts(&net, &spp);
        let original: NetworkDocument = serde_json::from_str(FIGURE1).unwrap();
        assert_eq!(doc, original);
    }

    #[test]
    fn observation_collections_from_realization() {
        let (net, spp) = load_network(FIGURE1).unwrap();
        let text = r#"[{"traveler_id": "n1", "realization": 1,
            "states": [{"link": 0, "time": 0}, {"link": 1, "time": 1}, {"link": 3, "time": 3}]}]"#;
        let records = parse_observations(text).unwrap();
        let seq = records[0].to_sequence(&net, &spp).unwrap();
        let evs: Vec<Vec<usize>> = seq
            .states()
            .iter()
            .map(|s| s.ev.members().to_vec())
            .collect();
        assert_eq!(evs, vec![vec![0, 1], vec![1], vec![1]]);
    }

    #[test]
    fn ambiguous_collections_are_reported() {
        let (net, spp) = load_network(FIGURE1).unwrap();
        let text = r#"[{"traveler_id": "n1",
            "states": [{"link": 0, "time": 0}, {"link": 1, "time": 1}, {"link": 3, "time": 3}]}]"#;
        let records = parse_observations(text).unwrap();
        let err = records[0].to_sequence(&net, &spp).unwrap_err();
        assert!(err.to_string().contains("ambiguous"), "{err}");
    }

    #[test]
    fn ten_significant_digits() {
        assert_eq!(format_sig(0.0), "0");
        assert_eq!(format_sig(0.5), "0.5000000000");
        assert_eq!(
            format_sig(1.0 / (2.0 * (1.0 + std::f64::consts::E))),
            "0.1344707107"
        );
        assert_eq!(format_sig(-3.5), "-3.500000000");
        assert_eq!(format_sig(9.99999999999), "10.00000000");
        assert_eq!(format_sig(1.5e-20), "1.500000000e-20");
    }
}
