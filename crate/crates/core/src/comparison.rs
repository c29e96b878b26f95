//! Analytic comparison of the two models.
//!
//! The two-route scenario is the small network with one entry link into a
//! node with two parallel links to the destination. Two equally structured
//! states are possible on arrival at that node, and in each the second
//! parallel link is slower than the first by a state-specific offset.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::{
    origin_states, successor_states, Link, LinkId, State, StdNetwork, SupportPointSet,
};
use crate::nonrecursive::NonRecursiveModel;
use crate::policy::{
    contains, enumerate_policies, policy_expected_utility, StateSequence, DEFAULT_POLICY_CAP,
};
use crate::recursive::{
    link_choice_prob, path_probabilities, sequence_probabilities, solve_value_functions_from,
};
use crate::utility::LinkUtilitySpec;

/// Scale parameters visited by [`equivalence_report`], largest first.
pub const MU_SWEEP: [f64; 4] = [1.0, 0.1, 0.01, 1e-4];

/// Margins closer than this are reported as equal.
pub const EXTREMENESS_TOLERANCE: f64 = 1e-12;

/// Divergence at or below this is rounding noise and counts as agreement.
pub const NEGLIGIBLE_DIVERGENCE: f64 = 1e-10;

const LINK_IN: LinkId = LinkId(1);
const ROUTE_2: LinkId = LinkId(2);
const ROUTE_3: LinkId = LinkId(3);
const MAX_DECIMALS: u32 = 6;

/// Link 2 takes `a` in state 1 and `b` in state 2; link 3 takes `a + x` and
/// `b + y`. State 1 occurs with probability `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoRouteScenario {
    pub a: f64,
    pub b: f64,
    pub x: f64,
    pub y: f64,
    pub p: f64,
}

impl TwoRouteScenario {
    pub fn new(a: f64, b: f64, x: f64, y: f64, p: f64) -> Result<Self> {
        let s = Self { a, b, x, y, p };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let Self { a, b, x, y, p } = *self;
        if ![a, b, x, y, p].iter().all(|v| v.is_finite()) {
            return Err(Error::Scenario("parameters must be finite".into()));
        }
        if a <= 0.0 || b <= 0.0 {
            return Err(Error::Scenario(format!(
                "need a > 0 and b > 0, got a={a}, b={b}"
            )));
        }
        if x <= -a || y <= -b {
            return Err(Error::Scenario(format!(
                "need x > -a and y > -b, got x={x}, y={y}"
            )));
        }
        if p <= 0.0 || p >= 1.0 {
            return Err(Error::Scenario(format!("need 0 < p < 1, got p={p}")));
        }
        Ok(())
    }
}

/// The scenario network together with its decision states at the fork.
#[derive(Debug, Clone)]
pub struct TwoRouteNetwork {
    pub network: StdNetwork,
    pub spp: SupportPointSet,
    pub initial: State,
    /// Fork states for state 1 and state 2.
    pub fork: [State; 2],
    /// Factor applied to the fork travel times to make them integral.
    pub scale: f64,
}

impl TwoRouteNetwork {
    /// Travel-time utility with unit coefficient in the scenario's units.
    pub fn utility(&self) -> LinkUtilitySpec {
        LinkUtilitySpec::travel_time(-1.0 / self.scale, 1.0).expect("positive scale")
    }
}

fn integral_scale(values: &[f64]) -> Option<f64> {
    (0..=MAX_DECIMALS)
        .map(|k| 10f64.powi(k as i32))
        .find(|scale| {
            values.iter().all(|v| {
                let scaled = v * scale;
                (scaled - scaled.round()).abs() <= 1e-9 * scaled.abs().max(1.0)
            })
        })
}

fn scaled_time(v: f64, scale: f64) -> Result<u32> {
    let t = (v * scale).round();
    if t < 1.0 || t > u32::MAX as f64 {
        return Err(Error::Scenario(format!(
            "travel time {v} cannot be represented at scale {scale}"
        )));
    }
    Ok(t as u32)
}

/// Builds the scenario network. Fork travel times are multiplied by the
/// smallest power of ten that makes them integral (at most 10^6).
///
/// Link 0 is the origin, link 1 leads to the fork and links 2 and 3 are the
/// parallel routes. Before the fork the two support points agree on every
/// link; link 1's second-period time differs so the two states are always
/// distinguishable at the fork, even when the route times coincide.
pub fn build_two_route_network(s: &TwoRouteScenario) -> Result<TwoRouteNetwork> {
    s.validate()?;
    let fork = [s.a, s.b, s.a + s.x, s.b + s.y];
    let scale = integral_scale(&fork).ok_or_else(|| {
        Error::Scenario(format!(
            "travel times {fork:?} need more than {MAX_DECIMALS} decimals"
        ))
    })?;
    let [a, b, ax, by] = [
        scaled_time(fork[0], scale)?,
        scaled_time(fork[1], scale)?,
        scaled_time(fork[2], scale)?,
        scaled_time(fork[3], scale)?,
    ];
    let link = |id, from: &str, to: &str| Link {
        id: LinkId(id),
        from: from.into(),
        to: to.into(),
    };
    let network = StdNetwork::new(
        vec!["a".into(), "b".into(), "c".into()],
        vec![
            link(0, "a", "a"),
            link(1, "a", "b"),
            link(2, "b", "c"),
            link(3, "b", "c"),
        ],
        LinkId(0),
        ROUTE_2,
        2,
    )?;
    // [period][link 0..=3]
    let first_period = vec![0, 1, 2, 1];
    let tables = vec![
        vec![first_period.clone(), vec![0, 1, a, ax]],
        vec![first_period, vec![0, 2, b, by]],
    ];
    let spp = SupportPointSet::new(&network, vec![s.p, 1.0 - s.p], tables)?;
    let initial = origin_states(&network, &spp)
        .into_iter()
        .next()
        .expect("origin state");
    let next = successor_states(&network, &spp, &initial, LINK_IN)?;
    let fork = match next.as_slice() {
        [(s1, _), (s2, _)] if s1.ev.contains(0) => [s1.clone(), s2.clone()],
        [(s1, _), (s2, _)] => [s2.clone(), s1.clone()],
        _ => unreachable!("support points always differ on link 1"),
    };
    Ok(TwoRouteNetwork {
        network,
        spp,
        initial,
        fork,
        scale,
    })
}

/// Odds of link 2 over link 3: in state 1, in state 2, and unconditionally.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioRow {
    pub state1: f64,
    pub state2: f64,
    pub marginal: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioTable {
    pub recursive: RatioRow,
    pub nonrecursive: RatioRow,
}

fn mixture(p: f64, r1: f64, r2: f64) -> f64 {
    (p * (r2 + 1.0) * r1 + (1.0 - p) * (r1 + 1.0) * r2) / (p * (r2 + 1.0) + (1.0 - p) * (r1 + 1.0))
}

/// Closed-form odds with unit travel-time coefficient and unit scale.
///
/// The recursive model decides at the fork knowing the state, so its odds are
/// `e^x` and `e^y`. The non-recursive model picks the whole policy at the
/// origin, where each state's decision is weighted by that state's
/// probability, giving `e^{px}` and `e^{(1-p)y}`.
pub fn ratio_table(s: &TwoRouteScenario) -> RatioTable {
    let (r1, r2) = (s.x.exp(), s.y.exp());
    let (n1, n2) = ((s.p * s.x).exp(), ((1.0 - s.p) * s.y).exp());
    RatioTable {
        recursive: RatioRow {
            state1: r1,
            state2: r2,
            marginal: mixture(s.p, r1, r2),
        },
        nonrecursive: RatioRow {
            state1: n1,
            state2: n2,
            marginal: mixture(s.p, n1, n2),
        },
    }
}

/// The same odds computed by building the network and running both models.
pub fn pipeline_ratio_table(s: &TwoRouteScenario) -> Result<RatioTable> {
    let tr = build_two_route_network(s)?;
    let utility = tr.utility();
    let (net, spp) = (&tr.network, &tr.spp);

    let vf = solve_value_functions_from(net, spp, &utility, std::slice::from_ref(&tr.initial))?;
    let odds = |state: &State| -> Result<f64> {
        Ok(link_choice_prob(&vf, state, ROUTE_2)? / link_choice_prob(&vf, state, ROUTE_3)?)
    };
    let paths = path_probabilities(&vf, &tr.initial, DEFAULT_POLICY_CAP)?;
    let recursive = RatioRow {
        state1: odds(&tr.fork[0])?,
        state2: odds(&tr.fork[1])?,
        marginal: path_odds(&paths),
    };

    let cs = enumerate_policies(net, spp, &tr.initial, DEFAULT_POLICY_CAP)?;
    let model = NonRecursiveModel::new(cs, net, spp, &utility)?;
    let probs = model.policy_probabilities();
    let decision_odds = |state: &State| {
        let mut mass = [0.0, 0.0];
        for (g, p) in model.choice_set().policies().iter().zip(&probs) {
            match g.decision(state) {
                Some(ROUTE_2) => mass[0] += p,
                Some(ROUTE_3) => mass[1] += p,
                _ => {}
            }
        }
        mass[0] / mass[1]
    };
    let nonrecursive = RatioRow {
        state1: decision_odds(&tr.fork[0]),
        state2: decision_odds(&tr.fork[1]),
        marginal: path_odds(&model.path_probabilities()),
    };
    Ok(RatioTable {
        recursive,
        nonrecursive,
    })
}

fn path_odds(paths: &BTreeMap<Vec<LinkId>, f64>) -> f64 {
    let mass = |route| paths.get(&vec![LINK_IN, route]).copied().unwrap_or(0.0);
    mass(ROUTE_2) / mass(ROUTE_3)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DominanceClass {
    Equal,
    Route2Dominant,
    Route3Dominant,
    Nondominated,
}

impl DominanceClass {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Equal => "equal",
            Self::Route2Dominant => "route2_dominant",
            Self::Route3Dominant => "route3_dominant",
            Self::Nondominated => "nondominated",
        }
    }
}

impl fmt::Display for DominanceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// State-wise dominance from the signs of the offsets. A route that is never
/// slower and strictly faster in at least one state dominates.
pub fn dominance_class(s: &TwoRouteScenario) -> DominanceClass {
    let (x, y) = (s.x, s.y);
    if x == 0.0 && y == 0.0 {
        DominanceClass::Equal
    } else if x >= 0.0 && y >= 0.0 {
        DominanceClass::Route2Dominant
    } else if x <= 0.0 && y <= 0.0 {
        DominanceClass::Route3Dominant
    } else {
        DominanceClass::Nondominated
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Extremeness {
    RecursiveMoreExtreme,
    NonrecursiveMoreExtreme,
    Equal,
}

impl Extremeness {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::RecursiveMoreExtreme => "recursive_more_extreme",
            Self::NonrecursiveMoreExtreme => "nonrecursive_more_extreme",
            Self::Equal => "equal",
        }
    }

    fn from_margins(recursive: f64, nonrecursive: f64) -> Self {
        if (recursive - nonrecursive).abs() <= EXTREMENESS_TOLERANCE {
            Self::Equal
        } else if recursive > nonrecursive {
            Self::RecursiveMoreExtreme
        } else {
            Self::NonrecursiveMoreExtreme
        }
    }
}

impl fmt::Display for Extremeness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `|P(link 2) - P(link 3)|` for two routes with odds `ratio`.
pub fn margin(ratio: f64) -> f64 {
    if ratio.is_infinite() {
        1.0
    } else {
        (ratio - 1.0).abs() / (ratio + 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExtremenessReport {
    pub recursive_margin: f64,
    pub nonrecursive_margin: f64,
    pub verdict: Extremeness,
}

/// Which model splits the unconditional route probabilities further apart.
pub fn extremeness_check(s: &TwoRouteScenario) -> ExtremenessReport {
    let t = ratio_table(s);
    let recursive_margin = margin(t.recursive.marginal);
    let nonrecursive_margin = margin(t.nonrecursive.marginal);
    ExtremenessReport {
        recursive_margin,
        nonrecursive_margin,
        verdict: Extremeness::from_margins(recursive_margin, nonrecursive_margin),
    }
}

/// Model agreement at one scale parameter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalePoint {
    pub mu: f64,
    /// Largest absolute difference in any sequence probability.
    pub max_divergence: f64,
    /// Probability mass each model puts on sequences some utility-maximizing
    /// policy can produce.
    pub recursive_optimal_mass: f64,
    pub nonrecursive_optimal_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub deterministic: bool,
    /// Largest per-path probability difference at the given utility.
    pub path_divergence: f64,
    pub sweep: Vec<ScalePoint>,
    /// Whether the divergence never grows as the scale shrinks, once it is
    /// above [`NEGLIGIBLE_DIVERGENCE`].
    pub monotone: bool,
}

/// Probabilities conditional on each origin state; the optimal mass is
/// averaged over origin states by their probability.
struct Evaluation {
    recursive_sequences: BTreeMap<StateSequence, f64>,
    nonrecursive_sequences: BTreeMap<StateSequence, f64>,
    recursive_paths: BTreeMap<(State, Vec<LinkId>), f64>,
    nonrecursive_paths: BTreeMap<(State, Vec<LinkId>), f64>,
    recursive_optimal_mass: f64,
    nonrecursive_optimal_mass: f64,
}

fn evaluate(
    network: &StdNetwork,
    spp: &SupportPointSet,
    utility: &LinkUtilitySpec,
) -> Result<Evaluation> {
    let mut out = Evaluation {
        recursive_sequences: BTreeMap::new(),
        nonrecursive_sequences: BTreeMap::new(),
        recursive_paths: BTreeMap::new(),
        nonrecursive_paths: BTreeMap::new(),
        recursive_optimal_mass: 0.0,
        nonrecursive_optimal_mass: 0.0,
    };
    let roots = origin_states(network, spp);
    let vf = solve_value_functions_from(network, spp, utility, &roots)?;
    for initial in &roots {
        let weight = spp.mass(&initial.ev);
        let cs = enumerate_policies(network, spp, initial, DEFAULT_POLICY_CAP)?;
        let values = cs
            .policies()
            .iter()
            .map(|g| policy_expected_utility(network, spp, g, utility))
            .collect::<Result<Vec<_>>>()?;
        let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tol = 1e-9 * best.abs().max(1.0);
        let optimal: Vec<_> = cs
            .policies()
            .iter()
            .zip(&values)
            .filter(|(_, &v)| v >= best - tol)
            .map(|(g, _)| g.clone())
            .collect();
        let is_optimal = |seq: &StateSequence| optimal.iter().any(|g| contains(g, seq));

        for (seq, p) in sequence_probabilities(&vf, initial, DEFAULT_POLICY_CAP)? {
            if is_optimal(&seq) {
                out.recursive_optimal_mass += weight * p;
            }
            *out.recursive_paths
                .entry((initial.clone(), seq.path()))
                .or_insert(0.0) += p;
            out.recursive_sequences.insert(seq, p);
        }
        let model = NonRecursiveModel::new(cs, network, spp, utility)?;
        for (seq, p) in model.sequence_probabilities() {
            if is_optimal(&seq) {
                out.nonrecursive_optimal_mass += weight * p;
            }
            *out.nonrecursive_paths
                .entry((initial.clone(), seq.path()))
                .or_insert(0.0) += p;
            out.nonrecursive_sequences.insert(seq, p);
        }
    }
    Ok(out)
}

fn max_difference<K: Ord>(a: &BTreeMap<K, f64>, b: &BTreeMap<K, f64>) -> f64 {
    let get = |m: &BTreeMap<K, f64>, k: &K| m.get(k).copied().unwrap_or(0.0);
    a.keys()
        .chain(b.keys())
        .map(|k| (get(a, k) - get(b, k)).abs())
        .fold(0.0, f64::max)
}

/// Compares the two models on an arbitrary network: path probabilities at
/// `utility`, then sequence probabilities as the scale parameter shrinks
/// through [`MU_SWEEP`]. Both models use the exhaustive policy choice set.
pub fn equivalence_report(
    network: &StdNetwork,
    spp: &SupportPointSet,
    utility: &LinkUtilitySpec,
) -> Result<EquivalenceReport> {
    let base = evaluate(network, spp, utility)?;
    let path_divergence = max_difference(&base.recursive_paths, &base.nonrecursive_paths);
    let mut sweep = Vec::with_capacity(MU_SWEEP.len());
    for mu in MU_SWEEP {
        let e = evaluate(network, spp, &utility.with_mu(mu)?)?;
        sweep.push(ScalePoint {
            mu,
            max_divergence: max_difference(&e.recursive_sequences, &e.nonrecursive_sequences),
            recursive_optimal_mass: e.recursive_optimal_mass,
            nonrecursive_optimal_mass: e.nonrecursive_optimal_mass,
        });
    }
    let monotone = sweep.windows(2).all(|w| {
        w[1].max_divergence <= w[0].max_divergence || w[1].max_divergence <= NEGLIGIBLE_DIVERGENCE
    });
    Ok(EquivalenceReport {
        deterministic: spp.is_deterministic(),
        path_divergence,
        sweep,
        monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{load_network, NetworkDocument};

    const FIGURE1: &str = include_str!("../fixtures/figure1.json");

    fn example_scenario() -> TwoRouteScenario {
        TwoRouteScenario::new(3.0, 2.0, -1.0, 0.0, 0.5).unwrap()
    }

    #[test]
    fn default_scenario_builds_the_fixture() {
        let tr = build_two_route_network(&example_scenario()).unwrap();
        assert_eq!(tr.scale, 1.0);
        let (net, spp) = load_network(FIGURE1).unwrap();
        assert_eq!(
            NetworkDocument::from_parts(&tr.network, &tr.spp),
            NetworkDocument::from_parts(&net, &spp)
        );
        assert_eq!(tr.fork[0].to_string(), "(1 1 {0})");
        assert_eq!(tr.fork[1].to_string(), "(1 1 {1})");
    }

    #[test]
    fn fractional_times_are_scaled() {
        let s = TwoRouteScenario::new(2.5, 1.25, 0.3, -0.05, 0.3).unwrap();
        let tr = build_two_route_network(&s).unwrap();
        assert_eq!(tr.scale, 100.0);
        assert_eq!(tr.spp.time_of(0, 1, 2), 250);
        assert_eq!(tr.spp.time_of(0, 1, 3), 280);
        assert_eq!(tr.spp.time_of(1, 1, 3), 120);
        assert!(
            build_two_route_network(&TwoRouteScenario::new(1.0, 1.0, 1e-9, 0.0, 0.5).unwrap())
                .is_err()
        );
    }

    #[test]
    fn scenario_domain_is_enforced() {
        assert!(TwoRouteScenario::new(0.0, 1.0, 0.0, 0.0, 0.5).is_err());
        assert!(TwoRouteScenario::new(1.0, 1.0, -1.0, 0.0, 0.5).is_err());
        assert!(TwoRouteScenario::new(1.0, 1.0, 0.0, -1.5, 0.5).is_err());
        assert!(TwoRouteScenario::new(1.0, 1.0, 0.0, 0.0, 1.0).is_err());
        assert!(TwoRouteScenario::new(1.0, 1.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn equal_routes_give_unit_odds() {
        let s = TwoRouteScenario::new(2.0, 4.0, 0.0, 0.0, 0.3).unwrap();
        let t = ratio_table(&s);
        for v in [
            t.recursive.state1,
            t.recursive.state2,
            t.recursive.marginal,
            t.nonrecursive.state1,
            t.nonrecursive.state2,
            t.nonrecursive.marginal,
        ] {
            assert_eq!(v, 1.0);
        }
        assert_eq!(extremeness_check(&s).verdict, Extremeness::Equal);
        assert_eq!(dominance_class(&s), DominanceClass::Equal);
    }

    #[test]
    fn default_scenario_odds_match_worked_example() {
        let t = ratio_table(&example_scenario());
        let e = std::f64::consts::E;
        assert!((t.recursive.state1 - 1.0 / e).abs() < 1e-15);
        // P(link 2) / P(link 3) from the path masses of each model.
        let rec = (1.0 / (1.0 + e) / 2.0 + 0.25) / (e / (1.0 + e) / 2.0 + 0.25);
        assert!((t.recursive.marginal - rec).abs() < 1e-12);
        assert!((t.nonrecursive.marginal - 0.4388 / 0.5612).abs() < 5e-4);
    }

    #[test]
    fn pipeline_matches_closed_form() {
        for s in [
            example_scenario(),
            TwoRouteScenario::new(2.0, 2.0, 1.0, 1.0, 0.5).unwrap(),
            TwoRouteScenario::new(2.5, 1.25, 0.3, -0.05, 0.3).unwrap(),
            TwoRouteScenario::new(4.0, 1.0, -3.5, 2.5, 0.9).unwrap(),
        ] {
            let c = ratio_table(&s);
            let n = pipeline_ratio_table(&s).unwrap();
            for (a, b) in [
                (c.recursive.state1, n.recursive.state1),
                (c.recursive.state2, n.recursive.state2),
                (c.recursive.marginal, n.recursive.marginal),
                (c.nonrecursive.state1, n.nonrecursive.state1),
                (c.nonrecursive.state2, n.nonrecursive.state2),
                (c.nonrecursive.marginal, n.nonrecursive.marginal),
            ] {
                assert!((a - b).abs() < 1e-10, "{s:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn dominance_follows_offset_signs() {
        let class = |x, y| dominance_class(&TwoRouteScenario::new(2.0, 2.0, x, y, 0.5).unwrap());
        assert_eq!(class(1.0, 2.0), DominanceClass::Route2Dominant);
        assert_eq!(class(-1.0, -0.5), DominanceClass::Route3Dominant);
        assert_eq!(class(1.0, -0.5), DominanceClass::Nondominated);
        assert_eq!(class(-1.0, 0.5), DominanceClass::Nondominated);
        assert_eq!(class(0.0, 0.0), DominanceClass::Equal);
        assert_eq!(class(0.5, 0.0), DominanceClass::Route2Dominant);
    }

    #[test]
    fn dominant_routes_make_recursive_more_extreme() {
        for (x, y) in [(1.0, 1.0), (0.1, 4.0), (-1.0, 0.0), (-0.5, -1.5)] {
            let s = TwoRouteScenario::new(2.0, 2.0, x, y, 0.4).unwrap();
            assert_eq!(
                extremeness_check(&s).verdict,
                Extremeness::RecursiveMoreExtreme,
                "{x} {y}"
            );
        }
        let r = extremeness_check(&example_scenario());
        assert!((r.nonrecursive_margin - (0.5612 - 0.4388)).abs() < 5e-4);
    }

    #[test]
    fn deterministic_network_models_agree() {
        let (net, spp) = load_network(FIGURE1).unwrap();
        // Keep only the second support point.
        let mut doc = NetworkDocument::from_parts(&net, &spp);
        doc.support_points.remove(0);
        doc.support_points[0].probability = 1.0;
        let (net, spp) = doc.build().unwrap();
        let report = equivalence_report(&net, &spp, &LinkUtilitySpec::default()).unwrap();
        assert!(report.deterministic);
        assert!(report.path_divergence < 1e-12);
        assert!(report.sweep.iter().all(|p| p.max_divergence < 1e-12));
        let vf = crate::recursive::solve_value_functions(&net, &spp, &LinkUtilitySpec::default())
            .unwrap();
        let paths = path_probabilities(&vf, &origin_states(&net, &spp)[0], 100).unwrap();
        assert!(paths.values().all(|p| (p - 0.5).abs() < 1e-12));
    }

    #[test]
    fn small_scale_concentrates_on_optimal_policies() {
        let (net, spp) = load_network(FIGURE1).unwrap();
        let report = equivalence_report(&net, &spp, &LinkUtilitySpec::default()).unwrap();
        assert!(!report.deterministic);
        assert!(report.monotone, "{:?}", report.sweep);
        let last = report.sweep.last().unwrap();
        assert!(last.recursive_optimal_mass > 0.999);
        assert!(last.nonrecursive_optimal_mass > 0.999);
        assert!(last.max_divergence < 1e-3);
    }
}
