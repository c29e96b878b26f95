use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::LinkId;

/// One component of the per-link attribute vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Attribute {
    /// Travel time of the chosen link at the decision state.
    TravelTime,
    /// 1 for every link; its coefficient is a per-link constant.
    LinkCount,
    /// 1 when the chosen link is `link`, 0 otherwise.
    LinkIndicator { link: LinkId },
}

impl Attribute {
    pub fn value(&self, link: LinkId, travel_time: u32) -> f64 {
        match self {
            Attribute::TravelTime => f64::from(travel_time),
            Attribute::LinkCount => 1.0,
            Attribute::LinkIndicator { link: l } => f64::from(u8::from(*l == link)),
        }
    }
}

/// Deterministic link utility `beta · attributes` with logit scale `mu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkUtilitySpec {
    beta: Vec<f64>,
    attributes: Vec<Attribute>,
    mu: f64,
}

impl LinkUtilitySpec {
    pub fn new(beta: Vec<f64>, attributes: Vec<Attribute>, mu: f64) -> Result<Self> {
        if beta.len() != attributes.len() {
            return Err(Error::Utility(format!(
                "{} coefficients for {} attributes",
                beta.len(),
                attributes.len()
            )));
        }
        if attributes.is_empty() {
            return Err(Error::Utility("at least one attribute is required".into()));
        }
        if let Some(b) = beta.iter().find(|b| !b.is_finite()) {
            return Err(Error::Utility(format!("coefficient {b} is not finite")));
        }
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::Utility(format!(
                "scale mu must be positive, got {mu}"
            )));
        }
        Ok(Self {
            beta,
            attributes,
            mu,
        })
    }

    /// Travel time as the only attribute.
    pub fn travel_time(beta: f64, mu: f64) -> Result<Self> {
        Self::new(vec![beta], vec![Attribute::TravelTime], mu)
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn with_beta(&self, beta: Vec<f64>) -> Result<Self> {
        Self::new(beta, self.attributes.clone(), self.mu)
    }

    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        Self::new(self.beta.clone(), self.attributes.clone(), mu)
    }

    pub fn attribute_vector(&self, link: LinkId, travel_time: u32) -> Vec<f64> {
        self.attributes
            .iter()
            .map(|a| a.value(link, travel_time))
            .collect()
    }

    pub fn utility_of(&self, attributes: &[f64]) -> f64 {
        dot(&self.beta, attributes)
    }

    pub fn link_utility(&self, link: LinkId, travel_time: u32) -> f64 {
        self.utility_of(&self.attribute_vector(link, travel_time))
    }
}

impl Default for LinkUtilitySpec {
    /// `omega = -tau`, `mu = 1`.
    fn default() -> Self {
        Self {
            beta: vec![-1.0],
            attributes: vec![Attribute::TravelTime],
            mu: 1.0,
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_negative_travel_time() {
        let u = LinkUtilitySpec::default();
        assert_eq!(u.link_utility(LinkId(2), 3), -3.0);
        assert_eq!(u.mu(), 1.0);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(LinkUtilitySpec::travel_time(-1.0, 0.0).is_err());
        assert!(LinkUtilitySpec::travel_time(-1.0, -2.0).is_err());
        assert!(LinkUtilitySpec::travel_time(f64::NAN, 1.0).is_err());
        assert!(LinkUtilitySpec::new(vec![1.0, 2.0], vec![Attribute::TravelTime], 1.0).is_err());
    }

    #[test]
    fn indicator_and_constant() {
        let u = LinkUtilitySpec::new(
            vec![-1.0, 0.5, 2.0],
            vec![
                Attribute::TravelTime,
                Attribute::LinkCount,
                Attribute::LinkIndicator { link: LinkId(3) },
            ],
            1.0,
        )
        .unwrap();
        assert_eq!(u.link_utility(LinkId(3), 2), -2.0 + 0.5 + 2.0);
        assert_eq!(u.link_utility(LinkId(2), 2), -2.0 + 0.5);
    }
}
