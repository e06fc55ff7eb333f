//! User degree distributions: the repetition polynomial Λ(x) = Σ Λ_l x^l of a class.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Allowed deviation of Σ Λ_l from 1.
pub const NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("degree distribution is empty")]
    Empty,
    #[error("probabilities sum to {sum}, not 1")]
    NotNormalized { sum: f64 },
    #[error("negative probability {prob} for degree {degree}")]
    NegativeProbability { degree: u32, prob: f64 },
    #[error("degree 0 is not a valid repetition count")]
    ZeroDegree,
    #[error("{loads} loads given for {dists} distributions")]
    LengthMismatch { loads: usize, dists: usize },
    #[error("total load is zero")]
    ZeroTotalLoad,
}

/// A validated degree distribution. Only nonzero degrees are stored, sorted
/// ascending; `cumulative` backs sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeDistribution {
    terms: Vec<(u32, f64)>,
    cumulative: Vec<f64>,
}

impl DegreeDistribution {
    /// Validates and builds a distribution. Sums within [`NORMALIZATION_TOL`]
    /// of 1 are renormalized; anything further off is rejected.
    pub fn new<I>(probs: I) -> Result<Self, DistError>
    where
        I: IntoIterator<Item = (u32, f64)>,
    {
        let mut merged: BTreeMap<u32, f64> = BTreeMap::new();
        for (degree, prob) in probs {
            if degree == 0 {
                return Err(DistError::ZeroDegree);
            }
            if !(prob >= 0.0) {
                return Err(DistError::NegativeProbability { degree, prob });
            }
            *merged.entry(degree).or_insert(0.0) += prob;
        }
        if merged.is_empty() {
            return Err(DistError::Empty);
        }
        let sum: f64 = merged.values().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(DistError::NotNormalized { sum });
        }
        let terms: Vec<(u32, f64)> = merged
            .into_iter()
            .filter(|&(_, p)| p > 0.0)
            .map(|(l, p)| (l, p / sum))
            .collect();
        Ok(Self::from_terms(terms))
    }

    fn from_terms(terms: Vec<(u32, f64)>) -> Self {
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = terms
            .iter()
            .map(|&(_, p)| {
                acc += p;
                acc
            })
            .collect();
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        Self { terms, cumulative }
    }

    /// Λ(x) = x^degree.
    pub fn regular(degree: u32) -> Result<Self, DistError> {
        Self::new([(degree, 1.0)])
    }

    /// Λ*(x) = 0.5x² + 0.28x³ + 0.22x⁸, the maximum-degree-8 distribution
    /// the capacity-region examples are built on.
    pub fn optimal_irsa() -> Self {
        Self::new([(2, 0.5), (3, 0.28), (8, 0.22)]).expect("Λ* is normalized")
    }

    /// Nonzero `(degree, probability)` pairs in ascending degree order.
    pub fn terms(&self) -> &[(u32, f64)] {
        &self.terms
    }

    pub fn prob(&self, degree: u32) -> f64 {
        self.terms
            .binary_search_by_key(&degree, |&(l, _)| l)
            .map(|i| self.terms[i].1)
            .unwrap_or(0.0)
    }

    pub fn max_degree(&self) -> u32 {
        self.terms.last().map(|&(l, _)| l).unwrap_or(0)
    }

    pub fn min_degree(&self) -> u32 {
        self.terms.first().map(|&(l, _)| l).unwrap_or(0)
    }

    /// Average number of replicas per user, Λ'(1).
    pub fn mean_degree(&self) -> f64 {
        self.terms.iter().map(|&(l, p)| l as f64 * p).sum()
    }

    /// Evaluates Λ(x).
    pub fn eval(&self, x: f64) -> f64 {
        self.terms.iter().map(|&(l, p)| p * x.powi(l as i32)).sum()
    }

    pub fn sample_degree<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.gen();
        let idx = self.cumulative.partition_point(|&c| c <= u);
        self.terms[idx.min(self.terms.len() - 1)].0
    }

    /// Edge-perspective polynomial λ(x) = Λ'(x)/Λ'(1).
    pub fn edge_perspective(&self) -> EdgePerspective {
        let mean = self.mean_degree();
        let terms = self
            .terms
            .iter()
            .map(|&(l, p)| (l - 1, l as f64 * p / mean))
            .collect();
        EdgePerspective { terms }
    }
}

/// Load-weighted average Λ(x) = (1/G_t) Σ G_i Λ_i(x) of several class
/// distributions. Classes with zero load drop out of the mix.
pub fn mix_distributions(
    loads: &[f64],
    dists: &[DegreeDistribution],
) -> Result<DegreeDistribution, DistError> {
    if loads.len() != dists.len() {
        return Err(DistError::LengthMismatch {
            loads: loads.len(),
            dists: dists.len(),
        });
    }
    let total: f64 = loads.iter().sum();
    if !(total > 0.0) {
        return Err(DistError::ZeroTotalLoad);
    }
    let mut mixed: BTreeMap<u32, f64> = BTreeMap::new();
    for (&g, dist) in loads.iter().zip(dists) {
        if g <= 0.0 {
            continue;
        }
        for &(l, p) in dist.terms() {
            *mixed.entry(l).or_insert(0.0) += g / total * p;
        }
    }
    DegreeDistribution::new(mixed)
}

/// λ(x) = Σ λ_j x^j where λ_j is the probability that a random replica
/// belongs to a user with j other replicas.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgePerspective {
    terms: Vec<(u32, f64)>,
}

impl EdgePerspective {
    pub fn terms(&self) -> &[(u32, f64)] {
        &self.terms
    }

    pub fn coeff(&self, power: u32) -> f64 {
        self.terms
            .iter()
            .find(|&&(j, _)| j == power)
            .map(|&(_, c)| c)
            .unwrap_or(0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.terms.iter().map(|&(j, c)| c * x.powi(j as i32)).sum()
    }

    /// True when λ(x) ≡ 1, i.e. every user sends a single replica.
    pub fn is_constant(&self) -> bool {
        self.terms.len() == 1 && self.terms[0].0 == 0
    }
}

impl fmt::Display for DegreeDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, &(l, p)) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            match l {
                1 => write!(f, "{p}x")?,
                _ => write!(f, "{p}x^{l}")?,
            }
        }
        Ok(())
    }
}

// Configuration form: {"2": 0.5, "3": 0.28, "8": 0.22}.
impl Serialize for DegreeDistribution {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let map: BTreeMap<String, f64> = self
            .terms
            .iter()
            .map(|&(l, p)| (l.to_string(), p))
            .collect();
        map.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DegreeDistribution {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw: BTreeMap<String, f64> = BTreeMap::deserialize(deserializer)?;
        let mut probs = Vec::with_capacity(raw.len());
        for (key, p) in raw {
            let degree: u32 = key
                .trim()
                .parse()
                .map_err(|_| D::Error::custom(format!("degree key {key:?} is not an integer")))?;
            probs.push((degree, p));
        }
        DegreeDistribution::new(probs).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dist(terms: &[(u32, f64)]) -> DegreeDistribution {
        DegreeDistribution::new(terms.iter().copied()).unwrap()
    }

    #[test]
    fn constructor_examples() {
        let id = dist(&[(1, 1.0)]);
        assert_eq!(id.terms(), &[(1, 1.0)]);
        assert_eq!(id.eval(0.3), 0.3);

        let star = dist(&[(2, 0.5), (3, 0.28), (8, 0.22)]);
        assert_eq!(star.max_degree(), 8);
        assert_eq!(star, DegreeDistribution::optimal_irsa());

        assert!(matches!(
            DegreeDistribution::new([(2, 0.6), (3, 0.3)]),
            Err(DistError::NotNormalized { .. })
        ));
    }

    #[test]
    fn constructor_errors() {
        assert_eq!(
            DegreeDistribution::new([(0, 1.0)]),
            Err(DistError::ZeroDegree)
        );
        assert!(matches!(
            DegreeDistribution::new([(1, 1.5), (2, -0.5)]),
            Err(DistError::NegativeProbability { degree: 2, .. })
        ));
        assert_eq!(
            DegreeDistribution::new(std::iter::empty()),
            Err(DistError::Empty)
        );
        assert!(DegreeDistribution::new([(1, f64::NAN)]).is_err());
    }

    #[test]
    fn tiny_deviation_is_renormalized() {
        let d = dist(&[(2, 0.5 + 4e-10), (3, 0.5)]);
        let sum: f64 = d.terms().iter().map(|t| t.1).sum();
        assert!((sum - 1.0).abs() < 1e-15);
        assert!(DegreeDistribution::new([(2, 0.5 + 2e-9), (3, 0.5)]).is_err());
    }

    #[test]
    fn zero_terms_are_dropped() {
        let d = dist(&[(2, 1.0), (5, 0.0)]);
        assert_eq!(d.terms().len(), 1);
        assert_eq!(d.max_degree(), 2);
    }

    #[test]
    fn mean_degree_examples() {
        assert_eq!(dist(&[(1, 1.0)]).mean_degree(), 1.0);
        assert!((DegreeDistribution::optimal_irsa().mean_degree() - 3.6).abs() < 1e-12);
        assert_eq!(dist(&[(8, 1.0)]).mean_degree(), 8.0);
    }

    #[test]
    fn sampling_point_mass_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let id = dist(&[(1, 1.0)]);
        assert!((0..1000).all(|_| id.sample_degree(&mut rng) == 1));

        let d = dist(&[(2, 0.5), (4, 0.5)]);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..64).map(|_| d.sample_degree(&mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(7), draw(7));
        assert!(draw(7).iter().all(|&l| l == 2 || l == 4));
    }

    #[test]
    fn sampling_matches_probabilities_within_3_sigma() {
        let star = DegreeDistribution::optimal_irsa();
        let n = 1_000_000u32;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut counts = BTreeMap::new();
        for _ in 0..n {
            *counts.entry(star.sample_degree(&mut rng)).or_insert(0u32) += 1;
        }
        for &(l, p) in star.terms() {
            let observed = counts[&l] as f64;
            let expected = n as f64 * p;
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            assert!(
                (observed - expected).abs() <= 3.0 * sigma,
                "degree {l}: {observed} vs {expected}"
            );
        }
    }

    #[test]
    fn mix_examples() {
        let x2 = dist(&[(2, 1.0)]);
        let x4 = dist(&[(4, 1.0)]);
        let mixed = mix_distributions(&[0.2, 0.2], &[x2.clone(), x4]).unwrap();
        assert!((mixed.prob(2) - 0.5).abs() < 1e-12);
        assert!((mixed.prob(4) - 0.5).abs() < 1e-12);

        let star = DegreeDistribution::optimal_irsa();
        let single = mix_distributions(&[0.7, 0.0], &[star.clone(), x2]).unwrap();
        assert_eq!(single.terms().len(), 3);
        for &(l, p) in star.terms() {
            assert!((single.prob(l) - p).abs() < 1e-12);
        }
        let same = mix_distributions(&[0.3, 0.3], &[star.clone(), star.clone()]).unwrap();
        for &(l, p) in star.terms() {
            assert!((same.prob(l) - p).abs() < 1e-12);
        }
    }

    #[test]
    fn mix_errors() {
        let x2 = dist(&[(2, 1.0)]);
        assert_eq!(
            mix_distributions(&[0.0, 0.0], &[x2.clone(), x2.clone()]),
            Err(DistError::ZeroTotalLoad)
        );
        assert!(matches!(
            mix_distributions(&[0.1], &[x2.clone(), x2]),
            Err(DistError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn edge_perspective_examples() {
        let l2 = dist(&[(2, 1.0)]).edge_perspective();
        assert_eq!(l2.terms(), &[(1, 1.0)]);

        let l1 = dist(&[(1, 1.0)]).edge_perspective();
        assert!(l1.is_constant());
        assert_eq!(l1.eval(0.0), 1.0);

        let star = DegreeDistribution::optimal_irsa().edge_perspective();
        assert!((star.coeff(1) - 1.0 / 3.6).abs() < 1e-12);
        assert!((star.coeff(2) - 0.84 / 3.6).abs() < 1e-12);
        assert!((star.coeff(7) - 1.76 / 3.6).abs() < 1e-12);
        assert!((star.eval(1.0) - 1.0).abs() < 1e-12);
        assert_eq!(star.eval(0.0), 0.0);
    }

    #[test]
    fn config_form_round_trips() {
        let star: DegreeDistribution =
            serde_json::from_str(r#"{"2": 0.5, "3": 0.28, "8": 0.22}"#).unwrap();
        assert_eq!(star, DegreeDistribution::optimal_irsa());
        let text = serde_json::to_string(&star).unwrap();
        let back: DegreeDistribution = serde_json::from_str(&text).unwrap();
        assert_eq!(back, star);
        assert!(serde_json::from_str::<DegreeDistribution>(r#"{"two": 1.0}"#).is_err());
        assert!(serde_json::from_str::<DegreeDistribution>(r#"{"2": 0.6, "3": 0.3}"#).is_err());
    }
}
