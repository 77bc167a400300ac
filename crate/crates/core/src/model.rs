//! Model specification: motifs with coefficients, a base measure and the
//! star-counting convention.

use serde::{Deserialize, Serialize};

use crate::base_measure::BaseMeasure;
use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::homomorphism::{fast_statistic, hom_density, Convention, Family, Motif, MotifSpec, Target};

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub motif: Motif,
    pub beta: f64,
}

/// `T(k) = Σ βᵢ t(Hᵢ, k)` over i.i.d. edges drawn from `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelConfig", into = "ModelConfig")]
pub struct ModelSpec {
    pub terms: Vec<Term>,
    pub base: BaseMeasure,
    pub convention: Convention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    pub motif: MotifSpec,
    pub beta: f64,
}

/// On-disk form of [`ModelSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub base: BaseMeasure,
    pub motifs: Vec<TermConfig>,
    #[serde(default)]
    pub convention: Convention,
}

impl TryFrom<ModelConfig> for ModelSpec {
    type Error = Error;

    fn try_from(c: ModelConfig) -> Result<Self> {
        let terms = c
            .motifs
            .iter()
            .map(|t| Ok(Term { motif: Motif::from_spec(&t.motif)?, beta: t.beta }))
            .collect::<Result<Vec<_>>>()?;
        let spec = ModelSpec { terms, base: c.base, convention: c.convention };
        spec.validate()?;
        Ok(spec)
    }
}

impl From<ModelSpec> for ModelConfig {
    fn from(s: ModelSpec) -> Self {
        ModelConfig {
            base: s.base,
            motifs: s.terms.iter().map(|t| TermConfig { motif: t.motif.to_spec(), beta: t.beta }).collect(),
            convention: s.convention,
        }
    }
}

impl ModelSpec {
    pub fn new(terms: Vec<(Motif, f64)>, base: BaseMeasure, convention: Convention) -> Result<Self> {
        let spec = ModelSpec {
            terms: terms.into_iter().map(|(motif, beta)| Term { motif, beta }).collect(),
            base,
            convention,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Edge plus all-maps two-star over a standard Gaussian base.
    pub fn gaussian_edge_two_star(beta1: f64, beta2: f64) -> Self {
        Self::edge_two_star(BaseMeasure::standard_gaussian(), beta1, beta2)
    }

    pub fn edge_two_star(base: BaseMeasure, beta1: f64, beta2: f64) -> Self {
        ModelSpec {
            terms: vec![
                Term { motif: Motif::edge(), beta: beta1 },
                Term { motif: Motif::two_star(), beta: beta2 },
            ],
            base,
            convention: Convention::AllMaps,
        }
    }

    pub fn edge_triangle(base: BaseMeasure, beta1: f64, beta2: f64) -> Self {
        ModelSpec {
            terms: vec![
                Term { motif: Motif::edge(), beta: beta1 },
                Term { motif: Motif::triangle(), beta: beta2 },
            ],
            base,
            convention: Convention::AllMaps,
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        for (i, t) in self.terms.iter().enumerate() {
            if !t.beta.is_finite() {
                return Err(Error::Config(format!("motif {i}: beta must be finite, got {}", t.beta)));
            }
        }
        Ok(())
    }

    pub fn betas(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.beta).collect()
    }

    pub fn dim(&self) -> usize {
        self.terms.len()
    }

    pub fn with_betas(&self, beta: &[f64]) -> Result<Self> {
        if beta.len() != self.terms.len() {
            return Err(Error::Argument(format!(
                "model has {} coefficients, got {}",
                self.terms.len(),
                beta.len()
            )));
        }
        let mut s = self.clone();
        for (t, &b) in s.terms.iter_mut().zip(beta) {
            t.beta = b;
        }
        s.validate()?;
        Ok(s)
    }

    /// True when every motif is an unweighted edge or star; these have O(n)
    /// single-edge updates in the sampler.
    pub fn is_star_model(&self) -> bool {
        self.terms.iter().all(|t| {
            t.motif.is_edge_unweighted() && t.motif.is_node_unweighted() && t.motif.star_leaves().is_some()
        })
    }

    /// `t(Hᵢ, k_G)` for each term under the model's convention.
    pub fn statistics(&self, g: &WeightedGraph) -> Result<Vec<f64>> {
        self.terms
            .iter()
            .map(|t| {
                let m = &t.motif;
                if !(m.is_edge_unweighted() && m.is_node_unweighted()) {
                    return hom_density(m, Target::Graph(g), None);
                }
                match (m.star_leaves(), m.family()) {
                    (Some(j), _) => fast_statistic(Family::JStar { j }, g, self.convention),
                    (None, Family::Triangle) => fast_statistic(Family::Triangle, g, self.convention),
                    _ => hom_density(m, Target::Graph(g), None),
                }
            })
            .collect()
    }

    /// `n² T(x)`.
    pub fn hamiltonian(&self, g: &WeightedGraph) -> Result<f64> {
        let n = g.n() as f64;
        let stats = self.statistics(g)?;
        Ok(n * n * self.terms.iter().zip(&stats).map(|(t, s)| t.beta * s).sum::<f64>())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip() {
        let text = r#"{
            "base": {"kind": "gaussian", "mean": 0.0, "variance": 1.0},
            "motifs": [
                {"motif": {"family": "edge"}, "beta": 0.1},
                {"motif": {"family": "j_star", "j": 3}, "beta": 0.05},
                {"motif": {"family": "general", "edges": [[0,1,1],[1,2,1]]}, "beta": -0.2}
            ],
            "convention": "distinct_indices"
        }"#;
        let spec = ModelSpec::from_json_str(text).unwrap();
        assert_eq!(spec.dim(), 3);
        let again = ModelSpec::from_json_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(again, spec);
    }

    #[test]
    fn config_errors_report_location() {
        let err = ModelSpec::from_json_str("{\n \"base\": {\"kind\": \"gaussian\", \"mean\": 0, \"variance\": -1},\n \"motifs\": []\n}")
            .unwrap_err();
        assert!(err.to_string().contains("positive variance"), "{err}");
        let err = ModelSpec::from_json_str("{\n \"base\": {\"kind\": \"quartic\"},\n \"motifz\": []\n}").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn statistics_follow_convention() {
        let g = WeightedGraph::complete(3, 1.0);
        let mut spec = ModelSpec::gaussian_edge_two_star(1.0, 1.0);
        let s = spec.statistics(&g).unwrap();
        assert!((s[0] - 6.0 / 9.0).abs() < 1e-15 && (s[1] - 4.0 / 9.0).abs() < 1e-15);
        spec.convention = Convention::DistinctIndices;
        let s = spec.statistics(&g).unwrap();
        assert!((s[1] - 2.0 / 9.0).abs() < 1e-15);
        // general path star matches
        let gen = Motif::general(3, vec![(0, 1, 1.0), (0, 2, 1.0)], None).unwrap();
        let spec2 = ModelSpec::new(vec![(gen, 1.0)], BaseMeasure::Quartic, Convention::DistinctIndices).unwrap();
        assert!((spec2.statistics(&g).unwrap()[0] - 2.0 / 9.0).abs() < 1e-15);
        assert!((spec.hamiltonian(&g).unwrap() - (6.0 + 2.0)).abs() < 1e-12);
    }
}
