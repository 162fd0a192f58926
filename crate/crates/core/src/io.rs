//! JSON documents for process specifications and complex matrices.
//!
//! Complex numbers are written as `{"re": .., "im": ..}` and matrices as
//! row-major arrays of rows. Writers produce pretty-printed JSON with a
//! trailing newline; reading and rewriting a file reproduces it byte for byte.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::linalg::{CMatrix, CVector, C64};
use crate::process::{
    AnySpec, Branch, DiscreteBranch, DiscreteProcessSpec, DwellDistribution, MixtureComponent,
    ProcessSpec,
};

#[derive(Debug, Error)]
pub enum DocError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("branch {index}: unknown {what} '{name}'")]
    UnknownName {
        index: usize,
        what: &'static str,
        name: String,
    },
    #[error("branch {index}: {msg}")]
    BadBranch { index: usize, msg: String },
    #[error("matrix {name}: {msg}")]
    BadMatrix { name: String, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexDoc {
    pub re: f64,
    pub im: f64,
}

impl From<C64> for ComplexDoc {
    fn from(z: C64) -> Self {
        ComplexDoc { re: z.re, im: z.im }
    }
}

impl From<ComplexDoc> for C64 {
    fn from(z: ComplexDoc) -> Self {
        C64::new(z.re, z.im)
    }
}

pub type MatrixDoc = Vec<Vec<ComplexDoc>>;

pub fn matrix_to_doc(m: &CMatrix) -> MatrixDoc {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].into()).collect())
        .collect()
}

/// Parses a square matrix of dimension `dim`.
pub fn matrix_from_doc(name: &str, doc: &MatrixDoc, dim: usize) -> Result<CMatrix, DocError> {
    let bad = |msg: String| DocError::BadMatrix {
        name: name.to_string(),
        msg,
    };
    if doc.len() != dim {
        return Err(bad(format!("expected {dim} rows, found {}", doc.len())));
    }
    let mut m = CMatrix::zeros(dim, dim);
    for (i, row) in doc.iter().enumerate() {
        if row.len() != dim {
            return Err(bad(format!("row {i} has {} entries, expected {dim}", row.len())));
        }
        for (j, z) in row.iter().enumerate() {
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(bad(format!("entry ({i},{j}) is not finite")));
            }
            m[(i, j)] = (*z).into();
        }
    }
    Ok(m)
}

pub fn vector_to_doc(v: &CVector) -> Vec<ComplexDoc> {
    v.iter().map(|&z| z.into()).collect()
}

pub fn vector_from_doc(doc: &[ComplexDoc]) -> CVector {
    CVector::from_iterator(doc.len(), doc.iter().map(|&z| C64::from(z)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "params", rename_all = "snake_case")]
pub enum DwellDoc {
    Exponential { rate: f64 },
    ExpMixture { weights: Vec<f64>, rates: Vec<f64> },
    Tabulated { t: Vec<f64>, density: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchDoc {
    pub from: String,
    pub symbol: String,
    pub prob: f64,
    pub to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dwell: Option<DwellDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SpecDoc {
    Hsmm {
        symbols: Vec<String>,
        modes: Vec<String>,
        branches: Vec<BranchDoc>,
    },
    Hmm {
        symbols: Vec<String>,
        states: Vec<String>,
        branches: Vec<BranchDoc>,
    },
}

impl From<&DwellDistribution> for DwellDoc {
    fn from(d: &DwellDistribution) -> Self {
        match d {
            DwellDistribution::Exponential { rate } => DwellDoc::Exponential { rate: *rate },
            DwellDistribution::ExpMixture { components } => DwellDoc::ExpMixture {
                weights: components.iter().map(|c| c.weight).collect(),
                rates: components.iter().map(|c| c.rate).collect(),
            },
            DwellDistribution::Tabulated(tab) => DwellDoc::Tabulated {
                t: tab.grid().to_vec(),
                density: tab.values().to_vec(),
            },
        }
    }
}

impl DwellDoc {
    fn into_dwell(self, index: usize) -> Result<DwellDistribution, DocError> {
        Ok(match self {
            DwellDoc::Exponential { rate } => DwellDistribution::exponential(rate),
            DwellDoc::ExpMixture { weights, rates } => {
                if weights.len() != rates.len() || weights.is_empty() {
                    return Err(DocError::BadBranch {
                        index,
                        msg: format!(
                            "exp_mixture needs equally many weights and rates, got {} and {}",
                            weights.len(),
                            rates.len()
                        ),
                    });
                }
                DwellDistribution::ExpMixture {
                    components: weights
                        .into_iter()
                        .zip(rates)
                        .map(|(weight, rate)| MixtureComponent { weight, rate })
                        .collect(),
                }
            }
            DwellDoc::Tabulated { t, density } => {
                if t.len() != density.len() {
                    return Err(DocError::BadBranch {
                        index,
                        msg: format!(
                            "tabulated grid has {} points but {} density values",
                            t.len(),
                            density.len()
                        ),
                    });
                }
                DwellDistribution::tabulated(t, density)
            }
        })
    }
}

fn lookup(names: &[String], name: &str, index: usize, what: &'static str) -> Result<usize, DocError> {
    names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| DocError::UnknownName {
            index,
            what,
            name: name.to_string(),
        })
}

impl SpecDoc {
    /// Resolves names into indices. Structural checks (stochasticity,
    /// reachability, densities) are left to `validate`.
    pub fn into_spec(self) -> Result<AnySpec, DocError> {
        match self {
            SpecDoc::Hsmm {
                symbols,
                modes,
                branches,
            } => {
                let mut out = vec![Vec::new(); modes.len()];
                for (i, b) in branches.into_iter().enumerate() {
                    let from = lookup(&modes, &b.from, i, "mode")?;
                    let to = lookup(&modes, &b.to, i, "mode")?;
                    let symbol = lookup(&symbols, &b.symbol, i, "symbol")?;
                    let dwell = b
                        .dwell
                        .ok_or_else(|| DocError::BadBranch {
                            index: i,
                            msg: "hsmm branch is missing its dwell law".into(),
                        })?
                        .into_dwell(i)?;
                    out[from].push(Branch {
                        symbol,
                        prob: b.prob,
                        successor: to,
                        dwell,
                    });
                }
                Ok(AnySpec::Hsmm(ProcessSpec {
                    symbols,
                    modes,
                    branches: out,
                }))
            }
            SpecDoc::Hmm {
                symbols,
                states,
                branches,
            } => {
                let mut out = vec![Vec::new(); states.len()];
                for (i, b) in branches.into_iter().enumerate() {
                    let from = lookup(&states, &b.from, i, "state")?;
                    let to = lookup(&states, &b.to, i, "state")?;
                    let symbol = lookup(&symbols, &b.symbol, i, "symbol")?;
                    out[from].push(DiscreteBranch {
                        symbol,
                        prob: b.prob,
                        successor: to,
                        phase: b.phase.unwrap_or(0.0),
                    });
                }
                Ok(AnySpec::Hmm(DiscreteProcessSpec {
                    symbols,
                    states,
                    branches: out,
                }))
            }
        }
    }
}

impl From<&ProcessSpec> for SpecDoc {
    fn from(s: &ProcessSpec) -> Self {
        let branches = s
            .branches
            .iter()
            .enumerate()
            .flat_map(|(g, bs)| {
                bs.iter().map(move |b| BranchDoc {
                    from: s.modes[g].clone(),
                    symbol: s.symbols[b.symbol].clone(),
                    prob: b.prob,
                    to: s.modes[b.successor].clone(),
                    dwell: Some((&b.dwell).into()),
                    phase: None,
                })
            })
            .collect();
        SpecDoc::Hsmm {
            symbols: s.symbols.clone(),
            modes: s.modes.clone(),
            branches,
        }
    }
}

impl From<&DiscreteProcessSpec> for SpecDoc {
    fn from(s: &DiscreteProcessSpec) -> Self {
        let branches = s
            .branches
            .iter()
            .enumerate()
            .flat_map(|(g, bs)| {
                bs.iter().map(move |b| BranchDoc {
                    from: s.states[g].clone(),
                    symbol: s.symbols[b.symbol].clone(),
                    prob: b.prob,
                    to: s.states[b.successor].clone(),
                    dwell: None,
                    phase: Some(b.phase),
                })
            })
            .collect();
        SpecDoc::Hmm {
            symbols: s.symbols.clone(),
            states: s.states.clone(),
            branches,
        }
    }
}

impl From<&AnySpec> for SpecDoc {
    fn from(s: &AnySpec) -> Self {
        match s {
            AnySpec::Hsmm(p) => p.into(),
            AnySpec::Hmm(d) => d.into(),
        }
    }
}

pub fn parse_spec(text: &str) -> Result<AnySpec, DocError> {
    let doc: SpecDoc = serde_json::from_str(text)?;
    doc.into_spec()
}

/// Pretty JSON with a trailing newline.
pub fn to_canonical_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("document types always serialize");
    s.push('\n');
    s
}

pub fn spec_to_json(spec: &AnySpec) -> String {
    to_canonical_json(&SpecDoc::from(spec))
}

/// Hex SHA-256 of the canonical serialization of a document.
pub fn model_hash<T: Serialize>(value: &T) -> String {
    hex::encode(Sha256::digest(to_canonical_json(value).as_bytes()))
}

/// Labelled matrices keyed by symbol, kept in sorted order for stable output.
pub type JumpDocs = BTreeMap<String, MatrixDoc>;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn spec_round_trip_is_byte_identical() {
        for spec in [
            AnySpec::Hsmm(fixtures::two_channel(0.25, 2.0, 1.0)),
            AnySpec::Hmm(fixtures::three_state_chain()),
            AnySpec::Hsmm(fixtures::hyperexponential_renewal((0.3, 0.7), (3.0, 0.5))),
        ] {
            let first = spec_to_json(&spec);
            let back = parse_spec(&first).unwrap();
            assert_eq!(back, spec);
            assert_eq!(spec_to_json(&back), first);
        }
    }

    #[test]
    fn unknown_names_are_reported() {
        let text = r#"{"kind":"hsmm","symbols":["a"],"modes":["g"],
            "branches":[{"from":"g","symbol":"b","prob":1.0,"to":"g",
            "dwell":{"type":"exponential","params":{"rate":1.0}}}]}"#;
        assert!(matches!(
            parse_spec(text),
            Err(DocError::UnknownName { what: "symbol", .. })
        ));
    }

    #[test]
    fn malformed_json_reports_location() {
        let err = parse_spec("{\"kind\": \"hsmm\",\n \"symbols\": [").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn tabulated_dwell_parses() {
        let text = r#"{"kind":"hsmm","symbols":["a"],"modes":["g"],
            "branches":[{"from":"g","symbol":"a","prob":1.0,"to":"g",
            "dwell":{"type":"tabulated","params":{"t":[0.0,1.0,2.0],"density":[0.5,0.5,0.5]}}}]}"#;
        let AnySpec::Hsmm(spec) = parse_spec(text).unwrap() else {
            panic!("expected hsmm")
        };
        assert!(spec.validate().is_ok());
    }

    #[test]
    fn matrix_doc_round_trip() {
        let m = CMatrix::from_fn(2, 2, |i, j| C64::new(i as f64, -(j as f64) * 0.5));
        let back = matrix_from_doc("m", &matrix_to_doc(&m), 2).unwrap();
        assert_eq!(m, back);
        assert!(matrix_from_doc("m", &matrix_to_doc(&m), 3).is_err());
    }

    #[test]
    fn hash_is_stable() {
        let spec = AnySpec::Hsmm(fixtures::poisson(1.0));
        assert_eq!(model_hash(&SpecDoc::from(&spec)), model_hash(&SpecDoc::from(&spec)));
        assert_eq!(model_hash(&SpecDoc::from(&spec)).len(), 64);
    }
}
