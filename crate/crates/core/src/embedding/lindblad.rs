use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::io::{
    matrix_from_doc, matrix_to_doc, to_canonical_json, vector_from_doc, vector_to_doc, ComplexDoc,
    DocError, MatrixDoc,
};
use crate::linalg::{hermitian_part, max_abs_diff, real, CMatrix, CVector, C64};

/// Generator of a monitored open system: Hermitian `H`, labelled jump
/// operators `J_x`, and `H_eff = H − (i/2) Σ J_x†J_x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lindblad {
    pub symbols: Vec<String>,
    pub h: CMatrix,
    pub h_eff: CMatrix,
    /// Indexed like `symbols`.
    pub jumps: Vec<CMatrix>,
    /// State to start trajectories from, usually a post-event memory state.
    pub initial_state: Option<CVector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LindbladDoc {
    dim: usize,
    #[serde(rename = "H")]
    h: MatrixDoc,
    #[serde(rename = "H_eff")]
    h_eff: MatrixDoc,
    jumps: BTreeMap<String, MatrixDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    initial_state: Option<Vec<ComplexDoc>>,
}

impl Lindblad {
    /// Builds from `H` and jumps, deriving `H_eff`.
    pub fn from_hamiltonian(symbols: Vec<String>, h: CMatrix, jumps: Vec<CMatrix>) -> Self {
        let h_eff = &h - jump_sum(&jumps, h.nrows()) * C64::new(0.0, 0.5);
        Lindblad {
            symbols,
            h,
            h_eff,
            jumps,
            initial_state: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.h_eff.nrows()
    }

    pub fn symbol_index(&self, name: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == name)
    }

    pub fn jump_sum(&self) -> CMatrix {
        jump_sum(&self.jumps, self.dim())
    }

    /// `dρ/dt = −i H_eff ρ + i ρ H_eff† + Σ J ρ J†`.
    pub fn rhs(&self, rho: &CMatrix) -> CMatrix {
        let i = C64::new(0.0, 1.0);
        let mut out = (rho * self.h_eff.adjoint() - &self.h_eff * rho) * i;
        for j in &self.jumps {
            out += j * rho * j.adjoint();
        }
        out
    }

    /// `Σ J ρ J† − ½{J†J, ρ}`.
    pub fn dissipator(&self, rho: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim(), self.dim());
        for j in &self.jumps {
            let jj = j.adjoint() * j;
            out += j * rho * j.adjoint() - (&jj * rho + rho * &jj) * real(0.5);
        }
        out
    }

    /// One classical Runge–Kutta step followed by Hermitian symmetrization.
    pub fn rk4_step(&self, rho: &CMatrix, dt: f64) -> CMatrix {
        let h = real(dt);
        let half = real(dt / 2.0);
        let k1 = self.rhs(rho);
        let k2 = self.rhs(&(rho + &k1 * half));
        let k3 = self.rhs(&(rho + &k2 * half));
        let k4 = self.rhs(&(rho + &k3 * h));
        let next = rho + (k1 + k2 * real(2.0) + k3 * real(2.0) + k4) * real(dt / 6.0);
        hermitian_part(&next)
    }

    /// `max |H_eff − (H − (i/2) Σ J†J)|`.
    pub fn consistency_residual(&self) -> f64 {
        let expect = &self.h - self.jump_sum() * C64::new(0.0, 0.5);
        max_abs_diff(&self.h_eff, &expect)
    }

    pub fn to_json(&self) -> String {
        let doc = LindbladDoc {
            dim: self.dim(),
            h: matrix_to_doc(&self.h),
            h_eff: matrix_to_doc(&self.h_eff),
            jumps: self
                .symbols
                .iter()
                .zip(&self.jumps)
                .map(|(s, j)| (s.clone(), matrix_to_doc(j)))
                .collect(),
            initial_state: self.initial_state.as_ref().map(vector_to_doc),
        };
        to_canonical_json(&doc)
    }

    /// Hex SHA-256 of [`Lindblad::to_json`].
    pub fn model_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    /// Parses a Lindblad document. Symbols come out in sorted order.
    pub fn from_json(text: &str) -> Result<Self, DocError> {
        let doc: LindbladDoc = serde_json::from_str(text)?;
        let d = doc.dim;
        let h = matrix_from_doc("H", &doc.h, d)?;
        let h_eff = matrix_from_doc("H_eff", &doc.h_eff, d)?;
        let mut symbols = Vec::new();
        let mut jumps = Vec::new();
        for (s, m) in &doc.jumps {
            jumps.push(matrix_from_doc(&format!("jumps.{s}"), m, d)?);
            symbols.push(s.clone());
        }
        let initial_state = match doc.initial_state {
            Some(v) if v.len() != d => {
                return Err(DocError::BadMatrix {
                    name: "initial_state".into(),
                    msg: format!("expected {d} entries, found {}", v.len()),
                })
            }
            Some(v) => Some(vector_from_doc(&v)),
            None => None,
        };
        Ok(Lindblad {
            symbols,
            h,
            h_eff,
            jumps,
            initial_state,
        })
    }
}

fn jump_sum(jumps: &[CMatrix], d: usize) -> CMatrix {
    let mut s = CMatrix::zeros(d, d);
    for j in jumps {
        s += j.adjoint() * j;
    }
    s
}
