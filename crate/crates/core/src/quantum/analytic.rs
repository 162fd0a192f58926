use super::{KrausSet, MemoryBasis, MemoryStates, NodeLabel, Pathway, QuantumError};
use crate::linalg::{real, CMatrix, CVector, C64};
use crate::process::{DwellDistribution, ProcessSpec};

/// Closed-form memory states built from one orthonormal generator state per
/// emitted symbol:
///
/// `|ς_{g,t}⟩ = Σ_x √(T^x_g e^{−γ_x t}) |φ_x⟩ / √Φ_g(t)`.
///
/// Requires that every branch emitting `x` decays at the same exponential
/// rate `γ_x` and moves to the same successor.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticModel {
    /// Generator index of each symbol, `None` for symbols never emitted.
    pub generator_of: Vec<Option<usize>>,
    /// Symbol, rate and successor of each generator.
    pub generators: Vec<(usize, f64, usize)>,
    /// `weights[g][r] = T` of mode `g` on generator `r`.
    pub weights: Vec<Vec<f64>>,
}

pub fn analytic_gram(spec: &ProcessSpec) -> Result<AnalyticModel, QuantumError> {
    let n_sym = spec.symbols.len();
    let mut rate: Vec<Option<(f64, usize)>> = vec![None; n_sym];
    for (g, bs) in spec.branches.iter().enumerate() {
        for b in bs {
            if b.prob == 0.0 {
                continue;
            }
            let DwellDistribution::Exponential { rate: r } = b.dwell else {
                return Err(QuantumError::UnsupportedDwellFamily(format!(
                    "mode '{}' symbol '{}' does not have a single exponential rate",
                    spec.modes[g], spec.symbols[b.symbol]
                )));
            };
            match rate[b.symbol] {
                None => rate[b.symbol] = Some((r, b.successor)),
                Some((r0, s0)) if r0 == r && s0 == b.successor => {}
                Some(_) => {
                    return Err(QuantumError::UnsupportedDwellFamily(format!(
                        "symbol '{}' has more than one rate or successor",
                        spec.symbols[b.symbol]
                    )))
                }
            }
        }
    }
    let mut generator_of = vec![None; n_sym];
    let mut generators = Vec::new();
    for (x, r) in rate.iter().enumerate() {
        if let Some((gamma, succ)) = *r {
            generator_of[x] = Some(generators.len());
            generators.push((x, gamma, succ));
        }
    }
    let weights = spec
        .branches
        .iter()
        .map(|bs| {
            let mut w = vec![0.0; generators.len()];
            for b in bs {
                if let Some(r) = generator_of[b.symbol] {
                    w[r] = b.prob;
                }
            }
            w
        })
        .collect();
    Ok(AnalyticModel {
        generator_of,
        generators,
        weights,
    })
}

impl AnalyticModel {
    pub fn dim(&self) -> usize {
        self.generators.len()
    }

    /// Unit-norm state of node `(g, t)`. Rates are shifted by the slowest
    /// one present so that long times do not underflow.
    pub fn state(&self, g: usize, t: f64) -> CVector {
        let w = &self.weights[g];
        let slowest = self
            .generators
            .iter()
            .zip(w)
            .filter(|(_, &w)| w > 0.0)
            .map(|(r, _)| r.1)
            .fold(f64::INFINITY, f64::min);
        let mut v = CVector::from_fn(self.dim(), |r, _| {
            real((w[r] * (-(self.generators[r].1 - slowest) * t).exp()).sqrt())
        });
        let norm = v.norm();
        v /= real(norm);
        v
    }

    pub fn overlap(&self, g: usize, t: f64, h: usize, s: f64) -> C64 {
        self.state(g, t).dotc(&self.state(h, s))
    }

    /// Survival implied by the generator weights.
    pub fn survival(&self, g: usize, t: f64) -> f64 {
        self.generators
            .iter()
            .zip(&self.weights[g])
            .map(|(r, w)| w * (-r.1 * t).exp())
            .sum()
    }

    /// `K0 = diag(e^{−γ_r δt/2})`, `Kx = √(1 − e^{−γ_x δt}) |ς_{λ_x,0}⟩⟨φ_x|`.
    pub fn kraus(&self, dt: f64, n_symbols: usize) -> KrausSet {
        let d = self.dim();
        let k0 = CMatrix::from_fn(d, d, |i, j| {
            if i == j {
                real((-self.generators[i].1 * dt / 2.0).exp())
            } else {
                real(0.0)
            }
        });
        let kx = (0..n_symbols)
            .map(|x| match self.generator_of[x] {
                Some(r) => {
                    let (_, gamma, succ) = self.generators[r];
                    let amp = (-(-gamma * dt).exp_m1()).sqrt();
                    let mut m = CMatrix::zeros(d, d);
                    m.set_column(r, &(self.state(succ, 0.0) * real(amp)));
                    m
                }
                None => CMatrix::zeros(d, d),
            })
            .collect();
        KrausSet { dt, k0, kx }
    }

    /// Exact limits: `H_eff = diag(−iγ_r/2)` and `J_x = √γ_x |ς_{λ_x,0}⟩⟨φ_x|`.
    pub fn generator_limits(&self, n_symbols: usize) -> (CMatrix, Vec<CMatrix>) {
        let d = self.dim();
        let h_eff = CMatrix::from_fn(d, d, |i, j| {
            if i == j {
                C64::new(0.0, -self.generators[i].1 / 2.0)
            } else {
                real(0.0)
            }
        });
        let jumps = (0..n_symbols)
            .map(|x| {
                let mut m = CMatrix::zeros(d, d);
                if let Some(r) = self.generator_of[x] {
                    let (_, gamma, succ) = self.generators[r];
                    m.set_column(r, &(self.state(succ, 0.0) * real(gamma.sqrt())));
                }
                m
            })
            .collect();
        (h_eff, jumps)
    }

    /// Explicit basis on the nodes `(g, t)` for every mode and listed time.
    pub fn basis_on(&self, times: &[f64]) -> MemoryBasis {
        let modes = self.weights.len();
        let mut nodes = Vec::new();
        let mut vectors = Vec::new();
        for g in 0..modes {
            for &t in times {
                nodes.push(NodeLabel { mode: g, t });
                vectors.push(self.state(g, t));
            }
        }
        MemoryBasis {
            dim: self.dim(),
            pathway: Pathway::Analytic,
            nodes,
            vectors,
        }
    }
}

impl MemoryStates for AnalyticModel {
    fn dim(&self) -> usize {
        AnalyticModel::dim(self)
    }

    fn state(&self, mode: usize, t: f64) -> Option<CVector> {
        (mode < self.weights.len()).then(|| AnalyticModel::state(self, mode, t))
    }
}
