use super::{MemoryBasis, QuantumError};
use crate::linalg::{identity, max_abs, pseudo_inverse, real, CMatrix};
use crate::process::ProcessSpec;

pub const COMPLETENESS_TOL: f64 = 1e-8;
pub const ACTION_TOL: f64 = 1e-6;

/// No-event operator `K0` and per-symbol event operators `Kx` for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausSet {
    pub dt: f64,
    pub k0: CMatrix,
    /// Indexed by symbol.
    pub kx: Vec<CMatrix>,
}

impl KrausSet {
    pub fn dim(&self) -> usize {
        self.k0.nrows()
    }

    /// `max |K0†K0 + Σ Kx†Kx − 𝕀|`.
    pub fn completeness_residual(&self) -> f64 {
        let mut sum = self.k0.adjoint() * &self.k0;
        for k in &self.kx {
            sum += k.adjoint() * k;
        }
        max_abs(&(sum - identity(self.dim())))
    }
}

/// Solves for the Kraus matrices from their action on memory nodes:
/// `K0 |g,t⟩ = √(Φ_g(t+δt)/Φ_g(t)) |g,t+δt⟩` and
/// `Kx |g,t⟩ = √(T ∫_t^{t+δt} φ / Φ_g(t)) |λ(g,x),0⟩`.
///
/// Every node whose `t + δt` partner is in the basis is used.
pub fn build_kraus(spec: &ProcessSpec, basis: &MemoryBasis, dt: f64) -> Result<KrausSet, QuantumError> {
    let d = basis.dim;
    let n_sym = spec.symbols.len();
    let starts: Vec<usize> = (0..spec.modes.len())
        .map(|g| {
            basis
                .find(g, 0.0)
                .ok_or(QuantumError::MissingNode { mode: g, t: 0.0 })
        })
        .collect::<Result<_, _>>()?;

    let mut sources = Vec::new();
    let mut next = Vec::new();
    for (i, node) in basis.nodes.iter().enumerate() {
        if let Some(j) = basis.find(node.mode, node.t + dt) {
            sources.push(i);
            next.push(j);
        }
    }
    let n = sources.len();
    let x = CMatrix::from_fn(d, n, |r, c| basis.vectors[sources[c]][r]);
    let (x_pinv, rank) = pseudo_inverse(&x, 1e-12);
    if rank < d {
        return Err(QuantumError::InsufficientSpan { rank, dim: d });
    }

    let mut y0 = CMatrix::zeros(d, n);
    let mut yx = vec![CMatrix::zeros(d, n); n_sym];
    for c in 0..n {
        let node = basis.nodes[sources[c]];
        let g = node.mode;
        let phi = spec.survival(g, node.t)?;
        let stay = (spec.survival(g, node.t + dt)? / phi).sqrt();
        y0.set_column(c, &(&basis.vectors[next[c]] * real(stay)));
        for b in &spec.branches[g] {
            let mass = b.prob * b.dwell.interval_mass(node.t, node.t + dt);
            let amp = (mass / phi).sqrt();
            yx[b.symbol].set_column(c, &(&basis.vectors[starts[b.successor]] * real(amp)));
        }
    }

    let k0 = &y0 * &x_pinv;
    let kx: Vec<CMatrix> = yx.iter().map(|y| y * &x_pinv).collect();
    let mut residual = max_abs(&(&k0 * &x - &y0));
    for (k, y) in kx.iter().zip(&yx) {
        residual = residual.max(max_abs(&(k * &x - y)));
    }
    if residual > ACTION_TOL {
        return Err(QuantumError::InconsistentAction {
            what: "Kraus action",
            residual,
        });
    }
    let set = KrausSet { dt, k0, kx };
    let completeness = set.completeness_residual();
    if completeness > COMPLETENESS_TOL {
        return Err(QuantumError::InconsistentAction {
            what: "Kraus completeness",
            residual: completeness,
        });
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::quantum::{analytic_gram, extract_states, gram_fixed_point, GramOptions, DEFAULT_RANK_TOL};

    #[test]
    fn poisson_scalars() {
        let gamma = 1.7;
        let dt = 0.01;
        let spec = fixtures::poisson(gamma);
        let lat = gram_fixed_point(&spec, dt, &GramOptions::default()).unwrap();
        let basis = extract_states(&lat, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(basis.dim, 1);
        let k = build_kraus(&spec, &basis, dt).unwrap();
        assert!((k.k0[(0, 0)].re - (-gamma * dt / 2.0).exp()).abs() < 1e-12);
        assert!((k.kx[0][(0, 0)].norm() - (1.0 - (-gamma * dt).exp()).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zero_step_is_identity() {
        let spec = fixtures::two_channel(0.25, 2.0, 1.0);
        let model = analytic_gram(&spec).unwrap();
        let basis = model.basis_on(&[0.0, 0.5, 1.0]);
        let k = build_kraus(&spec, &basis, 0.0).unwrap();
        assert!(max_abs(&(&k.k0 - identity(2))) < 1e-12);
        assert!(k.kx.iter().all(|m| max_abs(m) < 1e-12));
    }

    #[test]
    fn two_channel_numeric_k0_is_diagonal_in_generator_frame() {
        let spec = fixtures::two_channel(0.25, 2.0, 1.0);
        let dt = 0.01;
        let lat = gram_fixed_point(&spec, dt, &GramOptions::default()).unwrap();
        let basis = extract_states(&lat, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(basis.dim, 2);
        let k = build_kraus(&spec, &basis, dt).unwrap();
        // Basis-independent check: spectrum of K0.
        let mut ev: Vec<f64> = crate::linalg::Eigen::new(&k.k0)
            .unwrap()
            .values
            .iter()
            .map(|z| z.re)
            .collect();
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] - (-dt).exp()).abs() < 1e-10, "{ev:?}");
        assert!((ev[1] - (-dt / 2.0).exp()).abs() < 1e-10, "{ev:?}");
        assert!(k.completeness_residual() < 1e-10);
    }
}
