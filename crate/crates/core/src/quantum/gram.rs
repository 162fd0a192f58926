use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::{NodeLabel, QuantumError};
use crate::linalg::{real, CMatrix};
use crate::process::ProcessSpec;

/// Survival mass below which the lattice is truncated.
pub const TAIL_EPS: f64 = 1e-12;

const MAX_ITERATIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct GramOptions {
    /// Spacing of the sampled nodes. Must be a multiple of `δt`; nodes are
    /// placed at `j·period` and `j·period + δt`.
    pub sample_period: Option<f64>,
    /// Lattice horizon; when absent it is chosen so that every mode's
    /// survival is below `TAIL_EPS × node_survival_floor`.
    pub t_max: Option<f64>,
    /// Max-norm update at which the start-overlap iteration stops.
    pub tol: f64,
    /// Nodes are sampled while the mode's survival stays above this.
    pub node_survival_floor: f64,
}

impl Default for GramOptions {
    fn default() -> Self {
        GramOptions {
            sample_period: None,
            t_max: None,
            tol: 1e-13,
            node_survival_floor: 1e-6,
        }
    }
}

/// Discretized overlap structure of a process at timestep `δt`.
///
/// Holds per-branch event masses `w^x_g(n)` on the lattice `t = nδt` and the
/// self-consistent overlaps `M` of the post-event states `(g, 0)`. Overlaps
/// of any two lattice nodes follow from these by a single sum.
#[derive(Debug, Clone)]
pub struct GramKernel {
    pub dt: f64,
    pub steps: usize,
    pub start_overlaps: DMatrix<f64>,
    pub iterations: usize,
    masses: Vec<Vec<Vec<f64>>>,
    symbols: Vec<Vec<usize>>,
    successors: Vec<Vec<usize>>,
    tails: Vec<Vec<f64>>,
}

impl GramKernel {
    pub fn new(spec: &ProcessSpec, dt: f64, opts: &GramOptions) -> Result<Self, QuantumError> {
        assert!(dt > 0.0, "lattice step must be positive");
        let t_max = match opts.t_max {
            Some(t) => {
                let worst = (0..spec.modes.len())
                    .map(|g| spec.survival(g, t).unwrap_or(1.0))
                    .fold(0.0, f64::max);
                if worst >= TAIL_EPS {
                    return Err(QuantumError::HorizonTooShort {
                        t_max: t,
                        survival: worst,
                        needed: TAIL_EPS,
                    });
                }
                t
            }
            // Nodes sampled down to survival `node_survival_floor` must still
            // see a tail below TAIL_EPS relative to their own survival.
            None => spec.survival_horizon(TAIL_EPS * opts.node_survival_floor.min(1.0)),
        };
        let steps = (t_max / dt).ceil() as usize;

        let mut masses = Vec::with_capacity(spec.modes.len());
        let mut tails = Vec::with_capacity(spec.modes.len());
        for bs in &spec.branches {
            let mut per_branch: Vec<Vec<f64>> = bs
                .iter()
                .map(|b| {
                    (0..steps)
                        .map(|n| {
                            let a = n as f64 * dt;
                            b.prob * b.dwell.interval_mass(a, a + dt)
                        })
                        .collect()
                })
                .collect();
            // Renormalize so the truncated lattice carries unit mass, which
            // keeps the diagonal of the overlap recursion exactly at one.
            let total: f64 = per_branch.iter().flatten().sum();
            for w in per_branch.iter_mut().flatten() {
                *w /= total;
            }
            let mut tail = vec![0.0; steps + 1];
            for n in (0..steps).rev() {
                tail[n] = tail[n + 1] + per_branch.iter().map(|w| w[n]).sum::<f64>();
            }
            masses.push(per_branch);
            tails.push(tail);
        }
        let symbols: Vec<Vec<usize>> = spec
            .branches
            .iter()
            .map(|bs| bs.iter().map(|b| b.symbol).collect())
            .collect();
        let successors: Vec<Vec<usize>> = spec
            .branches
            .iter()
            .map(|bs| bs.iter().map(|b| b.successor).collect())
            .collect();

        let mut kernel = GramKernel {
            dt,
            steps,
            start_overlaps: DMatrix::from_element(spec.modes.len(), spec.modes.len(), 1.0),
            iterations: 0,
            masses,
            symbols,
            successors,
            tails,
        };
        kernel.solve_start_overlaps(opts.tol)?;
        Ok(kernel)
    }

    /// Branch pairs of modes `g`, `h` that emit the same symbol.
    fn shared(&self, g: usize, h: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, x) in self.symbols[g].iter().enumerate() {
            if let Some(j) = self.symbols[h].iter().position(|y| y == x) {
                out.push((i, j));
            }
        }
        out
    }

    fn solve_start_overlaps(&mut self, tol: f64) -> Result<(), QuantumError> {
        let n = self.start_overlaps.nrows();
        // c[g][h] lists (coefficient, successor of g, successor of h).
        let mut coeffs = vec![vec![Vec::new(); n]; n];
        for g in 0..n {
            for h in 0..n {
                for (i, j) in self.shared(g, h) {
                    let c: f64 = self.masses[g][i]
                        .iter()
                        .zip(&self.masses[h][j])
                        .map(|(a, b)| (a * b).sqrt())
                        .sum();
                    coeffs[g][h].push((c, self.successors[g][i], self.successors[h][j]));
                }
            }
        }
        // Σ √(w·w) misses one by accumulated rounding on long lattices,
        // which the iteration would compound; rescale so diagonals stay at one.
        let diag: Vec<f64> = (0..n)
            .map(|g| coeffs[g][g].iter().map(|c| c.0).sum::<f64>())
            .collect();
        for g in 0..n {
            for h in 0..n {
                let s = (diag[g] * diag[h]).sqrt();
                for c in &mut coeffs[g][h] {
                    c.0 /= s;
                }
            }
        }
        let mut m = self.start_overlaps.clone();
        for it in 1..=MAX_ITERATIONS {
            let next = DMatrix::from_fn(n, n, |g, h| {
                coeffs[g][h].iter().map(|&(c, a, b)| c * m[(a, b)]).sum()
            });
            let update = (&next - &m).amax();
            m = next;
            if update < tol {
                self.start_overlaps = m;
                self.iterations = it;
                return Ok(());
            }
            if it == MAX_ITERATIONS {
                return Err(QuantumError::NoConvergence {
                    iterations: it,
                    update,
                });
            }
        }
        unreachable!()
    }

    /// Survival of mode `g` at lattice index `k` as carried by the lattice.
    pub fn survival(&self, g: usize, k: usize) -> f64 {
        self.tails[g].get(k).copied().unwrap_or(0.0)
    }

    /// `⟨ς_{g,kδt}|ς_{h,lδt}⟩`, summed directly over the lattice.
    pub fn overlap(&self, g: usize, k: usize, h: usize, l: usize) -> f64 {
        let norm = (self.survival(g, k) * self.survival(h, l)).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let mut acc = 0.0;
        for (i, j) in self.shared(g, h) {
            let m = self.start_overlaps[(self.successors[g][i], self.successors[h][j])];
            let wa = &self.masses[g][i];
            let wb = &self.masses[h][j];
            let len = self.steps.saturating_sub(k.max(l));
            let s: f64 = (0..len).map(|n| (wa[k + n] * wb[l + n]).sqrt()).sum();
            acc += m * s;
        }
        acc / norm
    }
}

/// Overlaps of a sampled set of lattice nodes.
#[derive(Debug, Clone)]
pub struct GramLattice {
    pub dt: f64,
    pub t_max: f64,
    pub nodes: Vec<NodeLabel>,
    pub overlaps: CMatrix,
    /// Nodes that may anchor the basis gauge. Lattices at different `δt`
    /// that share anchor times produce matching gauges.
    pub anchors: Vec<bool>,
}

/// Iterates the overlap recursion at step `dt` and returns the overlaps of
/// nodes sampled at `t = j·period` and `t = j·period + dt`.
pub fn gram_fixed_point(
    spec: &ProcessSpec,
    dt: f64,
    opts: &GramOptions,
) -> Result<GramLattice, QuantumError> {
    let kernel = GramKernel::new(spec, dt, opts)?;
    let period = opts
        .sample_period
        .unwrap_or_else(|| default_sample_period(spec, dt));
    let stride = ((period / dt).round() as usize).max(1);

    // (mode, lattice index, anchor)
    let mut picked: Vec<(usize, usize, bool)> = Vec::new();
    for g in 0..spec.modes.len() {
        let mut j = 0;
        loop {
            let k = j * stride;
            if k + 1 >= kernel.steps || kernel.survival(g, k) < opts.node_survival_floor {
                break;
            }
            picked.push((g, k, true));
            if stride > 1 {
                picked.push((g, k + 1, false));
            }
            j += 1;
        }
    }

    let n = picked.len();
    let mut overlaps = CMatrix::identity(n, n);
    // Group node pairs by (mode, mode, offset) so each group is one sweep.
    let mut groups: BTreeMap<(usize, usize, isize), Vec<(usize, usize)>> = BTreeMap::new();
    for a in 0..n {
        for b in a + 1..n {
            let (g, k, _) = picked[a];
            let (h, l, _) = picked[b];
            groups
                .entry((g, h, l as isize - k as isize))
                .or_default()
                .push((a, b));
        }
    }
    for ((g, h, d), mut pairs) in groups {
        pairs.sort_by_key(|&(a, _)| std::cmp::Reverse(picked[a].1));
        let shared: Vec<(f64, &[f64], &[f64])> = kernel
            .shared(g, h)
            .into_iter()
            .map(|(i, j)| {
                (
                    kernel.start_overlaps[(kernel.successors[g][i], kernel.successors[h][j])],
                    kernel.masses[g][i].as_slice(),
                    kernel.masses[h][j].as_slice(),
                )
            })
            .collect();
        // Backward sweep of Σ_{m ≥ k} Σ_x M √(w_g(m) w_h(m+d)).
        let mut acc = 0.0;
        let mut m = kernel.steps as isize;
        for (a, b) in pairs {
            let k = picked[a].1 as isize;
            while m > k {
                m -= 1;
                let partner = m + d;
                if partner >= 0 && (partner as usize) < kernel.steps && m >= 0 {
                    for &(c, wa, wb) in &shared {
                        acc += c * (wa[m as usize] * wb[partner as usize]).sqrt();
                    }
                }
            }
            let norm = (kernel.survival(g, picked[a].1) * kernel.survival(h, picked[b].1)).sqrt();
            let v = if norm > 0.0 { acc / norm } else { 0.0 };
            overlaps[(a, b)] = real(v);
            overlaps[(b, a)] = real(v);
        }
    }

    Ok(GramLattice {
        dt,
        t_max: kernel.steps as f64 * dt,
        nodes: picked
            .iter()
            .map(|&(mode, k, _)| NodeLabel {
                mode,
                t: k as f64 * dt,
            })
            .collect(),
        overlaps,
        anchors: picked.iter().map(|p| p.2).collect(),
    })
}

/// About 48 samples across the span where the slowest mode still has
/// survival above 1e-6, rounded to a multiple of `dt`.
pub fn default_sample_period(spec: &ProcessSpec, dt: f64) -> f64 {
    let span = spec.survival_horizon(1e-6);
    ((span / 48.0 / dt).round().max(1.0)) * dt
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn two_channel_start_overlap() {
        let (p, q) = (0.25f64, 0.75f64);
        let spec = fixtures::two_channel(p, 2.0, 1.0);
        let k = GramKernel::new(&spec, 1e-3, &GramOptions::default()).unwrap();
        assert!((k.start_overlaps[(0, 1)] - 2.0 * (p * q).sqrt()).abs() < 1e-10);
        assert!((k.start_overlaps[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn poisson_overlaps_are_one() {
        let spec = fixtures::poisson(1.3);
        let lat = gram_fixed_point(&spec, 1e-2, &GramOptions::default()).unwrap();
        assert!(lat.overlaps.iter().all(|z| (z.re - 1.0).abs() < 1e-9));
    }

    #[test]
    fn sampled_matrix_matches_direct_sums() {
        let spec = fixtures::two_channel(0.25, 2.0, 1.0);
        let opts = GramOptions {
            sample_period: Some(0.5),
            ..Default::default()
        };
        let dt = 1e-2;
        let kernel = GramKernel::new(&spec, dt, &opts).unwrap();
        let lat = gram_fixed_point(&spec, dt, &opts).unwrap();
        for a in (0..lat.nodes.len()).step_by(7) {
            for b in (0..lat.nodes.len()).step_by(5) {
                let na = lat.nodes[a];
                let nb = lat.nodes[b];
                let direct = kernel.overlap(
                    na.mode,
                    (na.t / dt).round() as usize,
                    nb.mode,
                    (nb.t / dt).round() as usize,
                );
                assert!((lat.overlaps[(a, b)].re - direct).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn short_horizon_is_rejected() {
        let spec = fixtures::poisson(1.0);
        let opts = GramOptions {
            t_max: Some(5.0),
            ..Default::default()
        };
        assert!(matches!(
            GramKernel::new(&spec, 1e-2, &opts),
            Err(QuantumError::HorizonTooShort { .. })
        ));
    }
}
