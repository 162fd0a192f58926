//! Dwell-time laws attached to process branches.

use rand::Rng;

/// One exponential component of a mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureComponent {
    pub weight: f64,
    pub rate: f64,
}

/// A probability density on `t ≥ 0` sampled on a grid and linearly
/// interpolated between grid points. Zero outside the grid.
///
/// The density is divided by its trapezoid integral on construction so that
/// the survival function starts at exactly one.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedDensity {
    t: Vec<f64>,
    density: Vec<f64>,
    cumulative: Vec<f64>,
    total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DwellDistribution {
    Exponential { rate: f64 },
    ExpMixture { components: Vec<MixtureComponent> },
    Tabulated(TabulatedDensity),
}

impl TabulatedDensity {
    /// Builds the table without validating it; see [`DwellDistribution::check`].
    pub fn new(t: Vec<f64>, density: Vec<f64>) -> Self {
        let mut cumulative = Vec::with_capacity(t.len());
        let mut acc = 0.0;
        for i in 0..t.len().min(density.len()) {
            if i > 0 {
                acc += 0.5 * (t[i] - t[i - 1]) * (density[i] + density[i - 1]);
            }
            cumulative.push(acc);
        }
        TabulatedDensity {
            t,
            density,
            cumulative,
            total: acc,
        }
    }

    pub fn grid(&self) -> &[f64] {
        &self.t
    }

    pub fn values(&self) -> &[f64] {
        &self.density
    }

    /// Raw trapezoid integral of the table before normalization.
    pub fn trapezoid_total(&self) -> f64 {
        self.total
    }

    fn segment(&self, t: f64) -> Option<usize> {
        if self.t.len() < 2 || t < self.t[0] || t > *self.t.last().unwrap() {
            return None;
        }
        let idx = self.t.partition_point(|&g| g <= t);
        Some(idx.saturating_sub(1).min(self.t.len() - 2))
    }

    fn raw_density(&self, t: f64) -> f64 {
        match self.segment(t) {
            None => 0.0,
            Some(i) => {
                let (a, b) = (self.t[i], self.t[i + 1]);
                let w = (t - a) / (b - a);
                self.density[i] * (1.0 - w) + self.density[i + 1] * w
            }
        }
    }

    fn raw_cumulative(&self, t: f64) -> f64 {
        if self.t.is_empty() || t <= self.t[0] {
            return 0.0;
        }
        match self.segment(t) {
            None => self.total,
            Some(i) => {
                let a = self.t[i];
                let fa = self.density[i];
                let ft = self.raw_density(t);
                self.cumulative[i] + 0.5 * (t - a) * (fa + ft)
            }
        }
    }

    fn density(&self, t: f64) -> f64 {
        self.raw_density(t) / self.total
    }

    fn survival(&self, t: f64) -> f64 {
        ((self.total - self.raw_cumulative(t)) / self.total).clamp(0.0, 1.0)
    }

    fn mean(&self) -> f64 {
        let mut acc = 0.0;
        for i in 1..self.t.len() {
            let (a, h) = (self.t[i - 1], self.t[i] - self.t[i - 1]);
            let (fa, fb) = (self.density[i - 1], self.density[i]);
            acc += a * h * (fa + fb) / 2.0 + h * h * (fa + 2.0 * fb) / 6.0;
        }
        acc / self.total
    }

    /// Inverts the piecewise-quadratic CDF at `u ∈ [0, 1)`.
    fn quantile(&self, u: f64) -> f64 {
        let target = u * self.total;
        let idx = self.cumulative.partition_point(|&c| c <= target);
        let i = idx.saturating_sub(1).min(self.t.len() - 2);
        let (a, b) = (self.t[i], self.t[i + 1]);
        let (fa, fb) = (self.density[i], self.density[i + 1]);
        let rem = (target - self.cumulative[i]).max(0.0);
        let slope = (fb - fa) / (b - a);
        let disc = (fa * fa + 2.0 * slope * rem).max(0.0);
        let denom = fa + disc.sqrt();
        let s = if denom > 0.0 { 2.0 * rem / denom } else { 0.0 };
        (a + s).min(b)
    }
}

impl DwellDistribution {
    pub fn exponential(rate: f64) -> Self {
        DwellDistribution::Exponential { rate }
    }

    pub fn mixture(pairs: &[(f64, f64)]) -> Self {
        DwellDistribution::ExpMixture {
            components: pairs
                .iter()
                .map(|&(weight, rate)| MixtureComponent { weight, rate })
                .collect(),
        }
    }

    pub fn tabulated(t: Vec<f64>, density: Vec<f64>) -> Self {
        DwellDistribution::Tabulated(TabulatedDensity::new(t, density))
    }

    /// Checks the family invariants; returns a description of the first
    /// problem found.
    pub fn check(&self) -> Result<(), String> {
        match self {
            DwellDistribution::Exponential { rate } => check_rate(*rate),
            DwellDistribution::ExpMixture { components } => {
                if components.is_empty() {
                    return Err("mixture has no components".into());
                }
                for c in components {
                    check_rate(c.rate)?;
                    if !(c.weight > 0.0 && c.weight.is_finite()) {
                        return Err(format!("mixture weight {} is not positive", c.weight));
                    }
                }
                let total: f64 = components.iter().map(|c| c.weight).sum();
                if (total - 1.0).abs() > 1e-10 {
                    return Err(format!("mixture weights sum to {total}"));
                }
                Ok(())
            }
            DwellDistribution::Tabulated(tab) => {
                if tab.t.len() < 2 || tab.t.len() != tab.density.len() {
                    return Err("table needs at least two points and matching lengths".into());
                }
                if !tab.t.iter().all(|v| v.is_finite()) || tab.t[0] < 0.0 {
                    return Err("time grid must be finite and start at t >= 0".into());
                }
                if tab.t.windows(2).any(|w| w[1] <= w[0]) {
                    return Err("time grid must be strictly increasing".into());
                }
                if !tab.density.iter().all(|v| v.is_finite() && *v >= 0.0) {
                    return Err("density values must be finite and non-negative".into());
                }
                if (tab.total - 1.0).abs() > 1e-6 {
                    return Err(format!("density integrates to {} (trapezoid)", tab.total));
                }
                Ok(())
            }
        }
    }

    /// Probability density φ(t); zero for negative `t`.
    pub fn density(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match self {
            DwellDistribution::Exponential { rate } => rate * (-rate * t).exp(),
            DwellDistribution::ExpMixture { components } => components
                .iter()
                .map(|c| c.weight * c.rate * (-c.rate * t).exp())
                .sum(),
            DwellDistribution::Tabulated(tab) => tab.density(t),
        }
    }

    /// Tail probability `P(T > t)`.
    pub fn survival(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        match self {
            DwellDistribution::Exponential { rate } => (-rate * t).exp(),
            DwellDistribution::ExpMixture { components } => components
                .iter()
                .map(|c| c.weight * (-c.rate * t).exp())
                .sum(),
            DwellDistribution::Tabulated(tab) => tab.survival(t),
        }
    }

    /// Probability mass in `[a, b)`, accurate for narrow intervals.
    pub fn interval_mass(&self, a: f64, b: f64) -> f64 {
        let a = a.max(0.0);
        if b <= a {
            return 0.0;
        }
        let exp_mass = |rate: f64| (-rate * a).exp() * -(-rate * (b - a)).exp_m1();
        match self {
            DwellDistribution::Exponential { rate } => exp_mass(*rate),
            DwellDistribution::ExpMixture { components } => {
                components.iter().map(|c| c.weight * exp_mass(c.rate)).sum()
            }
            DwellDistribution::Tabulated(tab) => {
                ((tab.raw_cumulative(b) - tab.raw_cumulative(a)) / tab.total).max(0.0)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            DwellDistribution::Exponential { rate } => 1.0 / rate,
            DwellDistribution::ExpMixture { components } => {
                components.iter().map(|c| c.weight / c.rate).sum()
            }
            DwellDistribution::Tabulated(tab) => tab.mean(),
        }
    }

    /// Exponential components `(weight, rate)` when the law is a finite
    /// exponential mixture.
    pub fn exp_components(&self) -> Option<Vec<MixtureComponent>> {
        match self {
            DwellDistribution::Exponential { rate } => Some(vec![MixtureComponent {
                weight: 1.0,
                rate: *rate,
            }]),
            DwellDistribution::ExpMixture { components } => Some(components.clone()),
            DwellDistribution::Tabulated(_) => None,
        }
    }

    /// Smallest `t` beyond which the law has no mass, if bounded.
    pub fn support_end(&self) -> Option<f64> {
        match self {
            DwellDistribution::Tabulated(tab) => tab.t.last().copied(),
            _ => None,
        }
    }

    /// Slowest decay rate for exponential families.
    pub fn min_rate(&self) -> Option<f64> {
        self.exp_components()
            .map(|cs| cs.iter().map(|c| c.rate).fold(f64::INFINITY, f64::min))
    }

    /// Draws a dwell time by inverse-CDF sampling.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            DwellDistribution::Exponential { rate } => exp_sample(*rate, rng),
            DwellDistribution::ExpMixture { components } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = components.last().expect("validated mixture").rate;
                for c in components {
                    acc += c.weight;
                    if u < acc {
                        chosen = c.rate;
                        break;
                    }
                }
                exp_sample(chosen, rng)
            }
            DwellDistribution::Tabulated(tab) => tab.quantile(rng.random()),
        }
    }
}

fn check_rate(rate: f64) -> Result<(), String> {
    if rate > 0.0 && rate.is_finite() {
        Ok(())
    } else {
        Err(format!("rate {rate} is not positive and finite"))
    }
}

fn exp_sample<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    // u in (0, 1]
    let u = 1.0 - rng.random::<f64>();
    -u.ln() / rate
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn triangle() -> DwellDistribution {
        // density 2(1 - t) on [0, 1]
        let t: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let d = t.iter().map(|&x| 2.0 * (1.0 - x)).collect();
        DwellDistribution::tabulated(t, d)
    }

    #[test]
    fn exponential_closed_forms() {
        let d = DwellDistribution::exponential(2.0);
        assert_abs_diff_eq!(d.survival(1.0), (-2.0f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(d.density(0.0), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.mean(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(
            d.interval_mass(0.3, 0.7),
            d.survival(0.3) - d.survival(0.7),
            epsilon = 1e-15
        );
    }

    #[test]
    fn tabulated_triangle() {
        let d = triangle();
        d.check().unwrap();
        assert_abs_diff_eq!(d.survival(0.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.survival(0.5), 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(d.survival(2.0), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.mean(), 1.0 / 3.0, epsilon = 1e-12);
        assert_eq!(d.density(1.5), 0.0);
    }

    #[test]
    fn tabulated_quantile_inverts_cdf() {
        let DwellDistribution::Tabulated(tab) = triangle() else {
            unreachable!()
        };
        for &u in &[0.0, 0.1, 0.5, 0.75, 0.999] {
            let t = tab.quantile(u);
            assert_abs_diff_eq!(1.0 - tab.survival(t), u, epsilon = 1e-12);
        }
    }

    #[test]
    fn bad_tables_rejected() {
        assert!(DwellDistribution::tabulated(vec![0.0, 1.0], vec![1.0, 2.0])
            .check()
            .is_err());
        assert!(DwellDistribution::tabulated(vec![0.0, 1.0], vec![f64::NAN, 1.0])
            .check()
            .is_err());
        assert!(DwellDistribution::tabulated(vec![0.0, 1.0, 1.0], vec![1.0, 1.0, 1.0])
            .check()
            .is_err());
        assert!(DwellDistribution::mixture(&[(0.5, 1.0), (0.6, 2.0)])
            .check()
            .is_err());
        assert!(DwellDistribution::exponential(0.0).check().is_err());
    }

    #[test]
    fn mixture_sampling_mean() {
        let d = DwellDistribution::mixture(&[(0.25, 2.0), (0.75, 1.0)]);
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let n = 200_000;
        let mean: f64 = (0..n).map(|_| d.sample(&mut rng)).sum::<f64>() / n as f64;
        // mean 0.875, sd of mean about 0.0023
        assert!((mean - d.mean()).abs() < 0.01, "mean {mean}");
    }
}
