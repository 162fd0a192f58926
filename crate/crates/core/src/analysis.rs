//! Statistical checks of event logs against a process and of trajectory
//! ensembles against the master equation.
//!
//! Waits are grouped by the mode in which they elapsed. Logs that carry
//! ground-truth modes use them; otherwise the mode is taken to be the
//! successor of the previous symbol, which identifies it whenever every
//! symbol leads to a single mode.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::events::EventLog;
use crate::linalg::hermitian_eigenvalues;
use crate::linalg::CMatrix;
use crate::process::ProcessSpec;

pub const DEFAULT_ALPHA: f64 = 0.01;
pub const MIN_KS_SAMPLES: usize = 50;
/// Half-width of the transition bands in standard deviations.
pub const BAND_SIGMAS: f64 = 3.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("event log is empty")]
    EmptyLog,
    #[error("{0} samples is too few for a KS test (need {MIN_KS_SAMPLES})")]
    TooFewSamples(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

/// Symbol-to-symbol next-event frequencies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionMatrix {
    pub symbols: Vec<String>,
    /// `counts[x][y]`: events `y` immediately following `x`.
    pub counts: Vec<Vec<usize>>,
    pub probs: Vec<Vec<f64>>,
    /// Binomial standard error `√(p̂(1−p̂)/n)` per entry.
    pub sigma: Vec<Vec<f64>>,
}

/// Consecutive-symbol frequencies. Pairs never straddle trajectories.
pub fn empirical_transition_matrix(log: &EventLog) -> Result<TransitionMatrix, AnalysisError> {
    if log.is_empty() {
        return Err(AnalysisError::EmptyLog);
    }
    let n = log.alphabet.len();
    let mut counts = vec![vec![0usize; n]; n];
    for w in log.records.windows(2) {
        if w[0].traj == w[1].traj {
            counts[w[0].symbol][w[1].symbol] += 1;
        }
    }
    let mut probs = vec![vec![0.0; n]; n];
    let mut sigma = vec![vec![0.0; n]; n];
    for x in 0..n {
        let total: usize = counts[x].iter().sum();
        if total == 0 {
            continue;
        }
        for y in 0..n {
            let p = counts[x][y] as f64 / total as f64;
            probs[x][y] = p;
            sigma[x][y] = (p * (1.0 - p) / total as f64).sqrt();
        }
    }
    Ok(TransitionMatrix {
        symbols: log.alphabet.clone(),
        counts,
        probs,
        sigma,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub n: usize,
    pub statistic: f64,
    pub p_value: f64,
}

/// Kolmogorov survival `Q(λ) = 2 Σ (−1)^{k−1} e^{−2k²λ²}`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 * sum.abs() {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Asymptotic p-value with the usual small-sample correction of the
/// scaling `(√n + 0.12 + 0.11/√n) D`.
fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let s = n_eff.sqrt();
    kolmogorov_q((s + 0.12 + 0.11 / s) * d)
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult, AnalysisError> {
    let n = samples.len();
    if n < MIN_KS_SAMPLES {
        return Err(AnalysisError::TooFewSamples(n));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / nf).max((i + 1) as f64 / nf - f);
    }
    Ok(KsResult {
        n,
        statistic: d,
        p_value: ks_p_value(d, nf),
    })
}

/// Two-sample Kolmogorov–Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult, AnalysisError> {
    let small = a.len().min(b.len());
    if small < MIN_KS_SAMPLES {
        return Err(AnalysisError::TooFewSamples(small));
    }
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(KsResult {
        n: small,
        statistic: d,
        p_value: ks_p_value(d, na * nb / (na + nb)),
    })
}

/// `½ ‖ρ_a − ρ_b‖₁`.
pub fn compare_ensemble(a: &CMatrix, b: &CMatrix) -> Result<f64, AnalysisError> {
    if a.shape() != b.shape() {
        return Err(AnalysisError::DimensionMismatch(a.nrows(), b.nrows()));
    }
    let diff = a - b;
    let ev = hermitian_eigenvalues(&diff);
    Ok((0.5 * ev.iter().map(|l| l.abs()).sum::<f64>()).clamp(0.0, 1.0))
}

/// Mode attributed to each record, if any.
pub fn attribute_modes(spec: &ProcessSpec, log: &EventLog) -> Vec<Option<usize>> {
    let successor = spec.successor_by_symbol();
    let mut out = Vec::with_capacity(log.len());
    for (i, rec) in log.records.iter().enumerate() {
        let mode = rec.mode.or_else(|| {
            let prev = log.records[..i].last()?;
            if prev.traj != rec.traj {
                return None;
            }
            successor.get(prev.symbol).copied().flatten()
        });
        out.push(mode.filter(|&g| g < spec.modes.len()));
    }
    out
}

/// Waits grouped by `(mode, symbol)`.
pub fn grouped_waits(spec: &ProcessSpec, log: &EventLog) -> Vec<Vec<Vec<f64>>> {
    let mut groups = vec![vec![Vec::new(); spec.symbols.len()]; spec.modes.len()];
    for (rec, mode) in log.records.iter().zip(attribute_modes(spec, log)) {
        if let Some(g) = mode {
            if rec.symbol < spec.symbols.len() {
                groups[g][rec.symbol].push(rec.wait);
            }
        }
    }
    groups
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KsEntry {
    pub mode: String,
    pub symbol: String,
    pub n: usize,
    /// Absent when the group has fewer than [`MIN_KS_SAMPLES`] waits.
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionEntry {
    pub mode: String,
    pub symbol: String,
    pub count: usize,
    pub row_total: usize,
    pub observed: f64,
    pub expected: f64,
    /// `√(p(1−p)/n)` at the expected `p`.
    pub sigma: f64,
    pub within_band: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiSquareEntry {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleEntry {
    pub time: f64,
    pub trace_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    pub alpha: f64,
    pub n_events: usize,
    /// Records with an attributed mode.
    pub attributed: usize,
    pub ks: Vec<KsEntry>,
    pub transitions: Vec<TransitionEntry>,
    /// Symbol frequencies against the stationary expectation. Reported
    /// only: consecutive symbols are correlated, so it is not calibrated.
    pub symbol_chi_square: Option<ChiSquareEntry>,
    pub ensemble: Vec<EnsembleEntry>,
    pub verdict: Verdict,
    pub failures: Vec<String>,
}

impl StatsReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "events: {}  attributed: {}  alpha: {}\n",
            self.n_events, self.attributed, self.alpha
        ));
        s.push_str("KS per (mode, symbol):\n");
        for k in &self.ks {
            match (k.statistic, k.p_value) {
                (Some(d), Some(p)) => s.push_str(&format!(
                    "  {:>6} {:>6}  n={:<8} D={:.5}  p={:.4}\n",
                    k.mode, k.symbol, k.n, d, p
                )),
                _ => s.push_str(&format!("  {:>6} {:>6}  n={:<8} (skipped)\n", k.mode, k.symbol, k.n)),
            }
        }
        s.push_str("transitions (observed vs expected ± 3σ):\n");
        for t in &self.transitions {
            s.push_str(&format!(
                "  {:>6} -> {:<6} {:.5} vs {:.5} ± {:.5} {}\n",
                t.mode,
                t.symbol,
                t.observed,
                t.expected,
                BAND_SIGMAS * t.sigma,
                if t.within_band { "ok" } else { "OUT" }
            ));
        }
        if let Some(c) = &self.symbol_chi_square {
            s.push_str(&format!(
                "symbol chi-square (informational): {:.3} on {} dof, p={:.4}\n",
                c.statistic, c.dof, c.p_value
            ));
        }
        for e in &self.ensemble {
            s.push_str(&format!("ensemble t={}: trace distance {:.5}\n", e.time, e.trace_distance));
        }
        for f in &self.failures {
            s.push_str(&format!("failure: {f}\n"));
        }
        s.push_str(match self.verdict {
            Verdict::Pass => "PASS\n",
            Verdict::Fail => "FAIL\n",
        });
        s
    }
}

/// Checks a log against a process: KS on waits per `(mode, symbol)` and
/// next-symbol frequencies per mode within 3σ binomial bands.
pub fn validate_run(spec: &ProcessSpec, log: &EventLog, alpha: f64) -> StatsReport {
    let groups = grouped_waits(spec, log);
    let mut failures = Vec::new();
    let mut ks = Vec::new();
    let mut transitions = Vec::new();
    for (g, row) in groups.iter().enumerate() {
        let row_total: usize = row.iter().map(Vec::len).sum();
        for (x, waits) in row.iter().enumerate() {
            let branch = spec.branch(g, x);
            let (mode, symbol) = (spec.modes[g].clone(), spec.symbols[x].clone());
            if row_total > 0 {
                let expected = branch.map(|b| b.prob).unwrap_or(0.0);
                let observed = waits.len() as f64 / row_total as f64;
                let sigma = (expected * (1.0 - expected) / row_total as f64).sqrt();
                let within_band = (observed - expected).abs() <= BAND_SIGMAS * sigma + 1e-12;
                if !within_band {
                    failures.push(format!(
                        "transition {mode} -> {symbol}: {observed:.5} outside {expected:.5} ± {:.5}",
                        BAND_SIGMAS * sigma
                    ));
                }
                transitions.push(TransitionEntry {
                    mode: mode.clone(),
                    symbol: symbol.clone(),
                    count: waits.len(),
                    row_total,
                    observed,
                    expected,
                    sigma,
                    within_band,
                });
            }
            let Some(b) = branch else { continue };
            let result = ks_test(waits, |t| 1.0 - b.dwell.survival(t)).ok();
            if let Some(r) = result {
                if !(r.p_value > alpha) {
                    failures.push(format!(
                        "KS {mode}/{symbol}: p = {:.3e} (D = {:.4}, n = {})",
                        r.p_value, r.statistic, r.n
                    ));
                }
            }
            ks.push(KsEntry {
                mode,
                symbol,
                n: waits.len(),
                statistic: result.map(|r| r.statistic),
                p_value: result.map(|r| r.p_value),
            });
        }
    }
    let attributed = groups.iter().flatten().map(Vec::len).sum();
    if attributed == 0 {
        failures.push("no record could be attributed to a mode".into());
    }
    StatsReport {
        alpha,
        n_events: log.len(),
        attributed,
        ks,
        transitions,
        symbol_chi_square: symbol_chi_square(spec, log),
        ensemble: Vec::new(),
        verdict: if failures.is_empty() {
            Verdict::Pass
        } else {
            Verdict::Fail
        },
        failures,
    }
}

fn symbol_chi_square(spec: &ProcessSpec, log: &EventLog) -> Option<ChiSquareEntry> {
    let pi = spec.stationary_mode_dist().ok()?;
    let n = log.len() as f64;
    if n == 0.0 {
        return None;
    }
    let mut expected = vec![0.0; spec.symbols.len()];
    for (g, bs) in spec.branches.iter().enumerate() {
        for b in bs {
            expected[b.symbol] += pi[g] * b.prob;
        }
    }
    let mut observed = vec![0.0; spec.symbols.len()];
    for r in &log.records {
        if let Some(o) = observed.get_mut(r.symbol) {
            *o += 1.0;
        }
    }
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (o, e) in observed.iter().zip(&expected) {
        if *e > 0.0 {
            stat += (o - n * e).powi(2) / (n * e);
            cells += 1;
        }
    }
    let dof = cells.checked_sub(1).filter(|&d| d > 0)?;
    let p_value = ChiSquared::new(dof as f64).ok()?.sf(stat);
    Some(ChiSquareEntry {
        statistic: stat,
        dof,
        p_value,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoSampleEntry {
    pub mode: String,
    pub symbol: String,
    pub result: KsResult,
}

/// Two-sample KS per `(mode, symbol)` between two logs of the same process.
/// Groups too small on either side are left out.
pub fn compare_logs(spec: &ProcessSpec, a: &EventLog, b: &EventLog) -> Vec<TwoSampleEntry> {
    let ga = grouped_waits(spec, a);
    let gb = grouped_waits(spec, b);
    let mut out = Vec::new();
    for g in 0..spec.modes.len() {
        for x in 0..spec.symbols.len() {
            if let Ok(result) = ks_two_sample(&ga[g][x], &gb[g][x]) {
                out.push(TwoSampleEntry {
                    mode: spec.modes[g].clone(),
                    symbol: spec.symbols[x].clone(),
                    result,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{EventRecord, LogMetadata};
    use crate::fixtures;
    use crate::linalg::{from_real_rows, identity, real};
    use crate::process::classical_sample;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn exp_samples(rate: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln() / rate).collect()
    }

    #[test]
    fn kolmogorov_reference_values() {
        // Q(1) and Q(1.36) from standard tables
        assert!((kolmogorov_q(1.0) - 0.26999967).abs() < 1e-6);
        assert!((kolmogorov_q(1.358) - 0.05).abs() < 1e-3);
    }

    #[test]
    fn ks_calibration_and_power() {
        let mut ok = 0;
        for seed in 0..100 {
            let xs = exp_samples(1.0, 10_000, seed);
            let r = ks_test(&xs, |t| 1.0 - (-t).exp()).unwrap();
            assert!((0.0..=1.0).contains(&r.p_value));
            if r.p_value > 0.01 {
                ok += 1;
            }
        }
        assert!(ok >= 98, "{ok}/100");
        let xs = exp_samples(1.0, 10_000, 1);
        let r = ks_test(&xs, |t| 1.0 - (-2.0 * t).exp()).unwrap();
        assert!(r.p_value < 1e-6);
    }

    #[test]
    fn ks_needs_samples() {
        assert_eq!(ks_test(&[], |t| t), Err(AnalysisError::TooFewSamples(0)));
        assert!(ks_two_sample(&[1.0; 60], &[1.0; 10]).is_err());
    }

    #[test]
    fn two_sample_separates() {
        let a = exp_samples(1.0, 5000, 1);
        let b = exp_samples(1.0, 5000, 2);
        let c = exp_samples(1.5, 5000, 3);
        assert!(ks_two_sample(&a, &b).unwrap().p_value > 0.01);
        assert!(ks_two_sample(&a, &c).unwrap().p_value < 1e-6);
    }

    #[test]
    fn trace_distances() {
        let zero = from_real_rows(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let one = from_real_rows(&[&[0.0, 0.0], &[0.0, 1.0]]);
        let mixed = identity(2) * real(0.5);
        assert!(compare_ensemble(&zero, &zero).unwrap().abs() < 1e-15);
        assert!((compare_ensemble(&zero, &one).unwrap() - 1.0).abs() < 1e-12);
        assert!((compare_ensemble(&mixed, &zero).unwrap() - 0.5).abs() < 1e-12);
        assert!(compare_ensemble(&zero, &identity(3)).is_err());
    }

    fn log_of(symbols: &[usize]) -> EventLog {
        let mut log = EventLog::new(
            vec!["a".into(), "b".into(), "c".into()],
            LogMetadata {
                generator: "test".into(),
                seed: 0,
                model_hash: String::new(),
            },
        );
        for &s in symbols {
            log.records.push(EventRecord {
                symbol: s,
                wait: 1.0,
                mode: None,
                traj: None,
            });
        }
        log
    }

    #[test]
    fn cycle_gives_permutation() {
        let seq: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let m = empirical_transition_matrix(&log_of(&seq)).unwrap();
        for x in 0..3 {
            for y in 0..3 {
                let expect = if y == (x + 1) % 3 { 1.0 } else { 0.0 };
                assert_eq!(m.probs[x][y], expect);
            }
        }
        assert_eq!(empirical_transition_matrix(&log_of(&[])), Err(AnalysisError::EmptyLog));
    }

    #[test]
    fn classical_two_channel_passes_and_wrong_p_fails() {
        let spec = fixtures::two_channel(0.25, 2.0, 1.0).validate().unwrap();
        let log = classical_sample(&spec, 5, 100_000);
        let m = empirical_transition_matrix(&log).unwrap();
        assert!((m.probs[0][0] - 0.25).abs() < 3.0 * m.sigma[0][0]);
        let report = validate_run(&spec, &log, DEFAULT_ALPHA);
        assert!(report.passed(), "{}", report.summary());
        let wrong = fixtures::two_channel(0.75, 2.0, 1.0);
        let report = validate_run(&wrong, &log, DEFAULT_ALPHA);
        assert!(!report.passed());
        assert!(report.transitions.iter().any(|t| !t.within_band));
    }

    #[test]
    fn mode_proxy_matches_ground_truth() {
        let spec = fixtures::two_channel(0.25, 2.0, 1.0).validate().unwrap();
        let mut log = classical_sample(&spec, 8, 2000);
        let truth: Vec<_> = log.records.iter().map(|r| r.mode).collect();
        for r in &mut log.records {
            r.mode = None;
        }
        let proxy = attribute_modes(&spec, &log);
        assert_eq!(proxy[0], None);
        assert_eq!(&proxy[1..], &truth[1..]);
    }
}
