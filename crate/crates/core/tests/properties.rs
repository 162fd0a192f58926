use proptest::prelude::*;

use trajembed::embedding::{embed_process, EmbedOptions, Lindblad};
use trajembed::fixtures;
use trajembed::linalg::{c64, expm, hermitian_eigenvalues, hermitian_part, hermiticity_residual, CMatrix, CVector};
use trajembed::reverse::{conditional_density, extract_hsmm, is_erasing, uniform_grid, DEFAULT_ERASING_TOL};
use trajembed::trajectory::{master_equation_evolve, Engine, Stop, TrajectoryOptions};

fn complex_matrix(d: usize, v: &[f64]) -> CMatrix {
    CMatrix::from_fn(d, d, |i, j| c64(v[2 * (i * d + j)], v[2 * (i * d + j) + 1]))
}

fn complex_vector(v: &[f64]) -> CVector {
    CVector::from_iterator(v.len() / 2, v.chunks(2).map(|p| c64(p[0], p[1])))
}

fn unitary(d: usize, v: &[f64]) -> CMatrix {
    let h = hermitian_part(&complex_matrix(d, v));
    expm(&(h * c64(0.0, 1.0))).unwrap()
}

fn conjugate(lb: &Lindblad, u: &CMatrix) -> Lindblad {
    let ud = u.adjoint();
    let mut out = Lindblad::from_hamiltonian(
        lb.symbols.clone(),
        u * &lb.h * &ud,
        lb.jumps.iter().map(|j| u * j * &ud).collect(),
    );
    out.initial_state = lb.initial_state.as_ref().map(|v| u * v);
    out
}

fn density_matrix(d: usize, v: &[f64]) -> CMatrix {
    let a = complex_matrix(d, v);
    let rho = &a * a.adjoint();
    let tr = rho.trace();
    rho / tr
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn reverse_map_is_gauge_covariant(
        p in 0.1f64..0.9,
        g1 in 1.2f64..3.0,
        g2 in 0.4f64..1.0,
        raw in prop::collection::vec(-1.0f64..1.0, 8),
    ) {
        let spec = fixtures::two_channel(p, g1, g2).validate().unwrap();
        let (lb, _) = embed_process(&spec, &EmbedOptions::default()).unwrap();
        let rotated = conjugate(&lb, &unitary(2, &raw));
        let grid = uniform_grid(40.0 / g2, 1001);
        let a = extract_hsmm(&lb, &grid, DEFAULT_ERASING_TOL).unwrap().spec;
        let b = extract_hsmm(&rotated, &grid, DEFAULT_ERASING_TOL).unwrap().spec;
        for g in 0..2 {
            for x in 0..2 {
                let pa = a.branch(g, x).map_or(0.0, |br| br.prob);
                let pb = b.branch(g, x).map_or(0.0, |br| br.prob);
                prop_assert!((pa - pb).abs() < 1e-8, "T differs: {pa} vs {pb}");
                for &t in grid.iter().step_by(50) {
                    let da = a.dwell_density(g, x, t).unwrap();
                    let db = b.dwell_density(g, x, t).unwrap();
                    prop_assert!((da - db).abs() < 1e-7, "density at {t}: {da} vs {db}");
                }
            }
        }
    }

    #[test]
    fn conditional_densities_are_gauge_invariant(
        p in 0.1f64..0.9,
        g1 in 0.5f64..3.0,
        g2 in 0.5f64..3.0,
        raw in prop::collection::vec(-1.0f64..1.0, 8),
        t in 0.0f64..5.0,
    ) {
        let spec = fixtures::two_channel(p, g1, g2).validate().unwrap();
        let (lb, _) = embed_process(&spec, &EmbedOptions::default()).unwrap();
        let u = unitary(2, &raw);
        let rotated = conjugate(&lb, &u);
        let sa = is_erasing(&lb, DEFAULT_ERASING_TOL).into_result().unwrap();
        let sb = is_erasing(&rotated, DEFAULT_ERASING_TOL).into_result().unwrap();
        for (ja, jb) in sa.jumps.iter().zip(&sb.jumps) {
            // ψ moves with the unitary up to a global phase.
            let overlap = (&u * &ja.psi).dotc(&jb.psi).norm();
            prop_assert!((overlap - 1.0).abs() < 1e-10);
        }
        for x in 0..2 {
            for y in 0..2 {
                let a = conditional_density(&lb, &sa, x, y, t).unwrap();
                let b = conditional_density(&rotated, &sb, x, y, t).unwrap();
                prop_assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn dissipator_is_invariant_under_unitary_mixing_of_jumps(
        raw in prop::collection::vec(-1.0f64..1.0, 40),
    ) {
        let jumps = [complex_matrix(2, &raw[..8]), complex_matrix(2, &raw[8..16])];
        let u = unitary(2, &raw[16..24]);
        let mixed: Vec<CMatrix> = (0..2)
            .map(|y| &jumps[0] * u[(y, 0)] + &jumps[1] * u[(y, 1)])
            .collect();
        let names = vec!["a".to_string(), "b".to_string()];
        let a = Lindblad::from_hamiltonian(names.clone(), CMatrix::zeros(2, 2), jumps.to_vec());
        let b = Lindblad::from_hamiltonian(names, CMatrix::zeros(2, 2), mixed);
        let rho = density_matrix(2, &raw[24..32]);
        let diff = trajembed::linalg::max_abs_diff(&a.dissipator(&rho), &b.dissipator(&rho));
        prop_assert!(diff < 1e-10, "{diff}");
    }

    #[test]
    fn random_erasing_lindblad_extracts_a_valid_process(
        d in 2usize..4,
        raw in prop::collection::vec(-1.0f64..1.0, 48),
    ) {
        let n = d;
        let mut jumps = Vec::new();
        for x in 0..n {
            let a = complex_vector(&raw[4 * x..4 * x + 2 * d]);
            let b = complex_vector(&raw[24 + 4 * x..24 + 4 * x + 2 * d]);
            jumps.push(&a * b.adjoint());
        }
        let h = hermitian_part(&complex_matrix(d, &raw[..2 * d * d])) * c64(0.3, 0.0);
        let lb = Lindblad::from_hamiltonian((0..n).map(|x| format!("s{x}")).collect(), h, jumps);
        let floor = hermitian_eigenvalues(&lb.jump_sum()).into_iter().fold(f64::INFINITY, f64::min);
        prop_assume!(floor > 0.05);
        let grid = uniform_grid(60.0 / floor, 2001);
        let ext = extract_hsmm(&lb, &grid, DEFAULT_ERASING_TOL).unwrap();
        for total in &ext.row_totals {
            prop_assert!((total - 1.0).abs() < 1e-6, "row total {total}");
        }
        prop_assert!(ext.spec.clone().validate().is_ok());
    }

    #[test]
    fn ensembles_do_not_depend_on_thread_count(seed in any::<u64>(), threads in 2usize..6) {
        let spec = fixtures::two_channel(0.25, 2.0, 1.0).validate().unwrap();
        let (lb, _) = embed_process(&spec, &EmbedOptions::default()).unwrap();
        let psi0 = lb.initial_state.clone().unwrap();
        let engine = Engine::new(&lb);
        let run = |n: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
            pool.install(|| engine.run_ensemble(&psi0, seed, 8, Stop::Events(50), &TrajectoryOptions::default()))
                .unwrap()
                .into_iter()
                .map(|o| o.log.records)
                .collect::<Vec<_>>()
        };
        prop_assert_eq!(run(1), run(threads));
    }

    #[test]
    fn master_equation_preserves_trace_and_hermiticity(
        d in 2usize..4,
        raw in prop::collection::vec(-1.0f64..1.0, 72),
        t in 0.0f64..2.0,
    ) {
        let h = hermitian_part(&complex_matrix(d, &raw[..18]));
        let jumps = vec![complex_matrix(d, &raw[18..36]), complex_matrix(d, &raw[36..54])];
        let lb = Lindblad::from_hamiltonian(vec!["a".into(), "b".into()], h, jumps);
        let rho0 = density_matrix(d, &raw[54..72]);
        prop_assert!(lb.rhs(&rho0).trace().norm() < 1e-12);
        let dt = 0.01 / trajembed::linalg::spectral_norm(&lb.h_eff).max(1.0);
        let rho = master_equation_evolve(&lb, &rho0, t, dt).unwrap();
        prop_assert!((rho.trace().re - 1.0).abs() < 1e-10);
        prop_assert!(rho.trace().im.abs() < 1e-10);
        prop_assert!(hermiticity_residual(&rho) < 1e-10);
        let min_eig = hermitian_eigenvalues(&hermitian_part(&rho)).into_iter().fold(f64::INFINITY, f64::min);
        prop_assert!(min_eig > -1e-8, "negative eigenvalue {min_eig}");
    }

    #[test]
    fn jump_probabilities_form_a_distribution(
        raw in prop::collection::vec(-1.0f64..1.0, 28),
    ) {
        let jumps = vec![complex_matrix(2, &raw[..8]), complex_matrix(2, &raw[8..16]), complex_matrix(2, &raw[16..24])];
        let lb = Lindblad::from_hamiltonian(vec!["a".into(), "b".into(), "c".into()], CMatrix::zeros(2, 2), jumps);
        let psi = complex_vector(&raw[24..28]);
        prop_assume!(psi.norm() > 1e-3);
        let psi = psi.unscale(psi.norm());
        let engine = Engine::new(&lb);
        if let Ok(p) = engine.jump_probabilities(&psi) {
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&q| q >= 0.0));
        }
    }
}
