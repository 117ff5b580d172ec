use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use resfluor::qcore::{fidelity, DensityMatrix};
use resfluor::wigner::{wigner_grid, wln, GridSpec};
use resfluor::rng;
use resfluor::tomography::*;

fn angles() -> Vec<f64> {
    (0..20).map(|k| (4.5 * k as f64).to_radians()).collect()
}

fn reconstruct(rho: &DensityMatrix, seed: u64, track: bool) -> MleResult {
    let edges = uniform_edges(-5.0, 5.0, 100).unwrap();
    let thetas = angles();
    let h = synthesize_histograms(rho, &thetas, &edges, 100_000, seed).unwrap();
    let p = build_projectors(&thetas, &edges, rho.dim() - 1, DEFAULT_SUBDIVISIONS).unwrap();
    let opts = MleOptions {
        track_likelihood: track,
        ..Default::default()
    };
    mle_reconstruct(&h, &p, &opts).unwrap()
}

fn assert_monotone(trace: &[f64]) {
    for w in trace.windows(2) {
        assert!(w[1] >= w[0] - 1e-10 * w[0].abs(), "likelihood fell {} -> {}", w[0], w[1]);
    }
}

fn assert_physical(rho: &DensityMatrix) {
    assert!((rho.trace() - 1.0).norm() < 1e-10);
    assert!(rho.eigenvalues()[0] > -1e-9);
    assert!(rho.matrix().iter().zip(rho.matrix().adjoint().iter()).all(|(a, b)| (a - b).norm() < 1e-12));
}

/// Random state supported on span{|0⟩, |1⟩}, embedded in `dim` levels.
fn random_qubit_block(seed: u64, dim: usize) -> DensityMatrix {
    let mut g = rng::stream(seed);
    let mut z = || Complex64::new(g.sample(StandardNormal), g.sample(StandardNormal));
    let a = DMatrix::from_fn(2, 2, |_, _| z());
    let small = &a * a.adjoint();
    let mut m = DMatrix::<Complex64>::zeros(dim, dim);
    m.view_mut((0, 0), (2, 2)).copy_from(&small);
    DensityMatrix::normalized(m).unwrap()
}

#[test]
fn single_photon_is_recovered() {
    let r = reconstruct(&DensityMatrix::fock(1, 6), 11, true);
    assert!(r.converged, "{} iterations, step {:e}", r.iterations, r.final_step);
    assert_physical(&r.state);
    assert_monotone(&r.likelihood_trace);
    let f = fidelity(&r.state, &DensityMatrix::fock(1, 6)).unwrap();
    assert!(f > 0.99, "fidelity {f}");
}

#[test]
fn balanced_mixture_population() {
    let rho = DensityMatrix::diagonal(&[0.5, 0.5, 0.0, 0.0, 0.0, 0.0]).unwrap();
    let r = reconstruct(&rho, 12, true);
    assert_monotone(&r.likelihood_trace);
    assert!((r.state.population(1) - 0.5).abs() < 0.02, "rho_1 = {}", r.state.population(1));
}

#[test]
fn random_qubit_block_states_round_trip() {
    let mut worst: f64 = 1.0;
    for k in 0..20 {
        let rho = random_qubit_block(1000 + k, 6);
        let r = reconstruct(&rho, 2000 + k, true);
        assert_physical(&r.state);
        assert_monotone(&r.likelihood_trace);
        let f = fidelity(&r.state, &rho).unwrap();
        worst = worst.min(f);
        assert!(f > 0.98, "state {k}: fidelity {f}");
    }
    println!("worst fidelity {worst:.5}");
}

#[test]
fn coherent_state_round_trip_with_larger_cutoff() {
    let rho = DensityMatrix::coherent(Complex64::new(0.6, -0.3), 11);
    let r = reconstruct(&rho, 5, false);
    assert_physical(&r.state);
    assert!(fidelity(&r.state, &rho).unwrap() > 0.99);
    let mean = field_mean(&r.state);
    assert!((mean - Complex64::new(0.6, -0.3)).norm() < 0.02);
}

#[test]
fn wln_is_stable_when_the_cutoff_grows_by_two() {
    let c = Complex64::new;
    let psi = [c(0.55, 0.0), c(0.75, 0.0), c(0.0, 0.35), c(0.1, 0.0)];
    let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let mut m = DMatrix::<Complex64>::zeros(4, 4);
    for i in 0..4 {
        for j in 0..4 {
            m[(i, j)] = 0.9 * psi[i] * psi[j].conj() / (norm * norm);
        }
        m[(i, i)] += 0.1 / 4.0;
    }
    let rho = DensityMatrix::normalized(m).unwrap();
    let edges = uniform_edges(-5.0, 5.0, 100).unwrap();
    let thetas = angles();
    let h = synthesize_histograms(&rho, &thetas, &edges, 100_000, 77).unwrap();
    let wln_at = |cutoff: usize| {
        let p = build_projectors(&thetas, &edges, cutoff, DEFAULT_SUBDIVISIONS).unwrap();
        let r = mle_reconstruct(&h, &p, &MleOptions::default()).unwrap();
        wln(&wigner_grid(&r.state, &GridSpec::default()).unwrap()).unwrap()
    };
    let (w10, w12) = (wln_at(DEFAULT_CUTOFF), wln_at(DEFAULT_CUTOFF + 2));
    println!("WLN at N = 10: {w10:.5}, N = 12: {w12:.5}");
    assert!(w10 > 0.01);
    assert!((w10 - w12).abs() < 2e-3, "{w10} vs {w12}");
}
