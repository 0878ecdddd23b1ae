//! Dense, depth-truncated free-pole hierarchy for a two-level system.
//!
//! [`build_space`] enumerates the multi-indices, [`Generator`] assembles the
//! equations of motion for the scaled auxiliary operators, and
//! [`propagate`] integrates them in time.

mod checkpoint;
mod generator;
mod mat2;
mod propagate;
mod space;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use generator::{apply_generator, Generator, SystemSpec};
pub use mat2::Mat2;
pub use propagate::{
    propagate, propagate_with, run, AdaptiveSpec, AdoVector, Integrator, PropagationSpec, Propagator, Trajectory,
};
pub use space::{
    build_space, build_space_with_budget, estimate_size, HierarchySpace, Link, TruncationSpec, DEFAULT_ADO_BUDGET,
    ORDERING_TAG,
};

#[cfg(test)]
mod tests {
    use num_complex::Complex64;

    use super::*;
    use crate::polefit::ExponentialDecomposition;

    const I: Complex64 = Complex64::new(0.0, 1.0);

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn single_mode(d: Complex64, z: Complex64) -> ExponentialDecomposition {
        ExponentialDecomposition::new(vec![d], vec![z]).unwrap()
    }

    /// Row-major vectorization: `vec(AρB) = (A ⊗ Bᵀ) vec(ρ)`.
    fn sandwich(a: &Mat2, b: &Mat2) -> [[Complex64; 4]; 4] {
        let mut out = [[c(0.0, 0.0); 4]; 4];
        for r in 0..4 {
            for col in 0..4 {
                let (i, j) = (r / 2, r % 2);
                let (k, l) = (col / 2, col % 2);
                out[r][col] = a.0[2 * i + k] * b.0[2 * l + j];
            }
        }
        out
    }

    fn add_block(m: &mut [[Complex64; 12]; 12], row: usize, col: usize, coef: Complex64, s: [[Complex64; 4]; 4]) {
        for r in 0..4 {
            for k in 0..4 {
                m[4 * row + r][4 * col + k] += coef * s[r][k];
            }
        }
    }

    #[test]
    fn single_mode_depth_one_matches_hand_assembly() {
        let sys = SystemSpec::new(0.7, 1.3).unwrap();
        let (d, z) = (c(0.31, -0.12), c(0.8, 2.1));
        let dec = single_mode(d, z);
        let space = build_space(1, &TruncationSpec::depth(1)).unwrap();
        let gen = Generator::new(&space, &sys, &dec).unwrap();

        let h = sys.hamiltonian();
        let q = sys.coupling_op;
        let id = Mat2::identity();
        let sd = d.sqrt();
        let mut m = [[c(0.0, 0.0); 12]; 12];
        for b in 0..3 {
            add_block(&mut m, b, b, -I, sandwich(&h, &id));
            add_block(&mut m, b, b, I, sandwich(&id, &h));
        }
        add_block(&mut m, 1, 1, -z, sandwich(&id, &id));
        add_block(&mut m, 2, 2, -z.conj(), sandwich(&id, &id));
        // block 0 ← raising from (1,0) and (0,1)
        for (src, root) in [(1, sd), (2, sd.conj())] {
            add_block(&mut m, 0, src, -I * root, sandwich(&q, &id));
            add_block(&mut m, 0, src, I * root, sandwich(&id, &q));
        }
        // lowering into (1,0) and (0,1)
        add_block(&mut m, 1, 0, -I * sd, sandwich(&q, &id));
        add_block(&mut m, 2, 0, I * sd.conj(), sandwich(&id, &q));

        for col in 0..12 {
            let mut e = vec![c(0.0, 0.0); 12];
            e[col] = c(1.0, 0.0);
            let mut out = vec![c(0.0, 0.0); 12];
            gen.apply_into(&e, &mut out).unwrap();
            for row in 0..12 {
                assert!((out[row] - m[row][col]).norm() < 1e-15, "entry ({row},{col})");
            }
        }
    }

    fn random_state(n: usize, seed: u64) -> Vec<Complex64> {
        let mut x = seed;
        let mut next = || {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((x >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        (0..n).map(|_| c(next(), next())).collect()
    }

    fn three_modes() -> ExponentialDecomposition {
        ExponentialDecomposition::new(
            vec![c(0.2, 0.05), c(0.1, -0.3), c(0.05, 0.0)],
            vec![c(1.0, 3.0), c(0.5, -1.0), c(4.0, 0.0)],
        )
        .unwrap()
    }

    #[test]
    fn decoupled_hierarchy_is_bare_dynamics_plus_damping() {
        let dec = ExponentialDecomposition::new(vec![c(0.0, 0.0); 2], vec![c(1.0, 2.0), c(3.0, 0.0)]).unwrap();
        let sys = SystemSpec::new(0.4, 1.0).unwrap();
        let space = build_space(2, &TruncationSpec::depth(2)).unwrap();
        let state = AdoVector::from_raw(random_state(4 * space.len(), 1), 0.0).unwrap();
        let out = apply_generator(&space, &sys, &dec, &state).unwrap();
        let gen = Generator::new(&space, &sys, &dec).unwrap();
        let h = sys.hamiltonian();
        for i in 0..space.len() {
            let rho = state.block(i);
            let expect = h.commutator(&rho).scale(-I) + rho.scale(-gen.damping()[i]);
            assert!((out.block(i) - expect).max_abs() < 1e-15);
        }
        assert_eq!(gen.damping()[0], c(0.0, 0.0));
    }

    #[test]
    fn physical_trace_is_conserved_and_generator_is_linear() {
        let dec = three_modes();
        let sys = SystemSpec::new(0.3, 1.0).unwrap();
        let space = build_space(3, &TruncationSpec::depth(3)).unwrap();
        let n = 4 * space.len();
        let x = AdoVector::from_raw(random_state(n, 7), 0.0).unwrap();
        let y = AdoVector::from_raw(random_state(n, 11), 0.0).unwrap();
        let gx = apply_generator(&space, &sys, &dec, &x).unwrap();
        let gy = apply_generator(&space, &sys, &dec, &y).unwrap();
        assert!(gx.physical().trace().norm() < 1e-14);

        let (a, b) = (c(0.3, -1.1), c(-2.0, 0.4));
        let combo: Vec<Complex64> = x.data().iter().zip(y.data()).map(|(p, q)| a * p + b * q).collect();
        let gc = apply_generator(&space, &sys, &dec, &AdoVector::from_raw(combo, 0.0).unwrap()).unwrap();
        let scale = gx.max_abs().max(gy.max_abs());
        for i in 0..n {
            let expect = a * gx.data()[i] + b * gy.data()[i];
            assert!((gc.data()[i] - expect).norm() <= 1e-14 * scale);
        }
    }

    #[test]
    fn bare_rabi_oscillation() {
        let dec = single_mode(c(0.0, 0.0), c(1.0, 0.0));
        let sys = SystemSpec::new(0.0, 1.0).unwrap();
        let space = build_space(1, &TruncationSpec::depth(1)).unwrap();
        let init = AdoVector::factorized(&space, Mat2::from_real(1.0, 0.0, 0.0, 0.0)).unwrap();
        for integrator in [Integrator::Rk4, Integrator::IntegratingFactorRk4, Integrator::EtdRk4] {
            let spec = PropagationSpec {
                integrator,
                ..PropagationSpec::new(0.005, 20.0).unwrap()
            };
            let traj = propagate(&space, &sys, &dec, &init, &spec).unwrap();
            assert_eq!(traj.times.len(), 4001);
            assert!((traj.times.last().unwrap() - 20.0).abs() < 1e-12);
            for (t, rho) in traj.times.iter().zip(&traj.states) {
                let sz = (rho.0[0] - rho.0[3]).re;
                assert!((sz - (2.0 * t).cos()).abs() < 1e-8, "t = {t}");
            }
        }
    }

    #[test]
    fn fourth_order_convergence() {
        let dec = single_mode(c(0.1, 0.0), c(1.0, 2.0));
        let sys = SystemSpec::new(0.5, 1.0).unwrap();
        let space = build_space(1, &TruncationSpec::depth(4)).unwrap();
        let init = AdoVector::factorized(&space, Mat2::from_real(1.0, 0.0, 0.0, 0.0)).unwrap();
        for integrator in [Integrator::Rk4, Integrator::IntegratingFactorRk4, Integrator::EtdRk4] {
            let sz = |dt: f64| {
                let spec = PropagationSpec {
                    integrator,
                    ..PropagationSpec::new(dt, 2.0).unwrap()
                };
                let rho = propagate(&space, &sys, &dec, &init, &spec).unwrap().final_state.physical();
                (rho.0[0] - rho.0[3]).re
            };
            let (a, b, c_) = (sz(0.1), sz(0.05), sz(0.025));
            let ratio = (a - b).abs() / (b - c_).abs();
            assert!((ratio - 16.0).abs() < 2.0, "{integrator:?}: ratio {ratio}");
        }
    }

    #[test]
    fn adaptive_mode_matches_fixed_step() {
        let dec = three_modes();
        let sys = SystemSpec::new(0.0, 1.0).unwrap();
        let space = build_space(3, &TruncationSpec::depth(2)).unwrap();
        let init = AdoVector::factorized(&space, Mat2::from_real(1.0, 0.0, 0.0, 0.0)).unwrap();
        let fixed = PropagationSpec::new(0.005, 3.0).unwrap();
        let adaptive = PropagationSpec {
            dt: 0.1,
            adaptive: Some(AdaptiveSpec {
                tolerance: 1e-10,
                dt_min: 1e-6,
            }),
            stride: 1,
            ..fixed
        };
        let a = propagate(&space, &sys, &dec, &init, &fixed).unwrap().final_state;
        let b = propagate(&space, &sys, &dec, &init, &adaptive).unwrap();
        assert!((a.physical() - b.final_state.physical()).max_abs() < 1e-8);
        assert!(b.steps > 30);
    }

    #[test]
    fn blowup_is_reported_with_time() {
        // plain RK4 is unstable for γ·dt beyond its stability region
        let dec = single_mode(c(0.1, 0.0), c(400.0, 0.0));
        let sys = SystemSpec::new(0.0, 1.0).unwrap();
        let space = build_space(1, &TruncationSpec::depth(2)).unwrap();
        let init = AdoVector::factorized(&space, Mat2::from_real(1.0, 0.0, 0.0, 0.0)).unwrap();
        let spec = PropagationSpec {
            integrator: Integrator::Rk4,
            ..PropagationSpec::new(0.01, 10.0).unwrap()
        };
        match propagate(&space, &sys, &dec, &init, &spec) {
            Err(crate::Error::Divergence { time, .. }) => assert!(time > 0.0 && time < 10.0),
            other => panic!("unexpected {other:?}"),
        }
        let stable = PropagationSpec {
            integrator: Integrator::IntegratingFactorRk4,
            ..spec
        };
        assert!(propagate(&space, &sys, &dec, &init, &stable).is_ok());
    }

    #[test]
    fn exponential_differencing_keeps_the_stationary_state() {
        // γ·dt = 1: the Lawson scheme settles on a shifted fixed point
        let dec = single_mode(c(5.0, 0.0), c(50.0, 3.0));
        let sys = SystemSpec::new(0.5, 1.0).unwrap();
        let space = build_space(1, &TruncationSpec::depth(3)).unwrap();
        let residual = |integrator| {
            let mut prop = Propagator::new(&space, &sys, &dec, integrator).unwrap();
            let mut state = AdoVector::factorized(&space, Mat2::from_real(1.0, 0.0, 0.0, 0.0)).unwrap();
            for _ in 0..20_000 {
                prop.step(&mut state, 0.02).unwrap();
            }
            prop.derivative_norm(&state).unwrap()
        };
        let etd = residual(Integrator::EtdRk4);
        let lawson = residual(Integrator::IntegratingFactorRk4);
        assert!(etd < 1e-12, "ETD residual {etd:e}");
        assert!(lawson > 1e3 * etd, "Lawson residual {lawson:e}");
    }

    #[test]
    fn auxiliary_blocks_keep_conjugate_symmetry() {
        let dec = three_modes();
        let sys = SystemSpec::new(0.2, 1.0).unwrap();
        let space = build_space(3, &TruncationSpec::depth(2)).unwrap();
        let init = AdoVector::factorized(&space, Mat2::from_real(0.7, 0.1, 0.1, 0.3)).unwrap();
        let spec = PropagationSpec::new(0.01, 2.0).unwrap();
        let fin = propagate(&space, &sys, &dec, &init, &spec).unwrap().final_state;
        let k = space.modes();
        for i in 0..space.len() {
            let occ = space.occupation(i);
            let swapped: Vec<u8> = occ[k..].iter().chain(&occ[..k]).copied().collect();
            let j = space.position(&swapped).unwrap();
            assert!((fin.block(i).adjoint() - fin.block(j)).max_abs() < 1e-14);
        }
        assert!(fin.trace_residual() < 1e-13);
    }
}
