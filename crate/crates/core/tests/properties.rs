//! Cross-module invariants on random smooth states.

use num_complex::Complex64;
use proptest::prelude::*;
use qpfk::io::{read_dump, write_dump};
use qpfk::model::{build_force, error_functional, ForceModel, ForceSpec};
use qpfk::solver::verify_identities;
use qpfk::{diophantine_estimate, FrequencyData, LatticeIndex, TorusFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn alpha() -> Vec<f64> {
    vec![1.0, 2f64.sqrt()]
}

fn freq(n: usize) -> FrequencyData {
    diophantine_estimate(&alpha(), (5f64.sqrt() - 1.0) / 2.0, 2.5, n).unwrap()
}

/// Real trigonometric polynomial of degree `band` with exponentially decaying modes.
fn smooth(seed: u64, n: usize, band: i64, size: f64) -> TorusFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut modes = Vec::new();
    for a in -band..=band {
        for b in -band..=band {
            if (a, b) > (0, 0) {
                let decay = size * (-1.2 * ((a.abs() + b.abs()) as f64)).exp();
                let z = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * decay;
                modes.push((LatticeIndex::new(vec![a, b]), z));
                modes.push((LatticeIndex::new(vec![-a, -b]), z.conj()));
            }
        }
    }
    TorusFunction::from_modes(2, n, &modes).unwrap()
}

fn sines(a: f64, b: f64) -> ForceModel {
    build_force(&ForceSpec::unit_gradient_sines(&[a, b], &alpha()), &alpha()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dump_round_trip_is_exact(seed in 0u64..10_000, c in -1.0f64..1.0) {
        let f = smooth(seed, 16, 6, 1.0).add_constant(c);
        let mut buf = Vec::new();
        write_dump(&f, &["note".into()], &mut buf).unwrap();
        let g = read_dump(buf.as_slice()).unwrap();
        prop_assert_eq!(g.coeffs(), f.coeffs());
    }

    #[test]
    fn sobolev_norm_grows_with_exponent(seed in 0u64..10_000, r in 0.0f64..6.0, dr in 0.0f64..3.0) {
        let f = smooth(seed, 32, 10, 1.0);
        prop_assert!(f.sobolev_norm(r) <= f.sobolev_norm(r + dr) * (1.0 + 1e-14));
    }

    #[test]
    fn step_identities_close(seed in 0u64..10_000, lambda in -0.01f64..0.01, a in 0.0f64..0.02, b in 0.0f64..0.02) {
        let h = smooth(seed, 64, 8, 0.02);
        let rep = verify_identities(&h, lambda, &sines(a, b), &freq(64)).unwrap();
        prop_assert!(rep.geometric <= 1e-10 * rep.geometric_scale.max(1e-300));
        prop_assert!(rep.quasi_newton <= 1e-10 * rep.error_sup);
        prop_assert!(rep.w_identity <= 1e-10 && rep.forward_equation <= 1e-10);
        prop_assert!(rep.taylor <= 1e-10);
    }

    #[test]
    fn unforced_error_has_mean_lambda(seed in 0u64..10_000, lambda in -1.0f64..1.0) {
        let h = smooth(seed, 32, 8, 0.1);
        let e = error_functional(&h, lambda, &ForceModel::zero(&alpha()), &freq(32), 3.0);
        prop_assert!((e.values.mean() - lambda).abs() < 1e-15);
    }

    #[test]
    fn error_is_translation_covariant(seed in 0u64..10_000, s in -0.5f64..0.5, a in 0.0f64..0.02) {
        // ĥ solves iff σ ↦ ĥ(σ + αs) + s does: E transforms by the same shift
        let h = smooth(seed, 32, 6, 0.02);
        let force = sines(a, 0.5 * a);
        let fr = freq(32);
        let shift: Vec<f64> = alpha().iter().map(|x| x * s).collect();
        let moved = h.shift(&shift).add_constant(s);
        let e = error_functional(&h, 0.003, &force, &fr, 0.0).values;
        let e_moved = error_functional(&moved, 0.003, &force, &fr, 0.0).values;
        prop_assert!(e.shift(&shift).max_coeff_diff(&e_moved) < 1e-13);
    }
}
