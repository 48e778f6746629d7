//! Randomised invariants over the numerical building blocks.

use std::sync::Arc;

use opres_core::basis::{BasisKind, BasisSpec};
use opres_core::fnn::{clamp_output, init_params, size_unconstrained, ArchClass, SizingConstants};
use opres_core::pca::{fit_pca, SnapshotSet};
use opres_core::quadrature::{axpy, inner_product, norm, sample, GridFunction, QuadratureGrid};
use proptest::prelude::*;

fn grid(dim: usize, m: usize) -> Arc<QuadratureGrid> {
    QuadratureGrid::new(dim, m).unwrap()
}

fn smooth(g: &Arc<QuadratureGrid>, c: &[f64]) -> GridFunction {
    let c = c.to_vec();
    sample(g, move |x| {
        let s: f64 = x.iter().sum();
        c[0] + c[1] * s + c[2] * (2.0 * s).sin() + c[3] * (c[4] * s).exp()
    })
    .unwrap()
}

fn coeffs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cauchy_schwarz_and_symmetry(a in coeffs(), b in coeffs(), dim in 1usize..3) {
        let g = grid(dim, 12);
        let (f, h) = (smooth(&g, &a), smooth(&g, &b));
        let ip = inner_product(&f, &h).unwrap();
        prop_assert!(ip.abs() <= norm(&f) * norm(&h) + 1e-12);
        prop_assert_eq!(ip, inner_product(&h, &f).unwrap());
    }

    #[test]
    fn encoder_is_linear(a in coeffs(), b in coeffs(), alpha in -3.0f64..3.0, trig in any::<bool>()) {
        let g = grid(1, 40);
        let kind = if trig { BasisKind::Trigonometric } else { BasisKind::Legendre };
        let enc = BasisSpec::new(kind, 1, 8).unwrap().encoder(&g).unwrap();
        let (u, v) = (smooth(&g, &a), smooth(&g, &b));
        let lhs = enc.encode(&axpy(alpha, &u, &v).unwrap()).unwrap();
        let eu = enc.encode(&u).unwrap();
        let ev = enc.encode(&v).unwrap();
        for i in 0..lhs.len() {
            prop_assert!((lhs[i] - (alpha * eu[i] + ev[i])).abs() < 1e-10);
        }
    }

    #[test]
    fn clamp_is_one_lipschitz(a in -1e3f64..1e3, b in -1e3f64..1e3, m in 1e-3f64..50.0) {
        prop_assert!((clamp_output(a, m) - clamp_output(b, m)).abs() <= (a - b).abs());
    }

    #[test]
    fn outputs_are_bounded(seed in any::<u64>(), depth in 2usize..5, width in 1usize..9,
                           clip in 0.01f64..3.0, x in prop::collection::vec(-100.0f64..100.0, 3)) {
        let arch = ArchClass::Unconstrained { depth, width, clip };
        let mut net = init_params(&arch, 3, 2, seed).unwrap();
        // amplify so the clamp is actually exercised
        let p: Vec<f64> = net.flat_params().iter().map(|v| v * 10.0).collect();
        net.set_flat_params(&p).unwrap();
        for y in net.forward(&x).unwrap() {
            prop_assert!(y.abs() <= clip);
        }
    }

    #[test]
    fn sizing_product_monotone(n1 in 2usize..100_000, n2 in 2usize..100_000, dx in 1usize..20, dy in 1usize..20) {
        let (lo, hi) = if n1 <= n2 { (n1, n2) } else { (n2, n1) };
        let c = SizingConstants::default();
        let t = |n| size_unconstrained(n, dx, dy, 1.0, 1.0, &c).target_product.unwrap();
        prop_assert!(t(lo) <= t(hi));
    }

    #[test]
    fn trailing_energy_non_increasing(seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = grid(1, 16);
        let fs: Vec<GridFunction> = (0..12)
            .map(|_| {
                let c: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
                smooth(&g, &c)
            })
            .collect();
        let set = SnapshotSet::new(fs).unwrap();
        let mut last = f64::INFINITY;
        for d in 1..=4 {
            let t = fit_pca(&set, d).unwrap().trailing_energy();
            prop_assert!(t <= last + 1e-15);
            last = t;
        }
    }
}
