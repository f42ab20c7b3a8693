//! Property tests for the interval kernel and inclusion constructors.

use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use reachcore::expr::synth;
use reachcore::inclusion::{self, Corner};
use reachcore::interval::{interval_linear_map, metzler_split, pos_neg_split, Interval, IntervalVector};

fn interval_strategy() -> impl Strategy<Value = Interval> {
    (-5.0f64..5.0, -5.0f64..5.0).prop_map(|(a, b)| Interval::hull(a, b))
}

proptest! {
    #[test]
    fn arithmetic_contains_pointwise_results(
        a in interval_strategy(),
        b in interval_strategy(),
        s in 0.0f64..1.0,
        t in 0.0f64..1.0,
    ) {
        let p = a.lo() + s * a.width();
        let q = b.lo() + t * b.width();
        prop_assert!(a.add(&b).contains(p + q));
        prop_assert!(a.sub(&b).contains(p - q));
        prop_assert!(a.mul(&b).contains(p * q));
        prop_assert!(a.sq().contains(p * p));
        prop_assert!(a.sin().contains(p.sin()));
        prop_assert!(a.cos().contains(p.cos()));
        prop_assert!(a.tanh().contains(p.tanh()));
        if b.lo() > 0.0 || b.hi() < 0.0 {
            prop_assert!(a.div(&b).unwrap().contains(p / q));
        }
    }

    #[test]
    fn matrix_splits_recompose(values in proptest::collection::vec(-10.0f64..10.0, 9)) {
        let a = ndarray::Array2::from_shape_vec((3, 3), values).unwrap();
        let (p, n) = pos_neg_split(&a);
        prop_assert!(p.iter().all(|&v| v >= 0.0));
        prop_assert!(n.iter().all(|&v| v <= 0.0));
        prop_assert_eq!(&p + &n, a.clone());
        let (m, nm) = metzler_split(&a).unwrap();
        prop_assert_eq!(&m + &nm, a);
        for i in 0..3 {
            prop_assert_eq!(nm[(i, i)], 0.0);
        }
    }

    #[test]
    fn linear_map_image_is_exact_on_corners(
        values in proptest::collection::vec(-3.0f64..3.0, 4),
        lo1 in -2.0f64..0.0, w1 in 0.0f64..2.0,
        lo2 in -2.0f64..0.0, w2 in 0.0f64..2.0,
    ) {
        let a = ndarray::Array2::from_shape_vec((2, 2), values).unwrap();
        let v = IntervalVector::from_bounds(&[lo1, lo2], &[lo1 + w1, lo2 + w2]).unwrap();
        let image = interval_linear_map(&a, &v).unwrap();
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for &x1 in &[lo1, lo1 + w1] {
            for &x2 in &[lo2, lo2 + w2] {
                let y = a.dot(&ndarray::arr1(&[x1, x2]));
                for k in 0..2 {
                    lo[k] = lo[k].min(y[k]);
                    hi[k] = hi[k].max(y[k]);
                }
            }
        }
        for k in 0..2 {
            prop_assert!((image[k].lo() - lo[k]).abs() < 1e-9);
            prop_assert!((image[k].hi() - hi[k]).abs() < 1e-9);
        }
    }

    /// Natural and cornered inclusion functions of seeded random polynomial
    /// graphs contain sampled values, and shrinking the box never widens
    /// the natural inclusion.
    #[test]
    fn inclusion_constructors_sound_and_monotone(
        seed in 0u64..5_000,
        s1 in 0.0f64..1.0,
        s2 in 0.0f64..1.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Arc::new(synth::random_polynomial(&mut rng, 2, 3));
        let outer = IntervalVector::from_bounds(&[-1.0, -1.0], &[1.0, 1.0]).unwrap();
        let inner = IntervalVector::from_bounds(&[-0.5, -0.25], &[0.25, 0.75]).unwrap();
        let nat = inclusion::natural_ifn(Arc::clone(&g));
        let out_outer = nat.eval(&outer).unwrap();
        let out_inner = nat.eval(&inner).unwrap();
        for i in 0..out_outer.dim() {
            prop_assert!(out_outer[i].contains_interval(&out_inner[i]));
        }
        let cor = inclusion::jac_cornered_ifn(Arc::clone(&g), Corner::all_lo(2)).unwrap();
        let out_cor = cor.eval(&outer).unwrap();
        let pt = [-1.0 + 2.0 * s1, -1.0 + 2.0 * s2];
        let v = g.eval_point(&pt, &[], &[]).unwrap();
        for (i, &vi) in v.iter().enumerate() {
            prop_assert!(out_outer[i].lo() <= vi + 1e-9 && vi <= out_outer[i].hi() + 1e-9);
            prop_assert!(out_cor[i].lo() <= vi + 1e-9 && vi <= out_cor[i].hi() + 1e-9);
        }
    }
}
