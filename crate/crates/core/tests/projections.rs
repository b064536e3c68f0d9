use distopt::problem::ConstraintSet;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn vec_strategy(m: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-10.0..10.0f64, m).prop_map(DVector::from_vec)
}

fn set_strategy(m: usize) -> impl Strategy<Value = ConstraintSet> {
    prop_oneof![
        Just(ConstraintSet::FullSpace),
        (vec_strategy(m), prop::collection::vec(0.0..5.0f64, m)).prop_map(|(lo, w)| {
            let upper = &lo + DVector::from_vec(w);
            ConstraintSet::Box { lower: lo, upper }
        }),
        (vec_strategy(m), 0.1..5.0f64).prop_map(|(c, r)| ConstraintSet::Ball { center: c, radius: r }),
        (vec_strategy(m), -5.0..5.0f64)
            .prop_filter("nonzero normal", |(a, _)| a.norm() > 1e-3)
            .prop_map(|(a, b)| ConstraintSet::Halfspace { normal: a, offset: b }),
        (vec_strategy(m), -5.0..5.0f64)
            .prop_filter("nonzero row", |(a, _)| a.norm() > 1e-3)
            .prop_map(move |(a, b)| ConstraintSet::AffineSlab {
                matrix: DMatrix::from_row_slice(1, m, a.as_slice()),
                vector: DVector::from_element(1, b),
            }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn projection_is_idempotent(set in set_strategy(3), x in vec_strategy(3)) {
        let p = set.project(&x);
        let pp = set.project(&p);
        prop_assert!((pp - &p).norm() <= 1e-10 * (1.0 + p.norm()));
        prop_assert!(set.contains(&p, 1e-9));
    }

    #[test]
    fn projection_is_non_expansive(set in set_strategy(3), x in vec_strategy(3), y in vec_strategy(3)) {
        let d = (set.project(&x) - set.project(&y)).norm();
        prop_assert!(d <= (x - y).norm() + 1e-12);
    }

    #[test]
    fn projection_satisfies_variational_inequality(set in set_strategy(3), x in vec_strategy(3), z in vec_strategy(3)) {
        let p = set.project(&x);
        let y = set.project(&z);
        prop_assert!((&x - &p).dot(&(y - &p)) <= 1e-9 * (1.0 + x.norm_squared()));
    }

    #[test]
    fn box_normal_cone_fixed_point(lo in vec_strategy(3), w in prop::collection::vec(0.1..5.0f64, 3),
                                   t in prop::collection::vec(0.0..1.0f64, 3), side in prop::collection::vec(0usize..3, 3),
                                   s in prop::collection::vec(0.0..4.0f64, 3)) {
        let up = &lo + DVector::from_vec(w);
        let set = ConstraintSet::Box { lower: lo.clone(), upper: up.clone() };
        // side 0: lower face, 1: upper face, 2: interior coordinate.
        let mut x = DVector::zeros(3);
        let mut v = DVector::zeros(3);
        for k in 0..3 {
            match side[k] {
                0 => { x[k] = lo[k]; v[k] = -s[k]; }
                1 => { x[k] = up[k]; v[k] = s[k]; }
                _ => { x[k] = lo[k] + t[k] * (up[k] - lo[k]); }
            }
        }
        prop_assert!((set.project(&(&x + &v)) - &x).norm() <= 1e-10);
    }

    #[test]
    fn ball_normal_cone_fixed_point(c in vec_strategy(3), r in 0.1..5.0f64, dir in vec_strategy(3), s in 0.0..10.0f64) {
        prop_assume!(dir.norm() > 1e-3);
        let u = dir.normalize();
        let x = &c + &u * r;
        let set = ConstraintSet::Ball { center: c, radius: r };
        prop_assert!((set.project(&(&x + &u * s)) - &x).norm() <= 1e-10 * (1.0 + x.norm()));
    }

    #[test]
    fn halfspace_normal_cone_fixed_point(a in vec_strategy(3), b in -5.0..5.0f64, z in vec_strategy(3), s in 0.0..10.0f64) {
        prop_assume!(a.norm() > 1e-2);
        let set = ConstraintSet::Halfspace { normal: a.clone(), offset: b };
        let x = &z - &a * ((a.dot(&z) - b) / a.norm_squared());
        prop_assert!((set.project(&(&x + &a * s)) - &x).norm() <= 1e-10 * (1.0 + x.norm()));
    }
}

#[test]
fn box_and_ball_examples() {
    let b = ConstraintSet::Box {
        lower: DVector::from_row_slice(&[-1.0, -1.0]),
        upper: DVector::from_row_slice(&[1.0, 1.0]),
    };
    assert_eq!(b.project(&DVector::from_row_slice(&[2.0, 0.5])), DVector::from_row_slice(&[1.0, 0.5]));
    let ball = ConstraintSet::Ball {
        center: DVector::zeros(2),
        radius: 1.0,
    };
    let p = ball.project(&DVector::from_row_slice(&[3.0, 4.0]));
    assert!((p - DVector::from_row_slice(&[0.6, 0.8])).norm() < 1e-15);
}

/// Projected gradient descent on `½‖y − x‖²` over the halfspace using only
/// the boundary-plane step, as an independent projection oracle.
fn descent_projection(a: &DVector<f64>, b: f64, x: &DVector<f64>) -> DVector<f64> {
    let mut y = DVector::zeros(x.len());
    let step = 0.01;
    for _ in 0..10_000 {
        y = &y - (&y - x) * step;
        let excess = a.dot(&y) - b;
        if excess > 0.0 {
            // Feasibility restoration by bisection along the normal.
            let (mut lo, mut hi) = (0.0, excess / a.norm_squared() * 2.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if a.dot(&(&y - a * mid)) - b > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            y -= a * hi;
        }
    }
    y
}

#[test]
fn halfspace_matches_projected_descent() {
    use rand::{Rng, SeedableRng};
    let mut rng = distopt::SimRng::seed_from_u64(17);
    for _ in 0..20 {
        let a = DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
        let b = rng.random_range(-1.0..1.0);
        let x = DVector::from_fn(3, |_, _| rng.random_range(-5.0..5.0));
        let set = ConstraintSet::Halfspace { normal: a.clone(), offset: b };
        let exact = set.project(&x);
        let oracle = descent_projection(&a, b, &x);
        assert!((exact - oracle).norm() <= 1e-8, "halfspace projection disagrees with descent");
    }
}
