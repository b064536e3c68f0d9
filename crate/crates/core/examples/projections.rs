//! Euclidean projections onto the supported constraint sets.

use distopt::problem::ConstraintSet;
use nalgebra::{dmatrix, dvector};

fn main() -> distopt::Result<()> {
    let sets = [
        ("box", ConstraintSet::Box { lower: dvector![0.0, 0.0], upper: dvector![1.0, 1.0] }),
        ("ball", ConstraintSet::Ball { center: dvector![0.0, 0.0], radius: 1.0 }),
        ("halfspace", ConstraintSet::Halfspace { normal: dvector![1.0, 1.0], offset: 1.0 }),
        ("affine", ConstraintSet::AffineSlab { matrix: dmatrix![1.0, -1.0], vector: dvector![0.0] }),
    ];
    let points = [dvector![2.0, -1.0], dvector![0.3, 0.4], dvector![-3.0, 5.0]];
    for (name, set) in &sets {
        set.validate(2)?;
        for x in &points {
            let p = set.project(x);
            println!(
                "{name:>9}: ({:5.2}, {:5.2}) -> ({:7.4}, {:7.4})  inside before: {}",
                x[0],
                x[1],
                p[0],
                p[1],
                set.contains(x, 1e-12)
            );
        }
    }
    Ok(())
}
