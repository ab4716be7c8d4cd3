//! Harnack ratio sup/inf of a positive p-harmonic function on the unit disc,
//! computed on a radius 5 finite-difference solve.

use tugwar::fd::{solve_plaplace, FdProblem};
use tugwar::game::BoundaryData;

fn main() -> tugwar::Result<()> {
    let p = 2.0;
    let radius = 5.0;
    let bd = BoundaryData::new("1.05 + cos 3t", |x| 1.05 + (3.0 * x[1].atan2(x[0])).cos());
    let field = solve_plaplace(&FdProblem::new(p, 0.05, radius, bd)?, 1e-8, 1_000_000)?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..field.len() {
        let c = field.coords(i);
        if c[0].hypot(c[1]) <= 1.0 {
            lo = lo.min(field.values[i]);
            hi = hi.max(field.values[i]);
        }
    }
    println!("sup/inf on B_1 = {:.4}", hi / lo);
    // growth shape exp(x ln x), x = d/(p-1), with front constant 10
    let x: f64 = 2.0 / (p - 1.0);
    println!(
        "shape bound 10 exp(x ln x) = {:.4}",
        10.0 * (x * x.ln()).exp()
    );
    Ok(())
}
