//! Finite-difference p-harmonic reference against the dynamic programming value.

use tugwar::dpp::solve;
use tugwar::fd::{cross_validate, solve_plaplace, FdProblem};
use tugwar::game::{BoundaryData, GameConfig};

fn main() -> tugwar::Result<()> {
    let p = 3.0;
    let cfg = GameConfig::new(p, 2, 0.05, BoundaryData::cosine(), 0)?;
    let dpp = solve(&cfg, 0.0125, 1e-6, 1_000_000)?;
    let fd = solve_plaplace(
        &FdProblem::new(p, 0.02, 1.0, BoundaryData::cosine())?,
        1e-8,
        1_000_000,
    )?;
    let rep = cross_validate(&dpp, &fd, 0.3)?;
    println!(
        "p = {p}: sup |u_dpp - u_fd| = {:.4}, mean = {:.4} over {} nodes",
        rep.sup_diff, rep.mean_diff, rep.nodes
    );
    Ok(())
}
