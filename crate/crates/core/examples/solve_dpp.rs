//! Value of the game on the unit disc by value iteration, and a few rollouts
//! of two simple strategies against it.

use tugwar::dpp::solve;
use tugwar::game::{run_games, BoundaryData, GameConfig, PullDirection};
use tugwar::geometry::Vector;

fn main() -> tugwar::Result<()> {
    let cfg = GameConfig::new(3.0, 2, 0.1, BoundaryData::cosine(), 3)?;
    let field = solve(&cfg, 0.025, 1e-6, 100_000)?;
    for x in [0.0, 0.3, 0.6] {
        println!("u({x:.1}, 0) = {:+.4}", field.evaluate(&[x, 0.0])?);
    }

    let right = PullDirection(Vector::new(vec![1.0, 0.0]));
    let left = PullDirection(Vector::new(vec![-1.0, 0.0]));
    let traces = run_games(&right, &left, &Vector::zeros(2), &cfg, 2000);
    let payoffs: Vec<f64> = traces
        .into_iter()
        .map(|t| t.map(|t| t.payoff))
        .collect::<Result<_, _>>()?;
    let mean = payoffs.iter().sum::<f64>() / payoffs.len() as f64;
    println!("mean payoff, opposite pulls from 0: {mean:+.4}");
    Ok(())
}
