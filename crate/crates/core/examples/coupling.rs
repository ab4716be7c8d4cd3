//! Coupled games under each adversary of the battery: Lyapunov decrement per
//! stratum, and the alignment ratio for one random aligned configuration.

use tugwar::coupling::{
    adversary_battery, decrement_experiment, random_aligned_config, verify_alignment_inequality,
    CouplingParams, ExperimentPlan,
};
use tugwar::game::{BoundaryData, GameConfig};
use tugwar::rng::RngStream;

fn main() -> tugwar::Result<()> {
    let cfg = GameConfig::new(3.0, 3, 0.01, BoundaryData::cosine(), 9)?;
    let params = CouplingParams::for_game(&cfg);
    let plan = ExperimentPlan::new(5000);
    for adv in adversary_battery(params.theta0) {
        let (stats, runs) = decrement_experiment(&cfg, &params, adv.as_ref(), &plan, cfg.seed)?;
        let rep = stats.report(cfg.eps);
        println!("{:<18} runs {runs:>5}  {}", adv.name(), rep.verdict);
        for t in &rep.tests {
            println!(
                "    {:<7} {:<10} n {:>7}  mean {:+.3e}  bound {:+.3e}",
                t.quantity, t.stratum, t.n, t.mean, t.threshold
            );
        }
    }

    let mut rng = RngStream::new(cfg.seed, 1);
    let (u, v, z) = random_aligned_config(cfg.d, cfg.eps, params.theta0, &mut rng);
    let al = verify_alignment_inequality(&u, &v, &z, &cfg, &params, 20_000, &mut rng)?;
    println!(
        "alignment ratio {:.4} +- {:.4} (threshold {}) {}",
        al.ratio, al.ci, al.threshold, al.verdict
    );
    Ok(())
}
