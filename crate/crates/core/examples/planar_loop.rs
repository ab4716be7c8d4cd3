//! Planar loop probability: the rectangle chain check, then the estimate
//! against each adversary at two values of p.

use tugwar::planar::{
    default_rect_chain, estimate_against, verify_chain, PlanarAdversary, PlanarPlan,
};

fn main() -> tugwar::Result<()> {
    let chain = default_rect_chain();
    let rep = verify_chain(&chain, 1000, 0);
    println!(
        "chain: advance {:.3} rad, fuzz failures {}/{}, {}",
        rep.advance, rep.fuzz_failures, rep.fuzz_curves, rep.verdict
    );
    let plan = PlanarPlan::new(300);
    for p in [2.0, 50.0] {
        for adv in PlanarAdversary::ALL {
            let e = estimate_against(p, 0.05, &chain, adv, &plan, 1)?;
            println!(
                "p = {p:<4} {:<12} p_hat {:.3} [{:.3}, {:.3}]",
                e.adversary, e.p_hat, e.ci_lo, e.ci_hi
            );
        }
    }
    Ok(())
}
