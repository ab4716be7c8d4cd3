//! Harnack constants on a small (p, d, R) grid, with the three growth shapes.

use tugwar::constants::{compare_methods, constant_row};

fn main() -> tugwar::Result<()> {
    println!("p     d   R     ln H        ln H (lps)  lnln H (moser)  N  shape order");
    for p in [1.5, 3.0] {
        for d in [2, 4, 8] {
            for r in [1.5, 5.0, 50.0] {
                let row = constant_row(p, d, r)?;
                let paper = row
                    .log_bound_paper
                    .map(|v| format!("{v:.4e}"))
                    .unwrap_or_else(|| "-".into());
                println!(
                    "{p:<5} {d:<3} {r:<5} {paper:<11} {:<11.4e} {:<15.4} {:<2} {}",
                    row.log_bound_lps, row.log_log_bound_moser, row.chain_length, row.ordering
                );
            }
        }
    }
    let cmp = compare_methods(2.0, 10)?;
    println!("p = 2: x ln x < x^2 < 2^d from d = {:?}", cmp.crossover_d);
    Ok(())
}
