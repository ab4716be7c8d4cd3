//! Empirical law of the orthogonal noise for one fixed move.

use tugwar::game::{sample_noise, BoundaryData, GameConfig};
use tugwar::geometry::{dot, Vector};
use tugwar::rng::RngStream;

fn main() -> tugwar::Result<()> {
    let cfg = GameConfig::new(3.0, 3, 0.1, BoundaryData::cosine(), 1)?;
    let v = Vector::new(vec![0.06, 0.0, 0.0]);
    let mut rng = RngStream::new(cfg.seed, 0);
    let n = 100_000;
    let mut second = [0.0; 3];
    let mut worst_dot = 0.0f64;
    for _ in 0..n {
        let w = sample_noise(&v, &cfg, &mut rng)?;
        worst_dot = worst_dot.max(dot(&w, &v).abs());
        for (s, c) in second.iter_mut().zip(w.iter()) {
            *s += c * c / n as f64;
        }
    }
    // the noise lives on the sphere of radius R eps in the plane orthogonal to v
    let r_eps = cfg.noise_radius * cfg.eps;
    println!("R eps = {r_eps:.5}, max |w.v| = {worst_dot:.2e}");
    println!(
        "E[w_i^2] = {:.6} {:.6} {:.6}, want 0 and {:.6}",
        second[0],
        second[1],
        second[2],
        r_eps * r_eps / 2.0
    );
    Ok(())
}
