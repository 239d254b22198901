//! Empirical covariance of decimated downlink frames against the analytic
//! form. Pass the frame count as the first argument (default 2000).

use cpri_compress::harness::config::RunConfig;
use cpri_compress::harness::covcheck;

fn main() -> cpri_compress::Result<()> {
    let frames = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(2000);
    let r = covcheck(&RunConfig::default(), frames, 11)?;
    println!("frames {}  N' {}  k* {}  P {:.4}", r.frames, r.n_prime, r.k_star, r.power);
    println!("relative Frobenius error {:.2}%", 100.0 * r.rel_frobenius_error);
    println!("sampling floor sqrt(occupied/F) {:.2}%", 100.0 * ((r.n_prime - 2 * r.k_star) as f64 / r.frames as f64).sqrt());
    println!("max |mean| / standard error {:.2}", r.max_mean_z);
    Ok(())
}
