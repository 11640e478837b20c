//! Runs the asymmetric-factorization probe on `T_n = e_11 + n^{-1/2}(e_1n + e_n1) + n^{-1} e_nn`.
//!
//! `cargo run --release --example noasym -- 16 32 64`

use ncmax::families::noasym_probe;

fn main() {
    let mut grid: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    if grid.is_empty() {
        grid = vec![16, 32, 64];
    }
    let t = std::time::Instant::now();
    let probe = noasym_probe(&grid, 0.7, 2.0, 1e-6).expect("probe");
    println!("N,sum,c,lower,residual");
    for r in &probe.rows {
        println!("{},{:.6},{:.6},{:.6},{:.3e}", r.n, r.sum, r.c, r.lower, r.residual);
    }
    println!("slope {:.4} min_c {:.4} pass {} ({:?})", probe.slope, probe.min_c, probe.pass, t.elapsed());
}
