//! How much faster a dual-resolution acquisition is than a full
//! high-resolution scan, as a function of the downsampling factor and of the
//! library budget ρ.
//!
//! ```text
//! cargo run --example acquisition_speedup
//! ```

use mdf::metrics::{acquisition_stats, ideal_sr_speedup};

fn main() -> mdf::Result<()> {
    println!("{:>3} {:>8} {:>10}", "L", "rho", "speedup");
    for (l, rho) in [(4, 0.0076), (8, 0.0296), (16, 0.1088)] {
        println!("{l:>3} {:>7.2}% {:>9.2}x", 100.0 * rho, ideal_sr_speedup(l, rho));
    }

    // the desk-scale experiment: 256x256 target, 4x, one 20x20 library crop
    let s = acquisition_stats(256 * 256, 64 * 64, 20 * 20)?;
    println!("\n256x256 at 4x with a 20x20 library: rho = {:.2}%, speedup = {:.2}x", 100.0 * s.rho, s.speedup);

    println!("\nlibrary side vs speedup (256x256, 4x):");
    for side in [0, 10, 20, 32, 64, 128] {
        let s = acquisition_stats(256 * 256, 64 * 64, side * side)?;
        println!("  {side:>3}x{side:<3} -> {:>6.2}x", s.speedup);
    }
    Ok(())
}
