//! Eigenstructure of Si:Bi across field regimes: the analytic eigensystem
//! against dense diagonalisation, cancellation resonances, avoided-crossing
//! fields and the high-field reordering of the upper manifold.

use nespin::breitrabi::{
    cancellation_resonance, eigen_analytic, eigen_numeric, energy_stationary_fields, phase_boundary, Branch, ResonanceKind,
    SpinSystemParams,
};
use nespin::to_mhz;

fn main() -> nespin::Result<()> {
    let p = SpinSystemParams::si_bi();
    println!("Si:Bi, I = {}, {} levels", p.i(), p.dim());

    for b0 in [0.0, 0.1, 0.5, 2.0] {
        let analytic = eigen_analytic(&p, b0)?;
        let numeric = eigen_numeric(&p, b0)?;
        let worst = analytic.energies().iter().zip(numeric.energies()).map(|(a, n)| (a - n).abs()).fold(0.0, f64::max);
        println!("\nB0 = {b0} T (analytic vs dense: {:.1e} MHz)", to_mhz(worst));
        println!("{:>5} {:>6} {:>8} {:>14}", "idx", "m", "branch", "E (MHz)");
        for l in analytic.levels.iter().take(4).chain(analytic.levels.iter().rev().take(2)) {
            println!("{:>5} {:>6} {:>8} {:>14.3}", l.sorted_index, l.m.to_string(), l.branch.symbol(), to_mhz(l.energy));
        }
    }

    println!("\ncancellation resonances and stationary energies");
    println!("{:>6} {:>12} {:>12} {:>14}", "m", "type I (T)", "type II (T)", "dE+/dB=0 (T)");
    for m in p.m_values().into_iter().filter(|&m| !p.is_edge(m)) {
        let fmt = |x: Option<f64>| x.map(|b| format!("{:.5}", b + 0.0)).unwrap_or_else(|| "-".into());
        println!(
            "{:>6} {:>12} {:>12} {:>14}",
            m.to_string(),
            fmt(cancellation_resonance(&p, m, ResonanceKind::I)?),
            fmt(cancellation_resonance(&p, m, ResonanceKind::II)?),
            fmt(energy_stationary_fields(&p, m, Branch::Plus)?),
        );
    }

    if let Some(b) = phase_boundary(&p, 6.0, 150.0) {
        println!("\nupper-manifold ordering reverses at {b:.2} T");
    }
    Ok(())
}
