//! Electron-nuclear entanglement: entropy of each Si:Bi eigenstate versus
//! field, and thermal negativity / concurrence for Si:Bi and Si:P.

use nespin::breitrabi::{Branch, Half, SpinSystemParams};
use nespin::entangle::{concurrence, eigenstate_entanglement, thermal_entanglement, thermal_state, ThermalSpec};

fn main() -> nespin::Result<()> {
    let p = SpinSystemParams::si_bi();
    println!("entropy of entanglement (bits) of phi+_m, Si:Bi");
    print!("{:>8}", "B0 (T)");
    let ms: Vec<Half> = (-4..=4).map(|k| Half(2 * k)).collect();
    for m in &ms {
        print!("{:>7}", format!("m={m}"));
    }
    println!();
    for b0 in [0.0, 0.05, 0.1, 0.2, 0.5, 1.0] {
        print!("{b0:>8}");
        for &m in &ms {
            print!("{:>7.3}", eigenstate_entanglement(&p, b0, m, Branch::Plus)?);
        }
        println!();
    }

    println!("\nthermal negativity, Si:Bi");
    for b0 in [0.0, 0.1, 1.0] {
        let row: Vec<String> = [0.0, 0.01, 0.05, 0.1, 0.3]
            .iter()
            .map(|&t| thermal_entanglement(&p, b0, ThermalSpec::new(t)?).map(|n| format!("{t} K: {n:.4}")))
            .collect::<nespin::Result<_>>()?;
        println!("  B0 = {b0} T  {}", row.join(", "));
    }

    let sp = SpinSystemParams::si_p();
    println!("\nthermal concurrence, Si:P at 1 mK");
    for b0 in [0.0, 0.002, 0.004, 0.01, 0.05] {
        let rho = thermal_state(&sp, b0, ThermalSpec::new(1e-3)?)?;
        println!("  B0 = {b0:<6} T  C = {:.4}", concurrence(&rho)?);
    }
    Ok(())
}
