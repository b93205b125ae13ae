//! Selective π pulses on Si:Bi transitions: control accuracy against field at
//! fixed Rabi frequency, and the RWA error of a linearly driven two-level system.

use nespin::breitrabi::{Half, SpinSystemParams};
use nespin::dynamics::{control_accuracy, rwa_error, IntegratorConfig};
use nespin::spectra::{frequency_gap, Polarization, TransitionKind, TransitionLabel};
use nespin::{mhz, to_mhz};

fn main() -> nespin::Result<()> {
    let p = SpinSystemParams::si_bi();
    let t = TransitionLabel::new(TransitionKind::Pp, Half(0));
    let fields: Vec<f64> = (1..=12).map(|k| 0.05 * k as f64).collect();
    println!("{t}, Rabi frequency 2 MHz");
    println!("{:>8} {:>12} {:>10} {:>12}", "B0 (T)", "gap (MHz)", "pol", "D");
    for pt in control_accuracy(&p, &fields, &t, mhz(2.0))? {
        let gap = frequency_gap(&p, pt.b0, &t, Polarization::Circular)?;
        let d = pt.distance.map(|d| format!("{d:.4e}")).unwrap_or_else(|| "skipped".into());
        println!("{:>8.2} {:>12.2} {:>10?} {:>12}", pt.b0, to_mhz(gap), pt.polarization, d);
    }

    println!("\nS-band pair at 200 MHz Rabi frequency");
    for (kind, b0) in [(TransitionKind::Pm, 0.34502), (TransitionKind::Mm, 0.14563)] {
        let t = TransitionLabel::new(kind, Half(-8));
        let pt = &control_accuracy(&p, &[b0], &t, mhz(200.0))?[0];
        println!("  {t} at {b0} T: D = {:.4}", pt.distance.unwrap_or(f64::NAN));
    }

    println!("\nRWA error, two-level system");
    for r in rwa_error(1.0, &[1e-1, 1e-2, 1e-3, 1e-4], &IntegratorConfig::default())? {
        println!("  w1/8W = {:.0e}: D = {:.4e}", r.ratio, r.distance);
    }
    Ok(())
}
