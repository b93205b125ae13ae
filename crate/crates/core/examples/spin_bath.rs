//! Coherence of Si:Bi pm(m=-3) coupled to a small random spin bath, away
//! from and at the optimal working point, with and without a Hahn echo.

use nespin::breitrabi::{Half, SpinSystemParams};
use nespin::noise::{bath_coherence, bath_coherence_echo, owp_find, BathSpec};
use nespin::spectra::{TransitionKind, TransitionLabel};

fn main() -> nespin::Result<()> {
    let p = SpinSystemParams::si_bi();
    let t = TransitionLabel::new(TransitionKind::Pm, Half(-6));
    let owp = owp_find(&p, &t).expect("optimal working point");
    let bath = BathSpec::random(5, 7)?;
    let tgrid: Vec<f64> = (0..=10).map(|k| k as f64 * 2.0).collect();

    let off = bath_coherence(&p, 0.35, &t, &bath, &tgrid)?;
    let echo = bath_coherence_echo(&p, 0.35, &t, &bath, &tgrid)?;
    let at = bath_coherence(&p, owp, &t, &bath, &tgrid)?;
    println!("{:>8} {:>14} {:>8} {:>14} {:>14}", "tau", "L (0.35 T)", "2 tau", "echo (0.35 T)", "L (OWP)");
    for (k, tau) in tgrid.iter().enumerate() {
        println!("{:>8.1} {:>14.6} {:>8.1} {:>14.6} {:>14.6}", tau, off.values[k], echo.t[k], echo.values[k], at.values[k]);
    }
    Ok(())
}
