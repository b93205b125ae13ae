//! Continuous-wave spectra of Si:Bi at S-band and X-band, with relative
//! intensities and Rabi frequencies of the strongest lines.

use nespin::breitrabi::{Half, SpinSystemParams};
use nespin::spectra::{cw_spectrum, frequency_gap, rabi_frequency, Polarization, ScanGrid, TransitionKind, TransitionLabel};
use nespin::{mhz, to_mhz};

fn print_spectrum(p: &SpinSystemParams, f_ghz: f64) -> nespin::Result<()> {
    let omega = mhz(f_ghz * 1e3);
    let lines = cw_spectrum(p, omega, &ScanGrid::for_frequency(p, omega))?;
    println!("\n{} at {f_ghz} GHz: {} lines", p.name, lines.len());
    println!("{:>12} {:>10} {:>12}", "B0 (mT)", "line", "rate");
    for l in &lines {
        println!("{:>12.3} {:>10} {:>12.4e}", l.b0 * 1e3, l.transition.to_string(), l.relative_rate);
    }
    Ok(())
}

fn main() -> nespin::Result<()> {
    let bi = SpinSystemParams::si_bi();
    print_spectrum(&SpinSystemParams::si_p(), 9.7)?;
    print_spectrum(&bi, 4.044)?;
    print_spectrum(&bi, 9.7)?;

    let w1 = mhz(1.0);
    println!("\nRabi frequency per MHz of drive and nearest-line gap at 0.3 T");
    for (kind, m) in [(TransitionKind::Pm, -8), (TransitionKind::Mm, -8), (TransitionKind::Pp, 0)] {
        let t = TransitionLabel::new(kind, Half(m));
        let rabi = rabi_frequency(&bi, 0.3, &t, w1)?;
        let gap = frequency_gap(&bi, 0.3, &t, Polarization::Circular)?;
        println!("{:>10}: rabi/w1 = {:.4}, gap = {:.2} MHz", t.to_string(), rabi / w1, to_mhz(gap));
    }
    Ok(())
}
