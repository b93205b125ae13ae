//! Frequency stationary points of Si:Bi: exact roots of dΩ/dB₀ beside the
//! δγ → 0 closed forms, and the frequency drift around a minimum.

use nespin::breitrabi::{Half, SpinSystemParams};
use nespin::spectra::{fsp_exact, fsp_limit_closed_form, transition_frequency, Extremum, ScanGrid, TransitionKind, TransitionLabel};
use nespin::to_mhz;

fn main() -> nespin::Result<()> {
    let p = SpinSystemParams::si_bi();
    println!("{:>4} {:>12} {:>12} {:>12} {:>12}", "m", "min exact", "min limit", "max exact", "max limit");
    for k in 0..4 {
        let m = Half(-2 * k);
        let grid = ScanGrid::default();
        let min = fsp_exact(&p, &TransitionLabel::new(TransitionKind::Pm, m), &grid)?;
        let max = fsp_exact(&p, &TransitionLabel::new(TransitionKind::Pp, m), &grid)?;
        let pick = |v: &[nespin::spectra::FrequencyStationaryPoint], e: Extremum| {
            v.iter().find(|r| r.kind == e).map(|r| format!("{:.4}", r.b0)).unwrap_or_else(|| "-".into())
        };
        let lim = |e: Extremum| fsp_limit_closed_form(&p, m, e).map(|b| format!("{b:.4}")).unwrap_or_else(|| "-".into());
        println!("{:>4} {:>12} {:>12} {:>12} {:>12}", m.to_string(), pick(&min, Extremum::Min), lim(Extremum::Min), pick(&max, Extremum::Max), lim(Extremum::Max));
    }

    let t = TransitionLabel::new(TransitionKind::Pm, Half(-6));
    let b = fsp_exact(&p, &t, &ScanGrid::default())?[0].b0;
    let f0 = transition_frequency(&p, b, &t)?;
    println!("\n{t} around its minimum at {b:.5} T:");
    for db in [-1e-3, -1e-4, 0.0, 1e-4, 1e-3] {
        let df = transition_frequency(&p, b + db, &t)? - f0;
        println!("  dB = {:+.0e} T  ->  dΩ = {:+.3e} MHz", db, to_mhz(df));
    }
    Ok(())
}
