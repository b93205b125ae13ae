//! Markovian field noise on Si:Bi: closed-form dephasing rates against
//! fitted Lindblad evolution, the optimal working point of pm(m=-3),
//! and the steady states of adiabatic and diabatic Z noise.

use nespin::breitrabi::{Half, SpinSystemParams};
use nespin::noise::{
    fitted_dephasing_rate, lindblad_z, lindblad_z_truncated, owp_find, predicted_rates, steady_states, transition_indices, NoiseSpec,
};
use nespin::spectra::{TransitionKind, TransitionLabel};

fn main() -> nespin::Result<()> {
    let p = SpinSystemParams::si_bi();
    let t = TransitionLabel::new(TransitionKind::Pm, Half(-6));
    let owp = owp_find(&p, &t).expect("pm(m=-3) has an optimal working point");
    println!("{t}: optimal working point {owp:.5} T");

    let adiabatic = NoiseSpec::adiabatic_z(1.0)?;
    let diabatic = NoiseSpec::diabatic_z(1.0)?;
    println!("\n{:>8} {:>14} {:>14} {:>14}", "B0 (T)", "adiabatic", "fitted", "diabatic");
    for b0 in [0.1, 0.15, owp, 0.25, 0.4] {
        let pred = predicted_rates(&p, b0, &t, &adiabatic)?.t2_rate;
        let g = lindblad_z(&p, b0, &adiabatic)?;
        let (i, j) = transition_indices(&g, &t)?;
        let times: Vec<f64> = (1..=10).map(|k| k as f64 * 0.2 / pred.max(1e-3)).collect();
        let fit = fitted_dephasing_rate(&g, i, j, &times)?;
        let dia = predicted_rates(&p, b0, &t, &diabatic)?.t2_rate;
        println!("{b0:>8.4} {pred:>14.4e} {fit:>14.4e} {dia:>14.4e}");
    }

    for (name, spec) in [("adiabatic", adiabatic), ("diabatic", diabatic)] {
        let g = lindblad_z_truncated(&p, 0.15, &spec, Half(-6))?;
        println!("\n{name} Z noise, 4-level subspace: {} steady states", steady_states(&g)?.len());
    }
    Ok(())
}
