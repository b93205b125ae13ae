//! Measurement schemes with ideal pulses: nutation, Hahn-echo T2 and
//! inversion-recovery style T1, plus echo refocusing checks and FID lineshapes.

use nespin::dynamics::{
    fid_lineshape, hahn_echo_check, protocol, Broadening, EchoEnvironment, ProtocolSpec, Scheme, WaitChannel,
};

fn show(label: &str, spec: ProtocolSpec) -> nespin::Result<()> {
    let r = protocol(&spec)?;
    println!("\n{label}");
    if let Some(f) = &r.fit {
        println!("  {} fit: {:?} (rms {:.1e})", f.model, f.params, f.rms);
    }
    for f in &r.extra_fits {
        println!("  {} fit: {:?} (rms {:.1e})", f.model, f.params, f.rms);
    }
    Ok(())
}

fn main() -> nespin::Result<()> {
    let uniform = |n: usize, dt: f64| (0..n).map(|k| k as f64 * dt).collect::<Vec<_>>();
    show(
        "nutation at 5 rad/us",
        ProtocolSpec { scheme: Scheme::Nutation, schedule: uniform(128, 0.05), channel: WaitChannel::None, nutation_rate: 5.0, echo_delay: 0.0 },
    )?;
    show(
        "Hahn echo with pure dephasing, T2 = 3 us",
        ProtocolSpec { scheme: Scheme::HahnT2, schedule: uniform(40, 0.2), channel: WaitChannel::Dephasing { t2: 3.0 }, nutation_rate: 0.0, echo_delay: 0.0 },
    )?;
    show(
        "Hahn echo with amplitude damping, T1 = 3 us",
        ProtocolSpec { scheme: Scheme::HahnT2, schedule: uniform(40, 0.2), channel: WaitChannel::AmplitudeDamping { t1: 3.0 }, nutation_rate: 0.0, echo_delay: 0.0 },
    )?;
    show(
        "T1 scheme with amplitude damping, T1 = 3 us",
        ProtocolSpec { scheme: Scheme::T1, schedule: uniform(40, 0.2), channel: WaitChannel::AmplitudeDamping { t1: 3.0 }, nutation_rate: 0.0, echo_delay: 0.0 },
    )?;

    println!("\necho refocusing (distance from identity)");
    let ensemble = EchoEnvironment::StaticDetuningEnsemble { detunings: (0..50).map(|k| (k as f64).sin() * 4.0).collect(), tau: 2.0 };
    println!("  static ensemble: {:.1e}", hahn_echo_check(&ensemble)?);
    let ising = EchoEnvironment::IsingBathSpin { coupling: 1.0, tau: std::f64::consts::PI, bath_bloch: [0.0, 0.0, 0.8] };
    println!("  Ising bath spin: {:.1e}", hahn_echo_check(&ising)?);
    for tau in [0.05, 0.1, 0.2] {
        println!("  linear drift, tau = {tau}: {:.3e}", hahn_echo_check(&EchoEnvironment::LinearDrift { rate: 1.0, tau })?);
    }

    let tgrid = uniform(2001, 0.002);
    for kind in [Broadening::Homogeneous, Broadening::Inhomogeneous] {
        let r = fid_lineshape(kind, 50.0, 2.0, &tgrid)?;
        println!("\n{kind:?} line at 50 rad/us: DFT vs analytic deviation {:.2}%", 100.0 * r.max_relative_deviation());
    }
    Ok(())
}
