//! The `verify` self-check: identities, model oracles and LHV bounds.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, SQRT_2, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use retarded_bell::estimation::{mc_e, quadrature_e};
use retarded_bell::inequalities::{
    ch_identity_check, chsh_identity_check, retarded_ch, retarded_chsh, same_retarded_chsh,
    standard_chsh, ClosedForm, Octuple, ROUNDING_SLACK,
};
use retarded_bell::models::{hardy_closed_form_e, hardy_overlap_e, Model, Settings};
use retarded_bell::parallel::Workers;
use retarded_bell::Result;

pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check {
        name,
        passed,
        detail,
    }
}

fn random_octuple(rng: &mut ChaCha8Rng) -> Octuple<f64> {
    Octuple::from_array(std::array::from_fn(|_| rng.random_range(0.0..TAU)))
}

/// Runs every check. `samples` scales the randomized ones.
pub fn run_checks(samples: u64, seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hardy = ClosedForm(Model::HardySinglet);
    let quantum = ClosedForm(Model::QuantumSinglet);
    let mut out = Vec::new();

    let c = chsh_identity_check();
    out.push(check(
        "chsh_identity",
        c.passed,
        format!("{} sign assignments", c.cases),
    ));
    let c = ch_identity_check(samples, seed);
    out.push(check(
        "ch_identity",
        c.passed,
        format!("{} points in the unit cube", c.cases),
    ));

    let worst = (0..64)
        .flat_map(|i| (0..64).map(move |j| (i as f64 * TAU / 64.0, j as f64 * TAU / 64.0)))
        .map(|(a, b)| (hardy_closed_form_e(a, b, a, b) + (a - b).cos()).abs())
        .fold(0.0, f64::max);
    out.push(check(
        "hardy_reproduces_quantum",
        worst <= 1e-12,
        format!("max deviation {worst:.3e} on a 64x64 grid"),
    ));

    let worst = (0..samples.min(100_000))
        .map(|_| {
            let [a, b, ar, br]: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.0..TAU));
            (hardy_overlap_e(a, b, ar, br) - hardy_closed_form_e(a, b, ar, br)).abs()
        })
        .fold(0.0, f64::max);
    out.push(check(
        "hardy_overlap_matches_closed_form",
        worst <= 1e-12,
        format!("max deviation {worst:.3e}"),
    ));

    let n_oct = samples.min(10_000);
    let mut chsh_bad = 0;
    let mut ch_bad = 0;
    for _ in 0..n_oct {
        let o = random_octuple(&mut rng);
        let v = retarded_chsh(&hardy, &o)?.value;
        chsh_bad += u64::from(v.abs() > 2.0 + ROUNDING_SLACK);
        let v = retarded_ch(&hardy, &o)?.value;
        ch_bad += u64::from(!(-1.0 - ROUNDING_SLACK..=ROUNDING_SLACK).contains(&v));
    }
    out.push(check(
        "lhv_bound_retarded_chsh",
        chsh_bad == 0,
        format!("{chsh_bad} of {n_oct} random octuples outside [-2, 2]"),
    ));
    out.push(check(
        "lhv_bound_retarded_ch",
        ch_bad == 0,
        format!("{ch_bad} of {n_oct} random octuples outside [-1, 0]"),
    ));

    let (a, a2, b, b2) = (FRAC_PI_2, 0.0, -FRAC_PI_4, FRAC_PI_4);
    let v = same_retarded_chsh(&hardy, &a, &a2, &b, &b2)?.value;
    out.push(check(
        "hardy_same_retarded_quartet",
        (v + SQRT_2).abs() <= 1e-9,
        format!("value {v:.6}, expected {:.6}", -SQRT_2),
    ));
    let v = standard_chsh(&quantum, &a, &a2, &b, &b2)?.value;
    out.push(check(
        "quantum_chsh_quartet",
        (v + 2.0 * SQRT_2).abs() <= 1e-9,
        format!("value {v:.6}, expected {:.6}", -2.0 * SQRT_2),
    ));
    let v = retarded_ch(&quantum, &Octuple::tied(a, a2, b, b2))?.value;
    let expected = -(1.0 + SQRT_2) / 2.0;
    out.push(check(
        "quantum_ch_quartet",
        (v - expected).abs() <= 1e-9 && v < -1.0,
        format!("value {v:.6}, expected {expected:.6}"),
    ));

    let mut worst_quad: f64 = 0.0;
    let mut worst_sigma: f64 = 0.0;
    for i in 0..10u64 {
        let [a, b, ar, br]: [f64; 4] = std::array::from_fn(|_| rng.random_range(-PI..PI));
        let s = Settings::new(a, b, ar, br);
        let exact = Model::HardySinglet.correlation(&s);
        worst_quad =
            worst_quad.max((quadrature_e(Model::HardySinglet, &s, 100_000)? - exact).abs());
        let mc = mc_e(
            Model::HardySinglet,
            &s,
            samples.clamp(1_000, 200_000),
            seed ^ i,
            Workers::from_env(),
        )?;
        if mc.standard_error > 0.0 {
            worst_sigma = worst_sigma.max((mc.estimate - exact).abs() / mc.standard_error);
        }
    }
    out.push(check(
        "quadrature_matches_closed_form",
        worst_quad <= 1e-4,
        format!("max deviation {worst_quad:.3e}"),
    ));
    out.push(check(
        "monte_carlo_matches_closed_form",
        worst_sigma <= 5.0,
        format!("max deviation {worst_sigma:.2} sigma"),
    ));
    Ok(out)
}
