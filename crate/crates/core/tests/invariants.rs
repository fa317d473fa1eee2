use std::collections::BTreeMap;

use mrl_core::cpo::cpo_mixture;
use mrl_core::distributions::{gamma_ln_pdf_unchecked, gamma_ln_survival_unchecked, sample_kotz_bivariate_beta};
use mrl_core::functionals::{mean_regression, MixtureView, SURVIVAL_FLOOR};
use mrl_core::model::{cluster_counts, stick_break, validate_dataset, zeta_from_weights};
use mrl_core::{AtomParams, Hyperstate, Mat2, MixtureState, Observation, RngHandle, StickState, Vec2};
use proptest::prelude::*;

fn hyper() -> Hyperstate {
    Hyperstate {
        mu: Vec2::ZERO,
        sigma: Mat2::IDENTITY,
        lambda: 0.0,
        tau2: 1.0,
        rho: 1.0,
        alpha: 1.0,
        b: 0.5,
        a_kappa: 2.0,
    }
}

fn state(atoms: Vec<AtomParams>, weights: Vec<f64>, config: Vec<usize>) -> MixtureState {
    let sticks = StickState { zeta: vec![zeta_from_weights(&weights)], latent_uvw: Vec::new(), weights: vec![weights] };
    MixtureState { atoms, sticks, config: vec![config], hyper: hyper(), imputed_times: BTreeMap::new() }
}

fn atom() -> impl Strategy<Value = AtomParams> {
    (-1.0..2.5f64, -2.0..1.0f64, -5.0..5.0f64, 0.3..6.0f64)
        .prop_map(|(theta, phi, beta, kappa2)| AtomParams { theta, phi, beta, kappa2 })
}

/// A single-group draw with 2..8 atoms and weights from stick breaking.
fn draw() -> impl Strategy<Value = MixtureState> {
    (2usize..8).prop_flat_map(|l| {
        (prop::collection::vec(atom(), l), prop::collection::vec(0.05..0.95f64, l - 1)).prop_map(|(atoms, zeta)| {
            let w = stick_break(&zeta).unwrap();
            state(atoms, w, Vec::new())
        })
    })
}

fn permuted(d: &MixtureState, perm: &[usize]) -> MixtureState {
    let atoms = perm.iter().map(|&i| d.atoms[i]).collect();
    let weights = perm.iter().map(|&i| d.sticks.weights[0][i]).collect();
    state(atoms, weights, Vec::new())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn stick_break_gives_probability_vectors(zeta in prop::collection::vec(1e-9..(1.0 - 1e-9), 1..80)) {
        let w = stick_break(&zeta).unwrap();
        prop_assert_eq!(w.len(), zeta.len() + 1);
        prop_assert!(w.iter().all(|&p| p >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!((w[0] - (1.0 - zeta[0])).abs() < 1e-15);
        let remainder: f64 = zeta.iter().product();
        prop_assert!(rel(*w.last().unwrap(), remainder) < 1e-10 || remainder < 1e-290);
    }

    #[test]
    fn sticks_round_trip_through_weights(zeta in prop::collection::vec(0.3..0.99f64, 1..12)) {
        let w = stick_break(&zeta).unwrap();
        prop_assume!(w.iter().all(|&p| p > 1e-8));
        let back = zeta_from_weights(&w);
        for (a, b) in back.iter().zip(&zeta) {
            prop_assert!((a - b).abs() < 1e-10, "{} vs {}", a, b);
        }
    }

    #[test]
    fn cluster_counts_add_up(labels in prop::collection::vec(0usize..6, 0..60)) {
        let atoms = vec![AtomParams { theta: 0.0, phi: 0.0, beta: 0.0, kappa2: 1.0 }; 6];
        let s = state(atoms, vec![1.0 / 6.0; 6], labels.clone());
        let m = cluster_counts(&s);
        prop_assert_eq!(m[0].iter().sum::<usize>(), labels.len());
        for (l, &c) in m[0].iter().enumerate() {
            prop_assert_eq!(c, labels.iter().filter(|&&x| x == l).count());
        }
    }

    #[test]
    fn relabelling_atoms_leaves_functionals_unchanged(d in draw(), seed in any::<u64>(), t in 0.0..15.0f64, x0 in -6.0..6.0f64) {
        let l = d.atoms.len();
        let mut perm: Vec<usize> = (0..l).collect();
        // Fisher-Yates driven by the seed
        let mut z = seed;
        for i in (1..l).rev() {
            z = z.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (z >> 33) as usize % (i + 1));
        }
        let p = permuted(&d, &perm);
        for x in [None, Some(x0)] {
            let a = MixtureView::new(&d, None, x);
            let b = MixtureView::new(&p, None, x);
            prop_assert_eq!(a.density(t).to_bits(), b.density(t).to_bits());
            prop_assert_eq!(a.survival(t).to_bits(), b.survival(t).to_bits());
            prop_assert_eq!(a.mean().to_bits(), b.mean().to_bits());
            prop_assert_eq!(a.hazard(t).ok().map(f64::to_bits), b.hazard(t).ok().map(f64::to_bits));
            prop_assert_eq!(a.mrl(t).ok().map(f64::to_bits), b.mrl(t).ok().map(f64::to_bits));
        }
        prop_assert_eq!(mean_regression(&d, x0, None).to_bits(), mean_regression(&p, x0, None).to_bits());
    }

    #[test]
    fn mrl_closed_form_matches_integral_form(d in draw(), t in 0.0..20.0f64, x0 in -6.0..6.0f64) {
        for x in [None, Some(x0)] {
            let v = MixtureView::new(&d, None, x);
            if let (Ok(a), Ok(b)) = (v.mrl(t), v.mrl_integral_form(t)) {
                prop_assert!(rel(a, b) < 1e-6, "t={} {} vs {}", t, a, b);
            }
        }
        let m0 = MixtureView::conditional(&d, None, x0).mrl(0.0).unwrap();
        prop_assert!(rel(m0, mean_regression(&d, x0, None)) < 1e-12);
    }

    #[test]
    fn survival_is_monotone_and_hazard_consistent(d in draw(), ts in prop::collection::vec(0.0..30.0f64, 2..20)) {
        let v = MixtureView::marginal(&d, None);
        let mut ts = ts;
        ts.sort_by(f64::total_cmp);
        let mut prev = 1.0;
        for &t in &ts {
            let s = v.survival(t);
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert!(s <= prev + 1e-15);
            prev = s;
            if t > 0.0 && s >= SURVIVAL_FLOOR {
                prop_assert!(rel(v.hazard(t).unwrap() * s, v.density(t)) < 1e-10);
            }
        }
    }

    #[test]
    fn censored_rows_use_the_survival_factor(shape in 0.2..20.0f64, rate in 0.05..5.0f64, t in 0.01..40.0f64) {
        let ls = gamma_ln_survival_unchecked(t, shape, rate);
        prop_assert!(ls <= 0.0);
        // Single-atom, single-draw CPO is the row's own likelihood factor.
        let atoms = vec![
            AtomParams { theta: shape.ln(), phi: rate.ln(), beta: 0.0, kappa2: 1.0 },
            AtomParams { theta: 0.0, phi: 0.0, beta: 0.0, kappa2: 1.0 },
        ];
        let d = state(atoms, vec![1.0, 0.0], vec![0, 0]);
        let data = validate_dataset(vec![Observation::observed(t), Observation::censored_at(t)]).unwrap();
        let r = cpo_mixture(std::slice::from_ref(&d), &data, false, "dpmm").unwrap();
        let ld = gamma_ln_pdf_unchecked(t, shape, rate);
        prop_assert!((r.rows[0].log_cpo - ld).abs() < 1e-9 * ld.abs().max(1.0));
        prop_assert!((r.rows[1].log_cpo - ls).abs() < 1e-9 * ls.abs().max(1.0));
    }

    #[test]
    fn kotz_draws_are_products_of_latents(alpha in 0.05..30.0f64, b in 0.001..0.999f64, seed in any::<u64>()) {
        let mut rng = RngHandle::new(seed);
        let d = sample_kotz_bivariate_beta(&mut rng, alpha, b).unwrap();
        prop_assert!(d.zeta_c > 0.0 && d.zeta_c < 1.0 && d.zeta_t > 0.0 && d.zeta_t < 1.0);
        prop_assert!(rel(d.zeta_c, d.u * d.w) < 1e-12);
        prop_assert!(rel(d.zeta_t, d.v * d.w) < 1e-12);
    }
}

#[test]
fn near_one_b_couples_the_sticks() {
    let mut rng = RngHandle::new(17);
    let n = 20_000;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..n {
        let d = sample_kotz_bivariate_beta(&mut rng, 2.0, 0.999).unwrap();
        sx += d.zeta_c;
        sy += d.zeta_t;
        sxx += d.zeta_c * d.zeta_c;
        syy += d.zeta_t * d.zeta_t;
        sxy += d.zeta_c * d.zeta_t;
    }
    let n = n as f64;
    let cov = sxy / n - sx * sy / n / n;
    let cor = cov / ((sxx / n - (sx / n).powi(2)) * (syy / n - (sy / n).powi(2))).sqrt();
    assert!(cor > 0.99, "{cor}");
}
