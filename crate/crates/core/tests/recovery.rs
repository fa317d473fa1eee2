use mrl_core::dpmm::{run_chain, DpmmPriorConfig};
use mrl_core::ewm::{run_chain_ewm, EwmParams, EwmPriors};
use mrl_core::functionals::{mean_regression, quantile_sorted};
use mrl_core::mcmc::McmcSettings;
use mrl_core::model::validate_dataset;
use mrl_core::simulation::{gen_single, Family, MixturePopulation, PopulationComponent};
use mrl_core::{Group, Observation, RngHandle};

fn interval(mut v: Vec<f64>) -> (f64, f64) {
    v.sort_by(f64::total_cmp);
    (quantile_sorted(&v, 0.025), quantile_sorted(&v, 0.975))
}

#[test]
fn single_component_mean_regression_is_covered() {
    let pop = MixturePopulation::new(vec![PopulationComponent {
        weight: 1.0,
        family: Family::GammaNormal { shape: 2.0, rate: 0.15, mean: 0.0, sd: 4.0 },
    }])
    .unwrap();
    let data = gen_single(&mut RngHandle::new(31), &pop, 500).unwrap();
    let prior = DpmmPriorConfig { truncation: 20, ..DpmmPriorConfig::regression() };
    let settings = McmcSettings { iterations: 5000, burn_in: 2000, thinning: 3, adapt_until: 1000, seed: 5, ..Default::default() };
    let out = run_chain(&data, &prior, &settings, &mut RngHandle::new(5)).unwrap();
    assert_eq!(out.draws.len(), 1000);
    for x0 in [-6.0, -3.0, 0.0, 3.0, 6.0] {
        let truth = pop.mean(Some(x0));
        let (lo, hi) = interval(out.draws.iter().map(|d| mean_regression(d, x0, None)).collect());
        assert!(lo <= truth && truth <= hi, "x0={x0}: truth {truth} outside ({lo}, {hi})");
    }
}

/// Inverse-CDF draw from the exponentiated Weibull regression.
fn ewm_sample(rng: &mut RngHandle, p: &EwmParams, x: f64) -> f64 {
    let u = mrl_core::distributions::open01(rng);
    let z = -(1.0 - u.powf(1.0 / p.theta_w)).ln();
    (z.ln() - p.beta0 - p.beta1 * x).exp().powf(1.0 / p.alpha_w)
}

#[test]
fn ewm_posterior_covers_generating_parameters() {
    let truth = EwmParams::new(1.4, 2.0, -3.0, 0.6).unwrap();
    let mut rng = RngHandle::new(77);
    let mut rows = Vec::new();
    for (g, x) in [(Group::C, 0.0), (Group::T, 1.0)] {
        for _ in 0..200 {
            rows.push(Observation::observed(ewm_sample(&mut rng, &truth, x)).in_group(g));
        }
    }
    let data = validate_dataset(rows).unwrap();
    let settings =
        McmcSettings { iterations: 30_000, burn_in: 10_000, thinning: 5, adapt_until: 8000, seed: 3, ..Default::default() };
    let out = run_chain_ewm(&data, &EwmPriors::default(), &settings, &mut RngHandle::new(3)).unwrap();
    let rate = out.meta.acceptance["ewm"];
    assert!((0.1..0.6).contains(&rate), "acceptance {rate}");
    type Coord = (&'static str, fn(&EwmParams) -> f64, f64);
    let params: [Coord; 4] = [
        ("alpha_w", |p| p.alpha_w, truth.alpha_w),
        ("theta_w", |p| p.theta_w, truth.theta_w),
        ("beta0", |p| p.beta0, truth.beta0),
        ("beta1", |p| p.beta1, truth.beta1),
    ];
    for (name, get, t) in params {
        let (lo, hi) = interval(out.draws.iter().map(get).collect());
        assert!(lo <= t && t <= hi, "{name}: {t} outside ({lo}, {hi})");
    }
}
