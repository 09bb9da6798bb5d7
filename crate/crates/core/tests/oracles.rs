//! Generic estimators against the closed-form zoo oracles.

use std::f64::consts::FRAC_PI_2;

use nuisfim::bayes::{joint_bayes_fim, marginal_bayes_fim, BayesConfig};
use nuisfim::fim::{averaged_conditional_fim, conditional_fim, marginal_fim, nuisance_info_fim};
use nuisfim::marginal::Integrator;
use nuisfim::models::{oracle_fims, ModelId, ParamMap, ZooModel};
use nuisfim::{MatrixEstimate, PhiVector, ThetaVector};

const GRID: Integrator = Integrator::Grid { nodes_per_axis: 64 };

fn params(pairs: &[(&str, f64)]) -> ParamMap {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn assert_near(est: &MatrixEstimate, value: f64, what: &str) {
    let (m, s) = (est.mean.entries()[(0, 0)], est.stderr[(0, 0)]);
    assert!((m - value).abs() <= 3.0 * s, "{what}: {m} +- {s} vs oracle {value}");
}

fn check_model(id: ModelId, p: &ParamMap, theta: f64, seed: u64) {
    let zoo = ZooModel::build(id, p).unwrap();
    let oracle = oracle_fims(id, p, theta).unwrap();
    let t = ThetaVector::scalar(theta);
    let (m, pr) = (zoo.model.as_ref(), zoo.prior.as_ref());

    let marg = marginal_fim(m, pr, &t, 20_000, &GRID, seed).unwrap();
    assert_near(&marg, oracle["marginal"][(0, 0)], &format!("{id} marginal"));
    let avg = averaged_conditional_fim(m, pr, &t, 200, 100, seed).unwrap();
    assert_near(&avg, oracle["averaged"][(0, 0)], &format!("{id} averaged"));
    let info = nuisance_info_fim(pr, &t, 20_000, seed).unwrap();
    assert_near(&info, oracle["nuisance_info"][(0, 0)], &format!("{id} nuisance_info"));
    if let Some(phi0) = zoo.nominal_phi.as_ref() {
        let cond = conditional_fim(m, phi0, &t, 20_000, seed).unwrap();
        assert_near(&cond, oracle["conditional"][(0, 0)], &format!("{id} conditional"));
    }
}

#[test]
fn gaussian_location_small() {
    check_model(ModelId::GaussianLocation, &params(&[("n_obs", 1.0), ("sigma", 1.0), ("tau", 1.0)]), 0.3, 11);
}

#[test]
fn gaussian_location_four_events() {
    check_model(ModelId::GaussianLocation, &params(&[("n_obs", 4.0), ("sigma", 1.0), ("tau", 0.5)]), -0.2, 12);
}

#[test]
fn dependent_prior() {
    check_model(ModelId::DependentPrior, &params(&[("a", 1.0), ("sigma", 1.0), ("tau", 1.0)]), 0.1, 13);
    check_model(ModelId::DependentPrior, &params(&[("a", 2.0), ("sigma", 1.0), ("tau", 0.5)]), 0.1, 14);
}

#[test]
fn phi_free_gaussian() {
    check_model(ModelId::PhiFreeGaussian, &params(&[("sigma", 0.7), ("tau", 2.0)]), 0.0, 15);
}

#[test]
fn poisson_door() {
    check_model(ModelId::PoissonDoor, &ParamMap::new(), 0.0, 16);
    check_model(ModelId::PoissonDoor, &params(&[("phi0", 1.2), ("spread", 0.2)]), 0.4, 17);
}

#[test]
fn closed_door_conditional_information_is_zero_at_any_theta() {
    let zoo = ZooModel::build(ModelId::PoissonDoor, &ParamMap::new()).unwrap();
    for theta in [-1.0, 0.0, 0.7] {
        let est =
            conditional_fim(zoo.model.as_ref(), &PhiVector::scalar(FRAC_PI_2), &ThetaVector::scalar(theta), 100, 1)
                .unwrap();
        assert_eq!(est.mean.entries()[(0, 0)], 0.0);
    }
}

#[test]
fn gaussian_conjugate_bayesian_blocks() {
    let p = ParamMap::new();
    let zoo = ZooModel::build(ModelId::GaussianConjugate, &p).unwrap();
    let oracle = oracle_fims(ModelId::GaussianConjugate, &p, 0.0).unwrap();
    let tprior = zoo.theta_prior.as_deref().unwrap();
    let cfg = BayesConfig { n_theta: 100, n_phi: 50, n_data: 50, integrator: GRID, seed: 21 };
    let j = joint_bayes_fim(zoo.model.as_ref(), zoo.prior.as_ref(), tprior, &cfg).unwrap();
    assert_near(&j.f_tt, oracle["f_tt"][(0, 0)], "f_tt");
    assert_near(&j.f_pp, oracle["f_pp"][(0, 0)], "f_pp");
    let tp = (j.f_tp.mean[(0, 0)], j.f_tp.stderr[(0, 0)]);
    assert!((tp.0 - oracle["f_tp"][(0, 0)]).abs() <= 3.0 * tp.1, "f_tp {tp:?}");
    let f11 = &j.components["f11"];
    assert!((f11.mean[(0, 0)] - oracle["f11"][(0, 0)]).abs() <= 3.0 * f11.stderr[(0, 0)]);

    let m = marginal_bayes_fim(zoo.model.as_ref(), zoo.prior.as_ref(), tprior, &cfg).unwrap();
    assert_near(&m.f_m, oracle["f_m"][(0, 0)], "f_m");
    assert_near(&m.averaged_marginal, oracle["marginal"][(0, 0)], "<F(theta)>");
}
