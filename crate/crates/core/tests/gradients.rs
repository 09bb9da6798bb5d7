//! Analytic scores and density Hessians of every zoo model against central
//! finite differences at random well-conditioned points.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nuisfim::diff::{check_gradient, check_hessian, DEFAULT_STEP};
use nuisfim::models::{ModelId, ParamMap, ZooModel};
use nuisfim::{DataSample, PhiVector, ThetaVector};

const POINTS: usize = 10;

fn draw_point(zoo: &ZooModel, rng: &mut ChaCha8Rng) -> (ThetaVector, PhiVector) {
    let theta = ThetaVector::scalar(rng.random_range(-0.8..0.8));
    let phi = match zoo.id {
        // keep the door clearly open so log-densities stay well conditioned
        ModelId::PoissonDoor => PhiVector::scalar(rng.random_range(0.3..1.2)),
        _ => PhiVector::scalar(rng.random_range(-0.8..0.8)),
    };
    (theta, phi)
}

/// Rejects points where the density Hessian `p (u^2 + u')` nearly cancels:
/// there the finite-difference error of the large terms swamps the result.
fn well_conditioned(zoo: &ZooModel, data: &DataSample, phi: &PhiVector, theta: &ThetaVector) -> bool {
    let m = zoo.model.as_ref();
    let Some(h) = m.hessian_phi_density(data, phi, theta) else {
        return true;
    };
    let p = m.log_density(data, phi, theta).exp();
    let u = m.score_phi(data, phi, theta)[0];
    (h[(0, 0)] / p).abs() * 20.0 >= u * u
}

fn check(id: ModelId, params: &ParamMap) {
    let zoo = ZooModel::build(id, params).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(id as u64 + 100);
    let (m, pr) = (zoo.model.as_ref(), zoo.prior.as_ref());
    let mut accepted = 0;
    while accepted < POINTS {
        let (theta, phi) = draw_point(&zoo, &mut rng);
        let data = m.sample(&phi, &theta, &mut rng).unwrap();
        if !well_conditioned(&zoo, &data, &phi, &theta) {
            continue;
        }
        accepted += 1;

        let f = |x: &DVector<f64>| m.log_density(&data, &phi, &ThetaVector::new(x.clone()).unwrap());
        let g = |x: &DVector<f64>| m.score_theta(&data, &phi, &ThetaVector::new(x.clone()).unwrap());
        assert!(check_gradient(&f, &g, &theta, DEFAULT_STEP).unwrap() < 1e-6, "{id} score_theta");

        let f = |x: &DVector<f64>| m.log_density(&data, &PhiVector::new(x.clone()).unwrap(), &theta);
        let g = |x: &DVector<f64>| m.score_phi(&data, &PhiVector::new(x.clone()).unwrap(), &theta);
        assert!(check_gradient(&f, &g, &phi, DEFAULT_STEP).unwrap() < 1e-6, "{id} score_phi");

        if m.hessian_phi_density(&data, &phi, &theta).is_some() {
            // divide by the density at the point so the check is relative
            let p0 = m.log_density(&data, &phi, &theta).exp();
            let f = |x: &DVector<f64>| m.log_density(&data, &PhiVector::new(x.clone()).unwrap(), &theta).exp() / p0;
            let h = |x: &DVector<f64>| {
                m.hessian_phi_density(&data, &PhiVector::new(x.clone()).unwrap(), &theta).unwrap() / p0
            };
            let e = check_hessian(&f, &h, &phi, 1e-4).unwrap();
            assert!(e < 1e-5, "{id} density Hessian error {e} at phi {}, theta {}", phi[0], theta[0]);
        }

        let f = |x: &DVector<f64>| pr.log_density(&phi, &ThetaVector::new(x.clone()).unwrap());
        let g = |x: &DVector<f64>| pr.score_theta(&phi, &ThetaVector::new(x.clone()).unwrap());
        assert!(check_gradient(&f, &g, &theta, DEFAULT_STEP).unwrap() < 1e-6, "{id} prior score_theta");

        if let Some(tp) = zoo.theta_prior.as_deref() {
            let f = |x: &DVector<f64>| tp.log_density(&ThetaVector::new(x.clone()).unwrap());
            let g = |x: &DVector<f64>| tp.score(&ThetaVector::new(x.clone()).unwrap());
            assert!(check_gradient(&f, &g, &theta, DEFAULT_STEP).unwrap() < 1e-6, "{id} theta prior score");
        }
    }
}

#[test]
fn every_zoo_model() {
    for id in ModelId::ALL {
        check(id, &ParamMap::new());
    }
}

#[test]
fn non_default_parameters() {
    let p: ParamMap = [("n_obs", 4.0), ("sigma", 0.5), ("tau", 0.3)].iter().map(|(k, v)| (k.to_string(), *v)).collect();
    check(ModelId::GaussianLocation, &p);
    let p: ParamMap = [("a", 2.0), ("tau", 0.5)].iter().map(|(k, v)| (k.to_string(), *v)).collect();
    check(ModelId::DependentPrior, &p);
}
