use proptest::prelude::*;

use tensor_colombeau::asymptotics::fit_log_log;
use tensor_colombeau::distribution::{ScalarDistribution, TensorDistribution};
use tensor_colombeau::embedding::{embed_iota_distribution, embed_sigma};
use tensor_colombeau::geometry::{Chart, Diffeo, Point, SmoothMap};
use tensor_colombeau::lie::mu_hat;
use tensor_colombeau::mollifier::{make_mollifier, BumpProfile};
use tensor_colombeau::quadrature::Quadrature;
use tensor_colombeau::tensor::{SmoothTensorField, TensorAtPoint, TensorType};
use tensor_colombeau::transport::{TensorTransport, TransportOperator};

fn line() -> Chart {
    Chart::cube(1, 1.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transport_pairing_is_adjoint(
        lambda in -2.0f64..2.0,
        p in -0.9f64..0.9,
        q in -0.9f64..0.9,
        g in prop::collection::vec(-1.0f64..1.0, 4),
        t in prop::collection::vec(-1.0f64..1.0, 4),
        r in 0usize..3,
    ) {
        let chart = Chart::cube(2, 1.0).unwrap();
        let ttype = TensorType::new(r, 2 - r).unwrap();
        let (pp, qq) = (Point::new(&[p, 0.3 * q]), Point::new(&[q, -0.2]));
        let tr = TensorTransport::new(TransportOperator::shear(&chart, lambda), ttype);
        let gq = TensorAtPoint::new(ttype, qq, g).unwrap();
        let tp = TensorAtPoint::new(ttype.transpose(), pp, t).unwrap();
        let lhs = tr.apply_b(&gq, &pp).unwrap().contract_full(&tp).unwrap();
        let rhs = gq.contract_full(&tr.apply_a_rs(&tp, &qq).unwrap()).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()).max(1e-300));
    }

    #[test]
    fn iota_is_linear(a in -2.0f64..2.0, b in -2.0f64..2.0, p in -0.5f64..0.5, eps in 0.05f64..0.2, x0 in -0.1f64..0.1) {
        let chart = line();
        let u = TensorDistribution::scalar(ScalarDistribution::dirac(Point::new(&[x0])), 1);
        let v = TensorDistribution::scalar(ScalarDistribution::regular(SmoothMap::new(|q| q.coords()[0].cos())), 1);
        let combo = embed_iota_distribution(&u.lin_comb(a, &v, b).unwrap());
        let separate = embed_iota_distribution(&u).lin_comb(a, &embed_iota_distribution(&v), b).unwrap();
        let at = Point::new(&[p]);
        let w = make_mollifier(&BumpProfile::bump_sym(1).unwrap(), &at, eps, &chart).unwrap();
        let a_op = TransportOperator::identity_cut(&chart);
        let l = combo.eval(&w, &at, &a_op).unwrap().components()[0];
        let r = separate.eval(&w, &at, &a_op).unwrap().components()[0];
        prop_assert!((l - r).abs() <= 1e-12 * l.abs().max(r.abs()).max(1.0));
    }

    #[test]
    fn sigma_ignores_mollifier_and_transport(p in -0.5f64..0.5, e1 in 0.01f64..0.3, e2 in 0.01f64..0.3, lambda in -1.0f64..1.0) {
        let chart = line();
        let f = SmoothTensorField::scalar(1, SmoothMap::new(|q| q.coords()[0].exp()));
        let s = embed_sigma(&f);
        let at = Point::new(&[p]);
        let w1 = make_mollifier(&BumpProfile::bump_sym(1).unwrap(), &at, e1, &chart).unwrap();
        let w2 = make_mollifier(&BumpProfile::poly4(1).unwrap(), &at, e2, &chart).unwrap();
        let v1 = s.eval(&w1, &at, &TransportOperator::identity_cut(&chart)).unwrap();
        let v2 = s.eval(&w2, &at, &TransportOperator::shear(&chart, lambda)).unwrap();
        prop_assert_eq!(v1.components(), v2.components());
    }

    #[test]
    fn log_log_fit_recovers_power_laws(c in 0.1f64..10.0, k in -3.0f64..5.0) {
        let eps: [f64; 5] = [0.2, 0.1, 0.05, 0.025, 0.0125];
        let norms: Vec<f64> = eps.iter().map(|e| c * e.powf(k)).collect();
        let fit = fit_log_log(&eps, &norms).unwrap();
        prop_assert!((fit.slope - k).abs() < 1e-10);
        prop_assert!((fit.r_squared - 1.0).abs() < 1e-10);
    }

    #[test]
    fn scaled_mollifiers_have_unit_mass(p in -0.6f64..0.6, eps in 0.02f64..0.3, m in -0.5f64..0.5) {
        let chart = line();
        let at = Point::new(&[p]);
        let quad = Quadrature::new(1, 64, 4).unwrap();
        for profile in [BumpProfile::bump_sym(1).unwrap(), BumpProfile::bump_shift(1, m).unwrap(), BumpProfile::poly4(1).unwrap()] {
            let w = make_mollifier(&profile, &at, eps, &chart).unwrap();
            prop_assert!((w.integral(&quad) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn identity_diffeo_acts_trivially(p in -0.5f64..0.5, eps in 0.05f64..0.2) {
        let chart = line();
        let u = TensorDistribution::in_coordinate_basis(
            TensorType::COVECTOR,
            1,
            vec![ScalarDistribution::regular(SmoothMap::new(|q| 1.0 + q.coords()[0]))],
        ).unwrap();
        let t = embed_iota_distribution(&u);
        let moved = mu_hat(&Diffeo::identity(chart), &t);
        let at = Point::new(&[p]);
        let w = make_mollifier(&BumpProfile::bump_sym(1).unwrap(), &at, eps, &chart).unwrap();
        let a = TransportOperator::shear(&chart, 0.3);
        let l = t.eval(&w, &at, &a).unwrap().components()[0];
        let r = moved.eval(&w, &at, &a).unwrap().components()[0];
        prop_assert!((l - r).abs() <= 1e-13);
    }
}

#[test]
fn evaluation_rejects_mismatched_arguments() {
    let chart = line();
    let t = embed_sigma(&SmoothTensorField::scalar(1, SmoothMap::constant(1.0)));
    let at = Point::new(&[0.5]);
    let elsewhere = Point::new(&[0.0]);
    let w = make_mollifier(&BumpProfile::bump_sym(1).unwrap(), &elsewhere, 0.1, &chart).unwrap();
    // ω concentrated near 0 is still a valid argument at p = 0.5
    assert!(t.eval(&w, &at, &TransportOperator::identity_cut(&chart)).is_ok());
    let plane = Chart::cube(2, 1.0).unwrap();
    assert!(t.eval(&w, &at, &TransportOperator::identity_cut(&plane)).is_err());
}
