use noma_mec::noma_phy::{powers_from_demands, shannon_rates, sum_rate_from_j, Link};
use proptest::prelude::*;

fn link() -> Link {
    Link::new(10e6, 10f64.powf(-16.9) / 1e3)
}

// strongest first, as the SIC order requires
fn sorted_gains(raw: Vec<f64>) -> Vec<f64> {
    let mut g: Vec<f64> = raw.into_iter().map(|e| 10f64.powf(-e)).collect();
    g.sort_by(|a, b| b.total_cmp(a));
    g
}

fn group() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64)> {
    (1usize..=4)
        .prop_flat_map(|m| {
            (
                prop::collection::vec(0.0f64..2e5, m),
                prop::collection::vec(9.0f64..14.0, m),
                1e-3f64..0.1,
            )
        })
        .prop_map(|(d, e, t)| (d, sorted_gains(e), t))
}

proptest! {
    #[test]
    fn demands_round_trip((d, h, t) in group()) {
        let p = powers_from_demands(&d, t, &h, link()).unwrap();
        let r = shannon_rates(&p, &h, link());
        for (rj, dj) in r.iter().zip(&d) {
            prop_assert!((rj * t - dj).abs() <= 1e-9 * dj.max(1.0), "{} vs {}", rj * t, dj);
        }
    }

    #[test]
    fn suffix_rates_telescope((d, h, t) in group()) {
        let p = powers_from_demands(&d, t, &h, link()).unwrap();
        let r = shannon_rates(&p, &h, link());
        for j in 0..d.len() {
            let direct: f64 = r[j..].iter().sum();
            let closed = sum_rate_from_j(&p, &h, link(), j).unwrap();
            prop_assert!((direct - closed).abs() <= 1e-12 * closed.max(1.0));
        }
    }

    #[test]
    fn powers_fall_with_airtime((d, h, t) in group(), stretch in 1.01f64..10.0) {
        let short = powers_from_demands(&d, t, &h, link()).unwrap();
        let long = powers_from_demands(&d, t * stretch, &h, link()).unwrap();
        let total = |p: &[f64]| p.iter().sum::<f64>();
        prop_assert!(total(&long) <= total(&short) * (1.0 + 1e-12));
    }

    #[test]
    fn powers_rise_with_demand((d, h, t) in group(), extra in 1.0f64..1e4, k in 0usize..4) {
        let k = k % d.len();
        let mut more = d.clone();
        more[k] += extra;
        let base = powers_from_demands(&d, t, &h, link()).unwrap();
        let up = powers_from_demands(&more, t, &h, link()).unwrap();
        prop_assert!(up.iter().sum::<f64>() > base.iter().sum::<f64>());
    }
}

#[test]
fn zero_demand_needs_no_power() {
    let h = [1e-9, 1e-11];
    assert_eq!(powers_from_demands(&[0.0, 0.0], 1e-2, &h, link()).unwrap(), vec![0.0, 0.0]);
    assert!(sum_rate_from_j(&[1.0], &[1.0], link(), 1).is_err());
}
