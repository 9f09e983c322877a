//! Metrics against brute-force oracles written from the definitions.

use gaptrace_core::geo::GeoPoint;
use gaptrace_core::metrics::{mae_f1, mae_gr, mae_rg, pot_f1, pot_gr, pot_rg};
use proptest::prelude::*;

const R: f64 = 6_371_000.0;

fn dist(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let (p1, p2) = (a.lat().to_radians(), b.lat().to_radians());
    let dp = p2 - p1;
    let dl = (b.lon() - a.lon()).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * R * h.sqrt().atan2((1.0 - h).max(0.0).sqrt())
}

fn seg_dist(p: &GeoPoint, a: &GeoPoint, b: &GeoPoint) -> f64 {
    let ends = dist(p, a).min(dist(p, b));
    if a == b {
        return ends;
    }
    let k = ((a.lat() + b.lat()) / 2.0).to_radians().cos();
    let (bx, by) = ((b.lon() - a.lon()) * k, b.lat() - a.lat());
    let (px, py) = ((p.lon() - a.lon()) * k, p.lat() - a.lat());
    let t = (px * bx + py * by) / (bx * bx + by * by);
    if t <= 0.0 || t >= 1.0 {
        return ends;
    }
    let foot = GeoPoint::new(a.lat() + t * by, a.lon() + t * (b.lon() - a.lon())).unwrap();
    dist(p, &foot).min(ends)
}

fn oracle_mae(from: &[GeoPoint], to: &[GeoPoint]) -> f64 {
    let len: f64 = from.windows(2).map(|w| dist(&w[0], &w[1])).sum();
    let mut total = 0.0;
    for p in from {
        total += to.iter().map(|q| dist(p, q)).fold(f64::INFINITY, f64::min);
    }
    total / (from.len() as f64 * len) * 100.0
}

fn oracle_hits(from: &[GeoPoint], to: &[GeoPoint], tau: f64) -> Vec<bool> {
    from.iter()
        .map(|p| {
            let d = if to.len() == 1 {
                dist(p, &to[0])
            } else {
                to.windows(2).map(|w| seg_dist(p, &w[0], &w[1])).fold(f64::INFINITY, f64::min)
            };
            d <= tau
        })
        .collect()
}

fn pot_from_hits(h: &[bool]) -> f64 {
    h.iter().filter(|x| **x).count() as f64 / h.len() as f64 * 100.0
}

fn cloud(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<GeoPoint>> {
    (-60.0f64..60.0, -170.0f64..170.0).prop_flat_map(move |(lat, lon)| {
        prop::collection::vec((-0.004f64..0.004, -0.004f64..0.004), n.clone()).prop_map(move |v| {
            v.into_iter()
                .map(|(dy, dx)| GeoPoint::new(lat + dy, lon + dx).unwrap())
                .collect()
        })
    })
}

/// Two trajectories sharing a neighbourhood.
fn pair() -> impl Strategy<Value = (Vec<GeoPoint>, Vec<GeoPoint>)> {
    (-60.0f64..60.0, -170.0f64..170.0).prop_flat_map(|(lat, lon)| {
        let side = move || {
            prop::collection::vec((-0.004f64..0.004, -0.004f64..0.004), 2..=50).prop_map(move |v| {
                v.into_iter()
                    .map(|(dy, dx)| GeoPoint::new(lat + dy, lon + dx).unwrap())
                    .collect::<Vec<_>>()
            })
        };
        (side(), side())
    })
}

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn equals_oracle((g, r) in pair(), tau in 1.0f64..300.0) {
        prop_assert!(rel_close(mae_gr(&g, &r).unwrap(), oracle_mae(&g, &r)));
        prop_assert!(rel_close(mae_rg(&r, &g).unwrap(), oracle_mae(&r, &g)));
        prop_assert_eq!(pot_gr(&g, &r, tau), pot_from_hits(&oracle_hits(&g, &r, tau)));
        prop_assert_eq!(pot_rg(&r, &g, tau), pot_from_hits(&oracle_hits(&r, &g, tau)));
    }

    #[test]
    fn identity(g in cloud(2..=40)) {
        prop_assume!(g.windows(2).any(|w| w[0] != w[1]));
        prop_assert_eq!(pot_f1(pot_gr(&g, &g, 10.0), pot_rg(&g, &g, 10.0)), 100.0);
        prop_assert_eq!(mae_f1(mae_gr(&g, &g).unwrap(), mae_rg(&g, &g).unwrap()), 0.0);
    }

    #[test]
    fn pot_monotone_in_tau((g, r) in pair(), t1 in 0.1f64..200.0, extra in 0.0f64..200.0) {
        let t2 = t1 + extra;
        prop_assert!(pot_gr(&g, &r, t1) <= pot_gr(&g, &r, t2));
        prop_assert!(pot_rg(&r, &g, t1) <= pot_rg(&r, &g, t2));
    }

    #[test]
    fn reversal_invariant((g, r) in pair(), tau in 1.0f64..100.0) {
        let rev: Vec<GeoPoint> = r.iter().rev().copied().collect();
        prop_assert_eq!(pot_gr(&g, &r, tau), pot_gr(&g, &rev, tau));
        prop_assert_eq!(pot_rg(&r, &g, tau), pot_rg(&rev, &g, tau));
        prop_assert!(rel_close(mae_gr(&g, &r).unwrap(), mae_gr(&g, &rev).unwrap()));
        prop_assert!(rel_close(mae_rg(&r, &g).unwrap(), mae_rg(&rev, &g).unwrap()));
    }

    #[test]
    fn percents_in_range((g, r) in pair(), tau in 0.1f64..500.0) {
        for v in [pot_gr(&g, &r, tau), pot_rg(&r, &g, tau)] {
            prop_assert!((0.0..=100.0).contains(&v));
        }
    }
}

/// Densifying R with collinear midpoints leaves pot_gr alone but moves mae_gr.
#[test]
fn densify_asymmetry() {
    let deg = 1.0 / (R.to_radians());
    let g: Vec<GeoPoint> = (0..=10)
        .map(|i| GeoPoint::new(0.0, i as f64 * 50.0 * deg).unwrap())
        .collect();
    let off = 4.0 * deg;
    let r = vec![
        GeoPoint::new(off, 0.0).unwrap(),
        GeoPoint::new(off, 500.0 * deg).unwrap(),
    ];
    let mut dense = vec![r[0]];
    for i in 1..=8 {
        dense.push(GeoPoint::new(off, 500.0 * deg * i as f64 / 8.0).unwrap());
    }
    for tau in [1.0, 5.0, 10.0] {
        assert_eq!(pot_gr(&g, &r, tau), pot_gr(&g, &dense, tau));
    }
    assert!(mae_gr(&g, &dense).unwrap() < mae_gr(&g, &r).unwrap() - 1.0);
}
