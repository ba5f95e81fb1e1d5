use std::sync::Arc;
use std::time::Instant;

use dasms::dns::{ad_dns, ad_grid, ks_dns, ks_grid, nls_dns, nls_grid, DnsConfig, DnsScheme, GridField};
use dasms::models::{ad_initial_condition, ks_initial_condition, GyreFlowConfig, NLS_DOMAIN_LENGTH};
use dasms::Point;
use num_complex::Complex64;

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

#[test]
fn nls_mass_conservation_and_focusing() {
    let grid = Arc::new(nls_grid(NLS_DOMAIN_LENGTH, 2048));
    let u0 = GridField::from_fn(grid, 0.0, |p: &Point| Complex64::new(0.2 * (-(p[0] * p[0]) / 400.0).exp(), 0.0));
    let times: Vec<f64> = (0..=300).map(|i| 0.5 * i as f64).collect();
    let start = Instant::now();
    let snaps = nls_dns(&u0, (0.0, 150.0), &DnsConfig::new(vec![2048], 0.025), &times).unwrap();
    eprintln!("nls dns: {:?}", start.elapsed());
    let mass = |f: &GridField<Complex64>| f.norm().powi(2);
    let m0 = mass(&snaps[0]);
    let worst = snaps.iter().map(|s| (mass(s) - m0).abs() / m0).fold(0.0, f64::max);
    assert!(worst < 1e-6, "mass drift {worst}");
    let centre = |f: &GridField<Complex64>| f.sample(&[0.0, 0.0]).norm();
    let peak = snaps.iter().map(centre).fold(0.0, f64::max);
    // converged peak is 1.88× the initial value at t ≈ 73.5
    assert!(peak > 1.8 * centre(&snaps[0]), "peak {peak}");
}

#[test]
fn ks_mean_conserved_and_bounded() {
    let grid = Arc::new(ks_grid(22.0, 128));
    let ic = ks_initial_condition(22.0);
    let u0 = GridField::from_fn(grid, 0.0, |p: &Point| ic(p[0]));
    let times: Vec<f64> = (0..=200).map(|i| 0.5 * i as f64).collect();
    let snaps = ks_dns(&u0, (0.0, 100.0), &DnsConfig::new(vec![128], 0.01), &times).unwrap();
    let mean = |f: &GridField<f64>| f.values.iter().sum::<f64>() / f.values.len() as f64;
    let m0 = mean(&snaps[0]);
    for s in &snaps {
        assert!((mean(s) - m0).abs() < 1e-8);
        assert!(s.norm() < 50.0);
    }
    // chaotic, so the norm must have grown well past the initial state
    assert!(snaps.iter().map(|s| s.norm()).fold(0.0, f64::max) > 2.0 * snaps[0].norm());
}

#[test]
fn ks_schemes_agree() {
    let grid = Arc::new(ks_grid(22.0, 128));
    let ic = ks_initial_condition(22.0);
    let u0 = GridField::from_fn(grid, 0.0, |p: &Point| ic(p[0]));
    let run = |scheme, dt| {
        let cfg = DnsConfig { modes: vec![128], dt, scheme };
        ks_dns(&u0, (0.0, 10.0), &cfg, &[10.0]).unwrap().pop().unwrap().values
    };
    let etd = run(DnsScheme::Etdrk4, 0.01);
    let etd_half = run(DnsScheme::Etdrk4, 0.005);
    let ifrk = run(DnsScheme::IfRk4, 0.001);
    assert!(rel_diff(&etd, &etd_half) < 1e-8);
    assert!(rel_diff(&ifrk, &etd_half) < 1e-6);
}

#[test]
fn ad_preset_self_convergence_and_boundaries() {
    let modes = vec![256, 64];
    let flow = GyreFlowConfig::default();
    let grid = Arc::new(ad_grid(4.0, 1.0, &modes));
    let ic = ad_initial_condition(4.0, 1.0);
    let u0 = GridField::from_fn(grid, 0.0, |p: &Point| ic(p[0], p[1]));
    let times: Vec<f64> = (0..=9).map(|i| 5.0 * i as f64).collect();
    let start = Instant::now();
    let coarse = ad_dns(&u0, (0.0, 45.0), &DnsConfig::new(modes.clone(), 0.01), &flow, 1e-3, &times).unwrap();
    eprintln!("ad dns: {:?}", start.elapsed());
    let fine = ad_dns(&u0, (0.0, 45.0), &DnsConfig::new(modes, 0.005), &flow, 1e-3, &[45.0]).unwrap();
    let d = rel_diff(&coarse.last().unwrap().values, &fine[0].values);
    assert!(d < 1e-5, "self-convergence {d}");

    let nzp = 65;
    for s in &coarse {
        for i in 0..=256 {
            assert!(s.values[i * nzp].abs() < 1e-6);
            assert!(s.values[i * nzp + 64].abs() < 1e-6);
        }
    }
}
