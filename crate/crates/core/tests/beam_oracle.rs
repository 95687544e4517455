//! Compares the beam model against values frozen from an independent
//! 50-digit evaluation (`tests/oracle/beam_oracle.py`).

use serde::Deserialize;
use whisker_core::beam::{self, BeamSpec, Excitation, SpringSpec};

#[derive(Deserialize)]
struct Probe {
    f_b_hz: f64,
    h_b_m: f64,
    x_m: f64,
    t_s: f64,
    y_m: f64,
}

#[derive(Deserialize)]
struct Golden {
    pitch_m: f64,
    mean_coil_radius_m: f64,
    wire_length_m: f64,
    coil_correction: f64,
    density_kg_m3: f64,
    area_m2: f64,
    bending_modulus_nm2: f64,
    displacement_probes: Vec<Probe>,
}

fn golden() -> Golden {
    let text = include_str!("golden/beam.json");
    serde_json::from_str(text).expect("golden file parses")
}

fn close(actual: f64, expected: f64, rel: f64) -> bool {
    (actual - expected).abs() <= rel * expected.abs()
}

#[test]
fn spring_conversion_matches_oracle() {
    let g = golden();
    let spring = SpringSpec::default();
    let beam = beam::spring_to_beam(&spring).unwrap();
    let pairs = [
        ("pitch", spring.pitch(), g.pitch_m),
        ("radius", spring.mean_coil_radius(), g.mean_coil_radius_m),
        ("wire length", spring.wire_length(), g.wire_length_m),
        (
            "coil correction",
            spring.coil_correction(),
            g.coil_correction,
        ),
        ("density", beam.density, g.density_kg_m3),
        ("area", beam.area, g.area_m2),
        ("EI", beam.bending_modulus, g.bending_modulus_nm2),
    ];
    for (name, actual, expected) in pairs {
        assert!(
            close(actual, expected, 1e-12),
            "{name}: {actual} vs {expected}"
        );
    }
}

#[test]
fn displacement_matches_oracle() {
    let g = golden();
    let beam = BeamSpec::default();
    assert!(g.displacement_probes.len() >= 50);
    let mut worst: f64 = 0.0;
    for p in &g.displacement_probes {
        let exc = Excitation::new(p.h_b_m, p.f_b_hz).unwrap();
        let y = beam::displacement(&beam, &exc, p.x_m, p.t_s).unwrap();
        let err = (y - p.y_m).abs() / p.y_m.abs();
        worst = worst.max(err);
        assert!(
            err < 1e-9,
            "f_b {} h_b {} x {} t {}: {y} vs {}",
            p.f_b_hz,
            p.h_b_m,
            p.x_m,
            p.t_s,
            p.y_m
        );
    }
    println!("worst relative error {worst:.2e}");
}

#[test]
fn series_samples_match_oracle_points() {
    // one probe re-derived through the sampled-series path
    let g = golden();
    let beam = BeamSpec::default();
    let p = g
        .displacement_probes
        .iter()
        .find(|p| p.t_s > 1.0)
        .expect("a late probe");
    let exc = Excitation::new(p.h_b_m, p.f_b_hz).unwrap();
    let s = beam::displacement_series(&beam, &exc, p.x_m, 1000.0, 0.01, p.t_s).unwrap();
    assert!(
        close(s.samples[0], p.y_m, 1e-9),
        "{} vs {}",
        s.samples[0],
        p.y_m
    );
}
