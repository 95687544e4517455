//! Base-excited equivalent cantilever beam.
//!
//! The whisker is a coil spring clamped at its base. Its dynamics are
//! approximated by a straight, uniform Euler-Bernoulli cantilever whose
//! density is corrected for the coil geometry ([`spring_to_beam`]). The beam
//! response to a sinusoidal base motion `y_b = h_b sin(w_b t)` is a closed-form
//! sum over the first five cantilever modes ([`displacement`]).
//!
//! Everything here is SI: meters, seconds, Hz, kg/m^3, Pa.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::exec::{self, Execution};
use crate::signal;
use crate::{Error, Result};

/// Roots of the cantilever characteristic equation for the first five modes.
pub const CANTILEVER_MODE_CONSTANTS: [f64; 5] = [1.8751, 4.6941, 7.8548, 10.9955, 14.137];

/// Modal damping ratio of the stainless-steel wire.
pub const DEFAULT_MODAL_DAMPING: f64 = 0.04;

/// Number of slowest-mode time constants after which the response is treated
/// as steady state. At 15 constants the transient is below 1e-6 of the
/// steady amplitude.
pub const STEADY_STATE_TIME_CONSTANTS: f64 = 15.0;

/// Above this magnitude the mode shape switches to its exponential form.
const MODE_SHAPE_STABLE_THRESHOLD: f64 = 1e12;

/// Geometry and material of the whisker's coil spring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpringSpec {
    pub free_length: f64,
    pub wire_radius: f64,
    pub outer_diameter: f64,
    pub inner_diameter: f64,
    pub coil_count: u32,
    pub wire_density: f64,
    pub wire_shear_modulus: f64,
}

impl Default for SpringSpec {
    fn default() -> Self {
        Self {
            free_length: 60e-3,
            wire_radius: 0.5e-3,
            outer_diameter: 10e-3,
            inner_diameter: 8e-3,
            coil_count: 13,
            wire_density: 8050.0,
            wire_shear_modulus: 70e9,
        }
    }
}

impl SpringSpec {
    pub fn validate(&self) -> Result<()> {
        positive("free_length", self.free_length)?;
        positive("wire_radius", self.wire_radius)?;
        positive("outer_diameter", self.outer_diameter)?;
        positive("inner_diameter", self.inner_diameter)?;
        positive("wire_density", self.wire_density)?;
        positive("wire_shear_modulus", self.wire_shear_modulus)?;
        if self.inner_diameter >= self.outer_diameter {
            return Err(Error::physics(
                "inner_diameter",
                format!(
                    "must be smaller than outer_diameter ({} >= {})",
                    self.inner_diameter, self.outer_diameter
                ),
            ));
        }
        if self.coil_count == 0 {
            return Err(Error::physics("coil_count", "must be at least 1"));
        }
        Ok(())
    }

    /// Axial distance between consecutive coils.
    pub fn pitch(&self) -> f64 {
        self.free_length / f64::from(self.coil_count)
    }

    /// Mean of the inner and outer coil radii.
    pub fn mean_coil_radius(&self) -> f64 {
        (self.outer_diameter + self.inner_diameter) / 4.0
    }

    /// Unwound length of the wire.
    pub fn wire_length(&self) -> f64 {
        helix_length(self.coil_count, self.pitch(), self.mean_coil_radius())
    }

    pub fn coil_correction(&self) -> f64 {
        coil_correction(self.coil_count, self.pitch(), self.mean_coil_radius())
    }
}

fn helix_length(coils: u32, pitch: f64, radius: f64) -> f64 {
    f64::from(coils) * (2.0 * PI * radius).hypot(pitch)
}

/// Ratio of wire length to axial length for a helix. Equals 1 for a straight
/// wire (zero coil radius).
pub fn coil_correction(coils: u32, pitch: f64, radius: f64) -> f64 {
    helix_length(coils, pitch, radius) / (f64::from(coils) * pitch)
}

/// Equivalent straight cantilever.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamSpec {
    pub length: f64,
    pub area: f64,
    /// Coil-corrected wire density, kg/m^3. `area * density` is the mass per
    /// unit length of the equivalent beam.
    pub density: f64,
    /// Bending stiffness E*I, N*m^2.
    pub bending_modulus: f64,
    pub damping: f64,
    pub mode_constants: [f64; 5],
}

impl BeamSpec {
    pub fn validate(&self) -> Result<()> {
        positive("length", self.length)?;
        positive("area", self.area)?;
        positive("density", self.density)?;
        positive("bending_modulus", self.bending_modulus)?;
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(Error::physics(
                "damping",
                format!("modal damping must lie in (0, 1), got {}", self.damping),
            ));
        }
        for &d in &self.mode_constants {
            positive("mode_constants", d)?;
        }
        Ok(())
    }

    /// sqrt(EI / (a rho)), m^2/s.
    pub fn flexural_rate(&self) -> f64 {
        (self.bending_modulus / (self.area * self.density)).sqrt()
    }

    /// Undamped natural frequency of mode `i` (0-based), rad/s.
    pub fn natural_frequency(&self, i: usize) -> f64 {
        let d = self.mode_constants[i];
        d * d * self.flexural_rate() / (self.length * self.length)
    }

    /// Exponential decay rate of mode `i`, 1/s.
    pub fn decay_rate(&self, i: usize) -> f64 {
        self.damping * self.natural_frequency(i)
    }

    /// Longest modal decay time constant, s.
    pub fn time_constant(&self) -> f64 {
        (0..self.mode_constants.len())
            .map(|i| 1.0 / self.decay_rate(i))
            .fold(0.0, f64::max)
    }

    /// Start time at which the response is treated as steady state.
    pub fn steady_state_start(&self) -> f64 {
        STEADY_STATE_TIME_CONSTANTS * self.time_constant()
    }
}

impl Default for BeamSpec {
    fn default() -> Self {
        spring_to_beam(&SpringSpec::default()).expect("default spring is valid")
    }
}

/// Builds the equivalent beam for a coil spring.
///
/// The bending stiffness is taken equal to the wire's torsional stiffness
/// `G_w * J_w`, and the density is scaled by the coil correction factor.
pub fn spring_to_beam(spring: &SpringSpec) -> Result<BeamSpec> {
    spring.validate()?;
    let r4 = spring.wire_radius.powi(4);
    Ok(BeamSpec {
        length: spring.free_length,
        area: PI * spring.wire_radius * spring.wire_radius,
        density: spring.coil_correction() * spring.wire_density,
        bending_modulus: spring.wire_shear_modulus * PI * r4 / 4.0,
        damping: DEFAULT_MODAL_DAMPING,
        mode_constants: CANTILEVER_MODE_CONSTANTS,
    })
}

/// One sinusoidal base-excitation component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Excitation {
    /// Base amplitude h_b, m.
    pub amplitude: f64,
    /// Base frequency f_b, Hz.
    pub frequency: f64,
}

impl Excitation {
    pub fn new(amplitude: f64, frequency: f64) -> Result<Self> {
        let exc = Self {
            amplitude,
            frequency,
        };
        exc.validate()?;
        Ok(exc)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::physics(
                "amplitude",
                format!("must be finite and >= 0, got {}", self.amplitude),
            ));
        }
        positive("frequency", self.frequency)
    }

    pub fn angular_frequency(&self) -> f64 {
        2.0 * PI * self.frequency
    }
}

/// Uniformly sampled signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
    pub start_time: f64,
}

impl TimeSeries {
    pub fn new(samples: Vec<f64>, sample_rate: f64, start_time: f64) -> Result<Self> {
        positive("sample_rate", sample_rate)?;
        if samples.is_empty() {
            return Err(Error::Empty("time series samples"));
        }
        Ok(Self {
            samples,
            sample_rate,
            start_time,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time_at(&self, k: usize) -> f64 {
        self.start_time + k as f64 / self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }
}

/// The four factors of one mode's contribution, `-(A B C) / D`, exactly as
/// the closed form groups them.
///
/// `a` carries `exp(-s t)` and `c` carries `exp(+s t)`; both overflow past a
/// few hundred decay constants, so the evaluator in [`displacement`] folds the
/// exponentials together instead of multiplying these directly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeFactors {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl ModeFactors {
    pub fn term(&self) -> f64 {
        -(self.a * self.b * self.c / self.d)
    }
}

/// Mode-dependent pieces that do not depend on x, t or the excitation.
struct ModeConstants {
    d: f64,
    /// (cos D - 1)(cosh D - 1)(cos D + cosh D)
    forcing_shape: f64,
    /// (sin D + sinh D) / (cos D + cosh D)
    shape_ratio: f64,
    /// D^4 EI sqrt(1 - z^2) (...)
    normalization: f64,
    /// D^2 sqrt(EI/(a rho)) / l^2
    rate: f64,
}

impl ModeConstants {
    fn new(beam: &BeamSpec, i: usize) -> Self {
        let d = beam.mode_constants[i];
        let (s, c) = d.sin_cos();
        let (sh, ch) = (d.sinh(), d.cosh());
        let root = (1.0 - beam.damping * beam.damping).sqrt();
        let bracket =
            3.0 * sh * c * c * ch - d * c * c - 3.0 * s * c * ch * ch + 3.0 * sh * c + d * ch * ch
                - 3.0 * s * ch
                + 2.0 * d * s * sh;
        Self {
            d,
            forcing_shape: (c - 1.0) * (ch - 1.0) * (c + ch),
            shape_ratio: (s + sh) / (c + ch),
            normalization: d.powi(4) * beam.bending_modulus * root * bracket,
            rate: d * d * beam.flexural_rate() / (beam.length * beam.length),
        }
    }

    /// sinh(z) - sin(z) + (cos(z) - cosh(z)) * shape_ratio, with z = D x / l.
    fn shape(&self, z: f64) -> f64 {
        if z.cosh() <= MODE_SHAPE_STABLE_THRESHOLD {
            z.sinh() - z.sin() + (z.cos() - z.cosh()) * self.shape_ratio
        } else {
            mode_shape_exponential(self.d, z)
        }
    }
}

/// Mode shape for large arguments. sinh(z) - cosh(z) * ratio cancels
/// catastrophically there, so the e^z part is carried with the exact
/// `1 - ratio` and `1 + ratio` coefficients.
fn mode_shape_exponential(d: f64, z: f64) -> f64 {
    let (s, c) = d.sin_cos();
    let denom = c + d.cosh();
    let ratio = (s + d.sinh()) / denom;
    // 1 - ratio = (cos D - sin D + e^-D) / (cos D + cosh D)
    let one_minus = (c - s + (-d).exp()) / denom;
    let growing = 0.5 * (z - d).exp() * one_minus * d.exp();
    let decaying = -0.5 * (-z).exp() * (1.0 + ratio);
    growing + decaying - z.sin() + z.cos() * ratio
}

/// Verbatim factors of mode `i` (0-based). See [`ModeFactors`].
pub fn mode_factors(beam: &BeamSpec, exc: &Excitation, i: usize, x: f64, t: f64) -> ModeFactors {
    let m = ModeConstants::new(beam, i);
    let wb = exc.angular_frequency();
    let zeta = beam.damping;
    let root = (1.0 - zeta * zeta).sqrt();
    let l = beam.length;
    let decay = m.rate * zeta * t;
    let a = 2.0
        * beam.area
        * exc.amplitude
        * l.powi(4)
        * wb
        * wb
        * beam.density
        * (-decay).exp()
        * (wb * t).sin()
        * m.forcing_shape;
    // The growing exp(+decay) here cancels the decaying factor in `a` only for
    // this one sub-term; the remaining two sub-terms decay. Kept as printed.
    let damped = m.rate * root * t;
    let c = zeta * damped.sin() - decay.exp() * root + damped.cos() * root;
    ModeFactors {
        a,
        b: m.shape(m.d * x / l),
        c,
        d: m.normalization,
    }
}

/// Contribution of each of the five modes to y(x, t).
pub fn mode_terms(beam: &BeamSpec, exc: &Excitation, x: f64, t: f64) -> Result<[f64; 5]> {
    check_point(beam, exc, x, t)?;
    let consts: Vec<ModeConstants> = (0..5).map(|i| ModeConstants::new(beam, i)).collect();
    let mut out = [0.0; 5];
    for (o, m) in out.iter_mut().zip(&consts) {
        *o = mode_term(beam, exc, m, x, t);
    }
    Ok(out)
}

/// `-(A B C) / D` with `A = A' e^{-s}` and `C e^{-s}` folded together, so
/// the product stays finite for any t.
fn mode_term(beam: &BeamSpec, exc: &Excitation, m: &ModeConstants, x: f64, t: f64) -> f64 {
    let wb = exc.angular_frequency();
    let zeta = beam.damping;
    let root = (1.0 - zeta * zeta).sqrt();
    let l = beam.length;
    let a_undamped = 2.0
        * beam.area
        * exc.amplitude
        * l.powi(4)
        * wb
        * wb
        * beam.density
        * (wb * t).sin()
        * m.forcing_shape;
    let b = m.shape(m.d * x / l);
    let decay = (-(m.rate * zeta * t)).exp();
    let damped = m.rate * root * t;
    let c_scaled = decay * (zeta * damped.sin() + damped.cos() * root) - root;
    -(a_undamped * b * c_scaled / m.normalization)
}

fn check_point(beam: &BeamSpec, exc: &Excitation, x: f64, t: f64) -> Result<()> {
    beam.validate()?;
    exc.validate()?;
    if !(0.0..=beam.length).contains(&x) {
        return Err(Error::OutsideBeam {
            x,
            length: beam.length,
        });
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::physics("t", format!("time must be >= 0, got {t}")));
    }
    Ok(())
}

/// Beam displacement y(x, t) relative to the base, summed over five modes.
pub fn displacement(beam: &BeamSpec, exc: &Excitation, x: f64, t: f64) -> Result<f64> {
    check_point(beam, exc, x, t)?;
    Ok(Evaluator::new(beam, exc).at(x, t))
}

/// Precomputed modal constants for repeated evaluation at one excitation.
struct Evaluator<'a> {
    beam: &'a BeamSpec,
    exc: &'a Excitation,
    modes: Vec<ModeConstants>,
}

impl<'a> Evaluator<'a> {
    fn new(beam: &'a BeamSpec, exc: &'a Excitation) -> Self {
        let modes = (0..beam.mode_constants.len())
            .map(|i| ModeConstants::new(beam, i))
            .collect();
        Self { beam, exc, modes }
    }

    fn at(&self, x: f64, t: f64) -> f64 {
        self.modes
            .iter()
            .map(|m| mode_term(self.beam, self.exc, m, x, t))
            .sum()
    }
}

/// Samples y(x_s, t) at `t0 + k / sample_rate` for `k < sample_rate * duration`.
pub fn displacement_series(
    beam: &BeamSpec,
    exc: &Excitation,
    x_s: f64,
    sample_rate: f64,
    duration: f64,
    t0: f64,
) -> Result<TimeSeries> {
    positive("duration", duration)?;
    positive("sample_rate", sample_rate)?;
    check_point(beam, exc, x_s, t0)?;
    check_nyquist(exc.frequency, sample_rate)?;
    let n = sample_count(sample_rate, duration)?;
    let eval = Evaluator::new(beam, exc);
    let samples = (0..n)
        .map(|k| eval.at(x_s, t0 + k as f64 / sample_rate))
        .collect();
    TimeSeries::new(samples, sample_rate, t0)
}

pub(crate) fn check_nyquist(frequency: f64, sample_rate: f64) -> Result<()> {
    if sample_rate <= 2.0 * frequency {
        return Err(Error::Nyquist {
            frequency,
            sample_rate,
        });
    }
    Ok(())
}

pub(crate) fn sample_count(sample_rate: f64, duration: f64) -> Result<usize> {
    let n = (sample_rate * duration).round();
    if n < 1.0 {
        return Err(Error::physics(
            "duration",
            format!("{duration} s at {sample_rate} Hz yields no samples"),
        ));
    }
    Ok(n as usize)
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::physics(
            name,
            format!("must be finite and > 0, got {value}"),
        ))
    }
}

/// Peak displacement and dominant frequency over an excitation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSurface {
    pub f_b_grid: Vec<f64>,
    pub h_b_grid: Vec<f64>,
    /// `y_max[i][j]` for `f_b_grid[i]`, `h_b_grid[j]`.
    pub y_max: Vec<Vec<f64>>,
    pub f_dominant: Vec<Vec<f64>>,
    /// Frequency resolution of the transform used for `f_dominant`.
    pub bin_width: f64,
}

/// One row of the sweep CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell {
    pub f_b: f64,
    pub h_b: f64,
    pub y_max: f64,
    pub f_dominant: f64,
}

impl SweepSurface {
    /// Cells in row-major order over the f_b grid.
    pub fn cells(&self) -> impl Iterator<Item = SweepCell> + '_ {
        self.f_b_grid.iter().enumerate().flat_map(move |(i, &f_b)| {
            self.h_b_grid
                .iter()
                .enumerate()
                .map(move |(j, &h_b)| SweepCell {
                    f_b,
                    h_b,
                    y_max: self.y_max[i][j],
                    f_dominant: self.f_dominant[i][j],
                })
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["f_b_hz", "h_b_m", "y_max_m", "f_dom_hz"])?;
        for cell in self.cells() {
            w.write_record([
                cell.f_b.to_string(),
                cell.h_b.to_string(),
                cell.y_max.to_string(),
                cell.f_dominant.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Evaluates every (f_b, h_b) cell on a steady-state window starting at
/// [`BeamSpec::steady_state_start`].
pub fn modal_sweep(
    beam: &BeamSpec,
    f_b_grid: &[f64],
    h_b_grid: &[f64],
    x_s: f64,
    sample_rate: f64,
    duration: f64,
) -> Result<SweepSurface> {
    modal_sweep_with(
        Execution::default(),
        beam,
        f_b_grid,
        h_b_grid,
        x_s,
        sample_rate,
        duration,
    )
}

pub fn modal_sweep_with(
    exec: Execution,
    beam: &BeamSpec,
    f_b_grid: &[f64],
    h_b_grid: &[f64],
    x_s: f64,
    sample_rate: f64,
    duration: f64,
) -> Result<SweepSurface> {
    if f_b_grid.is_empty() {
        return Err(Error::Empty("f_b grid"));
    }
    if h_b_grid.is_empty() {
        return Err(Error::Empty("h_b grid"));
    }
    beam.validate()?;
    for &f in f_b_grid {
        check_nyquist(f, sample_rate)?;
    }
    let t0 = beam.steady_state_start();
    let cells: Vec<(f64, f64)> = f_b_grid
        .iter()
        .flat_map(|&f| h_b_grid.iter().map(move |&h| (f, h)))
        .collect();
    let results = exec::try_map(exec, &cells, |&(f_b, h_b)| {
        let exc = Excitation::new(h_b, f_b)?;
        let series = displacement_series(beam, &exc, x_s, sample_rate, duration, t0)?;
        let y_max = series.samples.iter().fold(0.0_f64, |m, y| m.max(y.abs()));
        let spectrum = signal::fft_magnitude(&series.samples, sample_rate)?;
        let f_dom = signal::dominant_frequency(&spectrum)?;
        Ok((y_max, f_dom, spectrum.bin_width))
    })?;
    let cols = h_b_grid.len();
    let y_max = results
        .chunks(cols)
        .map(|row| row.iter().map(|r| r.0).collect())
        .collect();
    let f_dominant = results
        .chunks(cols)
        .map(|row| row.iter().map(|r| r.1).collect())
        .collect();
    Ok(SweepSurface {
        f_b_grid: f_b_grid.to_vec(),
        h_b_grid: h_b_grid.to_vec(),
        y_max,
        f_dominant,
        bin_width: results[0].2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn exc(h_mm: f64, f: f64) -> Excitation {
        Excitation::new(h_mm * 1e-3, f).unwrap()
    }

    #[test]
    fn default_spring_pitch() {
        let s = SpringSpec::default();
        assert_relative_eq!(s.pitch(), 60e-3 / 13.0, max_relative = 1e-15);
        assert_relative_eq!(s.pitch(), 4.6154e-3, max_relative = 1e-4);
        assert_relative_eq!(s.mean_coil_radius(), 4.5e-3, max_relative = 1e-15);
    }

    #[test]
    fn straight_wire_has_unit_correction() {
        assert_relative_eq!(coil_correction(1, 0.06, 0.0), 1.0, max_relative = 1e-15);
        let wire = SpringSpec {
            coil_count: 1,
            outer_diameter: 2e-12,
            inner_diameter: 1e-12,
            ..SpringSpec::default()
        };
        let beam = spring_to_beam(&wire).unwrap();
        assert_relative_eq!(beam.density, wire.wire_density, max_relative = 1e-12);
    }

    #[test]
    fn rejects_bad_geometry() {
        let bad = [
            SpringSpec {
                free_length: 0.0,
                ..Default::default()
            },
            SpringSpec {
                wire_radius: -1e-3,
                ..Default::default()
            },
            SpringSpec {
                inner_diameter: 10e-3,
                ..Default::default()
            },
            SpringSpec {
                coil_count: 0,
                ..Default::default()
            },
        ];
        for s in bad {
            assert!(
                matches!(spring_to_beam(&s), Err(Error::Physics { .. })),
                "{s:?}"
            );
        }
    }

    #[test]
    fn zero_amplitude_gives_zero_displacement() {
        let beam = BeamSpec::default();
        for &(x, t) in &[(0.005, 0.1), (0.06, 0.37), (0.03, 2.5)] {
            assert_eq!(displacement(&beam, &exc(0.0, 120.0), x, t).unwrap(), 0.0);
        }
    }

    #[test]
    fn clamped_base_does_not_move() {
        let beam = BeamSpec::default();
        for t in [0.0, 0.001, 0.3, 1.7, 40.0] {
            let y = displacement(&beam, &exc(0.3, 300.0), 0.0, t).unwrap();
            assert!(y.abs() < 1e-18, "y(0,{t}) = {y}");
        }
    }

    #[test]
    fn rejects_points_off_the_beam() {
        let beam = BeamSpec::default();
        let e = exc(0.1, 100.0);
        assert!(matches!(
            displacement(&beam, &e, -1e-6, 0.1),
            Err(Error::OutsideBeam { .. })
        ));
        assert!(matches!(
            displacement(&beam, &e, 0.0601, 0.1),
            Err(Error::OutsideBeam { .. })
        ));
        assert!(displacement(&beam, &e, 0.01, -0.1).is_err());
    }

    #[test]
    fn rejects_overdamped_beam() {
        let beam = BeamSpec {
            damping: 1.0,
            ..BeamSpec::default()
        };
        assert!(matches!(
            displacement(&beam, &exc(0.1, 100.0), 0.005, 0.1),
            Err(Error::Physics {
                name: "damping",
                ..
            })
        ));
    }

    #[test]
    fn folded_product_matches_verbatim_factors() {
        let beam = BeamSpec::default();
        let e = exc(0.3, 100.0);
        for &(x, t) in &[(0.005, 0.0123), (0.03, 0.2), (0.06, 0.51)] {
            let verbatim: f64 = (0..5)
                .map(|i| mode_factors(&beam, &e, i, x, t).term())
                .sum();
            let folded = displacement(&beam, &e, x, t).unwrap();
            assert_relative_eq!(verbatim, folded, max_relative = 1e-10);
        }
    }

    #[test]
    fn late_time_is_finite() {
        let beam = BeamSpec::default();
        let e = exc(0.3, 300.0);
        let (i, x, t) = (4, 0.005, 5.0);
        let f = mode_factors(&beam, &e, i, x, t);
        assert!(!f.term().is_finite(), "verbatim grouping overflows: {f:?}");
        let y = displacement(&beam, &e, x, t).unwrap();
        assert!(y.is_finite());
    }

    #[test]
    fn stable_mode_shape_agrees_with_direct_form() {
        for &d in &[14.137, 20.0, 25.0] {
            let m = ModeConstants {
                d,
                forcing_shape: 0.0,
                shape_ratio: (d.sin() + d.sinh()) / (d.cos() + d.cosh()),
                normalization: 1.0,
                rate: 1.0,
            };
            for frac in [0.3, 0.7, 1.0] {
                let z = d * frac;
                let direct = z.sinh() - z.sin() + (z.cos() - z.cosh()) * m.shape_ratio;
                let stable = mode_shape_exponential(d, z);
                // cantilever tip shape is 2 in magnitude; cancellation error
                // in the direct form grows like cosh(z) * eps
                let tol = 1e-14 * z.cosh() + 1e-12;
                assert!(
                    (direct - stable).abs() < tol,
                    "d={d} z={z} {direct} {stable}"
                );
            }
        }
    }

    #[test]
    fn series_sample_count_and_nyquist() {
        let beam = BeamSpec::default();
        let s = displacement_series(&beam, &exc(0.1, 100.0), 0.005, 1000.0, 1.0, 0.0).unwrap();
        assert_eq!(s.len(), 1000);
        assert!(matches!(
            displacement_series(&beam, &exc(0.1, 100.0), 0.005, 200.0, 1.0, 0.0),
            Err(Error::Nyquist { .. })
        ));
        assert!(displacement_series(&beam, &exc(0.1, 100.0), 0.005, 1000.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn series_matches_pointwise_evaluation() {
        let beam = BeamSpec::default();
        let e = exc(0.2, 150.0);
        let s = displacement_series(&beam, &e, 0.005, 1000.0, 0.05, 0.3).unwrap();
        for (k, &y) in s.samples.iter().enumerate() {
            assert_eq!(y, displacement(&beam, &e, 0.005, s.time_at(k)).unwrap());
        }
    }

    #[test]
    fn steady_state_is_periodic() {
        let beam = BeamSpec::default();
        let t0 = beam.steady_state_start();
        for f_b in [100.0, 300.0] {
            let e = exc(0.1, f_b);
            let rate = 20.0 * f_b;
            let s = displacement_series(&beam, &e, 0.005, rate, 0.25, t0).unwrap();
            let y_max = s.samples.iter().fold(0.0_f64, |m, y| m.max(y.abs()));
            let period = 1.0 / f_b;
            let worst = (0..s.len())
                .map(|k| {
                    let t = s.time_at(k);
                    (s.samples[k] - displacement(&beam, &e, 0.005, t + period).unwrap()).abs()
                })
                .fold(0.0_f64, f64::max);
            assert!(worst < 1e-6 * y_max, "f_b={f_b}: {worst:e} vs {y_max:e}");
        }
    }

    #[test]
    fn higher_modes_contribute_less_than_the_first() {
        let beam = BeamSpec::default();
        for f_b in [50.0, 100.0, 200.0, 300.0] {
            let e = exc(0.1, f_b);
            for k in 0..40 {
                let t = 0.0137 + k as f64 * 0.0213;
                let terms = mode_terms(&beam, &e, 0.005, t).unwrap();
                if terms[0] != 0.0 {
                    assert!(terms[4].abs() < terms[0].abs(), "f_b={f_b} t={t} {terms:?}");
                }
            }
        }
    }

    #[test]
    fn sweep_rejects_empty_grids() {
        let beam = BeamSpec::default();
        assert!(modal_sweep(&beam, &[], &[1e-4], 0.005, 1000.0, 1.0).is_err());
        assert!(modal_sweep(&beam, &[100.0], &[], 0.005, 1000.0, 1.0).is_err());
        assert!(matches!(
            modal_sweep(&beam, &[100.0, 600.0], &[1e-4], 0.005, 1000.0, 1.0),
            Err(Error::Nyquist { .. })
        ));
    }

    #[test]
    fn sweep_csv_layout() {
        let beam = BeamSpec::default();
        let s = modal_sweep(
            &beam,
            &[100.0, 200.0],
            &[1e-4, 2e-4, 3e-4],
            0.005,
            1000.0,
            1.0,
        )
        .unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "f_b_hz,h_b_m,y_max_m,f_dom_hz");
        assert_eq!(lines.len(), 7);
        assert!(lines[1].starts_with("100,0.0001,"));
        assert!(lines[3].starts_with("100,0.0003,"));
        assert!(lines[4].starts_with("200,0.0001,"));
    }
}
