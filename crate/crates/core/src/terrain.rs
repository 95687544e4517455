//! Synthetic terrain excitation.
//!
//! Each terrain is a set of spatial wavelengths with amplitudes. A robot
//! moving at speed `v` turns wavelength `lambda` into a base excitation at
//! `f_b = v / lambda`; the sensor signal is the superposed beam response to
//! every component plus white Gaussian noise.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::beam::{self, BeamSpec, Excitation, TimeSeries};
use crate::{Error, Result};

/// The seven terrain classes, ids 1..=7.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TerrainClass {
    Flat,
    Cement,
    Brick,
    Carpet,
    SoftGrass,
    Sand,
    SoftSoil,
}

impl TerrainClass {
    pub const ALL: [TerrainClass; 7] = [
        TerrainClass::Flat,
        TerrainClass::Cement,
        TerrainClass::Brick,
        TerrainClass::Carpet,
        TerrainClass::SoftGrass,
        TerrainClass::Sand,
        TerrainClass::SoftSoil,
    ];

    pub const COUNT: usize = 7;

    pub fn id(self) -> u8 {
        self as u8 + 1
    }

    /// 0-based class index, as used by the classifier.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(usize::from(id).checked_sub(1)?).copied()
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            TerrainClass::Flat => "flat",
            TerrainClass::Cement => "cement",
            TerrainClass::Brick => "brick",
            TerrainClass::Carpet => "carpet",
            TerrainClass::SoftGrass => "soft-grass",
            TerrainClass::Sand => "sand",
            // also reported as "asphalt" in some write-ups of the same data
            TerrainClass::SoftSoil => "soft-soil",
        }
    }
}

impl fmt::Display for TerrainClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TerrainClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown terrain `{s}`")))
    }
}

impl Serialize for TerrainClass {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for TerrainClass {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileComponent {
    #[serde(rename = "lambda_m")]
    pub wavelength: f64,
    #[serde(rename = "h_m")]
    pub amplitude: f64,
    /// Upper bound of the uniform phase offset drawn per run.
    #[serde(rename = "jitter_rad")]
    pub phase_jitter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralProfile {
    pub components: Vec<ProfileComponent>,
    /// Std of the additive white noise on the displacement signal, m.
    #[serde(rename = "noise_floor_m")]
    pub noise_floor: f64,
}

impl SpectralProfile {
    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::Config("terrain profile has no components".into()));
        }
        for c in &self.components {
            if !(c.wavelength > 0.0 && c.wavelength.is_finite()) {
                return Err(Error::physics(
                    "lambda_m",
                    format!("must be > 0, got {}", c.wavelength),
                ));
            }
            if !(c.amplitude >= 0.0 && c.amplitude.is_finite()) {
                return Err(Error::physics(
                    "h_m",
                    format!("must be >= 0, got {}", c.amplitude),
                ));
            }
            if !(c.phase_jitter >= 0.0 && c.phase_jitter.is_finite()) {
                return Err(Error::physics(
                    "jitter_rad",
                    format!("must be >= 0, got {}", c.phase_jitter),
                ));
            }
        }
        if !(self.noise_floor >= 0.0 && self.noise_floor.is_finite()) {
            return Err(Error::physics(
                "noise_floor_m",
                format!("must be >= 0, got {}", self.noise_floor),
            ));
        }
        Ok(())
    }

    /// The component with the largest displacement response.
    ///
    /// The steady-state response scales with `h * f_b^2 = h * v^2 / lambda^2`,
    /// so the ranking by `h / lambda^2` holds at every speed.
    pub fn dominant_component(&self) -> &ProfileComponent {
        self.components
            .iter()
            .reduce(|best, c| {
                if response_weight(c) > response_weight(best) {
                    c
                } else {
                    best
                }
            })
            .expect("validated profile has components")
    }

    /// Temporal frequency of [`Self::dominant_component`] at speed `v`.
    pub fn dominant_frequency(&self, speed: f64) -> f64 {
        speed / self.dominant_component().wavelength
    }
}

fn response_weight(c: &ProfileComponent) -> f64 {
    c.amplitude / (c.wavelength * c.wavelength)
}

/// Profiles for all seven classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileTable {
    profiles: BTreeMap<TerrainClass, SpectralProfile>,
}

#[derive(Serialize, Deserialize)]
struct ProfileEntry {
    terrain: TerrainClass,
    #[serde(flatten)]
    profile: SpectralProfile,
}

impl ProfileTable {
    pub fn new(profiles: BTreeMap<TerrainClass, SpectralProfile>) -> Result<Self> {
        for class in TerrainClass::ALL {
            profiles
                .get(&class)
                .ok_or_else(|| Error::Config(format!("profile table lacks `{class}`")))?
                .validate()?;
        }
        Ok(Self { profiles })
    }

    pub fn get(&self, class: TerrainClass) -> &SpectralProfile {
        &self.profiles[&class]
    }

    pub fn iter(&self) -> impl Iterator<Item = (TerrainClass, &SpectralProfile)> {
        self.profiles.iter().map(|(&c, p)| (c, p))
    }

    /// Same table with every noise floor set to zero.
    pub fn noiseless(&self) -> Self {
        let mut t = self.clone();
        for p in t.profiles.values_mut() {
            p.noise_floor = 0.0;
        }
        t
    }

    pub fn to_json(&self) -> Result<String> {
        let entries: Vec<ProfileEntry> = self
            .iter()
            .map(|(terrain, p)| ProfileEntry {
                terrain,
                profile: p.clone(),
            })
            .collect();
        Ok(serde_json::to_string_pretty(&entries)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let entries: Vec<ProfileEntry> = serde_json::from_str(text)?;
        let mut profiles = BTreeMap::new();
        for e in entries {
            if profiles.insert(e.terrain, e.profile).is_some() {
                return Err(Error::Config(format!("duplicate terrain `{}`", e.terrain)));
            }
        }
        Self::new(profiles)
    }
}

fn component(wavelength: f64, amplitude: f64) -> ProfileComponent {
    ProfileComponent {
        wavelength,
        amplitude,
        phase_jitter: std::f64::consts::TAU,
    }
}

/// Wavelength whose temporal frequency is `m` Hz per 0.05 m/s of speed.
///
/// With these wavelengths every component lands on an integer frequency for
/// speeds that are multiples of 0.05 m/s, so one-second windows hold whole
/// periods.
fn harmonic(m: f64) -> f64 {
    0.05 / m
}

/// The frozen default terrain table (version 1).
///
/// | terrain    | dominant lambda | f at 0.2 m/s | character                  |
/// |------------|-----------------|--------------|----------------------------|
/// | flat       | 25 mm           | 8 Hz         | one long, shallow undulation |
/// | cement     | 10 mm           | 20 Hz        | fine grain, weak 52 Hz texture |
/// | brick      | 16.7 mm         | 12 Hz        | periodic gaps plus harmonic |
/// | carpet     | 7.1 mm          | 28 Hz        | pile, weak 64 Hz texture   |
/// | soft-grass | 5.6 mm          | 36 Hz        | blades plus slow sway      |
/// | sand       | 4.2 mm          | 48 Hz        | broadband, noise heavy     |
/// | soft-soil  | 3.3 mm          | 60 Hz        | clods plus 32 Hz lumps     |
///
/// Noise floors are set relative to each terrain's response amplitude at
/// 0.2 m/s and the default 5 mm sensor position.
pub fn default_profiles() -> ProfileTable {
    use TerrainClass::*;
    let p = |components: Vec<ProfileComponent>, noise_floor: f64| SpectralProfile {
        components,
        noise_floor,
    };
    let table = [
        (Flat, p(vec![component(harmonic(2.0), 50e-6)], 6.0e-8)),
        (
            Cement,
            p(
                vec![
                    component(harmonic(5.0), 80e-6),
                    component(harmonic(13.0), 5e-6),
                ],
                6.0e-7,
            ),
        ),
        (
            Brick,
            p(
                vec![
                    component(harmonic(3.0), 300e-6),
                    component(harmonic(6.0), 50e-6),
                ],
                7.5e-7,
            ),
        ),
        (
            Carpet,
            p(
                vec![
                    component(harmonic(7.0), 40e-6),
                    component(harmonic(16.0), 4e-6),
                ],
                6.0e-7,
            ),
        ),
        (
            SoftGrass,
            p(
                vec![
                    component(harmonic(9.0), 60e-6),
                    component(harmonic(4.0), 100e-6),
                ],
                1.2e-6,
            ),
        ),
        (
            Sand,
            p(
                vec![
                    component(harmonic(12.0), 20e-6),
                    component(harmonic(10.0), 10e-6),
                    component(harmonic(14.0), 8e-6),
                ],
                1.2e-6,
            ),
        ),
        (
            SoftSoil,
            p(
                vec![
                    component(harmonic(15.0), 30e-6),
                    component(harmonic(8.0), 20e-6),
                ],
                1.8e-6,
            ),
        ),
    ];
    ProfileTable::new(table.into_iter().collect()).expect("default table is valid")
}

/// Noise-free single-tone profiles with widely spaced wavelengths, for smoke
/// testing the classifier.
pub fn smoke_profiles() -> ProfileTable {
    let table = TerrainClass::ALL.iter().enumerate().map(|(i, &c)| {
        let profile = SpectralProfile {
            components: vec![ProfileComponent {
                wavelength: harmonic((2 * i + 1) as f64),
                amplitude: 100e-6,
                phase_jitter: 0.0,
            }],
            noise_floor: 0.0,
        };
        (c, profile)
    });
    ProfileTable::new(table.collect()).expect("smoke table is valid")
}

/// Parameters of one synthetic traversal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotRun {
    /// m/s
    pub speed: f64,
    /// s
    pub duration: f64,
    /// Hz
    pub sample_rate: f64,
    pub seed: u64,
}

impl Default for RobotRun {
    fn default() -> Self {
        Self {
            speed: 0.2,
            duration: 300.0,
            sample_rate: 200.0,
            seed: 0,
        }
    }
}

/// Maps every spatial component to its temporal excitation `f_b = v / lambda`.
pub fn temporal_components(
    profile: &SpectralProfile,
    speed: f64,
    sample_rate: f64,
) -> Result<Vec<Excitation>> {
    if !(speed > 0.0 && speed.is_finite()) {
        return Err(Error::physics("speed", format!("must be > 0, got {speed}")));
    }
    profile.validate()?;
    profile
        .components
        .iter()
        .map(|c| {
            let exc = Excitation::new(c.amplitude, speed / c.wavelength)?;
            beam::check_nyquist(exc.frequency, sample_rate)?;
            Ok(exc)
        })
        .collect()
}

/// Sensor displacement for one run over `profile`.
///
/// The window starts in the beam's steady state. Each component gets a
/// phase offset drawn uniformly from `[0, jitter)`, applied as a time shift
/// of `phase / w_b`. Noise is drawn after the phases, from the same
/// generator, and only when the noise floor is positive.
pub fn synthesize_run(
    profile: &SpectralProfile,
    run: &RobotRun,
    beam: &BeamSpec,
    x_s: f64,
) -> Result<TimeSeries> {
    let excitations = temporal_components(profile, run.speed, run.sample_rate)?;
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    let t0 = beam.steady_state_start();
    let mut total: Option<Vec<f64>> = None;
    for (exc, comp) in excitations.iter().zip(&profile.components) {
        let phase = if comp.phase_jitter > 0.0 {
            rng.random_range(0.0..comp.phase_jitter)
        } else {
            0.0
        };
        let shift = phase / exc.angular_frequency();
        let s =
            beam::displacement_series(beam, exc, x_s, run.sample_rate, run.duration, t0 + shift)?;
        match total.as_mut() {
            None => total = Some(s.samples),
            Some(acc) => acc.iter_mut().zip(&s.samples).for_each(|(a, b)| *a += b),
        }
    }
    let mut samples = total.expect("at least one component");
    if profile.noise_floor > 0.0 {
        let noise = Normal::new(0.0, profile.noise_floor)
            .map_err(|e| Error::physics("noise_floor_m", e.to_string()))?;
        for y in &mut samples {
            *y += noise.sample(&mut rng);
        }
    }
    TimeSeries::new(samples, run.sample_rate, t0)
}

impl ProfileTable {
    pub fn synthesize(
        &self,
        class: TerrainClass,
        run: &RobotRun,
        beam: &BeamSpec,
        x_s: f64,
    ) -> Result<TimeSeries> {
        synthesize_run(self.get(class), run, beam, x_s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_and_names_are_a_bijection() {
        for (i, c) in TerrainClass::ALL.iter().enumerate() {
            assert_eq!(c.index(), i);
            assert_eq!(usize::from(c.id()), i + 1);
            assert_eq!(TerrainClass::from_id(c.id()), Some(*c));
            assert_eq!(c.name().parse::<TerrainClass>().unwrap(), *c);
        }
        assert_eq!(TerrainClass::from_id(0), None);
        assert_eq!(TerrainClass::from_id(8), None);
        assert!("asphalt".parse::<TerrainClass>().is_err());
    }

    #[test]
    fn default_table_properties() {
        let t = default_profiles();
        assert_eq!(t, default_profiles());
        assert!(t.get(TerrainClass::Flat).noise_floor < t.get(TerrainClass::Brick).noise_floor);
        let bins: Vec<f64> = TerrainClass::ALL
            .iter()
            .map(|&c| t.get(c).dominant_frequency(0.2))
            .collect();
        for i in 0..bins.len() {
            for j in i + 1..bins.len() {
                assert!((bins[i] - bins[j]).abs() >= 2.0, "{bins:?}");
            }
        }
    }

    #[test]
    fn speed_maps_to_frequency() {
        let p = SpectralProfile {
            components: vec![component(0.05, 1e-4), component(0.02, 2e-5)],
            noise_floor: 0.0,
        };
        let e = temporal_components(&p, 0.2, 200.0).unwrap();
        assert!((e[0].frequency - 4.0).abs() < 1e-12);
        assert!((e[1].frequency - 10.0).abs() < 1e-12);
        let e2 = temporal_components(&p, 0.4, 200.0).unwrap();
        for (a, b) in e.iter().zip(&e2) {
            assert!((b.frequency - 2.0 * a.frequency).abs() < 1e-12);
            assert_eq!(a.amplitude, b.amplitude);
        }
        assert!(matches!(
            temporal_components(&p, 2.5, 200.0),
            Err(Error::Nyquist { .. })
        ));
        assert!(temporal_components(&p, 0.0, 200.0).is_err());
    }

    #[test]
    fn brick_shift_follows_speed() {
        let brick = default_profiles().get(TerrainClass::Brick).clone();
        let lambda = brick.dominant_component().wavelength;
        let df = brick.dominant_frequency(0.25) - brick.dominant_frequency(0.2);
        assert!((df - 0.05 / lambda).abs() < 1e-12);
        assert!((df - 3.0).abs() < 1e-9);
    }

    #[test]
    fn json_round_trip_and_rejects_incomplete_tables() {
        let t = default_profiles();
        let text = t.to_json().unwrap();
        assert!(text.contains("\"lambda_m\"") && text.contains("\"noise_floor_m\""));
        assert_eq!(ProfileTable::from_json(&text).unwrap(), t);
        let partial = r#"[{"terrain":"flat","components":[{"lambda_m":0.1,"h_m":1e-5,"jitter_rad":0}],"noise_floor_m":0}]"#;
        assert!(ProfileTable::from_json(partial).is_err());
    }

    #[test]
    fn noiseless_single_component_matches_beam_series() {
        let beam = BeamSpec::default();
        let p = SpectralProfile {
            components: vec![ProfileComponent {
                wavelength: 0.01,
                amplitude: 1e-4,
                phase_jitter: 0.0,
            }],
            noise_floor: 0.0,
        };
        let run = RobotRun {
            duration: 2.0,
            seed: 99,
            ..RobotRun::default()
        };
        let s = synthesize_run(&p, &run, &beam, 0.005).unwrap();
        let exc = Excitation::new(1e-4, 20.0).unwrap();
        let direct =
            beam::displacement_series(&beam, &exc, 0.005, 200.0, 2.0, beam.steady_state_start())
                .unwrap();
        assert_eq!(s, direct);
    }

    #[test]
    fn same_seed_same_series() {
        let beam = BeamSpec::default();
        let t = default_profiles();
        let run = RobotRun {
            duration: 3.0,
            seed: 5,
            ..RobotRun::default()
        };
        let a = t
            .synthesize(TerrainClass::Sand, &run, &beam, 0.005)
            .unwrap();
        let b = t
            .synthesize(TerrainClass::Sand, &run, &beam, 0.005)
            .unwrap();
        assert_eq!(a.len(), 600);
        assert!(a
            .samples
            .iter()
            .zip(&b.samples)
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        let c = t
            .synthesize(
                TerrainClass::Sand,
                &RobotRun { seed: 6, ..run },
                &beam,
                0.005,
            )
            .unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn five_minutes_at_200_hz() {
        let beam = BeamSpec::default();
        let s = default_profiles()
            .synthesize(TerrainClass::Flat, &RobotRun::default(), &beam, 0.005)
            .unwrap();
        assert_eq!(s.len(), 60_000);
        assert_eq!(crate::signal::window(&s, 1.0).unwrap().len(), 300);
    }
}
