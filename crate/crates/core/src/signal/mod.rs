//! Time series to labeled frequency-domain feature vectors.
//!
//! Pipeline per run: split into non-overlapping windows, standardize each
//! window to zero mean and unit population std, take the full two-sided
//! magnitude spectrum, attach the terrain label.

pub mod fft;

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::beam::TimeSeries;
use crate::exec::{self, Execution};
use crate::terrain::TerrainClass;
use crate::{Error, Result};

/// Feature width under the default 200 Hz / 1 s windowing.
pub const FEATURE_WIDTH: usize = 200;

/// Windows whose population std is at or below this are rejected.
pub const DEFAULT_STD_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub magnitudes: Vec<f64>,
    /// sample_rate / N, Hz.
    pub bin_width: f64,
}

impl Spectrum {
    pub fn frequency_of(&self, bin: usize) -> f64 {
        bin as f64 * self.bin_width
    }
}

/// Splits a series into consecutive non-overlapping windows of
/// `round(window_seconds * sample_rate)` samples. A trailing partial window
/// is dropped.
pub fn window(series: &TimeSeries, window_seconds: f64) -> Result<Vec<Vec<f64>>> {
    let len = window_len(series.sample_rate, window_seconds)?;
    if series.len() < len {
        return Err(Error::SeriesTooShort {
            len: series.len(),
            window: len,
        });
    }
    Ok(series
        .samples
        .chunks_exact(len)
        .map(<[f64]>::to_vec)
        .collect())
}

pub fn window_len(sample_rate: f64, window_seconds: f64) -> Result<usize> {
    if !(window_seconds > 0.0 && sample_rate > 0.0) {
        return Err(Error::Config(format!(
            "window of {window_seconds} s at {sample_rate} Hz"
        )));
    }
    let len = (window_seconds * sample_rate).round() as usize;
    if len == 0 {
        return Err(Error::Config(format!(
            "window of {window_seconds} s at {sample_rate} Hz holds no samples"
        )));
    }
    Ok(len)
}

pub fn standardize(window: &[f64]) -> Result<Vec<f64>> {
    standardize_with_epsilon(window, DEFAULT_STD_EPSILON)
}

/// Shifts and scales to zero mean and unit population standard deviation.
pub fn standardize_with_epsilon(window: &[f64], eps: f64) -> Result<Vec<f64>> {
    if window.is_empty() {
        return Err(Error::Empty("window"));
    }
    let n = window.len() as f64;
    let mean = window.iter().sum::<f64>() / n;
    let var = window.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if !std.is_finite() {
        return Err(Error::NonFinite("window".into()));
    }
    if std <= eps {
        return Err(Error::DegenerateWindow { std, eps });
    }
    Ok(window.iter().map(|x| (x - mean) / std).collect())
}

/// Full two-sided DFT magnitude spectrum (N bins for an N-sample window).
pub fn fft_magnitude(window: &[f64], sample_rate: f64) -> Result<Spectrum> {
    if window.is_empty() {
        return Err(Error::Empty("window"));
    }
    let magnitudes = fft::fft_real(window).iter().map(|c| c.norm()).collect();
    Ok(Spectrum {
        magnitudes,
        bin_width: sample_rate / window.len() as f64,
    })
}

/// Index of the strongest non-DC bin among the non-negative frequencies
/// (`1..=N/2`). Ties resolve to the lower bin.
///
/// Bins above N/2 mirror the positive ones for a real signal and are
/// ignored.
pub fn dominant_bin(spectrum: &Spectrum) -> Result<usize> {
    let n = spectrum.magnitudes.len();
    if n < 3 {
        return Err(Error::Shape(format!(
            "dominant frequency needs at least 3 bins, got {n}"
        )));
    }
    let mut best = 1;
    for k in 2..=n / 2 {
        if spectrum.magnitudes[k] > spectrum.magnitudes[best] {
            best = k;
        }
    }
    Ok(best)
}

pub fn dominant_frequency(spectrum: &Spectrum) -> Result<f64> {
    Ok(spectrum.frequency_of(dominant_bin(spectrum)?))
}

/// One standardized, transformed window with its terrain label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub label: TerrainClass,
    /// Window index within its source run.
    pub source_window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub vectors: Vec<FeatureVector>,
    /// Seed of the split that produced this set, if any.
    pub split_seed: Option<u64>,
}

/// A window that was skipped while building a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedWindow {
    pub run: usize,
    pub window: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBuild {
    pub dataset: Dataset,
    pub dropped: Vec<DroppedWindow>,
    pub total_windows: usize,
}

impl DatasetBuild {
    pub fn dropped_fraction(&self) -> f64 {
        if self.total_windows == 0 {
            0.0
        } else {
            self.dropped.len() as f64 / self.total_windows as f64
        }
    }
}

/// Turns one window into a feature vector: standardize, then transform.
pub fn features(window: &[f64], sample_rate: f64) -> Result<Vec<f64>> {
    let z = standardize(window)?;
    Ok(fft_magnitude(&z, sample_rate)?.magnitudes)
}

pub fn build_dataset(
    runs: &[(TimeSeries, TerrainClass)],
    window_seconds: f64,
) -> Result<DatasetBuild> {
    build_dataset_with(Execution::default(), runs, window_seconds)
}

/// Builds one feature vector per window of every run. Degenerate windows
/// are skipped and listed in [`DatasetBuild::dropped`].
pub fn build_dataset_with(
    exec: Execution,
    runs: &[(TimeSeries, TerrainClass)],
    window_seconds: f64,
) -> Result<DatasetBuild> {
    if runs.is_empty() {
        return Err(Error::Empty("run list"));
    }
    let mut jobs = Vec::new();
    for (run_idx, (series, label)) in runs.iter().enumerate() {
        for (w_idx, w) in window(series, window_seconds)?.into_iter().enumerate() {
            jobs.push((run_idx, w_idx, *label, series.sample_rate, w));
        }
    }
    let total_windows = jobs.len();
    let outcomes = exec::map(exec, &jobs, |(run, w_idx, label, rate, w)| {
        match features(w, *rate) {
            Ok(values) => Ok(FeatureVector {
                values,
                label: *label,
                source_window: *w_idx,
            }),
            Err(e @ Error::DegenerateWindow { .. }) => Err(DroppedWindow {
                run: *run,
                window: *w_idx,
                reason: e.to_string(),
            }),
            Err(e) => Err(DroppedWindow {
                run: *run,
                window: *w_idx,
                reason: format!("fatal: {e}"),
            }),
        }
    });
    let mut vectors = Vec::with_capacity(total_windows);
    let mut dropped = Vec::new();
    for o in outcomes {
        match o {
            Ok(v) => vectors.push(v),
            Err(d) if d.reason.starts_with("fatal: ") => {
                return Err(Error::Dataset(format!(
                    "run {} window {}: {}",
                    d.run, d.window, d.reason
                )))
            }
            Err(d) => dropped.push(d),
        }
    }
    if vectors.is_empty() {
        return Err(Error::Dataset("every window was degenerate".into()));
    }
    Ok(DatasetBuild {
        dataset: Dataset {
            vectors,
            split_seed: None,
        },
        dropped,
        total_windows,
    })
}

impl Dataset {
    pub fn new(vectors: Vec<FeatureVector>) -> Result<Self> {
        let ds = Self {
            vectors,
            split_seed: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self.vectors.first().ok_or(Error::Empty("dataset"))?;
        let width = first.values.len();
        for (i, v) in self.vectors.iter().enumerate() {
            if v.values.len() != width {
                return Err(Error::Shape(format!(
                    "vector {i} has {} features, expected {width}",
                    v.values.len()
                )));
            }
            if v.values.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("feature vector {i}")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn feature_width(&self) -> usize {
        self.vectors.first().map_or(0, |v| v.values.len())
    }

    pub fn class_counts(&self) -> BTreeMap<TerrainClass, usize> {
        let mut counts = BTreeMap::new();
        for v in &self.vectors {
            *counts.entry(v.label).or_insert(0) += 1;
        }
        counts
    }

    /// Concatenates datasets in order.
    pub fn concat(parts: impl IntoIterator<Item = Dataset>) -> Result<Dataset> {
        let vectors: Vec<FeatureVector> = parts.into_iter().flat_map(|d| d.vectors).collect();
        Dataset::new(vectors)
    }

    /// CSV with columns `f000..f{w-1}`, `label`, `window_idx`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let width = self.feature_width();
        let mut header: Vec<String> = (0..width).map(|i| format!("f{i:03}")).collect();
        header.push("label".into());
        header.push("window_idx".into());
        w.write_record(&header)?;
        for v in &self.vectors {
            let mut row: Vec<String> = v.values.iter().map(f64::to_string).collect();
            row.push(v.label.id().to_string());
            row.push(v.source_window.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        let n = headers.len();
        if n < 3 || &headers[n - 2] != "label" || &headers[n - 1] != "window_idx" {
            return Err(Error::Dataset(
                "header must end with `label,window_idx`".into(),
            ));
        }
        for (i, h) in headers.iter().take(n - 2).enumerate() {
            if h != format!("f{i:03}") {
                return Err(Error::Dataset(format!("unexpected column `{h}` at {i}")));
            }
        }
        let mut vectors = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let parse_err = |what: &str| Error::Dataset(format!("row {}: bad {what}", line + 1));
            let values = rec
                .iter()
                .take(n - 2)
                .map(|s| s.parse::<f64>().map_err(|_| parse_err("feature")))
                .collect::<Result<Vec<f64>>>()?;
            let id: u8 = rec[n - 2].parse().map_err(|_| parse_err("label"))?;
            let label = TerrainClass::from_id(id).ok_or_else(|| parse_err("label"))?;
            let source_window = rec[n - 1].parse().map_err(|_| parse_err("window_idx"))?;
            vectors.push(FeatureVector {
                values,
                label,
                source_window,
            });
        }
        Dataset::new(vectors)
    }
}

/// Stratified, seeded train/test split.
///
/// Each class is shuffled independently and `round(train_fraction * n_c)`
/// of its vectors (clamped so both sides get at least one) go to training.
/// Both halves keep the original dataset order.
pub fn split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    if ds.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let mut by_class: BTreeMap<TerrainClass, Vec<usize>> = BTreeMap::new();
    for (i, v) in ds.vectors.iter().enumerate() {
        by_class.entry(v.label).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; ds.len()];
    for (class, mut idx) in by_class {
        let n = idx.len();
        if n < 2 {
            return Err(Error::ClassTooSmall {
                class: class.id(),
                count: n,
            });
        }
        idx.shuffle(&mut rng);
        let take = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
        for &i in &idx[..take] {
            in_train[i] = true;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (v, t) in ds.vectors.iter().zip(in_train) {
        if t {
            train.push(v.clone());
        } else {
            test.push(v.clone());
        }
    }
    Ok((
        Dataset {
            vectors: train,
            split_seed: Some(seed),
        },
        Dataset {
            vectors: test,
            split_seed: Some(seed),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn series(samples: Vec<f64>, rate: f64) -> TimeSeries {
        TimeSeries::new(samples, rate, 0.0).unwrap()
    }

    fn mean_std(x: &[f64]) -> (f64, f64) {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = x.iter().map(|a| (a - m).powi(2)).sum::<f64>() / n;
        (m, v.sqrt())
    }

    #[test]
    fn windowing_counts() {
        let s = series(vec![0.5; 60_000], 200.0);
        let w = window(&s, 1.0).unwrap();
        assert_eq!(w.len(), 300);
        assert!(w.iter().all(|w| w.len() == 200));

        let s = series((0..250).map(f64::from).collect(), 200.0);
        let w = window(&s, 1.0).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0][199], 199.0);

        let s = series(vec![1.0; 199], 200.0);
        assert!(matches!(
            window(&s, 1.0),
            Err(Error::SeriesTooShort {
                len: 199,
                window: 200
            })
        ));
    }

    #[test]
    fn standardize_ramp() {
        let x: Vec<f64> = (1..=200).map(f64::from).collect();
        let z = standardize(&x).unwrap();
        let (m, s) = mean_std(&z);
        assert!(m.abs() < 1e-9 && (s - 1.0).abs() < 1e-9);
        let again = standardize(&z).unwrap();
        for (a, b) in z.iter().zip(&again) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn standardize_rejects_constant_window() {
        assert!(matches!(
            standardize(&[3.25; 200]),
            Err(Error::DegenerateWindow { .. })
        ));
        assert!(matches!(standardize(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn sinusoid_peaks_at_mirrored_bins() {
        let n = 200;
        let k = 17;
        let x: Vec<f64> = (0..n)
            .map(|j| (2.0 * PI * (k * j) as f64 / n as f64).sin())
            .collect();
        let s = fft_magnitude(&x, 200.0).unwrap();
        assert_eq!(s.magnitudes.len(), n);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| s.magnitudes[b].total_cmp(&s.magnitudes[a]));
        let mut top = [order[0], order[1]];
        top.sort();
        assert_eq!(top, [k, n - k]);
        assert_eq!(dominant_bin(&s).unwrap(), k);
    }

    #[test]
    fn zeros_transform_to_zeros() {
        let s = fft_magnitude(&[0.0; 16], 16.0).unwrap();
        assert!(s.magnitudes.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn dominant_frequency_of_sampled_sine() {
        let x: Vec<f64> = (0..1000)
            .map(|j| (2.0 * PI * 100.0 * j as f64 / 1000.0).sin())
            .collect();
        let s = fft_magnitude(&x, 1000.0).unwrap();
        assert!((s.bin_width - 1.0).abs() < 1e-15);
        assert_eq!(dominant_frequency(&s).unwrap(), 100.0);
    }

    #[test]
    fn dominant_frequency_tie_goes_low() {
        let mut m = vec![0.0; 200];
        m[40] = 5.0;
        m[60] = 5.0;
        m[0] = 99.0;
        let s = Spectrum {
            magnitudes: m,
            bin_width: 1.0,
        };
        assert_eq!(dominant_frequency(&s).unwrap(), 40.0);
        let short = Spectrum {
            magnitudes: vec![1.0, 2.0],
            bin_width: 1.0,
        };
        assert!(dominant_frequency(&short).is_err());
    }

    fn tone_run(k: usize, seconds: usize, label: TerrainClass) -> (TimeSeries, TerrainClass) {
        let n = 200 * seconds;
        let x = (0..n)
            .map(|j| (2.0 * PI * (k * j) as f64 / 200.0).sin() + 0.1 * (j as f64 * 0.37).cos())
            .collect();
        (series(x, 200.0), label)
    }

    #[test]
    fn dataset_shapes() {
        assert!(matches!(build_dataset(&[], 1.0), Err(Error::Empty(_))));
        let one = build_dataset(&[tone_run(5, 1, TerrainClass::Flat)], 1.0).unwrap();
        assert_eq!(one.dataset.len(), 1);
        assert_eq!(one.dataset.feature_width(), 200);
        let runs: Vec<_> = TerrainClass::ALL
            .iter()
            .enumerate()
            .map(|(i, &c)| tone_run(3 + 4 * i, 3, c))
            .collect();
        let b = build_dataset(&runs, 1.0).unwrap();
        assert_eq!(b.dataset.len(), 21);
        assert!(b.dropped.is_empty());
        assert_eq!(b.dataset.vectors[4].source_window, 1);
    }

    #[test]
    fn degenerate_windows_are_skipped_and_reported() {
        let mut x = vec![0.0; 600];
        for (j, v) in x.iter_mut().enumerate().skip(200) {
            *v = (j as f64).sin();
        }
        let b = build_dataset(&[(series(x, 200.0), TerrainClass::Sand)], 1.0).unwrap();
        assert_eq!(b.dataset.len(), 2);
        assert_eq!(b.dropped.len(), 1);
        assert_eq!(b.dropped[0].window, 0);
        assert!((b.dropped_fraction() - 1.0 / 3.0).abs() < 1e-15);
    }

    fn labeled(per_class: usize) -> Dataset {
        let vectors = TerrainClass::ALL
            .iter()
            .flat_map(|&c| {
                (0..per_class).map(move |i| FeatureVector {
                    values: vec![f64::from(c.id()), i as f64],
                    label: c,
                    source_window: i,
                })
            })
            .collect();
        Dataset::new(vectors).unwrap()
    }

    #[test]
    fn split_sizes_and_partition() {
        let ds = labeled(300);
        let (train, test) = split(&ds, 0.75, 7).unwrap();
        assert_eq!((train.len(), test.len()), (1575, 525));
        for (_, n) in train.class_counts() {
            assert_eq!(n, 225);
        }
        let mut all: Vec<_> = train
            .vectors
            .iter()
            .chain(&test.vectors)
            .map(|v| (v.label, v.source_window))
            .collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), ds.len());
        let (train2, test2) = split(&ds, 0.75, 7).unwrap();
        assert_eq!((train, test), (train2, test2));
        let (train3, _) = split(&ds, 0.75, 8).unwrap();
        assert_ne!(train3.vectors, split(&ds, 0.75, 7).unwrap().0.vectors);
    }

    #[test]
    fn split_errors() {
        let ds = labeled(3);
        assert!(split(&ds, 0.0, 1).is_err());
        assert!(split(&ds, 1.0, 1).is_err());
        let mut tiny = labeled(3);
        tiny.vectors
            .retain(|v| v.label != TerrainClass::Brick || v.source_window == 0);
        assert!(matches!(
            split(&tiny, 0.75, 1),
            Err(Error::ClassTooSmall { class: 3, count: 1 })
        ));
    }

    #[test]
    fn csv_header_and_errors() {
        let ds = labeled(2);
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("f000,f001,label,window_idx\n"));
        assert!(Dataset::read_csv("a,b\n1,2\n".as_bytes()).is_err());
        assert!(Dataset::read_csv("f000,label,window_idx\n1.0,9,0\n".as_bytes()).is_err());
    }
}
