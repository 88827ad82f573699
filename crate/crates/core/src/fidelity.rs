//! Output fidelity: normalized cross-correlation between two end signals and
//! the time shift at its peak.

use std::path::Path;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FidelityError {
    #[error("signal has zero energy; correlation is undefined")]
    ZeroEnergy,
    #[error("an end signal needs at least 2 samples (got {0})")]
    TooShort(usize),
    #[error("sample interval must be positive (got {0})")]
    BadInterval(f64),
    #[error("signal lengths {0} and {1} differ by more than the allowed {2} samples")]
    LengthMismatch(usize, usize, usize),
    #[error("signal file {path}: {msg}")]
    File { path: String, msg: String },
}

/// Uniformly sampled signal; `dt` in time units per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EndSignal {
    pub samples: Vec<f64>,
    pub dt: f64,
}

impl EndSignal {
    pub fn new(samples: Vec<f64>, dt: f64) -> Result<Self, FidelityError> {
        if samples.len() < 2 {
            return Err(FidelityError::TooShort(samples.len()));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(FidelityError::BadInterval(dt));
        }
        Ok(EndSignal { samples, dt })
    }

    /// Zero-order-hold resampling of irregular `(timestamp, value)` points
    /// onto a grid of step `dt` starting at the first timestamp.
    pub fn resample(points: &[(f64, f64)], dt: f64) -> Result<Self, FidelityError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(FidelityError::BadInterval(dt));
        }
        let mut pts = points.to_vec();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let Some(&(t0, _)) = pts.first() else {
            return Err(FidelityError::TooShort(0));
        };
        let t1 = pts[pts.len() - 1].0;
        let n = ((t1 - t0) / dt).floor() as usize + 1;
        let mut samples = Vec::with_capacity(n);
        let mut j = 0;
        for i in 0..n {
            let t = t0 + i as f64 * dt;
            while j + 1 < pts.len() && pts[j + 1].0 <= t {
                j += 1;
            }
            samples.push(pts[j].1);
        }
        Self::new(samples, dt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// sqrt((x.x)(y.y)), bounded by 1.
    #[default]
    Standard,
    /// sqrt((x.y)(x.y)) as literally typeset; z(0) is then always 1.
    AsTypeset,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XcorrConfig {
    pub normalization: Normalization,
    pub remove_mean: bool,
    /// Allowed difference in sample counts; `None` accepts any.
    pub max_length_mismatch: Option<usize>,
    /// Milliseconds per time unit of `dt`.
    pub ms_per_unit: f64,
}

impl Default for XcorrConfig {
    fn default() -> Self {
        XcorrConfig {
            normalization: Normalization::Standard,
            remove_mean: true,
            max_length_mismatch: None,
            ms_per_unit: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XcorrResult {
    pub peak: f64,
    /// Samples by which `y` lags `x`.
    pub lag: i64,
    pub shift_ms: f64,
}

/// Full (non-circular) cross-correlation `r[k] = sum_n x[n] y[n + k]` for
/// `k` from `-(len(x) - 1)` to `len(y) - 1`.
pub fn cross_correlation(x: &[f64], y: &[f64]) -> Vec<f64> {
    let (nx, ny) = (x.len() as i64, y.len() as i64);
    (-(nx - 1)..ny)
        .map(|k| {
            let lo = 0.max(-k);
            let hi = nx.min(ny - k);
            (lo..hi).map(|n| x[n as usize] * y[(n + k) as usize]).sum()
        })
        .collect()
}

fn centered(s: &[f64], remove_mean: bool) -> Vec<f64> {
    if !remove_mean {
        return s.to_vec();
    }
    let m = s.iter().sum::<f64>() / s.len() as f64;
    s.iter().map(|v| v - m).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

pub fn xcorr_score(x: &EndSignal, y: &EndSignal) -> Result<XcorrResult, FidelityError> {
    xcorr_score_with(x, y, &XcorrConfig::default())
}

pub fn xcorr_score_with(x: &EndSignal, y: &EndSignal, cfg: &XcorrConfig) -> Result<XcorrResult, FidelityError> {
    let (nx, ny) = (x.samples.len(), y.samples.len());
    if let Some(tol) = cfg.max_length_mismatch {
        if nx.abs_diff(ny) > tol {
            return Err(FidelityError::LengthMismatch(nx, ny, tol));
        }
    }
    let xc = centered(&x.samples, cfg.remove_mean);
    let yc = centered(&y.samples, cfg.remove_mean);
    let norm = match cfg.normalization {
        Normalization::Standard => (dot(&xc, &xc) * dot(&yc, &yc)).sqrt(),
        Normalization::AsTypeset => {
            let n = nx.min(ny);
            dot(&xc[..n], &yc[..n]).abs()
        }
    };
    if !(norm > 0.0) {
        return Err(FidelityError::ZeroEnergy);
    }
    let r = cross_correlation(&xc, &yc);
    let offset = nx as i64 - 1;
    let mut best = (f64::NEG_INFINITY, 0i64);
    for (i, v) in r.iter().enumerate() {
        let z = v / norm;
        let k = i as i64 - offset;
        // Ties go to the smaller |lag|, then the positive one.
        let better = z > best.0 || (z == best.0 && (k.abs() < best.1.abs() || (k.abs() == best.1.abs() && k > best.1)));
        if better {
            best = (z, k);
        }
    }
    let mut peak = best.0;
    if (1.0 - peak).abs() < 1e-12 {
        peak = 1.0;
    }
    Ok(XcorrResult {
        peak,
        lag: best.1,
        shift_ms: best.1 as f64 * x.dt * cfg.ms_per_unit,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionThresholds {
    pub min_peak: f64,
    pub max_shift_ms: f64,
}

impl Default for DistortionThresholds {
    fn default() -> Self {
        DistortionThresholds {
            min_peak: 0.85,
            max_shift_ms: 100.0,
        }
    }
}

pub fn distortion_flag(peak: f64, shift_ms: f64, th: &DistortionThresholds) -> bool {
    peak < th.min_peak || shift_ms.abs() > th.max_shift_ms
}

/// Reads an `output_snapshot.csv` (`timestamp,value`).
pub fn read_end_signal(path: &Path) -> Result<Vec<(f64, f64)>, FidelityError> {
    let err = |msg: String| FidelityError::File {
        path: path.display().to_string(),
        msg,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
    r.deserialize::<(f64, f64)>()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| err(format!("row {}: {e}", i + 1))))
        .collect()
}

/// Writes `pair,peak,shift_ms` rows.
pub fn write_correlation_report(path: &Path, rows: &[(String, XcorrResult)]) -> Result<(), FidelityError> {
    let err = |e: csv::Error| FidelityError::File {
        path: path.display().to_string(),
        msg: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["pair", "peak", "shift_ms"]).map_err(err)?;
    for (pair, r) in rows {
        w.write_record([pair.clone(), r.peak.to_string(), r.shift_ms.to_string()])
            .map_err(err)?;
    }
    w.flush().map_err(|e| FidelityError::File {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sig(v: &[f64]) -> EndSignal {
        EndSignal::new(v.to_vec(), 1.0).unwrap()
    }

    fn impulse(n: usize, at: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[at] = 1.0;
        v
    }

    /// Brute force over every lag with no shared code.
    fn oracle(x: &[f64], y: &[f64]) -> (f64, i64) {
        let mx = x.iter().sum::<f64>() / x.len() as f64;
        let my = y.iter().sum::<f64>() / y.len() as f64;
        let xs: Vec<f64> = x.iter().map(|v| v - mx).collect();
        let ys: Vec<f64> = y.iter().map(|v| v - my).collect();
        let ex: f64 = xs.iter().map(|v| v * v).sum();
        let ey: f64 = ys.iter().map(|v| v * v).sum();
        let mut best = (f64::NEG_INFINITY, 0);
        for k in -(x.len() as i64 - 1)..y.len() as i64 {
            let mut s = 0.0;
            for (n, xv) in xs.iter().enumerate() {
                let j = n as i64 + k;
                if j >= 0 && (j as usize) < ys.len() {
                    s += xv * ys[j as usize];
                }
            }
            let z = s / (ex * ey).sqrt();
            if z > best.0 + 1e-12 {
                best = (z, k);
            }
        }
        best
    }

    #[test]
    fn autocorrelation_is_one_at_zero() {
        let x = sig(&[0.1, 0.5, -0.3, 0.9, 0.2, -0.7]);
        let r = xcorr_score(&x, &x).unwrap();
        assert_eq!(r.peak, 1.0);
        assert_eq!(r.lag, 0);
        assert_eq!(r.shift_ms, 0.0);
    }

    #[test]
    fn impulse_shift_is_recovered() {
        let x = EndSignal::new(impulse(16, 5), 2.0).unwrap();
        let y = EndSignal::new(impulse(16, 8), 2.0).unwrap();
        let cfg = XcorrConfig {
            ms_per_unit: 1.0,
            ..XcorrConfig::default()
        };
        let r = xcorr_score_with(&x, &y, &cfg).unwrap();
        assert_eq!(r.lag, 3);
        assert_eq!(r.shift_ms, 6.0);
        let (peak, lag) = oracle(&x.samples, &y.samples);
        assert_eq!(lag, 3);
        assert!((r.peak - peak).abs() < 1e-12);
        // Without mean removal the impulses match exactly.
        let raw = XcorrConfig {
            remove_mean: false,
            ..cfg
        };
        assert_eq!(xcorr_score_with(&x, &y, &raw).unwrap().peak, 1.0);
    }

    #[test]
    fn negation_is_anti_correlated() {
        let v = [1.0, 3.0, 2.0, 5.0, 4.0, 0.0, 1.0];
        let neg: Vec<f64> = v.iter().map(|a| -a).collect();
        let r = xcorr_score(&sig(&v), &sig(&neg)).unwrap();
        let (peak, _) = oracle(&v, &neg);
        assert!((r.peak - peak).abs() < 1e-12);
        assert!(r.peak < 1.0);
        // Zero-lag value is exactly -1.
        let z0 = cross_correlation(&centered(&v, true), &centered(&neg, true))[v.len() - 1];
        let e = dot(&centered(&v, true), &centered(&v, true));
        assert!((z0 / e + 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_energy_and_short_signals_are_rejected() {
        assert_eq!(
            xcorr_score(&sig(&[2.0, 2.0, 2.0]), &sig(&[1.0, 2.0, 3.0])),
            Err(FidelityError::ZeroEnergy)
        );
        assert_eq!(EndSignal::new(vec![1.0], 1.0), Err(FidelityError::TooShort(1)));
        let cfg = XcorrConfig {
            max_length_mismatch: Some(1),
            ..XcorrConfig::default()
        };
        assert!(matches!(
            xcorr_score_with(&sig(&[1.0, 2.0, 3.0, 4.0]), &sig(&[1.0, 2.0]), &cfg),
            Err(FidelityError::LengthMismatch(4, 2, 1))
        ));
    }

    #[test]
    fn as_typeset_normalization_cannot_discriminate() {
        let cfg = XcorrConfig {
            normalization: Normalization::AsTypeset,
            remove_mean: false,
            ..XcorrConfig::default()
        };
        let x = sig(&[1.0, 2.0, 3.0]);
        let y = sig(&[3.0, 1.0, 2.0]);
        let r = cross_correlation(&x.samples, &y.samples);
        let z0 = r[2] / dot(&x.samples, &y.samples).abs();
        assert_eq!(z0, 1.0);
        assert!(xcorr_score_with(&x, &y, &cfg).unwrap().peak >= 1.0);
    }

    #[test]
    fn zero_order_hold_resampling() {
        let s = EndSignal::resample(&[(0.0, 1.0), (2.5, 3.0), (4.0, -1.0)], 1.0).unwrap();
        assert_eq!(s.samples, vec![1.0, 1.0, 1.0, 3.0, -1.0]);
    }

    #[test]
    fn distortion_examples() {
        let th = DistortionThresholds::default();
        assert!(!distortion_flag(1.0, 0.0, &th));
        assert!(distortion_flag(0.5, 0.0, &th));
        assert!(distortion_flag(0.89, 1565.0, &th));
        assert!(!distortion_flag(0.89, 65.0, &th));
    }

    #[test]
    fn report_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("correlation_report.csv");
        let r = XcorrResult {
            peak: 0.5,
            lag: 2,
            shift_ms: 2.0,
        };
        write_correlation_report(&p, &[("a-b".into(), r)]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "pair,peak,shift_ms\na-b,0.5,2\n");
    }

    fn signal() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, 2..64)
            .prop_filter("needs variance", |v| v.iter().any(|a| (a - v[0]).abs() > 1e-3))
    }

    proptest! {
        #[test]
        fn symmetric(x in signal(), y in signal()) {
            let a = xcorr_score(&sig(&x), &sig(&y)).unwrap();
            let b = xcorr_score(&sig(&y), &sig(&x)).unwrap();
            prop_assert!((a.peak - b.peak).abs() < 1e-9);
            // Exact ties between lags can legitimately pick different signs.
            let r = cross_correlation(&centered(&x, true), &centered(&y, true));
            let top = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if r.iter().filter(|v| (top - **v).abs() < 1e-9).count() == 1 {
                prop_assert_eq!(a.lag, -b.lag);
            }
        }

        #[test]
        fn scale_invariant(x in signal(), y in signal(), a in 0.01f64..100.0, b in 0.01f64..100.0) {
            let p = xcorr_score(&sig(&x), &sig(&y)).unwrap().peak;
            let xs: Vec<f64> = x.iter().map(|v| v * a).collect();
            let ys: Vec<f64> = y.iter().map(|v| v * b).collect();
            let q = xcorr_score(&sig(&xs), &sig(&ys)).unwrap().peak;
            prop_assert!((p - q).abs() < 1e-9);
        }

        #[test]
        fn bounded_by_one(x in signal(), y in signal()) {
            let xc = centered(&x, true);
            let yc = centered(&y, true);
            let norm = (dot(&xc, &xc) * dot(&yc, &yc)).sqrt();
            for v in cross_correlation(&xc, &yc) {
                prop_assert!((v / norm).abs() <= 1.0 + 1e-9);
            }
        }

        #[test]
        fn matches_brute_force(x in signal(), y in signal()) {
            let r = xcorr_score(&sig(&x), &sig(&y)).unwrap();
            let (peak, _) = oracle(&x, &y);
            prop_assert!((r.peak - peak).abs() < 1e-9);
        }
    }
}
