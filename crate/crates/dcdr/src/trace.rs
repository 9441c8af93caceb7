//! Trace ingestion and synthesis: request CSVs, wind-speed CSVs, a seeded
//! diurnal demand generator, and a turbine power curve.
//!
//! File formats (UTF-8, LF or CRLF, '.' decimal point):
//! - request trace: header `slot,requests`, slot = 1-based contiguous integer;
//! - wind trace: header `slot,wind_mps`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::optimizer::RenewableProfile;

/// A validated single-column trace; the slot index is implicit (1..=len).
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrace {
    pub values: Vec<f64>,
}

impl RawTrace {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A wind turbine's cut-in / rated / cut-out curve.
#[derive(Debug, Clone, PartialEq)]
pub struct TurbineCurve {
    pub cut_in_mps: f64,
    pub rated_mps: f64,
    pub cut_out_mps: f64,
    pub rated_power_kw: f64,
    pub turbine_count: u32,
}

impl TurbineCurve {
    pub fn new(
        cut_in_mps: f64,
        rated_mps: f64,
        cut_out_mps: f64,
        rated_power_kw: f64,
        turbine_count: u32,
    ) -> Result<Self> {
        let ordered = cut_in_mps >= 0.0 && cut_in_mps < rated_mps && rated_mps < cut_out_mps;
        if !ordered || !cut_in_mps.is_finite() || !cut_out_mps.is_finite() {
            return Err(Error::InvalidParameter {
                what: "turbine curve",
                detail: format!(
                    "speeds must satisfy 0 <= cut-in ({cut_in_mps}) < rated ({rated_mps}) < cut-out ({cut_out_mps})"
                ),
            });
        }
        if !rated_power_kw.is_finite() || rated_power_kw <= 0.0 {
            return Err(Error::InvalidParameter {
                what: "turbine curve",
                detail: format!("rated power {rated_power_kw} must be positive"),
            });
        }
        Ok(Self {
            cut_in_mps,
            rated_mps,
            cut_out_mps,
            rated_power_kw,
            turbine_count,
        })
    }

    /// Electrical power of one turbine at wind speed `v`, KW. Cubic ramp
    /// between cut-in and rated speed, flat at rated, zero outside.
    pub fn power_kw(&self, v: f64) -> f64 {
        if v < self.cut_in_mps || v >= self.cut_out_mps {
            0.0
        } else if v >= self.rated_mps {
            self.rated_power_kw
        } else {
            let num = v.powi(3) - self.cut_in_mps.powi(3);
            let den = self.rated_mps.powi(3) - self.cut_in_mps.powi(3);
            self.rated_power_kw * num / den
        }
    }
}

fn parse_trace(path: &Path, value_column: &str) -> Result<RawTrace> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_trace_reader(file, path, value_column)
}

fn parse_trace_reader(reader: impl Read, path: &Path, value_column: &str) -> Result<RawTrace> {
    let fail = |line: usize, detail: String| Error::TraceFormat {
        path: path.to_path_buf(),
        line,
        detail,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| fail(1, e.to_string()))?
        .clone();
    let expected = ["slot", value_column];
    if headers.len() != 2 || headers[0] != *expected[0] || headers[1] != *expected[1] {
        return Err(fail(
            1,
            format!("expected header 'slot,{value_column}', got '{}'", headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut values = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| fail(line, e.to_string()))?;
        if record.len() != 2 {
            return Err(fail(line, format!("expected 2 fields, got {}", record.len())));
        }
        let slot: usize = record[0]
            .parse()
            .map_err(|_| fail(line, format!("bad slot index '{}'", &record[0])))?;
        if slot != i + 1 {
            return Err(fail(
                line,
                format!("non-contiguous slot {slot}, expected {}", i + 1),
            ));
        }
        let value: f64 = record[1]
            .parse()
            .map_err(|_| fail(line, format!("bad value '{}'", &record[1])))?;
        if !value.is_finite() || value < 0.0 {
            return Err(fail(line, format!("value {value} must be finite and non-negative")));
        }
        values.push(value);
    }
    if values.is_empty() {
        return Err(fail(2, "trace contains no rows".into()));
    }
    Ok(RawTrace { values })
}

/// Loads a request trace and scales every entry by `scale`.
pub fn load_request_trace(path: impl AsRef<Path>, scale: f64) -> Result<Vec<f64>> {
    if !scale.is_finite() || scale < 0.0 {
        return Err(Error::InvalidParameter {
            what: "trace scale",
            detail: format!("{scale} must be finite and non-negative"),
        });
    }
    let trace = parse_trace(path.as_ref(), "requests")?;
    Ok(trace.values.into_iter().map(|v| v * scale).collect())
}

/// Writes a request trace in the format [`load_request_trace`] reads.
pub fn write_request_trace(path: impl AsRef<Path>, requests: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = File::create(path).map_err(io_err)?;
    writeln!(file, "slot,requests").map_err(io_err)?;
    for (t, v) in requests.iter().enumerate() {
        writeln!(file, "{},{}", t + 1, v).map_err(io_err)?;
    }
    Ok(())
}

/// Loads a wind-speed trace (m/s).
pub fn load_wind_trace(path: impl AsRef<Path>) -> Result<RawTrace> {
    parse_trace(path.as_ref(), "wind_mps")
}

/// Synthetic demand: a sinusoid of the given period (slots) around `base`,
/// plus uniform noise in `[-noise_amplitude, +noise_amplitude]`, clipped at
/// zero. Byte-identical for identical arguments and seed.
pub fn synth_diurnal_trace(
    tau: usize,
    base: f64,
    amplitude: f64,
    period: f64,
    noise_amplitude: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(amplitude >= 0.0 && base >= amplitude) {
        return Err(Error::InvalidParameter {
            what: "synthetic trace",
            detail: format!("need base ({base}) >= amplitude ({amplitude}) >= 0"),
        });
    }
    if !period.is_finite() || period <= 0.0 {
        return Err(Error::InvalidParameter {
            what: "synthetic trace",
            detail: format!("period {period} must be positive"),
        });
    }
    if !noise_amplitude.is_finite() || noise_amplitude < 0.0 {
        return Err(Error::InvalidParameter {
            what: "synthetic trace",
            detail: format!("noise amplitude {noise_amplitude} must be non-negative"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lam = Vec::with_capacity(tau);
    for t in 1..=tau {
        let phase = 2.0 * std::f64::consts::PI * t as f64 / period;
        let mut v = base + amplitude * phase.sin();
        if noise_amplitude > 0.0 {
            v += rng.gen_range(-noise_amplitude..=noise_amplitude);
        }
        lam.push(v.max(0.0));
    }
    Ok(lam)
}

/// Converts wind speeds to per-slot renewable energy:
/// `G[t] = turbine_count * power(v[t]) * slot_hours` (KWh).
pub fn wind_to_power(
    speeds: &RawTrace,
    curve: &TurbineCurve,
    slot_hours: f64,
) -> Result<RenewableProfile> {
    if !slot_hours.is_finite() || slot_hours <= 0.0 {
        return Err(Error::InvalidParameter {
            what: "slot length",
            detail: format!("{slot_hours} must be positive"),
        });
    }
    let energy_kwh = speeds
        .values
        .iter()
        .map(|&v| f64::from(curve.turbine_count) * curve.power_kw(v) * slot_hours)
        .collect();
    RenewableProfile::new(energy_kwh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;
    use std::io::Cursor;

    fn parse_str(content: &str, column: &str) -> Result<RawTrace> {
        parse_trace_reader(Cursor::new(content.to_owned()), Path::new("test.csv"), column)
    }

    fn curve() -> TurbineCurve {
        TurbineCurve::new(3.0, 12.0, 25.0, 1500.0, 4).unwrap()
    }

    #[test]
    fn two_row_trace_parses() {
        let trace = parse_str("slot,requests\n1,10\n2,20\n", "requests").unwrap();
        assert_eq!(trace.values, vec![10.0, 20.0]);
    }

    #[test]
    fn crlf_accepted() {
        let trace = parse_str("slot,requests\r\n1,10\r\n2,20\r\n", "requests").unwrap();
        assert_eq!(trace.values, vec![10.0, 20.0]);
    }

    #[test]
    fn scale_is_linear() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, "slot,requests\n1,10\n2,20\n").unwrap();
        assert_eq!(load_request_trace(&path, 0.5).unwrap(), vec![5.0, 10.0]);
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let lam = vec![10.0, 0.015625, 1234.5678901234567, 0.0];
        write_request_trace(&path, &lam).unwrap();
        assert_eq!(load_request_trace(&path, 1.0).unwrap(), lam);
    }

    #[test]
    fn malformed_rows_are_structured_errors() {
        for bad in [
            "slot,requests\n1,abc\n",
            "slot,requests\n2,10\n",       // starts at 2
            "slot,requests\n1,10\n3,20\n", // gap
            "slot,requests\n1,-4\n",       // negative
            "slots,requests\n1,10\n",      // wrong header
            "slot,requests\n",             // empty body
        ] {
            let err = parse_str(bad, "requests").unwrap_err();
            assert!(matches!(err, Error::TraceFormat { .. }), "input: {bad:?}");
        }
    }

    #[test]
    fn synth_flat_when_amplitude_zero() {
        let lam = synth_diurnal_trace(8, 100.0, 0.0, 24.0, 0.0, 1).unwrap();
        assert!(lam.iter().all(|&v| v == 100.0));
    }

    #[test]
    fn synth_sinusoid_extremes() {
        // period 4 puts exact +1/-1 sine values at t=1 and t=3
        let lam = synth_diurnal_trace(4, 100.0, 100.0, 4.0, 0.0, 1).unwrap();
        assert_abs_diff_eq!(lam[0], 200.0, epsilon = 1e-9);
        assert_abs_diff_eq!(lam[2], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn synth_is_deterministic_per_seed() {
        let a = synth_diurnal_trace(100, 500.0, 200.0, 24.0, 50.0, 42).unwrap();
        let b = synth_diurnal_trace(100, 500.0, 200.0, 24.0, 50.0, 42).unwrap();
        let c = synth_diurnal_trace(100, 500.0, 200.0, 24.0, 50.0, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn wind_below_cut_in_produces_nothing() {
        let g = wind_to_power(&RawTrace { values: vec![2.9] }, &curve(), 1.0).unwrap();
        assert_eq!(g.energy_kwh, vec![0.0]);
    }

    #[test]
    fn wind_at_rated_hits_the_plateau() {
        let g = wind_to_power(&RawTrace { values: vec![12.0] }, &curve(), 1.0).unwrap();
        assert_eq!(g.energy_kwh, vec![4.0 * 1500.0]);
    }

    #[test]
    fn wind_midway_matches_cubic_oracle() {
        // v = 7.5: 1500 * (7.5^3 - 27) / (1728 - 27) per turbine, frozen from
        // an independent evaluation
        let g = wind_to_power(&RawTrace { values: vec![7.5] }, &curve(), 1.0).unwrap();
        assert_relative_eq!(g.energy_kwh[0], 1392.85714285714, max_relative = 1e-12);
    }

    #[test]
    fn wind_at_cut_out_drops_to_zero() {
        let g = wind_to_power(&RawTrace { values: vec![25.0, 24.999] }, &curve(), 1.0).unwrap();
        assert_eq!(g.energy_kwh[0], 0.0);
        assert_eq!(g.energy_kwh[1], 4.0 * 1500.0);
    }

    #[test]
    fn invalid_curve_rejected() {
        assert!(TurbineCurve::new(12.0, 3.0, 25.0, 1500.0, 1).is_err());
        assert!(TurbineCurve::new(3.0, 12.0, 12.0, 1500.0, 1).is_err());
        assert!(TurbineCurve::new(3.0, 12.0, 25.0, 0.0, 1).is_err());
    }

    proptest! {
        #[test]
        fn wind_energy_is_bounded(v in 0.0f64..40.0, hours in 0.25f64..4.0) {
            let c = curve();
            let g = wind_to_power(&RawTrace { values: vec![v] }, &c, hours).unwrap();
            let ceiling = f64::from(c.turbine_count) * c.rated_power_kw * hours;
            prop_assert!(g.energy_kwh[0] >= 0.0 && g.energy_kwh[0] <= ceiling);
        }

        #[test]
        fn power_curve_monotone_below_cut_out(
            a in 0.0f64..24.99, b in 0.0f64..24.99,
        ) {
            let c = curve();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(c.power_kw(lo) <= c.power_kw(hi) + 1e-12);
        }
    }
}
