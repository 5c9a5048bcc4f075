//! Completion-time statistics and effect sizes.

use serde::{Deserialize, Serialize};

use super::MetricsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletionStats {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator); 0 for a single value.
    pub std: f64,
    /// Standard error of the mean, `std / √n`.
    pub sem: f64,
    /// Set when `n = 1` and the dispersion is a convention, not an estimate.
    #[serde(default)]
    pub degenerate: bool,
}

/// How a dispersion figure (a reported `±`, or the fields of
/// [`CompletionStats`]) turns into the σ of the effect size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispersionMode {
    /// σ is the standard deviation.
    Std,
    /// σ = sem · √n; a reported `±` is read as a standard error.
    #[default]
    SemTimesSqrtN,
}

impl DispersionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DispersionMode::Std => "std",
            DispersionMode::SemTimesSqrtN => "sem_times_sqrt_n",
        }
    }
}

impl std::fmt::Display for DispersionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DispersionMode {
    type Err = MetricsError;
    fn from_str(s: &str) -> Result<Self, MetricsError> {
        match s {
            "std" => Ok(DispersionMode::Std),
            "sem_times_sqrt_n" | "sem" => Ok(DispersionMode::SemTimesSqrtN),
            other => Err(MetricsError::Config(format!(
                "unknown dispersion mode `{other}` (expected std or sem_times_sqrt_n)"
            ))),
        }
    }
}

impl CompletionStats {
    /// Rebuilds statistics from a published `mean ± dispersion` over `n`
    /// trials, reading the `±` according to `mode`.
    pub fn from_reported(mean: f64, dispersion: f64, n: usize, mode: DispersionMode) -> Result<Self, MetricsError> {
        if n == 0 {
            return Err(MetricsError::Empty);
        }
        if !mean.is_finite() || !(dispersion >= 0.0) || !dispersion.is_finite() {
            return Err(MetricsError::ContractViolation(format!(
                "invalid reported statistics {mean} ± {dispersion}"
            )));
        }
        let root = (n as f64).sqrt();
        let (std, sem) = match mode {
            DispersionMode::Std => (dispersion, dispersion / root),
            DispersionMode::SemTimesSqrtN => (dispersion * root, dispersion),
        };
        Ok(Self {
            n,
            mean,
            std,
            sem,
            degenerate: n == 1,
        })
    }

    fn sigma(&self, mode: DispersionMode) -> f64 {
        match mode {
            DispersionMode::Std => self.std,
            DispersionMode::SemTimesSqrtN => self.sem * (self.n as f64).sqrt(),
        }
    }

    /// Multiplies every time-valued field by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            mean: self.mean * alpha,
            std: self.std * alpha,
            sem: self.sem * alpha,
            ..*self
        }
    }
}

/// Sample mean, sample standard deviation and standard error of `times`.
pub fn completion_stats(times: &[f64]) -> Result<CompletionStats, MetricsError> {
    if times.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(bad) = times.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(MetricsError::ContractViolation(format!(
            "completion times must be finite and positive, got {bad}"
        )));
    }
    let n = times.len();
    // Sorting first makes the result independent of input order to the last bit.
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        let ss: f64 = sorted.iter().map(|t| (t - mean).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(CompletionStats {
        n,
        mean,
        std,
        sem: std / (n as f64).sqrt(),
        degenerate: n == 1,
    })
}

/// Standardised mean difference `(t̄_h − t̄_f) / √(σ_h² + σ_f²)`; positive
/// when the first (haptic) platform is slower.
pub fn smd(h: &CompletionStats, f: &CompletionStats, mode: DispersionMode) -> Result<f64, MetricsError> {
    let denom = (h.sigma(mode).powi(2) + f.sigma(mode).powi(2)).sqrt();
    if !(denom > 0.0) {
        return Err(MetricsError::DegenerateDispersion);
    }
    Ok((h.mean - f.mean) / denom)
}

/// Time saved by the second platform as a percentage of the first's mean.
pub fn percent_reduction(mean_h: f64, mean_f: f64) -> Result<f64, MetricsError> {
    if !(mean_h > 0.0) {
        return Err(MetricsError::ContractViolation(format!(
            "baseline mean must be > 0, got {mean_h}"
        )));
    }
    Ok(100.0 * (mean_h - mean_f) / mean_h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_times_have_no_spread() {
        let s = completion_stats(&[10.0, 10.0, 10.0]).unwrap();
        assert_eq!((s.mean, s.std, s.sem), (10.0, 0.0, 0.0));
    }

    #[test]
    fn five_evenly_spaced_times() {
        let s = completion_stats(&[100.0, 110.0, 120.0, 130.0, 140.0]).unwrap();
        assert_eq!(s.mean, 120.0);
        assert!((s.std - 250f64.sqrt()).abs() < 1e-12);
        assert!((s.sem - 50f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn single_time_is_flagged() {
        let s = completion_stats(&[42.0]).unwrap();
        assert_eq!((s.mean, s.std, s.sem, s.degenerate), (42.0, 0.0, 0.0, true));
    }

    #[test]
    fn empty_and_invalid_inputs_are_errors() {
        assert!(matches!(completion_stats(&[]), Err(MetricsError::Empty)));
        assert!(completion_stats(&[1.0, -2.0]).is_err());
        assert!(completion_stats(&[f64::NAN]).is_err());
    }

    #[test]
    fn unbolting_row_under_both_readings() {
        let read = |mode| {
            let h = CompletionStats::from_reported(188.0, 23.0, 5, mode).unwrap();
            let f = CompletionStats::from_reported(124.0, 13.0, 5, mode).unwrap();
            smd(&h, &f, mode).unwrap()
        };
        assert!((read(DispersionMode::SemTimesSqrtN) - 1.083).abs() < 5e-4);
        assert!((read(DispersionMode::Std) - 2.422).abs() < 5e-4);
    }

    #[test]
    fn identical_stats_give_zero() {
        let s = completion_stats(&[5.0, 6.0, 7.0]).unwrap();
        assert_eq!(smd(&s, &s, DispersionMode::Std).unwrap(), 0.0);
    }

    #[test]
    fn zero_dispersion_is_degenerate() {
        let s = completion_stats(&[5.0]).unwrap();
        let t = completion_stats(&[6.0]).unwrap();
        assert!(matches!(
            smd(&s, &t, DispersionMode::Std),
            Err(MetricsError::DegenerateDispersion)
        ));
    }

    #[test]
    fn reductions() {
        assert!((percent_reduction(188.0, 124.0).unwrap() - 34.04).abs() < 0.01);
        assert!((percent_reduction(179.0, 77.0).unwrap() - 56.98).abs() < 0.01);
        assert_eq!(percent_reduction(100.0, 100.0).unwrap(), 0.0);
        assert!(percent_reduction(0.0, 1.0).is_err());
    }

    #[test]
    fn modes_parse() {
        assert_eq!("std".parse::<DispersionMode>().unwrap(), DispersionMode::Std);
        assert_eq!(
            "sem_times_sqrt_n".parse::<DispersionMode>().unwrap(),
            DispersionMode::SemTimesSqrtN
        );
        assert!("iqr".parse::<DispersionMode>().is_err());
    }

    fn arb_times() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(1.0..500.0f64, 2..12)
    }

    proptest! {
        #[test]
        fn sem_is_std_over_root_n(times in arb_times()) {
            let s = completion_stats(&times).unwrap();
            prop_assert!((s.sem - s.std / (s.n as f64).sqrt()).abs() < 1e-12);
            prop_assert!(s.std >= 0.0);
        }

        #[test]
        fn stats_ignore_input_order(times in arb_times(), seed in any::<u64>()) {
            let mut shuffled = times.clone();
            let k = (seed as usize) % shuffled.len();
            shuffled.rotate_left(k);
            shuffled.reverse();
            prop_assert_eq!(completion_stats(&times).unwrap(), completion_stats(&shuffled).unwrap());
        }

        #[test]
        fn smd_is_antisymmetric_and_scale_free(a in arb_times(), b in arb_times(), alpha in 0.01..100.0f64) {
            let (h, f) = (completion_stats(&a).unwrap(), completion_stats(&b).unwrap());
            for mode in [DispersionMode::Std, DispersionMode::SemTimesSqrtN] {
                let d = smd(&h, &f, mode).unwrap();
                prop_assert!((d + smd(&f, &h, mode).unwrap()).abs() < 1e-12);
                let scaled = smd(&h.scaled(alpha), &f.scaled(alpha), mode).unwrap();
                prop_assert!((d - scaled).abs() < 1e-9 * d.abs().max(1.0));
            }
        }
    }
}
