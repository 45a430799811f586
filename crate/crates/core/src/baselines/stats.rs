use statrs::distribution::{ContinuousCDF, StudentsT};

/// Sample mean and unbiased standard deviation.
pub fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Result of a two-sample, unequal-variance t-test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WelchOutcome {
    Test {
        t: f64,
        dof: f64,
        p: f64,
    },
    /// Both samples constant with equal means: t is undefined, p = 1.
    Identical,
    /// Both samples constant with different means: p = 0.
    DegenerateVariance {
        mean_diff: f64,
    },
}

impl WelchOutcome {
    pub fn p_value(&self) -> f64 {
        match *self {
            WelchOutcome::Test { p, .. } => p,
            WelchOutcome::Identical => 1.0,
            WelchOutcome::DegenerateVariance { .. } => 0.0,
        }
    }

    pub fn t_stat(&self) -> Option<f64> {
        match *self {
            WelchOutcome::Test { t, .. } => Some(t),
            _ => None,
        }
    }

    pub fn note(&self) -> &'static str {
        match self {
            WelchOutcome::Test { .. } => "",
            WelchOutcome::Identical => "n/a",
            WelchOutcome::DegenerateVariance { .. } => "degenerate variance",
        }
    }
}

/// Welch's t-test of `a` against `b` with Welch–Satterthwaite degrees of
/// freedom and a two-sided p-value. Both samples need at least two values.
pub fn welch(a: &[f64], b: &[f64]) -> WelchOutcome {
    assert!(
        a.len() >= 2 && b.len() >= 2,
        "welch needs >= 2 values per sample"
    );
    let (ma, sa) = mean_std(a);
    let (mb, sb) = mean_std(b);
    let va = sa * sa / a.len() as f64;
    let vb = sb * sb / b.len() as f64;
    let se2 = va + vb;
    if se2 == 0.0 {
        return if ma == mb {
            WelchOutcome::Identical
        } else {
            WelchOutcome::DegenerateVariance { mean_diff: ma - mb }
        };
    }
    let t = (ma - mb) / se2.sqrt();
    let dof = se2 * se2 / (va * va / (a.len() as f64 - 1.0) + vb * vb / (b.len() as f64 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, dof).expect("positive dof");
    let p = (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0);
    WelchOutcome::Test { t, dof, p }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_samples() {
        assert_eq!(welch(&[1.0, 1.0], &[1.0, 1.0]), WelchOutcome::Identical);
        assert_eq!(welch(&[1.0, 1.0], &[1.0, 1.0]).note(), "n/a");
        let w = welch(&[2.0, 2.0, 2.0], &[1.0, 1.0]);
        assert_eq!(w.p_value(), 0.0);
        assert_eq!(w.note(), "degenerate variance");
    }

    #[test]
    fn mean_std_small() {
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m, 5.0);
        assert!((s - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
    }
}
