use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// z-value of the two-sided 95% normal interval.
pub const Z_95: f64 = 1.96;

/// Mean and normal-approximation 95% half-width over trial values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: Option<f64>,
    /// `None` with fewer than two samples.
    pub ci95: Option<f64>,
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Unbiased sample standard deviation (n − 1 denominator).
pub fn sample_std(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    // Identical trials give an exact zero instead of rounding residue.
    if values.iter().all(|v| *v == values[0]) {
        return Some(0.0);
    }
    let m = mean(values)?;
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Some((ss / (values.len() - 1) as f64).sqrt())
}

/// `1.96 · s / √n`.
pub fn ci95_half_width(values: &[f64]) -> Option<f64> {
    sample_std(values).map(|s| Z_95 * s / (values.len() as f64).sqrt())
}

pub fn summarize(values: &[f64]) -> Summary {
    Summary { n: values.len(), mean: mean(values), ci95: ci95_half_width(values) }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p_two_sided: f64,
}

/// Welch's unequal-variance two-sample t-test.
///
/// Returns `None` when either sample has fewer than two values or both
/// variances are zero.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Option<TTest> {
    let (sa, sb) = (sample_std(a)?, sample_std(b)?);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (sa * sa / na, sb * sb / nb);
    let se2 = va + vb;
    if se2 == 0.0 {
        return None;
    }
    let t = (mean(a)? - mean(b)?) / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Some(TTest { t, df, p_two_sided: p.clamp(0.0, 1.0) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ci_textbook_formula() {
        // Hand computation: mean 0.90, deviations (-.02,-.01,0,.01,.02),
        // ss = 0.001, s = sqrt(0.001/4) = 0.0158113883, ci = 1.96*s/sqrt(5).
        let v = [0.88, 0.89, 0.90, 0.91, 0.92];
        let ci = ci95_half_width(&v).unwrap();
        assert!((ci - 0.013859292911256342).abs() < 1e-12, "{ci}");
        assert_eq!(ci95_half_width(&[0.5]), None);
        assert_eq!(ci95_half_width(&[0.7, 0.7, 0.7]), Some(0.0));
    }

    #[test]
    fn welch_detects_separated_samples() {
        let a = [0.93, 0.932, 0.929, 0.931, 0.928];
        let b = [0.85, 0.86, 0.84, 0.855, 0.845];
        let t = welch_t_test(&a, &b).unwrap();
        assert!(t.t > 0.0);
        assert!(t.p_two_sided < 0.001);
        let same = welch_t_test(&a, &a).unwrap();
        assert!((same.p_two_sided - 1.0).abs() < 1e-9);
    }
}
