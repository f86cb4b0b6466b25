//! Small statistical helpers used by the harness and the test suites.

use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF};

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> Option<f64> {
    crate::estimators::sample_variance(xs)
}

/// Standard error of the mean.
pub fn std_error(xs: &[f64]) -> Option<f64> {
    variance(xs).map(|v| (v / xs.len() as f64).sqrt())
}

/// Approximate standard error of the sample variance, from the fourth central moment.
pub fn variance_std_error(xs: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    if xs.len() < 4 {
        return None;
    }
    let m = mean(xs)?;
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    let v = (m4 - m2 * m2 * (n - 3.0) / (n - 1.0)) / n;
    Some(v.max(0.0).sqrt())
}

/// Sample quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() || !(0.0..=1.0).contains(&q) {
        return None;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: f64,
    pub p_value: f64,
}

fn chi_square_p(statistic: f64, dof: f64) -> Result<f64> {
    let dist = ChiSquared::new(dof).map_err(|e| Error::Degenerate(e.to_string()))?;
    Ok(dist.sf(statistic))
}

/// Goodness of fit of observed counts against expected counts.
pub fn chi_square_gof(observed: &[f64], expected: &[f64]) -> Result<ChiSquareTest> {
    if observed.len() != expected.len() || observed.len() < 2 {
        return Err(Error::Degenerate("need at least two matching bins".into()));
    }
    let statistic = observed
        .iter()
        .zip(expected)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum::<f64>();
    let dof = (observed.len() - 1) as f64;
    Ok(ChiSquareTest {
        statistic,
        dof,
        p_value: chi_square_p(statistic, dof)?,
    })
}

/// Tests that `samples` (all at least 1) follow Geometric(p) on {1, 2, ...}.
///
/// Bins are kept while the expected count is at least 5; the rest is lumped into a tail bin.
pub fn geometric_gof(samples: &[f64], p: f64) -> Result<ChiSquareTest> {
    let n = samples.len() as f64;
    let mut expected = Vec::new();
    let mut mass = p;
    let mut tail = 1.0;
    while n * mass >= 5.0 && n * (tail - mass) >= 5.0 {
        expected.push(n * mass);
        tail -= mass;
        mass *= 1.0 - p;
    }
    expected.push(n * tail);
    if expected.len() < 2 {
        return Err(Error::Degenerate("too few samples for binning".into()));
    }
    let mut observed = vec![0.0; expected.len()];
    let last = expected.len() - 1;
    for &s in samples {
        let bin = (s.round() as usize).saturating_sub(1).min(last);
        observed[bin] += 1.0;
    }
    chi_square_gof(&observed, &expected)
}

/// Pearson test of independence in a two-way contingency table.
pub fn contingency_chi_square(table: &[Vec<f64>]) -> Result<ChiSquareTest> {
    let rows = table.len();
    let cols = table.first().map_or(0, Vec::len);
    if rows < 2 || cols < 2 || table.iter().any(|r| r.len() != cols) {
        return Err(Error::Degenerate("need a rectangular table with at least 2x2 cells".into()));
    }
    let total: f64 = table.iter().flatten().sum();
    let row_sums: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<f64> = (0..cols).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let mut statistic = 0.0;
    for i in 0..rows {
        for j in 0..cols {
            let e = row_sums[i] * col_sums[j] / total;
            if e > 0.0 {
                statistic += (table[i][j] - e).powi(2) / e;
            }
        }
    }
    let dof = ((rows - 1) * (cols - 1)) as f64;
    Ok(ChiSquareTest {
        statistic,
        dof,
        p_value: chi_square_p(statistic, dof)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SignTest {
    pub below: u64,
    pub total: u64,
    /// One-sided p-value for "more than half are below 1".
    pub p_value: f64,
}

/// One-sided sign test on how many values fall strictly below 1.
pub fn sign_test_below_one(values: &[f64]) -> Result<SignTest> {
    let total = values.iter().filter(|v| **v != 1.0).count() as u64;
    let below = values.iter().filter(|v| **v < 1.0).count() as u64;
    if total == 0 {
        return Ok(SignTest { below, total, p_value: 1.0 });
    }
    let dist = Binomial::new(0.5, total).map_err(|e| Error::Degenerate(e.to_string()))?;
    let p_value = if below == 0 { 1.0 } else { dist.sf(below - 1) };
    Ok(SignTest { below, total, p_value })
}

/// Jackknife standard error of a statistic computed from `n` leave-one-out values.
pub fn jackknife_se(leave_one_out: &[f64]) -> Option<f64> {
    let n = leave_one_out.len();
    if n < 2 {
        return None;
    }
    let m = mean(leave_one_out)?;
    let ss: f64 = leave_one_out.iter().map(|x| (x - m).powi(2)).sum();
    Some(((n - 1) as f64 / n as f64 * ss).sqrt())
}

/// Running sums of `x` and `x^2` for a pooled variance.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Moments {
    pub count: f64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    pub fn from_values(xs: &[f64]) -> Self {
        let mut m = Moments::default();
        for &x in xs {
            m.count += 1.0;
            m.sum += x;
            m.sum_sq += x * x;
        }
        m
    }

    pub fn combine(&self, other: &Moments) -> Moments {
        Moments {
            count: self.count + other.count,
            sum: self.sum + other.sum,
            sum_sq: self.sum_sq + other.sum_sq,
        }
    }

    pub fn variance(&self) -> Option<f64> {
        if self.count < 2.0 {
            return None;
        }
        let m = self.sum / self.count;
        Some(((self.sum_sq - self.count * m * m) / (self.count - 1.0)).max(0.0))
    }
}

/// Jackknife over groups of the ratio `Var(a) / Var(b)` of pooled variances.
///
/// Returns the full-sample ratio and its jackknife standard error.
pub fn pooled_ratio_jackknife(groups: &[(Moments, Moments)]) -> Option<(f64, Option<f64>)> {
    let ratio = |a: &Moments, b: &Moments| -> Option<f64> {
        let vb = b.variance()?;
        if vb > 0.0 {
            Some(a.variance()? / vb)
        } else {
            None
        }
    };
    let n = groups.len();
    let mut prefix = vec![(Moments::default(), Moments::default()); n + 1];
    for i in 0..n {
        prefix[i + 1] = (prefix[i].0.combine(&groups[i].0), prefix[i].1.combine(&groups[i].1));
    }
    let mut suffix = vec![(Moments::default(), Moments::default()); n + 1];
    for i in (0..n).rev() {
        suffix[i] = (suffix[i + 1].0.combine(&groups[i].0), suffix[i + 1].1.combine(&groups[i].1));
    }
    let full = ratio(&prefix[n].0, &prefix[n].1)?;
    let loo: Option<Vec<f64>> = (0..n)
        .map(|i| {
            let a = prefix[i].0.combine(&suffix[i + 1].0);
            let b = prefix[i].1.combine(&suffix[i + 1].1);
            ratio(&a, &b)
        })
        .collect();
    Some((full, loo.and_then(|v| jackknife_se(&v))))
}
