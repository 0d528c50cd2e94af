use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub p: f64,
}

/// Pearson chi-square (no continuity correction) on the 2×2 table of
/// correct/incorrect counts for two systems.
pub fn chi_square_2x2(correct_a: u64, n_a: u64, correct_b: u64, n_b: u64) -> Result<ChiSquare> {
    if n_a == 0 || n_b == 0 {
        return Err(Error::invalid("chi-square needs non-empty groups"));
    }
    if correct_a > n_a || correct_b > n_b {
        return Err(Error::invalid("more correct documents than documents"));
    }
    let observed = [
        [correct_a as f64, (n_a - correct_a) as f64],
        [correct_b as f64, (n_b - correct_b) as f64],
    ];
    let rows = [n_a as f64, n_b as f64];
    let cols = [observed[0][0] + observed[1][0], observed[0][1] + observed[1][1]];
    let total = rows[0] + rows[1];
    let mut statistic = 0.0;
    for (i, row) in observed.iter().enumerate() {
        for (j, &o) in row.iter().enumerate() {
            let e = rows[i] * cols[j] / total;
            if e == 0.0 {
                return Err(Error::Degenerate(
                    "chi-square table has an expected count of zero".into(),
                ));
            }
            statistic += (o - e) * (o - e) / e;
        }
    }
    let p = ChiSquared::new(1.0).expect("one degree of freedom").sf(statistic);
    Ok(ChiSquare { statistic, p })
}

/// `min(1, m·p)` with `m` the number of p-values. Inputs are expected in [0, 1].
pub fn bonferroni(p_values: &[f64]) -> Vec<f64> {
    let m = p_values.len() as f64;
    p_values.iter().map(|p| (p * m).min(1.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn homogeneous_table() {
        let c = chi_square_2x2(30, 60, 15, 30).unwrap();
        assert!(c.statistic.abs() < 1e-12);
        assert!((c.p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_correct_is_degenerate() {
        assert!(matches!(chi_square_2x2(5, 5, 7, 7), Err(Error::Degenerate(_))));
    }

    #[test]
    fn bonferroni_small() {
        assert_eq!(bonferroni(&[0.01]), vec![0.01]);
        assert_eq!(bonferroni(&[0.001, 0.02]), vec![0.002, 0.04]);
    }
}
