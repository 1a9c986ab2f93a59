use serde::{Deserialize, Serialize};
use statrs::function::beta::checked_beta_reg;

use super::AnalyticsError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub name: String,
    pub n: usize,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub f_statistic: f64,
    pub p_value: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub groups: Vec<GroupSummary>,
}

/// `P(F > f)` for an F distribution with `(d1, d2)` degrees of freedom,
/// via `I_{d2/(d2 + d1 f)}(d2/2, d1/2)`.
pub fn f_survival(f: f64, d1: f64, d2: f64) -> Result<f64, AnalyticsError> {
    if f <= 0.0 {
        return Ok(1.0);
    }
    if f.is_infinite() {
        return Ok(0.0);
    }
    let x = d2 / (d2 + d1 * f);
    checked_beta_reg(d2 / 2.0, d1 / 2.0, x)
        .map(|p| p.clamp(0.0, 1.0))
        .map_err(|e| AnalyticsError::Anova(e.to_string()))
}

/// One-way analysis of variance across named samples.
pub fn anova_oneway(groups: &[(String, Vec<f64>)]) -> Result<AnovaResult, AnalyticsError> {
    let k = groups.len();
    if k < 2 {
        return Err(AnalyticsError::Anova(format!("need at least 2 groups, got {k}")));
    }
    if let Some((name, _)) = groups.iter().find(|(_, v)| v.is_empty()) {
        return Err(AnalyticsError::Anova(format!("group {name:?} is empty")));
    }
    if groups.iter().flat_map(|(_, v)| v).any(|v| !v.is_finite()) {
        return Err(AnalyticsError::Anova("observations must be finite".into()));
    }
    let total: usize = groups.iter().map(|(_, v)| v.len()).sum();
    if total <= k {
        return Err(AnalyticsError::Anova(format!(
            "{total} observations leave no within-group degrees of freedom for {k} groups"
        )));
    }
    let summaries: Vec<GroupSummary> = groups
        .iter()
        .map(|(name, v)| GroupSummary {
            name: name.clone(),
            n: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
        })
        .collect();
    let grand = groups.iter().flat_map(|(_, v)| v).sum::<f64>() / total as f64;
    let ssb: f64 = summaries
        .iter()
        .map(|g| g.n as f64 * (g.mean - grand) * (g.mean - grand))
        .sum();
    let ssw: f64 = groups
        .iter()
        .zip(&summaries)
        .map(|((_, v), g)| v.iter().map(|x| (x - g.mean) * (x - g.mean)).sum::<f64>())
        .sum();
    if ssw == 0.0 {
        return Err(AnalyticsError::Anova("every group has zero variance".into()));
    }
    let df_between = k - 1;
    let df_within = total - k;
    let f_statistic = (ssb / df_between as f64) / (ssw / df_within as f64);
    let p_value = f_survival(f_statistic, df_between as f64, df_within as f64)?;
    Ok(AnovaResult {
        f_statistic,
        p_value,
        df_between,
        df_within,
        groups: summaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::function::gamma::ln_gamma;

    fn named(groups: &[&[f64]]) -> Vec<(String, Vec<f64>)> {
        groups
            .iter()
            .enumerate()
            .map(|(i, g)| (format!("g{i}"), g.to_vec()))
            .collect()
    }

    /// `1 - ∫_0^f density`, composite Simpson on the F density.
    fn survival_by_integration(f: f64, d1: f64, d2: f64) -> f64 {
        let ln_norm = ln_gamma((d1 + d2) / 2.0) - ln_gamma(d1 / 2.0) - ln_gamma(d2 / 2.0) + (d1 / 2.0) * (d1 / d2).ln();
        let density = |x: f64| {
            if x <= 0.0 {
                return if d1 == 2.0 { ln_norm.exp() } else { 0.0 };
            }
            (ln_norm + (d1 / 2.0 - 1.0) * x.ln() - ((d1 + d2) / 2.0) * (1.0 + d1 * x / d2).ln()).exp()
        };
        let steps = 20_000;
        let h = f / steps as f64;
        let mut acc = density(0.0) + density(f);
        for i in 1..steps {
            acc += density(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        1.0 - acc * h / 3.0
    }

    #[test]
    fn hand_computed_groups() {
        let r = anova_oneway(&named(&[&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0], &[3.0, 4.0, 5.0]])).unwrap();
        assert_eq!(r.f_statistic, 3.0);
        assert_eq!((r.df_between, r.df_within), (2, 6));
        assert!((r.p_value - survival_by_integration(3.0, 2.0, 6.0)).abs() < 1e-3);
        assert!((r.p_value - 0.125).abs() < 1e-3);
        assert_eq!(r.groups[1].mean, 3.0);
    }

    #[test]
    fn identical_groups() {
        let r = anova_oneway(&named(&[&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]])).unwrap();
        assert_eq!(r.f_statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn survival_matches_integration_for_other_shapes() {
        for &(f, d1, d2) in &[(1.5, 3.0, 10.0), (0.4, 4.0, 7.0), (6.0, 2.0, 20.0)] {
            let got = f_survival(f, d1, d2).unwrap();
            assert!((got - survival_by_integration(f, d1, d2)).abs() < 1e-6, "{f} {d1} {d2}");
        }
    }

    #[test]
    fn preconditions() {
        assert!(anova_oneway(&named(&[&[1.0, 2.0]])).is_err());
        assert!(anova_oneway(&named(&[&[1.0], &[2.0]])).is_err());
        assert!(anova_oneway(&named(&[&[1.0, 1.0], &[2.0, 2.0]])).is_err());
        assert!(anova_oneway(&named(&[&[1.0, 2.0], &[]])).is_err());
        assert!(anova_oneway(&named(&[&[1.0, f64::NAN], &[2.0, 3.0]])).is_err());
    }

    fn samples() -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(0.0f64..1.0, 2..6), 2..5)
    }

    proptest! {
        #[test]
        fn f_invariant_under_shift_and_scale(groups in samples(), shift in -10.0f64..10.0, scale in 0.1f64..10.0) {
            let base: Vec<(String, Vec<f64>)> = groups.iter().enumerate().map(|(i, g)| (i.to_string(), g.clone())).collect();
            let Ok(r) = anova_oneway(&base) else { return Ok(()); };
            let moved: Vec<(String, Vec<f64>)> = base
                .iter()
                .map(|(n, g)| (n.clone(), g.iter().map(|x| x * scale + shift).collect()))
                .collect();
            let m = anova_oneway(&moved).unwrap();
            prop_assert!((m.f_statistic - r.f_statistic).abs() <= 1e-6 * r.f_statistic.max(1.0));
            prop_assert!((0.0..=1.0).contains(&r.p_value));
        }
    }
}
