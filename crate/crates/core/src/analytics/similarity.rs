use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AnalyticsError, Point, ProbingCurve};

fn distance(a: Point, b: Point) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    (dx * dx + dy * dy).sqrt()
}

/// Discrete Fréchet distance between two point sequences, by the usual
/// coupling table: `ca[i][j] = max(d(i, j), min(ca[i-1][j], ca[i-1][j-1], ca[i][j-1]))`.
///
/// Panics if either sequence is empty.
pub fn frechet_points(a: &[Point], b: &[Point]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "Fréchet distance needs non-empty curves");
    let m = b.len();
    let mut prev = vec![0.0; m];
    let mut row = vec![0.0; m];
    for (i, &p) in a.iter().enumerate() {
        for (j, &q) in b.iter().enumerate() {
            let d = distance(p, q);
            row[j] = match (i, j) {
                (0, 0) => d,
                (0, _) => d.max(row[j - 1]),
                (_, 0) => d.max(prev[0]),
                _ => d.max(prev[j].min(prev[j - 1]).min(row[j - 1])),
            };
        }
        std::mem::swap(&mut prev, &mut row);
    }
    prev[m - 1]
}

pub fn frechet_distance(a: &ProbingCurve, b: &ProbingCurve) -> f64 {
    frechet_points(&a.points, &b.points)
}

/// Sample Pearson correlation of two equally long sequences, clamped to [-1, 1].
pub fn pearson_values(x: &[f64], y: &[f64]) -> Result<f64, AnalyticsError> {
    if x.len() != y.len() {
        return Err(AnalyticsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Err(AnalyticsError::TooFewPoints(n));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(AnalyticsError::ZeroVariance);
    }
    // sqrt(sxx * syy) keeps r exactly 1 for identical sequences.
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Correlation of the two curves' scores.
pub fn pearson(a: &ProbingCurve, b: &ProbingCurve) -> Result<f64, AnalyticsError> {
    pearson_values(&a.ys(), &b.ys())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityEdge {
    /// Curve labels (`language_category`).
    pub a: String,
    pub b: String,
    pub frechet: f64,
    pub pearson: f64,
}

/// Every pair `i < j` (in input order) with Fréchet distance at most
/// `max_frechet` and absolute correlation at least `min_abs_pearson`.
/// Pairs whose correlation is undefined are left out.
pub fn similarity_graph(
    curves: &[ProbingCurve],
    max_frechet: f64,
    min_abs_pearson: f64,
) -> Result<Vec<SimilarityEdge>, AnalyticsError> {
    if max_frechet.is_nan() || max_frechet < 0.0 {
        return Err(AnalyticsError::Threshold(format!("max_frechet {max_frechet} must be >= 0")));
    }
    if !(0.0..=1.0).contains(&min_abs_pearson) {
        return Err(AnalyticsError::Threshold(format!(
            "min_abs_pearson {min_abs_pearson} must lie in [0, 1]"
        )));
    }
    let n = curves.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    Ok(pairs
        .into_par_iter()
        .filter_map(|(i, j)| {
            let (a, b) = (&curves[i], &curves[j]);
            let frechet = frechet_distance(a, b);
            if frechet > max_frechet {
                return None;
            }
            let r = pearson(a, b).ok()?;
            (r.abs() >= min_abs_pearson).then(|| SimilarityEdge {
                a: a.id.label(),
                b: b.id.label(),
                frechet,
                pearson: r,
            })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::super::{CurveId, Metric};
    use super::*;
    use proptest::prelude::*;

    fn pts(v: &[(f64, f64)]) -> Vec<Point> {
        v.iter().map(|&(x, y)| Point { x, y }).collect()
    }

    fn curve(name: &str, ys: &[f64]) -> ProbingCurve {
        let n = ys.len();
        ProbingCurve {
            id: CurveId {
                language: name.into(),
                category: "Number".into(),
                metric: Metric::WeightedF1,
            },
            points: ys
                .iter()
                .enumerate()
                .map(|(i, &y)| Point {
                    x: if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 },
                    y,
                })
                .collect(),
        }
    }

    /// Minimum over every monotone coupling of the largest paired distance.
    fn brute_force(a: &[Point], b: &[Point]) -> f64 {
        fn walk(a: &[Point], b: &[Point], i: usize, j: usize, worst: f64) -> f64 {
            let dx = a[i].x - b[j].x;
            let dy = a[i].y - b[j].y;
            let worst = worst.max((dx * dx + dy * dy).sqrt());
            if i + 1 == a.len() && j + 1 == b.len() {
                return worst;
            }
            let mut best = f64::INFINITY;
            if i + 1 < a.len() {
                best = best.min(walk(a, b, i + 1, j, worst));
            }
            if j + 1 < b.len() {
                best = best.min(walk(a, b, i, j + 1, worst));
            }
            if i + 1 < a.len() && j + 1 < b.len() {
                best = best.min(walk(a, b, i + 1, j + 1, worst));
            }
            best
        }
        walk(a, b, 0, 0, 0.0)
    }

    #[test]
    fn frechet_examples() {
        let a = pts(&[(0.0, 0.0), (1.0, 0.0)]);
        let b = pts(&[(0.0, 1.0), (1.0, 1.0)]);
        assert_eq!(frechet_points(&a, &b), 1.0);
        let a = pts(&[(0.0, 0.0), (0.5, 1.0), (1.0, 0.0)]);
        let b = pts(&[(0.0, 0.0), (0.5, 0.0), (1.0, 0.0)]);
        assert_eq!(frechet_points(&a, &b), 1.0);
        assert_eq!(frechet_points(&a, &b), brute_force(&a, &b));
        assert_eq!(frechet_points(&a, &a), 0.0);
    }

    #[test]
    fn pearson_examples() {
        assert_eq!(pearson_values(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(), 1.0);
        assert_eq!(pearson_values(&[1.0, 2.0, 3.0], &[6.0, 4.0, 2.0]).unwrap(), -1.0);
        let r = pearson_values(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.8).abs() < 1e-12);
        assert_eq!(pearson_values(&[1.0, 1.0], &[1.0, 2.0]), Err(AnalyticsError::ZeroVariance));
        assert_eq!(pearson_values(&[1.0, 2.0], &[1.0, 2.0, 3.0]), Err(AnalyticsError::LengthMismatch(2, 3)));
        assert_eq!(pearson_values(&[1.0], &[1.0]), Err(AnalyticsError::TooFewPoints(1)));
    }

    #[test]
    fn graph_examples() {
        let a = curve("aa", &[0.5, 0.6, 0.8]);
        let edges = similarity_graph(&[a.clone(), a.clone()], 0.0, 1.0).unwrap();
        assert_eq!(edges.len(), 1);
        assert_eq!((edges[0].frechet, edges[0].pearson), (0.0, 1.0));

        let b = curve("bb", &[0.4, 0.5, 0.7]);
        assert!(similarity_graph(&[a.clone(), b.clone()], 0.0, 0.0).unwrap().is_empty());

        // a-b: offset 0.1 with r = 1. Both pairs with c fail the distance and
        // correlation thresholds.
        let c = curve("cc", &[0.9, 0.6, 0.9]);
        let c_vs_a = pearson(&a, &c).unwrap();
        assert!(c_vs_a.abs() < 0.9);
        let edges = similarity_graph(&[a, b, c], 0.15, 0.9).unwrap();
        assert_eq!(edges.len(), 1);
        assert_eq!((edges[0].a.as_str(), edges[0].b.as_str()), ("aa_Number", "bb_Number"));
        assert!((edges[0].frechet - 0.1).abs() < 1e-12);
        assert!((edges[0].pearson - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flat_curves_and_bad_thresholds() {
        let flat = curve("ff", &[0.5, 0.5]);
        assert!(similarity_graph(&[flat.clone(), flat], 1.0, 0.0).unwrap().is_empty());
        assert!(similarity_graph(&[], -0.1, 0.5).is_err());
        assert!(similarity_graph(&[], 0.1, 1.5).is_err());
        assert!(similarity_graph(&[], f64::NAN, 0.5).is_err());
    }

    fn small_curve() -> impl Strategy<Value = Vec<Point>> {
        prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..=6).prop_map(|v| pts(&v))
    }

    fn ys(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, len)
    }

    proptest! {
        #[test]
        fn dp_equals_brute_force(a in small_curve(), b in small_curve()) {
            prop_assert_eq!(frechet_points(&a, &b), brute_force(&a, &b));
        }

        #[test]
        fn frechet_is_a_metric(a in small_curve(), b in small_curve(), c in small_curve()) {
            let ab = frechet_points(&a, &b);
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, frechet_points(&b, &a));
            prop_assert_eq!(frechet_points(&a, &a), 0.0);
            prop_assert!(ab <= frechet_points(&a, &c) + frechet_points(&c, &b) + 1e-12);
        }

        #[test]
        fn frechet_grows_with_vertical_offset(a in small_curve(), b in small_curve(), s in 0.0f64..1.0, t in 0.0f64..1.0) {
            let (lo, hi) = if s < t { (s, t) } else { (t, s) };
            let shift = |k: f64| b.iter().map(|p| Point { x: p.x, y: p.y + 2.0 + k }).collect::<Vec<_>>();
            prop_assert!(frechet_points(&a, &shift(lo)) <= frechet_points(&a, &shift(hi)));
        }

        #[test]
        fn pearson_affine_invariance((x, y) in (2usize..8).prop_flat_map(|n| (ys(n), ys(n))), scale in 0.1f64..10.0, shift in -5.0f64..5.0) {
            if let Ok(r) = pearson_values(&x, &y) {
                let moved: Vec<f64> = y.iter().map(|v| v * scale + shift).collect();
                let flipped: Vec<f64> = y.iter().map(|v| -v * scale + shift).collect();
                prop_assert!((pearson_values(&x, &moved).unwrap() - r).abs() < 1e-12);
                prop_assert!((pearson_values(&x, &flipped).unwrap() + r).abs() < 1e-12);
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }

        #[test]
        fn graph_shrinks_as_thresholds_tighten(
            raw in prop::collection::vec(ys(4), 2..7),
            f1 in 0.0f64..1.0, f2 in 0.0f64..1.0, p1 in 0.0f64..1.0, p2 in 0.0f64..1.0,
        ) {
            let curves: Vec<ProbingCurve> = raw.iter().enumerate().map(|(i, v)| curve(&format!("l{i}"), v)).collect();
            let (f_lo, f_hi) = if f1 < f2 { (f1, f2) } else { (f2, f1) };
            let (p_lo, p_hi) = if p1 < p2 { (p1, p2) } else { (p2, p1) };
            let loose = similarity_graph(&curves, f_hi, p_lo).unwrap();
            let tight = similarity_graph(&curves, f_lo, p_hi).unwrap();
            for e in &tight {
                prop_assert!(loose.contains(e));
            }
        }
    }
}
