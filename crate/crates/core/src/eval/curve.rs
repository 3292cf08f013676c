//! Precision-recall curve integration.

/// One point of a threshold sweep, percent scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Trapezoidal area over the recall axis, percent-normalized to [0, 100].
///
/// Precision is first turned into a monotone staircase by taking the
/// cumulative maximum from the high-recall side; the area then runs from
/// recall 0 (at the staircase's leading precision) through the observed
/// points. A single point degenerates to the p·r rectangle.
pub fn auc(points: &[CurvePoint]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let mut sorted: Vec<(f64, f64)> = points.iter().map(|p| (p.recall, p.precision)).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut staircase = sorted.clone();
    for i in (0..staircase.len().saturating_sub(1)).rev() {
        staircase[i].1 = staircase[i].1.max(staircase[i + 1].1);
    }
    let mut area = staircase[0].0 * staircase[0].1;
    for w in staircase.windows(2) {
        area += (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0;
    }
    area / 100.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_is_a_rectangle() {
        let pts = [CurvePoint {
            threshold: 0.0,
            precision: 80.0,
            recall: 50.0,
        }];
        assert!((auc(&pts) - 40.0).abs() < 1e-9);
    }

    #[test]
    fn staircase_uses_cumulative_max_precision() {
        // a dip in precision below a later (higher-recall) point is lifted
        let pts = [
            CurvePoint {
                threshold: 0.9,
                precision: 60.0,
                recall: 20.0,
            },
            CurvePoint {
                threshold: 0.5,
                precision: 90.0,
                recall: 40.0,
            },
        ];
        // staircase precision at recall 20 becomes 90, so the area is
        // 20*90 (leading rectangle) + 20*90 (flat trapezoid) = 3600,
        // normalized by 100
        assert!((auc(&pts) - 36.0).abs() < 1e-9);
    }

    #[test]
    fn empty_curve_is_zero() {
        assert_eq!(auc(&[]), 0.0);
    }
}
