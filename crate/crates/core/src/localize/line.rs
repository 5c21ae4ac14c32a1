use super::matching::{scale_for, DistanceUnit, PixelCalibration};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    /// Unit vector along the line.
    pub direction: (f64, f64),
    /// Centroid of the points, which lies on the line.
    pub point: (f64, f64),
    pub mean_deviation: f64,
    pub deviations: Vec<f64>,
    pub unit: DistanceUnit,
}

/// Whether every point lies exactly on one line, decided with exact
/// orientation predicates.
fn exactly_collinear(points: &[(f64, f64)]) -> bool {
    let c = |p: (f64, f64)| robust::Coord { x: p.0, y: p.1 };
    let a = points[0];
    let b = points.iter().copied().max_by(|p, q| (p.0 - a.0).hypot(p.1 - a.1).total_cmp(&(q.0 - a.0).hypot(q.1 - a.1)));
    let b = b.expect("at least one point");
    points.iter().all(|&p| robust::orient2d(c(a), c(b), c(p)) == 0.0)
}

/// Total-least-squares line: the principal axis of the centred point cloud.
/// Deviations are perpendicular distances, in nm when calibrated, and exactly
/// zero for exactly collinear points.
pub fn line_fit_tls(points: &[(f64, f64)], cal: Option<&PixelCalibration>) -> Result<LineFit> {
    if points.len() < 3 {
        return Err(Error::InvalidArgument(format!("line fit needs at least 3 points, got {}", points.len())));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx + syy == 0.0 {
        return Err(Error::Degenerate("all points coincide".into()));
    }
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let (s, c) = angle.sin_cos();
    let (scale, unit) = scale_for(cal);
    let deviations: Vec<f64> = if exactly_collinear(points) {
        vec![0.0; points.len()]
    } else {
        points.iter().map(|&(x, y)| (-(x - mx) * s + (y - my) * c).abs() * scale).collect()
    };
    let mean_deviation = deviations.iter().sum::<f64>() / n;
    Ok(LineFit { direction: (c, s), point: (mx, my), mean_deviation, deviations, unit })
}
