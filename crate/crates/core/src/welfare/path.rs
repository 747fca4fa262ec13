use serde::{Deserialize, Serialize};

use crate::hedonic::Theta;

/// A piecewise-affine curve `θ(t)`, `t ∈ [0, 1]`, from `a` to `b`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaPath {
    #[default]
    StraightLine,
    /// Move `θ1` first, then `θ2`.
    AxisFirstTheta1,
    /// Move `θ2` first, then `θ1`.
    AxisFirstTheta2,
    /// Through the listed interior points, with `t` allocated by arc length.
    Waypoints(Vec<Theta>),
}

impl ThetaPath {
    pub fn name(&self) -> &'static str {
        match self {
            ThetaPath::StraightLine => "straight_line",
            ThetaPath::AxisFirstTheta1 => "axis_first_theta1",
            ThetaPath::AxisFirstTheta2 => "axis_first_theta2",
            ThetaPath::Waypoints(_) => "waypoints",
        }
    }

    /// Vertices of the path from `a` to `b`.
    pub fn vertices(&self, a: Theta, b: Theta) -> Vec<Theta> {
        match self {
            ThetaPath::StraightLine => vec![a, b],
            ThetaPath::AxisFirstTheta1 => vec![a, [b[0], a[1]], b],
            ThetaPath::AxisFirstTheta2 => vec![a, [a[0], b[1]], b],
            ThetaPath::Waypoints(w) => {
                let mut v = Vec::with_capacity(w.len() + 2);
                v.push(a);
                v.extend(w.iter().copied());
                v.push(b);
                v
            }
        }
    }

    /// Non-degenerate segments as `(start, end, t_start, t_end)`, with `t`
    /// proportional to Euclidean length in θ.
    pub fn segments(&self, a: Theta, b: Theta) -> Vec<(Theta, Theta, f64, f64)> {
        let v = self.vertices(a, b);
        let lens: Vec<f64> = v
            .windows(2)
            .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
            .collect();
        let total: f64 = lens.iter().sum();
        if total == 0.0 {
            return Vec::new();
        }
        let mut out = Vec::new();
        let mut t = 0.0;
        for (w, len) in v.windows(2).zip(&lens) {
            if *len == 0.0 {
                continue;
            }
            let t_end = (t + len / total).min(1.0);
            out.push((w[0], w[1], t, t_end));
            t = t_end;
        }
        if let Some(last) = out.last_mut() {
            last.3 = 1.0;
        }
        out
    }

    /// `θ(t)`.
    pub fn point(&self, a: Theta, b: Theta, t: f64) -> Theta {
        let segs = self.segments(a, b);
        let t = t.clamp(0.0, 1.0);
        for (s, e, t0, t1) in &segs {
            if t <= *t1 {
                let u = if t1 > t0 { (t - t0) / (t1 - t0) } else { 1.0 };
                return [s[0] + u * (e[0] - s[0]), s[1] + u * (e[1] - s[1])];
            }
        }
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_corners() {
        let (a, b) = ([0.0, 10.0], [5.0, 20.0]);
        for p in [
            ThetaPath::StraightLine,
            ThetaPath::AxisFirstTheta1,
            ThetaPath::AxisFirstTheta2,
            ThetaPath::Waypoints(vec![[1.0, 1.0]]),
        ] {
            assert_eq!(p.point(a, b, 0.0), a);
            assert_eq!(p.point(a, b, 1.0), b);
        }
        // Segment lengths 5 and 10 put the corner at t = 1/3.
        let c = ThetaPath::AxisFirstTheta1.point(a, b, 1.0 / 3.0);
        assert!((c[0] - 5.0).abs() < 1e-12 && (c[1] - 10.0).abs() < 1e-12);
        let mid = ThetaPath::StraightLine.point(a, b, 0.5);
        assert_eq!(mid, [2.5, 15.0]);
    }

    #[test]
    fn degenerate_segments_are_skipped() {
        let a = [1.0, 10.0];
        assert!(ThetaPath::StraightLine.segments(a, a).is_empty());
        // Pure θ2 move: the θ1 leg has zero length.
        assert_eq!(ThetaPath::AxisFirstTheta1.segments(a, [1.0, 12.0]).len(), 1);
    }
}
