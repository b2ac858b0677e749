//! Interpolating cubic splines with chord-length parameterization.

use crate::error::{Error, Result};
use crate::geom::Vec3;

/// Piecewise polynomial curve: on `[knots[i], knots[i+1]]`, with
/// `s = u - knots[i]`, `p(s) = c0 + c1 s + c2 s² + c3 s³`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spline {
    knots: Vec<f64>,
    coeffs: Vec<[Vec3; 4]>,
    /// Arc length of each piece.
    piece_len: Vec<f64>,
}

/// Drops consecutive duplicates and optionally keeps only points spaced at
/// least `decimation` mm apart along the polyline (plus the last point).
pub fn prepare_points(points: &[Vec3], decimation: Option<f64>) -> Vec<Vec3> {
    let mut pts: Vec<Vec3> = Vec::with_capacity(points.len());
    for p in points {
        if pts.last().is_none_or(|q: &Vec3| (p - q).norm() > 1e-12) {
            pts.push(*p);
        }
    }
    let Some(d) = decimation.filter(|d| *d > 0.0) else { return pts };
    if pts.len() <= 2 {
        return pts;
    }
    let mut out = vec![pts[0]];
    let mut acc = 0.0;
    for w in pts.windows(2) {
        acc += (w[1] - w[0]).norm();
        if acc >= d {
            out.push(w[1]);
            acc = 0.0;
        }
    }
    let last = *pts.last().unwrap();
    if *out.last().unwrap() != last {
        // Avoid a short final piece, which makes the spline wiggle.
        if out.len() > 1 && acc < 0.5 * d {
            out.pop();
        }
        out.push(last);
    }
    out
}

/// Fits an interpolating spline through the key points: natural cubic for
/// four or more points, a parabola for three, a segment for two.
pub fn fit_bspline(points: &[Vec3], decimation: Option<f64>) -> Result<Spline> {
    let pts = prepare_points(points, decimation);
    if pts.len() < 2 {
        return Err(Error::Centerline("fewer than 2 distinct key points".into()));
    }
    let n = pts.len();
    let mut knots = vec![0.0; n];
    for i in 1..n {
        knots[i] = knots[i - 1] + (pts[i] - pts[i - 1]).norm();
    }
    let coeffs = match n {
        2 => {
            let h = knots[1];
            vec![[pts[0], (pts[1] - pts[0]) / h, Vec3::zeros(), Vec3::zeros()]]
        }
        3 => {
            // Lagrange parabola, single piece over the full range.
            let (u1, u2) = (knots[1], knots[2]);
            let d1 = (pts[1] - pts[0]) / u1;
            let d2 = (pts[2] - pts[1]) / (u2 - u1);
            let c2 = (d2 - d1) / u2;
            let c1 = d1 - c2 * u1;
            knots = vec![0.0, u2];
            vec![[pts[0], c1, c2, Vec3::zeros()]]
        }
        _ => natural_cubic(&pts, &knots),
    };
    let mut s = Spline { knots, coeffs, piece_len: Vec::new() };
    s.piece_len = (0..s.coeffs.len()).map(|i| s.piece_arc(i, 0.0, s.knots[i + 1] - s.knots[i])).collect();
    Ok(s)
}

/// Second derivatives from the tridiagonal system with zero end values.
fn natural_cubic(pts: &[Vec3], knots: &[f64]) -> Vec<[Vec3; 4]> {
    let n = pts.len();
    let h: Vec<f64> = (0..n - 1).map(|i| knots[i + 1] - knots[i]).collect();
    let m = n - 2;
    let mut diag = vec![0.0; m];
    let mut rhs = vec![Vec3::zeros(); m];
    let mut sub = vec![0.0; m];
    let mut sup = vec![0.0; m];
    for k in 0..m {
        let i = k + 1;
        diag[k] = 2.0 * (h[i - 1] + h[i]);
        sub[k] = h[i - 1];
        sup[k] = h[i];
        rhs[k] = ((pts[i + 1] - pts[i]) / h[i] - (pts[i] - pts[i - 1]) / h[i - 1]) * 6.0;
    }
    // Thomas algorithm.
    for k in 1..m {
        let w = sub[k] / diag[k - 1];
        diag[k] -= w * sup[k - 1];
        let r = rhs[k - 1] * w;
        rhs[k] -= r;
    }
    let mut sec = vec![Vec3::zeros(); n];
    for k in (0..m).rev() {
        let next = if k + 1 < m { sec[k + 2] } else { Vec3::zeros() };
        sec[k + 1] = (rhs[k] - next * sup[k]) / diag[k];
    }
    (0..n - 1)
        .map(|i| {
            let c0 = pts[i];
            let c1 = (pts[i + 1] - pts[i]) / h[i] - (sec[i + 1] + sec[i] * 2.0) * (h[i] / 6.0);
            let c2 = sec[i] / 2.0;
            let c3 = (sec[i + 1] - sec[i]) / (6.0 * h[i]);
            [c0, c1, c2, c3]
        })
        .collect()
}

const GL_X: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GL_W: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

impl Spline {
    pub fn param_range(&self) -> (f64, f64) {
        (self.knots[0], *self.knots.last().unwrap())
    }

    fn piece(&self, u: f64) -> (usize, f64) {
        let n = self.coeffs.len();
        let i = match self.knots.binary_search_by(|k| k.total_cmp(&u)) {
            Ok(i) => i.min(n - 1),
            Err(i) => i.saturating_sub(1).min(n - 1),
        };
        (i, u - self.knots[i])
    }

    pub fn eval(&self, u: f64) -> Vec3 {
        let (i, s) = self.piece(u);
        let [c0, c1, c2, c3] = &self.coeffs[i];
        c0 + (c1 + (c2 + c3 * s) * s) * s
    }

    pub fn derivative(&self, u: f64) -> Vec3 {
        let (i, s) = self.piece(u);
        self.piece_derivative(i, s)
    }

    fn piece_derivative(&self, i: usize, s: f64) -> Vec3 {
        let [_, c1, c2, c3] = &self.coeffs[i];
        c1 + (c2 * 2.0 + c3 * (3.0 * s)) * s
    }

    fn gauss(&self, i: usize, a: f64, b: f64) -> f64 {
        let (m, r) = (0.5 * (a + b), 0.5 * (b - a));
        r * GL_X
            .iter()
            .zip(GL_W)
            .map(|(x, w)| w * self.piece_derivative(i, m + r * x).norm())
            .sum::<f64>()
    }

    /// Adaptive Gauss-Legendre arc length of piece `i` over local `[a, b]`.
    fn piece_arc(&self, i: usize, a: f64, b: f64) -> f64 {
        fn rec(s: &Spline, i: usize, a: f64, b: f64, whole: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (l, r) = (s.gauss(i, a, m), s.gauss(i, m, b));
            if depth >= 24 || (l + r - whole).abs() <= 1e-13 * (1.0 + whole) {
                l + r
            } else {
                rec(s, i, a, m, l, depth + 1) + rec(s, i, m, b, r, depth + 1)
            }
        }
        if b <= a {
            return 0.0;
        }
        rec(self, i, a, b, self.gauss(i, a, b), 0)
    }

    pub fn length(&self) -> f64 {
        self.piece_len.iter().sum()
    }

    /// Parameter at arc length `s` from the start (bisection).
    pub fn param_at_arc(&self, s: f64) -> f64 {
        let mut acc = 0.0;
        let last = self.coeffs.len() - 1;
        for i in 0..=last {
            let len = self.piece_len[i];
            if s <= acc + len || i == last {
                let target = (s - acc).clamp(0.0, len);
                let h = self.knots[i + 1] - self.knots[i];
                let (mut lo, mut hi) = (0.0, h);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.piece_arc(i, 0.0, mid) < target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 1e-14 * h.max(1.0) {
                        break;
                    }
                }
                return self.knots[i] + 0.5 * (lo + hi);
            }
            acc += len;
        }
        unreachable!("spline has at least one piece")
    }
}
