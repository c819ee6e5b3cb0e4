//! Gaussian kernel density estimates on regular grids.

use serde::Serialize;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Grid padding on each side of the data, in bandwidths.
const PAD: f64 = 4.0;

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Bandwidth floor for (near-)constant data, so the estimate stays a density.
fn floor_bandwidth(h: f64, values: &[f64]) -> f64 {
    if h > 0.0 && h.is_finite() {
        return h;
    }
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (1e-3 * scale).max(1e-6)
}

/// Silverman's rule of thumb, `1.06 sd n^(-1/5)`.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let (_, sd) = mean_sd(values);
    floor_bandwidth(1.06 * sd * (values.len() as f64).powf(-0.2), values)
}

/// Per-axis bandwidth for a bivariate estimate, `sd n^(-1/6)`.
pub fn scott_bandwidth_2d(values: &[f64]) -> f64 {
    let (_, sd) = mean_sd(values);
    floor_bandwidth(sd * (values.len() as f64).powf(-1.0 / 6.0), values)
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|k| lo + step * k as f64).collect()
}

fn padded_range(values: &[f64], h: f64) -> (f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo - PAD * h, hi + PAD * h)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid1d {
    pub x: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

impl Grid1d {
    /// Trapezoid-rule integral of the density over the grid.
    pub fn mass(&self) -> f64 {
        trapezoid(&self.x, &self.density)
    }

    /// Grid point with the highest density.
    pub fn mode(&self) -> f64 {
        let k = self
            .density
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map_or(0, |(k, _)| k);
        self.x[k]
    }

    pub fn to_csv(&self, x_name: &str) -> String {
        let mut out = format!("{x_name},density\n");
        for (x, d) in self.x.iter().zip(&self.density) {
            out.push_str(&format!("{x},{d}\n"));
        }
        out
    }
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

/// Density of `values` on `points` evenly spaced grid points covering the
/// data plus four bandwidths on either side.
///
/// Panics if `values` is empty.
pub fn kde_1d(values: &[f64], points: usize) -> Grid1d {
    assert!(!values.is_empty(), "kernel density estimate of no data");
    let h = silverman_bandwidth(values);
    let (lo, hi) = padded_range(values, h);
    kde_1d_on(values, h, linspace(lo, hi, points.max(2)))
}

/// Like [`kde_1d`], restricted to `[lo, hi]` (for bounded quantities such as
/// probabilities). Mass outside the interval is lost, not reflected.
pub fn kde_1d_bounded(values: &[f64], points: usize, lo: f64, hi: f64) -> Grid1d {
    assert!(!values.is_empty(), "kernel density estimate of no data");
    let h = silverman_bandwidth(values);
    let (a, b) = padded_range(values, h);
    kde_1d_on(values, h, linspace(a.max(lo), b.min(hi), points.max(2)))
}

fn kde_1d_on(values: &[f64], h: f64, x: Vec<f64>) -> Grid1d {
    let norm = INV_SQRT_2PI / (h * values.len() as f64);
    let density = x
        .iter()
        .map(|&g| {
            norm * values
                .iter()
                .map(|v| {
                    let z = (g - v) / h;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
        })
        .collect();
    Grid1d { x, density, bandwidth: h }
}

/// Bivariate density on a regular grid; `density[a][b]` is at `(x[a], y[b])`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid2d {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub density: Vec<Vec<f64>>,
    pub bandwidth: (f64, f64),
}

impl Grid2d {
    pub fn mass(&self) -> f64 {
        let rows: Vec<f64> = self.density.iter().map(|row| trapezoid(&self.y, row)).collect();
        trapezoid(&self.x, &rows)
    }

    /// Long-format CSV: one `x,y,density` line per grid point.
    pub fn to_csv(&self, x_name: &str, y_name: &str) -> String {
        let mut out = format!("{x_name},{y_name},density\n");
        for (x, row) in self.x.iter().zip(&self.density) {
            for (y, d) in self.y.iter().zip(row) {
                out.push_str(&format!("{x},{y},{d}\n"));
            }
        }
        out
    }
}

/// Product-Gaussian kernel estimate with a diagonal bandwidth.
///
/// Optional bounds clip the grid on each axis.
pub fn kde_2d(xs: &[f64], ys: &[f64], points: usize, x_bounds: Option<(f64, f64)>, y_bounds: Option<(f64, f64)>) -> Grid2d {
    assert_eq!(xs.len(), ys.len(), "paired samples must have equal length");
    assert!(!xs.is_empty(), "kernel density estimate of no data");
    let hx = scott_bandwidth_2d(xs);
    let hy = scott_bandwidth_2d(ys);
    let axis = |v: &[f64], h: f64, bounds: Option<(f64, f64)>| {
        let (mut lo, mut hi) = padded_range(v, h);
        if let Some((a, b)) = bounds {
            lo = lo.max(a);
            hi = hi.min(b);
        }
        linspace(lo, hi, points.max(2))
    };
    let x = axis(xs, hx, x_bounds);
    let y = axis(ys, hy, y_bounds);
    let norm = 1.0 / (2.0 * std::f64::consts::PI * hx * hy * xs.len() as f64);

    // Kernel factors separate, so precompute each axis once.
    let kx: Vec<Vec<f64>> = x
        .iter()
        .map(|&g| xs.iter().map(|v| (-0.5 * ((g - v) / hx).powi(2)).exp()).collect())
        .collect();
    let ky: Vec<Vec<f64>> = y
        .iter()
        .map(|&g| ys.iter().map(|v| (-0.5 * ((g - v) / hy).powi(2)).exp()).collect())
        .collect();
    let density = kx
        .iter()
        .map(|ka| {
            ky.iter()
                .map(|kb| norm * ka.iter().zip(kb).map(|(a, b)| a * b).sum::<f64>())
                .collect()
        })
        .collect();
    Grid2d {
        x,
        y,
        density,
        bandwidth: (hx, hy),
    }
}
