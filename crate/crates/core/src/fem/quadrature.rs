use super::FemError;
use crate::scalar::Real;

/// Highest polynomial degree for which a rule can be requested.
pub const MAX_QUADRATURE_DEGREE: usize = 12;

/// Quadrature on the reference triangle `(0,0), (1,0), (0,1)`.
///
/// Points are barycentric `(l0, l1, l2)` with `l1 = x`, `l2 = y`.
#[derive(Debug, Clone)]
pub struct QuadratureRule<T> {
    pub points: Vec<[T; 3]>,
    pub weights: Vec<T>,
    pub degree: usize,
}

impl<T: Real> QuadratureRule<T> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Collapsed Gauss-Legendre rule exact for polynomials of total degree `degree`.
pub fn quadrature<T: Real>(degree: usize) -> Result<QuadratureRule<T>, FemError> {
    if degree > MAX_QUADRATURE_DEGREE {
        return Err(FemError::UnsupportedDegree {
            degree,
            max: MAX_QUADRATURE_DEGREE,
        });
    }
    // Along the collapsed direction the integrand gains one degree from the
    // Jacobian factor (1 - eta).
    let n = (degree + 2).div_ceil(2).max(1);
    let (xs, ws) = gauss_legendre_unit(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (&eta, &w_eta) in xs.iter().zip(&ws) {
        for (&xi, &w_xi) in xs.iter().zip(&ws) {
            let x = xi * (1.0 - eta);
            let y = eta;
            points.push([T::lit(1.0 - x - y), T::lit(x), T::lit(y)]);
            weights.push(T::lit(w_xi * w_eta * (1.0 - eta)));
        }
    }
    Ok(QuadratureRule {
        points,
        weights,
        degree,
    })
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub(crate) fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..n {
        // Chebyshev-type initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d.is_finite() {
            dp = d;
        }
        xs[i] = 0.5 * (1.0 - x);
        ws[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (xs, ws)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}
