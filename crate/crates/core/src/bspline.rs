//! Cubic B-spline basis on a graded node set, with not-a-knot ends and
//! cubic Taylor extension outside the node range. The spherical collocation
//! uses these as the smooth, nonnegative trial functions multiplying the
//! edge weight.

use crate::error::{Error, Result};

/// Basis of `n` cubic B-splines over nodes x_1 < ... < x_n, knot vector
/// [x1 x1 x1 x1, x3 .. x_{n-2}, xn xn xn xn] (not-a-knot).
#[derive(Debug, Clone)]
pub struct SplineBasis {
    /// Padded knots t_0 .. t_{n+3}; basis j is supported on [t_j, t_{j+4}].
    knots: Vec<f64>,
    n: usize,
}

/// Values and first three derivatives of the at-most-4 basis functions that
/// are nonzero at a point.
#[derive(Debug, Clone, Copy)]
pub struct LocalBasis {
    /// Index of the first possibly-nonzero basis function.
    pub first: usize,
    /// ders[k][j]: k-th derivative of basis function first+j.
    pub ders: [[f64; 4]; 4],
}

impl SplineBasis {
    pub fn new(nodes: &[f64]) -> Result<Self> {
        let n = nodes.len();
        if n < 4 {
            return Err(Error::invalid("nodes", "spline basis needs at least 4 nodes"));
        }
        for w in nodes.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::invalid("nodes", "nodes must be strictly increasing"));
            }
        }
        let mut knots = Vec::with_capacity(n + 4);
        for _ in 0..4 {
            knots.push(nodes[0]);
        }
        for &x in &nodes[2..n - 2] {
            knots.push(x);
        }
        for _ in 0..4 {
            knots.push(nodes[n - 1]);
        }
        debug_assert_eq!(knots.len(), n + 4);
        Ok(SplineBasis { knots, n })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[3], self.knots[self.n])
    }

    /// Support interval of basis function j.
    pub fn support(&self, j: usize) -> (f64, f64) {
        (self.knots[j], self.knots[j + 4])
    }

    fn find_span(&self, x: f64) -> usize {
        // span i with t_i <= x < t_{i+1}, restricted to [3, n-1]
        let lo = 3;
        let hi = self.n - 1;
        if x >= self.knots[hi] {
            return hi;
        }
        if x <= self.knots[lo] {
            return lo;
        }
        let mut a = lo;
        let mut b = hi;
        while b - a > 1 {
            let m = (a + b) / 2;
            if x >= self.knots[m] {
                a = m;
            } else {
                b = m;
            }
        }
        a
    }

    /// Values and derivatives at x, with cubic Taylor extension beyond the
    /// node range (exact, since the end spans are single cubics).
    pub fn eval(&self, x: f64) -> LocalBasis {
        let (lo, hi) = self.domain();
        if x < lo {
            return self.extend(lo, x - lo);
        }
        if x > hi {
            return self.extend(hi, x - hi);
        }
        self.eval_inside(x)
    }

    fn extend(&self, edge: f64, dx: f64) -> LocalBasis {
        let base = self.eval_inside(edge);
        let mut out = base;
        for k in 0..4 {
            for j in 0..4 {
                // Taylor from the edge using available derivatives.
                let mut acc = 0.0;
                let mut fact = 1.0;
                for m in 0..(4 - k) {
                    if m > 0 {
                        fact *= m as f64;
                    }
                    acc += base.ders[k + m][j] * dx.powi(m as i32) / fact;
                }
                out.ders[k][j] = acc;
            }
        }
        out
    }

    fn eval_inside(&self, x: f64) -> LocalBasis {
        let i = self.find_span(x);
        let t = &self.knots;
        // Triangular table of B-spline values of orders 1..4 at x:
        // vals[k-1][j] = B_{i-k+1+j, k}(x), j = 0..k-1.
        let mut vals = [[0.0f64; 4]; 4];
        vals[0][0] = 1.0;
        for k in 2..=4 {
            for j in 0..k {
                let idx = i + 1 + j - k; // basis index of B_{idx, k}
                let mut acc = 0.0;
                if j > 0 {
                    let den = t[idx + k - 1] - t[idx];
                    if den > 0.0 {
                        acc += (x - t[idx]) / den * vals[k - 2][j - 1];
                    }
                }
                if j < k - 1 {
                    let den = t[idx + k] - t[idx + 1];
                    if den > 0.0 {
                        acc += (t[idx + k] - x) / den * vals[k - 2][j];
                    }
                }
                vals[k - 1][j] = acc;
            }
        }
        // Derivative tables, built by applying
        // D^m B_{j,k} = (k-1) [ D^{m-1} B_{j,k-1}/(t_{j+k-1}-t_j)
        //                      - D^{m-1} B_{j+1,k-1}/(t_{j+k}-t_{j+1}) ].
        let deriv_step = |src: &[f64; 4], k: usize| -> [f64; 4] {
            let mut out = [0.0f64; 4];
            for j in 0..k {
                let idx = i + 1 + j - k;
                let mut acc = 0.0;
                if j > 0 {
                    let den = t[idx + k - 1] - t[idx];
                    if den > 0.0 {
                        acc += src[j - 1] / den;
                    }
                }
                if j < k - 1 {
                    let den = t[idx + k] - t[idx + 1];
                    if den > 0.0 {
                        acc -= src[j] / den;
                    }
                }
                out[j] = (k as f64 - 1.0) * acc;
            }
            out
        };
        let d1_o2 = deriv_step(&vals[0], 2); // B'_{.,2}
        let d1_o3 = deriv_step(&vals[1], 3); // B'_{.,3}
        let d1_o4 = deriv_step(&vals[2], 4); // B'_{.,4}
        let d2_o3 = deriv_step(&d1_o2, 3); // B''_{.,3}
        let d2_o4 = deriv_step(&d1_o3, 4); // B''_{.,4}
        let d3_o4 = deriv_step(&d2_o3, 4); // B'''_{.,4}

        LocalBasis {
            first: i - 3,
            ders: [vals[3], d1_o4, d2_o4, d3_o4],
        }
    }

    /// Value of basis function j at x (convenience; prefer `eval` in loops).
    pub fn basis_value(&self, j: usize, x: f64) -> f64 {
        let local = self.eval(x);
        if j >= local.first && j < local.first + 4 {
            local.ders[0][j - local.first]
        } else {
            0.0
        }
    }
}
