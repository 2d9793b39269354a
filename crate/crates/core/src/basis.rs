//! Cubic B-spline bases on an interval with equidistant knots.
//!
//! Basis dimension convention: `m` knots are placed equidistantly on `[a, b]`, boundary knots
//! included, and both modes produce exactly `m` basis functions.
//!
//! * `Natural`: the `m + 2` clamped cubic B-splines are merged at each end into two
//!   nonnegative combinations whose second derivative vanishes at the boundary. The result
//!   spans the natural cubic splines on the knots, keeps the partition of unity and keeps
//!   local support.
//! * `Cyclic`: `m` knot intervals of width `(b − a)/m` on the circle `[a, b)`; each basis
//!   function is a cardinal cubic B-spline wrapped around the period.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::scalar::Scalar;

const DEGREE: usize = 3;
const ORDER: usize = DEGREE + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryMode {
    Natural,
    Cyclic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis<S> {
    lower: S,
    upper: S,
    knots: usize,
    mode: BoundaryMode,
    spacing: S,
    knot_vector: Vec<S>,
    // weight of B_1 folded into the first natural function; B_m into the last
    left_weight: S,
    right_weight: S,
}

impl<S: Scalar> SplineBasis<S> {
    /// Builds a basis with `knots` equidistant knots on `[lower, upper]`.
    pub fn build(lower: S, upper: S, knots: usize, mode: BoundaryMode) -> Result<Self> {
        if knots < 4 {
            return Err(Error::Config(format!("a cubic basis needs at least 4 knots, got {knots}")));
        }
        if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
            return Err(Error::Config(format!("invalid basis domain [{lower}, {upper}]")));
        }
        let width = upper - lower;
        let (spacing, knot_vector) = match mode {
            BoundaryMode::Natural => {
                let h = width / S::from_usize_lossy(knots - 1);
                let mut v = vec![lower; ORDER];
                v.extend((1..knots - 1).map(|k| lower + h * S::from_usize_lossy(k)));
                v.extend(std::iter::repeat_n(upper, ORDER));
                (h, v)
            }
            BoundaryMode::Cyclic => {
                let h = width / S::from_usize_lossy(knots);
                let v = (0..knots + 2 * DEGREE + 1)
                    .map(|k| lower + h * (S::from_usize_lossy(k) - S::lit(DEGREE as f64)))
                    .collect();
                (h, v)
            }
        };
        let mut basis = Self {
            lower,
            upper,
            knots,
            mode,
            spacing,
            knot_vector,
            left_weight: S::zero(),
            right_weight: S::zero(),
        };
        if mode == BoundaryMode::Natural {
            let left = basis.raw_ders(DEGREE, lower, 2);
            let right = basis.raw_ders(knots + 1, upper, 2);
            // B_0″(a) + B_1″(a) + B_2″(a) = 0 with B_0″ > 0 > B_1″ < 0 < B_2″
            basis.left_weight = left[2][0] / (-left[2][1]);
            basis.right_weight = right[2][3] / (-right[2][2]);
        }
        Ok(basis)
    }

    pub fn dim(&self) -> usize {
        self.knots
    }

    pub fn knots(&self) -> usize {
        self.knots
    }

    pub fn mode(&self) -> BoundaryMode {
        self.mode
    }

    pub fn domain(&self) -> (S, S) {
        (self.lower, self.upper)
    }

    /// The full (clamped or periodically extended) knot vector used for evaluation.
    pub fn knot_vector(&self) -> &[S] {
        &self.knot_vector
    }

    fn n_raw(&self) -> usize {
        self.knot_vector.len() - ORDER
    }

    /// Values (and derivatives up to `nd`) of the four raw B-splines nonzero on `span`.
    fn raw_ders(&self, span: usize, x: S, nd: usize) -> Vec<[S; ORDER]> {
        let u = &self.knot_vector;
        let p = DEGREE;
        let mut ndu = [[S::zero(); ORDER]; ORDER];
        let mut left = [S::zero(); ORDER];
        let mut right = [S::zero(); ORDER];
        ndu[0][0] = S::one();
        for j in 1..=p {
            left[j] = x - u[span + 1 - j];
            right[j] = u[span + j] - x;
            let mut saved = S::zero();
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let mut ders = vec![[S::zero(); ORDER]; nd + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let mut a = [[S::zero(); ORDER]; 2];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = S::one();
            for k in 1..=nd.min(p) {
                let mut d = S::zero();
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if r as isize - 1 <= pk as isize { k - 1 } else { p - r };
                for j in j1..=j2 {
                    let col = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][col];
                    d += a[s2][j] * ndu[col][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = S::lit(p as f64);
        for (k, row) in ders.iter_mut().enumerate().skip(1) {
            if k > p {
                *row = [S::zero(); ORDER];
                continue;
            }
            for v in row.iter_mut() {
                *v *= factor;
            }
            factor *= S::lit((p - k) as f64);
        }
        ders
    }

    /// Maps `x` into the evaluation interval and locates its knot span.
    fn locate(&self, x: S) -> Result<(usize, S)> {
        if !x.is_finite() {
            return Err(Error::Domain(format!("non-finite basis argument {x}")));
        }
        match self.mode {
            BoundaryMode::Natural => {
                if x < self.lower || x > self.upper {
                    return Err(Error::Domain(format!(
                        "x = {x} outside the natural basis domain [{}, {}]",
                        self.lower, self.upper
                    )));
                }
                let last = self.n_raw() - 1;
                Ok((self.span_of(x, DEGREE, last), x))
            }
            BoundaryMode::Cyclic => {
                let period = self.upper - self.lower;
                let offset = x - self.lower;
                let mut xw = self.lower + (offset - (offset / period).floor() * period);
                if xw >= self.upper {
                    xw = self.lower;
                }
                Ok((self.span_of(xw, DEGREE, DEGREE + self.knots - 1), xw))
            }
        }
    }

    fn span_of(&self, x: S, first: usize, last: usize) -> usize {
        let u = &self.knot_vector;
        let guess = ((x - self.lower) / self.spacing).floor().to_usize().unwrap_or(0);
        let mut span = (first + guess).clamp(first, last);
        // guard against rounding at knot boundaries
        while span > first && x < u[span] {
            span -= 1;
        }
        while span < last && x >= u[span + 1] {
            span += 1;
        }
        span
    }

    /// Converts raw B-spline values on `span` into the reduced basis.
    fn reduce(&self, span: usize, raw: &[S; ORDER]) -> Vec<(usize, S)> {
        let m = self.knots;
        let mut out: Vec<(usize, S)> = Vec::with_capacity(ORDER + 2);
        for (r, &v) in raw.iter().enumerate() {
            let k = span - DEGREE + r;
            match self.mode {
                BoundaryMode::Cyclic => out.push(((k + m - DEGREE) % m, v)),
                BoundaryMode::Natural => {
                    let (t, tr) = (self.left_weight, self.right_weight);
                    match k {
                        0 => out.push((0, v)),
                        1 => {
                            out.push((0, t * v));
                            out.push((1, (S::one() - t) * v));
                        }
                        2 => out.push((1, v)),
                        k if k == m => {
                            out.push((m - 2, (S::one() - tr) * v));
                            out.push((m - 1, tr * v));
                        }
                        k if k == m + 1 => out.push((m - 1, v)),
                        k => out.push((k - 1, v)),
                    }
                }
            }
        }
        out
    }

    fn sparse(&self, x: S, order: usize) -> Result<Vec<(usize, S)>> {
        let (span, xw) = self.locate(x)?;
        let ders = self.raw_ders(span, xw, order);
        Ok(self.reduce(span, &ders[order]))
    }

    fn densify(&self, entries: Vec<(usize, S)>) -> Vec<S> {
        let mut row = vec![S::zero(); self.dim()];
        for (j, v) in entries {
            row[j] += v;
        }
        row
    }

    /// All basis functions at `x`.
    pub fn evaluate(&self, x: S) -> Result<Vec<S>> {
        Ok(self.densify(self.sparse(x, 0)?))
    }

    /// The `order`-th derivative of every basis function at `x`.
    pub fn evaluate_derivative(&self, x: S, order: usize) -> Result<Vec<S>> {
        Ok(self.densify(self.sparse(x, order)?))
    }

    /// Basis values (or derivatives) at the upper boundary taken as the limit from the left,
    /// without the cyclic wrap.
    pub fn evaluate_at_upper(&self, order: usize) -> Vec<S> {
        let span = match self.mode {
            BoundaryMode::Natural => self.n_raw() - 1,
            BoundaryMode::Cyclic => DEGREE + self.knots - 1,
        };
        let ders = self.raw_ders(span, self.upper, order);
        self.densify(self.reduce(span, &ders[order]))
    }

    /// Design matrix with row `i` equal to the basis evaluated at `xs[i]`.
    pub fn design_matrix(&self, xs: &[S]) -> Result<Array2<S>> {
        let mut out = Array2::zeros((xs.len(), self.dim()));
        for (i, &x) in xs.iter().enumerate() {
            for (j, v) in self.sparse(x, 0)? {
                out[[i, j]] += v;
            }
        }
        Ok(out)
    }

    /// Linear predictor `B(x)ᵀc` at each grid point.
    pub fn evaluate_effect(&self, coefficients: &[S], grid: &[S]) -> Result<Vec<S>> {
        check_len("spline coefficients", self.dim(), coefficients.len())
            .map_err(|e| Error::Config(e.to_string()))?;
        grid.iter()
            .map(|&x| {
                Ok(self
                    .sparse(x, 0)?
                    .into_iter()
                    .fold(S::zero(), |acc, (j, v)| acc + coefficients[j] * v))
            })
            .collect()
    }
}

/// Equidistant grid of `intervals + 1` points covering `[lower, upper]`.
pub fn uniform_grid<S: Scalar>(lower: S, upper: S, intervals: usize) -> Vec<S> {
    let n = S::from_usize_lossy(intervals);
    (0..=intervals)
        .map(|k| lower + (upper - lower) * S::from_usize_lossy(k) / n)
        .collect()
}
