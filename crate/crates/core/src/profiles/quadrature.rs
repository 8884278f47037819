/// Integrals of the two Skorohod weights `exp(-u - 1/u)` and `exp(-u)`
/// over sub-intervals of `[0, inf)`.
///
/// The first weight has no elementary antiderivative; its cumulative
/// integral is tabulated on `nodes` points of `[0, UPPER]` with adaptive
/// Simpson between neighbours, and partial cells are integrated on demand.
#[derive(Debug, Clone)]
pub struct WeightIntegrals {
    nodes: Vec<f64>,
    cumulative: Vec<f64>,
    tol: f64,
}

/// Beyond this point both weights are below 1e-21.
const UPPER: f64 = 50.0;

fn w1(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else {
        (-u - 1.0 / u).exp()
    }
}

pub(crate) fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

impl WeightIntegrals {
    pub fn new(nodes: usize, tol: f64) -> Self {
        let nodes = nodes.max(3);
        let grid: Vec<f64> = (0..nodes)
            .map(|k| {
                let s = k as f64 / (nodes - 1) as f64;
                UPPER * s * s
            })
            .collect();
        let per_cell = tol / nodes as f64;
        let mut cumulative = Vec::with_capacity(nodes);
        cumulative.push(0.0);
        for w in grid.windows(2) {
            let last = *cumulative.last().unwrap();
            cumulative.push(last + adaptive_simpson(&w1, w[0], w[1], per_cell));
        }
        WeightIntegrals {
            nodes: grid,
            cumulative,
            tol,
        }
    }

    fn cumulative_w1(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= UPPER {
            return *self.cumulative.last().unwrap();
        }
        let k = self.nodes.partition_point(|&u| u <= x) - 1;
        self.cumulative[k] + adaptive_simpson(&w1, self.nodes[k], x, self.tol / self.nodes.len() as f64)
    }

    /// `∫_a^b exp(-u - 1/u) du`; `b` may be infinite.
    pub fn w1(&self, a: f64, b: f64) -> f64 {
        (self.cumulative_w1(b) - self.cumulative_w1(a)).max(0.0)
    }

    /// `∫_a^b exp(-u) du`; `b` may be infinite.
    pub fn w2(&self, a: f64, b: f64) -> f64 {
        let a = a.max(0.0);
        if b <= a {
            return 0.0;
        }
        (-a).exp() - if b.is_finite() { (-b).exp() } else { 0.0 }
    }

    pub fn total_w1(&self) -> f64 {
        self.w1(0.0, f64::INFINITY)
    }
}

impl Default for WeightIntegrals {
    fn default() -> Self {
        WeightIntegrals::new(257, 1e-9)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: composite midpoint rule after substituting
    /// u = s / (1 - s), which maps (0, 1) onto (0, inf).
    fn oracle_w1(a: f64, b: f64, cells: usize) -> f64 {
        let to_s = |u: f64| if u.is_infinite() { 1.0 } else { u / (1.0 + u) };
        let (sa, sb) = (to_s(a), to_s(b));
        let h = (sb - sa) / cells as f64;
        (0..cells)
            .map(|k| {
                let s = sa + (k as f64 + 0.5) * h;
                let u = s / (1.0 - s);
                w1(u) / ((1.0 - s) * (1.0 - s)) * h
            })
            .sum()
    }

    #[test]
    fn total_first_weight() {
        let q = WeightIntegrals::default();
        let oracle = oracle_w1(0.0, f64::INFINITY, 2_000_000);
        // 2 K_1(2) = 0.279731763...
        assert!((oracle - 0.279_731_763).abs() < 1e-8);
        assert!((q.total_w1() - oracle).abs() < 1e-9);
    }

    #[test]
    fn partial_integrals_match_oracle() {
        let q = WeightIntegrals::default();
        for &(a, b) in &[(0.0, 0.3), (0.3, 1.0), (1.0, 1.1), (0.7, 4.2), (2.0, f64::INFINITY)] {
            let o = oracle_w1(a, b, 400_000);
            assert!((q.w1(a, b) - o).abs() < 1e-9, "[{a},{b}] {} vs {o}", q.w1(a, b));
        }
        assert!((q.w2(0.0, f64::INFINITY) - 1.0).abs() < 1e-15);
        assert!((q.w2(1.0, 2.0) - ((-1f64).exp() - (-2f64).exp())).abs() < 1e-15);
    }
}
