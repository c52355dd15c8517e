//! Gauss–Hermite rules used to replace Gaussian nodes by weighted atoms
//! during exact enumeration.
//!
//! Nodes and weights come from Newton iteration on the orthonormal Hermite
//! recurrence, with brackets from the interlacing property, so no linear
//! algebra dependency is needed. An order-n rule integrates polynomials of
//! degree 2n-1 exactly against the standard normal weight.

/// One quadrature rule over the standard normal distribution: the expectation
/// of f under N(0,1) is approximately `sum_k weight[k] * f(point[k])`, and the
/// weights sum to one.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Evaluate the orthonormal Hermite polynomial of degree n at t (physicists'
/// convention, weight e^{-t^2}), returning (H~_n(t), H~_{n-1}(t)).
fn hermite_orthonormal(n: usize, t: f64) -> (f64, f64) {
    // H~_0 = pi^{-1/4}, H~_1 = sqrt(2) t pi^{-1/4},
    // H~_{k+1} = t sqrt(2/(k+1)) H~_k - sqrt(k/(k+1)) H~_{k-1}
    let mut hm = 0.0f64;
    let mut h = std::f64::consts::PI.powf(-0.25);
    for k in 0..n {
        let kf = k as f64;
        let next = t * (2.0 / (kf + 1.0)).sqrt() * h - (kf / (kf + 1.0)).sqrt() * hm;
        hm = h;
        h = next;
    }
    (h, hm)
}

/// Roots of the degree-n Hermite polynomial, found degree by degree: the
/// roots of H_{k} interlace those of H_{k+1}, which gives a bracket for each
/// bisection/Newton refinement.
fn hermite_roots(n: usize) -> Vec<f64> {
    let mut roots: Vec<f64> = Vec::new(); // roots for degree 0: none
    for k in 1..=n {
        let mut brackets: Vec<(f64, f64)> = Vec::with_capacity(k);
        let bound = (2.0 * k as f64 + 2.0).sqrt();
        let mut edges = Vec::with_capacity(k + 1);
        edges.push(-bound);
        edges.extend(roots.iter().copied());
        edges.push(bound);
        for w in edges.windows(2) {
            brackets.push((w[0], w[1]));
        }
        let mut next = Vec::with_capacity(k);
        for (mut lo, mut hi) in brackets {
            let f = |t: f64| hermite_orthonormal(k, t).0;
            let (mut flo, mut fhi) = (f(lo), f(hi));
            debug_assert!(flo * fhi <= 0.0, "interlacing bracket must straddle a root");
            // A few bisection steps to get close, then Newton polish.
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let fm = f(mid);
                if flo * fm <= 0.0 {
                    hi = mid;
                    fhi = fm;
                } else {
                    lo = mid;
                    flo = fm;
                }
                let _ = fhi;
            }
            let mut t = 0.5 * (lo + hi);
            for _ in 0..4 {
                let (h, hprev) = hermite_orthonormal(k, t);
                // d/dt H~_k = sqrt(2k) H~_{k-1}
                let dh = (2.0 * k as f64).sqrt() * hprev;
                if dh != 0.0 {
                    t -= h / dh;
                }
            }
            next.push(t);
        }
        roots = next;
    }
    roots
}

impl GaussHermite {
    /// Rule of the given order (number of points), normalized to the standard
    /// normal measure: points are sqrt(2) times the Hermite abscissae and the
    /// weights divide out sqrt(pi).
    pub fn new(order: usize) -> GaussHermite {
        assert!(order >= 1, "quadrature order must be positive");
        let roots = hermite_roots(order);
        let mut points = Vec::with_capacity(order);
        let mut weights = Vec::with_capacity(order);
        for &t in &roots {
            let (_, hprev) = hermite_orthonormal(order, t);
            // Physicists' weight 2/(d/dt H~_n)^2 with the orthonormal
            // derivative sqrt(2n) H~_{n-1}; dividing by sqrt(pi) converts
            // from the e^{-t^2} measure to N(0,1).
            let dh = (2.0 * order as f64).sqrt() * hprev;
            let w = 2.0 / (dh * dh);
            points.push(std::f64::consts::SQRT_2 * t);
            weights.push(w / std::f64::consts::PI.sqrt());
        }
        // Remove rounding drift so downstream probability sums stay at 1.
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        // Sort ascending, then force exact +/- symmetry so odd polynomials
        // cancel to rounding level rather than root-refinement level.
        let mut idx: Vec<usize> = (0..order).collect();
        idx.sort_by(|&a, &b| points[a].partial_cmp(&points[b]).unwrap());
        let mut points: Vec<f64> = idx.iter().map(|&i| points[i]).collect();
        let mut weights: Vec<f64> = idx.iter().map(|&i| weights[i]).collect();
        for i in 0..order / 2 {
            let j = order - 1 - i;
            let t = 0.5 * (points[j] - points[i]);
            points[i] = -t;
            points[j] = t;
            let w = 0.5 * (weights[i] + weights[j]);
            weights[i] = w;
            weights[j] = w;
        }
        if order % 2 == 1 {
            points[order / 2] = 0.0;
        }
        GaussHermite { points, weights }
    }

    pub fn order(&self) -> usize {
        self.points.len()
    }

    /// Expectation of f under N(mu, sigma^2). Mirrored points are summed as
    /// pairs so antisymmetric integrands cancel exactly instead of leaving
    /// the rounding of two large partial sums.
    pub fn expect<F: FnMut(f64) -> f64>(&self, mu: f64, sigma: f64, mut f: F) -> f64 {
        let n = self.points.len();
        let mut total = 0.0;
        for i in 0..n / 2 {
            let j = n - 1 - i;
            let lo = self.weights[i] * f(mu + sigma * self.points[i]);
            let hi = self.weights[j] * f(mu + sigma * self.points[j]);
            total += lo + hi;
        }
        if n % 2 == 1 {
            let m = n / 2;
            total += self.weights[m] * f(mu + sigma * self.points[m]);
        }
        total
    }
}
