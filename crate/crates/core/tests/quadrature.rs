//! Edge quadrature of boundary data against a 16-point Gauss–Legendre reference.

use osm_lab::fem::{edge_load, plane_wave_flux};
use osm_lab::Complex64;

/// Nodes and weights on `[-1, 1]` by Newton iteration on `P_n`.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (1..=n)
        .map(|k| {
            let mut x = (std::f64::consts::PI * (k as f64 - 0.25) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for m in 2..=n {
                    let p2 = ((2 * m - 1) as f64 * x * p1 - (m - 1) as f64 * p0) / m as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let step = p1 / dp;
                x -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

fn reference_load(p: [f64; 2], q: [f64; 2], g: impl Fn([f64; 2]) -> Complex64) -> [Complex64; 2] {
    let h = (q[0] - p[0]).hypot(q[1] - p[1]);
    let mut out = [Complex64::new(0.0, 0.0); 2];
    for (s, w) in gauss_legendre(16) {
        let x = [
            0.5 * (p[0] + q[0]) + 0.5 * s * (q[0] - p[0]),
            0.5 * (p[1] + q[1]) + 0.5 * s * (q[1] - p[1]),
        ];
        let gx = g(x) * (0.5 * h * w);
        out[0] += gx * (0.5 * (1.0 - s));
        out[1] += gx * (0.5 * (1.0 + s));
    }
    out
}

fn gap(a: [Complex64; 2], b: [Complex64; 2]) -> f64 {
    ((a[0] - b[0]).norm_sqr() + (a[1] - b[1]).norm_sqr()).sqrt()
}

fn relative_gap(a: [Complex64; 2], b: [Complex64; 2]) -> f64 {
    gap(a, b) / (b[0].norm_sqr() + b[1].norm_sqr()).sqrt()
}

#[test]
fn reference_rule_integrates_high_degree_exactly() {
    let rule = gauss_legendre(16);
    assert!((rule.iter().map(|r| r.1).sum::<f64>() - 2.0).abs() < 1e-14);
    for d in [2, 10, 30] {
        let exact = 2.0 / (d as f64 + 1.0);
        let got: f64 = rule.iter().map(|(x, w)| w * x.powi(d)).sum();
        assert!((got - exact).abs() < 1e-14, "degree {d}");
    }
}

#[test]
fn quadratic_data_is_integrated_exactly() {
    // g·φ is cubic along the edge, inside the exactness class of two points
    let g = |x: [f64; 2]| Complex64::new(1.0 + 2.0 * x[0] - x[1] * x[1], 0.5 * x[0] * x[1] - 3.0);
    for (p, q) in [
        ([0.0, 0.0], [1.0, 0.0]),
        ([0.3, -0.2], [-0.1, 0.7]),
        ([2.0, 1.0], [2.0, 1.025]),
    ] {
        let gap = relative_gap(edge_load(p, q, g), reference_load(p, q, g));
        assert!(gap < 1e-10, "{p:?}–{q:?}: {gap:e}");
    }
}

/// Entries scale like `h`, so the absolute error is one order above the relative one.
#[test]
fn plane_wave_flux_converges_at_fourth_order() {
    let kappa = Complex64::new(2.0 * std::f64::consts::PI / 0.2, 1.0);
    let d = [std::f64::consts::FRAC_1_SQRT_2; 2];
    let n = [1.0, 0.0];
    let g = |x: [f64; 2]| plane_wave_flux(kappa, d, n, x);
    let edge = |h: f64| {
        let (p, q) = ([0.5, 0.1], [0.5, 0.1 + h]);
        (edge_load(p, q, g), reference_load(p, q, g))
    };
    let errors: Vec<f64> = [0.04, 0.02, 0.01, 0.005]
        .iter()
        .map(|&h| {
            let (a, b) = edge(h);
            gap(a, b)
        })
        .collect();
    for w in errors.windows(2) {
        let rate = (w[0] / w[1]).log2();
        assert!((3.7..4.3).contains(&rate), "{errors:?}");
    }
    // resolved edges meet the reference to 1e-10
    let (a, b) = edge(1e-3 / kappa.norm());
    assert!(relative_gap(a, b) < 1e-10, "{:e}", relative_gap(a, b));
}
