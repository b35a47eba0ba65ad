//! Gauss–Hermite rules for `∫ e^{-x²} f(x) dx`.

use crate::error::{Error, Result};

/// Nodes (ascending) and weights of the `m`-point rule.
///
/// Roots are found by Newton iteration on the orthonormal Hermite recurrence,
/// seeded with the usual asymptotic guesses.
pub fn gauss_hermite(m: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if m == 0 {
        return Err(Error::Invalid("quadrature needs at least one node".into()));
    }
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    let half = m.div_ceil(2);
    let mf = m as f64;
    let mut z = 0.0f64;
    for i in 0..half {
        z = match i {
            0 => (2.0 * mf + 1.0).sqrt() - 1.85575 * (2.0 * mf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * mf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut dp = 0.0;
        let mut converged = false;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 1..=m {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            dp = (2.0 * mf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / dp;
            if (z - z1).abs() <= 1e-14 * z.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoConvergence {
                what: format!("Gauss-Hermite root {i} of {m}"),
                iterations: 100,
            });
        }
        x[i] = z;
        x[m - 1 - i] = -z;
        w[i] = 2.0 / (dp * dp);
        w[m - 1 - i] = w[i];
    }
    if m % 2 == 1 {
        // The middle root is exactly zero.
        x[m / 2] = 0.0;
    }
    x.reverse();
    w.reverse();
    Ok((x, w))
}
