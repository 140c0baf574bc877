//! Unconstrained minimization: BFGS with numerical gradients and a
//! Nelder-Mead fallback for rough starts.

use crate::numdiff;

#[derive(Debug, Clone)]
pub(crate) struct MinOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub converged: bool,
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

/// Gradient convergence scale: tolerances are relative to max(1, |f|).
fn grad_scale(f: f64) -> f64 {
    f.abs().max(1.0)
}

pub(crate) fn bfgs<F: Fn(&[f64]) -> f64>(
    f: &F,
    x0: &[f64],
    max_iters: usize,
    grad_tol: f64,
) -> MinOutcome {
    let k = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    if !fx.is_finite() {
        return MinOutcome {
            x,
            value: fx,
            converged: false,
        };
    }
    let mut g = numdiff::gradient(f, &x);
    // inverse Hessian approximation
    let mut hinv = identity(k);
    let mut first_update = true;

    for _ in 0..max_iters {
        let gsup = sup_norm(&g);
        if !gsup.is_finite() {
            return MinOutcome {
                x,
                value: fx,
                converged: false,
            };
        }
        if gsup <= grad_tol * grad_scale(fx) {
            return MinOutcome {
                x,
                value: fx,
                converged: true,
            };
        }
        let mut dir = neg_mat_vec(&hinv, &g);
        let mut slope: f64 = dir.iter().zip(&g).map(|(d, gi)| d * gi).sum();
        if slope >= 0.0 || slope.is_nan() {
            // reset to steepest descent if curvature information went bad
            hinv = identity(k);
            first_update = true;
            dir = g.iter().map(|&v| -v).collect();
            slope = -g.iter().map(|&v| v * v).sum::<f64>();
        }

        // backtracking Armijo line search
        let mut step = 1.0;
        let c1 = 1e-4;
        let mut accepted = None;
        for _ in 0..50 {
            let xt: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            let ft = f(&xt);
            if ft.is_finite() && ft <= fx + c1 * step * slope {
                accepted = Some((xt, ft));
                break;
            }
            step *= 0.5;
        }
        let (xn, fn_) = match accepted {
            Some(a) => a,
            None => {
                return MinOutcome {
                    x,
                    value: fx,
                    converged: false,
                }
            }
        };

        let gn = numdiff::gradient(f, &xn);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ss = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        let yy = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if sy > 1e-10 * ss * yy {
            if first_update {
                // scale the initial inverse Hessian (Nocedal & Wright eq. 6.20)
                let yty: f64 = y.iter().map(|v| v * v).sum();
                if yty > 0.0 {
                    let gamma = sy / yty;
                    hinv = identity(k);
                    for i in 0..k {
                        hinv[i * k + i] = gamma;
                    }
                }
                first_update = false;
            }
            bfgs_update(&mut hinv, &s, &y, sy, k);
        }
        x = xn;
        fx = fn_;
        g = gn;
    }
    let gsup = sup_norm(&g);
    MinOutcome {
        x,
        value: fx,
        converged: gsup <= grad_tol * grad_scale(fx),
    }
}

fn identity(k: usize) -> Vec<f64> {
    let mut m = vec![0.0; k * k];
    for i in 0..k {
        m[i * k + i] = 1.0;
    }
    m
}

fn neg_mat_vec(m: &[f64], v: &[f64]) -> Vec<f64> {
    let k = v.len();
    (0..k)
        .map(|i| -(0..k).map(|j| m[i * k + j] * v[j]).sum::<f64>())
        .collect()
}

/// BFGS inverse-Hessian update: H <- (I - r s y')H(I - r y s') + r s s'.
fn bfgs_update(hinv: &mut [f64], s: &[f64], y: &[f64], sy: f64, k: usize) {
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..k)
        .map(|i| (0..k).map(|j| hinv[i * k + j] * y[j]).sum())
        .collect();
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for i in 0..k {
        for j in 0..k {
            hinv[i * k + j] += -rho * (s[i] * hy[j] + hy[i] * s[j])
                + rho * rho * yhy * s[i] * s[j]
                + rho * s[i] * s[j];
        }
    }
}

pub(crate) fn nelder_mead<F: Fn(&[f64]) -> f64>(f: &F, x0: &[f64], max_iters: usize) -> MinOutcome {
    let k = x0.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(k + 1);
    simplex.push(x0.to_vec());
    for j in 0..k {
        let mut v = x0.to_vec();
        v[j] += 0.1 * v[j].abs().max(1.0);
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();

    for _ in 0..max_iters {
        let mut order: Vec<usize> = (0..=k).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let best = order[0];
        let worst = order[k];
        let second_worst = order[k - 1];
        if (values[worst] - values[best]).abs() <= 1e-12 * (1.0 + values[best].abs()) {
            break;
        }
        // centroid of all but the worst
        let mut centroid = vec![0.0; k];
        for &idx in &order[..k] {
            for j in 0..k {
                centroid[j] += simplex[idx][j] / k as f64;
            }
        }
        let reflect: Vec<f64> = (0..k)
            .map(|j| centroid[j] + (centroid[j] - simplex[worst][j]))
            .collect();
        let fr = f(&reflect);
        if fr < values[best] {
            let expand: Vec<f64> = (0..k)
                .map(|j| centroid[j] + 2.0 * (centroid[j] - simplex[worst][j]))
                .collect();
            let fe = f(&expand);
            if fe < fr {
                simplex[worst] = expand;
                values[worst] = fe;
            } else {
                simplex[worst] = reflect;
                values[worst] = fr;
            }
        } else if fr < values[second_worst] {
            simplex[worst] = reflect;
            values[worst] = fr;
        } else {
            let contract: Vec<f64> = (0..k)
                .map(|j| centroid[j] + 0.5 * (simplex[worst][j] - centroid[j]))
                .collect();
            let fc = f(&contract);
            if fc < values[worst] {
                simplex[worst] = contract;
                values[worst] = fc;
            } else {
                // shrink toward the best vertex
                let best_point = simplex[best].clone();
                for idx in 0..=k {
                    if idx == best {
                        continue;
                    }
                    for j in 0..k {
                        simplex[idx][j] = best_point[j] + 0.5 * (simplex[idx][j] - best_point[j]);
                    }
                    values[idx] = f(&simplex[idx]);
                }
            }
        }
    }
    let (mut bi, mut bv) = (0, values[0]);
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < bv {
            bi = i;
            bv = v;
        }
    }
    MinOutcome {
        x: simplex[bi].clone(),
        value: bv,
        converged: false,
    }
}
