//! Derivative-free minimization: Nelder–Mead with seeded random restarts.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct NelderMeadOptions {
    /// Initial simplex edge length along each coordinate.
    pub step: f64,
    pub max_evals: usize,
    /// Stop when the spread of simplex values falls below this.
    pub f_tol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            step: 0.5,
            max_evals: 2000,
            f_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
}

pub fn nelder_mead(
    f: &mut dyn FnMut(&[f64]) -> f64,
    start: &[f64],
    opts: &NelderMeadOptions,
) -> Minimum {
    let dim = start.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    let v0 = eval(start, &mut evals);
    simplex.push((start.to_vec(), v0));
    for i in 0..dim {
        let mut x = start.to_vec();
        x[i] += opts.step;
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    while evals < opts.max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[dim].1;
        if (worst - best).abs() <= opts.f_tol {
            break;
        }
        let mut centroid = vec![0.0; dim];
        for (x, _) in &simplex[..dim] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / dim as f64;
            }
        }
        let along = |t: f64, from: &[f64]| -> Vec<f64> {
            centroid
                .iter()
                .zip(from)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let worst_x = simplex[dim].0.clone();
        let reflected = along(alpha, &worst_x);
        let fr = eval(&reflected, &mut evals);
        if fr < simplex[0].1 {
            let expanded = along(gamma, &worst_x);
            let fe = eval(&expanded, &mut evals);
            simplex[dim] = if fe < fr {
                (expanded, fe)
            } else {
                (reflected, fr)
            };
        } else if fr < simplex[dim - 1].1 {
            simplex[dim] = (reflected, fr);
        } else {
            let (contracted, fc) = if fr < worst {
                let x = along(rho, &worst_x);
                let v = eval(&x, &mut evals);
                (x, v)
            } else {
                let x = along(-rho, &worst_x);
                let v = eval(&x, &mut evals);
                (x, v)
            };
            if fc < fr.min(worst) {
                simplex[dim] = (contracted, fc);
            } else {
                let best_x = simplex[0].0.clone();
                for (x, v) in simplex.iter_mut().skip(1) {
                    for (xi, bi) in x.iter_mut().zip(&best_x) {
                        *xi = bi + sigma * (*xi - bi);
                    }
                    *v = eval(x, &mut evals);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Minimum { x, value, evals }
}

/// Runs `restarts` Nelder–Mead searches from seeded random starting points
/// drawn uniformly from `[lo, hi]` per coordinate (the first restart uses
/// `start` when given) and returns the best. Each restart gets an equal share
/// of `budget` and is itself restarted in place until its share is used.
pub fn multistart(
    f: &mut dyn FnMut(&[f64]) -> f64,
    start: Option<&[f64]>,
    bounds: &[(f64, f64)],
    restarts: usize,
    budget: usize,
    seed: u64,
    opts: &NelderMeadOptions,
) -> Minimum {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let restarts = restarts.max(1);
    let share = (budget / restarts).max(bounds.len() + 2);
    let mut best: Option<Minimum> = None;
    let mut total = 0usize;
    for r in 0..restarts {
        let mut x: Vec<f64> = match (r, start) {
            (0, Some(s)) => s.to_vec(),
            _ => bounds.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect(),
        };
        let mut used = 0usize;
        let mut value = f64::INFINITY;
        while used < share {
            let local = NelderMeadOptions {
                max_evals: share - used,
                ..opts.clone()
            };
            let m = nelder_mead(f, &x, &local);
            used += m.evals;
            let improved = m.value < value - opts.f_tol;
            x = m.x;
            value = m.value;
            if !improved {
                break;
            }
        }
        total += used;
        if best.as_ref().is_none_or(|b| value < b.value) {
            best = Some(Minimum {
                x: x.clone(),
                value,
                evals: 0,
            });
        }
    }
    let mut best = best.expect("at least one restart");
    best.evals = total;
    best
}
