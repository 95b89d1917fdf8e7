//! Derivative-free Nelder-Mead descent with the standard coefficients
//! (reflection 1, expansion 2, contraction 1/2, shrink 1/2).

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub max_evals: usize,
    /// Spread of objective values across the simplex.
    pub ftol: f64,
    /// Largest vertex distance from the best vertex (infinity norm).
    pub xtol: f64,
}

#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Minimizes `f` from `x0`, with the initial simplex spanned by `step` along
/// each axis. Converges once both the value spread and the simplex size drop
/// below their tolerances.
pub fn minimize(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    step: &[f64],
    opts: SimplexOptions,
) -> SimplexResult {
    let n = x0.len();
    assert_eq!(step.len(), n);
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

    let mut simplex: Vec<(f64, Vec<f64>)> = Vec::with_capacity(n + 1);
    simplex.push((eval(x0, &mut evals), x0.to_vec()));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step[i];
        simplex.push((eval(&x, &mut evals), x));
    }

    let mut converged = false;
    loop {
        // Stable sort keeps ties in insertion order, so runs are reproducible.
        simplex.sort_by(|a, b| a.0.total_cmp(&b.0));
        let spread = simplex[n].0 - simplex[0].0;
        let size = simplex[1..]
            .iter()
            .flat_map(|(_, x)| x.iter().zip(&simplex[0].1).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread <= opts.ftol && size <= opts.xtol {
            converged = true;
            break;
        }
        if evals >= opts.max_evals {
            break;
        }

        let mut centroid = vec![0.0; n];
        for (_, x) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }
        let along = |t: f64, worst: &[f64]| -> Vec<f64> {
            centroid
                .iter()
                .zip(worst)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let worst = simplex[n].1.clone();
        let f_best = simplex[0].0;
        let f_second_worst = simplex[n - 1].0;
        let f_worst = simplex[n].0;

        let xr = along(1.0, &worst);
        let fr = eval(&xr, &mut evals);
        if fr < f_best {
            let xe = along(2.0, &worst);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (fe, xe) } else { (fr, xr) };
            continue;
        }
        if fr < f_second_worst {
            simplex[n] = (fr, xr);
            continue;
        }
        // Outside contraction if the reflection improved on the worst vertex.
        let xc = along(if fr < f_worst { 0.5 } else { -0.5 }, &worst);
        let fc = eval(&xc, &mut evals);
        if fc < fr.min(f_worst) {
            simplex[n] = (fc, xc);
            continue;
        }
        let best = simplex[0].1.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = best
                .iter()
                .zip(&vertex.1)
                .map(|(b, v)| b + 0.5 * (v - b))
                .collect();
            *vertex = (eval(&x, &mut evals), x);
        }
    }
    let (f, x) = simplex.swap_remove(0);
    SimplexResult {
        x,
        f,
        evals,
        converged,
    }
}
