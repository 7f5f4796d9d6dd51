//! Box-constrained Nelder-Mead. Trial points are projected onto the box
//! before evaluation.

#[derive(Clone, Copy, Debug)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    pub const fn new(lower: f64, upper: f64) -> Self {
        Bounds { lower, upper }
    }

    fn project(&self, v: f64) -> f64 {
        v.clamp(self.lower, self.upper)
    }
}

#[derive(Clone, Debug)]
pub struct NelderMead {
    pub max_iter: usize,
    /// Stop once the spread of simplex values falls below this.
    pub f_tol: f64,
    /// Initial step as a fraction of each box width.
    pub step_fraction: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        NelderMead {
            max_iter: 400,
            f_tol: 1e-10,
            step_fraction: 0.1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
}

impl NelderMead {
    pub fn minimize<F>(&self, f: F, start: &[f64], bounds: &[Bounds]) -> Minimum
    where
        F: Fn(&[f64]) -> f64,
    {
        let dim = start.len();
        assert_eq!(dim, bounds.len());
        let project = |x: &mut [f64]| {
            for (v, b) in x.iter_mut().zip(bounds) {
                *v = b.project(*v);
            }
        };
        let eval = |x: &[f64]| {
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };

        let mut x0 = start.to_vec();
        project(&mut x0);
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
        simplex.push((x0.clone(), eval(&x0)));
        for i in 0..dim {
            let mut x = x0.clone();
            let width = bounds[i].upper - bounds[i].lower;
            let step = self.step_fraction * width;
            // step inward when the start sits on the upper face
            x[i] = if x[i] + step <= bounds[i].upper {
                x[i] + step
            } else {
                x[i] - step
            };
            project(&mut x);
            let fx = eval(&x);
            simplex.push((x, fx));
        }

        let mut iterations = 0;
        while iterations < self.max_iter {
            iterations += 1;
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let best = simplex[0].1;
            let worst = simplex[dim].1;
            if (worst - best).abs() <= self.f_tol * (1.0 + best.abs()) {
                break;
            }
            let centroid: Vec<f64> = (0..dim)
                .map(|j| simplex[..dim].iter().map(|(x, _)| x[j]).sum::<f64>() / dim as f64)
                .collect();
            let along = |t: f64| {
                let mut p: Vec<f64> = centroid
                    .iter()
                    .zip(&simplex[dim].0)
                    .map(|(c, w)| c + t * (w - c))
                    .collect();
                project(&mut p);
                p
            };

            let xr = along(-1.0);
            let fr = eval(&xr);
            if fr < simplex[0].1 {
                let xe = along(-2.0);
                let fe = eval(&xe);
                simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < simplex[dim - 1].1 {
                simplex[dim] = (xr, fr);
                continue;
            }
            let (xc, fc) = if fr < worst {
                let xc = along(-0.5);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = eval(&xc);
                (xc, fc)
            };
            if fc < worst.min(fr) {
                simplex[dim] = (xc, fc);
                continue;
            }
            // shrink toward the best vertex
            let best_x = simplex[0].0.clone();
            for vertex in simplex.iter_mut().skip(1) {
                let mut x: Vec<f64> = best_x
                    .iter()
                    .zip(&vertex.0)
                    .map(|(b, v)| b + 0.5 * (v - b))
                    .collect();
                project(&mut x);
                let fx = eval(&x);
                *vertex = (x, fx);
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (x, f) = simplex.swap_remove(0);
        Minimum { x, f, iterations }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_interior_minimum() {
        let f = |x: &[f64]| (x[0] - 0.3).powi(2) + 2.0 * (x[1] - 0.7).powi(2);
        let b = [Bounds::new(0.0, 1.0); 2];
        let m = NelderMead::default().minimize(f, &[0.5, 0.5], &b);
        assert!((m.x[0] - 0.3).abs() < 1e-4, "{:?}", m);
        assert!((m.x[1] - 0.7).abs() < 1e-4, "{:?}", m);
    }

    #[test]
    fn respects_the_box() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2);
        let m = NelderMead::default().minimize(f, &[0.5], &[Bounds::new(0.0, 1.0)]);
        assert!((m.x[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rosenbrock_in_a_box() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let b = [Bounds::new(-2.0, 2.0); 2];
        let nm = NelderMead {
            max_iter: 2000,
            f_tol: 1e-14,
            ..Default::default()
        };
        let m = nm.minimize(f, &[-1.0, 1.5], &b);
        assert!(m.f < 1e-6, "{:?}", m);
    }
}
