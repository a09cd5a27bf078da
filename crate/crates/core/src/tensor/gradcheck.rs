//! Central-difference verification of graph gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{Graph, Result, Tensor, TensorError, Var};

#[derive(Debug, Clone, Serialize)]
pub struct CoordCheck {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub step: f64,
    pub max_rel_err: f64,
    pub mean_rel_err: f64,
    pub checked: usize,
    pub coords: Vec<CoordCheck>,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&CoordCheck> {
        self.coords.iter().max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
    }
}

/// Settings for a finite-difference sweep over several input tensors.
#[derive(Debug, Clone)]
pub struct GradCheck {
    pub step: f64,
    /// Lower bound on the relative-error denominator, so coordinates whose
    /// true gradient is zero are judged on absolute error instead.
    pub floor: f64,
    /// Check at most this many coordinates per tensor (sampled with `seed`).
    pub max_coords_per_tensor: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            step: 1e-5,
            floor: 1e-6,
            max_coords_per_tensor: None,
            seed: 0,
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

impl GradCheck {
    /// `f` builds a scalar from leaves bound to `points` (in order).
    pub fn run<F, E>(&self, f: F, points: &[(String, Tensor)]) -> std::result::Result<GradCheckReport, E>
    where
        F: Fn(&mut Graph, &[Var]) -> std::result::Result<Var, E>,
        E: From<TensorError>,
    {
        if self.step <= 0.0 {
            return Err(E::from(TensorError::InvalidShape {
                op: "finite_diff_check",
                shape: vec![],
                reason: "step must be positive".into(),
            }));
        }
        let mut g = Graph::new();
        let vars: Vec<Var> = points.iter().map(|(_, t)| g.param(t.clone())).collect();
        let loss = f(&mut g, &vars)?;
        let grads = g.backward(loss)?;

        let eval = |which: usize, idx: usize, delta: f64| -> std::result::Result<f64, E> {
            let mut g = Graph::new();
            let vars: Vec<Var> = points
                .iter()
                .enumerate()
                .map(|(i, (_, t))| {
                    let mut t = t.clone();
                    if i == which {
                        t.data_mut()[idx] += delta;
                    }
                    g.constant(t)
                })
                .collect();
            let out = f(&mut g, &vars)?;
            Ok(g.value(out).item())
        };

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut coords = Vec::new();
        for (ti, (name, t)) in points.iter().enumerate() {
            let n = t.numel();
            let idxs: Vec<usize> = match self.max_coords_per_tensor {
                Some(m) if m < n => {
                    let mut v = sample(&mut rng, n, m).into_vec();
                    v.sort_unstable();
                    v
                }
                _ => (0..n).collect(),
            };
            let analytic = grads.get(vars[ti]);
            for idx in idxs {
                let a = analytic.map_or(0.0, |g| g.data()[idx]);
                let plus = eval(ti, idx, self.step)?;
                let minus = eval(ti, idx, -self.step)?;
                let num = (plus - minus) / (2.0 * self.step);
                coords.push(CoordCheck {
                    tensor: name.clone(),
                    index: idx,
                    analytic: a,
                    numeric: num,
                    rel_err: relative_error(a, num, self.floor),
                });
            }
        }
        let checked = coords.len();
        let max_rel_err = coords.iter().map(|c| c.rel_err).fold(0.0, f64::max);
        let mean_rel_err = if checked == 0 {
            0.0
        } else {
            coords.iter().map(|c| c.rel_err).sum::<f64>() / checked as f64
        };
        Ok(GradCheckReport {
            step: self.step,
            max_rel_err,
            mean_rel_err,
            checked,
            coords,
        })
    }
}

/// Single-input convenience wrapper around [`GradCheck::run`].
pub fn finite_diff_check<F>(f: F, point: &Tensor, step: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let check = GradCheck {
        step,
        ..GradCheck::default()
    };
    check.run(|g, vs| f(g, vs[0]), &[("x".to_string(), point.clone())])
}
