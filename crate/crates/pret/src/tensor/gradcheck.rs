//! Central finite-difference gradient verification, independent of the
//! reverse-mode path it checks. Instantiate the model at `f64` for meaningful
//! tolerances.

use rand::Rng;

use super::graph::{Graph, TensorId};
use super::nn::{ParamId, ParamStore};

pub struct GradCheckReport {
    /// (param name, coordinate, analytic, finite difference, relative error)
    pub worst: Vec<(String, usize, f64, f64, f64)>,
    pub checked: usize,
    pub passed: usize,
}

impl GradCheckReport {
    pub fn pass_fraction(&self) -> f64 {
        if self.checked == 0 {
            return 1.0;
        }
        self.passed as f64 / self.checked as f64
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs()).max(1e-6);
    (a - b).abs() / denom
}

/// Compare reverse-mode gradients of `build` (a scalar-loss forward over the
/// store) against central finite differences with step `h`, on up to
/// `samples_per_param` random coordinates of each parameter in `params`.
pub fn check_params<F, R>(
    store: &mut ParamStore<f64>,
    params: &[ParamId],
    build: F,
    h: f64,
    samples_per_param: usize,
    tol: f64,
    rng: &mut R,
) -> GradCheckReport
where
    F: Fn(&mut Graph<f64>, &ParamStore<f64>) -> TensorId,
    R: Rng,
{
    // analytic gradients
    store.zero_grads();
    let mut g = Graph::new();
    let loss = build(&mut g, store);
    g.backward(loss);
    g.accumulate_grads(store);
    let analytic: Vec<(ParamId, Vec<f64>)> = params
        .iter()
        .map(|&pid| (pid, store.get(pid).grad.clone()))
        .collect();

    let mut report = GradCheckReport {
        worst: Vec::new(),
        checked: 0,
        passed: 0,
    };
    for (pid, grad) in analytic {
        let n = grad.len();
        let samples = samples_per_param.min(n);
        let mut idxs: Vec<usize> = (0..n).collect();
        for i in 0..samples {
            let j = rng.gen_range(i..n);
            idxs.swap(i, j);
        }
        for &i in idxs.iter().take(samples) {
            let orig = store.get(pid).data[i];
            store.get_mut(pid).data[i] = orig + h;
            let fp = eval(store, &build);
            store.get_mut(pid).data[i] = orig - h;
            let fm = eval(store, &build);
            store.get_mut(pid).data[i] = orig;
            let fd = (fp - fm) / (2.0 * h);
            let re = rel_err(grad[i], fd);
            report.checked += 1;
            if re <= tol {
                report.passed += 1;
            } else {
                report
                    .worst
                    .push((store.get(pid).name.clone(), i, grad[i], fd, re));
            }
        }
    }
    report.worst.sort_by(|a, b| b.4.total_cmp(&a.4));
    report.worst.truncate(8);
    report
}

fn eval<F>(store: &ParamStore<f64>, build: &F) -> f64
where
    F: Fn(&mut Graph<f64>, &ParamStore<f64>) -> TensorId,
{
    let mut g = Graph::new();
    let loss = build(&mut g, store);
    g.value(loss)[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::nn::{EncoderLayer, Init, ParamStore};
    use crate::tensor::AttentionMask;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn encoder_layer_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (l, d) = (3, 8);
        let mut store: ParamStore<f64> = ParamStore::new();
        let layer = EncoderLayer::init(&mut store, &mut rng, "enc", d, 2);
        let input: Vec<f64> = (0..l * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let targets: Vec<usize> = vec![1, 5, 3];
        let params: Vec<ParamId> = store.iter().map(|(pid, _)| pid).collect();
        let build = move |g: &mut Graph<f64>, s: &ParamStore<f64>| {
            let x = g.constant(input.clone(), l, d);
            let o = layer
                .forward(g, s, x, &AttentionMask::all_true(l, l))
                .unwrap();
            g.cross_entropy_mean(o, &targets).unwrap()
        };
        let report = check_params(&mut store, &params, build, 1e-4, 6, 1e-3, &mut rng);
        assert!(
            report.pass_fraction() >= 0.95,
            "pass fraction {} worst {:?}",
            report.pass_fraction(),
            report.worst
        );
        let _ = store.add(&mut rng, "unused", 1, 1, Init::Zeros);
    }
}
