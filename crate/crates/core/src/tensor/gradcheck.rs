use rand::seq::index::sample;

/// Coordinates smaller than this in magnitude are compared absolutely.
const REL_FLOOR: f64 = 1e-6;
const MAX_COORDS: usize = 200;

/// Compares an analytic gradient with central finite differences of `loss`
/// around `params` and returns the maximum relative error
/// `|a - n| / max(|a|, |n|, 1e-6)`. At most 200 coordinates are probed,
/// chosen by `seed` when there are more.
pub fn grad_check<F>(mut loss: F, params: &[f64], analytic: &[f64], h: f64, seed: u64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len(), "gradient length mismatch");
    let coords: Vec<usize> = if params.len() <= MAX_COORDS {
        (0..params.len()).collect()
    } else {
        let mut rng = crate::rng::seeded(seed);
        let mut picked = sample(&mut rng, params.len(), MAX_COORDS).into_vec();
        picked.sort_unstable();
        picked
    };
    let mut probe = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in coords {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = loss(&probe);
        probe[i] = orig - h;
        let down = loss(&probe);
        probe[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        worst = worst.max(err);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let p: Vec<f64> = (0..50).map(|i| i as f64 * 0.1 - 2.0).collect();
        let g: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
        let err = grad_check(|q| q.iter().map(|x| x * x).sum(), &p, &g, 1e-5, 0);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn detects_wrong_gradient() {
        let p: Vec<f64> = (0..500).map(|i| (i as f64).sin()).collect();
        let wrong: Vec<f64> = p.iter().map(|x| 2.2 * x).collect();
        let err = grad_check(|q| q.iter().map(|x| x * x).sum(), &p, &wrong, 1e-5, 0);
        assert!(err > 1e-2, "{err}");
    }
}
