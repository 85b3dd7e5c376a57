/// Unnormalized Gaussian weights for offsets `0..=ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as usize;
    (0..=radius)
        .map(|j| (-((j * j) as f64) / (2.0 * sigma * sigma)).exp())
        .collect()
}

/// Discrete Gaussian smoothing. The kernel is truncated at `ceil(3 sigma)` and
/// renormalized over the taps that fall inside the sequence, so a constant
/// input is returned unchanged. `sigma == 0` is the identity.
pub fn smooth_values(values: &[f64], sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 || values.len() < 2 {
        return values.to_vec();
    }
    let kernel = gaussian_kernel(sigma);
    let radius = kernel.len() - 1;
    let n = values.len();
    (0..n)
        .map(|t| {
            let lo = t.saturating_sub(radius);
            let hi = (t + radius).min(n - 1);
            let (mut acc, mut norm) = (0.0, 0.0);
            for (i, v) in values.iter().enumerate().take(hi + 1).skip(lo) {
                let w = kernel[i.abs_diff(t)];
                acc += w * v;
                norm += w;
            }
            acc / norm
        })
        .collect()
}
