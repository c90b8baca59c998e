use super::{RadialError, RadialFunction};

/// Composite Simpson rule on uniformly spaced samples.
///
/// With an even number of samples the last panel falls back to the
/// trapezoid rule.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    match n {
        0 | 1 => 0.0,
        2 => 0.5 * h * (values[0] + values[1]),
        _ if n.is_multiple_of(2) => {
            simpson(&values[..n - 1], h) + 0.5 * h * (values[n - 2] + values[n - 1])
        }
        _ => {
            let mut odd = 0.0;
            let mut even = 0.0;
            for (i, v) in values[1..n - 1].iter().enumerate() {
                if i % 2 == 0 {
                    odd += v;
                } else {
                    even += v;
                }
            }
            h / 3.0 * (values[0] + 4.0 * odd + 2.0 * even + values[n - 1])
        }
    }
}

/// `∫ f(r) dr` over the whole mesh.
pub fn integrate_samples(f: &RadialFunction) -> f64 {
    simpson(f.values(), f.mesh().step())
}

/// Zeroes the samples beyond `i_trunc` and rescales so that `∫ y² dr = 1`.
pub fn normalize(f: &RadialFunction, i_trunc: usize) -> Result<RadialFunction, RadialError> {
    let mesh = *f.mesh();
    let stop = i_trunc.min(mesh.n_points() - 1);
    let mut values = f.values().to_vec();
    for v in &mut values[stop + 1..] {
        *v = 0.0;
    }
    let squares: Vec<f64> = values.iter().map(|v| v * v).collect();
    let norm = simpson(&squares, mesh.step());
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(RadialError::ZeroNorm(stop));
    }
    let scale = norm.sqrt().recip();
    for v in &mut values {
        *v *= scale;
    }
    Ok(RadialFunction::from_parts(mesh, values, None))
}

/// `∫ f(r) w(r) g(r) dr` by composite Simpson on the shared mesh.
pub fn integrate_product(
    f: &RadialFunction,
    w: impl Fn(f64) -> f64,
    g: &RadialFunction,
) -> Result<f64, RadialError> {
    if f.mesh() != g.mesh() {
        return Err(RadialError::MeshMismatch);
    }
    let mesh = f.mesh();
    let samples: Vec<f64> = f
        .values()
        .iter()
        .zip(g.values())
        .enumerate()
        .map(|(i, (a, b))| (a * b) * w(mesh.r(i)))
        .collect();
    Ok(simpson(&samples, mesh.step()))
}
