//! Brute-force wrapped 3D convolution, written directly from the definition.

/// `out[c] = Σ_{offsets} g(offset) · a[c − offset]` with a Gaussian product
/// kernel truncated at `ceil(3σ)` cells per axis and normalised to unit sum,
/// followed by inhibition, rectification and normalisation.
pub fn iterate_brute(
    a: &[f64],
    dims: [usize; 3],
    sigma_xy: f64,
    sigma_t: f64,
    inhibit: f64,
) -> Vec<f64> {
    let [nx, ny, nt] = dims;
    let rxy = (3.0 * sigma_xy).ceil() as i64;
    let rt = (3.0 * sigma_t).ceil() as i64;
    let mut norm = 0.0;
    for dt in -rt..=rt {
        for dy in -rxy..=rxy {
            for dx in -rxy..=rxy {
                norm += weight(dx, dy, dt, sigma_xy, sigma_t);
            }
        }
    }
    let idx = |x: i64, y: i64, t: i64| {
        let x = x.rem_euclid(nx as i64) as usize;
        let y = y.rem_euclid(ny as i64) as usize;
        let t = t.rem_euclid(nt as i64) as usize;
        (t * ny + y) * nx + x
    };
    let mut out = vec![0.0; a.len()];
    for t in 0..nt as i64 {
        for y in 0..ny as i64 {
            for x in 0..nx as i64 {
                let mut acc = 0.0;
                for dt in -rt..=rt {
                    for dy in -rxy..=rxy {
                        for dx in -rxy..=rxy {
                            acc += weight(dx, dy, dt, sigma_xy, sigma_t) / norm
                                * a[idx(x - dx, y - dy, t - dt)];
                        }
                    }
                }
                out[idx(x, y, t)] = (acc - inhibit).max(0.0);
            }
        }
    }
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    out
}

fn weight(dx: i64, dy: i64, dt: i64, sxy: f64, st: f64) -> f64 {
    (-((dx * dx + dy * dy) as f64) / (2.0 * sxy * sxy)).exp()
        * (-((dt * dt) as f64) / (2.0 * st * st)).exp()
}
