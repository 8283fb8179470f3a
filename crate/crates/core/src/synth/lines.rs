use rayon::prelude::*;

pub(crate) type Line<'a> = &'a dyn Fn(usize) -> f64;

/// Builds a new array whose extent along `axis` is `out_n`; `f(line, n, j)`
/// computes output position `j` from the input line of length `n`.
pub(crate) fn along_axis(
    data: &[f64],
    dims: [usize; 3],
    axis: usize,
    out_n: usize,
    f: impl Fn(Line, usize, usize) -> f64 + Sync,
) -> (Vec<f64>, [usize; 3]) {
    let mut od = dims;
    od[axis] = out_n;
    let stride = [1, dims[0], dims[0] * dims[1]][axis];
    let out = (0..od[0] * od[1] * od[2])
        .into_par_iter()
        .map(|o| {
            let mut c = [o % od[0], (o / od[0]) % od[1], o / (od[0] * od[1])];
            let j = c[axis];
            c[axis] = 0;
            let base = c[0] + dims[0] * (c[1] + dims[1] * c[2]);
            let get = |k: usize| data[base + k * stride];
            f(&get, dims[axis], j)
        })
        .collect();
    (out, od)
}

pub(crate) fn lerp_at(get: Line, n: usize, p: f64) -> f64 {
    let p = p.clamp(0.0, (n - 1) as f64);
    let i0 = (p.floor() as usize).min(n - 1);
    let t = p - i0 as f64;
    let a = get(i0);
    if t == 0.0 || i0 + 1 >= n {
        a
    } else {
        a + t * (get(i0 + 1) - a)
    }
}

/// Uniform cubic B-spline through control values, indices clamped at the ends.
pub(crate) fn bspline_at(get: Line, n: usize, p: f64) -> f64 {
    let f = p.floor();
    let t = p - f;
    let base = f as isize;
    let (t2, t3) = (t * t, t * t * t);
    let w = [
        (1.0 - t).powi(3) / 6.0,
        (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
        (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0,
        t3 / 6.0,
    ];
    let at = |k: isize| get((base + k).clamp(0, n as isize - 1) as usize);
    let centre = at(0);
    let mut acc = 0.0;
    for (k, wk) in w.iter().enumerate() {
        acc += wk * (at(k as isize - 1) - centre);
    }
    centre + acc
}

/// Corner-aligned resampling of a small lattice onto `dims`, one axis at a time.
pub(crate) fn upsample(values: &[f64], cdims: [usize; 3], dims: [usize; 3], f: impl Fn(Line, usize, f64) -> f64 + Sync) -> Vec<f64> {
    let mut data = values.to_vec();
    let mut cur = cdims;
    for a in 0..3 {
        let scale = if dims[a] > 1 && cdims[a] > 1 { (cdims[a] - 1) as f64 / (dims[a] - 1) as f64 } else { 0.0 };
        (data, cur) = along_axis(&data, cur, a, dims[a], |get, n, j| f(get, n, j as f64 * scale));
    }
    data
}
