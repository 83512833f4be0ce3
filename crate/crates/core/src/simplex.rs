/// Euclidean projection of `v` onto `{x >= 0, sum x = total}`, in place.
///
/// Sort-based: find the largest `k` with `u_k > (sum_{i<=k} u_i - total) / k`
/// over the values sorted descending, then shift and clip.
pub fn project_onto_simplex(v: &mut [f64], total: f64) {
    match v.len() {
        0 => return,
        1 => {
            v[0] = total;
            return;
        }
        _ => {}
    }
    if total <= 0.0 {
        v.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    let mut sorted = v.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - total) / (k + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
    // clipping can leave the sum off by rounding; put the remainder on the largest entry
    let sum: f64 = v.iter().sum();
    if let Some(big) = v.iter_mut().max_by(|a, b| a.total_cmp(b)) {
        *big = (*big + total - sum).max(0.0);
    }
}
