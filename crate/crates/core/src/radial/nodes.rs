use super::{RadialError, RadialFunction};

/// Counts strict sign changes between consecutive nonzero samples in
/// `[0, i_stop]`. Exact zeros are skipped. `i_stop` is clamped to the mesh.
pub fn count_nodes(f: &RadialFunction, i_stop: usize) -> usize {
    let values = f.values();
    let stop = i_stop.min(values.len() - 1);
    let mut nodes = 0;
    let mut prev = 0.0_f64;
    for &v in &values[..=stop] {
        if v == 0.0 {
            continue;
        }
        if prev != 0.0 && (v > 0.0) != (prev > 0.0) {
            nodes += 1;
        }
        prev = v;
    }
    nodes
}

/// Index of the first nonzero sample after the last sign change in
/// `[0, i_stop]`, or `None` when the function never changes sign.
pub fn last_sign_change(f: &RadialFunction, i_stop: usize) -> Option<usize> {
    let values = f.values();
    let stop = i_stop.min(values.len() - 1);
    let mut prev = 0.0_f64;
    let mut last = None;
    for (i, &v) in values[..=stop].iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        if prev != 0.0 && (v > 0.0) != (prev > 0.0) {
            last = Some(i);
        }
        prev = v;
    }
    last
}

/// Locates where the decaying tail of a propagated function turns into
/// runaway growth.
///
/// Walks back from the last valid sample while `|y|` keeps shrinking, so that
/// `|y|` grows monotonically after the returned index. The search never goes
/// below the last sign change.
pub fn find_truncation_index(f: &RadialFunction) -> Result<usize, RadialError> {
    find_truncation_index_from(f, 0)
}

/// As [`find_truncation_index`], with the search additionally bounded below by
/// `floor` (for example the outermost classical turning point).
pub fn find_truncation_index_from(f: &RadialFunction, floor: usize) -> Result<usize, RadialError> {
    let values = f.values();
    if values.iter().all(|&v| v == 0.0) {
        return Err(RadialError::Degenerate);
    }
    let last = f.last_valid_index();
    let lower = last_sign_change(f, last).unwrap_or(0).max(floor.min(last));

    let mut i = last;
    while i > lower && values[i - 1].abs() < values[i].abs() {
        i -= 1;
    }
    Ok(i)
}
