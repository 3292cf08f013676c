//! Exact maximum-weight one-to-one assignment between system and gold
//! extractions, via the Hungarian algorithm with potentials.

/// Solve the max-weight assignment for a rectangular weight matrix
/// (`rows × cols`, all weights finite). Returns the row-to-column map and
/// the total weight of the optimum. Unmatched rows map to `None`.
pub fn max_weight_assignment(weights: &[Vec<f64>]) -> (Vec<Option<usize>>, f64) {
    let rows = weights.len();
    let cols = weights.first().map_or(0, |r| r.len());
    if rows == 0 || cols == 0 {
        return (vec![None; rows], 0.0);
    }
    if rows > cols {
        // solve the transpose and invert the mapping
        let t: Vec<Vec<f64>> = (0..cols)
            .map(|j| (0..rows).map(|i| weights[i][j]).collect())
            .collect();
        let (col_to_row, total) = max_weight_assignment(&t);
        let mut row_to_col = vec![None; rows];
        for (j, r) in col_to_row.iter().enumerate() {
            if let Some(i) = r {
                row_to_col[*i] = Some(j);
            }
        }
        return (row_to_col, total);
    }
    // Hungarian on the minimization problem cost = -weight, rows <= cols.
    // Indices are 1-based internally; p[j] is the row matched to column j.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    let mut p = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for i in 1..=rows {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let cur = -weights[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![None; rows];
    let mut total = 0.0;
    for j in 1..=cols {
        if p[j] != 0 {
            row_to_col[p[j] - 1] = Some(j - 1);
            total += weights[p[j] - 1][j - 1];
        }
    }
    (row_to_col, total)
}

/// Brute-force maximum assignment total, for cross-checking the exact
/// solver on small instances.
pub fn brute_force_best(weights: &[Vec<f64>]) -> f64 {
    let rows = weights.len();
    let cols = weights.first().map_or(0, |r| r.len());
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    fn recurse(weights: &[Vec<f64>], row: usize, used: &mut Vec<bool>) -> f64 {
        if row == weights.len() {
            return 0.0;
        }
        // leave this row unmatched
        let mut best = recurse(weights, row + 1, used);
        for col in 0..used.len() {
            if !used[col] {
                used[col] = true;
                let v = weights[row][col] + recurse(weights, row + 1, used);
                used[col] = false;
                if v > best {
                    best = v;
                }
            }
        }
        best
    }
    recurse(weights, 0, &mut vec![false; cols])
}
