//! Minimum-degree fill-reducing ordering on the symmetric pattern of a matrix.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::SparseMatrix;
use crate::scalar::Scalar;

/// Returns `perm` with `perm[new] = old`. Rows are grouped into consecutive
/// blocks of `block` unknowns which are ordered together, which keeps the
/// ordering cheap for element-blocked DG matrices. Ties break on the lowest
/// index so the result is deterministic.
pub fn minimum_degree<T: Scalar>(a: &SparseMatrix<T>, block: usize) -> Vec<usize> {
    let n = a.dim();
    let block = if block == 0 || n % block != 0 { 1 } else { block };
    let nb = n / block;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nb];
    for r in 0..n {
        for &c in &a.col_idx()[a.row_ptr()[r]..a.row_ptr()[r + 1]] {
            let (br, bc) = (r / block, c / block);
            if br != bc {
                adj[br].push(bc);
                adj[bc].push(br);
            }
        }
    }
    for list in adj.iter_mut() {
        list.sort_unstable();
        list.dedup();
    }

    let mut heap: BinaryHeap<Reverse<(usize, usize)>> =
        adj.iter().enumerate().map(|(v, l)| Reverse((l.len(), v))).collect();
    let mut done = vec![false; nb];
    let mut order = Vec::with_capacity(nb);
    let mut scratch = Vec::new();
    while let Some(Reverse((deg, v))) = heap.pop() {
        if done[v] || deg != adj[v].len() {
            continue;
        }
        done[v] = true;
        order.push(v);
        let clique = std::mem::take(&mut adj[v]);
        for &u in &clique {
            scratch.clear();
            merge_into(&adj[u], &clique, v, u, &mut scratch);
            std::mem::swap(&mut adj[u], &mut scratch);
            heap.push(Reverse((adj[u].len(), u)));
        }
    }
    order.into_iter().flat_map(|b| b * block..(b + 1) * block).collect()
}

/// Sorted union of `a` and `b`, dropping `skip_a` and `skip_b`.
fn merge_into(a: &[usize], b: &[usize], skip_a: usize, skip_b: usize, out: &mut Vec<usize>) {
    let (mut i, mut j) = (0, 0);
    let push = |x: usize, out: &mut Vec<usize>| {
        if x != skip_a && x != skip_b && out.last() != Some(&x) {
            out.push(x);
        }
    };
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            push(a[i], out);
            i += 1;
        } else {
            push(b[j], out);
            j += 1;
        }
    }
    a[i..].iter().chain(&b[j..]).for_each(|&x| push(x, out));
}
