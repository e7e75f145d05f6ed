//! Flood fills and graph searches over 4-connected grids.

use std::collections::VecDeque;

use crate::env::{neighbors4, Environment, TileType};

pub const UNREACHABLE: u32 = u32::MAX;

/// Component label per cell (`usize::MAX` for cells outside `member`), plus
/// the number of components. Labels follow first-cell order.
pub fn label_components(
    width: usize,
    height: usize,
    member: impl Fn(usize) -> bool,
) -> (Vec<usize>, usize) {
    let n = width * height;
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..n {
        if label[start] != usize::MAX || !member(start) {
            continue;
        }
        label[start] = next;
        stack.push(start);
        while let Some(c) = stack.pop() {
            for nb in neighbors4(c, width, height) {
                if label[nb] == usize::MAX && member(nb) {
                    label[nb] = next;
                    stack.push(nb);
                }
            }
        }
        next += 1;
    }
    (label, next)
}

pub fn count_components(env: &Environment, member: impl Fn(TileType) -> bool) -> usize {
    label_components(env.width(), env.height(), |i| member(env.tile(i))).1
}

/// Breadth-first distances from `source` over cells accepted by `passable`.
pub fn bfs_distances(
    width: usize,
    height: usize,
    source: usize,
    passable: impl Fn(usize) -> bool,
) -> Vec<u32> {
    let mut dist = vec![UNREACHABLE; width * height];
    if !passable(source) {
        return dist;
    }
    let mut queue = VecDeque::new();
    dist[source] = 0;
    queue.push_back(source);
    while let Some(c) = queue.pop_front() {
        let d = dist[c] + 1;
        for nb in neighbors4(c, width, height) {
            if dist[nb] == UNREACHABLE && passable(nb) {
                dist[nb] = d;
                queue.push_back(nb);
            }
        }
    }
    dist
}

/// Cheapest path from any cell of `sources` to any cell satisfying `target`,
/// where entering cell `c` costs `cost(c)` (`None` = blocked). Returns the
/// cells of the path after the source, ending at the target cell. Ties are
/// resolved by cell index so results are deterministic.
pub fn cheapest_path(
    width: usize,
    height: usize,
    sources: &[usize],
    target: impl Fn(usize) -> bool,
    cost: impl Fn(usize) -> Option<u32>,
) -> Option<Vec<usize>> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;

    let n = width * height;
    let mut dist = vec![u64::MAX; n];
    let mut prev = vec![usize::MAX; n];
    let mut heap = BinaryHeap::new();
    for &s in sources {
        dist[s] = 0;
        heap.push(Reverse((0u64, s)));
    }
    while let Some(Reverse((d, c))) = heap.pop() {
        if d > dist[c] {
            continue;
        }
        if target(c) && !sources.contains(&c) {
            let mut path = vec![c];
            let mut cur = c;
            while prev[cur] != usize::MAX {
                cur = prev[cur];
                path.push(cur);
            }
            path.pop(); // the source
            path.reverse();
            return Some(path);
        }
        for nb in neighbors4(c, width, height) {
            let Some(step) = cost(nb) else { continue };
            let nd = d + step as u64;
            if nd < dist[nb] {
                dist[nb] = nd;
                prev[nb] = c;
                heap.push(Reverse((nd, nb)));
            }
        }
    }
    None
}

/// Articulation points of the subgraph induced by `member`.
pub fn articulation_points(
    width: usize,
    height: usize,
    member: impl Fn(usize) -> bool,
) -> Vec<bool> {
    let n = width * height;
    let mut disc = vec![u32::MAX; n];
    let mut low = vec![0u32; n];
    let mut is_cut = vec![false; n];
    let mut time = 0u32;
    // Iterative DFS: (cell, parent, neighbor cursor).
    let mut stack: Vec<(usize, usize, u8)> = Vec::new();
    for root in 0..n {
        if disc[root] != u32::MAX || !member(root) {
            continue;
        }
        disc[root] = time;
        low[root] = time;
        time += 1;
        let mut root_children = 0;
        stack.push((root, usize::MAX, 0));
        while let Some(top) = stack.len().checked_sub(1) {
            let (c, parent, cursor) = stack[top];
            if let Some(nb) = neighbors4(c, width, height).nth(cursor as usize) {
                stack[top].2 += 1;
                if !member(nb) || nb == parent {
                    continue;
                }
                if disc[nb] == u32::MAX {
                    disc[nb] = time;
                    low[nb] = time;
                    time += 1;
                    if c == root {
                        root_children += 1;
                    }
                    stack.push((nb, c, 0));
                } else {
                    low[c] = low[c].min(disc[nb]);
                }
            } else {
                stack.pop();
                if parent != usize::MAX {
                    low[parent] = low[parent].min(low[c]);
                    if parent != root && low[c] >= disc[parent] {
                        is_cut[parent] = true;
                    }
                }
            }
        }
        if root_children > 1 {
            is_cut[root] = true;
        }
    }
    is_cut
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn components_of_stripes() {
        // 3x3 with the middle column blocked.
        let blocked = [1, 4, 7];
        let (label, n) = label_components(3, 3, |i| !blocked.contains(&i));
        assert_eq!(n, 2);
        assert_eq!(label[0], label[6]);
        assert_ne!(label[0], label[2]);
    }

    #[test]
    fn bfs_on_open_grid() {
        let d = bfs_distances(4, 4, 0, |_| true);
        assert_eq!(d[15], 6);
    }

    #[test]
    fn articulation_on_line_and_ring() {
        // 1x4 line: inner cells are cuts.
        let cut = articulation_points(4, 1, |_| true);
        assert_eq!(cut, vec![false, true, true, false]);
        // 3x3 ring (centre removed): no cuts.
        let ring = articulation_points(3, 3, |i| i != 4);
        assert!(ring.iter().all(|c| !c));
    }

    #[test]
    fn cheapest_path_prefers_free_cells() {
        // Row 0: source at 0, target at 2; cell 1 costs 5, detour via row 1 costs 0.
        let path = cheapest_path(3, 2, &[0], |c| c == 2, |c| Some(if c == 1 { 5 } else { 0 })).unwrap();
        assert_eq!(path, vec![3, 4, 5, 2]);
    }
}
