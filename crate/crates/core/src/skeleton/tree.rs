//! Key-point trees and root-to-leaf branches.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::mesh::trimesh::UnionFind;
use crate::volume::{distance_transform, VoxelVolume};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyPoint {
    pub position: Vec3,
    pub parent: Option<usize>,
}

/// Rooted tree of centerline key points.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyPointTree {
    nodes: Vec<KeyPoint>,
    root: usize,
    children: Vec<Vec<usize>>,
}

/// Node indices from the root to one leaf.
pub type BranchPath = Vec<usize>;

impl KeyPointTree {
    /// Validates that exactly one node is parentless and every node reaches it.
    pub fn new(nodes: Vec<KeyPoint>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Skeleton("tree has no nodes".into()));
        }
        let roots: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i].parent.is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::Skeleton(format!("tree needs exactly one root, found {}", roots.len())));
        }
        let mut children = vec![Vec::new(); nodes.len()];
        for (i, n) in nodes.iter().enumerate() {
            if let Some(p) = n.parent {
                if p >= nodes.len() {
                    return Err(Error::Skeleton(format!("node {i} has unknown parent {p}")));
                }
                children[p].push(i);
            }
        }
        let root = roots[0];
        let mut seen = vec![false; nodes.len()];
        let mut stack = vec![root];
        seen[root] = true;
        let mut count = 1;
        while let Some(x) = stack.pop() {
            for &c in &children[x] {
                if !seen[c] {
                    seen[c] = true;
                    count += 1;
                    stack.push(c);
                }
            }
        }
        if count != nodes.len() {
            return Err(Error::Skeleton("parent links contain a cycle or unreachable nodes".into()));
        }
        Ok(KeyPointTree { nodes, root, children })
    }

    pub fn nodes(&self) -> &[KeyPoint] {
        &self.nodes
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn position(&self, i: usize) -> Vec3 {
        self.nodes[i].position
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.children[i].len() + usize::from(self.nodes[i].parent.is_some())
    }

    /// Childless nodes in index order; a single-node tree's root counts.
    pub fn leaves(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.children[i].is_empty()).collect()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.nodes.iter().map(|n| n.position).collect()
    }
}

/// Result of [`build_tree_with_report`].
#[derive(Debug, Clone)]
pub struct TreeBuild {
    pub tree: KeyPointTree,
    /// Point counts of skeleton components other than the largest.
    pub dropped_components: Vec<usize>,
}

/// Minimum spanning tree over 26-adjacent skeleton points, rooted at the
/// point nearest `root_hint` or, without a hint, at the endpoint with the
/// largest distance-transform value. Only the largest component is kept;
/// dropped components are logged.
pub fn build_tree(points: &[Vec3], root_hint: Option<Vec3>, mask: &VoxelVolume) -> Result<KeyPointTree> {
    let b = build_tree_with_report(points, root_hint, mask)?;
    if !b.dropped_components.is_empty() {
        log::warn!(
            "skeleton: dropped {} smaller component(s) with {:?} points",
            b.dropped_components.len(),
            b.dropped_components
        );
    }
    Ok(b.tree)
}

pub fn build_tree_with_report(points: &[Vec3], root_hint: Option<Vec3>, mask: &VoxelVolume) -> Result<TreeBuild> {
    if points.is_empty() {
        return Err(Error::Skeleton("no skeleton points".into()));
    }
    let [nx, ny, nz] = mask.dims();
    // Snap to voxel indices; duplicates collapse.
    let mut cells: Vec<([i64; 3], Vec3)> = points
        .iter()
        .map(|p| {
            let v = mask.to_voxel(p);
            ([v.x.round() as i64, v.y.round() as i64, v.z.round() as i64], *p)
        })
        .collect();
    let lin = |c: &[i64; 3]| (c[2], c[1], c[0]);
    cells.sort_by_key(|(c, _)| lin(c));
    cells.dedup_by_key(|(c, _)| *c);
    let n = cells.len();
    let lookup: HashMap<[i64; 3], usize> = cells.iter().enumerate().map(|(i, (c, _))| (*c, i)).collect();

    let mut edges: Vec<(f64, usize, usize)> = Vec::new();
    for (i, (c, p)) in cells.iter().enumerate() {
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if let Some(&j) = lookup.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        if j > i {
                            edges.push(((cells[j].1 - p).norm(), i, j));
                        }
                    }
                }
            }
        }
    }

    // Components; keep the largest (ties: lowest first index).
    let mut uf = UnionFind::new(n);
    for &(_, i, j) in &edges {
        uf.union(i, j);
    }
    let mut size: HashMap<usize, usize> = HashMap::new();
    for i in 0..n {
        *size.entry(uf.find(i)).or_default() += 1;
    }
    let mut comps: Vec<(usize, usize)> = size.into_iter().collect();
    comps.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let keep_root = comps[0].0;
    let dropped: Vec<usize> = comps[1..].iter().map(|c| c.1).collect();
    let kept: Vec<usize> = (0..n).filter(|&i| uf.find(i) == keep_root).collect();
    let mut local = vec![usize::MAX; n];
    for (li, &gi) in kept.iter().enumerate() {
        local[gi] = li;
    }

    // Kruskal, deterministic by (weight, i, j).
    let mut es: Vec<(f64, usize, usize)> = edges
        .into_iter()
        .filter(|&(_, i, _)| local[i] != usize::MAX)
        .map(|(w, i, j)| (w, local[i], local[j]))
        .collect();
    es.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let m = kept.len();
    let mut uf = UnionFind::new(m);
    let mut adj = vec![Vec::new(); m];
    for (_, i, j) in es {
        if uf.find(i) != uf.find(j) {
            uf.union(i, j);
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    let pos: Vec<Vec3> = kept.iter().map(|&g| cells[g].1).collect();

    let root = match root_hint {
        Some(h) => (0..m)
            .min_by(|&a, &b| (pos[a] - h).norm_squared().total_cmp(&(pos[b] - h).norm_squared()).then(a.cmp(&b)))
            .unwrap(),
        None => {
            let edt = distance_transform(mask);
            let value = |i: usize| {
                let c = cells[kept[i]].0;
                if (0..3).all(|a| c[a] >= 0) && (c[0] as usize) < nx && (c[1] as usize) < ny && (c[2] as usize) < nz {
                    edt[mask.index(c[0] as usize, c[1] as usize, c[2] as usize)]
                } else {
                    0.0
                }
            };
            let ends: Vec<usize> = (0..m).filter(|&i| adj[i].len() <= 1).collect();
            let pool = if ends.is_empty() { (0..m).collect() } else { ends };
            *pool
                .iter()
                .max_by(|&&a, &&b| value(a).total_cmp(&value(b)).then(b.cmp(&a)))
                .unwrap()
        }
    };
    let tree = tree_from_adjacency(&pos, &adj, root)?;
    Ok(TreeBuild { tree, dropped_components: dropped })
}

/// Orients an acyclic adjacency list away from `root`. Node order is kept.
fn tree_from_adjacency(pos: &[Vec3], adj: &[Vec<usize>], root: usize) -> Result<KeyPointTree> {
    let mut parent = vec![None; pos.len()];
    let mut seen = vec![false; pos.len()];
    let mut queue = VecDeque::from([root]);
    seen[root] = true;
    while let Some(x) = queue.pop_front() {
        for &y in &adj[x] {
            if !seen[y] {
                seen[y] = true;
                parent[y] = Some(x);
                queue.push_back(y);
            }
        }
    }
    KeyPointTree::new(pos.iter().zip(parent).map(|(&position, parent)| KeyPoint { position, parent }).collect())
}

/// Removes leaf spurs: chains from a leaf back to a junction (degree ≥ 3)
/// shorter than `threshold(junction position)`. Repeats until stable. The
/// root's chain is never pruned.
pub fn prune_spurs(tree: &KeyPointTree, threshold: impl Fn(&Vec3) -> f64) -> Result<KeyPointTree> {
    let n = tree.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, node) in tree.nodes().iter().enumerate() {
        if let Some(p) = node.parent {
            adj[i].push(p);
            adj[p].push(i);
        }
    }
    let mut alive = vec![true; n];
    loop {
        let deg = |adj: &[Vec<usize>], alive: &[bool], i: usize| adj[i].iter().filter(|&&j| alive[j]).count();
        let mut remove = Vec::new();
        for leaf in 0..n {
            if !alive[leaf] || leaf == tree.root() || deg(&adj, &alive, leaf) != 1 {
                continue;
            }
            let mut chain = vec![leaf];
            let mut len = 0.0;
            let (mut prev, mut cur) = (leaf, leaf);
            let junction = loop {
                let next = adj[cur].iter().copied().find(|&j| alive[j] && j != prev);
                let Some(next) = next else { break None };
                len += (tree.position(next) - tree.position(cur)).norm();
                if deg(&adj, &alive, next) >= 3 {
                    break Some(next);
                }
                if next == tree.root() {
                    break None;
                }
                chain.push(next);
                prev = cur;
                cur = next;
            };
            if let Some(j) = junction {
                if len < threshold(&tree.position(j)) {
                    remove.push(chain);
                }
            }
        }
        if remove.is_empty() {
            break;
        }
        for chain in remove {
            for i in chain {
                alive[i] = false;
            }
        }
    }
    let map: Vec<Option<usize>> = {
        let mut next = 0;
        alive
            .iter()
            .map(|&a| {
                a.then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect()
    };
    let pos: Vec<Vec3> = (0..n).filter(|&i| alive[i]).map(|i| tree.position(i)).collect();
    let mut new_adj = vec![Vec::new(); pos.len()];
    for i in 0..n {
        if let Some(a) = map[i] {
            new_adj[a] = adj[i].iter().filter_map(|&j| map[j]).collect();
        }
    }
    tree_from_adjacency(&pos, &new_adj, map[tree.root()].expect("root is never pruned"))
}

/// One root-to-leaf path per leaf, ordered by leaf index.
pub fn split_branches(tree: &KeyPointTree) -> Vec<BranchPath> {
    tree.leaves()
        .into_iter()
        .map(|leaf| {
            let mut path = vec![leaf];
            let mut cur = leaf;
            while let Some(p) = tree.nodes()[cur].parent {
                path.push(p);
                cur = p;
            }
            path.reverse();
            path
        })
        .collect()
}

/// `VMTREE1` text: one `<id> <parent-id|-1> <x> <y> <z>` line per node.
pub fn write_tree(path: impl AsRef<Path>, tree: &KeyPointTree) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, tree_string(tree)).map_err(|e| Error::io(path, e))
}

pub(crate) fn tree_string(tree: &KeyPointTree) -> String {
    let mut s = String::from("VMTREE1\n");
    for (i, n) in tree.nodes().iter().enumerate() {
        let parent = n.parent.map_or(-1, |p| p as i64);
        let _ = writeln!(s, "{i} {parent} {} {} {}", n.position.x, n.position.y, n.position.z);
    }
    s
}

pub fn read_tree(path: impl AsRef<Path>) -> Result<KeyPointTree> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tree(&text)
}

pub(crate) fn parse_tree(text: &str) -> Result<KeyPointTree> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, l)) if l.trim() == "VMTREE1" => {}
        _ => return Err(Error::Format("key-point file must start with VMTREE1".into())),
    }
    let mut rows: Vec<(i64, i64, Vec3)> = Vec::new();
    for (ln, line) in lines {
        let t: Vec<&str> = line.split_whitespace().collect();
        let bad = || Error::Format(format!("VMTREE1 line {}: expected `<id> <parent> <x> <y> <z>`", ln + 1));
        if t.len() != 5 {
            return Err(bad());
        }
        let id: i64 = t[0].parse().map_err(|_| bad())?;
        let parent: i64 = t[1].parse().map_err(|_| bad())?;
        let c: Vec<f64> = t[2..].iter().map(|s| s.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
        rows.push((id, parent, Vec3::new(c[0], c[1], c[2])));
    }
    let mut index = HashMap::new();
    for (i, r) in rows.iter().enumerate() {
        if index.insert(r.0, i).is_some() {
            return Err(Error::Format(format!("VMTREE1: duplicate node id {}", r.0)));
        }
    }
    let nodes = rows
        .iter()
        .map(|&(_, parent, position)| {
            let parent = if parent < 0 {
                None
            } else {
                Some(*index.get(&parent).ok_or_else(|| Error::Format(format!("VMTREE1: unknown parent id {parent}")))?)
            };
            Ok(KeyPoint { position, parent })
        })
        .collect::<Result<Vec<_>>>()?;
    KeyPointTree::new(nodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::VolumeKind;

    fn grid(dims: [usize; 3]) -> VoxelVolume {
        VoxelVolume::empty_mask(dims, [1.0; 3], [0.0; 3]).unwrap()
    }

    fn filled(g: &VoxelVolume, pts: &[Vec3]) -> VoxelVolume {
        let mut d = vec![0.0f32; g.len()];
        for p in pts {
            d[g.index(p.x as usize, p.y as usize, p.z as usize)] = 1.0;
        }
        g.with_data(d, VolumeKind::BinaryMask).unwrap()
    }

    fn y_points() -> Vec<Vec3> {
        let mut pts: Vec<Vec3> = (0..6).map(|z| Vec3::new(5.0, 5.0, z as f64)).collect();
        for s in 1..5 {
            pts.push(Vec3::new(5.0 + s as f64, 5.0, 5.0 + s as f64));
            pts.push(Vec3::new(5.0 - s as f64, 5.0, 5.0 + s as f64));
        }
        pts
    }

    #[test]
    fn collinear_path_rooted_at_hint() {
        let pts = vec![Vec3::new(1.0, 1.0, 1.0), Vec3::new(1.0, 1.0, 2.0), Vec3::new(1.0, 1.0, 3.0)];
        let g = grid([3, 3, 5]);
        let t = build_tree(&pts, Some(Vec3::new(1.0, 1.0, 3.2)), &filled(&g, &pts)).unwrap();
        assert_eq!(t.position(t.root()), Vec3::new(1.0, 1.0, 3.0));
        assert_eq!(split_branches(&t).len(), 1);
        assert_eq!(split_branches(&t)[0].len(), 3);
    }

    #[test]
    fn y_shape_has_one_junction() {
        let pts = y_points();
        let g = grid([11, 11, 11]);
        let t = build_tree(&pts, Some(Vec3::new(5.0, 5.0, 0.0)), &filled(&g, &pts)).unwrap();
        let junctions: Vec<usize> = (0..t.len()).filter(|&i| t.degree(i) >= 3).collect();
        assert_eq!(junctions.len(), 1);
        assert_eq!(t.position(junctions[0]), Vec3::new(5.0, 5.0, 5.0));
        let br = split_branches(&t);
        assert_eq!(br.len(), 2);
        let j = br[0].iter().position(|&n| n == junctions[0]).unwrap();
        assert_eq!(br[0][..=j], br[1][..=j]);
    }

    #[test]
    fn root_without_hint_is_thickest_endpoint() {
        let pts = y_points();
        let g = grid([11, 11, 11]);
        // Thicken around the stem base so its endpoint has the largest EDT value.
        let mut d = filled(&g, &pts).data().to_vec();
        for z in 0..3 {
            for y in 3..8 {
                for x in 3..8 {
                    d[g.index(x, y, z)] = 1.0;
                }
            }
        }
        let m = g.with_data(d, VolumeKind::BinaryMask).unwrap();
        let t = build_tree(&pts, None, &m).unwrap();
        assert_eq!(t.position(t.root()), Vec3::new(5.0, 5.0, 0.0));
    }

    #[test]
    fn largest_component_kept() {
        let mut pts: Vec<Vec3> = (0..5).map(|z| Vec3::new(1.0, 1.0, z as f64)).collect();
        pts.push(Vec3::new(5.0, 5.0, 1.0));
        pts.push(Vec3::new(5.0, 5.0, 2.0));
        let g = grid([8, 8, 6]);
        let b = build_tree_with_report(&pts, None, &filled(&g, &pts)).unwrap();
        assert_eq!(b.tree.len(), 5);
        assert_eq!(b.dropped_components, vec![2]);
    }

    #[test]
    fn trident_gives_three_branches() {
        let nodes = vec![
            KeyPoint { position: Vec3::zeros(), parent: None },
            KeyPoint { position: Vec3::z(), parent: Some(0) },
            KeyPoint { position: Vec3::new(1.0, 0.0, 2.0), parent: Some(1) },
            KeyPoint { position: Vec3::new(0.0, 0.0, 2.0), parent: Some(1) },
            KeyPoint { position: Vec3::new(-1.0, 0.0, 2.0), parent: Some(1) },
        ];
        let t = KeyPointTree::new(nodes).unwrap();
        assert_eq!(t.degree(1), 4);
        let br = split_branches(&t);
        assert_eq!(br, vec![vec![0, 1, 2], vec![0, 1, 3], vec![0, 1, 4]]);
        let mut all: Vec<usize> = br.concat();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), t.len());
    }

    #[test]
    fn single_node_single_branch() {
        let t = KeyPointTree::new(vec![KeyPoint { position: Vec3::zeros(), parent: None }]).unwrap();
        assert_eq!(split_branches(&t), vec![vec![0]]);
    }

    #[test]
    fn rejects_bad_trees() {
        let two_roots = vec![
            KeyPoint { position: Vec3::zeros(), parent: None },
            KeyPoint { position: Vec3::z(), parent: None },
        ];
        assert!(KeyPointTree::new(two_roots).is_err());
        let cycle = vec![
            KeyPoint { position: Vec3::zeros(), parent: None },
            KeyPoint { position: Vec3::z(), parent: Some(2) },
            KeyPoint { position: Vec3::x(), parent: Some(1) },
        ];
        assert!(KeyPointTree::new(cycle).is_err());
    }

    #[test]
    fn spurs_pruned() {
        // Long stem with a 1-node spur at its middle.
        let mut nodes: Vec<KeyPoint> = (0..10)
            .map(|z| KeyPoint { position: Vec3::new(0.0, 0.0, z as f64), parent: if z == 0 { None } else { Some(z - 1) } })
            .collect();
        nodes.push(KeyPoint { position: Vec3::new(1.0, 0.0, 5.0), parent: Some(5) });
        let t = KeyPointTree::new(nodes).unwrap();
        assert_eq!(split_branches(&t).len(), 2);
        let p = prune_spurs(&t, |_| 2.0).unwrap();
        assert_eq!(p.len(), 10);
        assert_eq!(split_branches(&p).len(), 1);
        // Threshold below the spur length keeps it.
        assert_eq!(prune_spurs(&t, |_| 0.5).unwrap().len(), 11);
    }

    #[test]
    fn vmtree_round_trip() {
        let nodes = vec![
            KeyPoint { position: Vec3::new(0.1, 0.2, 0.3), parent: None },
            KeyPoint { position: Vec3::new(1.0 / 3.0, 0.0, 2.0), parent: Some(0) },
        ];
        let t = KeyPointTree::new(nodes).unwrap();
        assert_eq!(parse_tree(&tree_string(&t)).unwrap(), t);
        assert!(parse_tree("VMTREE2\n").is_err());
        assert!(parse_tree("VMTREE1\n0 -1 0 0\n").is_err());
        assert!(parse_tree("VMTREE1\n0 -1 0 0 0\n1 7 0 0 1\n").is_err());
    }
}
