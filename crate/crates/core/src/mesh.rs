//! Nested uniform Cartesian meshes on the unit cube and coarse-element patches.
//!
//! Three levels are nested: the coarse mesh with `nH` elements per axis, the
//! coefficient mesh refining it by `r_eps`, and the fine mesh refining that by
//! `r_h`. Elements and nodes are enumerated lexicographically with axis 0
//! fastest. Nodes carry two indices: a full index over all `(n + 1)^d` nodes
//! and a free index over the `(n - 1)^d` nodes off the boundary.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// A multi-index; entries beyond the spatial dimension are zero.
pub type MultiIndex = [usize; 3];

/// One of the three mesh levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Level {
    Coarse,
    Eps,
    Fine,
}

/// Nested coarse / coefficient / fine meshes on `(0,1)^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MeshHierarchy {
    d: usize,
    n_coarse: usize,
    r_eps: usize,
    r_h: usize,
}

impl MeshHierarchy {
    pub fn new(d: usize, n_coarse: usize, r_eps: usize, r_h: usize) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::InvalidGeometry(format!("dimension must be 1, 2 or 3, got {d}")));
        }
        if n_coarse < 2 {
            return Err(Error::InvalidGeometry(format!("need at least 2 coarse elements per axis, got {n_coarse}")));
        }
        if r_eps == 0 || r_h == 0 {
            return Err(Error::InvalidGeometry("refinement factors must be positive".into()));
        }
        Ok(Self { d, n_coarse, r_eps, r_h })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn n_coarse(&self) -> usize {
        self.n_coarse
    }

    #[inline]
    pub fn r_eps(&self) -> usize {
        self.r_eps
    }

    #[inline]
    pub fn r_h(&self) -> usize {
        self.r_h
    }

    /// Fine elements per coarse element along one axis, `H/h`.
    #[inline]
    pub fn r_fine(&self) -> usize {
        self.r_eps * self.r_h
    }

    pub fn coarse_size(&self) -> f64 {
        1.0 / self.n_coarse as f64
    }

    pub fn eps_size(&self) -> f64 {
        1.0 / self.per_axis(Level::Eps) as f64
    }

    pub fn fine_size(&self) -> f64 {
        1.0 / self.per_axis(Level::Fine) as f64
    }

    pub fn mesh_size(&self, level: Level) -> f64 {
        1.0 / self.per_axis(level) as f64
    }

    /// Elements per axis on the given level.
    pub fn per_axis(&self, level: Level) -> usize {
        match level {
            Level::Coarse => self.n_coarse,
            Level::Eps => self.n_coarse * self.r_eps,
            Level::Fine => self.n_coarse * self.r_eps * self.r_h,
        }
    }

    /// Refinement factor between the coarse level and `level`.
    pub fn ratio_from_coarse(&self, level: Level) -> usize {
        self.per_axis(level) / self.n_coarse
    }

    pub fn num_elements(&self, level: Level) -> usize {
        self.per_axis(level).pow(self.d as u32)
    }

    pub fn num_nodes(&self, level: Level) -> usize {
        (self.per_axis(level) + 1).pow(self.d as u32)
    }

    pub fn num_free_nodes(&self, level: Level) -> usize {
        (self.per_axis(level) - 1).pow(self.d as u32)
    }

    pub fn element_index(&self, level: Level, m: &MultiIndex) -> usize {
        linear_index(m, self.per_axis(level), self.d)
    }

    pub fn element_multi(&self, level: Level, idx: usize) -> MultiIndex {
        multi_index(idx, self.per_axis(level), self.d)
    }

    pub fn node_index(&self, level: Level, m: &MultiIndex) -> usize {
        linear_index(m, self.per_axis(level) + 1, self.d)
    }

    pub fn node_multi(&self, level: Level, idx: usize) -> MultiIndex {
        multi_index(idx, self.per_axis(level) + 1, self.d)
    }

    pub fn is_boundary_node(&self, level: Level, m: &MultiIndex) -> bool {
        let n = self.per_axis(level);
        m[..self.d].iter().any(|&i| i == 0 || i == n)
    }

    /// Free index of a node off the boundary, `None` for boundary nodes.
    pub fn free_node_index(&self, level: Level, m: &MultiIndex) -> Option<usize> {
        if self.is_boundary_node(level, m) {
            return None;
        }
        let inner = self.per_axis(level) - 1;
        let mut shifted = [0; 3];
        for a in 0..self.d {
            shifted[a] = m[a] - 1;
        }
        Some(linear_index(&shifted, inner, self.d))
    }

    /// Node multi-index of a free node.
    pub fn free_node_multi(&self, level: Level, free: usize) -> MultiIndex {
        let mut m = multi_index(free, self.per_axis(level) - 1, self.d);
        for a in 0..self.d {
            m[a] += 1;
        }
        m
    }

    /// Node coordinates.
    pub fn node_coords(&self, level: Level, m: &MultiIndex) -> [f64; 3] {
        let h = self.mesh_size(level);
        let mut x = [0.0; 3];
        for a in 0..self.d {
            x[a] = m[a] as f64 * h;
        }
        x
    }

    /// Element of `coarser` containing element `m` of `finer` (index arithmetic).
    pub fn parent(&self, finer: Level, coarser: Level, m: &MultiIndex) -> MultiIndex {
        let r = self.per_axis(finer) / self.per_axis(coarser);
        let mut p = [0; 3];
        for a in 0..self.d {
            p[a] = m[a] / r;
        }
        p
    }

    /// Default oversampling `ceil(|ln H|) + 1`.
    pub fn default_ell(&self) -> usize {
        libm::ceil(libm::log(self.n_coarse as f64)) as usize + 1
    }
}

pub(crate) fn linear_index(m: &MultiIndex, n: usize, d: usize) -> usize {
    let mut idx = 0;
    for a in (0..d).rev() {
        idx = idx * n + m[a];
    }
    idx
}

pub(crate) fn multi_index(mut idx: usize, n: usize, d: usize) -> MultiIndex {
    let mut m = [0; 3];
    for slot in m.iter_mut().take(d) {
        *slot = idx % n;
        idx /= n;
    }
    m
}

/// Visits every multi-index in the box `lo..=hi` lexicographically (axis 0 fastest).
pub fn for_each_in_box(d: usize, lo: &MultiIndex, hi: &MultiIndex, mut f: impl FnMut(&MultiIndex)) {
    for a in 0..d {
        if lo[a] > hi[a] {
            return;
        }
    }
    let mut m = *lo;
    loop {
        f(&m);
        let mut a = 0;
        loop {
            if a == d {
                return;
            }
            if m[a] < hi[a] {
                m[a] += 1;
                break;
            }
            m[a] = lo[a];
            a += 1;
        }
    }
}

/// Oversampled patch `N^ℓ(K)`: the box of coarse elements `[K - ℓ, K + ℓ]`
/// clipped to the domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Patch {
    hier: MeshHierarchy,
    k: MultiIndex,
    ell: usize,
    lo: MultiIndex,
    hi: MultiIndex,
    interior: bool,
}

/// Inclusive per-axis element index intervals of a patch on one level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ElementRange {
    pub lo: MultiIndex,
    pub hi: MultiIndex,
}

impl Patch {
    pub fn new(hier: &MeshHierarchy, k: MultiIndex, ell: usize) -> Result<Self> {
        if ell == 0 {
            return Err(Error::InvalidGeometry("oversampling ℓ must be at least 1".into()));
        }
        let n = hier.n_coarse;
        let d = hier.d;
        let mut lo = [0; 3];
        let mut hi = [0; 3];
        let mut interior = true;
        for a in 0..d {
            if k[a] >= n {
                return Err(Error::InvalidGeometry(format!("coarse element index {} out of range", k[a])));
            }
            lo[a] = k[a].saturating_sub(ell);
            hi[a] = (k[a] + ell).min(n - 1);
            // At least ℓ + 1 coarse layers between K and the boundary.
            if k[a] < ell + 1 || k[a] + ell + 2 > n {
                interior = false;
            }
        }
        for a in d..3 {
            if k[a] != 0 {
                return Err(Error::InvalidGeometry("unused multi-index entries must be zero".into()));
            }
        }
        Ok(Self { hier: *hier, k, ell, lo, hi, interior })
    }

    /// Patch around the coarse element with linear index `k`.
    pub fn from_index(hier: &MeshHierarchy, k: usize, ell: usize) -> Result<Self> {
        if k >= hier.num_elements(Level::Coarse) {
            return Err(Error::InvalidGeometry(format!("coarse element {k} out of range")));
        }
        Self::new(hier, hier.element_multi(Level::Coarse, k), ell)
    }

    pub fn hierarchy(&self) -> &MeshHierarchy {
        &self.hier
    }

    pub fn element(&self) -> MultiIndex {
        self.k
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn is_interior(&self) -> bool {
        self.interior
    }

    pub fn dim(&self) -> usize {
        self.hier.d
    }

    pub fn coarse_range(&self) -> ElementRange {
        ElementRange { lo: self.lo, hi: self.hi }
    }

    /// Element range of the patch on any level.
    pub fn range(&self, level: Level) -> ElementRange {
        let r = self.hier.ratio_from_coarse(level);
        let mut lo = [0; 3];
        let mut hi = [0; 3];
        for a in 0..self.hier.d {
            lo[a] = self.lo[a] * r;
            hi[a] = (self.hi[a] + 1) * r - 1;
        }
        ElementRange { lo, hi }
    }

    pub fn eps_range(&self) -> ElementRange {
        self.range(Level::Eps)
    }

    pub fn fine_range(&self) -> ElementRange {
        self.range(Level::Fine)
    }

    /// Elements per axis of the patch on a level.
    pub fn extent(&self, level: Level) -> [usize; 3] {
        let r = self.range(level);
        let mut e = [1; 3];
        for a in 0..self.hier.d {
            e[a] = r.hi[a] - r.lo[a] + 1;
        }
        e
    }

    /// `m_ℓ`: number of coefficient elements in the patch.
    pub fn num_eps_elements(&self) -> usize {
        self.extent(Level::Eps)[..self.hier.d].iter().product()
    }

    /// `n_ℓ`: number of fine nodes strictly inside the patch.
    pub fn num_fine_inner_nodes(&self) -> usize {
        self.extent(Level::Fine)[..self.hier.d].iter().map(|e| e - 1).product()
    }

    /// `N_ℓ`: number of coarse nodes of the patch including its boundary.
    pub fn num_coarse_nodes(&self) -> usize {
        self.extent(Level::Coarse)[..self.hier.d].iter().map(|e| e + 1).product()
    }

    /// Local enumerations of the patch on each level.
    pub fn local_indexers(&self) -> LocalIndexers {
        let d = self.hier.d;
        let mut eps_elements = Vec::with_capacity(self.num_eps_elements());
        let er = self.eps_range();
        for_each_in_box(d, &er.lo, &er.hi, |m| eps_elements.push(self.hier.element_index(Level::Eps, m)));

        let fr = self.fine_range();
        let mut lo = [0; 3];
        let mut hi = [0; 3];
        for a in 0..d {
            lo[a] = fr.lo[a] + 1;
            hi[a] = fr.hi[a];
        }
        let mut fine_inner_nodes = Vec::with_capacity(self.num_fine_inner_nodes());
        for_each_in_box(d, &lo, &hi, |m| fine_inner_nodes.push(self.hier.node_index(Level::Fine, m)));

        let mut chi = [0; 3];
        for a in 0..d {
            chi[a] = self.hi[a] + 1;
        }
        let mut coarse_nodes = Vec::with_capacity(self.num_coarse_nodes());
        for_each_in_box(d, &self.lo, &chi, |m| coarse_nodes.push(self.hier.node_index(Level::Coarse, m)));
        LocalIndexers { eps_elements, fine_inner_nodes, coarse_nodes }
    }

    /// Local positions (within the coarse node list) of the `2^d` corners of `K`.
    pub fn element_corner_positions(&self) -> Vec<usize> {
        let d = self.hier.d;
        let mut ext = [1; 3];
        for a in 0..d {
            ext[a] = self.hi[a] - self.lo[a] + 2;
        }
        let mut out = Vec::with_capacity(1 << d);
        for c in 0..(1usize << d) {
            let mut pos = 0;
            for a in (0..d).rev() {
                let bit = (c >> a) & 1;
                pos = pos * ext[a] + (self.k[a] - self.lo[a] + bit);
            }
            out.push(pos);
        }
        out
    }

    /// Local-to-global map of coarse degrees of freedom.
    pub fn scatter_map(&self) -> ScatterMap {
        let idx = self.local_indexers();
        let nodes: Vec<Option<usize>> = idx
            .coarse_nodes
            .iter()
            .map(|&g| {
                let m = self.hier.node_multi(Level::Coarse, g);
                self.hier.free_node_index(Level::Coarse, &m)
            })
            .collect();
        let corners = self.element_corner_positions();
        let element_nodes = corners.iter().map(|&p| nodes[p]).collect();
        ScatterMap { nodes, element_nodes, corner_positions: corners }
    }
}

/// Ordered index lists of a patch: global coefficient element indices, global
/// full fine node indices of inner nodes, global full coarse node indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalIndexers {
    pub eps_elements: Vec<usize>,
    pub fine_inner_nodes: Vec<usize>,
    pub coarse_nodes: Vec<usize>,
}

/// Map `Φ_K` from local coarse indices to global free coarse nodes; `None`
/// marks a boundary node whose row or column is dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScatterMap {
    /// One entry per local coarse node of the patch.
    pub nodes: Vec<Option<usize>>,
    /// One entry per corner of `K` (local basis index `0..2^d`).
    pub element_nodes: Vec<Option<usize>>,
    /// Positions of the corners of `K` within the local coarse node list.
    pub corner_positions: Vec<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hierarchy_sizes() {
        let h = MeshHierarchy::new(1, 8, 2, 2).unwrap();
        assert_eq!(h.coarse_size(), 1.0 / 8.0);
        assert_eq!(h.eps_size(), 1.0 / 16.0);
        assert_eq!(h.fine_size(), 1.0 / 32.0);
        assert_eq!(h.num_elements(Level::Fine), 32);
        let h = MeshHierarchy::new(2, 4, 4, 1).unwrap();
        assert_eq!(h.eps_size(), 1.0 / 16.0);
        assert_eq!(h.fine_size(), 1.0 / 16.0);
        assert_eq!(h.num_elements(Level::Fine), 256);
        assert!(MeshHierarchy::new(2, 0, 1, 1).is_err());
        assert!(MeshHierarchy::new(4, 4, 1, 1).is_err());
        assert!(MeshHierarchy::new(1, 4, 0, 1).is_err());
    }

    #[test]
    fn patch_clipping() {
        let h = MeshHierarchy::new(1, 8, 1, 1).unwrap();
        let p = Patch::new(&h, [4, 0, 0], 2).unwrap();
        assert_eq!((p.coarse_range().lo[0], p.coarse_range().hi[0]), (2, 6));
        assert!(p.is_interior());
        let p = Patch::new(&h, [0, 0, 0], 2).unwrap();
        assert_eq!((p.coarse_range().lo[0], p.coarse_range().hi[0]), (0, 2));
        assert!(!p.is_interior());
        let h = MeshHierarchy::new(2, 8, 2, 1).unwrap();
        let p = Patch::new(&h, [4, 3, 0], 1).unwrap();
        assert_eq!(p.num_eps_elements(), 36);
    }

    #[test]
    fn scatter_drops_boundary() {
        let h = MeshHierarchy::new(1, 4, 1, 1).unwrap();
        let p = Patch::new(&h, [1, 0, 0], 1).unwrap();
        let s = p.scatter_map();
        assert_eq!(s.nodes, vec![None, Some(0), Some(1), Some(2)]);
        assert_eq!(s.element_nodes, vec![Some(0), Some(1)]);
    }

    #[test]
    fn box_iteration_order() {
        let mut v = Vec::new();
        for_each_in_box(2, &[0, 0, 0], &[1, 1, 0], |m| v.push((m[0], m[1])));
        assert_eq!(v, vec![(0, 0), (1, 0), (0, 1), (1, 1)]);
    }
}
