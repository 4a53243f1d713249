use crate::mesh::{Mesh, Point};

/// Point location by uniform bucketing of cell bounding boxes.
#[derive(Debug)]
pub(crate) struct Locator {
    origin: Point,
    cell_size: [f64; 2],
    dims: [usize; 2],
    buckets: Vec<Vec<usize>>,
}

impl Locator {
    pub(crate) fn new(mesh: &Mesh) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in mesh.vertices() {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let per_axis = if mesh.dim() == 1 {
            [mesh.n_cells().max(1), 1]
        } else {
            let n = (mesh.n_cells() as f64).sqrt().ceil().max(1.0) as usize;
            [n, n]
        };
        let cell_size = [
            ((hi[0] - lo[0]) / per_axis[0] as f64).max(f64::MIN_POSITIVE),
            ((hi[1] - lo[1]) / per_axis[1] as f64).max(f64::MIN_POSITIVE),
        ];
        let mut loc = Self {
            origin: lo,
            cell_size,
            dims: per_axis,
            buckets: vec![Vec::new(); per_axis[0] * per_axis[1]],
        };
        for c in 0..mesh.n_cells() {
            let mut clo = [f64::INFINITY; 2];
            let mut chi = [f64::NEG_INFINITY; 2];
            for &v in mesh.cell(c) {
                let p = mesh.vertex(v);
                for k in 0..2 {
                    clo[k] = clo[k].min(p[k]);
                    chi[k] = chi[k].max(p[k]);
                }
            }
            let (i0, j0) = loc.bucket(clo);
            let (i1, j1) = loc.bucket(chi);
            for i in i0..=i1 {
                for j in j0..=j1 {
                    loc.buckets[j * loc.dims[0] + i].push(c);
                }
            }
        }
        loc
    }

    fn bucket(&self, p: Point) -> (usize, usize) {
        let idx = |k: usize| {
            let t = ((p[k] - self.origin[k]) / self.cell_size[k]).floor();
            (t.max(0.0) as usize).min(self.dims[k] - 1)
        };
        (idx(0), idx(1))
    }

    /// The cell containing `p` (or, for points outside Ω_h, the cell with the
    /// least negative barycentric coordinate among nearby cells), together
    /// with the barycentric coordinates of `p` in it.
    pub(crate) fn locate(&self, mesh: &Mesh, p: Point) -> (usize, [f64; 3]) {
        let (bi, bj) = self.bucket(p);
        let mut best: Option<(f64, usize, [f64; 3])> = None;
        for &c in &self.buckets[bj * self.dims[0] + bi] {
            consider(mesh, c, p, &mut best);
        }
        if !matches!(best, Some((w, _, _)) if w >= -1e-12) {
            for c in 0..mesh.n_cells() {
                consider(mesh, c, p, &mut best);
            }
        }
        let (_, c, lam) = best.expect("mesh has cells");
        (c, lam)
    }
}

fn consider(mesh: &Mesh, c: usize, p: Point, best: &mut Option<(f64, usize, [f64; 3])>) {
    let lam = barycentric(mesh, c, p);
    let worst = lam[..=mesh.dim()].iter().copied().fold(f64::INFINITY, f64::min);
    if best.map_or(true, |(w, _, _)| worst > w) {
        *best = Some((worst, c, lam));
    }
}

pub(crate) fn barycentric(mesh: &Mesh, c: usize, p: Point) -> [f64; 3] {
    let cell = mesh.cell(c);
    let p0 = mesh.vertex(cell[0]);
    let p1 = mesh.vertex(cell[1]);
    if mesh.dim() == 1 {
        let t = (p[0] - p0[0]) / (p1[0] - p0[0]);
        return [1.0 - t, t, 0.0];
    }
    let p2 = mesh.vertex(cell[2]);
    let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
    let l1 = ((p[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p[1] - p0[1])) / det;
    let l2 = ((p1[0] - p0[0]) * (p[1] - p0[1]) - (p[0] - p0[0]) * (p1[1] - p0[1])) / det;
    [1.0 - l1 - l2, l1, l2]
}
