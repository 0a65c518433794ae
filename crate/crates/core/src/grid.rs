//! Uniform symmetric grids on boxes in R^{n+1}.
//!
//! Fields live on the closed upper half box `{x_{n+1} >= 0}`; the lower half
//! is never stored and is read back through the even reflection
//! `x_{n+1} -> -x_{n+1}`. The slit `{x_{n+1} = 0}` is the bottom layer of the
//! upper-half lattice.
//!
//! Node ordering is row-major over the axes `(x_1, .., x_n, x_{n+1})` with the
//! normal axis varying fastest, so the node id of a slit node is
//! `slit_id * (m + 1)`.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Largest supported ambient dimension (`n = 2`).
pub const MAX_DIM: usize = 3;

/// Uniform grid on `[-E, E]^n x [0, E]` with spacing `h = E / m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    n: usize,
    half_extent: f64,
    h: f64,
    m: usize,
    shape: [usize; MAX_DIM],
    strides: [usize; MAX_DIM],
}

impl Grid {
    /// Builds the grid for slit dimension `n` (1 or 2). `h` must divide
    /// `half_extent` and the box must be at least four cells wide.
    pub fn new(n: usize, half_extent: f64, h: f64) -> Result<Self> {
        if n != 1 && n != 2 {
            return Err(Error::InvalidGrid(format!(
                "slit dimension must be 1 or 2, got {n}"
            )));
        }
        if !(h.is_finite() && h > 0.0 && half_extent.is_finite() && half_extent > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "spacing and extent must be positive (h={h}, half_extent={half_extent})"
            )));
        }
        let ratio = half_extent / h;
        let m = ratio.round();
        if (ratio - m).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidGrid(format!(
                "spacing {h} does not divide half extent {half_extent}"
            )));
        }
        let m = m as usize;
        if m < 2 {
            return Err(Error::InvalidGrid(format!(
                "box width {} is less than 4h (h={h})",
                2.0 * half_extent
            )));
        }
        let dim = n + 1;
        let mut shape = [1usize; MAX_DIM];
        for s in shape.iter_mut().take(n) {
            *s = 2 * m + 1;
        }
        shape[n] = m + 1;
        let mut strides = [0usize; MAX_DIM];
        let mut acc = 1;
        for a in (0..dim).rev() {
            strides[a] = acc;
            acc *= shape[a];
        }
        Ok(Grid {
            n,
            half_extent,
            h,
            m,
            shape,
            strides,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Ambient dimension `n + 1`.
    pub fn dim(&self) -> usize {
        self.n + 1
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn half_extent(&self) -> f64 {
        self.half_extent
    }

    /// Number of cells between the centre and the box face.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape[..self.dim()]
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides[..self.dim()]
    }

    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn slit_len(&self) -> usize {
        self.shape[..self.n].iter().product()
    }

    pub fn index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(self.strides()).map(|(i, s)| i * s).sum()
    }

    pub fn multi_index(&self, mut id: usize) -> [usize; MAX_DIM] {
        let mut out = [0; MAX_DIM];
        for a in 0..self.dim() {
            out[a] = id / self.strides[a];
            id %= self.strides[a];
        }
        out
    }

    /// Coordinate of lattice index `i` along `axis`.
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        if axis < self.n {
            (i as f64 - self.m as f64) * self.h
        } else {
            i as f64 * self.h
        }
    }

    pub fn point(&self, id: usize) -> [f64; MAX_DIM] {
        let idx = self.multi_index(id);
        let mut p = [0.0; MAX_DIM];
        for a in 0..self.dim() {
            p[a] = self.coord(a, idx[a]);
        }
        p
    }

    pub fn slit_node(&self, slit_id: usize) -> usize {
        slit_id * (self.m + 1)
    }

    pub fn slit_id(&self, node: usize) -> Option<usize> {
        (node.is_multiple_of(self.m + 1)).then(|| node / (self.m + 1))
    }

    pub fn is_slit(&self, node: usize) -> bool {
        node.is_multiple_of(self.m + 1)
    }

    /// Slit coordinates of a slit node (only the first `n` entries are set).
    pub fn slit_point(&self, slit_id: usize) -> [f64; MAX_DIM] {
        self.point(self.slit_node(slit_id))
    }

    /// True for nodes on the outer box boundary (the slit itself is interior).
    pub fn is_boundary(&self, node: usize) -> bool {
        let idx = self.multi_index(node);
        (0..self.n).any(|a| idx[a] == 0 || idx[a] == 2 * self.m) || idx[self.n] == self.m
    }

    /// Visits the lattice neighbours of `node` with the edge weight used by
    /// the discrete Dirichlet form: 1 off the slit, 1/2 for edges lying in the
    /// slit (they are shared with the mirrored lower half).
    #[inline]
    pub fn for_each_neighbor(&self, node: usize, mut f: impl FnMut(usize, f64)) {
        let idx = self.multi_index(node);
        let on_slit = idx[self.n] == 0;
        for a in 0..self.dim() {
            let w = if a < self.n && on_slit { 0.5 } else { 1.0 };
            if idx[a] > 0 {
                f(node - self.strides[a], w);
            }
            if idx[a] + 1 < self.shape[a] {
                f(node + self.strides[a], w);
            }
        }
    }

    /// Grid with half the spacing on the same box; every coarse node is a fine node.
    pub fn refine(&self) -> Grid {
        Grid::new(self.n, self.half_extent, self.h / 2.0).expect("refinement of a valid grid")
    }

    /// Whether `x` (length `n + 1`) lies in the full symmetric box.
    pub fn contains(&self, x: &[f64]) -> bool {
        let e = self.half_extent * (1.0 + 1e-12);
        x.iter().take(self.dim()).all(|c| c.abs() <= e)
    }

    /// Upper-half nodes within distance `r` of `center` (a point of R^{n+1}).
    pub fn nodes_in_ball(&self, center: &[f64], r: f64) -> Vec<usize> {
        let dim = self.dim();
        let mut lo = [0usize; MAX_DIM];
        let mut hi = [0usize; MAX_DIM];
        for a in 0..dim {
            let c = if a < self.n {
                center[a] / self.h + self.m as f64
            } else {
                center[a].abs() / self.h
            };
            let span = r / self.h;
            lo[a] = ((c - span).ceil().max(0.0)) as usize;
            hi[a] = ((c + span).floor().min((self.shape[a] - 1) as f64)).max(0.0) as usize;
            if c + span < 0.0 {
                return Vec::new();
            }
        }
        let mut out = Vec::new();
        let r2 = r * r * (1.0 + 1e-12);
        for_each_multi(&lo[..dim], &hi[..dim], |idx| {
            let id = self.index(idx);
            let p = self.point(id);
            let d2: f64 = (0..dim)
                .map(|a| {
                    let c = if a < self.n {
                        center[a]
                    } else {
                        center[a].abs()
                    };
                    (p[a] - c).powi(2)
                })
                .sum();
            if d2 <= r2 {
                out.push(id);
            }
        });
        out
    }
}

/// Iterates the inclusive multi-index box `lo..=hi` in row-major order.
pub(crate) fn for_each_multi(lo: &[usize], hi: &[usize], mut f: impl FnMut(&[usize])) {
    let dim = lo.len();
    if (0..dim).any(|a| lo[a] > hi[a]) {
        return;
    }
    let mut idx = [0usize; MAX_DIM];
    idx[..dim].copy_from_slice(lo);
    loop {
        f(&idx[..dim]);
        let mut a = dim;
        loop {
            if a == 0 {
                return;
            }
            a -= 1;
            if idx[a] < hi[a] {
                idx[a] += 1;
                break;
            }
            idx[a] = lo[a];
        }
    }
}

/// A scalar function on R^{n+1}, evaluated at points of length `n + 1`.
pub trait Field: Sync {
    fn n(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Result<f64>;
}

/// Adapts a closure into a [`Field`].
pub struct FnField<F> {
    n: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnField<F> {
    pub fn new(n: usize, f: F) -> Self {
        FnField { n, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Field for FnField<F> {
    fn n(&self) -> usize {
        self.n
    }

    fn eval(&self, x: &[f64]) -> Result<f64> {
        Ok((self.f)(x))
    }
}

impl<T: Field + ?Sized> Field for &T {
    fn n(&self) -> usize {
        (**self).n()
    }

    fn eval(&self, x: &[f64]) -> Result<f64> {
        (**self).eval(x)
    }
}

/// Samples of a field on the closed upper half box.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some((node, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidSample { node, value });
        }
        Ok(ScalarField { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        ScalarField {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn value(&self, node: usize) -> f64 {
        self.values[node]
    }

    pub fn slit_value(&self, slit_id: usize) -> f64 {
        self.values[self.grid.slit_node(slit_id)]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(mut self, c: f64) -> Self {
        self.values.iter_mut().for_each(|v| *v *= c);
        self
    }

    /// Value at a lattice node given by its full multi-index, reading the
    /// lower half through the even reflection (normal index may be negative).
    pub fn at(&self, slit_idx: &[usize], normal: isize) -> f64 {
        let mut idx = [0usize; MAX_DIM];
        idx[..self.grid.n].copy_from_slice(slit_idx);
        idx[self.grid.n] = normal.unsigned_abs();
        self.values[self.grid.index(&idx[..self.grid.dim()])]
    }
}

impl Field for ScalarField {
    fn n(&self) -> usize {
        self.grid.n
    }

    /// Multilinear interpolation; the lower half is read through the even
    /// reflection, so `eval(x, -z) == eval(x, z)` exactly.
    fn eval(&self, x: &[f64]) -> Result<f64> {
        let g = &self.grid;
        let dim = g.dim();
        if x.len() < dim || !g.contains(x) {
            return Err(Error::OutOfDomain(x.to_vec()));
        }
        let mut base = [0usize; MAX_DIM];
        let mut frac = [0.0f64; MAX_DIM];
        for a in 0..dim {
            let s = if a < g.n {
                x[a] / g.h + g.m as f64
            } else {
                x[a].abs() / g.h
            };
            let top = g.shape[a] - 1;
            let i = (s.floor().max(0.0) as usize).min(top - 1);
            base[a] = i;
            frac[a] = (s - i as f64).clamp(0.0, 1.0);
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << dim) {
            let mut w = 1.0;
            let mut id = 0;
            for a in 0..dim {
                let bit = (corner >> a) & 1;
                w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
                id += (base[a] + bit) * g.strides[a];
            }
            if w != 0.0 {
                acc += w * self.values[id];
            }
        }
        Ok(acc)
    }
}

/// Samples `f` at every upper-half node.
///
/// Negative samples are clamped to zero when their magnitude is below a
/// machine-scale tolerance and rejected otherwise.
pub fn sample(f: &dyn Field, grid: &Grid) -> Result<ScalarField> {
    const CLAMP: f64 = 1e-12;
    let mut values = Vec::with_capacity(grid.len());
    for node in 0..grid.len() {
        let p = grid.point(node);
        let v = f.eval(&p[..grid.dim()])?;
        if !v.is_finite() || v < -CLAMP {
            return Err(Error::InvalidSample { node, value: v });
        }
        values.push(v.max(0.0));
    }
    Ok(ScalarField {
        grid: *grid,
        values,
    })
}

/// Boolean mask on slit nodes; `true` marks the positive phase.
#[derive(Debug, Clone, PartialEq)]
pub struct PositivitySet {
    grid: Grid,
    mask: Vec<bool>,
}

impl PositivitySet {
    pub fn new(grid: Grid, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != grid.slit_len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} slit values, got {}",
                grid.slit_len(),
                mask.len()
            )));
        }
        Ok(PositivitySet { grid, mask })
    }

    pub fn filled(grid: Grid, value: bool) -> Self {
        PositivitySet {
            grid,
            mask: vec![value; grid.slit_len()],
        }
    }

    /// Mask from a predicate on slit coordinates.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> bool) -> Self {
        let mask = (0..grid.slit_len())
            .map(|s| {
                let p = grid.slit_point(s);
                f(&p[..grid.n])
            })
            .collect();
        PositivitySet { grid, mask }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn get(&self, slit_id: usize) -> bool {
        self.mask[slit_id]
    }

    pub fn set(&mut self, slit_id: usize, value: bool) {
        self.mask[slit_id] = value;
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    /// Phase of the slit node nearest to the slit point `x` (length `n`).
    pub fn phase_at(&self, x: &[f64]) -> Option<bool> {
        let g = &self.grid;
        let mut idx = [0usize; MAX_DIM];
        for a in 0..g.n {
            let s = (x[a] / g.h + g.m as f64).round();
            if s < 0.0 || s > (2 * g.m) as f64 {
                return None;
            }
            idx[a] = s as usize;
        }
        let node = g.index(&idx[..g.dim()]);
        g.slit_id(node).map(|s| self.mask[s])
    }

    /// Slit neighbours (4-connected in n = 2) of a slit node.
    pub fn slit_neighbors(&self, slit_id: usize) -> impl Iterator<Item = usize> + '_ {
        let g = self.grid;
        let node = g.slit_node(slit_id);
        let idx = g.multi_index(node);
        (0..g.n).flat_map(move |a| {
            let lo = (idx[a] > 0).then(|| g.slit_id(node - g.strides[a]).unwrap());
            let hi = (idx[a] < 2 * g.m).then(|| g.slit_id(node + g.strides[a]).unwrap());
            lo.into_iter().chain(hi)
        })
    }

    /// Slit nodes adjacent to a node of the opposite phase.
    pub fn frontier(&self) -> Vec<usize> {
        (0..self.mask.len())
            .filter(|&s| self.slit_neighbors(s).any(|t| self.mask[t] != self.mask[s]))
            .collect()
    }

    /// Adjacent slit node pairs `(positive, zero)`; the free boundary passes
    /// through the faces between them.
    pub fn fb_faces(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for s in 0..self.mask.len() {
            if !self.mask[s] {
                continue;
            }
            for t in self.slit_neighbors(s) {
                if !self.mask[t] {
                    out.push((s, t));
                }
            }
        }
        out
    }

    /// Face midpoints of [`fb_faces`](Self::fb_faces) in slit coordinates.
    pub fn fb_points(&self) -> Vec<[f64; 2]> {
        let n = self.grid.n;
        self.fb_faces()
            .into_iter()
            .map(|(s, t)| {
                let a = self.grid.slit_point(s);
                let b = self.grid.slit_point(t);
                let mut p = [0.0; 2];
                for k in 0..n {
                    p[k] = 0.5 * (a[k] + b[k]);
                }
                p
            })
            .collect()
    }

    /// Distance from the slit point `x` to the nearest free-boundary face midpoint.
    pub fn distance_to_fb(&self, x: &[f64]) -> Option<f64> {
        let n = self.grid.n;
        self.fb_points()
            .iter()
            .map(|p| (0..n).map(|k| (p[k] - x[k]).powi(2)).sum::<f64>().sqrt())
            .min_by(f64::total_cmp)
    }

    pub fn has_both_phases(&self) -> bool {
        self.mask.iter().any(|&b| b) && self.mask.iter().any(|&b| !b)
    }
}

/// Mask of slit nodes whose value exceeds `threshold`.
pub fn positivity_of(field: &ScalarField, threshold: f64) -> PositivitySet {
    let g = *field.grid();
    let mask = (0..g.slit_len())
        .map(|s| field.slit_value(s) > threshold)
        .collect();
    PositivitySet { grid: g, mask }
}

fn header(kind: &str, grid: &Grid) -> String {
    format!(
        "thinphase-{kind} v1 n={} half_extent={} h={}",
        grid.n(),
        grid.half_extent(),
        grid.h()
    )
}

fn parse_header(line: &str, kind: &str) -> Result<Grid> {
    let mut parts = line.split_whitespace();
    let tag = format!("thinphase-{kind}");
    if parts.next() != Some(tag.as_str()) || parts.next() != Some("v1") {
        return Err(Error::Format(format!(
            "expected '{tag} v1' header, got '{line}'"
        )));
    }
    let mut n = None;
    let mut e = None;
    let mut h = None;
    for p in parts {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("bad header field '{p}'")))?;
        let bad = || Error::Format(format!("bad header value '{p}'"));
        match k {
            "n" => n = Some(v.parse::<usize>().map_err(|_| bad())?),
            "half_extent" => e = Some(v.parse::<f64>().map_err(|_| bad())?),
            "h" => h = Some(v.parse::<f64>().map_err(|_| bad())?),
            _ => return Err(Error::Format(format!("unknown header field '{k}'"))),
        }
    }
    match (n, e, h) {
        (Some(n), Some(e), Some(h)) => Grid::new(n, e, h),
        _ => Err(Error::Format(format!("incomplete header '{line}'"))),
    }
}

/// Writes a field checkpoint: header line, then one value per line.
pub fn write_field(mut w: impl Write, field: &ScalarField) -> Result<()> {
    writeln!(w, "{}", header("field", field.grid()))?;
    for v in field.values() {
        writeln!(w, "{v}")?;
    }
    Ok(())
}

pub fn read_field(r: impl BufRead) -> Result<ScalarField> {
    let mut lines = r.lines();
    let head = lines
        .next()
        .ok_or_else(|| Error::Format("empty field file".into()))??;
    let grid = parse_header(&head, "field")?;
    let mut values = Vec::with_capacity(grid.len());
    for line in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        values.push(
            t.parse::<f64>()
                .map_err(|_| Error::Format(format!("bad value '{t}'")))?,
        );
    }
    ScalarField::new(grid, values)
}

/// Writes a mask checkpoint: header line, then 0/1 per slit node.
pub fn write_mask(mut w: impl Write, mask: &PositivitySet) -> Result<()> {
    writeln!(w, "{}", header("mask", mask.grid()))?;
    for &b in mask.mask() {
        writeln!(w, "{}", u8::from(b))?;
    }
    Ok(())
}

pub fn read_mask(r: impl BufRead) -> Result<PositivitySet> {
    let mut lines = r.lines();
    let head = lines
        .next()
        .ok_or_else(|| Error::Format("empty mask file".into()))??;
    let grid = parse_header(&head, "mask")?;
    let mut mask = Vec::with_capacity(grid.slit_len());
    for line in lines {
        let line = line?;
        match line.trim() {
            "" => continue,
            "0" => mask.push(false),
            "1" => mask.push(true),
            t => return Err(Error::Format(format!("bad mask entry '{t}'"))),
        }
    }
    PositivitySet::new(grid, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closedform::eval_u0;

    fn u0_field(n: usize) -> FnField<impl Fn(&[f64]) -> f64> {
        FnField::new(n, move |x: &[f64]| eval_u0(x[n - 1], x[n]))
    }

    #[test]
    fn node_counts() {
        let g = Grid::new(1, 1.0, 0.25).unwrap();
        assert_eq!(g.shape(), &[9, 5]);
        let g = Grid::new(2, 1.0, 0.5).unwrap();
        assert_eq!(g.shape(), &[5, 5, 3]);
        assert_eq!(g.slit_len(), 25);
    }

    #[test]
    fn rejects_non_dividing_spacing() {
        let err = Grid::new(1, 1.0, 0.3).unwrap_err();
        assert!(err.to_string().contains("does not divide"));
        assert!(Grid::new(1, 1.0, 1.0).is_err(), "fewer than 4 cells");
        assert!(Grid::new(3, 1.0, 0.25).is_err());
    }

    #[test]
    fn slit_nodes_lie_on_the_slit() {
        let g = Grid::new(2, 1.0, 0.25).unwrap();
        for s in 0..g.slit_len() {
            let node = g.slit_node(s);
            assert_eq!(g.point(node)[2], 0.0);
            assert_eq!(g.slit_id(node), Some(s));
        }
    }

    #[test]
    fn sample_u0_has_unit_value_at_e_n() {
        let g = Grid::new(1, 2.0, 0.25).unwrap();
        let f = sample(&u0_field(1), &g).unwrap();
        let node = g.index(&[g.m() + 4, 0]);
        assert_eq!(g.point(node)[0], 1.0);
        assert!((f.value(node) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sample_rejects_negative_values() {
        let g = Grid::new(1, 1.0, 0.25).unwrap();
        assert!(sample(&FnField::new(1, |_: &[f64]| -1.0), &g).is_err());
        let z = sample(&FnField::new(1, |_: &[f64]| 0.0), &g).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
        let tiny = sample(&FnField::new(1, |_: &[f64]| -1e-15), &g).unwrap();
        assert!(tiny.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn positivity_of_u0_is_the_half_space() {
        for h in [0.25, 0.125, 0.0625] {
            let g = Grid::new(2, 1.0, h).unwrap();
            let f = sample(&u0_field(2), &g).unwrap();
            let p = positivity_of(&f, 0.0);
            let expected = PositivitySet::from_fn(g, |x| x[1] > 0.0);
            assert_eq!(p, expected);
            assert_eq!(positivity_of(&f, 10.0).count(), 0);
        }
        let g = Grid::new(1, 1.0, 0.25).unwrap();
        assert_eq!(positivity_of(&ScalarField::zeros(g), 0.0).count(), 0);
    }

    #[test]
    fn refinement_keeps_coarse_nodes() {
        let g = Grid::new(2, 1.0, 0.25).unwrap();
        let f = g.refine();
        for node in 0..g.len() {
            let idx = g.multi_index(node);
            let fine: Vec<usize> = (0..3).map(|a| 2 * idx[a]).collect();
            assert_eq!(g.point(node), f.point(f.index(&fine)));
        }
    }

    #[test]
    fn interpolation_reproduces_nodes_and_mirrors() {
        let g = Grid::new(2, 1.0, 0.125).unwrap();
        let f = sample(&u0_field(2), &g).unwrap();
        for node in (0..g.len()).step_by(7) {
            let p = g.point(node);
            assert_eq!(f.eval(&p).unwrap(), f.value(node));
            let q = [p[0], p[1], -p[2]];
            assert_eq!(f.eval(&q).unwrap(), f.value(node));
        }
        assert!(f.eval(&[1.5, 0.0, 0.0]).is_err());
    }

    #[test]
    fn ball_node_query() {
        let g = Grid::new(1, 1.0, 0.25).unwrap();
        let nodes = g.nodes_in_ball(&[0.0, 0.0], 0.25);
        // (0,0), (+-0.25,0), (0,0.25)
        assert_eq!(nodes.len(), 4);
    }

    #[test]
    fn checkpoint_round_trip() {
        let g = Grid::new(1, 1.0, 0.125).unwrap();
        let f = sample(&u0_field(1), &g).unwrap();
        let mut buf = Vec::new();
        write_field(&mut buf, &f).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("thinphase-field v1 n=1 half_extent=1 h=0.125\n"));
        assert_eq!(read_field(buf.as_slice()).unwrap(), f);

        let p = positivity_of(&f, 0.0);
        let mut buf = Vec::new();
        write_mask(&mut buf, &p).unwrap();
        assert!(String::from_utf8(buf.clone())
            .unwrap()
            .starts_with("thinphase-mask v1"));
        assert_eq!(read_mask(buf.as_slice()).unwrap(), p);
        assert!(read_mask(&b"thinphase-field v1 n=1 half_extent=1 h=0.125\n"[..]).is_err());
    }
}
