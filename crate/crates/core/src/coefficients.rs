//! Cell-wise constant, isotropic coefficient fields and the generators used by
//! the experiments.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Scalar conductivity per cell; the coefficient matrix is `value * I`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    cells: [usize; 3],
    dim: usize,
    values: Vec<f64>,
    alpha_min: f64,
    alpha_max: f64,
}

impl CoefficientField {
    pub fn from_values(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.num_cells() {
            return Err(Error::DimensionMismatch(format!(
                "coefficient has {} values, mesh has {} cells",
                values.len(),
                mesh.num_cells()
            )));
        }
        let mut alpha_min = f64::INFINITY;
        let mut alpha_max = 0.0f64;
        for (cell, &v) in values.iter().enumerate() {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::NonPositiveCoefficient { cell, value: v });
            }
            alpha_min = alpha_min.min(v);
            alpha_max = alpha_max.max(v);
        }
        Ok(Self {
            cells: mesh.cell_shape(),
            dim: mesh.dim(),
            values,
            alpha_min,
            alpha_max,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn value(&self, cell: usize) -> f64 {
        self.values[cell]
    }

    pub fn alpha_min(&self) -> f64 {
        self.alpha_min
    }

    pub fn alpha_max(&self) -> f64 {
        self.alpha_max
    }

    pub fn contrast(&self) -> f64 {
        self.alpha_max / self.alpha_min
    }

    /// `max / min` over a subset of cells; 1 for an empty subset.
    pub fn local_contrast(&self, cells: &[usize]) -> f64 {
        let (lo, hi) = cells.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &c| {
            (lo.min(self.values[c]), hi.max(self.values[c]))
        });
        if cells.is_empty() {
            1.0
        } else {
            hi / lo
        }
    }

    pub fn matches(&self, mesh: &Mesh) -> bool {
        self.dim == mesh.dim() && self.cells == mesh.cell_shape()
    }

    /// Multiplies every value by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return Err(Error::InvalidCoefficient(format!("scale factor {factor} must be positive")));
        }
        Ok(Self {
            values: self.values.iter().map(|v| v * factor).collect(),
            alpha_min: self.alpha_min * factor,
            alpha_max: self.alpha_max * factor,
            ..self.clone()
        })
    }

    /// Writes the text grid format: a header with cell counts, then one row of
    /// values per line (x fastest), 17 significant digits.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::new();
        let header: Vec<String> = self.cells[..self.dim].iter().map(|c| c.to_string()).collect();
        out.push_str(&header.join(" "));
        out.push('\n');
        for row in self.values.chunks(self.cells[0]) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

pub fn constant_field(mesh: &Mesh, c: f64) -> Result<CoefficientField> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidCoefficient(format!("constant value {c} must be positive")));
    }
    CoefficientField::from_values(mesh, vec![c; mesh.num_cells()])
}

/// Random block field on a background of 1.
///
/// The mesh is tiled by cubes of `block_size` cells; each block is raised with
/// probability `fill_fraction` to `10^(u log10 high_value)`, `u` uniform, and one
/// block is always set to exactly `high_value` so the contrast is `high_value`.
pub fn skyscraper_field(mesh: &Mesh, seed: u64, block_size: usize, high_value: f64) -> Result<CoefficientField> {
    skyscraper_field_with_fraction(mesh, seed, block_size, high_value, 0.25)
}

pub fn skyscraper_field_with_fraction(
    mesh: &Mesh,
    seed: u64,
    block_size: usize,
    high_value: f64,
    fill_fraction: f64,
) -> Result<CoefficientField> {
    if block_size == 0 || mesh.cells_per_axis().iter().any(|n| n % block_size != 0) {
        return Err(Error::InvalidCoefficient(format!(
            "block size {block_size} does not divide the mesh {:?}",
            mesh.cells_per_axis()
        )));
    }
    if !(high_value >= 1.0) || !high_value.is_finite() {
        return Err(Error::InvalidCoefficient(format!("high value {high_value} must be >= 1")));
    }
    let dim = mesh.dim();
    let mut blocks = [1usize; 3];
    for k in 0..dim {
        blocks[k] = mesh.cells_per_axis()[k] / block_size;
    }
    let nblocks: usize = blocks.iter().product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let log_high = high_value.log10();
    let mut block_values: Vec<f64> = (0..nblocks)
        .map(|_| {
            let raised = rng.random::<f64>() < fill_fraction;
            let u: f64 = rng.random();
            if raised {
                10f64.powf(u * log_high)
            } else {
                1.0
            }
        })
        .collect();
    let peak = rng.random_range(0..nblocks);
    block_values[peak] = high_value;

    let mut values = vec![1.0; mesh.num_cells()];
    for (cell, v) in values.iter_mut().enumerate() {
        let c = mesh.cell_coords(cell);
        let b = [c[0] / block_size, c[1] / block_size, if dim == 3 { c[2] / block_size } else { 0 }];
        *v = block_values[b[0] + blocks[0] * (b[1] + blocks[1] * b[2])];
    }
    CoefficientField::from_values(mesh, values)
}

/// Layout of the channelized coefficient on a 2D brick decomposition.
///
/// Every designated subdomain column carries `channels_per_subdomain` vertical
/// channels of `channel_width` cells running over the domain height except for
/// `end_margin` cells at the bottom and top, so the channels float in the
/// background instead of touching the Dirichlet boundary. In the designated
/// subdomain rows of those columns the channels are joined by a horizontal
/// connector bar lying `connector_inset` cells below the top edge of the brick,
/// deep enough inside the brick to stay clear of the oversampled ring. The
/// whole-subdomain eigenproblem therefore sees one connected structure while
/// the ring sees every channel crossing as a separate inclusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelGeometry {
    pub subdomains_per_axis: [usize; 2],
    pub columns: Vec<usize>,
    pub connector_rows: Vec<usize>,
    pub channels_per_subdomain: usize,
    pub channel_width: usize,
    pub connector_inset: usize,
    pub connector_width: usize,
    pub end_margin: usize,
}

impl ChannelGeometry {
    /// Channels in subdomain column 1 with a connector in every subdomain row.
    pub fn default_for(subdomains_per_axis: [usize; 2]) -> Self {
        Self {
            subdomains_per_axis,
            columns: vec![1.min(subdomains_per_axis[0] - 1)],
            connector_rows: (0..subdomains_per_axis[1]).collect(),
            channels_per_subdomain: 3,
            channel_width: 2,
            connector_inset: 12,
            connector_width: 2,
            end_margin: 8,
        }
    }

    /// Cell ranges `[start, end)` of the channels along x in brick column `col`.
    pub fn channel_ranges(&self, brick: usize, col: usize) -> Vec<(usize, usize)> {
        let k = self.channels_per_subdomain;
        (0..k)
            .map(|c| {
                let center = col * brick + brick * (c + 1) / (k + 1);
                let start = center - self.channel_width / 2;
                (start, start + self.channel_width)
            })
            .collect()
    }
}

/// Channelized field: `10^exponent` in the channels and connectors, 1 elsewhere.
pub fn channel_field(mesh: &Mesh, exponent: i32, geometry: &ChannelGeometry) -> Result<CoefficientField> {
    if mesh.dim() != 2 {
        return Err(Error::InvalidCoefficient("channel field requires a 2D mesh".into()));
    }
    let n = mesh.cells_per_axis();
    let p = geometry.subdomains_per_axis;
    if p[0] == 0 || p[1] == 0 || n[0] % p[0] != 0 || n[1] % p[1] != 0 {
        return Err(Error::InvalidCoefficient(format!(
            "subdomain grid {p:?} does not divide the mesh {n:?}"
        )));
    }
    let (bx, by) = (n[0] / p[0], n[1] / p[1]);
    let k = geometry.channels_per_subdomain;
    if k == 0 || geometry.channel_width == 0 || (k + 1) * geometry.channel_width > bx {
        return Err(Error::InvalidCoefficient(format!(
            "{k} channels of width {} do not fit in a brick of {bx} cells",
            geometry.channel_width
        )));
    }
    if geometry.connector_inset < geometry.connector_width || geometry.connector_inset > by {
        return Err(Error::InvalidCoefficient(format!(
            "connector inset {} outside a brick of {by} cells",
            geometry.connector_inset
        )));
    }
    if 2 * geometry.end_margin >= n[1] {
        return Err(Error::InvalidCoefficient(format!(
            "channel margin {} leaves no channel in {} rows",
            geometry.end_margin, n[1]
        )));
    }
    if let Some(&c) = geometry.columns.iter().find(|&&c| c >= p[0]) {
        return Err(Error::InvalidCoefficient(format!("channel column {c} exceeds the domain")));
    }
    if let Some(&r) = geometry.connector_rows.iter().find(|&&r| r >= p[1]) {
        return Err(Error::InvalidCoefficient(format!("connector row {r} exceeds the domain")));
    }
    let high = 10f64.powi(exponent);
    let mut values = vec![1.0; mesh.num_cells()];
    for &col in &geometry.columns {
        let ranges = geometry.channel_ranges(bx, col);
        for &(x0, x1) in &ranges {
            for y in geometry.end_margin..n[1] - geometry.end_margin {
                for x in x0..x1 {
                    values[mesh.cell_index([x, y, 0])] = high;
                }
            }
        }
        let (xa, xb) = (ranges[0].0, ranges[k - 1].1);
        for &row in &geometry.connector_rows {
            let y0 = (row + 1) * by - geometry.connector_inset;
            for y in y0..y0 + geometry.connector_width {
                for x in xa..xb {
                    values[mesh.cell_index([x, y, 0])] = high;
                }
            }
        }
    }
    CoefficientField::from_values(mesh, values)
}

/// Reads the text grid format written by [`CoefficientField::save`]. Values may be
/// separated by whitespace or commas.
pub fn load_field(mesh: &Mesh, path: impl AsRef<Path>) -> Result<CoefficientField> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let parse_err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| parse_err("empty file".into()))?;
    let shape: Vec<usize> = header
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<usize>().map_err(|e| parse_err(format!("bad header token {t:?}: {e}"))))
        .collect::<Result<_>>()?;
    if shape != mesh.cells_per_axis() {
        return Err(Error::DimensionMismatch(format!(
            "field file has shape {shape:?}, mesh has {:?}",
            mesh.cells_per_axis()
        )));
    }
    let mut values = Vec::with_capacity(mesh.num_cells());
    for line in lines {
        for tok in line.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
            let v: f64 = tok.parse().map_err(|e| parse_err(format!("bad value {tok:?}: {e}")))?;
            values.push(v);
        }
    }
    if values.len() != mesh.num_cells() {
        return Err(Error::DimensionMismatch(format!(
            "field file has {} values, mesh has {} cells",
            values.len(),
            mesh.num_cells()
        )));
    }
    CoefficientField::from_values(mesh, values)
}

/// Compact ASCII rendering of a 2D field (`#` high, `.` background), handy in examples.
pub fn ascii_map(mesh: &Mesh, field: &CoefficientField, stride: usize) -> String {
    let n = mesh.cells_per_axis();
    let mut s = String::new();
    if mesh.dim() != 2 {
        return s;
    }
    let stride = stride.max(1);
    for y in (0..n[1]).rev().step_by(stride) {
        for x in (0..n[0]).step_by(stride) {
            let v = field.value(mesh.cell_index([x, y, 0]));
            s.push(if v > field.alpha_min() { '#' } else { '.' });
        }
        let _ = writeln!(s);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mesh(n: usize) -> Mesh {
        Mesh::unit(2, n).unwrap()
    }

    #[test]
    fn constant_fields() {
        let f = constant_field(&mesh(4), 1.0).unwrap();
        assert_eq!(f.contrast(), 1.0);
        assert!(constant_field(&mesh(4), 0.0).is_err());
        assert!(constant_field(&mesh(4), -2.0).is_err());
    }

    #[test]
    fn skyscraper_contrast_and_determinism() {
        let m = mesh(64);
        let f = skyscraper_field(&m, 7, 8, 2e6).unwrap();
        assert_eq!(f.contrast(), 2e6);
        assert_eq!(f.alpha_min(), 1.0);
        assert_eq!(f, skyscraper_field(&m, 7, 8, 2e6).unwrap());
        assert_ne!(f, skyscraper_field(&m, 8, 8, 2e6).unwrap());
        let flat = skyscraper_field(&m, 7, 8, 1.0).unwrap();
        assert!(flat.values().iter().all(|&v| v == 1.0));
        assert!(skyscraper_field(&m, 7, 5, 10.0).is_err());
    }

    #[test]
    fn channel_contrast() {
        let m = mesh(256);
        let g = ChannelGeometry::default_for([4, 4]);
        for (j, expected) in [(0, 1.0), (3, 1e3), (6, 1e6)] {
            let f = channel_field(&m, j, &g).unwrap();
            assert_eq!(f.contrast(), expected);
        }
        assert!(channel_field(&m, 0, &g).unwrap().values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn channel_rejects_out_of_domain() {
        let m = mesh(64);
        let mut g = ChannelGeometry::default_for([4, 4]);
        g.columns = vec![4];
        assert!(channel_field(&m, 3, &g).is_err());
        let mut g = ChannelGeometry::default_for([4, 4]);
        g.channel_width = 5;
        assert!(channel_field(&m, 3, &g).is_err());
    }

    #[test]
    fn file_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let m = Mesh::new(2, &[3, 2], &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let f = skyscraper_field(&m, 1, 1, 1e3).unwrap();
        let p = dir.path().join("field.txt");
        f.save(&p).unwrap();
        assert_eq!(load_field(&m, &p).unwrap(), f);

        std::fs::write(&p, "3 2\n1.0 1.0 1.0\n1.0 1.0 1.0\n").unwrap();
        assert_eq!(load_field(&m, &p).unwrap().contrast(), 1.0);

        std::fs::write(&p, "3 2\n1.0, 1.0, 1.0\n1.0, 0.0, 1.0\n").unwrap();
        match load_field(&m, &p) {
            Err(Error::NonPositiveCoefficient { cell, .. }) => assert_eq!(cell, 4),
            other => panic!("unexpected {other:?}"),
        }
        std::fs::write(&p, "2 2\n1 1\n1 1\n").unwrap();
        assert!(matches!(load_field(&m, &p), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn local_contrast_over_subset() {
        let m = mesh(2);
        let f = CoefficientField::from_values(&m, vec![1.0, 4.0, 2.0, 8.0]).unwrap();
        assert_eq!(f.local_contrast(&[1, 3]), 2.0);
        assert_eq!(f.local_contrast(&[]), 1.0);
        assert_eq!(f.contrast(), 8.0);
    }
}
