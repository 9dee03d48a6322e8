//! Cycle-level functional model of weight-stationary systolic arrays.
//!
//! Indexing is 0-based everywhere. A weight `w[r][c]` sits in the PE at row `r`,
//! column `c`; input vector `v` supplies element `x[v][r]` to row `r`. Inputs
//! enter column 0 on a diagonal wave-front and move one column right per cycle,
//! partial sums move one row down per cycle, so PE(r, c) performs its MAC for
//! vector `v` at cycle `r + c + v`.
//!
//! Both registers of a PE update every cycle. Outside its active cycles a PE sees
//! zero bubbles, so Reg A and Reg C read zero there.

use crate::error::{Error, Result};

/// Default width of the partial-sum register (Reg C) in bits: one 17-bit
/// product plus a carry bit.
pub const DEFAULT_PSUM_WIDTH: u32 = 18;

/// Narrowest Reg C that holds one signed 8x8-bit product.
pub const MIN_PSUM_WIDTH: u32 = 17;

/// Geometry of the PE array and the transfer batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArrayConfig {
    rows: usize,
    cols: usize,
    batch: usize,
    psum_width: u32,
}

impl ArrayConfig {
    pub fn new(rows: usize, cols: usize, batch: usize) -> Result<Self> {
        Self::with_psum_width(rows, cols, batch, DEFAULT_PSUM_WIDTH)
    }

    pub fn with_psum_width(
        rows: usize,
        cols: usize,
        batch: usize,
        psum_width: u32,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 || batch == 0 {
            return Err(Error::Config(format!(
                "rows, cols and batch must be positive (got {rows}x{cols}, batch {batch})"
            )));
        }
        if !(MIN_PSUM_WIDTH..=64).contains(&psum_width) {
            return Err(Error::Config(format!(
                "psum width must lie in {MIN_PSUM_WIDTH}..=64 bits, got {psum_width}"
            )));
        }
        Ok(Self {
            rows,
            cols,
            batch,
            psum_width,
        })
    }

    /// The 3x1 dot-product array with a 3-deep input FIFO.
    pub fn dot_product() -> Self {
        Self::new(3, 1, 3).expect("static config")
    }

    /// The 3x3 matrix-vector array with a 3-deep input FIFO.
    pub fn matrix_vector() -> Self {
        Self::new(3, 3, 3).expect("static config")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn psum_width(&self) -> u32 {
        self.psum_width
    }

    pub fn num_pes(&self) -> usize {
        self.rows * self.cols
    }

    /// Number of compute cycles in one batch, `R + C + V - 2`.
    pub fn total_cycles(&self) -> usize {
        self.rows + self.cols + self.batch - 2
    }

    /// Bit mask covering the stored width of Reg C.
    pub fn psum_mask(&self) -> u64 {
        psum_mask(self.psum_width)
    }

    /// Cycle at which PE(r, c) latches vector `v`'s partial sum into Reg C.
    pub fn mac_cycle(&self, r: usize, c: usize, v: usize) -> Result<usize> {
        check_index("row", r, self.rows)?;
        check_index("column", c, self.cols)?;
        check_index("vector", v, self.batch)?;
        Ok(r + c + v)
    }

    /// Vector processed by PE(r, c) at cycle `t`, if the PE is active then.
    pub fn vector_at(&self, r: usize, c: usize, t: usize) -> Option<usize> {
        t.checked_sub(r + c).filter(|&v| v < self.batch)
    }
}

pub(crate) fn psum_mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

/// Interprets the low `width` bits of `value` as a two's-complement number.
pub fn wrap_to_width(value: i64, width: u32) -> i64 {
    if width >= 64 {
        value
    } else {
        let shift = 64 - width;
        (value << shift) >> shift
    }
}

fn check_index(what: &'static str, index: usize, limit: usize) -> Result<()> {
    if index < limit {
        Ok(())
    } else {
        Err(Error::Index { what, index, limit })
    }
}

/// Free-function form of [`ArrayConfig::mac_cycle`].
pub fn mac_cycle(cfg: &ArrayConfig, r: usize, c: usize, v: usize) -> Result<usize> {
    cfg.mac_cycle(r, c, v)
}

/// Signed 8-bit weights, `w[r][c]` row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WeightMatrix {
    rows: usize,
    cols: usize,
    data: Vec<i8>,
}

impl WeightMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<i8>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::Shape("weight matrix must be non-empty".into()));
        }
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::Shape(
                "weight matrix rows have unequal length".into(),
            ));
        }
        Ok(Self {
            rows: n_rows,
            cols: n_cols,
            data: rows.concat(),
        })
    }

    /// Builds an `R x 1` matrix from a weight vector.
    pub fn from_column(column: &[i8]) -> Result<Self> {
        Self::from_rows(&column.iter().map(|&w| vec![w]).collect::<Vec<_>>())
    }

    /// Builds a matrix whose column `c` is `columns[c]`.
    pub fn from_columns(columns: &[Vec<i8>]) -> Result<Self> {
        let n_cols = columns.len();
        let n_rows = columns.first().map_or(0, Vec::len);
        if n_cols == 0 || n_rows == 0 || columns.iter().any(|c| c.len() != n_rows) {
            return Err(Error::Shape(
                "columns must be non-empty and of equal length".into(),
            ));
        }
        let mut m = Self::zeros(n_rows, n_cols);
        for (c, col) in columns.iter().enumerate() {
            for (r, &w) in col.iter().enumerate() {
                m.data[r * n_cols + c] = w;
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> i8 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, w: i8) {
        self.data[r * self.cols + c] = w;
    }

    pub fn column(&self, c: usize) -> Vec<i8> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn set_column(&mut self, c: usize, values: &[i8]) {
        for (r, &w) in values.iter().enumerate() {
            self.set(r, c, w);
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<i8>> {
        self.data.chunks(self.cols).map(<[i8]>::to_vec).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&w| w == 0)
    }

    pub(crate) fn check_shape(&self, cfg: &ArrayConfig) -> Result<()> {
        if self.rows != cfg.rows || self.cols != cfg.cols {
            return Err(Error::Shape(format!(
                "weights are {}x{}, array is {}x{}",
                self.rows, self.cols, cfg.rows, cfg.cols
            )));
        }
        Ok(())
    }
}

/// One host transfer: `V` input vectors of length `R`, `x[v][r]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct InputBatch {
    batch: usize,
    rows: usize,
    data: Vec<i8>,
}

impl InputBatch {
    pub fn new(batch: usize, rows: usize, data: Vec<i8>) -> Result<Self> {
        if batch == 0 || rows == 0 || data.len() != batch * rows {
            return Err(Error::Shape(format!(
                "input batch of {batch}x{rows} needs {} values, got {}",
                batch * rows,
                data.len()
            )));
        }
        Ok(Self { batch, rows, data })
    }

    pub fn from_vectors(vectors: &[Vec<i8>]) -> Result<Self> {
        let rows = vectors.first().map_or(0, Vec::len);
        if vectors.iter().any(|v| v.len() != rows) {
            return Err(Error::Shape("input vectors have unequal length".into()));
        }
        Self::new(vectors.len(), rows, vectors.concat())
    }

    pub fn zeros(batch: usize, rows: usize) -> Self {
        Self {
            batch,
            rows,
            data: vec![0; batch * rows],
        }
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn get(&self, v: usize, r: usize) -> i8 {
        self.data[v * self.rows + r]
    }

    pub fn vector(&self, v: usize) -> &[i8] {
        &self.data[v * self.rows..(v + 1) * self.rows]
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.data
    }

    pub(crate) fn check_shape(&self, cfg: &ArrayConfig) -> Result<()> {
        if self.rows != cfg.rows || self.batch != cfg.batch {
            return Err(Error::Shape(format!(
                "input batch is {}x{}, array expects {}x{}",
                self.batch, self.rows, cfg.batch, cfg.rows
            )));
        }
        Ok(())
    }
}

/// Register contents of every PE at the end of every compute cycle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegisterTimeline {
    cfg: ArrayConfig,
    reg_a: Vec<i8>,
    reg_c: Vec<i64>,
}

impl RegisterTimeline {
    pub fn config(&self) -> &ArrayConfig {
        &self.cfg
    }

    pub fn cycles(&self) -> usize {
        self.cfg.total_cycles()
    }

    #[inline]
    fn slot(&self, r: usize, c: usize, t: usize) -> usize {
        (r * self.cfg.cols + c) * self.cfg.total_cycles() + t
    }

    /// Input register of PE(r, c) at the end of cycle `t`.
    pub fn reg_a(&self, r: usize, c: usize, t: usize) -> i8 {
        self.reg_a[self.slot(r, c, t)]
    }

    /// Reg C of PE(r, c) at the end of cycle `t`, sign-extended from the psum width.
    pub fn reg_c(&self, r: usize, c: usize, t: usize) -> i64 {
        self.reg_c[self.slot(r, c, t)]
    }

    /// Whether PE(r, c) performs a MAC at cycle `t`.
    pub fn active(&self, r: usize, c: usize, t: usize) -> bool {
        self.cfg.vector_at(r, c, t).is_some()
    }

    /// Reg A value before cycle `t`; the array idles at zero before cycle 0.
    pub fn reg_a_before(&self, r: usize, c: usize, t: usize) -> i8 {
        if t == 0 {
            0
        } else {
            self.reg_a(r, c, t - 1)
        }
    }

    pub fn reg_c_before(&self, r: usize, c: usize, t: usize) -> i64 {
        if t == 0 {
            0
        } else {
            self.reg_c(r, c, t - 1)
        }
    }
}

/// Runs one batch through the array and records every register.
pub fn simulate_batch(
    cfg: &ArrayConfig,
    w: &WeightMatrix,
    x: &InputBatch,
) -> Result<RegisterTimeline> {
    w.check_shape(cfg)?;
    x.check_shape(cfg)?;
    let cycles = cfg.total_cycles();
    let width = cfg.psum_width;
    let mut tl = RegisterTimeline {
        cfg: *cfg,
        reg_a: vec![0; cfg.num_pes() * cycles],
        reg_c: vec![0; cfg.num_pes() * cycles],
    };
    for c in 0..cfg.cols {
        for v in 0..cfg.batch {
            let mut psum = 0i64;
            for r in 0..cfg.rows {
                let input = x.get(v, r);
                psum = wrap_to_width(psum + i64::from(input) * i64::from(w.get(r, c)), width);
                let slot = tl.slot(r, c, r + c + v);
                tl.reg_a[slot] = input;
                tl.reg_c[slot] = psum;
            }
        }
    }
    Ok(tl)
}

/// Reference matrix-vector product, `result[v][c] = sum_r x[v][r] * w[r][c]`,
/// reduced to `psum_width` bits.
pub fn mvm_oracle(w: &WeightMatrix, x: &InputBatch, psum_width: u32) -> Result<Vec<Vec<i64>>> {
    if w.rows() != x.rows() {
        return Err(Error::Shape(format!(
            "weights have {} rows, inputs have {} elements",
            w.rows(),
            x.rows()
        )));
    }
    Ok((0..x.batch())
        .map(|v| {
            (0..w.cols())
                .map(|c| {
                    let full: i64 = (0..w.rows())
                        .map(|r| i64::from(x.get(v, r)) * i64::from(w.get(r, c)))
                        .sum();
                    wrap_to_width(full, psum_width)
                })
                .collect()
        })
        .collect())
}

/// Output feature-map size of a convolution lowered onto the array.
pub fn conv_output_dims(
    w_in: usize,
    h_in: usize,
    w_f: usize,
    h_f: usize,
    stride: usize,
    pad: usize,
) -> Result<(usize, usize)> {
    if w_in == 0 || h_in == 0 || w_f == 0 || h_f == 0 || stride == 0 {
        return Err(Error::Geometry(
            "input, filter and stride dimensions must be positive".into(),
        ));
    }
    let axis = |name: &str, input: usize, filter: usize| -> Result<usize> {
        let span = (input + 2 * pad).checked_sub(filter).ok_or_else(|| {
            Error::Geometry(format!(
                "{name}: filter {filter} exceeds padded input {}",
                input + 2 * pad
            ))
        })?;
        if span % stride != 0 {
            return Err(Error::Geometry(format!(
                "{name}: ({input} - {filter} + 2*{pad}) = {span} is not divisible by stride {stride}"
            )));
        }
        Ok(span / stride + 1)
    };
    Ok((axis("width", w_in, w_f)?, axis("height", h_in, h_f)?))
}
