//! Rotated surface-code geometry under bit-flip noise.
//!
//! Data qubits sit on the vertices of a `d x d` grid. Plaquettes on the
//! interior `(d-1) x (d-1)` cells are checkerboard-coloured Z/X checks of
//! weight four; weight-two half-plaquettes close the boundary (Z on the top
//! and bottom edges, X on the left and right edges). With that convention the
//! top row of data qubits is a representative logical X and the left column a
//! representative logical Z.
//!
//! Qubit and error sets are stored as `u128` bit masks (`d <= 9` gives at
//! most 81 qubits), syndromes as `u64` masks (at most 40 checks per type).

use std::fmt::{self, Write as _};

use crate::error::{Error, Result};

pub const MIN_DISTANCE: usize = 3;
pub const MAX_DISTANCE: usize = 9;

/// Set of data qubits carrying a Pauli-X.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ErrorConfig {
    len: usize,
    bits: u128,
}

impl ErrorConfig {
    pub fn empty(len: usize) -> Self {
        assert!(len <= 128, "at most 128 qubits are supported");
        Self { len, bits: 0 }
    }

    pub fn from_bits(len: usize, bits: u128) -> Self {
        let mut e = Self::empty(len);
        e.bits = bits & Self::full_mask(len);
        e
    }

    pub fn from_qubits(len: usize, qubits: impl IntoIterator<Item = usize>) -> Self {
        let mut e = Self::empty(len);
        for q in qubits {
            e.flip(q);
        }
        e
    }

    fn full_mask(len: usize) -> u128 {
        if len == 128 {
            u128::MAX
        } else {
            (1u128 << len) - 1
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn bits(&self) -> u128 {
        self.bits
    }

    pub fn weight(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn contains(&self, q: usize) -> bool {
        q < self.len && self.bits >> q & 1 == 1
    }

    pub fn flip(&mut self, q: usize) {
        assert!(q < self.len, "qubit {q} out of range {}", self.len);
        self.bits ^= 1 << q;
    }

    pub fn qubits(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(move |&q| self.contains(q))
    }

    /// Composition of two X errors (they commute and square to identity).
    pub fn compose(&self, other: &ErrorConfig) -> Result<ErrorConfig> {
        if self.len != other.len {
            return Err(Error::LengthMismatch {
                expected: self.len,
                actual: other.len,
            });
        }
        Ok(ErrorConfig {
            len: self.len,
            bits: self.bits ^ other.bits,
        })
    }
}

/// Outcomes of the Z checks; bit `j` set means check `j` reads -1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Syndrome {
    len: usize,
    bits: u64,
}

impl Syndrome {
    pub fn zeros(len: usize) -> Self {
        assert!(len <= 64, "at most 64 checks are supported");
        Self { len, bits: 0 }
    }

    pub fn from_bits(len: usize, bits: u64) -> Self {
        let mask = if len == 64 { u64::MAX } else { (1u64 << len) - 1 };
        Self {
            len,
            bits: bits & mask,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn is_zero(&self) -> bool {
        self.bits == 0
    }

    pub fn weight(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn get(&self, j: usize) -> bool {
        j < self.len && self.bits >> j & 1 == 1
    }

    pub fn flip(&mut self, j: usize) {
        assert!(j < self.len, "check {j} out of range {}", self.len);
        self.bits ^= 1 << j;
    }

    pub fn defects(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(move |&j| self.get(j))
    }

    pub fn xor(&self, other: &Syndrome) -> Syndrome {
        debug_assert_eq!(self.len, other.len);
        Syndrome {
            len: self.len,
            bits: self.bits ^ other.bits,
        }
    }
}

/// Square 0/1 grid of side `2d + 1`, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryGrid {
    side: usize,
    cells: Vec<u8>,
}

impl BinaryGrid {
    pub fn zeros(side: usize) -> Self {
        Self {
            side,
            cells: vec![0; side * side],
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.side + col] != 0
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.cells[row * self.side + col] = value as u8;
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn weight(&self) -> usize {
        self.cells.iter().filter(|&&c| c != 0).count()
    }
}

/// What to place on the encoding grid.
#[derive(Clone, Copy, Debug)]
pub enum LatticeInput<'a> {
    Syndrome(&'a Syndrome),
    Qubits(&'a ErrorConfig),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodeLayout {
    d: usize,
    data_qubits: Vec<(usize, usize)>,
    z_checks: Vec<Vec<usize>>,
    x_checks: Vec<Vec<usize>>,
    z_check_coords: Vec<(usize, usize)>,
    x_check_coords: Vec<(usize, usize)>,
    qubit_coords: Vec<(usize, usize)>,
    logical_x: Vec<usize>,
    logical_z: Vec<usize>,
    /// Per qubit: mask of Z checks it participates in.
    qubit_z_checks: Vec<u64>,
    logical_z_mask: u128,
}

impl CodeLayout {
    pub fn new(d: usize) -> Result<Self> {
        build_layout(d)
    }

    pub fn distance(&self) -> usize {
        self.d
    }

    pub fn num_qubits(&self) -> usize {
        self.d * self.d
    }

    pub fn num_z_checks(&self) -> usize {
        self.z_checks.len()
    }

    pub fn grid_side(&self) -> usize {
        2 * self.d + 1
    }

    pub fn data_qubits(&self) -> &[(usize, usize)] {
        &self.data_qubits
    }

    pub fn qubit_index(&self, row: usize, col: usize) -> usize {
        row * self.d + col
    }

    pub fn z_checks(&self) -> &[Vec<usize>] {
        &self.z_checks
    }

    pub fn x_checks(&self) -> &[Vec<usize>] {
        &self.x_checks
    }

    pub fn z_check_coords(&self) -> &[(usize, usize)] {
        &self.z_check_coords
    }

    pub fn x_check_coords(&self) -> &[(usize, usize)] {
        &self.x_check_coords
    }

    pub fn qubit_coords(&self) -> &[(usize, usize)] {
        &self.qubit_coords
    }

    pub fn logical_x_support(&self) -> &[usize] {
        &self.logical_x
    }

    /// The dual chain used for the class test.
    pub fn logical_z_support(&self) -> &[usize] {
        &self.logical_z
    }

    pub fn logical_x(&self) -> ErrorConfig {
        ErrorConfig::from_qubits(self.num_qubits(), self.logical_x.iter().copied())
    }

    /// Z checks touching qubit `q`, as a mask over check indices.
    pub fn z_checks_of_qubit(&self, q: usize) -> u64 {
        self.qubit_z_checks[q]
    }

    pub fn empty_errors(&self) -> ErrorConfig {
        ErrorConfig::empty(self.num_qubits())
    }

    pub fn empty_syndrome(&self) -> Syndrome {
        Syndrome::zeros(self.num_z_checks())
    }

    fn check_errors(&self, errors: &ErrorConfig) -> Result<()> {
        if errors.len() != self.num_qubits() {
            return Err(Error::LengthMismatch {
                expected: self.num_qubits(),
                actual: errors.len(),
            });
        }
        Ok(())
    }

    /// Z-check syndrome of an X error configuration.
    pub fn z_syndrome(&self, errors: &ErrorConfig) -> Result<Syndrome> {
        self.check_errors(errors)?;
        Ok(self.z_syndrome_unchecked(errors))
    }

    pub(crate) fn z_syndrome_unchecked(&self, errors: &ErrorConfig) -> Syndrome {
        let mut bits = 0u64;
        let mut rest = errors.bits();
        while rest != 0 {
            let q = rest.trailing_zeros() as usize;
            bits ^= self.qubit_z_checks[q];
            rest &= rest - 1;
        }
        Syndrome::from_bits(self.num_z_checks(), bits)
    }

    /// Whether a zero-syndrome residual is a nontrivial logical X.
    pub fn is_logical_x(&self, residual: &ErrorConfig) -> Result<bool> {
        if !self.z_syndrome(residual)?.is_zero() {
            return Err(Error::NotACycle);
        }
        Ok(self.anticommutes_with_logical_z(residual))
    }

    pub(crate) fn anticommutes_with_logical_z(&self, residual: &ErrorConfig) -> bool {
        (residual.bits() & self.logical_z_mask).count_ones() % 2 == 1
    }

    pub fn encode_lattice(&self, input: LatticeInput<'_>) -> Result<BinaryGrid> {
        let mut grid = BinaryGrid::zeros(self.grid_side());
        match input {
            LatticeInput::Syndrome(s) => {
                if s.len() != self.num_z_checks() {
                    return Err(Error::LengthMismatch {
                        expected: self.num_z_checks(),
                        actual: s.len(),
                    });
                }
                for j in s.defects() {
                    let (r, c) = self.z_check_coords[j];
                    grid.set(r, c, true);
                }
            }
            LatticeInput::Qubits(e) => {
                self.check_errors(e)?;
                for q in e.qubits() {
                    let (r, c) = self.qubit_coords[q];
                    grid.set(r, c, true);
                }
            }
        }
        Ok(grid)
    }

    /// One line per check: index, type, qubits and grid cell.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# rotated surface code d={}", self.d);
        for (kind, checks, coords) in [
            ("Z", &self.z_checks, &self.z_check_coords),
            ("X", &self.x_checks, &self.x_check_coords),
        ] {
            for (j, (support, cell)) in checks.iter().zip(coords.iter()).enumerate() {
                let qubits: Vec<String> = support.iter().map(|q| q.to_string()).collect();
                let _ = writeln!(
                    out,
                    "{kind}{j} qubits=[{}] cell=({},{})",
                    qubits.join(","),
                    cell.0,
                    cell.1
                );
            }
        }
        out
    }
}

impl fmt::Display for CodeLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.dump())
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum CheckKind {
    Z,
    X,
}

/// Plaquette cell `(i, j)` with `i, j` in `-1..d` (cell `(i, j)` sits between
/// qubit rows `i, i+1` and columns `j, j+1`).
fn cell_kind(i: isize, j: isize) -> CheckKind {
    if (i + j).rem_euclid(2) == 0 {
        CheckKind::Z
    } else {
        CheckKind::X
    }
}

pub fn build_layout(d: usize) -> Result<CodeLayout> {
    if d.is_multiple_of(2) || !(MIN_DISTANCE..=MAX_DISTANCE).contains(&d) {
        return Err(Error::InvalidDistance(d));
    }
    let n = d as isize;
    let data_qubits: Vec<(usize, usize)> =
        (0..d).flat_map(|r| (0..d).map(move |c| (r, c))).collect();
    let qubit_coords = data_qubits
        .iter()
        .map(|&(r, c)| (2 * r + 1, 2 * c + 1))
        .collect();

    let mut z_checks = Vec::new();
    let mut x_checks = Vec::new();
    let mut z_check_coords = Vec::new();
    let mut x_check_coords = Vec::new();

    for i in -1..n {
        for j in -1..n {
            let kind = cell_kind(i, j);
            let top_or_bottom = i == -1 || i == n - 1;
            let left_or_right = j == -1 || j == n - 1;
            if top_or_bottom && left_or_right {
                continue;
            }
            // Z half-plaquettes only on top/bottom edges, X only on left/right.
            if top_or_bottom && kind != CheckKind::Z {
                continue;
            }
            if left_or_right && kind != CheckKind::X {
                continue;
            }
            let mut support = Vec::with_capacity(4);
            for (dr, dc) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                let (r, c) = (i + dr, j + dc);
                if (0..n).contains(&r) && (0..n).contains(&c) {
                    support.push(r as usize * d + c as usize);
                }
            }
            let cell = ((2 * i + 2) as usize, (2 * j + 2) as usize);
            match kind {
                CheckKind::Z => {
                    z_checks.push(support);
                    z_check_coords.push(cell);
                }
                CheckKind::X => {
                    x_checks.push(support);
                    x_check_coords.push(cell);
                }
            }
        }
    }

    let mut qubit_z_checks = vec![0u64; d * d];
    for (j, support) in z_checks.iter().enumerate() {
        for &q in support {
            qubit_z_checks[q] |= 1 << j;
        }
    }
    let logical_x: Vec<usize> = (0..d).collect();
    let logical_z: Vec<usize> = (0..d).map(|r| r * d).collect();
    let logical_z_mask = logical_z.iter().fold(0u128, |m, &q| m | 1 << q);

    Ok(CodeLayout {
        d,
        data_qubits,
        z_checks,
        x_checks,
        z_check_coords,
        x_check_coords,
        qubit_coords,
        logical_x,
        logical_z,
        qubit_z_checks,
        logical_z_mask,
    })
}
