use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, Result};

/// Cone of a constraint block `A x + b ∈ K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConeTag {
    /// `A x + b = 0`.
    Zero,
    /// Componentwise `A x + b >= 0`.
    Nonneg,
    /// `(t, v)` with `||v||_2 <= t`; dimension at least 2.
    Soc,
    /// `(u, v, w)` with `v exp(u / v) <= w`, `v > 0` (closure at `v = 0`).
    Exp,
}

impl ConeTag {
    pub fn name(self) -> &'static str {
        match self {
            ConeTag::Zero => "zero",
            ConeTag::Nonneg => "nonneg",
            ConeTag::Soc => "soc",
            ConeTag::Exp => "exp",
        }
    }
}

/// Sparse real affine form `sum_i coef_i * x_i + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffineExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn constant(value: f64) -> Self {
        AffineExpr {
            terms: Vec::new(),
            constant: value,
        }
    }

    pub fn var(index: usize) -> Self {
        Self::term(index, 1.0)
    }

    pub fn term(index: usize, coef: f64) -> Self {
        AffineExpr {
            terms: vec![(index, coef)],
            constant: 0.0,
        }
    }

    pub fn add_term(&mut self, index: usize, coef: f64) -> &mut Self {
        if coef != 0.0 {
            self.terms.push((index, coef));
        }
        self
    }

    pub fn add_constant(&mut self, value: f64) -> &mut Self {
        self.constant += value;
        self
    }

    pub fn add_scaled(&mut self, other: &AffineExpr, factor: f64) -> &mut Self {
        for &(i, c) in &other.terms {
            self.add_term(i, c * factor);
        }
        self.constant += other.constant * factor;
        self
    }

    pub fn scaled(&self, factor: f64) -> AffineExpr {
        let mut out = AffineExpr::default();
        out.add_scaled(self, factor);
        out
    }

    pub fn plus(mut self, other: &AffineExpr) -> AffineExpr {
        self.add_scaled(other, 1.0);
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>()
    }

    /// Terms with duplicate indices summed and zeros dropped, sorted by index.
    pub fn canonical_terms(&self) -> Vec<(usize, f64)> {
        let mut t = self.terms.clone();
        t.sort_by_key(|&(i, _)| i);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(t.len());
        for (i, c) in t {
            match out.last_mut() {
                Some(last) if last.0 == i => last.1 += c,
                _ => out.push((i, c)),
            }
        }
        out.retain(|&(_, c)| c != 0.0);
        out
    }
}

/// One constraint block: each row is an affine form, the stacked rows lie in `cone`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeBlock {
    /// Declared column count of `A`; must equal the program's variable count.
    pub cols: usize,
    pub rows: Vec<AffineExpr>,
    pub cone: ConeTag,
    /// Free-form tag used for diagnostics and cone censuses.
    pub label: &'static str,
}

impl ConeBlock {
    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// Constant vector `b`.
    pub fn offset(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.constant).collect()
    }

    /// Nonzeros of `A` as `(row, col, value)`.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(r, row)| row.canonical_terms().into_iter().map(move |(c, v)| (r, c, v)))
            .collect()
    }
}

/// `minimize c^T x` subject to every block `A_i x + b_i ∈ K_i`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConicProgram {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub blocks: Vec<ConeBlock>,
}

impl ConicProgram {
    pub fn new(num_vars: usize) -> Self {
        ConicProgram {
            num_vars,
            objective: vec![0.0; num_vars],
            blocks: Vec::new(),
        }
    }

    pub fn add(&mut self, cone: ConeTag, label: &'static str, rows: Vec<AffineExpr>) {
        self.blocks.push(ConeBlock {
            cols: self.num_vars,
            rows,
            cone,
            label,
        });
    }

    pub fn add_nonneg(&mut self, label: &'static str, row: AffineExpr) {
        self.add(ConeTag::Nonneg, label, vec![row]);
    }

    /// Number of blocks with the given cone and label.
    pub fn census(&self, cone: ConeTag, label: &str) -> usize {
        self.blocks
            .iter()
            .filter(|b| b.cone == cone && b.label == label)
            .count()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Writes the program as plain text, one line per nonzero.
    ///
    /// ```text
    /// # num_vars <n>
    /// cone <block> <tag> <dim> <label>
    /// c <col> <value>
    /// A <block> <row> <col> <value>
    /// b <block> <row> <value>
    /// ```
    pub fn to_triplet_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# num_vars {}", self.num_vars);
        for (j, &c) in self.objective.iter().enumerate() {
            if c != 0.0 {
                let _ = writeln!(s, "c {j} {c:e}");
            }
        }
        for (bi, block) in self.blocks.iter().enumerate() {
            let _ = writeln!(s, "cone {bi} {} {} {}", block.cone.name(), block.dim(), block.label);
            for (r, c, v) in block.triplets() {
                let _ = writeln!(s, "A {bi} {r} {c} {v:e}");
            }
            for (r, row) in block.rows.iter().enumerate() {
                if row.constant != 0.0 {
                    let _ = writeln!(s, "b {bi} {r} {:e}", row.constant);
                }
            }
        }
        s
    }

    pub fn write_triplets(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_triplet_text()).map_err(|e| Error::io(path, e))
    }
}

/// Checks dimensions and cone tags; returns every problem found.
pub fn validate(p: &ConicProgram) -> std::result::Result<(), Vec<String>> {
    let mut errs = Vec::new();
    if p.objective.len() != p.num_vars {
        errs.push(format!(
            "objective has {} entries, expected {}",
            p.objective.len(),
            p.num_vars
        ));
    }
    if p.objective.iter().any(|c| !c.is_finite()) {
        errs.push("objective has non-finite entries".into());
    }
    for (i, b) in p.blocks.iter().enumerate() {
        let name = format!("block {i} ({} '{}')", b.cone.name(), b.label);
        if b.cols != p.num_vars {
            errs.push(format!("{name}: A has {} columns, program has {} variables", b.cols, p.num_vars));
        }
        if b.rows.is_empty() {
            errs.push(format!("{name}: empty block"));
        }
        match b.cone {
            ConeTag::Soc if b.dim() < 2 => errs.push(format!("{name}: SOC dimension {} < 2", b.dim())),
            ConeTag::Exp if b.dim() != 3 => errs.push(format!("{name}: exponential cone dimension {} != 3", b.dim())),
            _ => {}
        }
        for (r, row) in b.rows.iter().enumerate() {
            if !row.constant.is_finite() || row.terms.iter().any(|(_, c)| !c.is_finite()) {
                errs.push(format!("{name}: row {r} has non-finite data"));
            }
            if let Some(&(c, _)) = row.terms.iter().find(|(c, _)| *c >= b.cols) {
                errs.push(format!("{name}: row {r} references column {c} beyond {}", b.cols));
            }
        }
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(errs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_program_is_valid() {
        assert!(validate(&ConicProgram::new(0)).is_ok());
    }

    #[test]
    fn soc_of_dimension_one_rejected() {
        let mut p = ConicProgram::new(1);
        p.add(ConeTag::Soc, "bad", vec![AffineExpr::var(0)]);
        let errs = validate(&p).unwrap_err();
        assert!(errs[0].contains("SOC dimension 1"));
    }

    #[test]
    fn column_mismatch_names_block() {
        let mut p = ConicProgram::new(2);
        p.add_nonneg("ok", AffineExpr::var(1));
        p.blocks.push(ConeBlock {
            cols: 3,
            rows: vec![AffineExpr::var(2)],
            cone: ConeTag::Nonneg,
            label: "wide",
        });
        let errs = validate(&p).unwrap_err();
        assert!(errs.iter().any(|e| e.contains("block 1") && e.contains("'wide'") && e.contains("3 columns")));
    }

    #[test]
    fn exp_needs_three_rows() {
        let mut p = ConicProgram::new(1);
        p.add(ConeTag::Exp, "e", vec![AffineExpr::var(0), AffineExpr::constant(1.0)]);
        assert!(validate(&p).is_err());
    }

    #[test]
    fn canonical_terms_merge_duplicates() {
        let mut e = AffineExpr::var(3);
        e.add_term(1, 2.0).add_term(3, -1.0).add_term(1, 0.5);
        assert_eq!(e.canonical_terms(), vec![(1, 2.5)]);
    }

    #[test]
    fn triplet_dump_lists_nonzeros() {
        let mut p = ConicProgram::new(2);
        p.objective[0] = 1.0;
        let mut r = AffineExpr::var(0);
        r.add_term(1, -2.0).add_constant(3.0);
        p.add_nonneg("row", r);
        let text = p.to_triplet_text();
        assert!(text.contains("A 0 0 0 1e0"));
        assert!(text.contains("A 0 0 1 -2e0"));
        assert!(text.contains("b 0 0 3e0"));
        assert!(text.contains("c 0 1e0"));
    }
}
