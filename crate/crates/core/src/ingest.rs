//! Dataset container, validation, standardization and CSV adapters.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{mean_sd, standardize_named, Standardization};
use crate::policy::Policy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnNames {
    pub y: String,
    pub a: String,
    pub l: Vec<String>,
    pub z: Vec<String>,
    pub w: Vec<String>,
}

impl ColumnNames {
    fn defaults(pl: usize, pz: usize, pw: usize) -> Self {
        let block = |stem: &str, p: usize| -> Vec<String> {
            if p == 1 {
                vec![stem.to_string()]
            } else {
                (1..=p).map(|k| format!("{stem}{k}")).collect()
            }
        };
        Self {
            y: "Y".into(),
            a: "A".into(),
            l: block("L", pl),
            z: block("Z", pz),
            w: block("W", pw),
        }
    }
}

/// Affine maps recorded by [`Dataset::standardize_blocks`]. The exposure map
/// is only applied to kernel inputs; `Dataset::a` stays on the original scale
/// so that policies keep their meaning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockTransforms {
    pub a: Standardization,
    pub l: Standardization,
    pub z: Standardization,
    pub w: Standardization,
}

/// Observed data O = (Y, Delta A, L, Z, W) with sampling weights and the
/// target-subpopulation flag. Missing exposures are stored as NaN with
/// `observed[i] == false`.
#[derive(Debug, Clone)]
pub struct Dataset {
    y: Vec<f64>,
    a: Vec<f64>,
    observed: Vec<bool>,
    l: DMatrix<f64>,
    z: DMatrix<f64>,
    w: DMatrix<f64>,
    weights: Vec<f64>,
    s_member: Vec<bool>,
    latent_u: Option<Vec<f64>>,
    names: ColumnNames,
    transforms: Option<BlockTransforms>,
}

impl Dataset {
    /// `a[i] = None` marks an exposure not measured in the second phase.
    pub fn new(
        y: Vec<f64>,
        a: Vec<Option<f64>>,
        l: DMatrix<f64>,
        z: DMatrix<f64>,
        w: DMatrix<f64>,
    ) -> Result<Self> {
        let n = y.len();
        for (what, len) in [("A", a.len()), ("L", l.nrows()), ("Z", z.nrows()), ("W", w.nrows())] {
            if len != n {
                return Err(Error::Schema(format!("column block {what} has {len} rows, Y has {n}")));
            }
        }
        if z.ncols() == 0 || w.ncols() == 0 {
            return Err(Error::Schema("at least one Z and one W column are required".into()));
        }
        let observed: Vec<bool> = a.iter().map(|v| v.is_some()).collect();
        let a: Vec<f64> = a.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect();
        if y.iter().any(|v| !v.is_finite())
            || a.iter().zip(&observed).any(|(v, &o)| o && !v.is_finite())
            || [&l, &z, &w].iter().any(|m| m.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Schema("non-finite value in data".into()));
        }
        let names = ColumnNames::defaults(l.ncols(), z.ncols(), w.ncols());
        Ok(Self {
            y,
            a,
            observed,
            l,
            z,
            w,
            weights: vec![1.0; n],
            s_member: vec![true; n],
            latent_u: None,
            names,
            transforms: None,
        })
    }

    /// Convenience constructor for one column per block and fully observed A.
    pub fn from_columns(y: Vec<f64>, a: Vec<f64>, l: Vec<f64>, z: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        let col = |v: Vec<f64>| DMatrix::from_vec(v.len(), 1, v);
        Self::new(y, a.into_iter().map(Some).collect(), col(l), col(z), col(w))
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.n() {
            return Err(Error::Schema(format!(
                "weights have {} rows, data has {}",
                weights.len(),
                self.n()
            )));
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn with_s_member(mut self, s: Vec<bool>) -> Result<Self> {
        if s.len() != self.n() {
            return Err(Error::Schema(format!("S indicator has {} rows, data has {}", s.len(), self.n())));
        }
        self.s_member = s;
        Ok(self)
    }

    pub fn with_latent_u(mut self, u: Vec<f64>) -> Result<Self> {
        if u.len() != self.n() {
            return Err(Error::Schema(format!("U has {} rows, data has {}", u.len(), self.n())));
        }
        self.latent_u = Some(u);
        Ok(self)
    }

    pub fn with_names(mut self, names: ColumnNames) -> Result<Self> {
        if names.l.len() != self.l.ncols() || names.z.len() != self.z.ncols() || names.w.len() != self.w.ncols() {
            return Err(Error::Schema("column name counts do not match the blocks".into()));
        }
        self.names = names;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }
    pub fn y(&self) -> &[f64] {
        &self.y
    }
    /// Exposure on the original scale; NaN where not observed.
    pub fn a(&self) -> &[f64] {
        &self.a
    }
    pub fn observed(&self) -> &[bool] {
        &self.observed
    }
    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }
    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }
    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn s_member(&self) -> &[bool] {
        &self.s_member
    }
    pub fn latent_u(&self) -> Option<&[f64]> {
        self.latent_u.as_deref()
    }
    pub fn names(&self) -> &ColumnNames {
        &self.names
    }
    pub fn transforms(&self) -> Option<&BlockTransforms> {
        self.transforms.as_ref()
    }

    pub fn n_complete(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    pub fn has_unit_weights(&self) -> bool {
        self.weights
            .iter()
            .zip(&self.observed)
            .all(|(&w, &o)| !o || w == 1.0)
    }

    /// Entry (i, j) of L on the scale it was supplied in.
    pub fn raw_l(&self, i: usize, j: usize) -> f64 {
        self.transforms.as_ref().map_or(self.l[(i, j)], |t| t.l.means[j] + t.l.sds[j] * self.l[(i, j)])
    }
    pub fn raw_z(&self, i: usize, j: usize) -> f64 {
        self.transforms.as_ref().map_or(self.z[(i, j)], |t| t.z.means[j] + t.z.sds[j] * self.z[(i, j)])
    }
    pub fn raw_w(&self, i: usize, j: usize) -> f64 {
        self.transforms.as_ref().map_or(self.w[(i, j)], |t| t.w.means[j] + t.w.sds[j] * self.w[(i, j)])
    }

    /// Missing exposures or non-unit weights; bridge fits then use the
    /// weighted forms.
    pub fn is_two_phase(&self) -> bool {
        !self.has_unit_weights() || self.n_complete() < self.n()
    }

    /// I{(A_i, L_i) in S}: user membership, observed exposure and policy domain.
    pub fn target_indicator(&self, policy: &Policy) -> Vec<bool> {
        (0..self.n())
            .map(|i| self.s_member[i] && self.observed[i] && policy.in_s(self.a[i]))
            .collect()
    }

    /// Rows in the given order, carrying transforms and names along.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let pick = |m: &DMatrix<f64>| m.select_rows(rows.iter());
        Dataset {
            y: rows.iter().map(|&i| self.y[i]).collect(),
            a: rows.iter().map(|&i| self.a[i]).collect(),
            observed: rows.iter().map(|&i| self.observed[i]).collect(),
            l: pick(&self.l),
            z: pick(&self.z),
            w: pick(&self.w),
            weights: rows.iter().map(|&i| self.weights[i]).collect(),
            s_member: rows.iter().map(|&i| self.s_member[i]).collect(),
            latent_u: self.latent_u.as_ref().map(|u| rows.iter().map(|&i| u[i]).collect()),
            names: self.names.clone(),
            transforms: self.transforms.clone(),
        }
    }

    /// Exposure mapped onto the kernel-input scale.
    pub fn scale_a(&self, a: f64) -> f64 {
        match &self.transforms {
            Some(t) => t.a.apply_value(0, a),
            None => a,
        }
    }

    fn features(&self, block: &DMatrix<f64>, rows: &[usize], a: &[f64]) -> DMatrix<f64> {
        let pl = self.l.ncols();
        let pb = block.ncols();
        let mut out = DMatrix::zeros(rows.len(), 1 + pl + pb);
        for (k, &i) in rows.iter().enumerate() {
            out[(k, 0)] = self.scale_a(a[k]);
            for j in 0..pl {
                out[(k, 1 + j)] = self.l[(i, j)];
            }
            for j in 0..pb {
                out[(k, 1 + pl + j)] = block[(i, j)];
            }
        }
        out
    }

    /// Kernel inputs (a, L, W) for the outcome bridge with `a[k]` replacing A at `rows[k]`.
    pub fn outcome_features(&self, rows: &[usize], a: &[f64]) -> DMatrix<f64> {
        self.features(&self.w, rows, a)
    }

    /// Kernel inputs (a, L, Z) for the treatment bridge.
    pub fn treatment_features(&self, rows: &[usize], a: &[f64]) -> DMatrix<f64> {
        self.features(&self.z, rows, a)
    }

    pub fn outcome_dim(&self) -> usize {
        1 + self.l.ncols() + self.w.ncols()
    }

    pub fn treatment_dim(&self) -> usize {
        1 + self.l.ncols() + self.z.ncols()
    }

    /// Standardize L, Z, W in place and record the map for A (over observed
    /// rows) without touching the stored exposure.
    pub fn standardize_blocks(&self) -> Result<Dataset> {
        let obs_a: Vec<f64> = self.complete_rows().iter().map(|&i| self.a[i]).collect();
        if obs_a.len() < 2 {
            return Err(Error::InvalidArgument("need at least two observed exposures".into()));
        }
        let (am, asd) = mean_sd(obs_a.iter().copied());
        if !(asd > 0.0) {
            return Err(Error::ConstantColumn(self.names.a.clone()));
        }
        let (l, tl) = if self.l.ncols() > 0 {
            standardize_named(&self.l, |j| self.names.l[j].clone())?
        } else {
            (self.l.clone(), Standardization::identity(0))
        };
        let (z, tz) = standardize_named(&self.z, |j| self.names.z[j].clone())?;
        let (w, tw) = standardize_named(&self.w, |j| self.names.w[j].clone())?;
        let compose = |old: Option<&Standardization>, new: Standardization| match old {
            None => new,
            Some(o) => Standardization {
                means: o.means.iter().zip(&o.sds).zip(&new.means).map(|((m, s), m2)| m + s * m2).collect(),
                sds: o.sds.iter().zip(&new.sds).map(|(s, s2)| s * s2).collect(),
            },
        };
        let old = self.transforms.as_ref();
        let transforms = BlockTransforms {
            a: Standardization { means: vec![am], sds: vec![asd] },
            l: compose(old.map(|t| &t.l), tl),
            z: compose(old.map(|t| &t.z), tz),
            w: compose(old.map(|t| &t.w), tw),
        };
        Ok(Dataset { l, z, w, transforms: Some(transforms), ..self.clone() })
    }

    pub fn complete_rows(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.observed[i]).collect()
    }

    pub fn validate(&self) -> Vec<Finding> {
        validate(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FindingKind {
    ConstantCovariate,
    ConstantNegativeControl,
    ConstantExposure,
    NonBinaryOutcome,
    NonPositiveWeight,
    NotStandardized,
    NoCompleteCases,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub kind: FindingKind,
    pub message: String,
}

fn is_constant(values: impl Iterator<Item = f64> + Clone) -> bool {
    let mut it = values.clone();
    match it.next() {
        None => true,
        Some(first) => it.all(|v| v == first),
    }
}

pub fn validate(data: &Dataset) -> Vec<Finding> {
    let mut out = Vec::new();
    let mut push = |kind, message: String| out.push(Finding { kind, message });
    let names = &data.names;

    for (j, col) in data.l.column_iter().enumerate() {
        if is_constant(col.iter().copied()) {
            push(FindingKind::ConstantCovariate, format!("constant covariate `{}`", names.l[j]));
        }
    }
    for (block, cols, label) in [(&data.z, &names.z, "treatment"), (&data.w, &names.w, "outcome")] {
        for (j, col) in block.column_iter().enumerate() {
            if is_constant(col.iter().copied()) {
                push(
                    FindingKind::ConstantNegativeControl,
                    format!("constant negative control ({label}) `{}`", cols[j]),
                );
            }
        }
    }
    let complete = data.complete_rows();
    if complete.is_empty() {
        push(FindingKind::NoCompleteCases, "no row has an observed exposure".into());
    } else if is_constant(complete.iter().map(|&i| data.a[i])) {
        push(FindingKind::ConstantExposure, format!("constant exposure `{}`", names.a));
    }
    if data.y.iter().any(|&v| v != 0.0 && v != 1.0) {
        push(
            FindingKind::NonBinaryOutcome,
            format!("outcome `{}` is not binary; estimators still apply", names.y),
        );
    }
    let bad_w = complete.iter().filter(|&&i| !(data.weights[i] > 0.0)).count();
    if bad_w > 0 {
        push(FindingKind::NonPositiveWeight, format!("{bad_w} complete rows have non-positive weight"));
    }

    let off = |col: nalgebra::DVectorView<f64>| {
        let (m, s) = mean_sd(col.iter().copied());
        m.abs() > 1e-8 || (s - 1.0).abs() > 1e-8
    };
    let mut unscaled: Vec<String> = Vec::new();
    if data.transforms.is_none() {
        unscaled.push(names.a.clone());
    }
    for (block, cols) in [(&data.l, &names.l), (&data.z, &names.z), (&data.w, &names.w)] {
        for (j, col) in block.column_iter().enumerate() {
            if off(col.as_view()) {
                unscaled.push(cols[j].clone());
            }
        }
    }
    if !unscaled.is_empty() {
        push(
            FindingKind::NotStandardized,
            format!("columns without zero mean and unit sd: {}", unscaled.join(", ")),
        );
    }
    out
}

/// Which CSV columns play which role.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ColumnRoles {
    pub outcome: String,
    pub treatment: String,
    pub covariates: Vec<String>,
    pub nct: Vec<String>,
    pub nco: Vec<String>,
    pub weights: Option<String>,
    pub s_member: Option<String>,
}

impl ColumnRoles {
    /// Roles matching the layout written by [`write_csv`] for one-column blocks.
    pub fn standard() -> Self {
        Self {
            outcome: "Y".into(),
            treatment: "A".into(),
            covariates: vec!["L".into()],
            nct: vec!["Z".into()],
            nco: vec!["W".into()],
            weights: Some("wt".into()),
            s_member: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_kept: usize,
    pub dropped_incomplete: usize,
    pub missing_treatment: usize,
}

fn is_missing(s: &str) -> bool {
    let t = s.trim();
    t.is_empty() || t == "NA"
}

pub fn read_csv_path(path: &Path, roles: &ColumnRoles) -> Result<(Dataset, IngestReport)> {
    let file = std::fs::File::open(path)?;
    read_csv(file, roles)
}

/// Parse an RFC-4180 CSV with header. A missing exposure (`NA` or empty) is
/// kept only when a weights column is given; a missing value anywhere else
/// drops the row.
pub fn read_csv<R: Read>(reader: R, roles: &ColumnRoles) -> Result<(Dataset, IngestReport)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column `{name}` not found in header")))
    };
    if roles.nct.is_empty() || roles.nco.is_empty() {
        return Err(Error::Schema("at least one negative control of each kind is required".into()));
    }
    let iy = find(&roles.outcome)?;
    let ia = find(&roles.treatment)?;
    let il: Vec<usize> = roles.covariates.iter().map(|c| find(c)).collect::<Result<_>>()?;
    let iz: Vec<usize> = roles.nct.iter().map(|c| find(c)).collect::<Result<_>>()?;
    let iw: Vec<usize> = roles.nco.iter().map(|c| find(c)).collect::<Result<_>>()?;
    let iwt = roles.weights.as_deref().map(find).transpose()?;
    let is = roles.s_member.as_deref().map(find).transpose()?;

    let mut report = IngestReport::default();
    let (mut y, mut a, mut wt, mut s) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let (mut l, mut z, mut w): (Vec<f64>, Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new(), Vec::new());

    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        report.rows_read += 1;
        let row = line + 2;
        let parse = |idx: usize| -> Result<Option<f64>> {
            let raw = rec.get(idx).unwrap_or("");
            if is_missing(raw) {
                return Ok(None);
            }
            raw.parse::<f64>().map(Some).map_err(|_| {
                Error::Schema(format!("column `{}` line {row}: `{raw}` is not numeric", &headers[idx]))
            })
        };
        let mut others: Vec<Option<f64>> = vec![parse(iy)?];
        for &j in il.iter().chain(&iz).chain(&iw) {
            others.push(parse(j)?);
        }
        let weight = iwt.map(&parse).transpose()?;
        let member = is.map(&parse).transpose()?;
        let av = parse(ia)?;
        let weight_missing = matches!(weight, Some(None));
        let member_missing = matches!(member, Some(None));
        if others.iter().any(|v| v.is_none()) || weight_missing || member_missing || (av.is_none() && iwt.is_none()) {
            report.dropped_incomplete += 1;
            continue;
        }
        if av.is_none() {
            report.missing_treatment += 1;
        }
        let vals: Vec<f64> = others.into_iter().map(|v| v.unwrap()).collect();
        y.push(vals[0]);
        l.extend_from_slice(&vals[1..1 + il.len()]);
        z.extend_from_slice(&vals[1 + il.len()..1 + il.len() + iz.len()]);
        w.extend_from_slice(&vals[1 + il.len() + iz.len()..]);
        a.push(av);
        wt.push(weight.flatten().unwrap_or(1.0));
        if let Some(m) = member.flatten() {
            if m != 0.0 && m != 1.0 {
                return Err(Error::Schema(format!(
                    "column `{}` line {row}: S indicator must be 0 or 1",
                    &headers[is.unwrap()]
                )));
            }
            s.push(m == 1.0);
        } else {
            s.push(true);
        }
    }
    report.rows_kept = y.len();
    if report.dropped_incomplete > 0 {
        log::warn!("dropped {} incomplete rows", report.dropped_incomplete);
    }
    let n = y.len();
    let block = |v: Vec<f64>, p: usize| DMatrix::from_row_slice(n, p, &v);
    let names = ColumnNames {
        y: roles.outcome.clone(),
        a: roles.treatment.clone(),
        l: roles.covariates.clone(),
        z: roles.nct.clone(),
        w: roles.nco.clone(),
    };
    let data = Dataset::new(y, a, block(l, il.len()), block(z, iz.len()), block(w, iw.len()))?
        .with_weights(wt)?
        .with_s_member(s)?
        .with_names(names)?;
    Ok((data, report))
}

fn fmt_num(v: f64) -> String {
    // Shortest representation that round-trips.
    format!("{v:?}")
}

/// Write the dataset with its column names; missing exposures become `NA`.
/// The latent confounder is included as `U` when requested.
pub fn write_csv<W: Write>(data: &Dataset, writer: W, include_latent: bool) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let names = &data.names;
    let mut header: Vec<String> = vec![names.y.clone()];
    header.extend(names.l.iter().cloned());
    header.push(names.a.clone());
    header.extend(names.z.iter().cloned());
    header.extend(names.w.iter().cloned());
    header.push("wt".into());
    let with_u = include_latent && data.latent_u.is_some();
    if with_u {
        header.push("U".into());
    }
    wtr.write_record(&header)?;
    for i in 0..data.n() {
        let mut rec: Vec<String> = vec![fmt_num(data.y[i])];
        rec.extend(data.l.row(i).iter().map(|&v| fmt_num(v)));
        rec.push(if data.observed[i] { fmt_num(data.a[i]) } else { "NA".into() });
        rec.extend(data.z.row(i).iter().map(|&v| fmt_num(v)));
        rec.extend(data.w.row(i).iter().map(|&v| fmt_num(v)));
        rec.push(fmt_num(data.weights[i]));
        if with_u {
            rec.push(fmt_num(data.latent_u.as_ref().unwrap()[i]));
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}
