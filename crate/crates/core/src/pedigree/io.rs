//! Text formats for pedigree, phenotype, covariate and allele-map files.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{
    Allele, Cohort, CovariateKind, CovariateTable, GenotypeCall, Individual, MarkerData, Pedigree,
    PhenotypeTable, Sex, StudyMode,
};
use crate::error::{Error, Result};
use crate::kernels::TraitKind;

const MISSING: &str = "NA";
/// Provenance lines starting with this prefix are skipped by every reader.
pub const META_PREFIX: &str = "#meta";

struct PedRow {
    individual: Individual,
    calls: Vec<GenotypeCall>,
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with(META_PREFIX))
}

fn parse_parent(s: &str) -> Option<String> {
    (s != "0").then(|| s.to_string())
}

fn read_pedigree_file(path: &Path) -> Result<(Vec<String>, Vec<PedRow>)> {
    let text = fs::read_to_string(path)?;
    let mut marker_ids: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for (lineno, line) in data_lines(&text) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields[0] == "#markers" {
            marker_ids = Some(fields[1..].iter().map(|s| s.to_string()).collect());
            continue;
        }
        if fields[0].starts_with('#') {
            continue;
        }
        if fields.len() < 5 || !(fields.len() - 5).is_multiple_of(2) {
            return Err(Error::parse(
                path,
                lineno,
                format!(
                    "expected 5 columns plus 2 per marker, found {} columns",
                    fields.len()
                ),
            ));
        }
        let n_markers = (fields.len() - 5) / 2;
        if let Some(ids) = &marker_ids {
            if ids.len() != n_markers {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("#markers lists {} markers but line has {n_markers}", ids.len()),
                ));
            }
        } else if let Some(first) = rows.first() {
            let first: &PedRow = first;
            if first.calls.len() != n_markers {
                return Err(Error::parse(path, lineno, "inconsistent number of marker columns"));
            }
        }
        let sex = Sex::from_code(fields[4])
            .ok_or_else(|| Error::parse(path, lineno, format!("bad sex code {:?}", fields[4])))?;
        let mut calls = Vec::with_capacity(n_markers);
        for k in 0..n_markers {
            let code = |s: &str| {
                s.parse::<Allele>()
                    .map_err(|_| Error::parse(path, lineno, format!("bad allele code {s:?}")))
            };
            let a = code(fields[5 + 2 * k])?;
            let b = code(fields[6 + 2 * k])?;
            calls.push(GenotypeCall::from_codes(a, b));
        }
        let father_id = parse_parent(fields[2]);
        let mother_id = parse_parent(fields[3]);
        if father_id.is_some() != mother_id.is_some() {
            return Err(Error::parse(
                path,
                lineno,
                "father and mother must both be given or both be 0",
            ));
        }
        rows.push(PedRow {
            individual: Individual {
                family_id: fields[0].to_string(),
                id: fields[1].to_string(),
                father_id,
                mother_id,
                sex,
            },
            calls,
        });
    }
    let n_markers = rows.first().map_or(0, |r| r.calls.len());
    let ids = marker_ids.unwrap_or_else(|| (1..=n_markers).map(|i| format!("m{i}")).collect());
    Ok((ids, rows))
}

fn parse_trait_kind(s: &str) -> Option<TraitKind> {
    match s {
        "quant" => Some(TraitKind::Quantitative),
        "binary" => Some(TraitKind::Binary),
        _ => {
            let k: u32 = s.strip_prefix("ordinal:")?.parse().ok()?;
            (k >= 2).then_some(TraitKind::Ordinal { levels: k })
        }
    }
}

fn trait_kind_label(kind: TraitKind) -> String {
    match kind {
        TraitKind::Quantitative => "quant".into(),
        TraitKind::Binary => "binary".into(),
        TraitKind::Ordinal { levels } => format!("ordinal:{levels}"),
    }
}

/// Reads the `id` header and `#types` row shared by phenotype and covariate files.
fn read_table_header<'a>(
    path: &Path,
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
) -> Result<(Vec<String>, Vec<String>)> {
    let (lineno, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty file"))?;
    let names: Vec<&str> = header.split_whitespace().collect();
    if names[0] != "id" {
        return Err(Error::parse(path, lineno, "header must start with `id`"));
    }
    let (lineno, types) = lines
        .next()
        .ok_or_else(|| Error::parse(path, lineno + 1, "missing #types row"))?;
    let types: Vec<&str> = types.split_whitespace().collect();
    if types[0] != "#types" || types.len() != names.len() {
        return Err(Error::parse(
            path,
            lineno,
            "second row must be `#types` with one entry per column",
        ));
    }
    Ok((
        names[1..].iter().map(|s| s.to_string()).collect(),
        types[1..].iter().map(|s| s.to_string()).collect(),
    ))
}

fn read_phenotypes(path: &Path, index: &HashMap<String, usize>, n: usize) -> Result<PhenotypeTable> {
    let text = fs::read_to_string(path)?;
    let mut lines = data_lines(&text);
    let (names, types) = read_table_header(path, &mut lines)?;
    let kinds = types
        .iter()
        .map(|t| {
            parse_trait_kind(t).ok_or_else(|| Error::parse(path, 2, format!("unknown trait type {t:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut values = vec![vec![None; names.len()]; n];
    let mut seen = vec![false; n];
    for (lineno, line) in lines {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != names.len() + 1 {
            return Err(Error::parse(path, lineno, "wrong number of columns"));
        }
        let &g = index
            .get(fields[0])
            .ok_or_else(|| Error::parse(path, lineno, format!("unknown individual {}", fields[0])))?;
        if std::mem::replace(&mut seen[g], true) {
            return Err(Error::parse(path, lineno, format!("duplicate row for {}", fields[0])));
        }
        for (c, field) in fields[1..].iter().enumerate() {
            if *field == MISSING {
                continue;
            }
            let v: f64 = field.parse().map_err(|_| {
                Error::parse(path, lineno, format!("trait {}: not a number: {field:?}", names[c]))
            })?;
            if !kinds[c].admits(v) {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!(
                        "trait {}: value {field} is not valid for type {}",
                        names[c],
                        trait_kind_label(kinds[c])
                    ),
                ));
            }
            values[g][c] = Some(v);
        }
    }
    Ok(PhenotypeTable {
        names,
        kinds,
        values,
    })
}

fn read_covariates(path: &Path, index: &HashMap<String, usize>, n: usize) -> Result<CovariateTable> {
    let text = fs::read_to_string(path)?;
    let mut lines = data_lines(&text);
    let (names, types) = read_table_header(path, &mut lines)?;
    let kinds = types
        .iter()
        .map(|t| match t.as_str() {
            "cont" => Ok(CovariateKind::Continuous),
            "cat" => Ok(CovariateKind::Categorical),
            other => Err(Error::parse(path, 2, format!("unknown covariate type {other:?}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let mut labels: Vec<Vec<String>> = vec![Vec::new(); names.len()];
    let mut values = vec![vec![None; names.len()]; n];
    let mut seen = vec![false; n];
    for (lineno, line) in lines {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != names.len() + 1 {
            return Err(Error::parse(path, lineno, "wrong number of columns"));
        }
        let &g = index
            .get(fields[0])
            .ok_or_else(|| Error::parse(path, lineno, format!("unknown individual {}", fields[0])))?;
        if std::mem::replace(&mut seen[g], true) {
            return Err(Error::parse(path, lineno, format!("duplicate row for {}", fields[0])));
        }
        for (c, field) in fields[1..].iter().enumerate() {
            if *field == MISSING {
                continue;
            }
            let v = match kinds[c] {
                CovariateKind::Continuous => field.parse::<f64>().map_err(|_| {
                    Error::parse(path, lineno, format!("covariate {}: not a number: {field:?}", names[c]))
                })?,
                CovariateKind::Categorical => {
                    let code = match labels[c].iter().position(|l| l == field) {
                        Some(code) => code,
                        None => {
                            labels[c].push(field.to_string());
                            labels[c].len() - 1
                        }
                    };
                    code as f64
                }
            };
            values[g][c] = Some(v);
        }
    }
    Ok(CovariateTable {
        names,
        kinds,
        labels,
        values,
    })
}

/// Reads a cohort. The study mode is `Family` when any individual has parents
/// listed and `CaseControl` otherwise.
pub fn parse_cohort(ped_file: &Path, phen_file: &Path, cov_file: Option<&Path>) -> Result<Cohort> {
    let (marker_ids, rows) = read_pedigree_file(ped_file)?;

    let mut family_order: Vec<String> = Vec::new();
    let mut families: HashMap<String, Vec<PedRow>> = HashMap::new();
    for row in rows {
        let fam = row.individual.family_id.clone();
        families
            .entry(fam.clone())
            .or_insert_with(|| {
                family_order.push(fam);
                Vec::new()
            })
            .push(row);
    }

    let mode = if families
        .values()
        .flatten()
        .any(|r| r.individual.father_id.is_some())
    {
        StudyMode::Family
    } else {
        StudyMode::CaseControl
    };

    let mut pedigrees = Vec::with_capacity(family_order.len());
    let mut per_marker: Vec<Vec<GenotypeCall>> = vec![Vec::new(); marker_ids.len()];
    for fam in &family_order {
        let rows = families.remove(fam).unwrap_or_default();
        let mut members = Vec::with_capacity(rows.len());
        for row in rows {
            for (k, call) in row.calls.into_iter().enumerate() {
                per_marker[k].push(call);
            }
            members.push(row.individual);
        }
        pedigrees.push(Pedigree::new(fam.clone(), members)?);
    }

    let n: usize = pedigrees.iter().map(Pedigree::n).sum();
    let mut index = HashMap::with_capacity(n);
    for ped in &pedigrees {
        for ind in ped.members() {
            if index.insert(ind.id.clone(), index.len()).is_some() {
                return Err(Error::DuplicateId(ind.id.clone()));
            }
        }
    }

    let markers = marker_ids
        .into_iter()
        .zip(per_marker)
        .map(|(marker_id, calls)| MarkerData { marker_id, calls })
        .collect();
    let phenotypes = read_phenotypes(phen_file, &index, n)?;
    let covariates = cov_file
        .map(|p| read_covariates(p, &index, n))
        .transpose()?;
    Cohort::new(mode, pedigrees, markers, phenotypes, covariates)
}

fn fmt_value(v: Option<f64>) -> String {
    v.map_or_else(|| MISSING.to_string(), |x| format!("{x}"))
}

/// Writes a cohort in the formats read by [`parse_cohort`].
pub fn write_cohort(cohort: &Cohort, ped_file: &Path, phen_file: &Path, cov_file: Option<&Path>) -> Result<()> {
    write_cohort_with_meta(cohort, ped_file, phen_file, cov_file, None)
}

/// As [`write_cohort`], with `meta` (which must start with `#meta`) as the
/// first line of every file.
pub fn write_cohort_with_meta(
    cohort: &Cohort,
    ped_file: &Path,
    phen_file: &Path,
    cov_file: Option<&Path>,
    meta: Option<&str>,
) -> Result<()> {
    let head = meta.map_or_else(String::new, |m| format!("{m}\n"));
    let mut ped = format!("{head}#markers");
    for m in &cohort.markers {
        ped.push('\t');
        ped.push_str(&m.marker_id);
    }
    ped.push('\n');
    for g in 0..cohort.n_individuals() {
        let ind = cohort.individual(g);
        let _ = write!(
            ped,
            "{}\t{}\t{}\t{}\t{}",
            ind.family_id,
            ind.id,
            ind.father_id.as_deref().unwrap_or("0"),
            ind.mother_id.as_deref().unwrap_or("0"),
            ind.sex.code()
        );
        for m in &cohort.markers {
            let (a, b) = m.calls[g].alleles().unwrap_or((0, 0));
            let _ = write!(ped, "\t{a}\t{b}");
        }
        ped.push('\n');
    }
    fs::write(ped_file, ped)?;

    let ph = &cohort.phenotypes;
    let mut phen = format!("{head}id");
    for name in &ph.names {
        let _ = write!(phen, "\t{name}");
    }
    phen.push_str("\n#types");
    for &kind in &ph.kinds {
        let _ = write!(phen, "\t{}", trait_kind_label(kind));
    }
    phen.push('\n');
    for g in 0..cohort.n_individuals() {
        phen.push_str(&cohort.individual(g).id);
        for v in &ph.values[g] {
            let _ = write!(phen, "\t{}", fmt_value(*v));
        }
        phen.push('\n');
    }
    fs::write(phen_file, phen)?;

    if let (Some(path), Some(cov)) = (cov_file, &cohort.covariates) {
        let mut out = format!("{head}id");
        for name in &cov.names {
            let _ = write!(out, "\t{name}");
        }
        out.push_str("\n#types");
        for kind in &cov.kinds {
            out.push_str(match kind {
                CovariateKind::Continuous => "\tcont",
                CovariateKind::Categorical => "\tcat",
            });
        }
        out.push('\n');
        for g in 0..cohort.n_individuals() {
            out.push_str(&cohort.individual(g).id);
            for (c, v) in cov.values[g].iter().enumerate() {
                let cell = match (cov.kinds[c], v) {
                    (_, None) => MISSING.to_string(),
                    (CovariateKind::Continuous, Some(x)) => format!("{x}"),
                    (CovariateKind::Categorical, Some(x)) => cov.labels[c][*x as usize].clone(),
                };
                out.push('\t');
                out.push_str(&cell);
            }
            out.push('\n');
        }
        fs::write(path, out)?;
    }
    Ok(())
}

/// Reads `marker_id <tab> allele` lines choosing the tested allele per marker.
pub fn read_allele_map(path: &Path) -> Result<HashMap<String, Allele>> {
    let text = fs::read_to_string(path)?;
    let mut out = HashMap::new();
    for (lineno, line) in data_lines(&text) {
        if line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Error::parse(path, lineno, "expected `marker_id allele`"));
        }
        let allele = fields[1]
            .parse::<Allele>()
            .ok()
            .filter(|&a| a > 0)
            .ok_or_else(|| Error::parse(path, lineno, format!("bad allele code {:?}", fields[1])))?;
        out.insert(fields[0].to_string(), allele);
    }
    Ok(out)
}
