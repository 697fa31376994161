//! Cohort data model: individuals, pedigrees, marker genotypes, phenotype and
//! covariate tables, plus structural and Mendelian checks.
//!
//! Every per-individual table in a [`Cohort`] is indexed by the individual's
//! *global index*: its position when the pedigrees are flattened in order.

mod io;

use std::collections::HashMap;
use std::fmt;

pub use io::{parse_cohort, read_allele_map, write_cohort, write_cohort_with_meta, META_PREFIX};

use crate::error::{Error, Result};
use crate::kernels::{CovariateVector, TraitComponent, TraitKind, TraitVector};

/// Allele code. Zero is reserved for "missing" in the text formats.
pub type Allele = u16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum Sex {
    Male,
    Female,
    #[default]
    Unknown,
}

impl Sex {
    pub fn code(self) -> u8 {
        match self {
            Sex::Male => 1,
            Sex::Female => 2,
            Sex::Unknown => 0,
        }
    }

    pub fn from_code(code: &str) -> Option<Sex> {
        match code {
            "1" => Some(Sex::Male),
            "2" => Some(Sex::Female),
            "0" => Some(Sex::Unknown),
            _ => None,
        }
    }
}

/// Unordered genotype. `Called` always stores the smaller allele first so the
/// derived equality and hashing treat (a, b) and (b, a) alike.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GenotypeCall {
    Missing,
    Called(Allele, Allele),
}

impl fmt::Display for GenotypeCall {
    /// `a/b`, or `0/0` when missing.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (a, b) = self.alleles().unwrap_or((0, 0));
        write!(f, "{a}/{b}")
    }
}

impl GenotypeCall {
    pub fn called(a: Allele, b: Allele) -> Self {
        if a <= b {
            GenotypeCall::Called(a, b)
        } else {
            GenotypeCall::Called(b, a)
        }
    }

    /// Builds a call from file codes, where a zero in either slot means missing.
    pub fn from_codes(a: Allele, b: Allele) -> Self {
        if a == 0 || b == 0 {
            GenotypeCall::Missing
        } else {
            Self::called(a, b)
        }
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, GenotypeCall::Missing)
    }

    pub fn alleles(&self) -> Option<(Allele, Allele)> {
        match *self {
            GenotypeCall::Called(a, b) => Some((a, b)),
            GenotypeCall::Missing => None,
        }
    }

    pub fn contains(&self, allele: Allele) -> bool {
        matches!(*self, GenotypeCall::Called(a, b) if a == allele || b == allele)
    }
}

/// Copies of `chosen` carried by `call`; `None` when the call is missing.
pub fn allele_count(call: GenotypeCall, chosen: Allele) -> Option<u8> {
    call.alleles()
        .map(|(a, b)| u8::from(a == chosen) + u8::from(b == chosen))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Individual {
    pub id: String,
    pub family_id: String,
    pub father_id: Option<String>,
    pub mother_id: Option<String>,
    pub sex: Sex,
}

impl Individual {
    pub fn founder(family_id: &str, id: &str, sex: Sex) -> Self {
        Individual {
            id: id.to_string(),
            family_id: family_id.to_string(),
            father_id: None,
            mother_id: None,
            sex,
        }
    }

    pub fn child(family_id: &str, id: &str, father: &str, mother: &str, sex: Sex) -> Self {
        Individual {
            id: id.to_string(),
            family_id: family_id.to_string(),
            father_id: Some(father.to_string()),
            mother_id: Some(mother.to_string()),
            sex,
        }
    }
}

/// One family with parent links resolved to member indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Pedigree {
    family_id: String,
    members: Vec<Individual>,
    parents: Vec<Option<(usize, usize)>>,
    founders: Vec<usize>,
    order: Vec<usize>,
}

impl Pedigree {
    pub fn new(family_id: impl Into<String>, members: Vec<Individual>) -> Result<Self> {
        let family_id = family_id.into();
        let mut index = HashMap::with_capacity(members.len());
        for (i, m) in members.iter().enumerate() {
            if index.insert(m.id.as_str(), i).is_some() {
                return Err(Error::DuplicateId(m.id.clone()));
            }
        }
        let resolve = |m: &Individual, pid: &str| {
            index
                .get(pid)
                .copied()
                .ok_or_else(|| Error::DanglingParent {
                    family: family_id.clone(),
                    individual: m.id.clone(),
                    parent: pid.to_string(),
                })
        };
        let mut parents = Vec::with_capacity(members.len());
        for m in &members {
            let link = match (&m.father_id, &m.mother_id) {
                (None, None) => None,
                (Some(f), Some(mo)) => Some((resolve(m, f)?, resolve(m, mo)?)),
                _ => {
                    return Err(Error::HalfParented {
                        individual: m.id.clone(),
                    })
                }
            };
            parents.push(link);
        }
        let founders = (0..members.len()).filter(|&i| parents[i].is_none()).collect();

        // Kahn-style ordering: parents before children; leftovers mean a cycle.
        let n = members.len();
        let mut placed = vec![false; n];
        let mut order = Vec::with_capacity(n);
        while order.len() < n {
            let before = order.len();
            for i in 0..n {
                if placed[i] {
                    continue;
                }
                let ready = match parents[i] {
                    None => true,
                    Some((f, m)) => placed[f] && placed[m],
                };
                if ready {
                    placed[i] = true;
                    order.push(i);
                }
            }
            if order.len() == before {
                let stuck = (0..n).find(|&i| !placed[i]).unwrap_or(0);
                return Err(Error::CyclicPedigree {
                    family: family_id,
                    individual: members[stuck].id.clone(),
                });
            }
        }

        Ok(Pedigree {
            family_id,
            members,
            parents,
            founders,
            order,
        })
    }

    pub fn family_id(&self) -> &str {
        &self.family_id
    }

    pub fn members(&self) -> &[Individual] {
        &self.members
    }

    /// Family size.
    pub fn n(&self) -> usize {
        self.members.len()
    }

    /// Indices of members whose parents are not in the pedigree.
    pub fn founders(&self) -> &[usize] {
        &self.founders
    }

    pub fn nonfounders(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n()).filter(|&i| self.parents[i].is_some())
    }

    pub fn is_founder(&self, member: usize) -> bool {
        self.parents[member].is_none()
    }

    /// `(father, mother)` member indices.
    pub fn parents_of(&self, member: usize) -> Option<(usize, usize)> {
        self.parents[member]
    }

    /// Number of parent-offspring pairs.
    pub fn parent_offspring_pairs(&self) -> usize {
        2 * (self.n() - self.founders.len())
    }

    /// Member indices with every parent listed before its children.
    pub fn topological_order(&self) -> &[usize] {
        &self.order
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StudyMode {
    Family,
    CaseControl,
}

impl std::str::FromStr for StudyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "family" => Ok(StudyMode::Family),
            "case_control" | "case-control" => Ok(StudyMode::CaseControl),
            other => Err(Error::InvalidArgument(format!(
                "unknown mode {other:?}, expected family or case_control"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarkerData {
    pub marker_id: String,
    /// Calls by global individual index.
    pub calls: Vec<GenotypeCall>,
}

impl MarkerData {
    /// Distinct non-missing allele codes, ascending.
    pub fn observed_alleles(&self) -> Vec<Allele> {
        let mut out: Vec<Allele> = self
            .calls
            .iter()
            .filter_map(|c| c.alleles())
            .flat_map(|(a, b)| [a, b])
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Phenotypes by global individual index; `None` marks `NA`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct PhenotypeTable {
    pub names: Vec<String>,
    pub kinds: Vec<TraitKind>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl PhenotypeTable {
    pub fn column(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownTrait(name.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CovariateKind {
    Continuous,
    Categorical,
}

/// Covariates by global individual index. Categorical values are stored as the
/// index of their label in `labels[column]`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct CovariateTable {
    pub names: Vec<String>,
    pub kinds: Vec<CovariateKind>,
    pub labels: Vec<Vec<String>>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl CovariateTable {
    pub fn column(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownCovariate(name.to_string()))
    }

    /// Appends a continuous column.
    pub fn push_continuous(&mut self, name: &str, values: &[Option<f64>]) {
        self.names.push(name.to_string());
        self.kinds.push(CovariateKind::Continuous);
        self.labels.push(Vec::new());
        for (row, v) in self.values.iter_mut().zip(values) {
            row.push(*v);
        }
    }
}

/// Where an individual lives inside the cohort.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Slot {
    pub pedigree: usize,
    pub member: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cohort {
    pub mode: StudyMode,
    pedigrees: Vec<Pedigree>,
    slots: Vec<Slot>,
    offsets: Vec<usize>,
    index: HashMap<String, usize>,
    pub markers: Vec<MarkerData>,
    pub phenotypes: PhenotypeTable,
    pub covariates: Option<CovariateTable>,
}

impl Cohort {
    /// Links the tables; every table must have one row per individual in
    /// flattened pedigree order.
    pub fn new(
        mode: StudyMode,
        pedigrees: Vec<Pedigree>,
        markers: Vec<MarkerData>,
        phenotypes: PhenotypeTable,
        covariates: Option<CovariateTable>,
    ) -> Result<Self> {
        let mut slots = Vec::new();
        let mut offsets = Vec::with_capacity(pedigrees.len());
        let mut index = HashMap::new();
        for (p, ped) in pedigrees.iter().enumerate() {
            offsets.push(slots.len());
            for (m, ind) in ped.members().iter().enumerate() {
                if index.insert(ind.id.clone(), slots.len()).is_some() {
                    return Err(Error::DuplicateId(ind.id.clone()));
                }
                slots.push(Slot {
                    pedigree: p,
                    member: m,
                });
            }
        }
        let n = slots.len();
        for marker in &markers {
            if marker.calls.len() != n {
                return Err(Error::LengthMismatch {
                    left: marker.calls.len(),
                    right: n,
                });
            }
        }
        if phenotypes.values.len() != n {
            return Err(Error::LengthMismatch {
                left: phenotypes.values.len(),
                right: n,
            });
        }
        if let Some(cov) = &covariates {
            if cov.values.len() != n {
                return Err(Error::LengthMismatch {
                    left: cov.values.len(),
                    right: n,
                });
            }
        }
        Ok(Cohort {
            mode,
            pedigrees,
            slots,
            offsets,
            index,
            markers,
            phenotypes,
            covariates,
        })
    }

    pub fn pedigrees(&self) -> &[Pedigree] {
        &self.pedigrees
    }

    pub fn n_individuals(&self) -> usize {
        self.slots.len()
    }

    pub fn slot(&self, global: usize) -> Slot {
        self.slots[global]
    }

    pub fn individual(&self, global: usize) -> &Individual {
        let s = self.slots[global];
        &self.pedigrees[s.pedigree].members()[s.member]
    }

    pub fn global_index(&self, pedigree: usize, member: usize) -> usize {
        self.offsets[pedigree] + member
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownIndividual(id.to_string()))
    }

    /// Global indices of both parents, if the individual is a nonfounder.
    pub fn parents(&self, global: usize) -> Option<(usize, usize)> {
        let s = self.slots[global];
        self.pedigrees[s.pedigree]
            .parents_of(s.member)
            .map(|(f, m)| (self.global_index(s.pedigree, f), self.global_index(s.pedigree, m)))
    }

    pub fn is_founder(&self, global: usize) -> bool {
        self.parents(global).is_none()
    }

    pub fn marker_index(&self, marker_id: &str) -> Result<usize> {
        self.markers
            .iter()
            .position(|m| m.marker_id == marker_id)
            .ok_or_else(|| Error::UnknownMarker(marker_id.to_string()))
    }

    pub fn marker(&self, marker_id: &str) -> Result<&MarkerData> {
        Ok(&self.markers[self.marker_index(marker_id)?])
    }

    /// Chosen-allele copy numbers for one marker, by global index.
    pub fn allele_counts(&self, marker: usize, chosen: Allele) -> Vec<Option<u8>> {
        self.markers[marker]
            .calls
            .iter()
            .map(|&c| allele_count(c, chosen))
            .collect()
    }

    /// Least frequent observed allele (ties go to the smaller code). Counted
    /// over founders in family mode and over everyone otherwise.
    pub fn minor_allele(&self, marker: usize) -> Option<Allele> {
        let mut counts: Vec<(Allele, usize)> = Vec::new();
        for (g, call) in self.markers[marker].calls.iter().enumerate() {
            if self.mode == StudyMode::Family && !self.is_founder(g) {
                continue;
            }
            if let Some((a, b)) = call.alleles() {
                for allele in [a, b] {
                    match counts.iter_mut().find(|(x, _)| *x == allele) {
                        Some(entry) => entry.1 += 1,
                        None => counts.push((allele, 1)),
                    }
                }
            }
        }
        counts.sort_unstable();
        counts
            .iter()
            .min_by_key(|&&(allele, n)| (n, allele))
            .map(|&(allele, _)| allele)
    }

    /// Trait vector for the selected phenotype columns; `None` if any is `NA`.
    pub fn trait_vector(&self, global: usize, columns: &[usize]) -> Option<TraitVector> {
        let row = &self.phenotypes.values[global];
        let components = columns
            .iter()
            .map(|&c| {
                row[c].map(|value| TraitComponent {
                    value,
                    kind: self.phenotypes.kinds[c],
                })
            })
            .collect::<Option<Vec<_>>>()?;
        Some(TraitVector { components })
    }

    /// Covariate vector for the selected covariate columns; `None` if any is
    /// `NA` or the cohort has no covariates.
    pub fn covariate_vector(&self, global: usize, columns: &[usize]) -> Option<CovariateVector> {
        let cov = self.covariates.as_ref()?;
        let row = &cov.values[global];
        let mut z_co = Vec::new();
        let mut z_ca = Vec::new();
        for &c in columns {
            let v = row[c]?;
            match cov.kinds[c] {
                CovariateKind::Continuous => z_co.push(v),
                CovariateKind::Categorical => z_ca.push(v as u32),
            }
        }
        Some(CovariateVector { z_co, z_ca })
    }

    pub fn trait_columns(&self, names: &[String]) -> Result<Vec<usize>> {
        names.iter().map(|n| self.phenotypes.column(n)).collect()
    }

    pub fn covariate_columns(&self, names: &[String]) -> Result<Vec<usize>> {
        let cov = self
            .covariates
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("cohort has no covariates".into()))?;
        names.iter().map(|n| cov.column(n)).collect()
    }

    /// Re-expresses the cohort as unrelated singletons: parent links are
    /// dropped and every individual becomes its own one-member pedigree.
    pub fn into_case_control(self) -> Result<Cohort> {
        let mut pedigrees = Vec::with_capacity(self.slots.len());
        for ped in &self.pedigrees {
            for ind in ped.members() {
                let single = Individual {
                    father_id: None,
                    mother_id: None,
                    ..ind.clone()
                };
                pedigrees.push(Pedigree::new(ind.family_id.clone(), vec![single])?);
            }
        }
        Cohort::new(
            StudyMode::CaseControl,
            pedigrees,
            self.markers,
            self.phenotypes,
            self.covariates,
        )
    }
}

/// A genotype that cannot arise from the parents' genotypes.
#[derive(Clone, Debug, PartialEq)]
pub struct MendelianViolation {
    pub family_id: String,
    pub individual_id: String,
    pub marker_id: String,
    pub child: GenotypeCall,
    pub father: GenotypeCall,
    pub mother: GenotypeCall,
}

/// True when one allele of `child` can come from the father and the other
/// from the mother.
pub fn transmission_possible(father: GenotypeCall, mother: GenotypeCall, child: GenotypeCall) -> bool {
    match child.alleles() {
        None => true,
        Some((x, y)) => {
            (father.contains(x) && mother.contains(y)) || (father.contains(y) && mother.contains(x))
        }
    }
}

/// Every genotyped nonfounder with both parents genotyped whose call is
/// incompatible with the parental calls.
pub fn validate_mendelian(cohort: &Cohort, marker_id: &str) -> Result<Vec<MendelianViolation>> {
    let marker = cohort.marker(marker_id)?;
    let mut out = Vec::new();
    for g in 0..cohort.n_individuals() {
        let Some((f, m)) = cohort.parents(g) else {
            continue;
        };
        let (child, father, mother) = (marker.calls[g], marker.calls[f], marker.calls[m]);
        if child.is_missing() || father.is_missing() || mother.is_missing() {
            continue;
        }
        if !transmission_possible(father, mother, child) {
            let ind = cohort.individual(g);
            out.push(MendelianViolation {
                family_id: ind.family_id.clone(),
                individual_id: ind.id.clone(),
                marker_id: marker_id.to_string(),
                child,
                father,
                mother,
            });
        }
    }
    Ok(out)
}
