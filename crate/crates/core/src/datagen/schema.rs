use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::DatagenError;
use crate::store::{Category, TravelMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttrKind {
    Location,
    Category,
    Mode,
    Distance,
    Time,
}

impl AttrKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Location => "location",
            Self::Category => "category",
            Self::Mode => "mode",
            Self::Distance => "distance",
            Self::Time => "time",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub kind: AttrKind,
    /// Travel mode a distance or time column refers to.
    #[serde(default)]
    pub mode: Option<TravelMode>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableSchema {
    pub name: String,
    /// Service category every row of the table refers to.
    #[serde(default)]
    pub category: Option<Category>,
    pub attributes: Vec<Attribute>,
}

impl TableSchema {
    pub fn validate(&self) -> Result<(), DatagenError> {
        let mut seen = BTreeSet::new();
        for a in &self.attributes {
            if !seen.insert(a.name.to_lowercase()) {
                return Err(DatagenError::Schema(format!("duplicate attribute {:?} in {}", a.name, self.name)));
            }
        }
        if self.attributes.is_empty() {
            return Err(DatagenError::Schema(format!("table {} has no attributes", self.name)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectionFilter {
    /// Attribute names removed before enumeration.
    #[serde(default)]
    pub deny: Vec<String>,
    /// When non-empty, only these attribute sets survive.
    #[serde(default)]
    pub allow: Vec<Vec<String>>,
}

/// Tables plus the reviewed projection filter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaFile {
    pub tables: Vec<TableSchema>,
    #[serde(default)]
    pub filter: ProjectionFilter,
}

impl SchemaFile {
    pub fn parse(text: &str) -> Result<Self, DatagenError> {
        let s: Self = toml::from_str(text).map_err(|e| DatagenError::Schema(e.to_string()))?;
        for t in &s.tables {
            t.validate()?;
        }
        Ok(s)
    }

    /// Surviving projections of every table, in table order.
    pub fn projections(&self) -> Result<Vec<Projection>, DatagenError> {
        let mut out = Vec::new();
        for t in &self.tables {
            match enumerate_projections(t, &self.filter) {
                Ok(p) => out.extend(p),
                Err(DatagenError::ConfigTooRestrictive(_)) => {}
                Err(e) => return Err(e),
            }
        }
        if out.is_empty() {
            return Err(DatagenError::ConfigTooRestrictive("no table has a surviving projection".into()));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Projection {
    pub table: String,
    /// Attribute names in schema order.
    pub attributes: Vec<String>,
    pub kinds: Vec<AttrKind>,
    /// Indices (within the same table) of surviving projections this one
    /// strictly contains.
    pub subsets: Vec<usize>,
}

impl Projection {
    pub fn is_superprojection(&self) -> bool {
        !self.subsets.is_empty()
    }

    /// Attribute kinds as a sorted multiset.
    pub fn shape(&self) -> Vec<AttrKind> {
        let mut k = self.kinds.clone();
        k.sort();
        k
    }
}

impl std::fmt::Display for Projection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "pi[{}]({})", self.attributes.join(","), self.table)
    }
}

fn key(names: &[String]) -> BTreeSet<String> {
    names.iter().map(|n| n.to_lowercase()).collect()
}

/// All non-empty attribute subsets after the deny list, restricted to the
/// allow list when one is given, with containment annotated.
pub fn enumerate_projections(schema: &TableSchema, filter: &ProjectionFilter) -> Result<Vec<Projection>, DatagenError> {
    schema.validate()?;
    let deny = key(&filter.deny);
    let attrs: Vec<&Attribute> =
        schema.attributes.iter().filter(|a| !deny.contains(&a.name.to_lowercase())).collect();
    if attrs.len() >= 20 {
        return Err(DatagenError::Schema(format!("table {} has too many attributes to enumerate", schema.name)));
    }
    let allow: Vec<BTreeSet<String>> = filter.allow.iter().map(|s| key(s)).collect();

    let mut masks = Vec::new();
    for mask in 1u32..(1 << attrs.len()) {
        let names: Vec<String> =
            (0..attrs.len()).filter(|i| mask & (1 << i) != 0).map(|i| attrs[i].name.clone()).collect();
        if allow.is_empty() || allow.contains(&key(&names)) {
            masks.push(mask);
        }
    }
    // Smaller subsets first.
    masks.sort_by_key(|m| (m.count_ones(), *m));
    if masks.is_empty() {
        return Err(DatagenError::ConfigTooRestrictive(format!("no projection of {} survives the filter", schema.name)));
    }

    Ok(masks
        .iter()
        .map(|&mask| {
            let idx: Vec<usize> = (0..attrs.len()).filter(|i| mask & (1 << i) != 0).collect();
            Projection {
                table: schema.name.clone(),
                attributes: idx.iter().map(|&i| attrs[i].name.clone()).collect(),
                kinds: idx.iter().map(|&i| attrs[i].kind).collect(),
                subsets: masks
                    .iter()
                    .enumerate()
                    .filter(|(_, &m)| m != mask && m & mask == m)
                    .map(|(j, _)| j)
                    .collect(),
            }
        })
        .collect())
}
