//! DNA alignments: FASTA ingestion, validation and site-pattern compression.

use std::collections::HashMap;
use std::collections::HashSet;

use serde::Serialize;

use crate::error::{Error, Result};

/// Character code for a gap, `N`, `?` or any IUPAC ambiguity symbol.
pub const MISSING: u8 = 4;

/// Number of observable nucleotide states (A, C, G, T).
pub const N_STATES: usize = 4;

/// Map an input byte to a state code. Anything outside ACGT is missing.
pub fn encode_base(b: u8) -> u8 {
    match b.to_ascii_uppercase() {
        b'A' => 0,
        b'C' => 1,
        b'G' => 2,
        b'T' => 3,
        _ => MISSING,
    }
}

pub fn decode_base(code: u8) -> char {
    match code {
        0 => 'A',
        1 => 'C',
        2 => 'G',
        3 => 'T',
        _ => '-',
    }
}

/// An `N x M` alignment together with its unique site patterns.
///
/// Sites are stored column-major: `sites[m][i]` is the code of taxon `i` at
/// site `m`. Unique patterns are kept in first-occurrence order.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    taxa: Vec<String>,
    sites: Vec<Vec<u8>>,
    patterns: Vec<Vec<u8>>,
    pattern_index: Vec<usize>,
    pattern_weights: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AlignmentSummary {
    pub taxa: Vec<String>,
    pub n_sites: usize,
    pub n_patterns: usize,
}

impl Alignment {
    /// Build an alignment from per-taxon rows of state codes.
    pub fn from_rows(taxa: Vec<String>, rows: Vec<Vec<u8>>) -> Result<Self> {
        if taxa.len() != rows.len() {
            return Err(Error::Alignment(format!(
                "{} taxa but {} rows",
                taxa.len(),
                rows.len()
            )));
        }
        let m = rows.first().map_or(0, Vec::len);
        for (name, row) in taxa.iter().zip(&rows) {
            if row.len() != m {
                return Err(Error::Alignment(format!(
                    "taxon `{name}` has {} sites, expected {m}",
                    row.len()
                )));
            }
        }
        let sites = (0..m)
            .map(|j| rows.iter().map(|r| r[j]).collect())
            .collect();
        Self::from_columns(taxa, sites)
    }

    /// Build an alignment from site columns. `M = 0` is permitted.
    pub fn from_columns(taxa: Vec<String>, sites: Vec<Vec<u8>>) -> Result<Self> {
        validate_taxa(&taxa)?;
        for (j, col) in sites.iter().enumerate() {
            if col.len() != taxa.len() {
                return Err(Error::Alignment(format!(
                    "site {j} has {} entries, expected {}",
                    col.len(),
                    taxa.len()
                )));
            }
            if let Some(&bad) = col.iter().find(|&&c| c > MISSING) {
                return Err(Error::Alignment(format!("site {j}: invalid code {bad}")));
            }
        }
        let mut lookup: HashMap<&[u8], usize> = HashMap::new();
        let mut patterns: Vec<Vec<u8>> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        let mut index = Vec::with_capacity(sites.len());
        for col in &sites {
            let id = *lookup.entry(col.as_slice()).or_insert_with(|| {
                patterns.push(col.clone());
                weights.push(0.0);
                patterns.len() - 1
            });
            weights[id] += 1.0;
            index.push(id);
        }
        Ok(Self {
            taxa,
            sites,
            patterns,
            pattern_index: index,
            pattern_weights: weights,
        })
    }

    /// An alignment with no sites; its likelihood is identically one.
    pub fn empty(taxa: Vec<String>) -> Result<Self> {
        Self::from_columns(taxa, Vec::new())
    }

    pub fn n_taxa(&self) -> usize {
        self.taxa.len()
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn n_patterns(&self) -> usize {
        self.patterns.len()
    }

    pub fn taxa(&self) -> &[String] {
        &self.taxa
    }

    pub fn sites(&self) -> &[Vec<u8>] {
        &self.sites
    }

    pub fn patterns(&self) -> &[Vec<u8>] {
        &self.patterns
    }

    pub fn pattern_weights(&self) -> &[f64] {
        &self.pattern_weights
    }

    pub fn pattern_index(&self) -> &[usize] {
        &self.pattern_index
    }

    /// Row of taxon `i` as state codes.
    pub fn row(&self, i: usize) -> Vec<u8> {
        self.sites.iter().map(|c| c[i]).collect()
    }

    /// Same sites with every column treated as its own pattern. Only useful
    /// for debugging the compression path.
    pub fn uncompressed(&self) -> Self {
        Self {
            taxa: self.taxa.clone(),
            sites: self.sites.clone(),
            patterns: self.sites.clone(),
            pattern_index: (0..self.sites.len()).collect(),
            pattern_weights: vec![1.0; self.sites.len()],
        }
    }

    /// Remove every column whose non-missing characters all agree (including
    /// columns with a single observed character or none at all).
    pub fn drop_constant_sites(&self) -> Self {
        let kept: Vec<Vec<u8>> = self
            .sites
            .iter()
            .filter(|col| {
                let mut observed = col.iter().filter(|&&c| c != MISSING);
                match observed.next() {
                    None => false,
                    Some(&first) => observed.any(|&c| c != first),
                }
            })
            .cloned()
            .collect();
        if kept.is_empty() {
            log::warn!("every site is constant; the alignment is now empty");
        }
        Self::from_columns(self.taxa.clone(), kept).expect("subset of a valid alignment")
    }

    /// Restrict to the named taxa, in the given order.
    pub fn subset_taxa(&self, names: &[String]) -> Result<Self> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.taxa
                    .iter()
                    .position(|t| t == n)
                    .ok_or_else(|| Error::UnknownTaxon(n.clone()))
            })
            .collect::<Result<_>>()?;
        let sites = self
            .sites
            .iter()
            .map(|c| idx.iter().map(|&i| c[i]).collect())
            .collect();
        Self::from_columns(names.to_vec(), sites)
    }

    pub fn summary(&self) -> AlignmentSummary {
        AlignmentSummary {
            taxa: self.taxa.clone(),
            n_sites: self.n_sites(),
            n_patterns: self.n_patterns(),
        }
    }

    /// FASTA text, one sequence line per record; missing states become `-`.
    pub fn to_fasta(&self) -> String {
        let mut out = String::new();
        for (i, name) in self.taxa.iter().enumerate() {
            out.push('>');
            out.push_str(name);
            out.push('\n');
            out.extend(self.sites.iter().map(|c| decode_base(c[i])));
            out.push('\n');
        }
        out
    }
}

fn validate_taxa(taxa: &[String]) -> Result<()> {
    if taxa.len() < 2 {
        return Err(Error::Alignment(format!(
            "need at least 2 taxa, got {}",
            taxa.len()
        )));
    }
    let mut seen = HashSet::new();
    for t in taxa {
        if t.is_empty() {
            return Err(Error::Alignment("empty taxon name".into()));
        }
        if !seen.insert(t.as_str()) {
            return Err(Error::Alignment(format!("duplicate taxon `{t}`")));
        }
    }
    Ok(())
}

/// Parse FASTA text. Sequence lines may wrap; characters are case-insensitive
/// and everything outside ACGT becomes [`MISSING`].
pub fn parse_fasta(text: &[u8]) -> Result<Alignment> {
    let text = String::from_utf8_lossy(text);
    // (name, header line, residues)
    let mut records: Vec<(String, usize, Vec<u8>)> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('>') {
            let name = header.split_whitespace().next().unwrap_or("").to_string();
            if name.is_empty() {
                return Err(Error::Fasta {
                    line: line_no,
                    message: "empty taxon name".into(),
                });
            }
            if let Some(prev) = seen.insert(name.clone(), line_no) {
                return Err(Error::Fasta {
                    line: line_no,
                    message: format!("duplicate taxon `{name}` (first defined at line {prev})"),
                });
            }
            records.push((name, line_no, Vec::new()));
        } else {
            let Some(rec) = records.last_mut() else {
                return Err(Error::Fasta {
                    line: line_no,
                    message: "sequence data before the first `>` header".into(),
                });
            };
            rec.2.extend(
                line.bytes()
                    .filter(|b| !b.is_ascii_whitespace())
                    .map(encode_base),
            );
        }
    }
    if records.is_empty() {
        return Err(Error::Fasta {
            line: 0,
            message: "empty input".into(),
        });
    }
    let m = records[0].2.len();
    for (name, line, seq) in &records {
        if seq.len() != m {
            return Err(Error::Fasta {
                line: *line,
                message: format!(
                    "taxon `{name}` has {} sites but `{}` has {m}",
                    seq.len(),
                    records[0].0
                ),
            });
        }
    }
    if m == 0 {
        return Err(Error::Fasta {
            line: records[0].1,
            message: "sequences are empty".into(),
        });
    }
    if records.len() < 2 {
        return Err(Error::Fasta {
            line: records[0].1,
            message: "need at least 2 taxa".into(),
        });
    }
    let (taxa, rows): (Vec<String>, Vec<Vec<u8>>) =
        records.into_iter().map(|(n, _, s)| (n, s)).unzip();
    Alignment::from_rows(taxa, rows)
}
