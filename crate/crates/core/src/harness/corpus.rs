use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::textcore::{split_symbols, Fingerprint};
use crate::treebank::{parse_top, tree_to_api, ApiCall, ParseTree};

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    /// Position in the source corpus; split manifests refer to it.
    pub id: usize,
    pub domain: String,
    pub utterance: Vec<String>,
    pub tree: ParseTree,
    pub api: ApiCall,
}

impl Record {
    pub fn new(id: usize, domain: &str, utterance: &str, tree: ParseTree) -> Self {
        let api = tree_to_api(&tree);
        Self {
            id,
            domain: domain.to_string(),
            utterance: split_symbols(utterance).into_iter().map(str::to_string).collect(),
            tree,
            api,
        }
    }

    pub fn text(&self) -> String {
        self.utterance.join(" ")
    }

    pub fn words(&self) -> Vec<&str> {
        self.utterance.iter().map(String::as_str).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub records: Vec<Record>,
    pub provenance: Option<Provenance>,
}

impl Corpus {
    pub fn new(records: Vec<Record>) -> Self {
        Self {
            records,
            provenance: None,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records at the given positions, renumbered from zero.
    pub fn subset(&self, ids: &[usize]) -> Corpus {
        Corpus::new(
            ids.iter()
                .enumerate()
                .map(|(i, &id)| Record {
                    id: i,
                    ..self.records[id].clone()
                })
                .collect(),
        )
    }

    /// Pairs for the datastore and demo pool builders.
    pub fn examples(&self) -> Vec<(Vec<String>, ApiCall)> {
        self.records.iter().map(|r| (r.utterance.clone(), r.api.clone())).collect()
    }

    pub fn domains(&self) -> Vec<&str> {
        let mut seen: Vec<&str> = Vec::new();
        for r in &self.records {
            if !seen.contains(&r.domain.as_str()) {
                seen.push(&r.domain);
            }
        }
        seen
    }

    pub fn write_tsv(&self, mut out: impl Write) -> std::io::Result<()> {
        for r in &self.records {
            writeln!(out, "{}\t{}\t{}", r.domain, r.text(), r.tree)?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), HarnessError> {
        let mut buf = Vec::new();
        self.write_tsv(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }
}

fn looks_like_header(line: &str) -> bool {
    let first = line.split('\t').next().unwrap_or("").trim().to_ascii_lowercase();
    first == "domain"
}

/// Parses `domain<TAB>utterance<TAB>semantic_parse` rows. A leading
/// header row and blank lines are skipped; `domain` keeps matching rows
/// only (case-insensitive).
pub fn read_topv2(reader: impl BufRead, domain: Option<&str>) -> Result<Corpus, HarnessError> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        if line.trim().is_empty() || (i == 0 && looks_like_header(&line)) {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 3 {
            return Err(HarnessError::BadRow {
                line: line_no,
                reason: format!("expected 3 tab-separated columns, found {}", cols.len()),
            });
        }
        let (dom, utterance, parse) = (cols[0].trim(), cols[1].trim(), cols[2].trim());
        if dom.is_empty() || utterance.is_empty() {
            return Err(HarnessError::BadRow {
                line: line_no,
                reason: "empty domain or utterance".into(),
            });
        }
        let tree = parse_top(parse).map_err(|e| HarnessError::BadRow {
            line: line_no,
            reason: e.to_string(),
        })?;
        if domain.is_some_and(|d| !d.eq_ignore_ascii_case(dom)) {
            continue;
        }
        records.push(Record::new(records.len(), dom, utterance, tree));
    }
    Ok(Corpus::new(records))
}

pub fn load_topv2(path: impl AsRef<Path>, domain: Option<&str>) -> Result<Corpus, HarnessError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let mut corpus = read_topv2(BufReader::new(bytes.as_slice()), domain)?;
    corpus.provenance = Some(Provenance {
        path: path.display().to_string(),
        sha256: Fingerprint::of(&bytes).to_string(),
    });
    Ok(corpus)
}
