use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::Utc;
use serde::{Deserialize, Serialize};

use super::{CnType, HsCnPair, Origin, PairId, PairState, Source};
use crate::error::{Error, Result};

/// One line of a dataset file. Only `hs` and `cn` are required on import;
/// missing ids are assigned, missing sources default to `seed_dataset`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<PairId>,
    pub hs: String,
    pub cn: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<Source>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cn_type: Option<CnType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<PairState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<Origin>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replaces: Option<PairId>,
}

impl DatasetRecord {
    pub fn into_pair(self, fallback_id: impl FnOnce() -> PairId) -> Result<HsCnPair> {
        let pair = HsCnPair {
            id: self.id.unwrap_or_else(fallback_id),
            hate_speech: self.hs,
            counter_narrative: self.cn,
            source: self.source.unwrap_or(Source::SeedDataset),
            cn_type: self.cn_type,
            state: self.state.unwrap_or(PairState::Candidate),
            created_at: Utc::now(),
            replaces: self.replaces,
            origin: self.origin,
        };
        pair.validate()?;
        Ok(pair)
    }
}

impl From<&HsCnPair> for DatasetRecord {
    fn from(p: &HsCnPair) -> Self {
        Self {
            id: Some(p.id.clone()),
            hs: p.hate_speech.clone(),
            cn: p.counter_narrative.clone(),
            source: Some(p.source),
            cn_type: p.cn_type,
            state: Some(p.state),
            origin: p.origin,
            replaces: p.replaces.clone(),
        }
    }
}

pub fn read_records(reader: impl BufRead) -> Result<Vec<DatasetRecord>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::CorruptRecord {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Reads a line-delimited dataset. Records without ids get `{stem}-{line}`.
pub fn read_dataset(path: &Path) -> Result<Vec<HsCnPair>> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("pair")
        .to_owned();
    let records = read_records(BufReader::new(File::open(path)?))?;
    records
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.into_pair(|| PairId::new(format!("{stem}-{i}"))))
        .collect()
}

pub fn write_records<'a>(
    mut writer: impl Write,
    pairs: impl IntoIterator<Item = &'a HsCnPair>,
) -> Result<()> {
    for p in pairs {
        serde_json::to_writer(&mut writer, &DatasetRecord::from(p))?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_dataset<'a>(path: &Path, pairs: impl IntoIterator<Item = &'a HsCnPair>) -> Result<()> {
    write_records(BufWriter::new(File::create(path)?), pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_record_gets_defaults() {
        let recs = read_records(r#"{"hs":"h","cn":"c"}"#.as_bytes()).unwrap();
        let p = recs[0].clone().into_pair(|| PairId::new("auto")).unwrap();
        assert_eq!(p.id.as_str(), "auto");
        assert_eq!(p.source, Source::SeedDataset);
        assert_eq!(p.state, PairState::Candidate);
    }

    #[test]
    fn corrupt_line_reports_line_number() {
        let err = read_records("{\"hs\":\"h\",\"cn\":\"c\"}\n\nnot json\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::CorruptRecord { line: 3, .. }));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seed.jsonl");
        let pairs = vec![
            HsCnPair::new(PairId::new("a"), "h1", "c1", Source::SeedDataset)
                .unwrap()
                .with_cn_type(CnType::Fact),
            HsCnPair::new(PairId::new("b"), "h2", "c2", Source::Generated).unwrap(),
        ];
        write_dataset(&path, &pairs).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().next().unwrap().contains(r#""cn_type":"fact""#));
        let back = read_dataset(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].cn_type, Some(CnType::Fact));
        assert_eq!(back[1].source, Source::Generated);
    }
}
