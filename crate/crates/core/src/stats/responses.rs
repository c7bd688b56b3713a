//! Reader-study response records and their CSV form.
//!
//! Header: `reader_id,item_id,truth,choice,lead_time_s,comment`, UTF-8 with
//! RFC 4180 quoting. An empty comment field reads back as no comment.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::StatsError;

pub const CSV_HEADER: [&str; 6] = ["reader_id", "item_id", "truth", "choice", "lead_time_s", "comment"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truth {
    Real,
    Synthetic,
}

impl fmt::Display for Truth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Truth::Real => "real",
            Truth::Synthetic => "synthetic",
        })
    }
}

/// The four allowed answers. There is deliberately no neutral option.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Choice {
    DefinitelyReal,
    MaybeReal,
    MaybeSynthetic,
    DefinitelySynthetic,
}

impl Choice {
    pub const ALL: [Choice; 4] = [
        Choice::DefinitelyReal,
        Choice::MaybeReal,
        Choice::MaybeSynthetic,
        Choice::DefinitelySynthetic,
    ];

    /// The answer with its confidence qualifier dropped.
    pub fn called(self) -> Truth {
        match self {
            Choice::DefinitelyReal | Choice::MaybeReal => Truth::Real,
            Choice::MaybeSynthetic | Choice::DefinitelySynthetic => Truth::Synthetic,
        }
    }

    pub fn is_definite(self) -> bool {
        matches!(self, Choice::DefinitelyReal | Choice::DefinitelySynthetic)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Choice::DefinitelyReal => "definitely_real",
            Choice::MaybeReal => "maybe_real",
            Choice::MaybeSynthetic => "maybe_synthetic",
            Choice::DefinitelySynthetic => "definitely_synthetic",
        }
    }
}

impl fmt::Display for Choice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Choice {
    type Err = StatsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Choice::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| StatsError::InvalidChoice(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub reader_id: String,
    pub item_id: String,
    pub truth: Truth,
    pub choice: Choice,
    pub lead_time_s: f64,
    #[serde(default, deserialize_with = "empty_as_none")]
    pub comment: Option<String>,
}

fn empty_as_none<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<String>, D::Error> {
    let s: Option<String> = Option::deserialize(d)?;
    Ok(s.filter(|s| !s.is_empty()))
}

/// Rejects duplicate `(reader_id, item_id)` pairs and invalid lead times.
pub fn check_records(records: &[ResponseRecord]) -> Result<(), StatsError> {
    let mut seen = HashSet::new();
    for r in records {
        if !seen.insert((r.reader_id.as_str(), r.item_id.as_str())) {
            return Err(StatsError::DuplicateResponse {
                reader_id: r.reader_id.clone(),
                item_id: r.item_id.clone(),
            });
        }
        if !(r.lead_time_s.is_finite() && r.lead_time_s >= 0.0) {
            return Err(StatsError::InvalidLeadTime {
                reader_id: r.reader_id.clone(),
                item_id: r.item_id.clone(),
                value: r.lead_time_s,
            });
        }
    }
    Ok(())
}

pub fn write_responses_csv<W: Write>(out: W, records: &[ResponseRecord]) -> Result<(), StatsError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.reader_id.as_str(),
            r.item_id.as_str(),
            &r.truth.to_string(),
            r.choice.as_str(),
            &r.lead_time_s.to_string(),
            r.comment.as_deref().unwrap_or(""),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_responses_csv<R: Read>(input: R) -> Result<Vec<ResponseRecord>, StatsError> {
    let mut reader = csv::Reader::from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header != CSV_HEADER {
        return Err(StatsError::BadHeader(header.join(",")));
    }
    let records = reader
        .deserialize()
        .collect::<Result<Vec<ResponseRecord>, _>>()?;
    check_records(&records)?;
    Ok(records)
}
