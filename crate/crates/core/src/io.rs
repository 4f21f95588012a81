//! Line-record and document file formats.
//!
//! Record files are JSON lines: a header line naming the format kind and
//! version (plus the effective run config), then one record per line.
//! Documents are a single JSON object with the same header fields and a
//! `data` payload. Floats are written in shortest round-trip form, so a
//! save/load cycle reproduces every value bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::dataset::{Episode, RecEpisode, RecStep, Step};
use crate::error::{Error, Result};

pub const FORMAT: &str = "ocr";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub format: String,
    pub kind: String,
    pub version: u32,
    #[serde(default)]
    pub config: Value,
}

impl Header {
    pub fn new(kind: &str, config: Value) -> Self {
        Self {
            format: FORMAT.into(),
            kind: kind.into(),
            version: VERSION,
            config,
        }
    }

    fn check(&self, path: &Path, kind: &str) -> Result<()> {
        if self.format != FORMAT || self.version != VERSION {
            return Err(Error::Schema {
                path: path.into(),
                msg: format!(
                    "expected format {FORMAT} v{VERSION}, found {} v{}",
                    self.format, self.version
                ),
            });
        }
        if self.kind != kind {
            return Err(Error::Schema {
                path: path.into(),
                msg: format!("expected kind {kind:?}, found {:?}", self.kind),
            });
        }
        Ok(())
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn json_err(path: &Path, e: serde_json::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

/// Writes a header line followed by one JSON line per record.
pub fn write_records<T, I>(path: &Path, kind: &str, config: &Value, records: I) -> Result<()>
where
    T: Serialize,
    I: IntoIterator<Item = T>,
{
    let mut w = create(path)?;
    serde_json::to_writer(&mut w, &Header::new(kind, config.clone())).map_err(|e| json_err(path, e))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    for r in records {
        serde_json::to_writer(&mut w, &r).map_err(|e| json_err(path, e))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a record file written by [`write_records`]. Blank lines are
/// ignored; any malformed line is reported with its 1-based line number.
pub fn read_records<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<(Header, Vec<T>)> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut header: Option<Header> = None;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |e: serde_json::Error| Error::Parse {
            path: path.into(),
            line: i + 1,
            msg: e.to_string(),
        };
        match &header {
            None => {
                let h: Header = serde_json::from_str(&line).map_err(|e| Error::Schema {
                    path: path.into(),
                    msg: format!("line {}: bad header: {e}", i + 1),
                })?;
                h.check(path, kind)?;
                header = Some(h);
            }
            Some(_) => out.push(serde_json::from_str(&line).map_err(parse_err)?),
        }
    }
    match header {
        Some(h) if !out.is_empty() => Ok((h, out)),
        _ => Err(Error::NoRecords { path: path.into() }),
    }
}

#[derive(Serialize, Deserialize)]
struct Document<T> {
    #[serde(flatten)]
    header: Header,
    data: T,
}

#[derive(Deserialize)]
struct HeaderOnly {
    format: String,
    kind: String,
    version: u32,
}

/// Writes a single-object document.
pub fn write_document<T: Serialize>(path: &Path, kind: &str, config: &Value, data: &T) -> Result<()> {
    #[derive(Serialize)]
    struct Out<'a, T> {
        format: &'a str,
        kind: &'a str,
        version: u32,
        config: &'a Value,
        data: &'a T,
    }
    let mut w = create(path)?;
    let doc = Out {
        format: FORMAT,
        kind,
        version: VERSION,
        config,
        data,
    };
    serde_json::to_writer(&mut w, &doc).map_err(|e| json_err(path, e))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a document written by [`write_document`].
pub fn read_document<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<(Header, T)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.trim().is_empty() {
        return Err(Error::NoRecords { path: path.into() });
    }
    let h: HeaderOnly = serde_json::from_str(&text).map_err(|e| Error::Schema {
        path: path.into(),
        msg: format!("bad header: {e}"),
    })?;
    Header {
        format: h.format,
        kind: h.kind,
        version: h.version,
        config: Value::Null,
    }
    .check(path, kind)?;
    let doc: Document<T> = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.into(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    Ok((doc.header, doc.data))
}

struct HashWriter<'a>(&'a mut Sha256);

impl Write for HashWriter<'_> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.update(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

/// Hex SHA-256 of the JSON encoding of each part, in order.
pub fn digest(parts: &[&dyn ToJson]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        p.to_json(&mut HashWriter(&mut h));
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

/// Object-safe JSON encoding, so differently typed values can be hashed
/// together.
pub trait ToJson {
    fn to_json(&self, w: &mut dyn Write);
}

impl<T: Serialize + ?Sized> ToJson for T {
    fn to_json(&self, w: &mut dyn Write) {
        serde_json::to_writer(w, self).expect("in-memory JSON encoding cannot fail");
    }
}

/// Episode-like containers stored one step per line.
pub trait EpisodeRecords: Sized {
    type Step: Serialize + DeserializeOwned;
    const KIND: &'static str;
    fn steps(&self) -> &[Self::Step];
    fn from_steps(steps: Vec<Self::Step>) -> Self;
}

impl EpisodeRecords for Episode {
    type Step = Step;
    const KIND: &'static str = "episodes";
    fn steps(&self) -> &[Step] {
        &self.steps
    }
    fn from_steps(steps: Vec<Step>) -> Self {
        Episode { steps }
    }
}

impl EpisodeRecords for RecEpisode {
    type Step = RecStep;
    const KIND: &'static str = "rec_episodes";
    fn steps(&self) -> &[RecStep] {
        &self.steps
    }
    fn from_steps(steps: Vec<RecStep>) -> Self {
        RecEpisode { steps }
    }
}

#[derive(Serialize)]
struct StepOut<'a, S> {
    episode: usize,
    t: usize,
    #[serde(flatten)]
    step: &'a S,
}

#[derive(Deserialize)]
struct StepIn<S> {
    episode: usize,
    t: usize,
    #[serde(flatten)]
    step: S,
}

pub fn save_episodes<E: EpisodeRecords>(path: &Path, episodes: &[E], config: &Value) -> Result<()> {
    let records = episodes.iter().enumerate().flat_map(|(episode, ep)| {
        ep.steps()
            .iter()
            .enumerate()
            .map(move |(t, step)| StepOut { episode, t, step })
    });
    write_records(path, E::KIND, config, records)
}

pub fn load_episodes<E: EpisodeRecords>(path: &Path) -> Result<(Header, Vec<E>)> {
    let (header, rows) = read_records::<StepIn<E::Step>>(path, E::KIND)?;
    let mut episodes: Vec<Vec<E::Step>> = Vec::new();
    for (i, row) in rows.into_iter().enumerate() {
        let fresh = row.episode == episodes.len() && row.t == 0;
        let next = episodes
            .last()
            .is_some_and(|s| row.episode + 1 == episodes.len() && row.t == s.len());
        if fresh {
            episodes.push(vec![row.step]);
        } else if next {
            episodes.last_mut().unwrap().push(row.step);
        } else {
            return Err(Error::Parse {
                path: path.into(),
                line: i + 2,
                msg: format!("out-of-order record (episode {}, t {})", row.episode, row.t),
            });
        }
    }
    Ok((header, episodes.into_iter().map(E::from_steps).collect()))
}
