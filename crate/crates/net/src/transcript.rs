//! Line-delimited JSON record of every message a party sent or received.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::message::{Message, Role};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Sent,
    Received,
    Note,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Record {
    pub ts_ms: u64,
    pub role: Role,
    pub dir: Direction,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub message: Option<Message>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Writes records as they happen; a transcript without a path discards them.
pub struct Transcript {
    role: Role,
    out: Option<BufWriter<File>>,
}

impl Transcript {
    pub fn create(path: Option<&Path>, role: Role) -> io::Result<Self> {
        let out = match path {
            Some(p) => Some(BufWriter::new(File::create(p)?)),
            None => None,
        };
        Ok(Self { role, out })
    }

    fn write(
        &mut self,
        dir: Direction,
        message: Option<&Message>,
        note: Option<&str>,
    ) -> io::Result<()> {
        let Some(out) = self.out.as_mut() else {
            return Ok(());
        };
        let rec = Record {
            ts_ms: now_ms(),
            role: self.role,
            dir,
            message: message.cloned(),
            note: note.map(str::to_owned),
        };
        serde_json::to_writer(&mut *out, &rec)?;
        out.write_all(b"\n")
    }

    pub fn sent(&mut self, msg: &Message) -> io::Result<()> {
        self.write(Direction::Sent, Some(msg), None)
    }

    pub fn received(&mut self, msg: &Message) -> io::Result<()> {
        self.write(Direction::Received, Some(msg), None)
    }

    pub fn note(&mut self, text: &str) -> io::Result<()> {
        self.write(Direction::Note, None, Some(text))
    }

    pub fn flush(&mut self) -> io::Result<()> {
        match self.out.as_mut() {
            Some(out) => out.flush(),
            None => Ok(()),
        }
    }
}

pub fn read_transcript(path: &Path) -> io::Result<Vec<Record>> {
    BufReader::new(File::open(path)?)
        .lines()
        .map(|line| serde_json::from_str(&line?).map_err(io::Error::from))
        .collect()
}
