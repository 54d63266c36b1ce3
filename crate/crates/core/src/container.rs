//! Versioned binary container for trained models: a magic header, a
//! format version, a kind tag and named byte sections.

use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SECMARK\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Container {
    pub kind: String,
    sections: Vec<(String, Vec<u8>)>,
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

impl Container {
    pub fn new(kind: impl Into<String>) -> Self {
        Container {
            kind: kind.into(),
            sections: Vec::new(),
        }
    }

    /// Adds or replaces a section.
    pub fn put(&mut self, name: &str, bytes: Vec<u8>) {
        match self.sections.iter_mut().find(|(n, _)| n == name) {
            Some(s) => s.1 = bytes,
            None => self.sections.push((name.to_string(), bytes)),
        }
    }

    pub fn get(&self, name: &str) -> Result<&[u8]> {
        self.sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, b)| b.as_slice())
            .ok_or_else(|| format_err(format!("missing section `{name}`")))
    }

    pub fn section_names(&self) -> impl Iterator<Item = &str> {
        self.sections.iter().map(|(n, _)| n.as_str())
    }

    pub fn put_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let bytes = serde_json::to_vec(value).map_err(|e| format_err(format!("section `{name}`: {e}")))?;
        self.put(name, bytes);
        Ok(())
    }

    pub fn get_json<T: DeserializeOwned>(&self, name: &str) -> Result<T> {
        serde_json::from_slice(self.get(name)?).map_err(|e| format_err(format!("section `{name}`: {e}")))
    }

    /// Little-endian IEEE doubles, bit-exact.
    pub fn put_f64s(&mut self, name: &str, values: &[f64]) {
        self.put(name, values.iter().flat_map(|v| v.to_le_bytes()).collect());
    }

    pub fn get_f64s(&self, name: &str) -> Result<Vec<f64>> {
        let b = self.get(name)?;
        if b.len() % 8 != 0 {
            return Err(format_err(format!("section `{name}` is not a whole number of doubles")));
        }
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&FORMAT_VERSION.to_le_bytes())?;
        write_blob(&mut out, self.kind.as_bytes())?;
        out.write_all(&(self.sections.len() as u32).to_le_bytes())?;
        for (name, bytes) in &self.sections {
            write_blob(&mut out, name.as_bytes())?;
            out.write_all(&(bytes.len() as u64).to_le_bytes())?;
            out.write_all(bytes)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::new();
        self.write(&mut v).expect("writing to memory");
        v
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(format_err("not a model file (bad magic)"));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(format_err(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let kind = read_string(&mut r)?;
        let count = read_u32(&mut r)?;
        let mut sections = Vec::new();
        for _ in 0..count {
            let name = read_string(&mut r)?;
            let mut len = [0u8; 8];
            read_exact(&mut r, &mut len)?;
            let len = u64::from_le_bytes(len) as usize;
            if len > r.len() {
                return Err(format_err(format!("section `{name}` truncated")));
            }
            let (data, rest) = r.split_at(len);
            sections.push((name, data.to_vec()));
            r = rest;
        }
        if !r.is_empty() {
            return Err(format_err("trailing bytes after last section"));
        }
        Ok(Container { kind, sections })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Container::from_bytes(&bytes).map_err(|e| e.context(path.display().to_string()))
    }
}

fn write_blob<W: Write>(out: &mut W, b: &[u8]) -> std::io::Result<()> {
    out.write_all(&(b.len() as u32).to_le_bytes())?;
    out.write_all(b)
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|_| format_err("unexpected end of file"))
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_string(r: &mut &[u8]) -> Result<String> {
    let n = read_u32(r)? as usize;
    if n > r.len() {
        return Err(format_err("unexpected end of file"));
    }
    let (s, rest) = r.split_at(n);
    *r = rest;
    String::from_utf8(s.to_vec()).map_err(|_| format_err("section name is not UTF-8"))
}
