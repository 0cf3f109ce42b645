use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::CliError;
use crate::error::Error;

/// Destination directory plus the provenance header shared by every file a
/// command writes.
#[derive(Debug, Clone)]
pub struct Output {
    dir: PathBuf,
    header: String,
    written: Vec<PathBuf>,
}

impl Output {
    pub fn new(dir: &Path, command: &str, seed: u64, flags: &impl Serialize) -> Result<Self, CliError> {
        super::ensure_dir(dir)?;
        let flags = serde_json::to_string(flags).map_err(Error::from)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            header: format!("attrstress {} command={command} seed={seed} flags={flags}", crate::VERSION),
            written: Vec::new(),
        })
    }

    pub fn header(&self) -> &str {
        &self.header
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.written.push(path.clone());
        Ok(path)
    }

    /// `# <header>` then whatever `body` writes.
    pub fn csv(
        &mut self,
        name: &str,
        body: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    ) -> Result<PathBuf, CliError> {
        let mut buf = Vec::new();
        writeln!(buf, "# {}", self.header).and_then(|_| body(&mut buf)).map_err(|e| Error::io(self.path(name), e))?;
        self.write(name, &buf)
    }

    /// Pretty JSON object whose first field is `"header"`.
    pub fn json(&mut self, name: &str, value: &impl Serialize) -> Result<PathBuf, CliError> {
        let text = with_header_field(&self.header, value)?;
        self.write(name, text.as_bytes())
    }

    pub fn raw(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        self.write(name, bytes)
    }
}

pub(crate) fn with_header_field(header: &str, value: &impl Serialize) -> Result<String, CliError> {
    let body = serde_json::to_string_pretty(value).map_err(Error::from)?;
    let h = serde_json::to_string(header).map_err(Error::from)?;
    let rest = body
        .strip_prefix('{')
        .ok_or_else(|| CliError::Config("report must serialize to an object".into()))?;
    let sep = if rest.trim_start().starts_with('}') { "" } else { "," };
    Ok(format!("{{\n  \"header\": {h}{sep}{rest}\n"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct R {
        a: u32,
    }

    #[test]
    fn header_comes_first() {
        let text = with_header_field("h", &R { a: 1 }).unwrap();
        assert!(text.starts_with("{\n  \"header\": \"h\","));
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["a"], 1);
        #[derive(Serialize)]
        struct E {}
        let v: serde_json::Value = serde_json::from_str(&with_header_field("h", &E {}).unwrap()).unwrap();
        assert_eq!(v["header"], "h");
    }

    #[test]
    fn csv_starts_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = Output::new(dir.path(), "x", 3, &R { a: 2 }).unwrap();
        let p = out.csv("t.csv", |w| writeln!(w, "a,b")).unwrap();
        let text = fs::read_to_string(p).unwrap();
        assert!(text.starts_with("# attrstress "));
        assert!(text.lines().next().unwrap().contains("seed=3"));
        assert_eq!(text.lines().nth(1), Some("a,b"));
    }
}
