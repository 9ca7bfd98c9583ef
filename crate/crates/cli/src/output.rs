use std::io::Write;
use std::path::Path;

use owlkit::{OwlError, Result};

fn io_error(path: &Path, source: std::io::Error) -> OwlError {
    OwlError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// CSV writer over a file, or standard output when `path` is `None`.
pub struct Table {
    writer: csv::Writer<Box<dyn Write>>,
    label: String,
}

impl Table {
    pub fn create(path: Option<&Path>, header: &[&str]) -> Result<Table> {
        let (sink, label): (Box<dyn Write>, String) = match path {
            Some(p) => {
                if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
                }
                let f = std::fs::File::create(p).map_err(|e| io_error(p, e))?;
                (Box::new(std::io::BufWriter::new(f)), p.display().to_string())
            }
            None => (Box::new(std::io::stdout().lock()), "<stdout>".into()),
        };
        let mut t = Table {
            writer: csv::Writer::from_writer(sink),
            label,
        };
        t.row(header.iter().map(|s| s.to_string()))?;
        Ok(t)
    }

    pub fn row<I: IntoIterator<Item = String>>(&mut self, fields: I) -> Result<()> {
        self.writer
            .write_record(fields)
            .map_err(|e| OwlError::Io {
                path: self.label.clone().into(),
                source: std::io::Error::other(e),
            })
    }

    pub fn finish(mut self) -> Result<()> {
        let label = self.label.clone();
        self.writer.flush().map_err(|e| io_error(Path::new(&label), e))
    }
}

pub fn num(v: f64) -> String {
    format!("{v:.6}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("plain data serializes");
    std::fs::write(path, text + "\n").map_err(|e| io_error(path, e))
}
