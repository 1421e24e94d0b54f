use std::fs;
use std::path::Path;

use super::{io_err, IngestError, TraceRecord};

/// Reads every regular file in `dir` as one packet, in lexicographic file
/// name order. Empty files are ignored.
pub fn read_corpus_dir(dir: &Path) -> Result<Vec<TraceRecord>, IngestError> {
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        if entry.file_type().map_err(io_err(dir))?.is_file() {
            paths.push(entry.path());
        }
    }
    paths.sort();
    let mut records = Vec::with_capacity(paths.len());
    for path in paths {
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        if !bytes.is_empty() {
            records.push(TraceRecord::new(records.len(), bytes));
        }
    }
    Ok(records)
}

/// Writes `packet_NNNNNN.bin` files into `dir`, creating it if needed.
pub fn write_corpus_dir(dir: &Path, records: &[TraceRecord]) -> Result<(), IngestError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (i, r) in records.iter().enumerate() {
        let path = dir.join(format!("packet_{i:06}.bin"));
        fs::write(&path, &r.bytes).map_err(io_err(&path))?;
    }
    Ok(())
}
