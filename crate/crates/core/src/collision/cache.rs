//! Binary cache for the assembled kernel table.
//!
//! Kernel assembly dominates every downstream cost, so the symmetric core
//! is persisted once and reloaded across runs. Layout:
//!
//! ```text
//! magic "KINKRNL1"            8 bytes
//! header length               u64 LE
//! header JSON                 schema, model parameters, payload digest
//! nu values                   n_total f64 LE
//! core upper triangle         n_total (n_total + 1) / 2 f64 LE, row-major
//! ```
//!
//! Only the upper triangle is stored (the core is symmetric by
//! construction), which halves the file size. The header carries a SHA-256
//! digest of the numeric payload; loading verifies the digest and every
//! model parameter before accepting the table.

use super::{AssemblyReport, CollisionParams, KernelTable};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"KINKRNL1";
const SCHEMA: &str = "kinlab-kernel-v1";

#[derive(Debug, Serialize, Deserialize)]
struct CacheHeader {
    schema: String,
    params: CollisionParams,
    n_total: usize,
    asymmetry_action: f64,
    asymmetry_entrywise: f64,
    dropped_fraction: f64,
    payload_sha256: String,
}

/// Write `nu` and the kernel table for `params` to `path`.
///
/// The write goes to a sibling temporary file first and is renamed into
/// place, so a crash never leaves a truncated cache behind.
pub fn save_kernel_file(
    path: &Path,
    params: &CollisionParams,
    nu: &[f64],
    table: &KernelTable,
) -> Result<()> {
    let n = table.n_total();
    let mut hasher = Sha256::new();
    hash_f64(&mut hasher, nu);
    for i in 0..n {
        hash_f64(&mut hasher, &table.core()[i * n + i..(i + 1) * n]);
    }
    let digest = format!("{:x}", hasher.finalize());
    let header = CacheHeader {
        schema: SCHEMA.into(),
        params: params.clone(),
        n_total: n,
        asymmetry_action: table.report().asymmetry_action,
        asymmetry_entrywise: table.report().asymmetry_entrywise,
        dropped_fraction: table.report().dropped_fraction,
        payload_sha256: digest,
    };
    let header_bytes = serde_json::to_vec(&header)?;

    let tmp = path.with_extension("tmp");
    {
        let file = std::fs::File::create(&tmp)?;
        let mut w = BufWriter::new(file);
        w.write_all(MAGIC)?;
        w.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
        w.write_all(&header_bytes)?;
        write_f64(&mut w, nu)?;
        for i in 0..n {
            write_f64(&mut w, &table.core()[i * n + i..(i + 1) * n])?;
        }
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Read a kernel table from `path`, verifying the parameters against
/// `params` and the collision frequency against `nu`.
pub fn load_kernel_file(path: &Path, params: &CollisionParams, nu: &[f64]) -> Result<KernelTable> {
    let file = std::fs::File::open(path)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("kernel cache: bad magic bytes".into()));
    }
    let mut len_bytes = [0u8; 8];
    r.read_exact(&mut len_bytes)?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    if header_len > 1 << 20 {
        return Err(Error::Format(
            "kernel cache: unreasonable header length".into(),
        ));
    }
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes)?;
    let header: CacheHeader = serde_json::from_slice(&header_bytes)?;
    if header.schema != SCHEMA {
        return Err(Error::Format(format!(
            "kernel cache: schema {} does not match {}",
            header.schema, SCHEMA
        )));
    }
    if header.params != *params {
        return Err(Error::Format(
            "kernel cache: stored parameters do not match the model".into(),
        ));
    }
    let n = header.n_total;
    if n != nu.len() {
        return Err(Error::Format(format!(
            "kernel cache: {} nodes stored, model has {}",
            n,
            nu.len()
        )));
    }

    let mut hasher = Sha256::new();
    let mut nu_stored = vec![0.0f64; n];
    read_f64(&mut r, &mut nu_stored)?;
    hash_f64(&mut hasher, &nu_stored);
    let mut core = vec![0.0f64; n * n];
    let mut row = vec![0.0f64; n];
    for i in 0..n {
        let tail = &mut row[..n - i];
        read_f64(&mut r, tail)?;
        hash_f64(&mut hasher, tail);
        for (k, &val) in tail.iter().enumerate() {
            let j = i + k;
            core[i * n + j] = val;
            core[j * n + i] = val;
        }
    }
    let digest = format!("{:x}", hasher.finalize());
    if digest != header.payload_sha256 {
        return Err(Error::Format(
            "kernel cache: payload digest mismatch".into(),
        ));
    }
    if nu_stored
        .iter()
        .zip(nu)
        .any(|(a, b)| a.to_bits() != b.to_bits())
    {
        return Err(Error::Format(
            "kernel cache: stored collision frequency differs from the model".into(),
        ));
    }
    Ok(KernelTable {
        n_total: n,
        core,
        report: AssemblyReport {
            n_total: n,
            asymmetry_action: header.asymmetry_action,
            asymmetry_entrywise: header.asymmetry_entrywise,
            dropped_fraction: header.dropped_fraction,
        },
    })
}

/// Values per staging buffer for the byte conversions below (64 KiB).
const CHUNK: usize = 8192;

fn fill_bytes(values: &[f64], bytes: &mut [u8]) {
    for (v, slot) in values.iter().zip(bytes.chunks_exact_mut(8)) {
        slot.copy_from_slice(&v.to_le_bytes());
    }
}

fn hash_f64(hasher: &mut Sha256, values: &[f64]) {
    let mut buf = [0u8; CHUNK * 8];
    for chunk in values.chunks(CHUNK) {
        let bytes = &mut buf[..chunk.len() * 8];
        fill_bytes(chunk, bytes);
        hasher.update(&*bytes);
    }
}

fn write_f64<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    let mut buf = [0u8; CHUNK * 8];
    for chunk in values.chunks(CHUNK) {
        let bytes = &mut buf[..chunk.len() * 8];
        fill_bytes(chunk, bytes);
        w.write_all(bytes)?;
    }
    Ok(())
}

fn read_f64<R: Read>(r: &mut R, out: &mut [f64]) -> Result<()> {
    let mut buf = [0u8; CHUNK * 8];
    for chunk in out.chunks_mut(CHUNK) {
        let bytes = &mut buf[..chunk.len() * 8];
        r.read_exact(bytes)?;
        for (slot, piece) in chunk.iter_mut().zip(bytes.chunks_exact(8)) {
            *slot = f64::from_le_bytes(piece.try_into().unwrap());
        }
    }
    Ok(())
}
