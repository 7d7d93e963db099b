//! Format detection and canonical decompressed byte streams.
//!
//! Compressed containers hide the entropy structure this pipeline feeds on:
//! an OOXML document is a ZIP archive and most PDF stream objects are
//! Flate-compressed. Canonicalization exposes the underlying bytes while
//! degrading to the raw input on any container-level failure, so it never
//! fails.

use std::io::Read;

use serde::{Deserialize, Serialize};

/// Hard cap on a single decompressed payload, against inflation bombs.
const MAX_INFLATED_BYTES: u64 = 64 * 1024 * 1024;

/// Document family detected from the file's leading bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileKind {
    Pdf,
    Ooxml,
    Ole2,
    Rtf,
    Raw,
}

/// Canonical byte stream fed to entropy computation.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalStream {
    pub bytes: Vec<u8>,
    pub source_kind: FileKind,
    /// True when container-level decompression failed and the raw input was
    /// substituted.
    pub fallback_used: bool,
    diagnostics: Vec<String>,
}

impl CanonicalStream {
    /// Notes accumulated while canonicalizing (corrupt entries, payloads kept
    /// verbatim, and similar non-fatal findings).
    pub fn diagnostics(&self) -> &[String] {
        &self.diagnostics
    }
}

/// Detect the document family from magic bytes, in fixed priority order
/// Pdf -> Ooxml -> Ole2 -> Rtf -> Raw. Never fails; Raw is the fallback.
pub fn detect_kind(bytes: &[u8]) -> FileKind {
    if bytes.starts_with(b"%PDF") {
        FileKind::Pdf
    } else if bytes.starts_with(&[0x50, 0x4B, 0x03, 0x04]) {
        FileKind::Ooxml
    } else if bytes.starts_with(&[0xD0, 0xCF, 0x11, 0xE0, 0xA1, 0xB1, 0x1A, 0xE1]) {
        FileKind::Ole2
    } else if bytes.starts_with(b"{\\rtf") {
        FileKind::Rtf
    } else {
        FileKind::Raw
    }
}

/// Produce the canonical stream for a file.
///
/// - Ooxml: entry names and decompressed payloads concatenated in
///   central-directory order. Entry-local failures (encryption, unsupported
///   methods, bad deflate data) copy that payload raw; container-level
///   failures fall back to the original bytes with `fallback_used` set.
/// - Pdf: each `stream`..`endstream` payload replaced by its inflated content
///   when inflation succeeds, kept verbatim otherwise.
/// - Rtf, Ole2, Raw: passed through unchanged.
pub fn canonicalize(bytes: &[u8]) -> CanonicalStream {
    let kind = detect_kind(bytes);
    let mut diagnostics = Vec::new();
    let (out, fallback_used) = match kind {
        FileKind::Ooxml => match canonicalize_zip(bytes, &mut diagnostics) {
            Some(canonical) if !canonical.is_empty() => (canonical, false),
            Some(_) => {
                diagnostics.push("archive yielded an empty canonical stream".into());
                (bytes.to_vec(), true)
            }
            None => (bytes.to_vec(), true),
        },
        FileKind::Pdf => (canonicalize_pdf(bytes, &mut diagnostics), false),
        FileKind::Ole2 | FileKind::Rtf | FileKind::Raw => (bytes.to_vec(), false),
    };
    CanonicalStream {
        bytes: out,
        source_kind: kind,
        fallback_used,
        diagnostics,
    }
}

// --- ZIP -------------------------------------------------------------------

const EOCD_SIG: [u8; 4] = [0x50, 0x4B, 0x05, 0x06];
const CDIR_SIG: [u8; 4] = [0x50, 0x4B, 0x01, 0x02];
const LOCAL_SIG: [u8; 4] = [0x50, 0x4B, 0x03, 0x04];

fn read_u16(bytes: &[u8], at: usize) -> Option<u16> {
    bytes
        .get(at..at + 2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
}

fn read_u32(bytes: &[u8], at: usize) -> Option<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

/// Walk the central directory and emit `name || payload` per entry.
/// Returns `None` on any container-level structural failure.
fn canonicalize_zip(bytes: &[u8], diagnostics: &mut Vec<String>) -> Option<Vec<u8>> {
    let eocd = find_eocd(bytes)?;
    let entry_count = read_u16(bytes, eocd + 10)? as usize;
    let cd_offset = read_u32(bytes, eocd + 16)? as usize;

    let mut out = Vec::new();
    let mut cursor = cd_offset;
    for index in 0..entry_count {
        if bytes.get(cursor..cursor + 4) != Some(&CDIR_SIG) {
            diagnostics.push(format!("central directory entry {index}: bad signature"));
            return None;
        }
        let flags = read_u16(bytes, cursor + 8)?;
        let method = read_u16(bytes, cursor + 10)?;
        let comp_size = read_u32(bytes, cursor + 20)? as usize;
        let name_len = read_u16(bytes, cursor + 28)? as usize;
        let extra_len = read_u16(bytes, cursor + 30)? as usize;
        let comment_len = read_u16(bytes, cursor + 32)? as usize;
        let local_offset = read_u32(bytes, cursor + 42)? as usize;
        let name = bytes.get(cursor + 46..cursor + 46 + name_len)?;

        let payload = local_payload(bytes, local_offset, comp_size)?;
        out.extend_from_slice(name);

        let encrypted = flags & 0x0001 != 0;
        if encrypted {
            diagnostics.push(format!("entry {index}: encrypted, payload copied raw"));
            out.extend_from_slice(payload);
        } else {
            match method {
                0 => out.extend_from_slice(payload),
                8 => match inflate_raw(payload) {
                    Some(inflated) => out.extend_from_slice(&inflated),
                    None => {
                        diagnostics
                            .push(format!("entry {index}: deflate failed, payload copied raw"));
                        out.extend_from_slice(payload);
                    }
                },
                other => {
                    diagnostics.push(format!(
                        "entry {index}: unsupported method {other}, payload copied raw"
                    ));
                    out.extend_from_slice(payload);
                }
            }
        }
        cursor = cursor + 46 + name_len + extra_len + comment_len;
    }
    Some(out)
}

/// Locate the end-of-central-directory record by scanning backwards through
/// the space a trailing comment may occupy.
fn find_eocd(bytes: &[u8]) -> Option<usize> {
    if bytes.len() < 22 {
        return None;
    }
    let earliest = bytes.len().saturating_sub(22 + 65535);
    (earliest..=bytes.len() - 22)
        .rev()
        .find(|&i| bytes[i..i + 4] == EOCD_SIG)
}

/// Slice an entry's compressed payload using its local header for the name
/// and extra lengths and the central directory for the payload size, which
/// stays correct when bit 3 (data descriptor) left the local sizes zero.
fn local_payload(bytes: &[u8], local_offset: usize, comp_size: usize) -> Option<&[u8]> {
    if bytes.get(local_offset..local_offset + 4) != Some(&LOCAL_SIG) {
        return None;
    }
    let name_len = read_u16(bytes, local_offset + 26)? as usize;
    let extra_len = read_u16(bytes, local_offset + 28)? as usize;
    let start = local_offset + 30 + name_len + extra_len;
    bytes.get(start..start.checked_add(comp_size)?)
}

// --- PDF -------------------------------------------------------------------

/// Replace each inflatable `stream`..`endstream` payload in place.
fn canonicalize_pdf(bytes: &[u8], diagnostics: &mut Vec<String>) -> Vec<u8> {
    let mut out = Vec::with_capacity(bytes.len());
    let mut cursor = 0usize;
    let mut search_from = 0usize;

    while let Some(rel) = find_subslice(&bytes[search_from..], b"stream") {
        let kw = search_from + rel;
        // Skip matches that are the tail of an `endstream` keyword.
        if kw >= 3 && &bytes[kw - 3..kw] == b"end" {
            search_from = kw + 6;
            continue;
        }
        let after = kw + 6;
        let eol_len = match bytes.get(after..) {
            Some(rest) if rest.starts_with(b"\r\n") => 2,
            Some(rest) if rest.starts_with(b"\n") || rest.starts_with(b"\r") => 1,
            _ => {
                // Not a stream object (`streams` in text, truncated file...).
                search_from = after;
                continue;
            }
        };
        let payload_start = after + eol_len;
        let Some(rel_end) = find_subslice(&bytes[payload_start..], b"endstream") else {
            diagnostics.push("stream without endstream, remainder kept verbatim".into());
            break;
        };
        let payload_end = payload_start + rel_end;
        let payload = &bytes[payload_start..payload_end];

        out.extend_from_slice(&bytes[cursor..payload_start]);
        match inflate_zlib(payload).or_else(|| inflate_raw(payload)) {
            Some(inflated) => out.extend_from_slice(&inflated),
            None => out.extend_from_slice(payload),
        }
        cursor = payload_end;
        search_from = payload_end;
    }
    out.extend_from_slice(&bytes[cursor..]);
    out
}

fn find_subslice(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack
        .windows(needle.len())
        .position(|window| window == needle)
}

// --- inflate helpers --------------------------------------------------------

fn inflate_zlib(data: &[u8]) -> Option<Vec<u8>> {
    let mut out = Vec::new();
    let mut decoder = flate2::read::ZlibDecoder::new(data).take(MAX_INFLATED_BYTES);
    decoder.read_to_end(&mut out).ok()?;
    if out.len() as u64 >= MAX_INFLATED_BYTES {
        return None;
    }
    Some(out)
}

fn inflate_raw(data: &[u8]) -> Option<Vec<u8>> {
    let mut out = Vec::new();
    let mut decoder = flate2::read::DeflateDecoder::new(data).take(MAX_INFLATED_BYTES);
    decoder.read_to_end(&mut out).ok()?;
    if out.len() as u64 >= MAX_INFLATED_BYTES {
        return None;
    }
    Some(out)
}
