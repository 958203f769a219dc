//! Little-endian helpers shared by the model file formats.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};

pub(crate) fn write_magic<W: Write>(out: &mut W, magic: &[u8; 5]) -> Result<()> {
    out.write_all(magic)?;
    Ok(())
}

pub(crate) fn expect_magic<R: Read>(input: &mut R, magic: &[u8; 5]) -> Result<()> {
    let mut buf = [0u8; 5];
    input
        .read_exact(&mut buf)
        .map_err(|_| Error::BadModelFile("truncated header".into()))?;
    if &buf != magic {
        return Err(Error::BadModelFile(format!(
            "expected magic {:?}, found {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(&buf)
        )));
    }
    Ok(())
}

pub(crate) fn write_u32<W: Write>(out: &mut W, v: u32) -> Result<()> {
    out.write_u32::<LittleEndian>(v)?;
    Ok(())
}

pub(crate) fn write_u64<W: Write>(out: &mut W, v: u64) -> Result<()> {
    out.write_u64::<LittleEndian>(v)?;
    Ok(())
}

pub(crate) fn write_f64<W: Write>(out: &mut W, v: f64) -> Result<()> {
    out.write_f64::<LittleEndian>(v)?;
    Ok(())
}

pub(crate) fn write_f64s<W: Write>(out: &mut W, v: &[f64]) -> Result<()> {
    write_u64(out, v.len() as u64)?;
    for &x in v {
        write_f64(out, x)?;
    }
    Ok(())
}

fn truncated(e: std::io::Error) -> Error {
    Error::BadModelFile(format!("truncated model file: {e}"))
}

pub(crate) fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    input.read_u32::<LittleEndian>().map_err(truncated)
}

pub(crate) fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    input.read_u64::<LittleEndian>().map_err(truncated)
}

pub(crate) fn read_f64<R: Read>(input: &mut R) -> Result<f64> {
    input.read_f64::<LittleEndian>().map_err(truncated)
}

pub(crate) fn read_len<R: Read>(input: &mut R, limit: u64) -> Result<usize> {
    let n = read_u64(input)?;
    if n > limit {
        return Err(Error::BadModelFile(format!("length {n} exceeds limit {limit}")));
    }
    Ok(n as usize)
}

pub(crate) fn read_f64s<R: Read>(input: &mut R) -> Result<Vec<f64>> {
    let n = read_len(input, 1 << 34)?;
    (0..n).map(|_| read_f64(input)).collect()
}

pub(crate) fn write_str<W: Write>(out: &mut W, s: &str) -> Result<()> {
    write_u32(out, s.len() as u32)?;
    out.write_all(s.as_bytes())?;
    Ok(())
}

pub(crate) fn read_str<R: Read>(input: &mut R) -> Result<String> {
    let n = read_u32(input)? as usize;
    let mut buf = vec![0u8; n];
    input.read_exact(&mut buf).map_err(truncated)?;
    String::from_utf8(buf).map_err(|_| Error::BadModelFile("invalid UTF-8 string".into()))
}

pub(crate) fn write_vocab<W: Write>(out: &mut W, vocab: &Vocabulary) -> Result<()> {
    write_u64(out, vocab.len() as u64)?;
    for (w, &c) in vocab.words().iter().zip(vocab.counts()) {
        write_str(out, w)?;
        write_u64(out, c)?;
    }
    Ok(())
}

pub(crate) fn read_vocab<R: Read>(input: &mut R) -> Result<Vocabulary> {
    let n = read_len(input, 1 << 32)?;
    let mut entries = Vec::with_capacity(n);
    for _ in 0..n {
        let w = read_str(input)?;
        let c = read_u64(input)?;
        entries.push((w, c));
    }
    let vocab = Vocabulary::from_counts(entries)?;
    Ok(vocab)
}
