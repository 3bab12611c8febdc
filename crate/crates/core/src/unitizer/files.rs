//! Feature ("SPFM") and unit-list file formats.

use std::io::{BufRead, Write};

use super::FeatureMatrix;
use crate::error::{Error, Result};

const FEATURE_MAGIC: &[u8; 4] = b"SPFM";
const FEATURE_VERSION: u16 = 1;

/// `b"SPFM" | version u16 | frames u32 | dim u32 | f32 LE row-major`.
pub fn write_features(features: &FeatureMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(14 + features.values().len() * 4);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    out.extend_from_slice(&(features.frames() as u32).to_le_bytes());
    out.extend_from_slice(&(features.dim() as u32).to_le_bytes());
    for v in features.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_features(bytes: &[u8]) -> Result<FeatureMatrix> {
    let bad = |m: &str| Error::Validation(format!("feature file: {m}"));
    if bytes.len() < 14 || &bytes[..4] != FEATURE_MAGIC {
        return Err(bad("bad magic or header"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FEATURE_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let frames = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let body = &bytes[14..];
    if body.len() != frames * dim * 4 {
        return Err(bad("payload length does not match header"));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FeatureMatrix::new(frames, dim, values)
}

/// One utterance per line, space-separated decimal ids.
pub fn write_unit_file<W: Write>(mut w: W, utterances: &[Vec<usize>]) -> Result<()> {
    for u in utterances {
        let line: Vec<String> = u.iter().map(|x| x.to_string()).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn read_unit_file<R: BufRead>(r: R) -> Result<Vec<Vec<usize>>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let units = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<usize>().map_err(|_| Error::Parse {
                    line: i + 1,
                    msg: format!("not a unit id: {tok:?}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(units);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_layout_is_exact() {
        let f = FeatureMatrix::new(1, 2, vec![1.0, -0.5]).unwrap();
        let bytes = write_features(&f);
        assert_eq!(&bytes[..4], b"SPFM");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(&bytes[6..10], &[1, 0, 0, 0]);
        assert_eq!(&bytes[10..14], &[2, 0, 0, 0]);
        assert_eq!(&bytes[14..18], &1.0f32.to_le_bytes());
        assert_eq!(read_features(&bytes).unwrap(), f);
        assert!(read_features(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn unit_lines() {
        let utts = vec![vec![3, 1, 4], vec![], vec![59]];
        let mut buf = Vec::new();
        write_unit_file(&mut buf, &utts).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "3 1 4\n\n59\n");
        assert_eq!(read_unit_file(&buf[..]).unwrap(), utts);
        let err = read_unit_file(&b"1 2\n3 x\n"[..]).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }
}
