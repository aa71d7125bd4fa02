use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::FormatError;
use crate::trace::{Precision, Sample, Trace};

pub const MAGIC: [u8; 4] = *b"WMTR";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 24;

pub fn write_trace<W: Write>(mut w: W, trace: &Trace) -> std::io::Result<()> {
    let mut header = [0u8; HEADER_LEN];
    header[0..4].copy_from_slice(&MAGIC);
    header[4..6].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
    header[6] = trace.precision().bits();
    header[8..16].copy_from_slice(&(trace.len() as u64).to_le_bytes());
    header[16..24].copy_from_slice(&trace.sample_rate_hz.to_le_bytes());
    w.write_all(&header)?;
    let mut buf = Vec::with_capacity(8192);
    for chunk in trace.samples().chunks(4096) {
        buf.clear();
        buf.extend(chunk.iter().flat_map(|s| s.to_le_bytes()));
        w.write_all(&buf)?;
    }
    w.flush()
}

/// Parses a whole trace container. `R` is read to the end.
pub fn read_trace<R: Read>(mut r: R) -> Result<Trace, FormatError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| FormatError::parse("trace", e))?;
    decode(&bytes)
}

fn decode(bytes: &[u8]) -> Result<Trace, FormatError> {
    let actual = bytes.len() as u64;
    if bytes.len() >= 4 && bytes[0..4] != MAGIC {
        return Err(FormatError::BadMagic {
            found: bytes[0..4].try_into().unwrap(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(FormatError::Truncated {
            expected: HEADER_LEN as u64,
            actual,
        });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let precision = Precision::new(bytes[6])
        .map_err(|_| FormatError::BadHeader(format!("precision {} bits", bytes[6])))?;
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let rate = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
    if !(rate.is_finite() && rate > 0.0) {
        return Err(FormatError::BadHeader(format!("sample rate {rate}")));
    }
    let expected = count
        .checked_mul(2)
        .and_then(|p| p.checked_add(HEADER_LEN as u64))
        .ok_or_else(|| FormatError::BadHeader(format!("sample count {count}")))?;
    if actual < expected {
        return Err(FormatError::Truncated { expected, actual });
    }
    if actual > expected {
        return Err(FormatError::TrailingData { expected, actual });
    }
    let samples: Vec<Sample> = bytes[HEADER_LEN..]
        .chunks_exact(2)
        .map(|b| Sample::from_le_bytes([b[0], b[1]]))
        .collect();
    if let Some((index, &value)) = samples
        .iter()
        .enumerate()
        .find(|(_, &s)| !precision.contains(s as i32))
    {
        return Err(FormatError::RangeViolation {
            index,
            value,
            bits: precision.bits(),
        });
    }
    Ok(Trace::new(samples, precision)
        .expect("samples were range checked")
        .with_sample_rate(rate))
}

pub fn save_trace(path: &Path, trace: &Trace) -> Result<(), FormatError> {
    let file = File::create(path).map_err(|e| FormatError::io(path, e))?;
    write_trace(BufWriter::new(file), trace).map_err(|e| FormatError::io(path, e))
}

pub fn load_trace(path: &Path) -> Result<Trace, FormatError> {
    let file = File::open(path).map_err(|e| FormatError::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| FormatError::io(path, e))?;
    let label = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    let trace = decode(&bytes)?;
    Ok(match label {
        Some(l) => trace.with_label(l),
        None => trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn encode(t: &Trace) -> Vec<u8> {
        let mut v = Vec::new();
        write_trace(&mut v, t).unwrap();
        v
    }

    #[test]
    fn header_layout() {
        let t = Trace::new(vec![1, -2], Precision::new(12).unwrap())
            .unwrap()
            .with_sample_rate(5e9);
        let b = encode(&t);
        assert_eq!(b.len(), 28);
        assert_eq!(&b[0..4], b"WMTR");
        assert_eq!(&b[4..6], &[1, 0]);
        assert_eq!(b[6], 12);
        assert_eq!(b[7], 0);
        assert_eq!(&b[8..16], &2u64.to_le_bytes());
        assert_eq!(&b[16..24], &5e9f64.to_le_bytes());
        assert_eq!(&b[24..], &[1, 0, 0xfe, 0xff]);
    }

    #[test]
    fn round_trip_large_file() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s: Vec<Sample> = (0..100_000)
            .map(|_| rng.random_range(-8192..=8191))
            .collect();
        let t = Trace::new(s, Precision::DEFAULT).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rec.wmt");
        save_trace(&path, &t).unwrap();
        let back = load_trace(&path).unwrap();
        assert_eq!(back.samples(), t.samples());
        assert_eq!(back.precision(), t.precision());
        assert_eq!(back.sample_rate_hz, t.sample_rate_hz);
    }

    #[test]
    fn rejects_out_of_range_sample() {
        let t = Trace::new(vec![0, 9000, 0], Precision::new(16).unwrap()).unwrap();
        let mut b = encode(&t);
        b[6] = 14;
        match decode(&b) {
            Err(FormatError::RangeViolation { index, value, bits }) => {
                assert_eq!((index, value, bits), (1, 9000, 14));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncation_names_byte_counts() {
        let t = Trace::new(vec![5; 10], Precision::DEFAULT).unwrap();
        let b = encode(&t);
        let err = decode(&b[..b.len() - 3]).unwrap_err();
        assert!(matches!(
            err,
            FormatError::Truncated {
                expected: 44,
                actual: 41
            }
        ));
        assert!(err.to_string().contains("44") && err.to_string().contains("41"));
        assert!(matches!(
            decode(&b[..10]),
            Err(FormatError::Truncated {
                expected: 24,
                actual: 10
            })
        ));
    }

    #[test]
    fn header_errors_are_distinct() {
        let t = Trace::new(vec![5; 3], Precision::DEFAULT).unwrap();
        let mut b = encode(&t);
        b[0] = b'X';
        assert!(matches!(decode(&b), Err(FormatError::BadMagic { .. })));
        let mut b = encode(&t);
        b[4] = 2;
        assert!(matches!(
            decode(&b),
            Err(FormatError::UnsupportedVersion(2))
        ));
        let mut b = encode(&t);
        b[6] = 0;
        assert!(matches!(decode(&b), Err(FormatError::BadHeader(_))));
        let mut b = encode(&t);
        b.push(0);
        assert!(matches!(decode(&b), Err(FormatError::TrailingData { .. })));
    }

    #[test]
    fn missing_file_is_io() {
        let err = load_trace(Path::new("/nonexistent/x.wmt")).unwrap_err();
        assert!(err.is_io());
    }
}
