//! Binary container shared by sample batches and network weights:
//!
//! ```text
//! u64 LE   header length in bytes
//! [u8]     UTF-8 JSON header
//! [f64 LE] payload
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Result, VrgError};

pub fn encode_container<H: Serialize>(header: &H, data: &[f64]) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(header)?;
    let mut buf = Vec::with_capacity(8 + json.len() + 8 * data.len());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(buf)
}

pub fn decode_container<H: DeserializeOwned>(bytes: &[u8]) -> Result<(H, Vec<f64>)> {
    if bytes.len() < 8 {
        return Err(VrgError::Format("container is shorter than its length prefix".into()));
    }
    let len = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
    let body = &bytes[8..];
    if len > body.len() {
        return Err(VrgError::Format("container header is truncated".into()));
    }
    let header = serde_json::from_slice(&body[..len])?;
    let payload = &body[len..];
    if !payload.len().is_multiple_of(8) {
        return Err(VrgError::Format("payload is not a whole number of f64 values".into()));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((header, data))
}

pub fn write_container<H: Serialize>(path: &Path, header: &H, data: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&encode_container(header, data)?)?;
    w.flush()?;
    Ok(())
}

pub fn read_container<H: DeserializeOwned>(path: &Path) -> Result<(H, Vec<f64>)> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    decode_container(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trips_bit_exactly(data in proptest::collection::vec(proptest::num::f64::ANY, 0..64), tag in "[a-z]{0,8}") {
            let bytes = encode_container(&tag, &data).unwrap();
            let (h, back): (String, Vec<f64>) = decode_container(&bytes).unwrap();
            prop_assert_eq!(h, tag);
            prop_assert_eq!(back.len(), data.len());
            for (a, b) in back.iter().zip(&data) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn rejects_truncation() {
        let bytes = encode_container(&"h", &[1.0, 2.0]).unwrap();
        assert!(decode_container::<String>(&bytes[..4]).is_err());
        assert!(decode_container::<String>(&bytes[..bytes.len() - 3]).is_err());
    }
}
