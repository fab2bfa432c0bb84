//! Binary PPM (P6) encoding.

use crate::error::{Error, Result};
use std::io::{Read, Write};

pub fn write_ppm(out: &mut impl Write, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    if rgb.len() != width * height * 3 {
        return Err(Error::Config(format!(
            "ppm buffer holds {} bytes, expected {}",
            rgb.len(),
            width * height * 3
        )));
    }
    write!(out, "P6\n{width} {height}\n255\n")?;
    out.write_all(rgb)?;
    Ok(())
}

pub fn encode_ppm(width: usize, height: usize, rgb: &[u8]) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(rgb.len() + 20);
    write_ppm(&mut buf, width, height, rgb)?;
    Ok(buf)
}

/// Parses a P6 image written by [`write_ppm`]; returns `(width, height, rgb)`.
pub fn read_ppm(input: &mut impl Read) -> Result<(usize, usize, Vec<u8>)> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let bad = || Error::Config("malformed ppm".into());
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad());
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P6" || fields[3] != "255" {
        return Err(bad());
    }
    let w: usize = fields[1].parse().map_err(|_| bad())?;
    let h: usize = fields[2].parse().map_err(|_| bad())?;
    let data = bytes.get(pos..pos + w * h * 3).ok_or_else(bad)?.to_vec();
    Ok((w, h, data))
}
