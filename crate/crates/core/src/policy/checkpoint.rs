//! Plain-text parameter checkpoints.
//!
//! ```text
//! mogrpo-policy 1
//! activation tanh
//! sizes 1 16 16 16 50
//! layer 0 16 1
//! <16 lines of 1 weight each, row-major>
//! <1 line of 16 biases>
//! layer 1 16 16
//! ...
//! ```
//!
//! Values are written with Rust's shortest round-trip float formatting, so a
//! load after a save reproduces the parameters bit for bit.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{Activation, PolicyParams};
use crate::error::{Error, Result};

const MAGIC: &str = "mogrpo-policy 1";

pub fn write_checkpoint<W: Write>(params: &PolicyParams, mut out: W) -> Result<()> {
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "activation {}", params.activation())?;
    let sizes: Vec<String> = params.sizes().iter().map(ToString::to_string).collect();
    writeln!(out, "sizes {}", sizes.join(" "))?;
    let mut off = 0;
    for (l, w) in params.sizes().windows(2).enumerate() {
        let (n_in, n_out) = (w[0], w[1]);
        writeln!(out, "layer {l} {n_out} {n_in}")?;
        for row in params.values()[off..off + n_in * n_out].chunks_exact(n_in) {
            writeln!(out, "{}", join(row))?;
        }
        off += n_in * n_out;
        writeln!(out, "{}", join(&params.values()[off..off + n_out]))?;
        off += n_out;
    }
    Ok(())
}

fn join(xs: &[f64]) -> String {
    xs.iter()
        .map(|v| format!("{v:?}"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn read_checkpoint<R: BufRead>(input: R) -> Result<PolicyParams> {
    let bad = |msg: &str| Error::Config(format!("malformed checkpoint: {msg}"));
    let mut lines = input.lines();
    let mut next = || -> Result<String> {
        lines
            .next()
            .ok_or_else(|| bad("unexpected end"))?
            .map_err(Error::from)
    };
    if next()?.trim() != MAGIC {
        return Err(bad("missing header"));
    }
    let act_line = next()?;
    let activation: Activation = act_line
        .strip_prefix("activation ")
        .ok_or_else(|| bad("missing activation"))?
        .trim()
        .parse()?;
    let sizes_line = next()?;
    let sizes = sizes_line
        .strip_prefix("sizes ")
        .ok_or_else(|| bad("missing sizes"))?
        .split_whitespace()
        .map(|s| s.parse::<usize>().map_err(|_| bad("bad size")))
        .collect::<Result<Vec<_>>>()?;
    let mut values = Vec::new();
    let parse_row = |line: &str, n: usize| -> Result<Vec<f64>> {
        let row = line
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|_| bad("bad number")))
            .collect::<Result<Vec<_>>>()?;
        if row.len() != n {
            return Err(bad("wrong row width"));
        }
        Ok(row)
    };
    for (l, w) in sizes.windows(2).enumerate() {
        let (n_in, n_out) = (w[0], w[1]);
        if next()?.trim() != format!("layer {l} {n_out} {n_in}") {
            return Err(bad("layer header mismatch"));
        }
        for _ in 0..n_out {
            values.extend(parse_row(&next()?, n_in)?);
        }
        values.extend(parse_row(&next()?, n_out)?);
    }
    PolicyParams::from_values(&sizes, activation, values)
}

pub fn save_checkpoint(params: &PolicyParams, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_checkpoint(params, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<PolicyParams> {
    let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    read_checkpoint(BufReader::new(file)).map_err(|e| Error::file(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let p = PolicyParams::init(&[6, 16, 16, 9], Activation::Tanh, 12).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&p, &mut buf).unwrap();
        let q = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn rejects_truncated_input() {
        let p = PolicyParams::init(&[2, 3, 2], Activation::Relu, 1).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&p, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
        assert!(read_checkpoint(cut.as_bytes()).is_err());
        assert!(read_checkpoint("hello\n".as_bytes()).is_err());
    }
}
