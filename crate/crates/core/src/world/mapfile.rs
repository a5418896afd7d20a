//! Plain-text map format.
//!
//! ```text
//! himos-map 1
//! width_m 50
//! height_m 50
//! cell_size 0.25
//! seed 7
//! difficulty medium
//! substrate 0 1200 35 ...
//! coral 0 4007 1 ...
//! ```
//!
//! Each layer line holds the value of the first row-major cell followed by alternating run
//! lengths. `seed` and `difficulty` are optional; `#` starts a comment line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Difficulty, GridSpec, GroundTruth};
use crate::error::{Error, Result};

const MAGIC: &str = "himos-map";
const VERSION: &str = "1";

fn encode_layer(bits: &[bool]) -> String {
    let mut out = String::new();
    let Some(&first) = bits.first() else {
        return out;
    };
    out.push(if first { '1' } else { '0' });
    let mut current = first;
    let mut run = 0usize;
    for &b in bits {
        if b == current {
            run += 1;
        } else {
            let _ = write!(out, " {run}");
            current = b;
            run = 1;
        }
    }
    let _ = write!(out, " {run}");
    out
}

pub fn write_map(gt: &GroundTruth) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC} {VERSION}");
    let _ = writeln!(s, "width_m {}", gt.spec.width_m);
    let _ = writeln!(s, "height_m {}", gt.spec.height_m);
    let _ = writeln!(s, "cell_size {}", gt.spec.cell_size);
    if let Some(seed) = gt.seed {
        let _ = writeln!(s, "seed {seed}");
    }
    if let Some(d) = gt.difficulty {
        let _ = writeln!(s, "difficulty {d}");
    }
    let _ = writeln!(s, "substrate {}", encode_layer(&gt.substrate));
    let _ = writeln!(s, "coral {}", encode_layer(&gt.coral));
    s
}

pub fn save_map(gt: &GroundTruth, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_map(gt)).map_err(|e| Error::io(path, e))
}

pub fn load_map(path: impl AsRef<Path>) -> Result<GroundTruth> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_map(&text)
}

struct Token<'a> {
    text: &'a str,
    offset: usize,
}

fn tokens(line: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        match (ch.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push(Token { text: &line[s..i], offset: s });
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(Token { text: &line[s..], offset: s });
    }
    out
}

fn perr(line: usize, offset: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, offset, msg: msg.into() }
}

fn parse_value<T: std::str::FromStr>(line: usize, toks: &[Token<'_>]) -> Result<T> {
    match toks {
        [_, v] => v.text.parse().map_err(|_| perr(line, v.offset, format!("invalid value `{}`", v.text))),
        [k] => Err(perr(line, k.offset + k.text.len(), format!("missing value for `{}`", k.text))),
        [_, _, extra, ..] => Err(perr(line, extra.offset, "unexpected trailing token")),
        [] => unreachable!(),
    }
}

fn decode_layer(line: usize, toks: &[Token<'_>], n: usize) -> Result<Vec<bool>> {
    let Some(first) = toks.get(1) else {
        return Err(perr(line, toks[0].offset + toks[0].text.len(), "layer has no data"));
    };
    let mut value = match first.text {
        "0" => false,
        "1" => true,
        _ => return Err(perr(line, first.offset, "layer must start with its first cell value (0 or 1)")),
    };
    let mut bits = Vec::with_capacity(n);
    for t in &toks[2..] {
        let run: usize = t.text.parse().map_err(|_| perr(line, t.offset, format!("invalid run length `{}`", t.text)))?;
        if run == 0 {
            return Err(perr(line, t.offset, "zero-length run"));
        }
        if bits.len() + run > n {
            return Err(perr(line, t.offset, format!("runs exceed grid size {n}")));
        }
        bits.extend(std::iter::repeat_n(value, run));
        value = !value;
    }
    if bits.len() != n {
        let end = toks.last().map(|t| t.offset + t.text.len()).unwrap_or(0);
        return Err(perr(line, end, format!("runs cover {} cells, grid has {n}", bits.len())));
    }
    Ok(bits)
}

pub fn parse_map(text: &str) -> Result<GroundTruth> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));

    let Some((ln, header)) = lines.next() else {
        return Err(perr(1, 0, "empty map file"));
    };
    let toks = tokens(header);
    if toks.len() != 2 || toks[0].text != MAGIC {
        return Err(perr(ln, 0, format!("expected header `{MAGIC} {VERSION}`")));
    }
    if toks[1].text != VERSION {
        return Err(perr(ln, toks[1].offset, format!("unsupported version `{}`", toks[1].text)));
    }

    let (mut width, mut height, mut cell) = (None, None, None);
    let (mut seed, mut difficulty) = (None, None);
    let (mut substrate, mut coral) = (None, None);
    let mut last_line = ln;
    for (ln, line) in lines {
        last_line = ln;
        let toks = tokens(line);
        let key = &toks[0];
        match key.text {
            "width_m" => width = Some(parse_value::<f64>(ln, &toks)?),
            "height_m" => height = Some(parse_value::<f64>(ln, &toks)?),
            "cell_size" => cell = Some(parse_value::<f64>(ln, &toks)?),
            "seed" => seed = Some(parse_value::<u64>(ln, &toks)?),
            "difficulty" => {
                let d: String = parse_value(ln, &toks)?;
                difficulty = Some(d.parse::<Difficulty>().map_err(|_| perr(ln, toks[1].offset, format!("unknown difficulty `{d}`")))?);
            }
            "substrate" | "coral" => {
                let (Some(w), Some(h), Some(c)) = (width, height, cell) else {
                    return Err(perr(ln, key.offset, "layer before grid dimensions"));
                };
                let spec = GridSpec::new(w, h, c).map_err(|e| perr(ln, key.offset, e.to_string()))?;
                let bits = decode_layer(ln, &toks, spec.len())?;
                if key.text == "substrate" {
                    substrate = Some((spec, bits));
                } else {
                    coral = Some(bits);
                }
            }
            other => return Err(perr(ln, key.offset, format!("unknown key `{other}`"))),
        }
    }
    let (Some((spec, substrate)), Some(coral)) = (substrate, coral) else {
        return Err(perr(last_line + 1, 0, "missing substrate or coral layer"));
    };
    let mut gt = GroundTruth::new(spec, substrate, coral)?;
    gt.seed = seed;
    gt.difficulty = difficulty;
    Ok(gt)
}
