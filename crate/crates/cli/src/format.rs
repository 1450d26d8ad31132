use sha2::{Digest, Sha256};

/// `%g`-style rendering with 6 significant digits, for tables.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-4..6).contains(&exp) {
        let s = format!("{x:.5e}");
        let (mantissa, e) = s.split_once('e').expect("scientific format");
        return format!("{}e{e}", trim_zeros(mantissa));
    }
    trim_zeros(&format!("{x:.*}", (5 - exp) as usize)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn spec_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// First line of every CSV the tool writes.
pub fn csv_preamble(seed: Option<u64>, spec_hash: &str) -> String {
    let seed = seed.map_or_else(|| "none".to_string(), |s| s.to_string());
    format!("# qjn v1, seed={seed}, spec_hash={spec_hash}\n")
}

/// Cell for an optional float in CSV: full precision, empty when absent.
pub fn cell(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Left-aligned text table.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (k, (c, w)) in cells.iter().zip(&widths).enumerate() {
            if k > 0 {
                s.push_str("  ");
            }
            s.push_str(c);
            if k + 1 < cells.len() {
                s.extend(std::iter::repeat(' ').take(w - c.chars().count()));
            }
        }
        s.push('\n');
        s
    };
    let mut out = line(header.to_vec());
    for row in rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out
}
