//! Simulated time is integer nanoseconds. Sizes are bytes. Bandwidth is
//! bits per second. Helpers here parse the human-facing spellings used on
//! the command line ("4MiB", "90s", "2m") and format values for reports.

pub type Nanos = u64;

pub const NANOS_PER_MICRO: Nanos = 1_000;
pub const NANOS_PER_MILLI: Nanos = 1_000_000;
pub const NANOS_PER_SEC: Nanos = 1_000_000_000;

pub const KIB: u64 = 1024;
pub const MIB: u64 = 1024 * 1024;
pub const GIB: u64 = 1024 * 1024 * 1024;

pub fn millis(ms: u64) -> Nanos {
    ms * NANOS_PER_MILLI
}

pub fn secs(s: u64) -> Nanos {
    s * NANOS_PER_SEC
}

pub fn nanos_to_secs_f64(ns: Nanos) -> f64 {
    ns as f64 / NANOS_PER_SEC as f64
}

pub fn nanos_to_millis_f64(ns: Nanos) -> f64 {
    ns as f64 / NANOS_PER_MILLI as f64
}

/// Parse a byte size: a bare integer or an integer with a B/KiB/MiB/GiB suffix.
pub fn parse_size(text: &str) -> Result<u64, String> {
    let t = text.trim();
    let (digits, mult) = if let Some(d) = t.strip_suffix("GiB") {
        (d, GIB)
    } else if let Some(d) = t.strip_suffix("MiB") {
        (d, MIB)
    } else if let Some(d) = t.strip_suffix("KiB") {
        (d, KIB)
    } else if let Some(d) = t.strip_suffix('B') {
        (d, 1)
    } else {
        (t, 1)
    };
    let n: u64 = digits
        .trim()
        .parse()
        .map_err(|_| format!("bad size {t:?} (expected e.g. 4096, 16KiB, 4MiB)"))?;
    n.checked_mul(mult)
        .ok_or_else(|| format!("size {t:?} overflows"))
}

/// Parse a duration: integer with ms/s/m suffix; a bare integer means seconds.
pub fn parse_duration(text: &str) -> Result<Nanos, String> {
    let t = text.trim();
    let (digits, mult) = if let Some(d) = t.strip_suffix("ms") {
        (d, NANOS_PER_MILLI)
    } else if let Some(d) = t.strip_suffix('s') {
        (d, NANOS_PER_SEC)
    } else if let Some(d) = t.strip_suffix('m') {
        (d, 60 * NANOS_PER_SEC)
    } else {
        (t, NANOS_PER_SEC)
    };
    let n: u64 = digits
        .trim()
        .parse()
        .map_err(|_| format!("bad duration {t:?} (expected e.g. 500ms, 90s, 2m)"))?;
    n.checked_mul(mult)
        .ok_or_else(|| format!("duration {t:?} overflows"))
}

/// Fixed-precision millisecond rendering used in CSV rows; stable across runs.
pub fn fmt_millis(ns: Nanos) -> String {
    format!("{}.{:06}", ns / NANOS_PER_MILLI, ns % NANOS_PER_MILLI)
}
