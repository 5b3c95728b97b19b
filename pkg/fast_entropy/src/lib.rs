//! Single-lane byte-renormalized rANS coder behind a flat-buffer C ABI.
//!
//! Wire-compatible, byte for byte, with the host codec's pure-Python
//! reference coder:
//!
//! * 32-bit state with lower renormalization bound 2^23, one byte per
//!   renorm step, 16-bit cumulative frequencies.
//! * Symbols are encoded in reverse so the decoder reads the payload
//!   forward; the payload is 4 little-endian state bytes followed by the
//!   renorm bytes.
//! * Values outside a table's support escape through the table's final bin
//!   followed by eight 4-bit bypass nibbles (most significant first)
//!   holding the value as a two's-complement 32-bit integer; nibbles use an
//!   implicit uniform table with frequency 2^12.
//! * Decoding must return the state to the lower bound with the payload
//!   fully consumed, otherwise the stream is rejected.
//!
//! Payloads are untrusted input: every table access is bounds-checked and
//! malformed streams or tables produce an error status, never reads out of
//! range. Tables arrive as flat int32 buffers (`cdfs` row-major with a
//! fixed stride, per-table `lengths` counting valid cdf entries, per-table
//! `offsets` mapping bin 0 to its symbol value).

const PRECISION: u32 = 16;
const TOTAL_FREQ: i64 = 1 << PRECISION;
const STATE_MASK: u64 = (TOTAL_FREQ - 1) as u64;
const RANS_LOWER: u64 = 1 << 23;
const RENORM_BASE: u64 = (RANS_LOWER >> PRECISION) << 8;
const NIBBLE_FREQ: u32 = (TOTAL_FREQ as u32) >> 4;
const NIBBLE_COUNT: usize = 8;

pub const FE_OK: i32 = 0;
pub const FE_OUTPUT_TOO_SMALL: i32 = 1;
pub const FE_PAYLOAD_EXHAUSTED: i32 = 2;
pub const FE_STATE_NOT_CLOSED: i32 = 3;
pub const FE_INVALID_ARGS: i32 = 4;

struct Tables<'a> {
    cdfs: &'a [i32],
    stride: usize,
    lengths: &'a [i32],
    offsets: &'a [i32],
}

impl Tables<'_> {
    /// Bounds-checked view of one table's cdf row and its symbol offset.
    fn row(&self, index: i32) -> Result<(&[i32], i32), i32> {
        if index < 0 || index as usize >= self.lengths.len() {
            return Err(FE_INVALID_ARGS);
        }
        let t = index as usize;
        let len = self.lengths[t];
        // minimum useful row: one real bin + escape bin + closing sentinel
        if len < 3 || len as usize > self.stride {
            return Err(FE_INVALID_ARGS);
        }
        let base = t * self.stride;
        Ok((&self.cdfs[base..base + len as usize], self.offsets[t]))
    }
}

/// (start, frequency) of bin `s`, validated so state arithmetic cannot
/// divide by zero or leave the 16-bit frequency domain.
fn bin(row: &[i32], s: usize) -> Result<(u32, u32), i32> {
    let start = row[s] as i64;
    let end = row[s + 1] as i64;
    if start < 0 || end <= start || end > TOTAL_FREQ {
        return Err(FE_INVALID_ARGS);
    }
    Ok((start as u32, (end - start) as u32))
}

fn encode_core(
    symbols: &[i32],
    indexes: &[i32],
    tables: &Tables,
    out: &mut [u8],
) -> Result<usize, i32> {
    let mut x: u64 = RANS_LOWER;
    let mut tail: Vec<u8> = Vec::with_capacity(symbols.len() * 2 + 8);

    fn put(x: &mut u64, tail: &mut Vec<u8>, start: u32, freq: u32) {
        let x_max = RENORM_BASE * freq as u64;
        while *x >= x_max {
            tail.push((*x & 0xFF) as u8);
            *x >>= 8;
        }
        *x = ((*x / freq as u64) << PRECISION) + (*x % freq as u64) + start as u64;
    }

    // reverse symbol order, and within an escape the nibbles least
    // significant first, which is the forward op order reversed
    for i in (0..symbols.len()).rev() {
        let (row, offset) = tables.row(indexes[i])?;
        let n_real = row.len() - 2;
        let v = symbols[i] as i64 - offset as i64;
        if v >= 0 && (v as usize) < n_real {
            let (start, freq) = bin(row, v as usize)?;
            put(&mut x, &mut tail, start, freq);
        } else {
            let u = symbols[i] as u32;
            for k in 0..NIBBLE_COUNT {
                let nib = (u >> (4 * k)) & 0xF;
                put(&mut x, &mut tail, nib * NIBBLE_FREQ, NIBBLE_FREQ);
            }
            let (start, freq) = bin(row, n_real)?;
            put(&mut x, &mut tail, start, freq);
        }
    }

    let total = 4 + tail.len();
    if total > out.len() {
        return Err(FE_OUTPUT_TOO_SMALL);
    }
    out[..4].copy_from_slice(&(x as u32).to_le_bytes());
    for (dst, &b) in out[4..total].iter_mut().zip(tail.iter().rev()) {
        *dst = b;
    }
    Ok(total)
}

fn decode_core(
    payload: &[u8],
    indexes: &[i32],
    tables: &Tables,
    out: &mut [i32],
) -> i32 {
    if payload.len() < 4 {
        return FE_PAYLOAD_EXHAUSTED;
    }
    let mut x =
        u32::from_le_bytes([payload[0], payload[1], payload[2], payload[3]]) as u64;
    let mut pos = 4usize;

    for i in 0..indexes.len() {
        let (row, offset) = match tables.row(indexes[i]) {
            Ok(v) => v,
            Err(e) => return e,
        };
        let cf = x & STATE_MASK;
        // searchsorted-right minus one: the bin whose start is <= cf
        let pp = row.partition_point(|&v| v as i64 <= cf as i64);
        if pp == 0 || pp >= row.len() {
            return FE_INVALID_ARGS;
        }
        let s = pp - 1;
        let (start, freq) = match bin(row, s) {
            Ok(v) => v,
            Err(e) => return e,
        };
        x = freq as u64 * (x >> PRECISION) + cf - start as u64;
        while x < RANS_LOWER {
            if pos >= payload.len() {
                return FE_PAYLOAD_EXHAUSTED;
            }
            x = (x << 8) | payload[pos] as u64;
            pos += 1;
        }
        let n_real = row.len() - 2;
        if s < n_real {
            out[i] = (s as i64 + offset as i64) as i32;
        } else {
            let mut u: u32 = 0;
            for _ in 0..NIBBLE_COUNT {
                let cf = x & STATE_MASK;
                let nib = (cf >> 12) as u32;
                x = NIBBLE_FREQ as u64 * (x >> PRECISION) + cf
                    - (nib * NIBBLE_FREQ) as u64;
                while x < RANS_LOWER {
                    if pos >= payload.len() {
                        return FE_PAYLOAD_EXHAUSTED;
                    }
                    x = (x << 8) | payload[pos] as u64;
                    pos += 1;
                }
                u = (u << 4) | nib;
            }
            out[i] = u as i32;
        }
    }
    if x != RANS_LOWER || pos != payload.len() {
        return FE_STATE_NOT_CLOSED;
    }
    FE_OK
}

/// Encode `n` symbols, each under the cdf table selected by its index.
///
/// Returns FE_OK and sets `out_len` on success. `out_cap` of
/// `n * 24 + 64` always suffices (worst case every symbol escapes).
///
/// # Safety
/// Pointers must be valid for the lengths implied by `n`, `cdf_stride`,
/// `n_tables` and `out_cap`.
#[no_mangle]
pub unsafe extern "C" fn fe_encode(
    symbols: *const i32,
    indexes: *const i32,
    n: usize,
    cdfs: *const i32,
    cdf_stride: usize,
    lengths: *const i32,
    offsets: *const i32,
    n_tables: usize,
    out: *mut u8,
    out_cap: usize,
    out_len: *mut usize,
) -> i32 {
    if out_len.is_null() {
        return FE_INVALID_ARGS;
    }
    *out_len = 0;
    if n == 0 {
        return FE_OK;
    }
    if symbols.is_null()
        || indexes.is_null()
        || cdfs.is_null()
        || lengths.is_null()
        || offsets.is_null()
        || out.is_null()
        || n_tables == 0
        || cdf_stride == 0
    {
        return FE_INVALID_ARGS;
    }
    let tables = Tables {
        cdfs: std::slice::from_raw_parts(cdfs, n_tables * cdf_stride),
        stride: cdf_stride,
        lengths: std::slice::from_raw_parts(lengths, n_tables),
        offsets: std::slice::from_raw_parts(offsets, n_tables),
    };
    match encode_core(
        std::slice::from_raw_parts(symbols, n),
        std::slice::from_raw_parts(indexes, n),
        &tables,
        std::slice::from_raw_parts_mut(out, out_cap),
    ) {
        Ok(len) => {
            *out_len = len;
            FE_OK
        }
        Err(e) => e,
    }
}

/// Decode exactly `n` symbols from an untrusted payload into `out`.
///
/// # Safety
/// Pointers must be valid for the lengths implied by `payload_len`, `n`,
/// `cdf_stride` and `n_tables`; `out` must hold `n` int32 values.
#[no_mangle]
pub unsafe extern "C" fn fe_decode(
    payload: *const u8,
    payload_len: usize,
    indexes: *const i32,
    n: usize,
    cdfs: *const i32,
    cdf_stride: usize,
    lengths: *const i32,
    offsets: *const i32,
    n_tables: usize,
    out: *mut i32,
) -> i32 {
    if n == 0 {
        return if payload_len == 0 { FE_OK } else { FE_INVALID_ARGS };
    }
    if (payload.is_null() && payload_len > 0)
        || indexes.is_null()
        || cdfs.is_null()
        || lengths.is_null()
        || offsets.is_null()
        || out.is_null()
        || n_tables == 0
        || cdf_stride == 0
    {
        return FE_INVALID_ARGS;
    }
    let tables = Tables {
        cdfs: std::slice::from_raw_parts(cdfs, n_tables * cdf_stride),
        stride: cdf_stride,
        lengths: std::slice::from_raw_parts(lengths, n_tables),
        offsets: std::slice::from_raw_parts(offsets, n_tables),
    };
    decode_core(
        std::slice::from_raw_parts(payload, payload_len),
        std::slice::from_raw_parts(indexes, n),
        &tables,
        std::slice::from_raw_parts_mut(out, n),
    )
}
