//! Bit-exact payload packing for feedback records.
//!
//! Feedback payloads are specified down to the bit so the serialized length
//! can be checked against the reported bit count. Fields are written
//! most-significant-bit first in field order; the final byte is zero-padded.

/// Append-only bit sink.
#[derive(Default, Clone)]
pub struct BitWriter {
    bytes: Vec<u8>,
    bit_len: usize,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Write the `width` low bits of `value`, MSB first.
    pub fn write(&mut self, value: u64, width: usize) {
        assert!(width <= 64);
        if width < 64 {
            debug_assert!(value < (1u64 << width), "value {value} overflows {width} bits");
        }
        for i in (0..width).rev() {
            let bit = (value >> i) & 1;
            let byte_idx = self.bit_len / 8;
            if byte_idx == self.bytes.len() {
                self.bytes.push(0);
            }
            if bit == 1 {
                self.bytes[byte_idx] |= 1 << (7 - self.bit_len % 8);
            }
            self.bit_len += 1;
        }
    }

    pub fn bit_len(&self) -> usize {
        self.bit_len
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }
}

/// Cursor over a packed payload.
pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    /// Read `width` bits MSB first. Returns `None` past the end of data.
    pub fn read(&mut self, width: usize) -> Option<u64> {
        assert!(width <= 64);
        if self.pos + width > self.bytes.len() * 8 {
            return None;
        }
        let mut v = 0u64;
        for _ in 0..width {
            let byte = self.bytes[self.pos / 8];
            let bit = (byte >> (7 - self.pos % 8)) & 1;
            v = (v << 1) | bit as u64;
            self.pos += 1;
        }
        Some(v)
    }

    pub fn bits_read(&self) -> usize {
        self.pos
    }
}

/// Bits needed to index `count` alternatives; 0 for a single alternative.
pub fn index_bits(count: usize) -> usize {
    if count <= 1 {
        0
    } else {
        (usize::BITS - (count - 1).leading_zeros()) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_mixed_widths() {
        let mut w = BitWriter::new();
        w.write(0b101, 3);
        w.write(0, 1);
        w.write(0x3ff, 10);
        w.write(7, 5);
        assert_eq!(w.bit_len(), 19);
        let bytes = w.into_bytes();
        assert_eq!(bytes.len(), 3);
        let mut r = BitReader::new(&bytes);
        assert_eq!(r.read(3), Some(0b101));
        assert_eq!(r.read(1), Some(0));
        assert_eq!(r.read(10), Some(0x3ff));
        assert_eq!(r.read(5), Some(7));
    }

    #[test]
    fn index_bits_boundaries() {
        assert_eq!(index_bits(1), 0);
        assert_eq!(index_bits(2), 1);
        assert_eq!(index_bits(8), 3);
        assert_eq!(index_bits(9), 4);
        assert_eq!(index_bits(1024), 10);
    }

    #[test]
    fn reader_rejects_overrun() {
        let mut w = BitWriter::new();
        w.write(1, 2);
        let bytes = w.into_bytes();
        let mut r = BitReader::new(&bytes);
        assert!(r.read(8).is_some()); // padded byte readable
        assert!(r.read(1).is_none());
    }
}
