//! Bit-sequence helpers shared by the framing and modem layers.
//!
//! Bits are carried as `Vec<u8>` with one bit per element (0 or 1).
//! Octets serialize LSB-first, matching the 802.11 transmit order, so
//! golden vectors stay bit-exact across the byte/bit boundary.

/// Expand bytes into bits, LSB of each octet first.
pub fn bytes_to_bits(bytes: &[u8]) -> Vec<u8> {
    let mut bits = Vec::with_capacity(bytes.len() * 8);
    for &b in bytes {
        for i in 0..8 {
            bits.push((b >> i) & 1);
        }
    }
    bits
}

/// Pack bits (LSB-first per octet) back into bytes. Length must be a
/// multiple of 8.
pub fn bits_to_bytes(bits: &[u8]) -> Vec<u8> {
    assert!(bits.len() % 8 == 0, "bit count {} not octet aligned", bits.len());
    bits.chunks(8)
        .map(|chunk| {
            chunk
                .iter()
                .enumerate()
                .fold(0u8, |acc, (i, &b)| acc | ((b & 1) << i))
        })
        .collect()
}

/// Expand a u16 into 16 bits, LSB first.
pub fn u16_to_bits(v: u16) -> Vec<u8> {
    (0..16).map(|i| ((v >> i) & 1) as u8).collect()
}

/// Collect 16 bits (LSB first) into a u16.
pub fn bits_to_u16(bits: &[u8]) -> u16 {
    assert_eq!(bits.len(), 16);
    bits.iter()
        .enumerate()
        .fold(0u16, |acc, (i, &b)| acc | ((b as u16 & 1) << i))
}

/// CRC-16 CCITT (x^16 + x^12 + x^5 + 1) over a bit stream in transmit
/// order. Registers preset to ones, output complemented, as the PLCP
/// header CRC requires.
pub fn crc16_ccitt_bits(bits: &[u8]) -> u16 {
    let mut reg: u16 = 0xFFFF;
    for &bit in bits {
        let fb = (bit as u16 & 1) ^ (reg >> 15);
        reg <<= 1;
        if fb != 0 {
            reg ^= 0x1021;
        }
    }
    !reg
}

/// IEEE CRC-32 (reflected) over bytes; used as the MPDU frame check
/// sequence. The complemented value is appended little-endian.
pub fn crc32_ieee(bytes: &[u8]) -> u32 {
    let mut reg: u32 = 0xFFFF_FFFF;
    for &b in bytes {
        reg ^= b as u32;
        for _ in 0..8 {
            let lsb = reg & 1;
            reg >>= 1;
            if lsb != 0 {
                reg ^= 0xEDB8_8320;
            }
        }
    }
    !reg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bytes_bits_round_trip() {
        let bytes = [0x00, 0xFF, 0xA5, 0x3C];
        assert_eq!(bits_to_bytes(&bytes_to_bits(&bytes)), bytes);
    }

    #[test]
    fn lsb_first_order() {
        // 0x01 -> first bit on the wire is 1.
        assert_eq!(bytes_to_bits(&[0x01])[0], 1);
        assert_eq!(bytes_to_bits(&[0x80])[7], 1);
    }

    #[test]
    fn crc32_check_value() {
        // Standard check value for "123456789".
        assert_eq!(crc32_ieee(b"123456789"), 0xCBF4_3926);
    }

    #[test]
    fn crc16_detects_single_bit_flips() {
        let bits = bytes_to_bits(&[0x0A, 0x00, 0x20, 0x03]);
        let crc = crc16_ccitt_bits(&bits);
        for i in 0..bits.len() {
            let mut corrupted = bits.clone();
            corrupted[i] ^= 1;
            assert_ne!(crc16_ccitt_bits(&corrupted), crc, "flip at {i} undetected");
        }
    }
}
