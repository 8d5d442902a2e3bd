//! 802.11b PPDU construction and parsing for beacon frames.
//!
//! Covers the MPDU (management header + SSID element + FCS), the 48-bit
//! PLCP header, the 144-bit long preamble, and the self-synchronizing
//! data scrambler. Everything operates on LSB-first bit sequences so the
//! transmit stream is bit-exact.

use std::fmt;
use std::str::FromStr;

use crate::bits::{bits_to_bytes, bits_to_u16, bytes_to_bits, crc16_ccitt_bits, crc32_ieee, u16_to_bits};
use crate::error::{Error, Result};

/// Scrambler initial state for the long preamble.
pub const LONG_PREAMBLE_SEED: u8 = 0b110_1100;
/// Start frame delimiter for the long preamble, serialized LSB-first.
pub const SFD: u16 = 0xF3A0;
/// SIGNAL field rate code for 1 Mbps DBPSK (units of 100 kbit/s).
pub const SIGNAL_1MBPS: u8 = 0x0A;
/// SYNC length in bits (scrambled ones).
pub const SYNC_BITS: usize = 128;
/// Long preamble length in bits (SYNC + SFD).
pub const PREAMBLE_BITS: usize = 144;
/// PLCP header length in bits.
pub const HEADER_BITS: usize = 48;

/// Six-octet hardware address, printed `AA-BB-CC-DD-EE-FF`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MacAddr(pub [u8; 6]);

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.0;
        write!(
            f,
            "{:02X}-{:02X}-{:02X}-{:02X}-{:02X}-{:02X}",
            b[0], b[1], b[2], b[3], b[4], b[5]
        )
    }
}

impl FromStr for MacAddr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(['-', ':']).collect();
        if parts.len() != 6 {
            return Err(Error::Parse(format!("bad MAC address {s:?}")));
        }
        let mut out = [0u8; 6];
        for (i, p) in parts.iter().enumerate() {
            out[i] = u8::from_str_radix(p, 16)
                .map_err(|_| Error::Parse(format!("bad MAC address {s:?}")))?;
        }
        Ok(MacAddr(out))
    }
}

/// Beacon content carried in the MPDU.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BeaconPayload {
    pub ssid: String,
    pub mac: MacAddr,
    /// Uninterpreted 16-bit beacon interval field.
    pub beacon_interval: u16,
    /// Zero octets carried in padding element bodies, used to reach a
    /// chosen MPDU size.
    pub body_padding: usize,
}

impl BeaconPayload {
    pub fn new(ssid: &str, mac: MacAddr) -> Self {
        BeaconPayload {
            ssid: ssid.to_owned(),
            mac,
            beacon_interval: 100,
            body_padding: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.ssid.is_empty() {
            return Err(Error::Encode("SSID must be non-empty".into()));
        }
        if self.ssid.len() > 32 {
            return Err(Error::Encode(format!("SSID {:?} over 32 octets", self.ssid)));
        }
        let bits = encoded_psdu_bits(self.ssid.len(), self.body_padding);
        if bits > u16::MAX as usize {
            return Err(Error::Encode(format!("MPDU of {bits} bits exceeds LENGTH field")));
        }
        Ok(())
    }
}

const FC_BEACON: [u8; 2] = [0x80, 0x00];
const BROADCAST: [u8; 6] = [0xFF; 6];
const EID_SSID: u8 = 0x00;
const EID_PADDING: u8 = 0xDD;

/// Fixed MPDU overhead in octets: frame control, duration, three
/// addresses, sequence control, beacon interval, FCS.
const MPDU_FIXED_OCTETS: usize = 2 + 2 + 6 + 6 + 6 + 2 + 2 + 4;

/// Encoded MPDU size in bits for a given SSID length and padding count.
pub fn encoded_psdu_bits(ssid_len: usize, body_padding: usize) -> usize {
    let mut octets = MPDU_FIXED_OCTETS + 2 + ssid_len;
    if body_padding > 0 {
        let elements = body_padding.div_ceil(255);
        octets += body_padding + 2 * elements;
    }
    octets * 8
}

/// Padding count that makes the encoded MPDU exactly `target_bits` long,
/// or an error when no padding count can reach it.
pub fn padding_for_psdu_bits(ssid_len: usize, target_bits: usize) -> Result<usize> {
    if encoded_psdu_bits(ssid_len, 0) == target_bits {
        return Ok(0);
    }
    // Element overhead is 2 octets per started 255-octet chunk, so step
    // through candidate counts directly.
    let base = encoded_psdu_bits(ssid_len, 0);
    if target_bits <= base || (target_bits - base) % 8 != 0 {
        return Err(Error::Encode(format!("cannot pad SSID len {ssid_len} to {target_bits} bits")));
    }
    let extra_octets = (target_bits - base) / 8;
    for pad in extra_octets.saturating_sub(2 * extra_octets.div_ceil(255))..=extra_octets {
        if encoded_psdu_bits(ssid_len, pad) == target_bits {
            return Ok(pad);
        }
    }
    Err(Error::Encode(format!("cannot pad SSID len {ssid_len} to {target_bits} bits")))
}

/// Encode a beacon MPDU into its bit sequence (LSB-first octets).
pub fn encode_beacon_psdu(payload: &BeaconPayload) -> Result<Vec<u8>> {
    payload.validate()?;
    let mut bytes = Vec::with_capacity(MPDU_FIXED_OCTETS + 2 + payload.ssid.len() + payload.body_padding);
    bytes.extend_from_slice(&FC_BEACON);
    bytes.extend_from_slice(&[0x00, 0x00]); // duration
    bytes.extend_from_slice(&BROADCAST); // addr1
    bytes.extend_from_slice(&payload.mac.0); // addr2: source
    bytes.extend_from_slice(&payload.mac.0); // addr3: BSSID
    bytes.extend_from_slice(&[0x00, 0x00]); // sequence control
    bytes.extend_from_slice(&payload.beacon_interval.to_le_bytes());
    bytes.push(EID_SSID);
    bytes.push(payload.ssid.len() as u8);
    bytes.extend_from_slice(payload.ssid.as_bytes());
    let mut remaining = payload.body_padding;
    while remaining > 0 {
        let chunk = remaining.min(255);
        bytes.push(EID_PADDING);
        bytes.push(chunk as u8);
        bytes.extend(std::iter::repeat(0u8).take(chunk));
        remaining -= chunk;
    }
    let fcs = crc32_ieee(&bytes);
    bytes.extend_from_slice(&fcs.to_le_bytes());
    Ok(bytes_to_bits(&bytes))
}

/// Parse a beacon MPDU bit sequence back into its payload.
///
/// Fails with [`Error::Integrity`] when the FCS does not match, and
/// [`Error::Parse`] on truncated or malformed structure.
pub fn decode_beacon_psdu(bits: &[u8]) -> Result<BeaconPayload> {
    if bits.len() % 8 != 0 {
        return Err(Error::Parse(format!("MPDU bit count {} not octet aligned", bits.len())));
    }
    let bytes = bits_to_bytes(bits);
    if bytes.len() < MPDU_FIXED_OCTETS + 2 {
        return Err(Error::Parse(format!("MPDU truncated at {} octets", bytes.len())));
    }
    let (body, fcs_bytes) = bytes.split_at(bytes.len() - 4);
    let fcs = u32::from_le_bytes(fcs_bytes.try_into().unwrap());
    if crc32_ieee(body) != fcs {
        return Err(Error::Integrity("MPDU FCS mismatch".into()));
    }
    if body[0..2] != FC_BEACON {
        return Err(Error::Parse(format!("not a beacon frame control: {:02X?}", &body[0..2])));
    }
    let mac = MacAddr(body[10..16].try_into().unwrap());
    let beacon_interval = u16::from_le_bytes(body[24..26].try_into().unwrap());
    let mut ssid = None;
    let mut body_padding = 0usize;
    let mut pos = 26;
    while pos < body.len() {
        if pos + 2 > body.len() {
            return Err(Error::Parse(format!("truncated element header at octet {pos}")));
        }
        let (eid, len) = (body[pos], body[pos + 1] as usize);
        pos += 2;
        if pos + len > body.len() {
            return Err(Error::Parse(format!("element {eid} overruns MPDU at octet {pos}")));
        }
        match eid {
            EID_SSID => {
                let text = std::str::from_utf8(&body[pos..pos + len])
                    .map_err(|_| Error::Parse("SSID is not valid UTF-8".into()))?;
                ssid = Some(text.to_owned());
            }
            EID_PADDING => body_padding += len,
            other => return Err(Error::Parse(format!("unexpected element id {other}"))),
        }
        pos += len;
    }
    let ssid = ssid.ok_or_else(|| Error::Parse("missing SSID element".into()))?;
    Ok(BeaconPayload { ssid, mac, beacon_interval, body_padding })
}

/// Self-synchronizing scrambler, G(z) = z^-7 + z^-4 + 1.
///
/// The 7-bit register holds previous output bits; bit 0 is the most
/// recent.
pub fn scramble(bits: &[u8], seed: u8) -> Vec<u8> {
    let mut state = seed & 0x7F;
    bits.iter()
        .map(|&d| {
            let out = (d & 1) ^ ((state >> 3) & 1) ^ ((state >> 6) & 1);
            state = ((state << 1) | out) & 0x7F;
            out
        })
        .collect()
}

/// Inverse of [`scramble`]; the register holds received (scrambled)
/// bits, so it self-synchronizes within 7 bits for any seed.
pub fn descramble(bits: &[u8], seed: u8) -> Vec<u8> {
    let mut state = seed & 0x7F;
    bits.iter()
        .map(|&d| {
            let out = (d & 1) ^ ((state >> 3) & 1) ^ ((state >> 6) & 1);
            state = ((state << 1) | (d & 1)) & 0x7F;
            out
        })
        .collect()
}

/// Parsed 48-bit PLCP header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlcpHeader {
    pub signal: u8,
    pub service: u8,
    /// MPDU length in bits (equals microseconds at 1 Mbps).
    pub length_bits: u16,
    pub crc: u16,
    pub crc_ok: bool,
}

impl PlcpHeader {
    /// Build a valid header for an MPDU of `length_bits` bits at 1 Mbps.
    pub fn for_length(length_bits: u16) -> Self {
        let mut bits = Vec::with_capacity(32);
        bits.extend(bytes_to_bits(&[SIGNAL_1MBPS, 0x00]));
        bits.extend(u16_to_bits(length_bits));
        let crc = crc16_ccitt_bits(&bits);
        PlcpHeader { signal: SIGNAL_1MBPS, service: 0, length_bits, crc, crc_ok: true }
    }

    /// Serialize to the 48-bit wire sequence.
    pub fn to_bits(&self) -> Vec<u8> {
        let mut bits = Vec::with_capacity(HEADER_BITS);
        bits.extend(bytes_to_bits(&[self.signal, self.service]));
        bits.extend(u16_to_bits(self.length_bits));
        bits.extend(u16_to_bits(self.crc));
        bits
    }
}

/// Parse a 48-bit PLCP header, setting `crc_ok` from the checksum.
pub fn parse_plcp(header_bits: &[u8]) -> Result<PlcpHeader> {
    if header_bits.len() != HEADER_BITS {
        return Err(Error::Parse(format!("PLCP header must be 48 bits, got {}", header_bits.len())));
    }
    let bytes = bits_to_bytes(&header_bits[0..16]);
    let length_bits = bits_to_u16(&header_bits[16..32]);
    let crc = bits_to_u16(&header_bits[32..48]);
    let crc_ok = crc16_ccitt_bits(&header_bits[0..32]) == crc;
    Ok(PlcpHeader { signal: bytes[0], service: bytes[1], length_bits, crc, crc_ok })
}

/// A PPDU held as plain (unscrambled) bit fields. [`Ppdu::transmit_bits`]
/// produces the scrambled on-air stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ppdu {
    pub preamble_bits: Vec<u8>,
    pub header_bits: Vec<u8>,
    pub psdu_bits: Vec<u8>,
}

/// Unscrambled long preamble: 128 ones followed by the SFD.
pub fn plain_preamble_bits() -> Vec<u8> {
    let mut bits = vec![1u8; SYNC_BITS];
    bits.extend(u16_to_bits(SFD));
    bits
}

/// Wrap a PSDU in the long preamble and a valid PLCP header.
pub fn assemble_ppdu(psdu_bits: &[u8]) -> Result<Ppdu> {
    if psdu_bits.len() > u16::MAX as usize {
        return Err(Error::Encode(format!("PSDU of {} bits exceeds LENGTH field", psdu_bits.len())));
    }
    let header = PlcpHeader::for_length(psdu_bits.len() as u16);
    Ok(Ppdu {
        preamble_bits: plain_preamble_bits(),
        header_bits: header.to_bits(),
        psdu_bits: psdu_bits.to_vec(),
    })
}

impl Ppdu {
    pub fn total_bits(&self) -> usize {
        self.preamble_bits.len() + self.header_bits.len() + self.psdu_bits.len()
    }

    /// On-air bit stream: the whole PPDU scrambled as one sequence with
    /// the long-preamble seed.
    pub fn transmit_bits(&self) -> Vec<u8> {
        let mut plain = Vec::with_capacity(self.total_bits());
        plain.extend_from_slice(&self.preamble_bits);
        plain.extend_from_slice(&self.header_bits);
        plain.extend_from_slice(&self.psdu_bits);
        scramble(&plain, LONG_PREAMBLE_SEED)
    }
}

/// Scrambled SYNC pattern as transmitted (first 128 bits on air).
pub fn scrambled_sync_bits() -> Vec<u8> {
    scramble(&vec![1u8; SYNC_BITS], LONG_PREAMBLE_SEED)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mac(s: &str) -> MacAddr {
        s.parse().unwrap()
    }

    /// Independent LFSR simulation of the scrambler, register kept as an
    /// explicit bit vector (x1 newest .. x7 oldest).
    fn scrambler_oracle(bits: &[u8], seed: u8) -> Vec<u8> {
        let mut reg: Vec<u8> = (0..7).map(|i| (seed >> i) & 1).collect();
        let mut out = Vec::new();
        for &d in bits {
            let o = d ^ reg[3] ^ reg[6]; // taps at z^-4 and z^-7
            reg.rotate_right(1);
            reg[0] = o;
            out.push(o);
        }
        out
    }

    #[test]
    fn sync_pattern_matches_lfsr_oracle() {
        let ones = vec![1u8; PREAMBLE_BITS];
        let sync = scramble(&ones, LONG_PREAMBLE_SEED);
        assert_eq!(sync, scrambler_oracle(&ones, LONG_PREAMBLE_SEED));
        assert_eq!(descramble(&sync, LONG_PREAMBLE_SEED), ones);
        // Non-trivial pattern, not all ones or zeros.
        assert!(sync.iter().any(|&b| b == 0) && sync.iter().any(|&b| b == 1));
    }

    #[test]
    fn scramble_length_preserving() {
        for n in [0usize, 1, 1000] {
            let bits = vec![1u8; n];
            assert_eq!(scramble(&bits, 0x55).len(), n);
        }
        assert!(descramble(&[], 0x12).is_empty());
    }

    #[test]
    fn encode_decode_reference_rows() {
        let p = BeaconPayload::new("TEST24", mac("C0-3F-0E-90-EE-13"));
        let decoded = decode_beacon_psdu(&encode_beacon_psdu(&p).unwrap()).unwrap();
        assert_eq!(decoded, p);
        assert_eq!(decoded.mac.to_string(), "C0-3F-0E-90-EE-13");

        let p = BeaconPayload::new("TEST25", mac("44-94-FC-65-F7-BA"));
        let decoded = decode_beacon_psdu(&encode_beacon_psdu(&p).unwrap()).unwrap();
        assert_eq!(decoded.ssid, "TEST25");
        assert_eq!(decoded.mac, mac("44-94-FC-65-F7-BA"));
    }

    #[test]
    fn shortest_legal_mpdu_round_trips() {
        let p = BeaconPayload::new("A", mac("00-11-22-33-44-55"));
        let bits = encode_beacon_psdu(&p).unwrap();
        assert_eq!(bits.len(), encoded_psdu_bits(1, 0));
        assert_eq!(decode_beacon_psdu(&bits).unwrap(), p);
    }

    #[test]
    fn padding_reaches_exact_800_bits() {
        let pad = padding_for_psdu_bits(6, 800).unwrap();
        let mut p = BeaconPayload::new("TEST24", mac("C0-3F-0E-90-EE-13"));
        p.body_padding = pad;
        let bits = encode_beacon_psdu(&p).unwrap();
        assert_eq!(bits.len(), 800);
        assert_eq!(decode_beacon_psdu(&bits).unwrap(), p);
    }

    #[test]
    fn oversize_ssid_rejected() {
        let p = BeaconPayload::new(&"x".repeat(33), mac("00-11-22-33-44-55"));
        assert!(matches!(encode_beacon_psdu(&p), Err(Error::Encode(_))));
    }

    #[test]
    fn fcs_catches_every_single_bit_flip() {
        let p = BeaconPayload::new("AB", mac("01-02-03-04-05-06"));
        let bits = encode_beacon_psdu(&p).unwrap();
        for i in 0..bits.len() {
            let mut corrupted = bits.clone();
            corrupted[i] ^= 1;
            match decode_beacon_psdu(&corrupted) {
                Err(Error::Integrity(_)) | Err(Error::Parse(_)) => {}
                other => panic!("flip at bit {i} slipped through: {other:?}"),
            }
        }
    }

    #[test]
    fn truncated_mpdu_is_parse_error() {
        let p = BeaconPayload::new("AB", mac("01-02-03-04-05-06"));
        let bits = encode_beacon_psdu(&p).unwrap();
        assert!(matches!(decode_beacon_psdu(&bits[..80]), Err(Error::Parse(_))));
    }

    #[test]
    fn ppdu_lengths_and_header_round_trip() {
        let psdu = vec![0u8; 800];
        let ppdu = assemble_ppdu(&psdu).unwrap();
        assert_eq!(ppdu.preamble_bits.len(), PREAMBLE_BITS);
        assert_eq!(ppdu.header_bits.len(), HEADER_BITS);
        assert_eq!(ppdu.total_bits(), 992);
        let header = parse_plcp(&ppdu.header_bits).unwrap();
        assert!(header.crc_ok);
        assert_eq!(header.length_bits as usize, psdu.len());
        assert_eq!(header.signal, SIGNAL_1MBPS);
    }

    #[test]
    fn header_for_1000_bits() {
        let h = PlcpHeader::for_length(1000);
        let parsed = parse_plcp(&h.to_bits()).unwrap();
        assert!(parsed.crc_ok);
        assert_eq!(parsed.length_bits, 1000);
    }

    #[test]
    fn header_crc_catches_every_single_bit_flip() {
        let bits = PlcpHeader::for_length(1000).to_bits();
        for i in 0..HEADER_BITS {
            let mut corrupted = bits.clone();
            corrupted[i] ^= 1;
            assert!(!parse_plcp(&corrupted).unwrap().crc_ok, "flip at {i} undetected");
        }
    }

    #[test]
    fn parse_plcp_rejects_wrong_length() {
        assert!(parse_plcp(&[0u8; 47]).is_err());
    }

    proptest! {
        #[test]
        fn scrambler_inverts(bits in proptest::collection::vec(0u8..2, 0..512), seed in 0u8..128) {
            prop_assert_eq!(descramble(&scramble(&bits, seed), seed), bits);
        }

        #[test]
        fn beacon_round_trips(
            ssid in "[A-Za-z0-9]{1,32}",
            mac_bytes in proptest::array::uniform6(any::<u8>()),
            interval in any::<u16>(),
            padding in 0usize..600,
        ) {
            let p = BeaconPayload {
                ssid,
                mac: MacAddr(mac_bytes),
                beacon_interval: interval,
                body_padding: padding,
            };
            let bits = encode_beacon_psdu(&p).unwrap();
            prop_assert_eq!(bits.len(), encoded_psdu_bits(p.ssid.len(), padding));
            prop_assert_eq!(decode_beacon_psdu(&bits).unwrap(), p);
        }

        #[test]
        fn ppdu_total_is_192_plus_length(n in 0usize..2048) {
            let ppdu = assemble_ppdu(&vec![1u8; n]).unwrap();
            prop_assert_eq!(ppdu.total_bits(), 192 + n);
            prop_assert_eq!(ppdu.transmit_bits().len(), 192 + n);
        }
    }
}
