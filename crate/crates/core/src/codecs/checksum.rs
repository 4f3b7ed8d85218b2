//! RFC 1071 Internet checksum.

use std::net::IpAddr;

/// Unfolded one's-complement sum of big-endian 16-bit words; an odd
/// trailing byte is padded with zero.
pub fn ones_sum(bytes: &[u8], initial: u64) -> u64 {
    let mut acc = initial;
    let mut chunks = bytes.chunks_exact(4);
    for c in &mut chunks {
        acc += u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as u64;
    }
    let rest = chunks.remainder();
    let mut i = 0;
    while i + 1 < rest.len() {
        acc += u16::from_be_bytes([rest[i], rest[i + 1]]) as u64;
        i += 2;
    }
    if i < rest.len() {
        acc += (rest[i] as u64) << 8;
    }
    acc
}

/// Folds a wide sum into 16 bits with end-around carry.
pub fn fold(mut acc: u64) -> u16 {
    while acc >> 16 != 0 {
        acc = (acc & 0xffff) + (acc >> 16);
    }
    acc as u16
}

/// One's complement of the one's-complement sum of `bytes`.
pub fn internet_checksum(bytes: &[u8]) -> u16 {
    !fold(ones_sum(bytes, 0))
}

/// Sum of the TCP/UDP/ICMPv6 pseudo-header for the given upper-layer length.
pub fn pseudo_header_sum(src: IpAddr, dst: IpAddr, protocol: u8, upper_len: u32) -> u64 {
    match (src, dst) {
        (IpAddr::V4(s), IpAddr::V4(d)) => {
            let acc = ones_sum(&s.octets(), 0);
            let acc = ones_sum(&d.octets(), acc);
            acc + protocol as u64 + (upper_len & 0xffff) as u64
        }
        (IpAddr::V6(s), IpAddr::V6(d)) => {
            let acc = ones_sum(&s.octets(), 0);
            let acc = ones_sum(&d.octets(), acc);
            acc + (upper_len >> 16) as u64 + (upper_len & 0xffff) as u64 + protocol as u64
        }
        _ => 0,
    }
}

/// Checksum of an upper-layer segment including its pseudo-header.
pub fn transport_checksum(src: IpAddr, dst: IpAddr, protocol: u8, segment: &[u8]) -> u16 {
    let acc = pseudo_header_sum(src, dst, protocol, segment.len() as u32);
    !fold(ones_sum(segment, acc))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rfc1071_example() {
        // 0001 + f203 + f4f5 + f6f7 = 2ddf0 -> ddf2 -> !ddf2
        assert_eq!(
            internet_checksum(&[0x00, 0x01, 0xf2, 0x03, 0xf4, 0xf5, 0xf6, 0xf7]),
            0x220d
        );
    }

    #[test]
    fn empty_input() {
        assert_eq!(internet_checksum(&[]), 0xffff);
    }

    #[test]
    fn odd_length_pads_with_zero() {
        assert_eq!(internet_checksum(&[0xab]), internet_checksum(&[0xab, 0x00]));
    }

    #[test]
    fn inserted_checksum_resums_to_zero() {
        let mut data = vec![0x45, 0x00, 0x00, 0x1c, 0x12, 0x34, 0x00, 0x00, 0x40, 0x01, 0, 0, 10, 0, 0, 1, 10, 0, 0, 2];
        let c = internet_checksum(&data);
        data[10..12].copy_from_slice(&c.to_be_bytes());
        assert_eq!(internet_checksum(&data), 0);
    }
}
