//! DNS message encoding (RFC 1035): queries for probes, responses for the
//! simulated network, and a bounded parser for replies.

use std::net::IpAddr;

use super::CodecError;

pub const QTYPE_A: u16 = 1;
pub const QTYPE_TXT: u16 = 16;
pub const QTYPE_AAAA: u16 = 28;
pub const QCLASS_IN: u16 = 1;
pub const QCLASS_CHAOS: u16 = 3;

const FLAG_QR: u16 = 0x8000;
const FLAG_RD: u16 = 0x0100;
const FLAG_RA: u16 = 0x0080;

pub const HEADER_LEN: usize = 12;
const MAX_NAME: usize = 255;
const MAX_LABEL: usize = 63;
const MAX_POINTERS: usize = 16;

pub fn qtype_from_name(name: &str) -> Option<u16> {
    match name.to_ascii_uppercase().as_str() {
        "A" => Some(QTYPE_A),
        "AAAA" => Some(QTYPE_AAAA),
        "NS" => Some(2),
        "CNAME" => Some(5),
        "SOA" => Some(6),
        "PTR" => Some(12),
        "MX" => Some(15),
        "TXT" => Some(QTYPE_TXT),
        "ANY" => Some(255),
        other => other.parse().ok(),
    }
}

/// Appends the wire encoding of `name` (dotted, optional trailing dot).
pub fn encode_name(buf: &mut Vec<u8>, name: &str) -> Result<(), CodecError> {
    let trimmed = name.strip_suffix('.').unwrap_or(name);
    let start = buf.len();
    if !trimmed.is_empty() {
        for label in trimmed.split('.') {
            if label.is_empty() || label.len() > MAX_LABEL {
                buf.truncate(start);
                return Err(CodecError::MalformedName(name.to_string()));
            }
            buf.push(label.len() as u8);
            buf.extend_from_slice(label.as_bytes());
        }
    }
    buf.push(0);
    if buf.len() - start > MAX_NAME {
        buf.truncate(start);
        return Err(CodecError::MalformedName(name.to_string()));
    }
    Ok(())
}

/// Standard recursive query: one question, RD set, no EDNS0.
pub fn build_dns_query(qname: &str, qtype: u16, txid: u16) -> Result<Vec<u8>, CodecError> {
    build_dns_query_class(qname, qtype, QCLASS_IN, txid)
}

pub fn build_dns_query_class(
    qname: &str,
    qtype: u16,
    qclass: u16,
    txid: u16,
) -> Result<Vec<u8>, CodecError> {
    let mut buf = Vec::with_capacity(HEADER_LEN + qname.len() + 6);
    buf.extend_from_slice(&txid.to_be_bytes());
    buf.extend_from_slice(&FLAG_RD.to_be_bytes());
    buf.extend_from_slice(&[0, 1, 0, 0, 0, 0, 0, 0]);
    encode_name(&mut buf, qname)?;
    buf.extend_from_slice(&qtype.to_be_bytes());
    buf.extend_from_slice(&qclass.to_be_bytes());
    Ok(buf)
}

/// `version.bind CH TXT` query, the usual server-software fingerprint.
pub fn build_version_bind_query(txid: u16) -> Vec<u8> {
    build_dns_query_class("version.bind", QTYPE_TXT, QCLASS_CHAOS, txid)
        .expect("static name is valid")
}

/// Answers `query` with `rcode` and one A/AAAA record per address.
pub fn build_dns_response(query: &[u8], rcode: u8, answers: &[IpAddr]) -> Result<Vec<u8>, CodecError> {
    let parsed = parse_dns(query).ok_or(CodecError::Truncated)?;
    let question = parsed.question.ok_or(CodecError::Truncated)?;
    let mut buf = Vec::with_capacity(query.len() + answers.len() * 28);
    buf.extend_from_slice(&parsed.id.to_be_bytes());
    let flags = FLAG_QR | (parsed.flags & FLAG_RD) | FLAG_RA | (rcode as u16 & 0x0f);
    buf.extend_from_slice(&flags.to_be_bytes());
    buf.extend_from_slice(&1u16.to_be_bytes());
    buf.extend_from_slice(&(answers.len() as u16).to_be_bytes());
    buf.extend_from_slice(&[0, 0, 0, 0]);
    encode_name(&mut buf, &question.name)?;
    buf.extend_from_slice(&question.qtype.to_be_bytes());
    buf.extend_from_slice(&question.qclass.to_be_bytes());
    for addr in answers {
        // pointer to the question name at offset 12
        buf.extend_from_slice(&[0xc0, 0x0c]);
        let (rtype, rdata): (u16, Vec<u8>) = match addr {
            IpAddr::V4(a) => (QTYPE_A, a.octets().to_vec()),
            IpAddr::V6(a) => (QTYPE_AAAA, a.octets().to_vec()),
        };
        buf.extend_from_slice(&rtype.to_be_bytes());
        buf.extend_from_slice(&QCLASS_IN.to_be_bytes());
        buf.extend_from_slice(&300u32.to_be_bytes());
        buf.extend_from_slice(&(rdata.len() as u16).to_be_bytes());
        buf.extend_from_slice(&rdata);
    }
    Ok(buf)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DnsQuestion {
    /// Lower-cased dotted name without trailing dot; `""` is the root.
    pub name: String,
    pub qtype: u16,
    pub qclass: u16,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DnsMessage {
    pub id: u16,
    pub flags: u16,
    pub qdcount: u16,
    pub ancount: u16,
    pub question: Option<DnsQuestion>,
}

impl DnsMessage {
    pub fn is_response(&self) -> bool {
        self.flags & FLAG_QR != 0
    }

    pub fn rcode(&self) -> u8 {
        (self.flags & 0x0f) as u8
    }

    pub fn recursion_desired(&self) -> bool {
        self.flags & FLAG_RD != 0
    }
}

/// Reads a possibly-compressed name starting at `pos`; returns the name and
/// the offset just past its in-place encoding.
fn read_name(msg: &[u8], mut pos: usize) -> Option<(String, usize)> {
    let mut name = String::new();
    let mut end = None;
    let mut jumps = 0;
    let mut total = 0usize;
    loop {
        let len = *msg.get(pos)? as usize;
        match len & 0xc0 {
            0x00 => {
                if len == 0 {
                    return Some((name, end.unwrap_or(pos + 1)));
                }
                let label = msg.get(pos + 1..pos + 1 + len)?;
                total += len + 1;
                if total > MAX_NAME {
                    return None;
                }
                if !name.is_empty() {
                    name.push('.');
                }
                for &b in label {
                    name.push(b.to_ascii_lowercase() as char);
                }
                pos += 1 + len;
            }
            0xc0 => {
                let lo = *msg.get(pos + 1)? as usize;
                if end.is_none() {
                    end = Some(pos + 2);
                }
                jumps += 1;
                if jumps > MAX_POINTERS {
                    return None;
                }
                pos = ((len & 0x3f) << 8) | lo;
            }
            _ => return None,
        }
    }
}

/// Parses the header and first question; `None` when the header is short
/// or the question is malformed.
pub fn parse_dns(msg: &[u8]) -> Option<DnsMessage> {
    let header = msg.get(..HEADER_LEN)?;
    let id = u16::from_be_bytes([header[0], header[1]]);
    let flags = u16::from_be_bytes([header[2], header[3]]);
    let qdcount = u16::from_be_bytes([header[4], header[5]]);
    let ancount = u16::from_be_bytes([header[6], header[7]]);
    let question = if qdcount > 0 {
        let (name, after) = read_name(msg, HEADER_LEN)?;
        let tail = msg.get(after..after + 4)?;
        Some(DnsQuestion {
            name,
            qtype: u16::from_be_bytes([tail[0], tail[1]]),
            qclass: u16::from_be_bytes([tail[2], tail[3]]),
        })
    } else {
        None
    };
    Some(DnsMessage {
        id,
        flags,
        qdcount,
        ancount,
        question,
    })
}

/// Canonical comparison form of a configured query name.
pub fn normalize_name(name: &str) -> String {
    name.strip_suffix('.').unwrap_or(name).to_ascii_lowercase()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_com_labels() {
        let q = build_dns_query("example.com", QTYPE_A, 0xbeef).unwrap();
        assert_eq!(&q[..2], &[0xbe, 0xef]);
        assert_eq!(&q[2..4], &[0x01, 0x00]);
        assert_eq!(&q[4..6], &[0x00, 0x01]);
        let mut name = vec![7];
        name.extend_from_slice(b"example");
        name.push(3);
        name.extend_from_slice(b"com");
        name.push(0);
        assert_eq!(&q[12..12 + name.len()], name.as_slice());
        assert_eq!(&q[12 + name.len()..], &[0, 1, 0, 1]);
    }

    #[test]
    fn malformed_names() {
        assert!(build_dns_query("a..b", QTYPE_A, 0).is_err());
        assert!(build_dns_query(&"x".repeat(64), QTYPE_A, 0).is_err());
        let long = vec!["abcdefghij"; 25].join(".");
        assert!(build_dns_query(&long, QTYPE_A, 0).is_err());
        assert!(build_dns_query(&"a".repeat(63), QTYPE_A, 0).is_ok());
        assert!(build_dns_query(".", QTYPE_A, 0).is_ok());
        assert!(build_dns_query("example.com.", QTYPE_A, 0).is_ok());
    }

    #[test]
    fn response_echoes_question() {
        let q = build_dns_query("Example.COM", QTYPE_AAAA, 7).unwrap();
        let r = build_dns_response(&q, 3, &["2001:db8::5".parse().unwrap()]).unwrap();
        let m = parse_dns(&r).unwrap();
        assert!(m.is_response());
        assert_eq!((m.id, m.rcode(), m.ancount), (7, 3, 1));
        let question = m.question.unwrap();
        assert_eq!(question.name, "example.com");
        assert_eq!(question.qtype, QTYPE_AAAA);
    }

    #[test]
    fn pointer_loops_are_rejected() {
        let mut msg = vec![0, 1, 0x81, 0x80, 0, 1, 0, 0, 0, 0, 0, 0];
        msg.extend_from_slice(&[0xc0, 0x0c, 0, 1, 0, 1]);
        assert_eq!(parse_dns(&msg), None);
    }

    #[test]
    fn version_bind_uses_chaos() {
        let q = build_version_bind_query(1);
        let m = parse_dns(&q).unwrap();
        let question = m.question.unwrap();
        assert_eq!(question.name, "version.bind");
        assert_eq!((question.qtype, question.qclass), (QTYPE_TXT, QCLASS_CHAOS));
    }
}
