"""Independent reference for the golden probe frames.

Assembles each frame field by field and derives the validation token with
the `cryptography` package's AES-CMAC. Regenerate with:

    python3 golden.py > golden.txt
"""
import ipaddress
import struct

from cryptography.hazmat.primitives.cmac import CMAC
from cryptography.hazmat.primitives.ciphers import algorithms

SECRET = bytes(range(16))
SRC_MAC = bytes.fromhex("020000000001")
DST_MAC = bytes.fromhex("020000000002")
TTL = 64
TYPES = {"icmp_echo": 1, "tcp_syn": 2, "udp": 3, "dns": 4}


def token(addr, port, probe):
    ip = ipaddress.ip_address(addr)
    fam = 4 if ip.version == 4 else 6
    msg = bytes([fam]) + int(ip).to_bytes(16, "big") + struct.pack(">H", port) + bytes([TYPES[probe]])
    c = CMAC(algorithms.AES(SECRET))
    c.update(msg)
    return int.from_bytes(c.finalize()[:8], "big")


def bits(tok, lo, hi):
    return (tok >> (64 - hi)) & ((1 << (hi - lo)) - 1)


def sport(tok):
    return 32768 + bits(tok, 32, 48) % 32768


def csum(data):
    if len(data) % 2:
        data += b"\0"
    s = sum(struct.unpack(">%dH" % (len(data) // 2), data))
    while s >> 16:
        s = (s & 0xFFFF) + (s >> 16)
    return (~s) & 0xFFFF


def pseudo(src, dst, proto, length):
    s, d = ipaddress.ip_address(src), ipaddress.ip_address(dst)
    if s.version == 4:
        return s.packed + d.packed + struct.pack(">BBH", 0, proto, length)
    return s.packed + d.packed + struct.pack(">I3xB", length, proto)


def ip_header(src, dst, proto, payload_len):
    s, d = ipaddress.ip_address(src), ipaddress.ip_address(dst)
    if s.version == 4:
        h = struct.pack(">BBHHHBBH4s4s", 0x45, 0, 20 + payload_len, 54321, 0, TTL, proto, 0, s.packed, d.packed)
        return h[:10] + struct.pack(">H", csum(h)) + h[12:]
    return struct.pack(">IHBB16s16s", 6 << 28, payload_len, proto, TTL, s.packed, d.packed)


def frame(src, dst, proto, seg):
    ethertype = 0x0800 if ipaddress.ip_address(src).version == 4 else 0x86DD
    return DST_MAC + SRC_MAC + struct.pack(">H", ethertype) + ip_header(src, dst, proto, len(seg)) + seg


def icmp_echo(src, dst):
    tok = token(dst, 0, "icmp_echo")
    v4 = ipaddress.ip_address(src).version == 4
    proto, typ = (1, 8) if v4 else (58, 128)
    seg = struct.pack(">BBHHH", typ, 0, 0, bits(tok, 0, 16), bits(tok, 16, 32))
    c = csum(seg) if v4 else csum(pseudo(src, dst, 58, len(seg)) + seg)
    seg = seg[:2] + struct.pack(">H", c) + seg[4:]
    return frame(src, dst, proto, seg)


def tcp_syn(src, dst, dport):
    tok = token(dst, dport, "tcp_syn")
    seg = struct.pack(">HHIIBBHHH", sport(tok), dport, bits(tok, 0, 32), 0, 0x50, 0x02, 65535, 0, 0)
    c = csum(pseudo(src, dst, 6, len(seg)) + seg)
    seg = seg[:16] + struct.pack(">H", c) + seg[18:]
    return frame(src, dst, 6, seg)


def udp(src, dst, dport, payload, probe="udp"):
    tok = token(dst, dport, probe)
    if probe == "dns":
        payload = struct.pack(">H", bits(tok, 0, 16)) + payload[2:]
    seg = struct.pack(">HHHH", sport(tok), dport, 8 + len(payload), 0) + payload
    c = csum(pseudo(src, dst, 17, len(seg)) + seg) or 0xFFFF
    seg = seg[:6] + struct.pack(">H", c) + seg[8:]
    return frame(src, dst, 17, seg)


def dns_query(name, qtype):
    q = b"".join(bytes([len(l)]) + l.encode() for l in name.split(".")) + b"\0"
    return struct.pack(">HHHHHH", 0, 0x0100, 1, 0, 0, 0) + q + struct.pack(">HH", qtype, 1)


CASES = [
    ("icmp_echo_v4", icmp_echo("192.0.2.1", "198.51.100.7")),
    ("icmp_echo_v6", icmp_echo("2001:db8::1", "2001:db8:0:1::7")),
    ("tcp_syn_v4", tcp_syn("192.0.2.1", "198.51.100.7", 443)),
    ("tcp_syn_v6", tcp_syn("2001:db8::1", "2001:db8:0:1::7", 80)),
    ("udp_v4", udp("192.0.2.1", "198.51.100.7", 5353, b"hexmap")),
    ("dns_a_v4", udp("192.0.2.1", "198.51.100.53", 53, dns_query("example.com", 1), "dns")),
    ("dns_aaaa_v6", udp("2001:db8::1", "2001:db8::53", 53, dns_query("example.com", 28), "dns")),
]

if __name__ == "__main__":
    for name, data in CASES:
        print(name, data.hex())
