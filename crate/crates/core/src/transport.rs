//! Packet I/O. The engine sends complete Ethernet frames and receives
//! IP-layer packets, so the simulated network never deals with framing.

use std::io;
use std::time::Duration;

pub trait Transport: Send + Sync {
    fn send(&self, frame: &[u8]) -> io::Result<()>;
    /// Next received IP packet, waiting at most `timeout`.
    fn recv(&self, timeout: Duration) -> io::Result<Option<Vec<u8>>>;
}

impl<T: Transport + ?Sized> Transport for std::sync::Arc<T> {
    fn send(&self, frame: &[u8]) -> io::Result<()> {
        (**self).send(frame)
    }

    fn recv(&self, timeout: Duration) -> io::Result<Option<Vec<u8>>> {
        (**self).recv(timeout)
    }
}

#[cfg(target_os = "linux")]
pub use raw::{interface_info, parse_mac, InterfaceInfo, RawTransport};

#[cfg(target_os = "linux")]
mod raw {
    use std::ffi::CString;
    use std::fs;
    use std::io;
    use std::mem;
    use std::net::{Ipv4Addr, Ipv6Addr};
    use std::os::fd::{AsRawFd, FromRawFd, OwnedFd};
    use std::time::Duration;

    use super::Transport;
    use crate::codecs::strip_ethernet;

    const ETH_P_ALL: u16 = 0x0003;

    /// AF_PACKET socket bound to one interface. Needs CAP_NET_RAW.
    #[derive(Debug)]
    pub struct RawTransport {
        fd: OwnedFd,
        ifindex: i32,
    }

    fn ifindex(name: &str) -> io::Result<i32> {
        let c = CString::new(name).map_err(|_| io::Error::from(io::ErrorKind::InvalidInput))?;
        // SAFETY: c is a valid NUL-terminated string.
        let idx = unsafe { libc::if_nametoindex(c.as_ptr()) };
        if idx == 0 {
            return Err(io::Error::new(
                io::ErrorKind::NotFound,
                format!("no such interface `{name}`"),
            ));
        }
        Ok(idx as i32)
    }

    fn sockaddr(ifindex: i32) -> libc::sockaddr_ll {
        // SAFETY: sockaddr_ll is plain old data.
        let mut sa: libc::sockaddr_ll = unsafe { mem::zeroed() };
        sa.sll_family = libc::AF_PACKET as u16;
        sa.sll_protocol = ETH_P_ALL.to_be();
        sa.sll_ifindex = ifindex;
        sa.sll_halen = 6;
        sa
    }

    impl RawTransport {
        pub fn open(iface: &str) -> io::Result<Self> {
            let ifindex = ifindex(iface)?;
            // SAFETY: plain socket(2) call.
            let fd = unsafe {
                libc::socket(
                    libc::AF_PACKET,
                    libc::SOCK_RAW | libc::SOCK_CLOEXEC,
                    ETH_P_ALL.to_be() as i32,
                )
            };
            if fd < 0 {
                let err = io::Error::last_os_error();
                if err.kind() == io::ErrorKind::PermissionDenied {
                    return Err(io::Error::new(
                        io::ErrorKind::PermissionDenied,
                        "raw sockets need root or CAP_NET_RAW (try --dry-run)",
                    ));
                }
                return Err(err);
            }
            // SAFETY: fd was just returned by socket(2) and is owned here.
            let fd = unsafe { OwnedFd::from_raw_fd(fd) };
            let sa = sockaddr(ifindex);
            // SAFETY: sa is a valid sockaddr_ll of the given length.
            let rc = unsafe {
                libc::bind(
                    fd.as_raw_fd(),
                    &sa as *const _ as *const libc::sockaddr,
                    mem::size_of::<libc::sockaddr_ll>() as u32,
                )
            };
            if rc < 0 {
                return Err(io::Error::last_os_error());
            }
            Ok(RawTransport { fd, ifindex })
        }
    }

    impl Transport for RawTransport {
        fn send(&self, frame: &[u8]) -> io::Result<()> {
            let mut sa = sockaddr(self.ifindex);
            sa.sll_addr[..6].copy_from_slice(&frame[..6]);
            // SAFETY: frame and sa outlive the call.
            let n = unsafe {
                libc::sendto(
                    self.fd.as_raw_fd(),
                    frame.as_ptr() as *const libc::c_void,
                    frame.len(),
                    0,
                    &sa as *const _ as *const libc::sockaddr,
                    mem::size_of::<libc::sockaddr_ll>() as u32,
                )
            };
            if n < 0 {
                return Err(io::Error::last_os_error());
            }
            Ok(())
        }

        fn recv(&self, timeout: Duration) -> io::Result<Option<Vec<u8>>> {
            let mut pfd = libc::pollfd {
                fd: self.fd.as_raw_fd(),
                events: libc::POLLIN,
                revents: 0,
            };
            let ms = timeout.as_millis().min(i32::MAX as u128) as i32;
            // SAFETY: pfd is a valid pollfd.
            let rc = unsafe { libc::poll(&mut pfd, 1, ms) };
            if rc < 0 {
                let err = io::Error::last_os_error();
                return if err.kind() == io::ErrorKind::Interrupted {
                    Ok(None)
                } else {
                    Err(err)
                };
            }
            if rc == 0 {
                return Ok(None);
            }
            let mut buf = vec![0u8; 65536];
            // SAFETY: sockaddr_ll is plain old data.
            let mut sa: libc::sockaddr_ll = unsafe { mem::zeroed() };
            let mut len = mem::size_of::<libc::sockaddr_ll>() as u32;
            // SAFETY: buf and sa are valid for writes of the given sizes.
            let n = unsafe {
                libc::recvfrom(
                    self.fd.as_raw_fd(),
                    buf.as_mut_ptr() as *mut libc::c_void,
                    buf.len(),
                    libc::MSG_DONTWAIT,
                    &mut sa as *mut _ as *mut libc::sockaddr,
                    &mut len,
                )
            };
            if n < 0 {
                let err = io::Error::last_os_error();
                return if err.kind() == io::ErrorKind::WouldBlock {
                    Ok(None)
                } else {
                    Err(err)
                };
            }
            if sa.sll_pkttype == libc::PACKET_OUTGOING {
                return Ok(None);
            }
            buf.truncate(n as usize);
            Ok(strip_ethernet(&buf).map(<[u8]>::to_vec))
        }
    }

    /// Addresses of a local interface, as far as they can be discovered
    /// without netlink.
    #[derive(Clone, Debug, Default, PartialEq, Eq)]
    pub struct InterfaceInfo {
        pub mac: Option<[u8; 6]>,
        pub ipv4: Option<Ipv4Addr>,
        pub ipv6: Option<Ipv6Addr>,
        pub gateway_mac: Option<[u8; 6]>,
    }

    /// Parses `aa:bb:cc:dd:ee:ff`.
    pub fn parse_mac(s: &str) -> Option<[u8; 6]> {
        let mut mac = [0u8; 6];
        let mut parts = s.split(':');
        for b in &mut mac {
            *b = u8::from_str_radix(parts.next()?, 16).ok()?;
        }
        parts.next().is_none().then_some(mac)
    }

    fn ipv4_of(iface: &str) -> Option<Ipv4Addr> {
        let c = CString::new(iface).ok()?;
        // SAFETY: plain socket/ioctl/close sequence on zeroed POD structs.
        unsafe {
            let fd = libc::socket(libc::AF_INET, libc::SOCK_DGRAM, 0);
            if fd < 0 {
                return None;
            }
            let mut req: libc::ifreq = mem::zeroed();
            for (dst, &src) in req.ifr_name.iter_mut().zip(c.as_bytes()) {
                *dst = src as libc::c_char;
            }
            let rc = libc::ioctl(fd, libc::SIOCGIFADDR, &mut req);
            libc::close(fd);
            if rc < 0 {
                return None;
            }
            let sin = &*(&req.ifr_ifru.ifru_addr as *const _ as *const libc::sockaddr_in);
            Some(Ipv4Addr::from(u32::from_be(sin.sin_addr.s_addr)))
        }
    }

    fn ipv6_of(iface: &str) -> Option<Ipv6Addr> {
        // columns: address ifindex prefixlen scope flags name
        let text = fs::read_to_string("/proc/net/if_inet6").ok()?;
        text.lines().find_map(|line| {
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() < 6 || cols[5] != iface || cols[3] != "00" {
                return None;
            }
            u128::from_str_radix(cols[0], 16).ok().map(Ipv6Addr::from)
        })
    }

    fn gateway_mac(iface: &str) -> Option<[u8; 6]> {
        let routes = fs::read_to_string("/proc/net/route").ok()?;
        let gw = routes.lines().skip(1).find_map(|line| {
            let cols: Vec<&str> = line.split_whitespace().collect();
            (cols.len() > 2 && cols[0] == iface && cols[1] == "00000000")
                .then(|| u32::from_str_radix(cols[2], 16).ok())
                .flatten()
        })?;
        // /proc/net/route prints the in-memory word, i.e. host byte order
        let gw = Ipv4Addr::from(gw.to_ne_bytes());
        let arp = fs::read_to_string("/proc/net/arp").ok()?;
        arp.lines().skip(1).find_map(|line| {
            let cols: Vec<&str> = line.split_whitespace().collect();
            (cols.len() > 5 && cols[0] == gw.to_string() && cols[5] == iface)
                .then(|| parse_mac(cols[3]))
                .flatten()
        })
    }

    pub fn interface_info(iface: &str) -> io::Result<InterfaceInfo> {
        ifindex(iface)?;
        let mac = fs::read_to_string(format!("/sys/class/net/{iface}/address"))
            .ok()
            .and_then(|s| parse_mac(s.trim()));
        Ok(InterfaceInfo {
            mac,
            ipv4: ipv4_of(iface),
            ipv6: ipv6_of(iface),
            gateway_mac: gateway_mac(iface),
        })
    }

}
