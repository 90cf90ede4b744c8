//! A desk-scale laboratory for the Logjam downgrade attack on TLS 1.2 DHE.
//!
//! * [`group_math`]: modular arithmetic, safe primes and Diffie-Hellman.
//! * [`dlog`]: generic and index-calculus discrete logarithms with a
//!   persisted log db.
//! * [`tls`]: a bit-exactly encoded, simplified TLS 1.2 DHE handshake driven
//!   by a virtual clock.
//! * [`attacker`]: the man-in-the-middle that forces export-grade DHE.
//! * [`harness`]: scenarios, the event loop, parameter audits and the
//!   population model.
//!
//! Group sizes are scaled down: the 48-bit "export" tier stands in for
//! 512-bit export DH, 64-bit for 1024-bit and 96-bit for 2048-bit groups.
//! Nothing here says anything about real-world group sizes.

pub mod attacker;
pub mod dlog;
pub mod group_math;
pub mod harness;
pub mod tls;
