//! Binary snapshot of a `JointState`.
//!
//! Layout, all little endian:
//!
//! ```text
//! magic     b"DHJS"
//! version   u32
//! time      f64
//! kicks     u64
//! leakage   f64   peak cap-shell population
//! spin_dim  u32
//! slots     u32
//! n_max     u32
//! sites     u32
//! active    slots bytes, 0 or 1
//! amps      spin_dim * binomial(slots + n_max, n_max) complex, column major
//! frame     sites * slots complex, column major
//! ```
//!
//! A complex number is its real part followed by its imaginary part, each f64.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::engine::JointState;
use crate::error::{Error, Result};
use crate::fock::FockBasis;

pub const MAGIC: &[u8; 4] = b"DHJS";
pub const VERSION: u32 = 1;

/// Decoder limits; anything larger is not a state this crate can produce.
const MAX_SLOTS: usize = 64;
const MAX_N_MAX: usize = 64;
const MAX_AMPLITUDES: usize = 1 << 28;

const NORM_TOL: f64 = 1e-8;

pub fn encode(st: &JointState) -> Vec<u8> {
    let sites = st.frame.nrows();
    let mut out = Vec::with_capacity(48 + st.slots() + 16 * (st.amps.len() + st.frame.len()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&st.time.to_le_bytes());
    out.extend_from_slice(&st.kicks.to_le_bytes());
    out.extend_from_slice(&st.peak_leakage.to_le_bytes());
    for n in [st.spin_dim(), st.slots(), st.basis.n_max(), sites] {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    out.extend(st.active.iter().map(|&a| a as u8));
    for z in st.amps.iter().chain(st.frame.iter()) {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<JointState> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(malformed("bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(malformed(format!("unsupported version {version}")));
    }
    let time = r.f64()?;
    let kicks = r.u64()?;
    let peak_leakage = r.f64()?;
    if !time.is_finite() || time < 0.0 {
        return Err(malformed(format!("invalid time {time}")));
    }
    if !peak_leakage.is_finite() || peak_leakage < 0.0 {
        return Err(malformed(format!("invalid leakage {peak_leakage}")));
    }
    let spin_dim = r.u32()? as usize;
    let slots = r.u32()? as usize;
    let n_max = r.u32()? as usize;
    let sites = r.u32()? as usize;
    if spin_dim == 0 || n_max == 0 || slots > MAX_SLOTS || n_max > MAX_N_MAX || slots > sites {
        return Err(malformed(format!(
            "inconsistent dimensions (spin {spin_dim}, slots {slots}, n_max {n_max}, sites {sites})"
        )));
    }
    // Check sizes before allocating anything proportional to them.
    let fock = fock_len(slots, n_max).ok_or_else(|| malformed("Fock basis too large"))?;
    let n_amps = fock.checked_mul(spin_dim).filter(|&n| n <= MAX_AMPLITUDES);
    let n_frame = sites.checked_mul(slots).filter(|&n| n <= MAX_AMPLITUDES);
    let (n_amps, n_frame) = match (n_amps, n_frame) {
        (Some(a), Some(f)) => (a, f),
        _ => return Err(malformed("state too large")),
    };
    let expected = slots + 16 * (n_amps + n_frame);
    if r.remaining() != expected {
        return Err(malformed(format!("expected {expected} payload bytes, found {}", r.remaining())));
    }
    let mut active = Vec::with_capacity(slots);
    for &b in r.take(slots)? {
        match b {
            0 => active.push(false),
            1 => active.push(true),
            _ => return Err(malformed(format!("invalid activity flag {b}"))),
        }
    }
    let amps = DMatrix::from_vec(fock, spin_dim, r.complex(n_amps)?);
    let frame = DMatrix::from_vec(sites, slots, r.complex(n_frame)?);
    let dev = (amps.norm() - 1.0).abs();
    if dev > NORM_TOL {
        return Err(malformed(format!("state is not normalized (|norm - 1| = {dev:.2e})")));
    }
    let gram = frame.adjoint() * &frame;
    let orth = (gram - DMatrix::<C64>::identity(slots, slots)).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if orth > NORM_TOL {
        return Err(malformed(format!("frame is not orthonormal (deviation {orth:.2e})")));
    }
    let basis = FockBasis::new(slots, n_max)?;
    Ok(JointState { time, kicks, basis, amps, frame, active, peak_leakage })
}

fn fock_len(slots: usize, n_max: usize) -> Option<usize> {
    // binomial(slots + n_max, n_max), giving up as soon as it is too large.
    let (hi, lo) = (slots.max(n_max) as u128, slots.min(n_max) as u128);
    let mut acc: u128 = 1;
    for k in 1..=lo {
        acc = acc * (hi + k) / k;
        if acc > MAX_AMPLITUDES as u128 {
            return None;
        }
    }
    Some(acc as usize)
}

fn malformed(message: impl Into<String>) -> Error {
    Error::Format { what: "checkpoint", message: message.into() }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(malformed("unexpected end of data"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn complex(&mut self, n: usize) -> Result<Vec<C64>> {
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            let z = C64::new(self.f64()?, self.f64()?);
            if !z.re.is_finite() || !z.im.is_finite() {
                return Err(malformed("non-finite amplitude"));
            }
            v.push(z);
        }
        Ok(v)
    }
}
