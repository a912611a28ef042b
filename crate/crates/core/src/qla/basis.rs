use std::fmt;
use std::sync::Arc;

use crate::error::{LabError, Result};

/// Largest register label the crate handles. Labels are packed into a `u64`.
pub const MAX_TOTAL_BITS: u32 = 64;

/// A computational-basis label. The leftmost bit is the most significant one,
/// so the `λ`-bit prefix of a string is its top `λ` bits.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BasisString {
    bits: u64,
    len: u32,
}

impl BasisString {
    pub fn new(bits: u64, len: u32) -> Result<Self> {
        if len > MAX_TOTAL_BITS {
            return Err(LabError::InvalidArgument(format!(
                "basis string of {len} bits exceeds {MAX_TOTAL_BITS}"
            )));
        }
        if len < 64 && bits >> len != 0 {
            return Err(LabError::InvalidArgument(format!(
                "value {bits} does not fit in {len} bits"
            )));
        }
        Ok(BasisString { bits, len })
    }

    /// All-zero string of the given length.
    pub fn zeros(len: u32) -> Self {
        BasisString { bits: 0, len }
    }

    /// Parse a string of `0`/`1` characters.
    pub fn parse(s: &str) -> Result<Self> {
        let mut bits = 0u64;
        let mut len = 0u32;
        for c in s.chars() {
            let b = match c {
                '0' => 0,
                '1' => 1,
                '_' | '|' => continue,
                _ => {
                    return Err(LabError::InvalidArgument(format!(
                        "invalid character {c:?} in basis string"
                    )))
                }
            };
            bits = (bits << 1) | b;
            len += 1;
        }
        BasisString::new(bits, len)
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn len(&self) -> u32 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Leftmost `k` bits as an integer.
    pub fn prefix(&self, k: u32) -> u64 {
        debug_assert!(k <= self.len);
        if k == 0 {
            0
        } else {
            self.bits >> (self.len - k)
        }
    }

    /// `self ‖ other`.
    pub fn concat(&self, other: &BasisString) -> Result<BasisString> {
        let len = self.len + other.len;
        if len > MAX_TOTAL_BITS {
            return Err(LabError::InvalidArgument(format!(
                "concatenation of {len} bits exceeds {MAX_TOTAL_BITS}"
            )));
        }
        Ok(BasisString {
            bits: shl(self.bits, other.len) | other.bits,
            len,
        })
    }
}

impl fmt::Debug for BasisString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|{self}>")
    }
}

impl fmt::Display for BasisString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in (0..self.len).rev() {
            write!(f, "{}", (self.bits >> i) & 1)?;
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn shl(x: u64, by: u32) -> u64 {
    if by >= 64 {
        0
    } else {
        x << by
    }
}

#[inline]
pub(crate) fn low_mask(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

/// Per-register bit widths of a composite system. Register 0 is leftmost.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct RegisterShape {
    widths: Arc<[u32]>,
    total: u32,
}

impl RegisterShape {
    pub fn new(widths: Vec<u32>) -> Result<Self> {
        let total: u32 = widths.iter().sum();
        if total > MAX_TOTAL_BITS {
            return Err(LabError::budget(
                "total register bits",
                total as u128,
                MAX_TOTAL_BITS as u128,
            ));
        }
        Ok(RegisterShape {
            widths: widths.into(),
            total,
        })
    }

    /// `count` registers of `width` bits each.
    pub fn uniform(count: usize, width: u32) -> Result<Self> {
        RegisterShape::new(vec![width; count])
    }

    /// The shape with no registers (a one-dimensional space).
    pub fn scalar() -> Self {
        RegisterShape {
            widths: Vec::new().into(),
            total: 0,
        }
    }

    pub fn widths(&self) -> &[u32] {
        &self.widths
    }

    pub fn num_registers(&self) -> usize {
        self.widths.len()
    }

    pub fn total_bits(&self) -> u32 {
        self.total
    }

    /// Hilbert-space dimension, or `None` when it does not fit in `usize`.
    pub fn dim(&self) -> Option<usize> {
        if self.total >= usize::BITS {
            None
        } else {
            Some(1usize << self.total)
        }
    }

    pub fn dim_checked(&self, limit: usize) -> Result<usize> {
        match self.dim() {
            Some(d) if d <= limit => Ok(d),
            _ => Err(LabError::budget(
                "dense dimension",
                1u128 << self.total,
                limit as u128,
            )),
        }
    }

    /// Number of bits to the right of register `reg`.
    pub fn shift_of(&self, reg: usize) -> u32 {
        self.widths[reg + 1..].iter().sum()
    }

    /// Value held in register `reg` of `label`.
    #[inline]
    pub fn extract(&self, label: u64, reg: usize) -> u64 {
        let shift = self.shift_of(reg);
        (label >> shift) & low_mask(self.widths[reg])
    }

    pub fn concat(&self, other: &RegisterShape) -> Result<RegisterShape> {
        let mut w = self.widths.to_vec();
        w.extend_from_slice(&other.widths);
        RegisterShape::new(w)
    }

    /// Shape consisting of the listed registers, in the listed order.
    pub fn select(&self, regs: &[usize]) -> Result<RegisterShape> {
        let mut w = Vec::with_capacity(regs.len());
        for &r in regs {
            if r >= self.widths.len() {
                return Err(LabError::InvalidArgument(format!(
                    "register index {r} out of range for {} registers",
                    self.widths.len()
                )));
            }
            w.push(self.widths[r]);
        }
        RegisterShape::new(w)
    }

    /// Builds a relabeling that gathers the registers `regs` (in order) of a
    /// label into a packed value.
    pub fn gather_plan(&self, regs: &[usize]) -> GatherPlan {
        let mut parts = Vec::with_capacity(regs.len());
        let mut out_shift: u32 = regs.iter().map(|&r| self.widths[r]).sum();
        for &r in regs {
            let w = self.widths[r];
            out_shift -= w;
            parts.push((self.shift_of(r), low_mask(w), out_shift));
        }
        GatherPlan { parts }
    }
}

impl std::fmt::Debug for RegisterShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RegisterShape{:?}", &*self.widths)
    }
}

/// Precomputed bit moves extracting a subset of registers from a label.
#[derive(Debug, Clone)]
pub struct GatherPlan {
    parts: Vec<(u32, u64, u32)>,
}

impl GatherPlan {
    #[inline]
    pub fn apply(&self, label: u64) -> u64 {
        let mut out = 0u64;
        for &(src, mask, dst) in &self.parts {
            out |= ((label >> src) & mask) << dst;
        }
        out
    }
}
