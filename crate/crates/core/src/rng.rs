//! Counter-based random numbers.
//!
//! Philox4x32-10 (Salmon et al., SC'11): a keyed bijection of a 128-bit
//! counter. A stream is addressed by `(seed, row, tag)`, so every row of a
//! simulation draws the same numbers regardless of evaluation order or
//! worker count.
//!
//! Counter words: `[row_lo, row_hi, block, tag]`; key words: `[seed_lo, seed_hi]`.
//! Uniforms take 53 bits from two consecutive 32-bit outputs and map to the
//! open interval `(0, 1)`.

const M0: u32 = 0xD251_1F53;
const M1: u32 = 0xCD9E_8D57;
const W0: u32 = 0x9E37_79B9;
const W1: u32 = 0xBB67_AE85;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = u64::from(a) * u64::from(b);
    ((p >> 32) as u32, p as u32)
}

/// One Philox4x32-10 block.
pub fn philox4x32(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(W0);
            k[1] = k[1].wrapping_add(W1);
        }
        let (hi0, lo0) = mulhilo(M0, c[0]);
        let (hi1, lo1) = mulhilo(M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

/// Stream tags keep independent uses of one seed apart.
pub mod tag {
    pub const SIMULATION: u32 = 0;
    pub const MULTISTART: u32 = 1;
}

/// Sequential draws from the stream addressed by `(seed, row, tag)`.
#[derive(Debug, Clone)]
pub struct RowStream {
    key: [u32; 2],
    row: u64,
    tag: u32,
    block: u32,
    buf: [u32; 4],
    pos: usize,
}

impl RowStream {
    pub fn new(seed: u64, row: u64, tag: u32) -> Self {
        Self {
            key: [seed as u32, (seed >> 32) as u32],
            row,
            tag,
            block: 0,
            buf: [0; 4],
            pos: 4,
        }
    }

    pub fn next_u32(&mut self) -> u32 {
        if self.pos == 4 {
            let ctr = [
                self.row as u32,
                (self.row >> 32) as u32,
                self.block,
                self.tag,
            ];
            self.buf = philox4x32(ctr, self.key);
            self.block = self.block.wrapping_add(1);
            self.pos = 0;
        }
        let v = self.buf[self.pos];
        self.pos += 1;
        v
    }

    /// Uniform on `(0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        let a = u64::from(self.next_u32() >> 5);
        let b = u64::from(self.next_u32() >> 6);
        let bits = (a << 26) | b;
        (bits as f64 + 0.5) / (1u64 << 53) as f64
    }

    /// Standard normal by Box–Muller (cosine branch only).
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}
