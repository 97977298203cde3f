// Bit interleaving for 3D Morton (Z-order) keys, x in the lowest bit.

/// Spread the low 21 bits of `w` so that two zero bits separate each one.
fn spread(mut w: u64) -> u64 {
    w &= 0x0000_0000_001f_ffff;
    w = (w | w << 32) & 0x001f_0000_0000_ffff;
    w = (w | w << 16) & 0x001f_0000_ff00_00ff;
    w = (w | w << 8) & 0x100f_00f0_0f00_f00f;
    w = (w | w << 4) & 0x10c3_0c30_c30c_30c3;
    w = (w | w << 2) & 0x1249_2492_4924_9249;
    w
}

fn compact(mut w: u64) -> u32 {
    w &= 0x1249_2492_4924_9249;
    w = (w ^ (w >> 2)) & 0x10c3_0c30_c30c_30c3;
    w = (w ^ (w >> 4)) & 0x100f_00f0_0f00_f00f;
    w = (w ^ (w >> 8)) & 0x001f_0000_ff00_00ff;
    w = (w ^ (w >> 16)) & 0x001f_0000_0000_ffff;
    w = (w ^ (w >> 32)) & 0x0000_0000_001f_ffff;
    w as u32
}

pub fn encode(p: [u32; 3]) -> u64 {
    spread(p[0] as u64) | spread(p[1] as u64) << 1 | spread(p[2] as u64) << 2
}

pub fn decode(code: u64) -> [u32; 3] {
    [compact(code), compact(code >> 1), compact(code >> 2)]
}
