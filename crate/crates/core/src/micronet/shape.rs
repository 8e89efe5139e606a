//! Layer dimensions. Valid convolutions and floor pooling take a 128x22
//! image down to 16x30x4 = 1920 features; the assertions below fail the
//! build if any constant drifts.

pub const IN_H: usize = 128;
pub const IN_W: usize = 22;
pub const KERNEL: usize = 3;
pub const FILTERS: usize = 16;

pub const C1_H: usize = IN_H - KERNEL + 1;
pub const C1_W: usize = IN_W - KERNEL + 1;
pub const P1_H: usize = C1_H / 2;
pub const P1_W: usize = C1_W / 2;
pub const C2_H: usize = P1_H - KERNEL + 1;
pub const C2_W: usize = P1_W - KERNEL + 1;
pub const P2_H: usize = C2_H / 2;
pub const P2_W: usize = C2_W / 2;

pub const FLAT: usize = FILTERS * P2_H * P2_W;
pub const HIDDEN: usize = 128;
pub const CLASSES: usize = 2;

pub const CONV1_W: usize = FILTERS * KERNEL * KERNEL;
pub const CONV2_W: usize = FILTERS * FILTERS * KERNEL * KERNEL;
pub const DENSE_W: usize = HIDDEN * FLAT;
pub const OUT_W: usize = CLASSES * HIDDEN;
pub const N_PARAMS: usize =
    CONV1_W + FILTERS + CONV2_W + FILTERS + DENSE_W + HIDDEN + OUT_W + CLASSES;

const _: () = {
    assert!(IN_H == crate::images::IMAGE_HEIGHT && IN_W == crate::images::IMAGE_WIDTH);
    assert!(C1_H == 126 && C1_W == 20);
    assert!(P1_H == 63 && P1_W == 10);
    assert!(C2_H == 61 && C2_W == 8);
    assert!(P2_H == 30 && P2_W == 4);
    assert!(FLAT == 1920);
};

/// The forward shape chain as (label, dims), for display and checks.
pub fn shape_chain() -> Vec<(&'static str, Vec<usize>)> {
    vec![
        ("input", vec![IN_H, IN_W]),
        ("conv1", vec![C1_H, C1_W, FILTERS]),
        ("pool1", vec![P1_H, P1_W, FILTERS]),
        ("conv2", vec![C2_H, C2_W, FILTERS]),
        ("pool2", vec![P2_H, P2_W, FILTERS]),
        ("flatten", vec![FLAT]),
        ("hidden", vec![HIDDEN]),
        ("softmax", vec![CLASSES]),
    ]
}

/// Dimension table written into model files.
pub fn dimension_table() -> Vec<u32> {
    [IN_H, IN_W, FILTERS, KERNEL, KERNEL, FILTERS, FILTERS, KERNEL, KERNEL, FLAT, HIDDEN, HIDDEN, CLASSES]
        .iter()
        .map(|&d| d as u32)
        .collect()
}
