use super::Mask;
use crate::speedmap::SpeedField;

#[derive(Debug, Clone)]
pub struct Segmentation {
    pub foreground: Mask,
    /// 4-connected components of `foreground`.
    pub components: Vec<Mask>,
}

/// Congested foreground: cells below `v_threshold`, cleaned with a 3x3
/// opening followed by a 3x3 closing.
pub fn segment_congestion(field: &SpeedField, v_threshold: f64) -> Segmentation {
    let raw = Mask::from_fn(field.n_space(), field.n_time(), |i, j| field.get(i, j) < v_threshold);
    let foreground = raw.open3().close3();
    let components = foreground.components4();
    Segmentation { foreground, components }
}
