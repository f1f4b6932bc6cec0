use crate::association::AttentionMask;
use crate::encoding::{BBox, RoiPatch};

/// A detector output: box, RoI appearance features and attention mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub frame: usize,
    pub bbox: BBox,
    pub appearance: RoiPatch,
    pub mask: AttentionMask,
}
