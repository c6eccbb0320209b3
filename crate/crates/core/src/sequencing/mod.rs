//! Per-video alignment of annotations with both modalities, label remapping,
//! sliding windows and the on-disk dataset container.

mod dataset;
mod labels;
mod windows;

pub use dataset::{Dataset, VideoEntry};
pub use labels::{remap_label, AnnotationTrack, NUM_CLASSES, UNANNOTATED_CLASS};
pub use windows::{
    align_modalities, cut_windows, window_starts, FrameFeatures, SequenceWindow, WindowSpec,
    WindowStart,
};
