//! Planar correlation, G-correlation (direct and fast) and their gradients.

pub mod direct;
pub mod fast;
pub mod filters;
pub mod kernel;

pub use direct::{
    gcorr_direct_window, gcorr_first_layer_direct, gcorr_full_direct, gcorr_planar_direct_window,
    Window,
};
pub use fast::{
    gcorr_backward_filter, gcorr_backward_input, gcorr_fast, planar_correlate,
    planar_correlate_backward_filter, planar_correlate_backward_input, FeatureInput,
};
pub use filters::{
    build_transform_index_table, transform_filters, transform_filters_backward, ExpandedFilters,
    GFilterBank, LayerKind, PlanarFilters, TransformIndexTable,
};
