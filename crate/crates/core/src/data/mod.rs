//! On-disk volumes, case layout, preprocessing, and synthetic phantoms.

pub mod avol;
pub mod cases;
pub mod phantom;
pub mod preprocess;

pub use cases::{
    labels_to_masks, list_case_dirs, load_case, save_case, Case, LABEL_NAME, LABEL_VALUES,
    MODALITY_NAMES,
};
pub use phantom::{gen_phantom, gen_phantom_with_geometry, PhantomGeometry, PhantomSpec};
pub use preprocess::{crop, crop_origin, normalize_modality, preprocess_case};
