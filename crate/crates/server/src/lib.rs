//! HTTP service over the itemsmith pipeline, quality, similarity, agreement
//! and bank modules.

pub mod api;
pub mod error;
pub mod state;
pub mod view;

pub use api::router;
pub use error::{ApiError, ErrorBody};
pub use state::AppState;
pub use view::ApiSessionView;
