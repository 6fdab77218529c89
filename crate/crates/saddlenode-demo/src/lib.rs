//! Browser demo (placeholder).
