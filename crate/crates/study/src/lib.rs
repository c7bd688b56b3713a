//! Blinded real-vs-synthetic reader study: one image at a time, four-choice
//! answers, server-measured lead times and an append-only response log.

pub mod clock;
pub mod definition;
pub mod http;
pub mod images;
pub mod log;
pub mod service;

pub use clock::{Clock, ManualClock, SystemClock};
pub use definition::{build_study, StudyDefinition, StudyItem};
pub use http::{router, serve};
pub use images::{prepare_images, render_for_display, DISPLAY_SIZE};
pub use service::{NextItem, SessionView, StudyError, StudyService};
