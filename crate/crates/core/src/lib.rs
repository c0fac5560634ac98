pub mod autodiff;
pub mod bench;
pub mod data;
pub mod models;
pub mod par;
pub mod statevector;
