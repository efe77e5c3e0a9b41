//! Phase-1 solvers over a fixed candidate pool.

pub mod maxvol;
pub mod wda;
pub mod wmaxvol;

pub use maxvol::{maxvol, rect_maxvol, SubmatrixSelection};
pub use wda::{wda, write_wda_trace, WdaOptions, WdaResult, WdaTraceRow};
pub use wmaxvol::{
    wmaxvol, write_wmaxvol_trace, WmaxvolOptions, WmaxvolResult, WmaxvolState, WmaxvolTraceRow,
};
