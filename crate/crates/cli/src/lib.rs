//! Evaluation experiments behind `biotone eval-tonal` and
//! `biotone eval-vitals`.

pub mod eval;

pub use eval::{eval_tonal, eval_vitals, Condition, EvalReport, VitalsCase, VitalsEvalConfig, VitalsReport};
