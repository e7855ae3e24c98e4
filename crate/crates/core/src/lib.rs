//! Checking of logic-program exercises against example assertions.

pub mod chr;
pub mod diagnosis;
pub mod engine;
pub mod feedback;
pub mod marking;
pub mod parser;
pub mod reference;
pub mod render;
pub mod slicer;
pub mod term;
pub mod unify;

pub use engine::{Answer, Budget, Engine, EngineError, Outcome, Termination, Want};
pub use parser::{parse_file, Assertion, AssertionKind, ParseError, SourceFile};
pub use term::{Clause, PredKey, Program, Term, Var, VarAllocator, VarId};
pub use unify::{Bindings, DifStore, Substitution};
pub use reference::{Registry, Unspecified, Verdict};
pub use feedback::{annotate_file, annotate_text, check_file, CheckReport, Status};
pub use marking::{mark_exercise, ExerciseManifest, MarkInterval};
