mod alldiff;
mod cumulative;
mod diffn;
mod element;
mod objective;
mod sum;

pub use alldiff::AllDifferent;
pub use cumulative::{Cumulative, CumulativeTask};
pub use diffn::{Diffn, DiffnBox};
pub use element::{ConstArray, ElementEq, ElementTerm};
pub use objective::{Bound, MonotoneSumBound, MonotoneTerm};
pub use sum::SumEq;
