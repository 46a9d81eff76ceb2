//! The CaRL rule and query language.
//!
//! Rules have the shape `A[X] <= A1[X1], ..., Ak[Xk] WHERE Q(Y)`; aggregate
//! rules `AGG_A[W] <= A[X] WHERE Q(Z)`; queries
//! `Y[X'] <= T[X] ? [WHEN <cnd> PEERS TREATED] [WHERE cond]`.

mod ast;
mod bind;
mod lexer;
mod parser;

pub use ast::*;
pub use bind::{bind_model, bind_query, BoundModel, BoundQuery};
pub use parser::{parse_model, parse_query};
