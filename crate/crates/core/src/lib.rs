//! Inventor career reconstruction from East and West German patent records,
//! career linkage across reunification, shift-share instruments and the
//! estimators used on the resulting panel.

pub mod corpus;
pub mod disambig;
pub mod econometrics;
pub mod instruments;
pub mod linkage;
pub mod sensitivity;
pub mod synth;
pub mod pipeline;
