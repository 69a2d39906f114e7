//! An ARC-I model embedded into ARC-II reproduces its encoders inside the
//! interaction grid.

mod common;

#[test]
fn arc1_embeds_into_arc2() {
    common::subsumption::arc1_embeds_into_arc2();
}

#[test]
fn mismatched_encoders_are_rejected() {
    common::subsumption::mismatched_encoders_are_rejected();
}
