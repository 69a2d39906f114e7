//! Units whose receptive field lies entirely in sentence-end padding must be
//! exact zeros at every layer, whatever the weights and biases.

mod common;

#[test]
fn sentence_stack_padding_is_exactly_zero() {
    common::padding::sentence_stack_padding_is_exactly_zero();
}

#[test]
fn interaction_stack_padding_is_exactly_zero() {
    common::padding::interaction_stack_padding_is_exactly_zero();
}
