use super::FeatureSequence;

/// Concatenates frames `t-left..=t` per step, oldest first; steps before
/// the start repeat frame 0.
pub fn stack_context(seq: &FeatureSequence, left: usize) -> FeatureSequence {
    let d = seq.dim;
    let mut values = Vec::with_capacity(seq.values.len() * (left + 1));
    for t in 0..seq.len() {
        for k in (0..=left).rev() {
            values.extend_from_slice(seq.row(t.saturating_sub(k)));
        }
    }
    FeatureSequence {
        utt_id: seq.utt_id.clone(),
        step_rate: seq.step_rate,
        dim: d * (left + 1),
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stacked_dims() {
        let s = FeatureSequence::new("u", 26, vec![0.5; 26 * 7]);
        assert_eq!(stack_context(&s, 10).dim, 286);
        let s = FeatureSequence::new("u", 13, vec![0.5; 13 * 7]);
        let st = stack_context(&s, 10);
        assert_eq!(st.dim, 143);
        assert_eq!(st.len(), 7);
        for t in 1..7 {
            assert_eq!(st.row(t), st.row(0));
        }
    }

    #[test]
    fn order_and_padding() {
        let s = FeatureSequence::new("u", 1, vec![1.0, 2.0, 3.0, 4.0]);
        let st = stack_context(&s, 2);
        assert_eq!(st.values, vec![1.0, 1.0, 1.0, 1.0, 1.0, 2.0, 1.0, 2.0, 3.0, 2.0, 3.0, 4.0]);
    }

    proptest::proptest! {
        #[test]
        fn length_preserving(t in 1usize..40, d in 1usize..6, left in 0usize..12) {
            let s = FeatureSequence::new("u", d, (0..t * d).map(|i| i as f64).collect());
            let st = stack_context(&s, left);
            proptest::prop_assert_eq!(st.len(), t);
            proptest::prop_assert_eq!(st.row(t - 1)[left * d..].to_vec(), s.row(t - 1).to_vec());
        }
    }
}
