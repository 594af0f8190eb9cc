mod support;

use mcgen_core::evalharness::balanced_acc_errorbar;
use mcgen_core::textmetrics::{bleu, rouge_l, BleuConfig};
use proptest::prelude::*;
use support::{bleu_cases, errorbar_closed_form, errorbar_monte_carlo, rouge_cases, rouge_oracle, toks};

#[test]
fn bleu_matches_hand_computed_cases() {
    let cases = bleu_cases();
    assert_eq!(cases.len(), 20);
    for c in cases {
        let cfg = BleuConfig {
            max_order: c.max_order,
            ..BleuConfig::default()
        };
        let got = bleu(&toks(c.candidate), &toks(c.reference), &cfg);
        assert!(
            (got - c.expected).abs() < 1e-9,
            "{:?} vs {:?} (order {}): {got} != {}",
            c.candidate,
            c.reference,
            c.max_order,
            c.expected
        );
    }
}

#[test]
fn rouge_matches_dp_oracle() {
    let cases = rouge_cases();
    assert_eq!(cases.len(), 20);
    for (c, r) in &cases {
        let got = rouge_l(c, r);
        assert!((got - rouge_oracle(c, r)).abs() < 1e-9, "{c:?} vs {r:?}");
    }
    assert!((rouge_l(&toks("a b c d"), &toks("a c b d")) - 0.75).abs() < 1e-12);
}

#[test]
fn errorbar_matches_closed_form_and_independent_monte_carlo() {
    let cases: [(&[u64], &[u64]); 4] = [
        (&[40, 35, 50, 20, 45], &[200, 180, 210, 190, 220]),
        (&[5], &[10]),
        (&[0, 10], &[10, 10]),
        (&[300, 310, 290, 305, 320], &[1000, 1000, 1000, 1000, 1000]),
    ];
    for (c, t) in cases {
        let got = balanced_acc_errorbar(c, t, 20_000, 3).unwrap();
        let exact = errorbar_closed_form(c, t);
        let mc = errorbar_monte_carlo(c, t, 20_000, 99);
        assert!((got - exact).abs() / exact < 0.05, "{got} vs closed form {exact}");
        assert!((got - mc).abs() / mc < 0.10, "{got} vs Monte Carlo oracle {mc}");
    }
}

proptest! {
    #[test]
    fn bleu_of_itself_is_one(x in proptest::collection::vec(0u8..6, 1..15), k in 1usize..10) {
        let cfg = BleuConfig { max_order: k, ..BleuConfig::default() };
        prop_assert!((bleu(&x, &x, &cfg) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rouge_agrees_with_full_table(c in proptest::collection::vec(0u8..5, 0..14), r in proptest::collection::vec(0u8..5, 0..14)) {
        let got = rouge_l(&c, &r);
        let want = if c.is_empty() || r.is_empty() { 0.0 } else { rouge_oracle(&c, &r) };
        prop_assert!((got - want).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&got));
    }
}
