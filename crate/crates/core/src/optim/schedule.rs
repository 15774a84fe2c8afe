use crate::hermite::HermiteRank;

/// Coarse-to-fine rank: 0 until `phase1_steps`, then one more every
/// `rank_period` steps, capped at `max_rank`.
pub fn active_rank(
    step: usize,
    phase1_steps: usize,
    rank_period: usize,
    max_rank: HermiteRank,
) -> HermiteRank {
    if step < phase1_steps {
        return HermiteRank::ZERO;
    }
    let raised = (step - phase1_steps) / rank_period.max(1);
    HermiteRank::saturating(raised.min(max_rank.get()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_examples() {
        let max = HermiteRank::MAX;
        assert_eq!(active_rank(0, 3000, 1000, max).get(), 0);
        assert_eq!(active_rank(2999, 3000, 1000, max).get(), 0);
        assert_eq!(active_rank(3000, 3000, 1000, max).get(), 0);
        assert_eq!(active_rank(3999, 3000, 1000, max).get(), 0);
        assert_eq!(active_rank(4000, 3000, 1000, max).get(), 1);
        assert_eq!(
            active_rank(3000 + 9 * 1000 + 5000, 3000, 1000, max).get(),
            9
        );
        let cap = HermiteRank::new(3).unwrap();
        assert_eq!(active_rank(50_000, 0, 1000, cap).get(), 3);
    }
}
