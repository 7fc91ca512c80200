import numpy as np
import pytest
from hypothesis import given, strategies as st

from somonitor.backends import ScriptedCompletionBackend
from somonitor.domain import CtrDistribution, ScoreLayer
from somonitor.ranking import (
    AllRunsFailed,
    ClassifierRegistry,
    MissingPerformance,
    PoolTooSmall,
    RankerConfig,
    RankerKind,
    RankedList,
    UnknownClassifier,
    UnparsableRanking,
    build_grounding_block,
    default_registry,
    ensemble_rank,
    llm_rank_once,
    make_oracle_classifier,
    rank_by_score,
    score,
)

from conftest import make_ad


def pool_with_ctrs(ctrs, brand="acme", prefix="p"):
    return [
        make_ad(ad_id=f"{prefix}{i}", brand=brand, impressions=10_000, clicks=int(c * 10_000))
        for i, c in enumerate(ctrs)
    ]


class TestClassifiers:
    def test_oracle_top_tercile(self):
        ads = pool_with_ctrs([0.01, 0.02, 0.03, 0.04, 0.05, 0.06])
        classify = make_oracle_classifier(ads)
        dist = classify(ads[-1])
        assert (dist.p_high, dist.p_avg, dist.p_low) == (0.8, 0.1, 0.1)

    def test_oracle_bottom_tercile(self):
        ads = pool_with_ctrs([0.01, 0.02, 0.03, 0.04, 0.05, 0.06])
        dist = make_oracle_classifier(ads)(ads[0])
        assert dist.p_low == 0.8

    def test_simplex_invariant(self):
        ads = pool_with_ctrs([0.01, 0.04, 0.07])
        registry = default_registry(ads)
        for ad in ads:
            for classifier_id in ("oracle", "lexical-baseline"):
                dist = registry.classify(ad, classifier_id)
                assert abs(dist.p_high + dist.p_avg + dist.p_low - 1.0) <= 1e-9

    def test_oracle_missing_performance(self):
        ads = pool_with_ctrs([0.01, 0.02, 0.03])
        classify = make_oracle_classifier(ads)
        with pytest.raises(MissingPerformance):
            classify(make_ad(ad_id="noimp", impressions=0, clicks=0))

    def test_unknown_classifier(self):
        with pytest.raises(UnknownClassifier):
            ClassifierRegistry().classify(make_ad(), "ghost")

    def test_lexical_is_deterministic(self):
        registry = default_registry()
        ad = make_ad(text="Fast rides for busy teams")
        assert registry.classify(ad, "lexical-baseline") == registry.classify(ad, "lexical-baseline")


class TestScore:
    def test_worked_example(self):
        dist = CtrDistribution(p_high=0.7, p_avg=0.2, p_low=0.1)
        assert score(dist, ScoreLayer(alpha=2.0, beta=1.0)) == pytest.approx(1.7)

    def test_identity_layer(self):
        dist = CtrDistribution(p_high=0.35, p_avg=0.4, p_low=0.25)
        assert score(dist, ScoreLayer(alpha=1.0, beta=0.0)) == pytest.approx(0.35)

    @given(p_high=st.floats(min_value=0, max_value=1, allow_nan=False))
    def test_degenerate_layer_is_constant(self, p_high):
        rest = 1.0 - p_high
        dist = CtrDistribution(p_high=p_high, p_avg=rest / 2, p_low=rest / 2)
        assert score(dist, ScoreLayer(alpha=3.0, beta=3.0)) == pytest.approx(3.0)


def fixed_registry(p_highs):
    registry = ClassifierRegistry()

    def classify(ad):
        p = p_highs[ad.id]
        return CtrDistribution(p_high=p, p_avg=(1 - p) / 2, p_low=(1 - p) / 2)

    registry.register("fixed", classify)
    return registry


class TestRankByScore:
    def test_sort_order(self):
        ads = [make_ad(ad_id=i) for i in ("a", "b", "c")]
        registry = fixed_registry({"a": 0.9, "b": 0.4, "c": 0.6})
        ranked = rank_by_score(ads, ScoreLayer(1.0, 0.0), "fixed", registry)
        assert ranked.candidate_ids == ("a", "c", "b")
        assert ranked.ranker == RankerKind.SCORE_LAYER
        assert ranked.scores == (0.9, 0.6, 0.4)

    def test_alpha_less_than_beta_reverses(self):
        ads = [make_ad(ad_id=i) for i in ("a", "b", "c")]
        registry = fixed_registry({"a": 0.9, "b": 0.4, "c": 0.6})
        fwd = rank_by_score(ads, ScoreLayer(2.0, 1.0), "fixed", registry)
        rev = rank_by_score(ads, ScoreLayer(1.0, 2.0), "fixed", registry)
        assert rev.candidate_ids == tuple(reversed(fwd.candidate_ids))

    def test_ties_broken_by_id(self):
        ads = [make_ad(ad_id=i) for i in ("zeta", "alpha", "mid")]
        registry = fixed_registry({"zeta": 0.5, "alpha": 0.5, "mid": 0.5})
        ranked = rank_by_score(ads, ScoreLayer(1.0, 0.0), "fixed", registry)
        assert ranked.candidate_ids == ("alpha", "mid", "zeta")

    def test_input_order_invariance(self):
        ads = [make_ad(ad_id=i) for i in ("a", "b", "c", "d")]
        registry = fixed_registry({"a": 0.1, "b": 0.9, "c": 0.5, "d": 0.5})
        fwd = rank_by_score(ads, ScoreLayer(1.0, 0.0), "fixed", registry)
        rev = rank_by_score(list(reversed(ads)), ScoreLayer(1.0, 0.0), "fixed", registry)
        assert fwd.candidate_ids == rev.candidate_ids

    def test_permutation_safety(self):
        ads = [make_ad(ad_id=f"x{i}") for i in range(7)]
        registry = fixed_registry({a.id: (i * 37 % 10) / 10 for i, a in enumerate(ads)})
        ranked = rank_by_score(ads, ScoreLayer(1.0, 0.0), "fixed", registry)
        assert sorted(ranked.candidate_ids) == sorted(a.id for a in ads)


class TestGroundingBlock:
    def test_worked_example(self):
        pool = pool_with_ctrs([0.01, 0.05, 0.03, 0.02, 0.04])
        block = build_grounding_block(pool)
        assert block.best.ctr_value == pytest.approx(0.05)
        assert block.average.ctr_value == pytest.approx(0.03)
        assert block.worst.ctr_value == pytest.approx(0.01)

    def test_pool_of_three(self):
        pool = pool_with_ctrs([0.04, 0.01, 0.02])
        block = build_grounding_block(pool)
        assert (block.worst.ctr_value, block.average.ctr_value, block.best.ctr_value) == (
            pytest.approx(0.01),
            pytest.approx(0.02),
            pytest.approx(0.04),
        )

    def test_pool_too_small(self):
        with pytest.raises(PoolTooSmall):
            build_grounding_block(pool_with_ctrs([0.01, 0.02]))

    def test_even_pool_uses_lower_median(self):
        pool = pool_with_ctrs([0.01, 0.02, 0.03, 0.04])
        assert build_grounding_block(pool).average.ctr_value == pytest.approx(0.02)

    def test_candidates_excluded_from_pool(self):
        pool = pool_with_ctrs([0.01, 0.02, 0.03, 0.04, 0.05])
        block = build_grounding_block(pool, exclude_ids=frozenset({"p4"}))
        assert block.best.ctr_value == pytest.approx(0.04)
        with pytest.raises(PoolTooSmall):
            build_grounding_block(pool, exclude_ids=frozenset({"p0", "p1", "p2"}))

    def test_mixed_brand_pool_rejected(self):
        pool = pool_with_ctrs([0.01, 0.02, 0.03])
        pool.append(make_ad(ad_id="other", brand="rival", impressions=100, clicks=1))
        with pytest.raises(ValueError):
            build_grounding_block(pool)

    def test_exemplars_distinct(self):
        pool = pool_with_ctrs([0.02, 0.02, 0.02])
        block = build_grounding_block(pool)
        assert len({block.best.ad_id, block.average.ad_id, block.worst.ad_id}) == 3


def scripted_gateway(gateway, by_seed=None, fallback=None):
    gateway.register_completion("scripted", ScriptedCompletionBackend(by_seed=by_seed, fallback=fallback))
    return gateway


def candidates_abc():
    return [make_ad(ad_id=i, text=f"ad {i} text") for i in ("A", "B", "C")]


class TestLlmRankOnce:
    def test_clean_ordering(self, gateway):
        scripted_gateway(gateway, by_seed={0: "C, A, B"})
        ranked = llm_rank_once(candidates_abc(), RankerConfig(backend_id="scripted"), gateway)
        assert ranked.candidate_ids == ("C", "A", "B")
        assert ranked.ranker == RankerKind.LLM_SINGLE
        assert not ranked.grounded

    def test_repair_rule(self, gateway):
        scripted_gateway(gateway, by_seed={0: "C, C, A"})
        ranked = llm_rank_once(candidates_abc(), RankerConfig(backend_id="scripted"), gateway)
        assert ranked.candidate_ids == ("C", "A", "B")

    def test_gibberish_unparsable(self, gateway):
        scripted_gateway(gateway, by_seed={0: "total nonsense output"})
        with pytest.raises(UnparsableRanking):
            llm_rank_once(candidates_abc(), RankerConfig(backend_id="scripted"), gateway)

    def test_id_boundary_matching(self, gateway):
        ads = [make_ad(ad_id=i, text="t") for i in ("ad-1", "ad-11")]
        scripted_gateway(gateway, by_seed={0: "ad-11, ad-1"})
        ranked = llm_rank_once(ads, RankerConfig(backend_id="scripted"), gateway)
        assert ranked.candidate_ids == ("ad-11", "ad-1")

    def test_needs_two_candidates(self, gateway):
        with pytest.raises(ValueError):
            llm_rank_once([make_ad()], RankerConfig(backend_id="scripted"), gateway)

    def test_grounding_overlap_rejected(self, gateway):
        scripted_gateway(gateway, by_seed={0: "A, B, C"})
        pool = pool_with_ctrs([0.01, 0.02, 0.03], prefix="A")  # creates A0 A1 A2
        pool[0] = make_ad(ad_id="A", brand="acme", impressions=100, clicks=1)
        block = build_grounding_block(pool)
        with pytest.raises(ValueError):
            llm_rank_once(candidates_abc(), RankerConfig(backend_id="scripted"), gateway, grounding=block)

    def test_grounding_rendered_into_prompt(self, gateway):
        seen = {}

        def fallback(req):
            seen["prompt"] = req.user_prompt
            return "A, B, C"

        scripted_gateway(gateway, fallback=fallback)
        pool = pool_with_ctrs([0.01, 0.02, 0.03])
        block = build_grounding_block(pool)
        ranked = llm_rank_once(
            candidates_abc(), RankerConfig(backend_id="scripted"), gateway, grounding=block
        )
        assert ranked.grounded
        assert "best performer" in seen["prompt"]
        assert "worst performer" in seen["prompt"]

    def test_temperature_and_seed_passed(self, gateway):
        seen = {}

        def fallback(req):
            seen["temperature"] = req.temperature
            seen["seed"] = req.seed
            return "A, B, C"

        scripted_gateway(gateway, fallback=fallback)
        llm_rank_once(
            candidates_abc(),
            RankerConfig(backend_id="scripted", temperature=0.1, seed_base=40),
            gateway,
            run_index=2,
        )
        assert seen == {"temperature": 0.1, "seed": 42}


class TestEnsembleRank:
    def test_worked_example(self, gateway):
        runs = ["A, B, C", "A, C, B", "B, A, C", "A, B, C", "C, A, B"]
        scripted_gateway(gateway, by_seed={i: r for i, r in enumerate(runs)})
        ranked = ensemble_rank(candidates_abc(), RankerConfig(backend_id="scripted"), gateway)
        # totals: A = 1+1+2+1+2 = 7, B = 2+3+1+2+3 = 11, C = 3+2+3+3+1 = 12
        assert ranked.candidate_ids == ("A", "B", "C")
        assert ranked.ranker == RankerKind.LLM_ENSEMBLE
        assert len(ranked.run_ids) == 5
        assert ranked.run_orderings[0] == ("A", "B", "C")
        assert not ranked.degraded

    def test_identical_runs_idempotent(self, gateway):
        scripted_gateway(gateway, by_seed={i: "B, C, A" for i in range(5)})
        ranked = ensemble_rank(candidates_abc(), RankerConfig(backend_id="scripted"), gateway)
        assert ranked.candidate_ids == ("B", "C", "A")

    def test_single_run_matches_llm_rank_once(self, gateway):
        scripted_gateway(gateway, by_seed={0: "C, B, A"})
        single = llm_rank_once(candidates_abc(), RankerConfig(backend_id="scripted"), gateway)
        ensemble = ensemble_rank(
            candidates_abc(), RankerConfig(backend_id="scripted", ensemble_runs=1), gateway
        )
        assert ensemble.candidate_ids == single.candidate_ids

    def test_rank_sum_ties_broken_by_id(self, gateway):
        scripted_gateway(gateway, by_seed={0: "A, B", 1: "B, A"})
        ads = [make_ad(ad_id=i, text="t") for i in ("B", "A")]
        ranked = ensemble_rank(ads, RankerConfig(backend_id="scripted", ensemble_runs=2), gateway)
        assert ranked.candidate_ids == ("A", "B")

    def test_degraded_flag(self, gateway):
        by_seed = {0: "A, B, C", 1: "junk", 2: "junk", 3: "junk", 4: "junk"}
        scripted_gateway(gateway, by_seed=by_seed)
        ranked = ensemble_rank(candidates_abc(), RankerConfig(backend_id="scripted"), gateway)
        assert ranked.degraded
        assert ranked.candidate_ids == ("A", "B", "C")
        assert len(ranked.run_ids) == 1

    def test_all_runs_failed(self, gateway):
        scripted_gateway(gateway, by_seed={i: "junk" for i in range(5)})
        with pytest.raises(AllRunsFailed):
            ensemble_rank(candidates_abc(), RankerConfig(backend_id="scripted"), gateway)

    def test_reproducible_byte_for_byte(self, gateway):
        runs = ["A, B, C", "B, A, C", "C, B, A", "A, C, B", "B, C, A"]
        scripted_gateway(gateway, by_seed={i: r for i, r in enumerate(runs)})
        first = ensemble_rank(candidates_abc(), RankerConfig(backend_id="scripted"), gateway)
        second = ensemble_rank(candidates_abc(), RankerConfig(backend_id="scripted"), gateway)
        assert first.to_payload() == second.to_payload()

    def test_payload_round_trip(self, gateway):
        scripted_gateway(gateway, by_seed={i: "A, B, C" for i in range(5)})
        ranked = ensemble_rank(candidates_abc(), RankerConfig(backend_id="scripted"), gateway)
        assert RankedList.from_payload(ranked.to_payload()) == ranked


class TestOrderInvariance:
    @given(
        p1=st.floats(min_value=0, max_value=1, allow_nan=False),
        p2=st.floats(min_value=0, max_value=1, allow_nan=False),
        alpha=st.floats(min_value=-5, max_value=5, allow_nan=False),
        beta=st.floats(min_value=-5, max_value=5, allow_nan=False),
    )
    def test_sign_relation(self, p1, p2, alpha, beta):
        layer = ScoreLayer(alpha=alpha, beta=beta)
        d1 = CtrDistribution(p_high=p1, p_avg=(1 - p1) / 2, p_low=(1 - p1) / 2)
        d2 = CtrDistribution(p_high=p2, p_avg=(1 - p2) / 2, p_low=(1 - p2) / 2)
        diff = score(d1, layer) - score(d2, layer)
        expected = np.sign(alpha - beta) * np.sign(p1 - p2)
        assert np.sign(diff) == expected or abs(diff) < 1e-12
