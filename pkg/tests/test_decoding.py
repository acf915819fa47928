"""Tests for nucleus truncation, sampling, keywords, and constrained search."""

import math
import random

import pytest

from pairdistill.decoding import (
    ConstraintState,
    GenerationConfig,
    constrained_beam_search,
    extract_keywords,
    nucleus_truncate,
    sample_sentences,
)
from pairdistill.errors import InputError
from pairdistill.lmcore import TokenDistribution, build_toy_lm
from pairdistill.textmetrics import from_tokens, tokenize


def _config(**kwargs):
    defaults = dict(k1=10, k2=4, top_p=0.7, beam_width=16, max_tokens=8, seed=11)
    defaults.update(kwargs)
    return GenerationConfig(**defaults)


def _sequence_score(model, prefix, tokens):
    """Length-normalized log-probability, recomputed independently."""
    logp = 0.0
    context = list(prefix)
    for tok in tokens:
        dist = model.next_token_distribution(context)
        prob = dict(dist.entries)[tok]
        logp += math.log(prob)
        context.append(tok)
    return logp / len(tokens)


def _enumerate_constrained(model, prefix, keyword_runs, max_tokens, k):
    """Exhaustive oracle: every finished sequence containing all keywords."""
    results = []

    def contains(tokens, run):
        n = len(run)
        return any(tokens[i : i + n] == run for i in range(len(tokens) - n + 1))

    def recurse(tokens, logp):
        if len(tokens) >= max_tokens:
            return
        dist = model.next_token_distribution(prefix + tokens)
        for tok, prob in dist.entries:
            if prob <= 0.0:
                continue
            grown = tokens + (tok,)
            grown_logp = logp + math.log(prob)
            if tok == model.end_token:
                if all(contains(grown, run) for run in keyword_runs):
                    results.append((grown, grown_logp / len(grown)))
            else:
                recurse(grown, grown_logp)

    recurse((), 0.0)
    results.sort(key=lambda r: (-r[1], r[0]))
    return [tokens for tokens, _ in results[:k]]


def _plain_beam(model, prefix, beam_width, max_tokens, k):
    """Standard beam search oracle (no constraints, no buckets)."""
    live = [((), 0.0)]
    finished = []
    for _ in range(max_tokens):
        successors = []
        for tokens, logp in live:
            dist = model.next_token_distribution(prefix + tokens)
            for tok, prob in dist.entries:
                if prob <= 0.0:
                    continue
                grown = tokens + (tok,)
                grown_logp = logp + math.log(prob)
                if tok == model.end_token:
                    finished.append((grown, grown_logp / len(grown)))
                else:
                    successors.append((grown, grown_logp))
        successors.sort(key=lambda s: (-(s[1] / len(s[0])), s[0]))
        live = successors[:beam_width]
        if not live:
            break
    finished.sort(key=lambda f: (-f[1], f[0]))
    return [tokens for tokens, _ in finished[:k]]


class TestNucleusTruncate:
    def test_full_mass_is_identity_support(self):
        dist = TokenDistribution.from_probs({"a": 0.5, "b": 0.3, "c": 0.2})
        kept = nucleus_truncate(dist, 1.0)
        assert [t for t, _ in kept.entries] == [t for t, _ in dist.entries]

    def test_analytic_example(self):
        dist = TokenDistribution(entries=(("a", 0.6), ("b", 0.3), ("c", 0.1)))
        kept = nucleus_truncate(dist, 0.7)
        assert [t for t, _ in kept.entries] == ["a", "b"]
        assert kept.entries[0][1] == pytest.approx(2 / 3, abs=1e-9)
        assert kept.entries[1][1] == pytest.approx(1 / 3, abs=1e-9)

    def test_tiny_top_p_keeps_single_mode(self):
        dist = TokenDistribution.from_probs({"a": 0.6, "b": 0.4})
        kept = nucleus_truncate(dist, 1e-9)
        assert kept.entries == (("a", 1.0),)

    def test_minimal_support(self):
        rng = random.Random(42)
        for _ in range(200):
            n = rng.randint(1, 8)
            weights = {f"t{i}": rng.random() + 1e-3 for i in range(n)}
            dist = TokenDistribution.from_probs(weights)
            top_p = rng.uniform(0.05, 0.999)
            kept = nucleus_truncate(dist, top_p)
            original = dict(dist.entries)
            kept_mass = sum(original[t] for t, _ in kept.entries)
            assert kept_mass >= top_p - 1e-12
            if len(kept.entries) > 1:
                without_last = kept_mass - original[kept.entries[-1][0]]
                assert without_last < top_p

    def test_invalid_top_p(self):
        dist = TokenDistribution.from_probs({"a": 1.0})
        with pytest.raises(InputError):
            nucleus_truncate(dist, 0.0)
        with pytest.raises(InputError):
            nucleus_truncate(dist, 1.5)


class TestSampleSentences:
    def test_deterministic_chain(self):
        model = build_toy_lm([tokenize("a b .")], order=3)
        got = sample_sentences(model, from_tokens([]), 3, _config(top_p=1.0))
        assert [s.tokens for s in got] == [("a", "b", ".")] * 3

    def test_fixed_seed_reproducible(self):
        model = build_toy_lm([tokenize("a b c . a c b . b a c .")], order=3)
        cfg = _config(seed=77)
        first = sample_sentences(model, from_tokens(["a"]), 10, cfg)
        second = sample_sentences(model, from_tokens(["a"]), 10, cfg)
        assert [s.tokens for s in first] == [s.tokens for s in second]

    def test_streams_differ_by_purpose(self):
        model = build_toy_lm([tokenize("a b c . a c b . b a c . c a b .")], order=2)
        cfg = _config(seed=3)
        pool_a = sample_sentences(model, from_tokens(["a"]), 20, cfg, stream="one")
        pool_b = sample_sentences(model, from_tokens(["a"]), 20, cfg, stream="two")
        assert [s.tokens for s in pool_a] != [s.tokens for s in pool_b]

    def test_tokens_stay_inside_nucleus(self):
        corpus = [tokenize("a b c . a c b . b a c . c a b . a b . b c a .")]
        model = build_toy_lm(corpus, order=3)
        cfg = _config(top_p=0.7, seed=5, max_tokens=6)
        prefix = from_tokens(["a"])
        draws = 0
        for sentence in sample_sentences(model, prefix, 400, cfg):
            context = list(prefix.tokens)
            for tok in sentence.tokens:
                nucleus = nucleus_truncate(
                    model.next_token_distribution(context), cfg.top_p
                )
                assert tok in {t for t, _ in nucleus.entries}
                context.append(tok)
                draws += 1
        assert draws >= 800

    def test_count_below_one_rejected(self):
        model = build_toy_lm([tokenize("a .")], order=2)
        with pytest.raises(InputError):
            sample_sentences(model, from_tokens([]), 0, _config())


class TestExtractKeywords:
    def test_recovers_reference_keywords(self):
        sentence = (
            '"The gas cloud is fairly small in size and prevailing winds are '
            'blowing it away from the platform and dispersing it," Total said.'
        )
        got = extract_keywords(tokenize(sentence), 5)
        assert len(got) == 5
        reference = {"gas", "cloud", "small", "blowing", "total"}
        assert len(reference & set(got)) >= 3

    def test_all_stopwords_yields_empty(self):
        assert extract_keywords(tokenize("the of and to it"), 5) == []

    def test_single_content_word(self):
        assert extract_keywords(tokenize("it is a platypus"), 5) == ["platypus"]

    def test_cap_respected(self):
        seq = tokenize("zebra yak xenon walrus vole urchin")
        assert len(extract_keywords(seq, 3)) == 3

    def test_term_frequency_dominates(self):
        seq = tokenize("quartz flint quartz mica quartz flint")
        got = extract_keywords(seq, 2)
        assert got == ["quartz", "flint"]

    def test_injected_extractor_wins(self):
        seq = tokenize("some input text")
        got = extract_keywords(seq, 2, extractor=lambda text, n: ["alpha", "beta", "gamma"])
        assert got == ["alpha", "beta"]


class TestConstraintState:
    def test_advance_marks_suffix_runs(self):
        state = ConstraintState.for_keywords([("b", "c"), ("d",)])
        state = state.advance(("a", "b"))
        assert state.satisfied == (False, False)
        state = state.advance(("a", "b", "c"))
        assert state.satisfied == (True, False)
        state = state.advance(("a", "b", "c", "d"))
        assert state.complete


class TestConstrainedBeamSearch:
    def _chain_model(self):
        return build_toy_lm([tokenize("a b c .")], order=3)

    def test_satisfiable_by_construction(self):
        model = self._chain_model()
        got = constrained_beam_search(
            model, from_tokens([]), ["b"], _config(k1=3, max_tokens=6)
        )
        assert got, "chain containing the keyword must yield results"
        for seq in got:
            assert "b" in seq.tokens

    def test_unreachable_keyword_returns_empty(self):
        model = self._chain_model()
        got = constrained_beam_search(
            model, from_tokens([]), ["zebra"], _config(k1=3, max_tokens=5)
        )
        assert got == []

    def test_matches_exhaustive_oracle_on_random_models(self):
        rng = random.Random(2024)
        vocab = ["a", "b", "c", "d", "e"]
        for trial in range(50):
            sentences = []
            for _ in range(rng.randint(2, 5)):
                length = rng.randint(1, 5)
                sentences.append(
                    from_tokens([rng.choice(vocab) for _ in range(length)] + ["."])
                )
            model = build_toy_lm(sentences, order=rng.choice([2, 3]))
            keywords = rng.sample(vocab, rng.randint(1, 2))
            cfg = _config(k1=3, beam_width=256, max_tokens=4)
            got = constrained_beam_search(model, from_tokens([]), keywords, cfg)
            expected = _enumerate_constrained(
                model, (), [(k,) for k in keywords], cfg.max_tokens, cfg.k1
            )
            assert [s.tokens for s in got] == expected, f"trial {trial}"
            for seq in got:
                for kw in keywords:
                    assert kw in seq.tokens

    def test_narrow_beam_example_matches_oracle(self):
        corpus = [tokenize("a b c . a c . b c a . c b .")]
        model = build_toy_lm(corpus, order=2)
        assert len(model.vocab) + 1 <= 6  # 6-symbol decoding alphabet
        cfg = _config(k1=2, beam_width=4, max_tokens=5)
        got = constrained_beam_search(model, from_tokens([]), ["c"], cfg)
        expected = _enumerate_constrained(model, (), [("c",)], cfg.max_tokens, cfg.k1)
        assert [s.tokens for s in got] == expected

    def test_reduces_to_plain_beam_search_without_constraints(self):
        rng = random.Random(5150)
        vocab = ["a", "b", "c", "d"]
        for _ in range(20):
            sentences = []
            for _ in range(rng.randint(2, 4)):
                length = rng.randint(1, 4)
                sentences.append(
                    from_tokens([rng.choice(vocab) for _ in range(length)] + ["."])
                )
            model = build_toy_lm(sentences, order=2)
            cfg = _config(k1=4, beam_width=3, max_tokens=5)
            got = constrained_beam_search(model, from_tokens([]), [], cfg)
            expected = _plain_beam(model, (), cfg.beam_width, cfg.max_tokens, cfg.k1)
            assert [s.tokens for s in got] == expected

    def test_scores_non_increasing(self):
        corpus = [tokenize("a b c . a c b . b a c . c a b . a b .")]
        model = build_toy_lm(corpus, order=2)
        cfg = _config(k1=8, beam_width=64, max_tokens=5)
        got = constrained_beam_search(model, from_tokens([]), ["a"], cfg)
        scores = [_sequence_score(model, (), seq.tokens) for seq in got]
        assert scores == sorted(scores, reverse=True)

    def test_multi_token_keyword(self):
        model = build_toy_lm([tokenize("a b c . b c a .")], order=3)
        cfg = _config(k1=4, beam_width=32, max_tokens=6)
        got = constrained_beam_search(model, from_tokens([]), ["b c"], cfg)
        for seq in got:
            text = " ".join(seq.tokens)
            assert "b c" in text
