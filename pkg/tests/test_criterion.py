import math

import numpy as np
import pytest

from oracles import ebic_oracle, log_binomial_exact, normal_equations_rss
from sess.criterion import (EbicParams, ModelState, derive_gamma, ebic, ebic_terms, fit_term)
from sess.errors import InvalidArgs, Overcapacity, PerfectFit
from sess.grouped import BlockCoordinate, GroupSpec, prepare


def toy(rng, n=20, xs=(2,), ys=(2,)):
    g = GroupSpec.contiguous(list(xs), list(ys))
    return prepare(rng.normal(size=(n, sum(xs))), rng.normal(size=(n, sum(ys))), g)


class TestGamma:
    def test_n_equals_p(self):
        assert derive_gamma(37, 37) == pytest.approx(0.5, abs=1e-15)

    def test_benchmark_dims(self):
        assert derive_gamma(150, 200) == pytest.approx(1 - math.log(150) / (2 * math.log(200)))
        assert derive_gamma(150, 200) == pytest.approx(0.5272, abs=1e-4)
        assert derive_gamma(150, 400) == pytest.approx(0.5818, abs=1e-4)

    def test_small_p_negative_then_clipped(self):
        assert derive_gamma(100, 5) < 0
        assert EbicParams().resolve_gamma(100, 5) == 0.0
        assert EbicParams(gamma=0.7).resolve_gamma(100, 5) == 0.7

    @pytest.mark.parametrize("n,p", [(1, 10), (10, 1)])
    def test_invalid(self, n, p):
        with pytest.raises(InvalidArgs):
            derive_gamma(n, p)

    def test_params_validation(self):
        with pytest.raises(InvalidArgs):
            EbicParams(lambda1=-1)
        with pytest.raises(InvalidArgs):
            EbicParams(gamma=1.5)
        with pytest.raises(InvalidArgs):
            EbicParams(fit_term="deviance")


class TestEmptyModel:
    def test_group_term_literal(self, rng):
        data = toy(rng, xs=(2, 2), ys=(2, 3))
        params = EbicParams(fit_term="group", gamma=0.5)
        expected = sum(data.n * math.log(np.sum(data.y_block(j) ** 2) / data.n)
                       for j in range(2))
        assert ebic(ModelState(), data, params) == pytest.approx(expected, abs=1e-10)

    def test_penalties_vanish(self, rng):
        data = toy(rng)
        terms = ebic_terms(ModelState(), data, EbicParams())
        assert terms.size_penalty == 0.0 and terms.combinatorial_penalty == 0.0


class TestTermOracle:
    def test_one_entry_toy(self, rng):
        # [DERIVED] n=20, one 2x2 block, one entry, lambda1 = lambda2 = 1
        data = toy(rng)
        params = EbicParams(gamma=derive_gamma(20, 2) if derive_gamma(20, 2) >= 0 else 0.0)
        state = ModelState.of([BlockCoordinate(0, 0, 1, 0)])
        rss0 = normal_equations_rss(data.x[:, [1]], data.y[:, 0])
        rss1 = float(data.y[:, 1] @ data.y[:, 1])
        n = 20
        fit = n * 2 * math.log((rss0 + rss1) / (n * 2))
        gamma = params.resolve_gamma(n, 2)
        expected = fit + math.log(n) + 2 * gamma * (math.log(1) + math.log(4))
        assert ebic(state, data, params) == pytest.approx(expected, abs=1e-9)

    def test_one_entry_explicit_gamma(self, rng):
        data = toy(rng)
        params = EbicParams(gamma=0.8, lambda1=1.0, lambda2=1.0)
        state = ModelState.of([BlockCoordinate(0, 0, 1, 0)])
        expected = ebic_oracle(data.x, data.y, [2], [2], [(0, 0, 1, 0)], 1.0, 1.0, 0.8, "pooled")
        assert ebic(state, data, params) == pytest.approx(expected, abs=1e-9)

    @pytest.mark.parametrize("kind", ["group", "pooled", "response"])
    def test_fit_terms(self, rng, kind):
        data = toy(rng, n=25, xs=(2, 3), ys=(3, 2))
        entries = [(0, 0, 0, 0), (1, 0, 2, 1), (1, 1, 0, 0), (1, 1, 1, 0), (0, 1, 1, 1)]
        params = EbicParams(lambda1=0.7, lambda2=1.3, gamma=0.4, fit_term=kind)
        got = ebic(ModelState.of([BlockCoordinate(*e) for e in entries]), data, params)
        want = ebic_oracle(data.x, data.y, [2, 3], [3, 2], entries, 0.7, 1.3, 0.4, kind)
        assert got == pytest.approx(want, abs=1e-9)

    def test_combinatorial_term(self, rng):
        data = toy(rng, n=30, xs=(3, 2), ys=(2, 2))
        entries = [BlockCoordinate(0, 0, 0, 0), BlockCoordinate(0, 0, 1, 1),
                   BlockCoordinate(1, 1, 0, 0)]
        terms = ebic_terms(ModelState.of(entries), data, EbicParams(gamma=1.0))
        comb = log_binomial_exact(4, 2) + log_binomial_exact(6, 2) + log_binomial_exact(4, 1)
        assert terms.combinatorial_penalty == pytest.approx(2 * comb, abs=1e-12)
        assert terms.size_penalty == pytest.approx(3 * math.log(30), abs=1e-12)


class TestEdges:
    def test_perfect_fit(self):
        x = np.arange(6.0)[:, None]
        data = prepare(x, np.column_stack([x[:, 0], x[:, 0] ** 2]), GroupSpec.contiguous([1], [2]))
        state = ModelState.of([BlockCoordinate(0, 0, 0, 0)])
        with pytest.raises(PerfectFit):
            ebic(state, data, EbicParams(fit_term="response"))

    def test_overcapacity(self, rng):
        data = toy(rng, n=3, xs=(3,), ys=(1,))
        state = ModelState.of([BlockCoordinate(0, 0, a, 0) for a in range(3)])
        with pytest.raises(Overcapacity):
            ebic(state, data, EbicParams())

    def test_fit_term_monotone_in_rss(self):
        g = GroupSpec.contiguous([1], [3])
        for kind in ("group", "pooled", "response"):
            a = fit_term([5.0, 4.0, 3.0], 10, g, kind)
            b = fit_term([5.0, 3.5, 3.0], 10, g, kind)
            assert b < a

    def test_model_state(self):
        s = ModelState().with_entry(BlockCoordinate(0, 1, 0, 0))
        s = s.with_entry(BlockCoordinate(0, 1, 1, 0))
        assert s.m == 1
        assert s.block_counts[(0, 1)] == 2
