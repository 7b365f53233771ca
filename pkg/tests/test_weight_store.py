import numpy as np
import pytest

from slowfast_nas import search_space as ss
from slowfast_nas import weight_store as ws
from slowfast_nas.rng import named_rng


@pytest.fixture(scope="module")
def scheme4():
    return ss.SearchSpaceScheme(4)


def small_registry(scheme, shape=(3,)):
    return {key: shape for key in ws.enumerate_keys(scheme)}


class TestEnumerateKeys:
    def test_counts(self):
        assert len(ws.enumerate_keys(ss.SearchSpaceScheme(1))) == 28
        assert len(ws.enumerate_keys(ss.SearchSpaceScheme(4))) == 196

    def test_every_genotype_key_in_space(self, scheme4):
        space = set(ws.enumerate_keys(scheme4))
        rng = np.random.default_rng(0)
        for _ in range(100):
            g = ss.random_genotype(rng, scheme4)
            assert set(ws.genotype_keys(g)) <= space

    def test_key_text_round_trip(self, scheme4):
        for key in ws.enumerate_keys(scheme4):
            assert ws.WeightKey.from_text(key.text()) == key


class TestInit:
    def test_missing_shape(self, scheme4):
        registry = small_registry(scheme4)
        registry.pop(next(iter(registry)))
        with pytest.raises(ws.MissingShape):
            ws.init_weight_set(scheme4, registry, np.random.default_rng(0))

    def test_parameter_free_entries_empty(self, scheme4):
        omega = ws.init_weight_set(scheme4, ws.parameter_free_registry(scheme4), np.random.default_rng(0))
        assert all(entry.params.size == 0 for entry in omega.entries.values())
        assert all(entry.version == 0 for entry in omega.entries.values())

    def test_fixed_seed_identical(self, scheme4):
        registry = small_registry(scheme4, shape=(4, 5))
        a = ws.init_weight_set(scheme4, registry, np.random.default_rng(11))
        b = ws.init_weight_set(scheme4, registry, np.random.default_rng(11))
        assert ws.weight_set_digest(a) == ws.weight_set_digest(b)

    def test_variance_matches_fan_in(self, scheme4):
        # fan_in is the trailing dim; over >=1e5 draws the sample variance of
        # uniform(-sqrt(3/fan_in), +) sits within 10% of 1/fan_in
        fan_in = 5
        registry = small_registry(scheme4, shape=(120, fan_in))
        omega = ws.init_weight_set(scheme4, registry, np.random.default_rng(3))
        draws = np.concatenate([omega[k].params.ravel() for k in omega.keys()])
        assert len(draws) >= 10**5
        assert abs(draws.var() - 1 / fan_in) <= 0.1 / fan_in
        assert np.abs(draws).max() <= np.sqrt(3 / fan_in)


class TestInherit:
    def test_key_extraction_dedup(self):
        scheme = ss.SearchSpaceScheme(1)
        ident = ss.OperationKind.IDENTITY
        sep = ss.OperationKind.SEP_CONV_3
        dup = ss.Genotype(
            ss.CellGenotype((ss.Block(0, ident, 0, ident),), ss.CellType.NORMAL),
            ss.CellGenotype((ss.Block(0, sep, 1, sep),), ss.CellType.REDUCTION),
        )
        assert len(ws.genotype_keys(dup)) == 3  # normal edge deduplicated
        distinct = ss.Genotype(
            ss.CellGenotype((ss.Block(0, ident, 1, sep),), ss.CellType.NORMAL),
            ss.CellGenotype((ss.Block(0, sep, 1, ident),), ss.CellType.REDUCTION),
        )
        assert len(ws.genotype_keys(distinct)) == 4

    def test_identity_only_all_empty(self, scheme4):
        omega = ws.init_weight_set(scheme4, ws.parameter_free_registry(scheme4), np.random.default_rng(0))
        ident = ss.OperationKind.IDENTITY
        cells = [
            ss.CellGenotype(tuple(ss.Block(b % 2, ident, 0, ident) for b in range(4)), ct)
            for ct in (ss.CellType.NORMAL, ss.CellType.REDUCTION)
        ]
        inherited = ws.inherit(omega, ss.Genotype(*cells))
        assert all(e.params.size == 0 for e in inherited.values())

    def test_copies_not_aliases(self, scheme4):
        registry = small_registry(scheme4)
        omega = ws.init_weight_set(scheme4, registry, np.random.default_rng(1))
        g = ss.random_genotype(np.random.default_rng(2), scheme4)
        before = ws.weight_set_digest(omega)
        inherited = ws.inherit(omega, g)
        for entry in inherited.values():
            entry.params[:] = 999.0
        assert ws.weight_set_digest(omega) == before

    def test_purity(self, scheme4):
        registry = small_registry(scheme4)
        omega = ws.init_weight_set(scheme4, registry, np.random.default_rng(1))
        g = ss.random_genotype(np.random.default_rng(5), scheme4)
        before = ws.weight_set_digest(omega)
        first = ws.inherit(omega, g)
        second = ws.inherit(omega, g)
        assert first.keys() == second.keys()
        for key in first:
            assert np.array_equal(first[key].params, second[key].params)
        assert ws.weight_set_digest(omega) == before


def entry(value, shape=(3,)):
    return ws.WeightEntry(params=np.full(shape, float(value)), version=0)


class TestCommit:
    def test_fast_precedence(self, scheme4):
        registry = small_registry(scheme4)
        omega = ws.init_weight_set(scheme4, registry, np.random.default_rng(0))
        key = next(iter(omega.keys()))
        updated = ws.commit(omega, {key: entry(1.0)}, {key: entry(2.0)})
        assert np.all(updated[key].params == 1.0)
        assert updated[key].version == 1

    def test_disjoint_fill(self, scheme4):
        registry = small_registry(scheme4)
        omega = ws.init_weight_set(scheme4, registry, np.random.default_rng(0))
        keys = list(omega.sorted_keys())[:3]
        k1, k2, k3 = keys
        old3 = omega[k3].params.copy()
        updated = ws.commit(omega, {k1: entry(1.0)}, {k2: entry(2.0)})
        assert np.all(updated[k1].params == 1.0)
        assert np.all(updated[k2].params == 2.0)
        assert np.array_equal(updated[k3].params, old3)
        assert (updated[k1].version, updated[k2].version, updated[k3].version) == (1, 1, 0)

    def test_unknown_key(self, scheme4):
        registry = small_registry(scheme4)
        omega = ws.init_weight_set(scheme4, registry, np.random.default_rng(0))
        foreign = ws.WeightKey(ss.CellType.NORMAL, 0, 9, ss.OperationKind.IDENTITY)
        with pytest.raises(ws.UnknownKey):
            ws.commit(omega, {foreign: entry(0.0)}, {})

    def test_key_conservation_and_read_only_inputs(self, scheme4):
        registry = small_registry(scheme4)
        omega = ws.init_weight_set(scheme4, registry, np.random.default_rng(0))
        keys = omega.sorted_keys()
        fast = {keys[0]: entry(5.0)}
        updated = ws.commit(omega, fast, {})
        assert set(updated.keys()) == set(omega.keys())
        assert np.all(omega[keys[0]].params != 5.0) or omega[keys[0]].version == 0

    def test_randomized_against_set_algebra_oracle(self, scheme4):
        registry = small_registry(scheme4, shape=(2,))
        omega = ws.init_weight_set(scheme4, registry, np.random.default_rng(0))
        keys = omega.sorted_keys()
        rng = np.random.default_rng(99)
        for trial in range(200):
            fast_keys = [k for k in keys if rng.random() < 0.15]
            slow_keys = [k for k in keys if rng.random() < 0.15]
            fast = {k: entry(rng.normal(), (2,)) for k in fast_keys}
            slow = {k: entry(rng.normal(), (2,)) for k in slow_keys}
            updated = ws.commit(omega, fast, slow)
            # oracle: explicit set algebra over the three key classes
            for k in keys:
                if k in fast:
                    expect, bumped = fast[k].params, True
                elif k in slow:
                    expect, bumped = slow[k].params, True
                else:
                    expect, bumped = omega[k].params, False
                assert np.array_equal(updated[k].params, expect)
                assert updated[k].version == omega[k].version + (1 if bumped else 0)
            omega = updated

    def test_commit_then_inherit_returns_fast(self, scheme4):
        registry = small_registry(scheme4)
        omega = ws.init_weight_set(scheme4, registry, np.random.default_rng(0))
        g = ss.random_genotype(np.random.default_rng(8), scheme4)
        trained = {k: entry(3.25) for k in ws.genotype_keys(g)}
        updated = ws.commit(omega, trained, {})
        back = ws.inherit(updated, g)
        assert back.keys() == trained.keys()
        for key in back:
            assert np.array_equal(back[key].params, trained[key].params)


class TestCheckpointSegment:
    def test_bit_exact_round_trip(self, scheme4):
        registry = small_registry(scheme4, shape=(4, 3))
        omega = ws.init_weight_set(scheme4, registry, np.random.default_rng(21))
        data = ws.weight_set_to_dict(omega)
        restored = ws.weight_set_from_dict(data)
        assert ws.weight_set_digest(restored) == ws.weight_set_digest(omega)
        for key in omega.keys():
            assert restored[key].params.tobytes() == omega[key].params.tobytes()
            assert restored[key].version == omega[key].version

    def test_textual_keys(self, scheme4):
        omega = ws.init_weight_set(scheme4, ws.parameter_free_registry(scheme4), np.random.default_rng(0))
        data = ws.weight_set_to_dict(omega)
        assert "normal/0/2/max_pool_3x3" in data
        assert all(entry.keys() == {"shape", "version", "data"} for entry in data.values())
