import numpy as np
import pytest

from attnref import reference_logits
from conftest import fd_check_store
from gdplace.errors import ContractError, DimensionError
from gdplace.numerics import ParamStore, Tape, Tensor, backward, ops
from gdplace.policy import (
    PlacementDistribution,
    PolicyConfig,
    SegmentCache,
    condition,
    conditioner,
    forward_segmented,
    gate_sizes,
    gate_vectors,
    greedy,
    init_policy,
    make_distribution,
    mean_entropy,
    placement_log_prob,
    sample,
)


def policy(seed=0, **kw):
    cfg = PolicyConfig(**{"hidden": 16, "layers": 2, "heads": 4, "segment": 8, **kw})
    store = ParamStore()
    init_policy(store, cfg, np.random.default_rng(seed))
    return cfg, store


def randomize_gates(store, seed=0):
    rng = np.random.default_rng(seed)
    for k in store:
        if "/gate/" in k:
            store.assign(k, rng.normal(scale=0.5, size=store[k].shape))


@pytest.mark.parametrize("mult", [1, 2, 4])
def test_segmented_matches_masked_reference(mult):
    cfg, store = policy(seed=mult)
    randomize_gates(store, mult)
    n = cfg.segment * mult
    emb = np.random.default_rng(mult).normal(size=(n, cfg.hidden))
    gates = gate_vectors(conditioner(Tensor(emb), store, cfg), store, cfg)
    out = forward_segmented(Tensor(emb), SegmentCache(), store, cfg, 3, gates).data
    P = {k: v.data for k, v in store.items()}
    ref = reference_logits(emb, P, cfg, 3, {k: g.data for k, g in gates.items()})
    assert np.max(np.abs(out - ref)) < 1e-10


def test_ragged_last_segment_matches_reference():
    cfg, store = policy(seed=9)
    emb = np.random.default_rng(9).normal(size=(cfg.segment * 2 + 3, cfg.hidden))
    out = forward_segmented(Tensor(emb), SegmentCache(), store, cfg, 2).data
    ref = reference_logits(emb, {k: v.data for k, v in store.items()}, cfg, 2)
    assert np.max(np.abs(out - ref)) < 1e-10


def test_single_segment_ignores_cache_machinery():
    cfg, store = policy()
    emb = Tensor(np.random.default_rng(0).normal(size=(5, cfg.hidden)))
    big = PolicyConfig(16, 2, 4, segment=64)
    a = forward_segmented(emb, SegmentCache(), store, cfg, 4).data
    b = forward_segmented(emb, SegmentCache(), store, big, 4).data
    assert np.array_equal(a, b)


def test_cache_receives_no_gradient():
    cfg, store = policy()
    n = cfg.segment * 2
    store.create("emb", np.random.default_rng(1).normal(size=(n, cfg.hidden)))
    probe = Tensor(np.random.default_rng(2).normal(size=(n, 3)))
    cache = SegmentCache()
    with Tape() as tape:
        logits = forward_segmented(store["emb"], cache, store, cfg, 3)
        # Loss on the second segment only.
        loss = ops.sum(ops.mul(ops.slice_axis(logits, cfg.segment, n, 0),
                               ops.slice_axis(probe, cfg.segment, n, 0)))
    g = backward(loss, tape, store)["emb"]
    assert np.all(g[: cfg.segment] == 0.0)
    assert np.any(g[cfg.segment:] != 0.0)
    assert len(cache) == n
    # Finite differences on a cached row see the change (the forward uses it),
    # but the analytic gradient is defined to ignore it.
    emb = store["emb"].data
    emb[0, 0] += 1e-3
    changed = forward_segmented(store["emb"], SegmentCache(), store, cfg, 3).data
    emb[0, 0] -= 1e-3
    assert not np.array_equal(changed[cfg.segment:], logits.data[cfg.segment:])


def test_gradients_match_finite_differences():
    cfg, store = policy()
    randomize_gates(store, 3)
    emb = Tensor(np.random.default_rng(4).normal(size=(6, cfg.hidden)))
    probe = Tensor(np.random.default_rng(5).normal(size=(6, 3)))

    def build(p):
        gates = gate_vectors(conditioner(emb, p, cfg), p, cfg)
        dist = make_distribution(forward_segmented(emb, SegmentCache(), p, cfg, 3, gates))
        return ops.sum(ops.mul(dist.log_probs, probe))

    assert fd_check_store(build, store, max_coords=6) < 1e-4


def test_no_positional_parameters():
    cfg, store = policy()
    for name in store:
        assert "pos" not in name.lower()
    # Permuting rows within a single segment permutes the logits.
    emb = np.random.default_rng(0).normal(size=(6, cfg.hidden))
    perm = np.random.default_rng(1).permutation(6)
    a = forward_segmented(Tensor(emb), SegmentCache(), store, cfg, 3).data
    b = forward_segmented(Tensor(emb[perm]), SegmentCache(), store, cfg, 3).data
    assert np.allclose(b, a[perm], atol=1e-12)


def test_condition_examples():
    x = Tensor(np.random.default_rng(0).normal(size=(3, 4)))
    ones = {"head": Tensor(np.ones(4))}
    assert np.array_equal(condition(ones, x, "head").data, x.data)
    zero = condition({"head": Tensor(np.zeros(4))}, x, "head")
    assert np.array_equal(ops.linear(zero, Tensor(np.ones((4, 2)))).data, np.zeros((3, 2)))
    with pytest.raises(DimensionError):
        condition({"head": Tensor(np.ones(5))}, x, "head")


def test_gates_start_at_one_and_distinguish_graphs():
    cfg, store = policy()
    emb_a = Tensor(np.random.default_rng(0).normal(size=(7, cfg.hidden)))
    emb_b = Tensor(np.random.default_rng(1).normal(size=(9, cfg.hidden)))
    ga = gate_vectors(conditioner(emb_a, store, cfg), store, cfg)
    for name, size in gate_sizes(cfg).items():
        assert np.array_equal(ga[name].data, np.ones(size))
    randomize_gates(store, 7)
    ga = gate_vectors(conditioner(emb_a, store, cfg), store, cfg)
    gb = gate_vectors(conditioner(emb_b, store, cfg), store, cfg)
    for name in gate_sizes(cfg):
        assert not np.allclose(ga[name].data, gb[name].data)


def test_ones_gates_equal_unconditioned_network():
    cfg, store = policy()
    emb = Tensor(np.random.default_rng(0).normal(size=(11, cfg.hidden)))
    ones = {k: Tensor(np.ones(s)) for k, s in gate_sizes(cfg).items()}
    a = forward_segmented(emb, SegmentCache(), store, cfg, 3, ones).data
    b = forward_segmented(emb, SegmentCache(), store, cfg, 3, None).data
    assert np.array_equal(a, b)


def test_no_attention_variant_is_per_node():
    cfg, store = policy(attention=False)
    assert not any("/attn/" in k for k in store if k.startswith("policy/layer"))
    emb = np.random.default_rng(0).normal(size=(20, cfg.hidden))
    a = forward_segmented(Tensor(emb), SegmentCache(), store, cfg, 2).data
    emb2 = emb.copy()
    emb2[5] += 1.0
    b = forward_segmented(Tensor(emb2), SegmentCache(), store, cfg, 2).data
    assert np.array_equal(np.delete(a, 5, axis=0), np.delete(b, 5, axis=0))


def test_forward_errors():
    cfg, store = policy()
    with pytest.raises(ContractError):
        forward_segmented(Tensor(np.zeros((0, cfg.hidden))), SegmentCache(), store, cfg, 2)
    with pytest.raises(ContractError):
        forward_segmented(Tensor(np.zeros((3, cfg.hidden))), SegmentCache(), store, cfg, 9)


def test_rows_are_distributions():
    cfg, store = policy()
    emb = Tensor(np.random.default_rng(0).normal(size=(20, cfg.hidden)))
    dist = make_distribution(forward_segmented(emb, SegmentCache(), store, cfg, 5))
    assert np.all(np.abs(dist.probs().sum(axis=1) - 1.0) < 1e-12)


def dist_from_probs(p):
    return make_distribution(Tensor(np.log(np.asarray(p, dtype=float))))


def test_sample_and_greedy_examples():
    one_hot = make_distribution(Tensor(np.array([[0.0, -1e9], [-1e9, 0.0], [-1e9, 0.0]])))
    a, lp = sample(one_hot, 3)
    assert a.tolist() == greedy(one_hot).tolist() == [0, 1, 1]
    assert lp == 0.0
    single = make_distribution(Tensor(np.zeros((4, 1))))
    a, lp = sample(single, 0)
    assert a.tolist() == [0, 0, 0, 0] and lp == 0.0
    ties = make_distribution(Tensor(np.zeros((2, 3))))
    assert greedy(ties).tolist() == [0, 0]


def test_sample_frequencies():
    dist = dist_from_probs([[0.7, 0.3]])
    rng = np.random.default_rng(123)
    draws = np.array([sample(dist, rng)[0][0] for _ in range(10_000)])
    assert abs(np.mean(draws == 0) - 0.7) < 0.02
    assert abs(np.mean(draws == 1) - 0.3) < 0.02


def test_sample_deterministic_and_colocation():
    dist = dist_from_probs(np.full((5, 3), 1 / 3))
    leaders = np.array([0, 1, 0, 3, 1])
    decision = np.array([0, 1, 3])
    a1, l1 = sample(dist, 9, decision, leaders)
    a2, l2 = sample(dist, 9, decision, leaders)
    assert a1.tolist() == a2.tolist() and l1 == l2
    assert a1[2] == a1[0] and a1[4] == a1[1]
    assert l1 == pytest.approx(3 * np.log(1 / 3))
    assert greedy(dist, leaders).tolist() == [0] * 5


def test_log_prob_and_entropy():
    dist = dist_from_probs([[0.7, 0.3], [0.4, 0.6], [0.5, 0.5]])
    decision = np.array([0, 1])
    lp = placement_log_prob(dist, np.array([[0, 1, 0], [1, 0, 1]]), decision).data
    assert lp == pytest.approx([np.log(0.7 * 0.6), np.log(0.3 * 0.4)])
    h = mean_entropy(dist, decision).item()
    ent = lambda p: -sum(x * np.log(x) for x in p)
    assert h == pytest.approx((ent([0.7, 0.3]) + ent([0.4, 0.6])) / 2)
    assert isinstance(dist, PlacementDistribution)
